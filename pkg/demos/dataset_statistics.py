"""Sample and label a small 8x4 dataset, then look at its statistics.

Run: python demos/dataset_statistics.py [count]
"""
import sys
import tempfile
from pathlib import Path

from checkerboard import dataset as ds

count = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
data = ds.generate(count, grid=(8, 4), seed=0)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.cbds"
    ds.write_dataset(path, data)
    print(f"{count} samples, {path.stat().st_size} bytes on disk")
    assert (ds.read_dataset(path).labels == data.labels).all()

for name, s in ds.summary_stats(data).items():
    print(f"{name:>9s}: mean {s.mean:.4f} cv {s.coefficient_of_variation:.3f} "
          f"skew {s.skew:+.3f} excess kurtosis {s.excess_kurtosis:+.3f}")

trace = ds.batch_means(data, 500)
print("batch means of 500 samples:")
for name, s in ds.summary_stats(trace.means).items():
    print(f"{name:>9s}: skew {s.skew:+.3f} excess kurtosis {s.excess_kurtosis:+.3f}")
print("running-mean spread over the last quarter:", trace.stabilization().round(5))
