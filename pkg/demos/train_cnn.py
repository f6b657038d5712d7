"""Train the CNN surrogate on a small 8x4 dataset and compare with the linear fit.

Run: python demos/train_cnn.py [count] [epochs]
"""
import sys

from checkerboard import dataset as ds, linear, seeding, training

count = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 10

data = ds.generate(count, grid=(8, 4), seed=0)
train, test = ds.split(data, 0.9, seeding.child_seed(0, "split"))
model = training.model_for(train, seed=seeding.child_seed(0, "init"))
config = training.TrainConfig(epochs=epochs)
result = training.train(model, train, test, config, seed=0)
for rec in result.history:
    print(f"epoch {rec.epoch:3d} train {rec.train_total:.5f} test {rec.test_total:.5f}")

lin = linear.fit_all(train)
for prop, report in training.evaluate(model, test).items():
    print(f"{prop:>9s}: CNN MAPE {report.mape:5.2f}%  linear {linear.holdout_mape(lin[prop], test):5.2f}%")
