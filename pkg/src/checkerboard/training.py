"""Mini-batch training, evaluation and checkpoints for :class:`~.nn.CnnModel`."""
from __future__ import annotations

import csv
import logging
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .dataset import LabeledDataset
from .metrics import PROPERTY_NAMES, eval_report
from .nn import AdamState, CnnConfig, CnnModel, adam_step

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"CBNN"
CHECKPOINT_VERSION = 1


class TrainingDivergedError(FloatingPointError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mse: tuple
    test_mse: tuple
    seconds: float

    @property
    def train_total(self) -> float:
        return float(np.mean(self.train_mse))

    @property
    def test_total(self) -> float:
        return float(np.mean(self.test_mse)) if self.test_mse else float("nan")


@dataclass
class TrainResult:
    model: CnnModel
    history: list = field(default_factory=list)


def canonical_order(dataset: LabeledDataset) -> np.ndarray:
    """Sort key over genome bits then labels, so training ignores row order."""
    keys = [dataset.labels[:, k] for k in range(2, -1, -1)]
    keys += [dataset.bits[:, j] for j in range(dataset.bits.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def model_for(dataset: LabeledDataset, seed: int, dtype=np.float32, label_transform: str = "log",
              **config) -> CnnModel:
    cfg = CnnConfig(height=dataset.height, width=dataset.width, **config)
    return CnnModel(cfg, seed=seeding.child_seed(seed, "init"), dtype=dtype,
                    label_transform=label_transform)


def normalized_mse(model: CnnModel, dataset: LabeledDataset, batch_size: int = 1024) -> np.ndarray:
    if len(dataset) == 0:
        return np.zeros(0)
    z = np.concatenate([model.forward_normalized(dataset.images()[i:i + batch_size])
                        for i in range(0, len(dataset), batch_size)])
    return np.mean((z - model.normalize(dataset.labels)) ** 2, axis=0)


def train(model: CnnModel, train_set: LabeledDataset, test_set: LabeledDataset | None,
          config: TrainConfig, seed: int, callback=None) -> TrainResult:
    """Fit ``model`` with Adam on standardized-label MSE.

    Label statistics come from ``train_set``. The per-epoch train loss is the
    sample-weighted average of the mini-batch losses seen during that epoch.
    """
    if (train_set.height, train_set.width) != (model.config.height, model.config.width):
        raise ValueError("dataset grid does not match the model")
    if len(train_set) < 2:
        raise ValueError("need at least two training samples")
    train_set = train_set.subset(canonical_order(train_set))
    model.fit_normalization(train_set.labels)
    images = train_set.images().astype(model.dtype)[..., None]
    shuffle_rng = seeding.rng(seed, "shuffle")
    dropout_rng = seeding.rng(seed, "dropout")
    state = AdamState(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    result = TrainResult(model)
    params = model.params()
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(train_set))
        total = np.zeros(3)
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start:start + config.batch_size]
            loss, per_property, grads = model.loss_and_grads(
                images[idx], train_set.labels[idx], dropout_rng)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss became {loss} at epoch {epoch}, batch {b}; lower the learning rate")
            adam_step(params, grads, state)
            total += per_property * len(idx)
        test_mse = () if test_set is None or len(test_set) == 0 else tuple(
            float(v) for v in normalized_mse(model, test_set))
        record = EpochRecord(epoch, tuple(float(v) for v in total / len(order)), test_mse,
                             time.perf_counter() - t0)
        result.history.append(record)
        log.info("epoch %d train %.5f test %.5f (%.1fs)", epoch, record.train_total,
                 record.test_total, record.seconds)
        if callback is not None:
            callback(record)
    return result


def evaluate(model: CnnModel, dataset: LabeledDataset):
    """MAPE, max error and share of samples over 5 % per property, in physical units."""
    return eval_report(dataset.labels, model.predict(dataset.images()))


def write_history_csv(path, history: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch"] + [f"train_{n}" for n in PROPERTY_NAMES] + ["train_total"]
                        + [f"test_{n}" for n in PROPERTY_NAMES] + ["test_total"])
        for r in history:
            test = list(r.test_mse) or [float("nan")] * 3
            writer.writerow([r.epoch] + [repr(v) for v in r.train_mse] + [repr(r.train_total)]
                            + [repr(v) for v in test] + [repr(r.test_total)])


_ARCH = struct.Struct("<HHBBdddBB")


def save_checkpoint(path, model: CnnModel) -> None:
    """Architecture header, then every array as little-endian float64."""
    cfg = model.config
    parts = [CHECKPOINT_MAGIC, bytes([CHECKPOINT_VERSION]),
             _ARCH.pack(cfg.height, cfg.width, cfg.kernel, cfg.outputs, cfg.dropout, cfg.bn_eps,
                        cfg.bn_momentum, CnnModel.LABEL_TRANSFORMS.index(model.label_transform),
                        len(cfg.channels)),
             struct.pack(f"<{len(cfg.channels)}H", *cfg.channels)]
    for _, array in model.state_arrays():
        parts.append(np.asarray(array, dtype="<f8").tobytes())
    parts.append(np.asarray(model.label_mean, dtype="<f8").tobytes())
    parts.append(np.asarray(model.label_std, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path, dtype=np.float64) -> CnnModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a CNN checkpoint")
    if len(raw) < 5 + _ARCH.size or raw[4] != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported or truncated checkpoint")
    height, width, kernel, outputs, dropout, eps, momentum, transform, n_ch = _ARCH.unpack_from(raw, 5)
    if transform >= len(CnnModel.LABEL_TRANSFORMS):
        raise CheckpointError(f"{path}: unknown label transform {transform}")
    offset = 5 + _ARCH.size
    channels = struct.unpack_from(f"<{n_ch}H", raw, offset)
    offset += 2 * n_ch
    cfg = CnnConfig(height, width, tuple(channels), kernel, dropout, outputs, eps, momentum)
    model = CnnModel(cfg, seed=0, dtype=dtype, label_transform=CnnModel.LABEL_TRANSFORMS[transform])
    sizes = [a.size for _, a in model.state_arrays()] + [outputs, outputs]
    if len(raw) != offset + 8 * sum(sizes):
        raise CheckpointError(f"{path}: payload size does not match the architecture")
    values = np.frombuffer(raw, dtype="<f8", offset=offset)
    pos = 0
    for _, array in model.state_arrays():
        array[...] = values[pos:pos + array.size].reshape(array.shape)
        pos += array.size
    model.label_mean = values[pos:pos + outputs].copy()
    model.label_std = values[pos + outputs:pos + 2 * outputs].copy()
    return model
