"""Loss, Adam, dataset splitting/balancing, and the training loop."""

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import features as feat
from .dataset import Manifest, read_wav
from .errors import DivergenceError, InvalidConfigError, ShapeError, SplitError
from .nn import init_params, model_backward, model_forward
from .preprocess import AugmentSpec, augment, preprocess
from .store import save_model

LOSS_FLOOR = 1e-12

# randomized augmentation draw ranges used when oversampling under-represented
# classes; the transform kinds come from the preprocessing stage
AUG_SNR_RANGE_DB = (15.0, 30.0)
AUG_MAX_SHIFT_FRACTION = 0.10
AUG_SPEED_RANGE = (0.9, 1.1)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 8
    max_epochs: int = 150
    early_stop_patience: int = 300
    seed: int = 0
    val_fraction: float = 0.175
    test_fraction: float = 0.075

    def __post_init__(self):
        if not (self.val_fraction > 0 and self.test_fraction > 0
                and self.val_fraction + self.test_fraction < 1):
            raise InvalidConfigError(
                "split fractions must be positive and sum below 1, got "
                f"val={self.val_fraction}, test={self.test_fraction}"
            )
        if self.batch_size < 2:
            raise InvalidConfigError(
                "batch_size must be >= 2 (batchnorm train-mode requirement)"
            )
        if self.max_epochs < 1:
            raise InvalidConfigError("max_epochs must be >= 1")
        if self.early_stop_patience < 0:
            raise InvalidConfigError("early_stop_patience must be >= 0")


def cross_entropy(probs, targets):
    """Mean categorical cross-entropy over the batch, log floored at 1e-12."""
    probs = np.asarray(probs)
    targets = np.asarray(targets)
    if probs.shape != targets.shape or probs.ndim != 2:
        raise ShapeError(
            f"probs {probs.shape} and one-hot targets {targets.shape} must be "
            "equal-shape 2-D arrays"
        )
    per_sample = -(targets * np.log(np.maximum(probs, LOSS_FLOOR))).sum(axis=1)
    return float(per_sample.mean())


def cross_entropy_grad_logits(probs, targets):
    """Fused softmax + cross-entropy gradient w.r.t. logits: (p - t) / B."""
    probs = np.asarray(probs)
    targets = np.asarray(targets)
    if probs.shape != targets.shape:
        raise ShapeError(f"shape mismatch: {probs.shape} vs {targets.shape}")
    return (probs - targets) / probs.shape[0]


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def for_params(cls, params):
        names = params.trainable_names()
        return cls(
            m={n: np.zeros_like(params[n]) for n in names},
            v={n: np.zeros_like(params[n]) for n in names},
        )


def adam_step(params, grads, state, cfg):
    """One Adam update, in place on params and state.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  bias-corrected;
    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), elementwise.
    """
    state.t += 1
    bc1 = 1.0 - cfg.beta1 ** state.t
    bc2 = 1.0 - cfg.beta2 ** state.t
    for name in state.m:
        g = grads[name]
        if g.shape != params[name].shape:
            raise ShapeError(
                f"{name}: gradient shape {g.shape} != parameter shape "
                f"{params[name].shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        params.tensors[name] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return params, state


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def stratified_split(manifest, cfg, seed):
    """Assign train/val/test per class: round(0.075 n) test, round(0.175 n) val,
    remainder train; assignment by seeded shuffle, deterministic per seed."""
    rng = np.random.default_rng(seed)
    by_class = {}
    for i, entry in enumerate(manifest.entries):
        by_class.setdefault(entry.label, []).append(i)
    new_entries = list(manifest.entries)
    for label in feat.CLASSES:  # canonical order keeps the shuffle deterministic
        if label not in by_class:
            continue
        idx = by_class[label]
        if len(idx) < 3:
            raise SplitError(
                f"class {label} has only {len(idx)} samples; need at least 3 to split"
            )
        n = len(idx)
        n_test = _round_half_up(cfg.test_fraction * n)
        n_val = _round_half_up(cfg.val_fraction * n)
        order = rng.permutation(n)
        for rank, pos in enumerate(order):
            if rank < n_test:
                split = "test"
            elif rank < n_test + n_val:
                split = "val"
            else:
                split = "train"
            new_entries[idx[pos]] = replace(new_entries[idx[pos]], split=split)
    return Manifest(new_entries)


def random_augment_spec(rng, clip_len):
    """Draw one augmentation with conventional magnitudes (see ranges above)."""
    kind = ("noise", "time_shift", "speed")[int(rng.integers(0, 3))]
    return AugmentSpec(
        kind=kind,
        snr_db=float(rng.uniform(*AUG_SNR_RANGE_DB)),
        shift_samples=int(rng.integers(1, int(AUG_MAX_SHIFT_FRACTION * clip_len) + 1))
        * (1 if rng.integers(0, 2) else -1),
        speed_factor=float(rng.uniform(*AUG_SPEED_RANGE)),
        seed=int(rng.integers(0, 2**32)),
    )


def balance_classes(manifest, rng, clip_len=2500):
    """Oversample each train class with augmented copies up to the largest
    train-class count. Val/test entries pass through untouched."""
    train_by_class = {}
    for entry in manifest.entries:
        if entry.split == "train":
            train_by_class.setdefault(entry.label, []).append(entry)
    if not train_by_class:
        raise SplitError("manifest has no train entries to balance")
    for label, entries in train_by_class.items():
        if not entries:
            raise SplitError(f"class {label} has no train entries")
    target = max(len(v) for v in train_by_class.values())
    new_entries = list(manifest.entries)
    for label in feat.CLASSES:
        entries = train_by_class.get(label)
        if not entries:
            continue
        deficit = target - len(entries)
        for i in range(deficit):
            source = entries[i % len(entries)]
            spec = random_augment_spec(rng, clip_len)
            new_entries.append(replace(source, augmentation=spec))
    return Manifest(new_entries)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainingRun:
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = 0.0
    seed: int = 0
    train_config: TrainConfig | None = None
    model_config: object = None
    checkpoint_path: str = ""
    stopped_early: bool = False


def save_training_run(run, path):
    """Human-readable structured text: key/value header plus per-epoch rows."""
    lines = [
        f"seed: {run.seed}",
        f"learning_rate: {run.train_config.learning_rate}",
        f"batch_size: {run.train_config.batch_size}",
        f"max_epochs: {run.train_config.max_epochs}",
        f"early_stop_patience: {run.train_config.early_stop_patience}",
        f"checkpoint: {run.checkpoint_path}",
        f"stopped_early: {str(run.stopped_early).lower()}",
        f"best_epoch: {run.best_epoch}",
        f"best_val_accuracy: {run.best_val_accuracy:.6f}",
        "epoch train_loss train_acc val_loss val_acc",
    ]
    for row in run.history:
        lines.append(
            f"{row.epoch} {row.train_loss:.6f} {row.train_acc:.6f} "
            f"{row.val_loss:.6f} {row.val_acc:.6f}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_features(entry, root=None):
    """Waveform -> preprocessed clip -> optional augmentation -> feature vector."""
    path = entry.path
    if root is not None:
        path = path if os.path.isabs(path) else os.path.join(root, path)
    clip = read_wav(path)
    clip = preprocess(clip)
    if entry.augmentation is not None:
        clip = augment(clip, entry.augmentation)
    return feat.mfcc(clip)


def _features_for_split(manifest, split, root=None):
    xs, ys = [], []
    for entry in manifest.entries:
        if entry.split != split:
            continue
        xs.append(load_features(entry, root))
        ys.append(feat.label_index(entry.label))
    if not xs:
        return np.zeros((0, feat.N_COEFFS)), np.zeros((0,), dtype=int)
    return np.stack(xs), np.asarray(ys, dtype=int)


def evaluate(params, x, y_idx, batch_size=256):
    """Inference-mode loss/accuracy/predictions over a feature matrix."""
    n_classes = params.cfg.n_classes
    preds = np.empty(len(x), dtype=int)
    total_loss = 0.0
    for start in range(0, len(x), batch_size):
        stop = min(start + batch_size, len(x))
        probs = model_forward(x[start:stop], params, mode="inference")
        preds[start:stop] = probs.argmax(axis=1)
        targets = np.eye(n_classes)[y_idx[start:stop]]
        total_loss += cross_entropy(probs, targets) * (stop - start)
    loss = total_loss / max(len(x), 1)
    acc = float((preds == y_idx).mean()) if len(x) else 0.0
    return loss, acc, preds


def train(manifest, train_cfg, model_cfg, checkpoint_path, root=None, log_fn=None):
    """Mini-batch training with per-epoch validation, checkpointing on
    validation-accuracy improvement, and patience-based early stopping.

    Returns (TrainingRun, best ParameterSet). Deterministic given
    (seed, manifest, configs) in single-threaded use.
    """
    splits = {e.split for e in manifest.entries}
    if "unassigned" in splits:
        raise SplitError("manifest has unassigned entries; run stratified_split first")
    for required in ("train", "val"):
        if required not in splits:
            raise SplitError(f"manifest has no {required} entries")

    rng = np.random.default_rng(train_cfg.seed)
    balanced = balance_classes(manifest, rng)
    x_train, y_train = _features_for_split(balanced, "train", root)
    x_val, y_val = _features_for_split(balanced, "val", root)

    params = init_params(model_cfg, train_cfg.seed)
    state = AdamState.for_params(params)
    eye = np.eye(model_cfg.n_classes)

    run = TrainingRun(seed=train_cfg.seed, train_config=train_cfg,
                      model_config=model_cfg, checkpoint_path=str(checkpoint_path))
    best_params = None
    best_acc = -1.0
    epochs_since_improve = 0

    for epoch in range(1, train_cfg.max_epochs + 1):
        order = rng.permutation(len(x_train))
        epoch_loss = 0.0
        epoch_correct = 0
        epoch_seen = 0
        for batch_no, start in enumerate(range(0, len(order), train_cfg.batch_size)):
            idx = order[start:start + train_cfg.batch_size]
            if len(idx) < 2:
                continue  # batchnorm cannot normalize a single-sample batch
            xb = x_train[idx]
            tb = eye[y_train[idx]]
            probs, trace = model_forward(xb, params, mode="train")
            loss = cross_entropy(probs, tb)
            if not math.isfinite(loss):
                raise DivergenceError(epoch, batch_no, loss)
            grads = model_backward(trace, d_logits=cross_entropy_grad_logits(probs, tb))
            adam_step(params, grads, state, train_cfg)
            epoch_loss += loss * len(idx)
            epoch_correct += int((probs.argmax(axis=1) == y_train[idx]).sum())
            epoch_seen += len(idx)

        val_loss, val_acc, _ = evaluate(params, x_val, y_val)
        stats = EpochStats(
            epoch=epoch,
            train_loss=epoch_loss / max(epoch_seen, 1),
            train_acc=epoch_correct / max(epoch_seen, 1),
            val_loss=val_loss,
            val_acc=val_acc,
        )
        run.history.append(stats)
        if log_fn is not None:
            log_fn(stats)

        if val_acc > best_acc:
            best_acc = val_acc
            run.best_epoch = epoch
            run.best_val_accuracy = val_acc
            best_params = params.copy()
            epochs_since_improve = 0
            save_model(
                best_params, checkpoint_path,
                metadata={
                    "model_version": f"seed{train_cfg.seed}-epoch{epoch}",
                    "val_accuracy": f"{val_acc:.6f}",
                },
            )
        else:
            epochs_since_improve += 1
            if epochs_since_improve > train_cfg.early_stop_patience:
                run.stopped_early = True
                break

    return run, best_params
