"""Training protocol: optimizer, schedule, early stopping, metrics, runs.

A run trains with Adam under a step learning-rate decay, stops once the
validation loss has not improved for `patience` consecutive epochs, and
restores the best-epoch weights. Multi-run reports aggregate test metrics
as mean plus population standard deviation over per-run seeds.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DataError, NumericError
from .mine import dv_lower_bound, mi_loss
from .model import (
    ModelConfig,
    combined_loss,
    config_digest,
    cross_entropy,
    forward_utterance,
    init_model,
    save_checkpoint,
)

logger = logging.getLogger("mmfuse")

METRIC_NAMES = ("precision", "recall", "f1", "accuracy", "specificity")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    seed: int = 0
    runs: int = 5
    batch_size: int = 8
    lr0: float = 1e-4
    lambda_mi: float = 0.25
    patience: int = 8
    step_size: int = 4
    gamma: float = 0.1
    max_epochs: int = 100
    split_train_frac: float = 0.65
    pooling: str = "asp"
    fusion: str = "at"
    proj_dim: int = 256
    asp_hidden: int = 128
    fusion_hidden: int = 128
    mine_hidden: int = 128
    mfb_factor: int = 5
    mfh_blocks: int = 2
    asp_activation: str = "tanh"
    precision: str = "double"
    negative_sampling: str = "shift"

    def __post_init__(self):
        if not 0 < self.split_train_frac < 1:
            raise ConfigError(
                f"split_train_frac must be in (0, 1), got {self.split_train_frac}"
            )
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.lambda_mi < 0:
            raise ConfigError(f"lambda_mi must be >= 0, got {self.lambda_mi}")
        if self.batch_size < 1 or self.runs < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size, runs, and max_epochs must be >= 1")
        if self.step_size < 1:
            raise ConfigError(f"step_size must be >= 1, got {self.step_size}")
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if self.negative_sampling not in ("shift", "permute"):
            raise ConfigError(
                f"negative_sampling must be shift or permute, "
                f"got {self.negative_sampling!r}"
            )

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**values)

    def model_config(self, d_a, d_t):
        return ModelConfig(
            d_a=d_a, d_t=d_t, pooling=self.pooling, fusion=self.fusion,
            proj_dim=self.proj_dim, asp_hidden=self.asp_hidden,
            fusion_hidden=self.fusion_hidden, mine_hidden=self.mine_hidden,
            mfb_factor=self.mfb_factor, mfh_blocks=self.mfh_blocks,
            asp_activation=self.asp_activation, precision=self.precision,
        )


# ---------------------------------------------------------------------------
# splitting


def stratified_split(records, frac, seed):
    """Per-class split into (train, val); deterministic for a given seed."""
    if not 0 < frac < 1:
        raise ConfigError(f"split fraction must be in (0, 1), got {frac}")
    by_class = {0: [], 1: []}
    for rec in records:
        if rec.label in by_class:
            by_class[rec.label].append(rec)
    for label, members in by_class.items():
        if len(members) < 2:
            raise DataError(
                f"stratified split needs >= 2 records of class {label}, "
                f"got {len(members)}"
            )
    rng = np.random.default_rng(seed)
    train, val = [], []
    for label in (0, 1):
        members = sorted(by_class[label], key=lambda r: r.id)
        order = rng.permutation(len(members))
        n_train = int(np.floor(frac * len(members)))
        n_train = min(max(n_train, 1), len(members) - 1)
        for pos, idx in enumerate(order):
            (train if pos < n_train else val).append(members[idx])
    return train, val


# ---------------------------------------------------------------------------
# optimizer and schedule


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, named_params):
        self.step = 0
        self.moments = {
            name: (np.zeros_like(t.data), np.zeros_like(t.data))
            for name, t in named_params.items()
        }


def adam_step(named_params, state, lr,
              beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
    """One bias-corrected adaptive update; a missing grad means zero."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, tensor in named_params.items():
        grad = tensor.grad
        if grad is None:
            grad = np.zeros_like(tensor.data)
        elif not np.isfinite(grad).all():
            raise NumericError(f"non-finite gradient for parameter {name}")
        m, v = state.moments[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        tensor.data -= update.astype(tensor.data.dtype)


def step_lr(lr0, epoch, step_size, gamma):
    """Decayed learning rate: lr0 * gamma ** floor(epoch / step_size)."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    return lr0 * gamma ** (epoch // step_size)


# ---------------------------------------------------------------------------
# early stopping


class EarlyStopper:
    """Stops after `patience` consecutive epochs without strict improvement.

    Epochs are numbered from 1; a loss equal to the best so far counts as
    no improvement.
    """

    def __init__(self, patience):
        if patience < 1:
            raise ConfigError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.epoch = 0
        self.best_loss = float("inf")
        self.best_epoch = 0
        self.bad_epochs = 0

    def observe(self, loss):
        """Record one epoch's validation loss; returns True when stopping."""
        self.epoch += 1
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_epoch = self.epoch
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def simulate_early_stopping(losses, patience):
    """Replay a loss stream; returns (stop_epoch or None, best_epoch)."""
    stopper = EarlyStopper(patience)
    for loss in losses:
        if stopper.observe(loss):
            return stopper.epoch, stopper.best_epoch
    return None, stopper.best_epoch


# ---------------------------------------------------------------------------
# metrics


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def add(self, label, predicted):
        if label == 1:
            if predicted == 1:
                self.tp += 1
            else:
                self.fn += 1
        else:
            if predicted == 1:
                self.fp += 1
            else:
                self.tn += 1


def compute_metrics(cm):
    """Five headline metrics in percent; zero denominators yield 0 + warning."""
    if cm.total == 0:
        raise DataError("cannot compute metrics of an empty confusion matrix")
    warnings_list = []

    def ratio(name, num, den):
        if den == 0:
            warnings_list.append(name)
            return 0.0
        return 100.0 * num / den

    precision = ratio("precision", cm.tp, cm.tp + cm.fp)
    recall = ratio("recall", cm.tp, cm.tp + cm.fn)
    specificity = ratio("specificity", cm.tn, cm.tn + cm.fp)
    accuracy = 100.0 * (cm.tp + cm.tn) / cm.total
    if precision + recall == 0:
        warnings_list.append("f1")
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "accuracy": accuracy,
        "specificity": specificity,
        "warnings": warnings_list,
    }


# ---------------------------------------------------------------------------
# single training run


def _labeled(records):
    return [r for r in records if r.label in (0, 1)]


def _batch_objective(batch, params, mcfg, lam, mode, rng):
    logits_list, pa_list, pt_list, labels = [], [], [], []
    for rec in batch:
        logits, p_a, p_t = forward_utterance(rec, params, mcfg)
        logits_list.append(logits)
        pa_list.append(p_a)
        pt_list.append(p_t)
        labels.append(rec.label)
    cls = cross_entropy(logits_list, labels)
    mi = None
    if lam > 0:
        if len(batch) >= 2:
            est = dv_lower_bound(ad.stack_rows(pa_list), ad.stack_rows(pt_list),
                                 params.mine_net, mode=mode, rng=rng)
            mi = mi_loss(est)
        else:
            logger.warning("batch of size 1: skipping the MI term")
    return combined_loss(cls, mi, lam)


def evaluation_loss(records, params, mcfg, lam, mode):
    """Combined objective over a whole record set, without gradients."""
    with ad.no_grad():
        loss = _batch_objective(_labeled(records), params, mcfg, lam, mode, None)
        return loss.total.item()


def confusion_on(records, params, mcfg):
    """Predictions vs labels; unlabeled records are skipped."""
    cm = ConfusionMatrix()
    with ad.no_grad():
        for rec in _labeled(records):
            logits, _, _ = forward_utterance(rec, params, mcfg)
            cm.add(rec.label, int(np.argmax(logits.data)))
    return cm


@dataclass
class RunResult:
    seed: int
    epochs: int
    best_val_loss: float
    val_metrics: Dict[str, float]
    test_metrics: Optional[Dict[str, float]]
    params: object = field(repr=False, default=None)


def train_single_run(train_records, val_records, test_records, config, seed):
    """One seeded run: train, early-stop, restore best, evaluate."""
    train_records = _labeled(train_records)
    val_records = _labeled(val_records)
    if not train_records or not val_records:
        raise DataError("training and validation sets must be nonempty")
    d_a = train_records[0].d_a
    d_t = train_records[0].d_t
    mcfg = config.model_config(d_a, d_t)
    rng = np.random.default_rng(seed)
    params = init_model(mcfg, rng)
    named = params.named_tensors()
    state = AdamState(named)
    stopper = EarlyStopper(config.patience)
    mode = config.negative_sampling
    best_weights = {name: t.data.copy() for name, t in named.items()}

    for epoch in range(config.max_epochs):
        lr = step_lr(config.lr0, epoch, config.step_size, config.gamma)
        order = rng.permutation(len(train_records))
        for start in range(0, len(order), config.batch_size):
            batch = [train_records[i] for i in order[start:start + config.batch_size]]
            for tensor in named.values():
                tensor.zero_grad()
            loss = _batch_objective(batch, params, mcfg, config.lambda_mi,
                                    mode, rng)
            loss.total.backward()
            adam_step(named, state, lr)
        val_loss = evaluation_loss(val_records, params, mcfg,
                                   config.lambda_mi, mode)
        improved = val_loss < stopper.best_loss
        should_stop = stopper.observe(val_loss)
        if improved:
            best_weights = {name: t.data.copy() for name, t in named.items()}
        if should_stop:
            break

    for name, tensor in named.items():
        tensor.data[...] = best_weights[name]

    val_metrics = compute_metrics(confusion_on(val_records, params, mcfg))
    test_metrics = None
    labeled_test = _labeled(test_records)
    if labeled_test:
        test_metrics = compute_metrics(confusion_on(labeled_test, params, mcfg))
    return RunResult(
        seed=seed,
        epochs=stopper.epoch,
        best_val_loss=stopper.best_loss,
        val_metrics=val_metrics,
        test_metrics=test_metrics,
        params=params,
    )


# ---------------------------------------------------------------------------
# multi-run protocol


def _round_metrics(metrics):
    return {name: round(metrics[name], 2) for name in METRIC_NAMES}


def effective_config_digest(config, d_a, d_t):
    import hashlib

    doc = dict(asdict(config), d_a=d_a, d_t=d_t)
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def multi_run(train_records, test_records, config, out_dir=None):
    """Train `config.runs` seeded runs and aggregate their metrics.

    Run r uses seed config.seed + r for the split, the init, and the batch
    order. Metrics aggregate over the test split when it is labeled, else
    over validation; a failed run is recorded and marks the report partial.
    """
    train_records = _labeled(train_records)
    if not train_records:
        raise DataError("no labeled training records")
    d_a = train_records[0].d_a
    d_t = train_records[0].d_t
    split_name = "test" if _labeled(test_records) else "val"
    if split_name == "val":
        logger.warning("no labeled test records: aggregating validation metrics")

    per_run = []
    collected = []
    partial = False
    for r in range(config.runs):
        run_seed = config.seed + r
        try:
            tr, val = stratified_split(train_records, config.split_train_frac,
                                       run_seed)
            result = train_single_run(tr, val, test_records, config, run_seed)
        except Exception as exc:  # failed runs are reported, not fatal
            logger.error("run %d (seed %d) failed: %s", r, run_seed, exc)
            per_run.append({
                "seed": run_seed,
                "error": str(exc),
                "error_code": getattr(exc, "exit_code", 1),
            })
            partial = True
            continue
        reported = (result.test_metrics if split_name == "test"
                    else result.val_metrics)
        entry = {
            "seed": result.seed,
            "epochs": result.epochs,
            "best_val_loss": result.best_val_loss,
            "metrics": _round_metrics(reported),
            "val_metrics": _round_metrics(result.val_metrics),
        }
        per_run.append(entry)
        collected.append(reported)
        if out_dir is not None:
            save_checkpoint(
                str(out_dir / f"run{r}.mmck"),
                result.params,
                config.model_config(d_a, d_t),
                extra={"run_seed": run_seed, "epochs": result.epochs,
                       "best_val_loss": result.best_val_loss},
            )

    aggregate = {}
    if collected:
        for name in METRIC_NAMES:
            values = np.array([m[name] for m in collected], dtype=np.float64)
            aggregate[name] = {
                "mean": round(float(values.mean()), 2),
                "std": round(float(values.std()), 2),  # population std
            }
    report = {
        "config": asdict(config),
        "config_digest": effective_config_digest(config, d_a, d_t),
        "metrics_split": split_name,
        "per_run": per_run,
        "aggregate": aggregate,
        "partial": partial,
    }
    return report


def render_report(report):
    """Canonical JSON text; identical configs and seeds give identical bytes."""
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
