"""Contrastive training: batch sampling over probe/gallery pairs, the
tape-backed forward pass, Adam with per-group learning rates, validation
early stopping, and resumable checkpoints.

Reference mode is single-threaded 64-bit: a fixed seed reproduces the
loss curve bit for bit, and the metrics log is byte-stable across runs.
Epoch wall time therefore goes to the logging stream, never the log file.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import numerics as nm
from .errors import DatasetError, NonFiniteError, ParameterError, TrainingError
from .evaluation import model_aggregator, rank1
from .loss import ANCHOR_ROLES, CrossBatchMemory, supcon, supcon_plan
from .model import MAIN_GROUP, PROBE_GROUP, ModelConfig, ModelParams
from .pooling import aggregate_forward
from .storage import read_checkpoint, write_checkpoint
from .summary import compute_stats
from .templates import Dataset, Distribution, Template, subsample_template

log = logging.getLogger(__name__)

BEST_CHECKPOINT = "best.ckpt"
LAST_CHECKPOINT = "last.ckpt"
METRICS_LOG = "metrics.log"
DIAGNOSTICS_DUMP = "diagnostics.json"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; defaults follow the convention of 1e-2 on the main
    group and 1e-4 on the probe transform, with standard Adam moments."""

    subjects_per_batch: int = 8
    templates_per_subject: int = 1
    k_min: int = 2
    k_max: int = 16
    softmax_temperature: float = 0.1
    loss_tau: float = 0.1
    lr_main: float = 1e-2
    lr_probe_transform: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    memory_capacity: int = 64
    max_epochs: int = 60
    patience: int = 5
    anchor_roles: str = "both"
    seed: int = 0

    def __post_init__(self):
        if self.subjects_per_batch < 2:
            raise ParameterError("contrastive batches need at least 2 subjects")
        if self.templates_per_subject < 1:
            raise ParameterError("templates_per_subject must be >= 1")
        if not 1 <= self.k_min <= self.k_max:
            raise ParameterError(
                f"need 1 <= k_min <= k_max, got [{self.k_min}, {self.k_max}]"
            )
        for name in ("softmax_temperature", "loss_tau", "eps"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        for name in ("lr_main", "lr_probe_transform"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        for name in ("beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise ParameterError(f"{name} must lie in [0, 1)")
        if self.memory_capacity < 0:
            raise ParameterError("memory_capacity must be >= 0")
        if self.max_epochs < 1:
            raise ParameterError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ParameterError("patience must be >= 1")
        if self.anchor_roles not in ANCHOR_ROLES:
            raise ParameterError(
                f"anchor_roles must be one of {ANCHOR_ROLES}, got {self.anchor_roles!r}"
            )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterError(f"unknown training config keys: {unknown}")
        return cls(**data)


class Adam:
    """Adam with one learning rate per parameter group.

    Moments mirror parameter shapes; the bias-corrected update is
    theta -= lr * m_hat / (sqrt(v_hat) + eps).
    """

    def __init__(self, params: ModelParams, config: TrainConfig):
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.eps
        self.learning_rates = {
            MAIN_GROUP: config.lr_main,
            PROBE_GROUP: config.lr_probe_transform,
        }
        self.step_count = 0
        self.m = {name: np.zeros_like(t) for name, t in params.tensors.items()}
        self.v = {name: np.zeros_like(t) for name, t in params.tensors.items()}

    def step(self, tensors: dict, grads: dict) -> None:
        self.step_count += 1
        t = self.step_count
        for name, g in grads.items():
            if g is None:
                continue
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1**t)
            v_hat = self.v[name] / (1 - self.beta2**t)
            lr = self.learning_rates[ModelParams.group_of(name)]
            tensors[name] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_tensors(self) -> dict:
        out = {}
        for name, m in self.m.items():
            out[f"adam.m.{name}"] = m
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state(self, state: dict, step_count: int) -> None:
        for name in self.m:
            self.m[name] = np.asarray(state[f"adam.m.{name}"], dtype=np.float64)
            self.v[name] = np.asarray(state[f"adam.v.{name}"], dtype=np.float64)
        self.step_count = int(step_count)


def eligible_subjects(dataset: Dataset, split: str = "train") -> list[str]:
    """Subjects holding at least one template on each side of the split.

    Subjects missing a side are excluded once with a logged warning; they
    can never be sampled.
    """
    eligible, excluded = [], []
    for s in dataset.subjects(split):
        has_probe = bool(dataset.templates_for(split, Distribution.PROBE, s))
        has_gallery = bool(dataset.templates_for(split, Distribution.GALLERY, s))
        (eligible if has_probe and has_gallery else excluded).append(s)
    if excluded:
        log.warning(
            "excluded %d %s subject(s) lacking probe or gallery templates: %s",
            len(excluded), split, ", ".join(excluded),
        )
    return eligible


def sample_batch(
    dataset: Dataset,
    config: TrainConfig,
    rng: np.random.Generator,
    split: str = "train",
    eligible: list[str] | None = None,
) -> list[Template]:
    """One contrastive batch: per chosen subject, a probe and a gallery
    template, each subsampled to a size drawn from [k_min, k_max] (capped
    by the template's own size). Every aggregate is guaranteed a positive
    because its subject always contributes both sides."""
    if eligible is None:
        eligible = eligible_subjects(dataset, split)
    if len(eligible) < 2:
        raise DatasetError(
            f"{split} split has {len(eligible)} subject(s) with both "
            "template kinds; contrastive training needs at least 2"
        )
    n = min(config.subjects_per_batch, len(eligible))
    chosen = rng.choice(len(eligible), size=n, replace=False)
    batch: list[Template] = []
    for i in chosen:
        subject = eligible[int(i)]
        for _ in range(config.templates_per_subject):
            for dist in (Distribution.PROBE, Distribution.GALLERY):
                pool = dataset.templates_for(split, dist, subject)
                t = pool[int(rng.integers(len(pool)))]
                k = min(len(t), int(rng.integers(config.k_min, config.k_max + 1)))
                batch.append(subsample_template(t, k, seed=int(rng.integers(2**63))))
    return batch


def batch_objective(
    batch: list[Template],
    model_config,
    loss_tau: float,
    temperature: float | None = None,
    anchor_roles: str = "both",
    memory: CrossBatchMemory | None = None,
):
    """Loss of a fixed batch as a function of the parameter tensors.

    The returned callable accepts plain arrays or nodes, so one definition
    serves plain evaluation, reverse-mode differentiation, and the finite
    difference verifier.
    """
    subjects = [t.subject_id for t in batch]
    dists = [t.distribution for t in batch]
    matrices = [t.matrix() for t in batch]
    # statistics of untransformed members never depend on the parameters,
    # so hoist them out of the per-evaluation work
    transformed = [
        d is Distribution.PROBE and model_config.use_probe_transform for d in dists
    ]
    cached = [
        None if moved else compute_stats(m, model_config.blocks)
        for m, moved in zip(matrices, transformed)
    ]
    plan = supcon_plan(
        subjects, loss_tau,
        distributions=dists, memory=memory, anchor_roles=anchor_roles,
    )

    def objective(tensors):
        return plan([
            aggregate_forward(
                m, dist, tensors, model_config, temperature, stats=st
            ).pooled
            for m, dist, st in zip(matrices, dists, cached)
        ])

    return objective


def train_step(
    batch: list[Template],
    params: ModelParams,
    optimizer: Adam,
    memory: CrossBatchMemory,
    config: TrainConfig,
) -> float:
    """Forward-aggregate the batch, take one Adam step, push the batch
    aggregates into the cross-batch memory. Returns the batch loss."""
    leaves = {name: nm.Node(t) for name, t in params.tensors.items()}
    subjects = [t.subject_id for t in batch]
    dists = [t.distribution for t in batch]
    ids = [t.template_id for t in batch]
    zs = []
    try:
        for t in batch:
            fwd = aggregate_forward(
                t.matrix(), t.distribution, leaves, params.config,
                params.config.softmax_temperature,
            )
            zs.append(fwd.pooled)
        loss = supcon(
            zs, subjects, config.loss_tau,
            distributions=dists, memory=memory, anchor_roles=config.anchor_roles,
        )
        nm.backward(loss)
    except NonFiniteError as exc:
        raise TrainingError(
            f"non-finite value during training step: {exc}",
            diagnostics={
                "step": optimizer.step_count,
                "template_ids": ids,
                "subjects": subjects,
                "parameter_norms": {
                    name: float(np.linalg.norm(t)) for name, t in params.tensors.items()
                },
                "loss_tau": config.loss_tau,
            },
        ) from exc
    grads = {name: leaf.grad for name, leaf in leaves.items()}
    optimizer.step(params.tensors, grads)
    memory.push([nm.value_of(z) for z in zs], subjects)
    return float(nm.value_of(loss))


@dataclass
class FitResult:
    best_rank1: float
    best_epoch: int
    epochs_run: int
    stopped_early: bool
    history: list = field(default_factory=list)
    best_path: Path | None = None
    last_path: Path | None = None
    metrics_path: Path | None = None
    params: ModelParams | None = None


def _save_training_state(
    path: Path,
    params: ModelParams,
    optimizer: Adam,
    memory: CrossBatchMemory,
    rng: np.random.Generator,
    config: TrainConfig,
    counters: dict,
) -> None:
    state = optimizer.state_tensors()
    mem_z, mem_subjects = memory.contents()
    if mem_z is not None:
        state["memory.z"] = mem_z
    extra = {
        "kind": "training-state",
        "step_count": optimizer.step_count,
        "rng_state": rng.bit_generator.state,
        "memory_subjects": list(mem_subjects),
        "train_config": config.to_dict(),
        **counters,
    }
    write_checkpoint(path, params, state=state, extra=extra)


def _load_training_state(path: Path, config: TrainConfig):
    params, state, extra = read_checkpoint(path)
    if extra.get("kind") != "training-state":
        raise ParameterError(f"{path} is not a training-state checkpoint")
    stored = TrainConfig.from_dict(extra["train_config"])
    # schedule length may be extended on resume; everything that shapes the
    # optimization trajectory has to match exactly
    schedule_only = {"max_epochs", "patience"}
    stored_d = {k: v for k, v in stored.to_dict().items() if k not in schedule_only}
    config_d = {k: v for k, v in config.to_dict().items() if k not in schedule_only}
    if stored_d != config_d:
        changed = sorted(k for k in stored_d if stored_d[k] != config_d[k])
        raise ParameterError(
            f"resume requested with a different training config than the "
            f"checkpoint was written with (changed: {changed})"
        )
    optimizer = Adam(params, config)
    optimizer.load_state(state, extra["step_count"])
    memory = CrossBatchMemory(config.memory_capacity)
    memory.restore(state.get("memory.z"), extra["memory_subjects"])
    rng = np.random.default_rng(0)
    rng_state = extra["rng_state"]
    # JSON round-trip turns the inner state dict's ints into ints again;
    # the bit generator validates the structure itself.
    rng.bit_generator.state = rng_state
    counters = {
        "epoch": extra["epoch"],
        "best_rank1": extra["best_rank1"],
        "best_epoch": extra["best_epoch"],
        "epochs_since_improvement": extra["epochs_since_improvement"],
    }
    return params, optimizer, memory, rng, counters


def fit(
    dataset: Dataset,
    config: TrainConfig,
    out_dir: str | Path,
    model_config: ModelConfig | None = None,
    params: ModelParams | None = None,
    resume_from: str | Path | None = None,
) -> FitResult:
    """Train until validation rank-1 stops improving for `patience` epochs.

    Writes metrics.log (one deterministic line per epoch), best.ckpt
    (parameters at the best validation metric), and last.ckpt (full
    resumable state). Resuming continues the exact trajectory: the next
    batch and its loss match an uninterrupted run to machine precision.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / METRICS_LOG
    best_path = out_dir / BEST_CHECKPOINT
    last_path = out_dir / LAST_CHECKPOINT

    if resume_from is not None:
        params, optimizer, memory, rng, counters = _load_training_state(
            Path(resume_from), config
        )
        start_epoch = counters["epoch"]
        best_rank1 = counters["best_rank1"]
        best_epoch = counters["best_epoch"]
        since_improvement = counters["epochs_since_improvement"]
        mode = "a"
    else:
        if params is None:
            if model_config is None:
                model_config = ModelConfig(
                    d=dataset.d, softmax_temperature=config.softmax_temperature
                )
            params = ModelParams.initialize(model_config, seed=config.seed)
        optimizer = Adam(params, config)
        memory = CrossBatchMemory(config.memory_capacity)
        rng = np.random.default_rng(config.seed)
        start_epoch = 0
        best_rank1 = -math.inf
        best_epoch = 0
        since_improvement = 0
        mode = "w"

    eligible = eligible_subjects(dataset, "train")
    if len(eligible) < 2:
        raise DatasetError(
            f"train split has {len(eligible)} usable subject(s), need at least 2"
        )
    batches_per_epoch = math.ceil(len(eligible) / config.subjects_per_batch)
    history: list[dict] = []
    stopped_early = False
    epoch = start_epoch

    with open(metrics_path, mode) as metrics:
        for epoch in range(start_epoch + 1, config.max_epochs + 1):
            started = time.perf_counter()
            losses = []
            for index in range(batches_per_epoch):
                batch = sample_batch(dataset, config, rng, eligible=eligible)
                try:
                    losses.append(train_step(batch, params, optimizer, memory, config))
                except TrainingError as exc:
                    exc.diagnostics["epoch"] = epoch
                    exc.diagnostics["batch_index"] = index
                    dump = out_dir / DIAGNOSTICS_DUMP
                    dump.write_text(json.dumps(exc.diagnostics, indent=2, sort_keys=True))
                    log.error("training aborted; diagnostics written to %s", dump)
                    raise
            train_loss = float(np.mean(losses))
            val_rank1 = rank1(dataset, "val", model_aggregator(params))
            metrics.write(f"epoch={epoch} train_loss={train_loss!r} val_rank1={val_rank1!r}\n")
            metrics.flush()
            elapsed = time.perf_counter() - started
            log.info(
                "epoch %d: train_loss=%.6f val_rank1=%.4f (%.2fs)",
                epoch, train_loss, val_rank1, elapsed,
            )
            history.append(
                {"epoch": epoch, "train_loss": train_loss, "val_rank1": val_rank1}
            )

            if val_rank1 > best_rank1:
                best_rank1 = val_rank1
                best_epoch = epoch
                since_improvement = 0
                write_checkpoint(
                    best_path, params,
                    extra={"epoch": epoch, "val_rank1": val_rank1},
                )
            else:
                since_improvement += 1

            _save_training_state(
                last_path, params, optimizer, memory, rng, config,
                counters={
                    "epoch": epoch,
                    "best_rank1": best_rank1,
                    "best_epoch": best_epoch,
                    "epochs_since_improvement": since_improvement,
                },
            )
            if since_improvement >= config.patience:
                stopped_early = True
                log.info(
                    "early stop at epoch %d (no improvement for %d epochs)",
                    epoch, config.patience,
                )
                break

    return FitResult(
        best_rank1=best_rank1,
        best_epoch=best_epoch,
        epochs_run=epoch - start_epoch,
        stopped_early=stopped_early,
        history=history,
        best_path=best_path if best_path.exists() else None,
        last_path=last_path,
        metrics_path=metrics_path,
        params=params,
    )


def load_best(out_dir: str | Path) -> ModelParams:
    params, _, _ = read_checkpoint(Path(out_dir) / BEST_CHECKPOINT)
    return params
