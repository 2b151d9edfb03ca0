"""Synthetic embedding world with known ground truth.

Identities are unit-sphere prototypes. Gallery members are lightly
perturbed prototypes; probe members are heavily perturbed, pushed through
a fixed rotation standing in for a domain gap, and mixed with pure-noise
members whose informativeness label is 0. Labels live in quality_hint and
are read by evaluation code only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ParameterError
from .templates import Dataset, Embedding, Template

SPLIT_MIN_SUBJECTS = 2


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 50
    d: int = 64
    gallery_templates_per_subject: int = 2
    probe_templates_per_subject: int = 4
    gallery_size_range: tuple[int, int] = (4, 8)
    probe_size_range: tuple[int, int] = (4, 8)
    gallery_noise: float = 0.05
    probe_noise: float = 0.5
    uninformative_fraction: float = 0.4
    rotation_degrees: float = 30.0
    train_fraction: float = 0.5
    val_fraction: float = 0.125
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 2:
            raise ParameterError("need at least 2 subjects")
        if self.d < 1:
            raise ParameterError("embedding dimension must be >= 1")
        if self.gallery_noise < 0 or self.probe_noise < 0:
            raise ParameterError("noise scales must be non-negative")
        if not 0 <= self.uninformative_fraction <= 1:
            raise ParameterError("uninformative fraction must lie in [0, 1]")
        for name, rng_ in (("gallery", self.gallery_size_range),
                           ("probe", self.probe_size_range)):
            lo, hi = rng_
            if lo < 1 or hi < lo:
                raise ParameterError(f"bad {name} size range {rng_}")
        if self.gallery_templates_per_subject < 1 or self.probe_templates_per_subject < 1:
            raise ParameterError("each subject needs at least one template per side")
        if not 0 < self.train_fraction < 1 or not 0 <= self.val_fraction < 1:
            raise ParameterError("split fractions must be proper fractions")
        if self.train_fraction + self.val_fraction >= 1:
            raise ParameterError("train and val fractions must leave room for test")

    def to_dict(self) -> dict:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["gallery_size_range"] = list(self.gallery_size_range)
        data["probe_size_range"] = list(self.probe_size_range)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterError(f"unknown synthetic config keys: {unknown}")
        kwargs = dict(data)
        for key in ("gallery_size_range", "probe_size_range"):
            if key in kwargs:
                pair = kwargs[key]
                if (
                    not isinstance(pair, (list, tuple))
                    or len(pair) != 2
                    or not all(
                        isinstance(v, int) and not isinstance(v, bool) for v in pair
                    )
                ):
                    raise ParameterError(
                        f"{key} must be a [lo, hi] pair of integers, got {pair!r}"
                    )
                kwargs[key] = tuple(pair)
        return cls(**kwargs)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def rotation_matrix(d: int, degrees: float, rng: np.random.Generator) -> np.ndarray:
    """A random orthogonal matrix interpolated to the given angle.

    Built as Q B Q^T where B rotates each of the floor(d/2) coordinate
    planes by the angle; at 0 degrees it is exactly the identity.
    """
    if degrees == 0.0:
        return np.eye(d)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    theta = np.deg2rad(degrees)
    b = np.eye(d)
    c, s = np.cos(theta), np.sin(theta)
    for i in range(0, d - 1, 2):
        b[i, i] = c
        b[i, i + 1] = -s
        b[i + 1, i] = s
        b[i + 1, i + 1] = c
    return q @ b @ q.T


def _assign_splits(subjects: list[str], config: SynthConfig) -> dict[str, str]:
    n = len(subjects)
    n_train = max(SPLIT_MIN_SUBJECTS, round(n * config.train_fraction))
    n_val = max(SPLIT_MIN_SUBJECTS, round(n * config.val_fraction))
    if n_train + n_val + SPLIT_MIN_SUBJECTS > n:
        raise ParameterError(
            f"{n} subjects cannot cover train/val/test at fractions "
            f"{config.train_fraction}/{config.val_fraction}"
        )
    assignment = {}
    for i, s in enumerate(subjects):
        if i < n_train:
            assignment[s] = "train"
        elif i < n_train + n_val:
            assignment[s] = "val"
        else:
            assignment[s] = "test"
    return assignment


def generate(config: SynthConfig) -> Dataset:
    """Build the dataset; same config (and seed) gives identical bytes.

    Per-subject noise comes from seeds spawned off the master sequence, so
    generation could be parallelized by subject without changing output.
    """
    master = np.random.SeedSequence(config.seed)
    proto_rng = np.random.default_rng(master.spawn(1)[0])
    prototypes = np.stack(
        [_unit(proto_rng.standard_normal(config.d)) for _ in range(config.n_subjects)]
    )
    rotation = rotation_matrix(config.d, config.rotation_degrees, proto_rng)

    subjects = [f"s{i:04d}" for i in range(config.n_subjects)]
    split_of = _assign_splits(subjects, config)
    subject_seeds = master.spawn(config.n_subjects)

    templates: list[Template] = []
    for i, subject in enumerate(subjects):
        rng = np.random.default_rng(subject_seeds[i])
        proto = prototypes[i]
        split = split_of[subject]

        for g in range(config.gallery_templates_per_subject):
            lo, hi = config.gallery_size_range
            size = int(rng.integers(lo, hi + 1))
            members = []
            for m in range(size):
                noisy = proto + rng.normal(0.0, config.gallery_noise, size=config.d)
                members.append(
                    Embedding(
                        vector=_unit(noisy),
                        media_id=f"{subject}-g{g}-{m}",
                    )
                )
            templates.append(
                Template(
                    template_id=f"{subject}/gallery{g}",
                    subject_id=subject,
                    distribution="gallery",
                    embeddings=members,
                    split=split,
                )
            )

        for p in range(config.probe_templates_per_subject):
            lo, hi = config.probe_size_range
            size = int(rng.integers(lo, hi + 1))
            members = []
            for m in range(size):
                if rng.random() < config.uninformative_fraction:
                    vector = _unit(rng.standard_normal(config.d))
                    hint = 0.0
                else:
                    noisy = _unit(proto + rng.normal(0.0, config.probe_noise, size=config.d))
                    vector = rotation @ noisy
                    hint = 1.0
                members.append(
                    Embedding(
                        vector=vector,
                        media_id=f"{subject}-p{p}-{m}",
                        quality_hint=hint,
                    )
                )
            templates.append(
                Template(
                    template_id=f"{subject}/probe{p}",
                    subject_id=subject,
                    distribution="probe",
                    embeddings=members,
                    split=split,
                )
            )

    return Dataset(d=config.d, templates=templates)
