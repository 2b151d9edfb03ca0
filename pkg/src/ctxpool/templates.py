"""Core data model: embeddings, templates, datasets.

A template is an unordered set of d-dim embeddings for one subject captured
under one distribution (probe or gallery). Constructors only enforce local
sanity that would otherwise poison later math (finite values, 1-d vectors);
dataset-level semantic rules are checked by :func:`validate`, which reports
every violation instead of stopping at the first, so ingestion can reject a
bad dataset with a complete account of what is wrong.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionError, ParameterError
from .numerics import as_tensor

SPLITS = ("train", "val", "test")


class Distribution(str, Enum):
    """Which acquisition context a template comes from."""

    PROBE = "probe"
    GALLERY = "gallery"


@dataclass
class Embedding:
    """One media item's feature vector.

    ``quality_hint`` is ground-truth informativeness used by evaluation
    only. Nothing on the model path reads it; a test enforces that the
    aggregation output is identical under any hint values.
    """

    vector: np.ndarray
    media_id: str
    quality_hint: float | None = None

    def __post_init__(self):
        self.vector = as_tensor(self.vector)
        if self.vector.ndim != 1:
            raise DimensionError(
                f"embedding vector must be 1-d, got shape {self.vector.shape}"
            )

    @property
    def d(self) -> int:
        return self.vector.shape[0]


@dataclass
class Template:
    """An unordered set of embeddings for one subject and one distribution.

    Treat as immutable once built: the stacked matrix is cached on first
    use. Emptiness and dimension consistency are reported by
    :func:`validate` rather than rejected here, so a broken dataset can be
    described in full.
    """

    template_id: str
    subject_id: str
    distribution: Distribution
    embeddings: list[Embedding]
    split: str = "train"
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.distribution = Distribution(self.distribution)
        if self.split not in SPLITS:
            raise ParameterError(
                f"split must be one of {SPLITS}, got {self.split!r}"
            )
        self.embeddings = list(self.embeddings)

    def __len__(self) -> int:
        return len(self.embeddings)

    @property
    def size(self) -> int:
        return len(self.embeddings)

    def matrix(self) -> np.ndarray:
        """The members stacked as an (n, d) float64 array."""
        if not self.embeddings:
            raise ParameterError(f"template {self.template_id!r} is empty")
        if self._matrix is None:
            self._matrix = np.stack([e.vector for e in self.embeddings])
        return self._matrix

    def quality_hints(self) -> list[float | None]:
        return [e.quality_hint for e in self.embeddings]


@dataclass
class Dataset:
    """All templates of one corpus plus the embedding dimension they share."""

    d: int
    templates: list[Template]

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError(f"embedding dimension must be >= 1, got {self.d}")
        self.templates = list(self.templates)

    def by_id(self, template_id: str) -> Template:
        for t in self.templates:
            if t.template_id == template_id:
                return t
        raise ParameterError(f"no template with id {template_id!r}")

    def subjects(self, split: str | None = None) -> list[str]:
        seen = {
            t.subject_id
            for t in self.templates
            if split is None or t.split == split
        }
        return sorted(seen)

    def templates_for(
        self,
        split: str | None = None,
        distribution: Distribution | str | None = None,
        subject_id: str | None = None,
    ) -> list[Template]:
        if distribution is not None:
            distribution = Distribution(distribution)
        out = []
        for t in self.templates:
            if split is not None and t.split != split:
                continue
            if distribution is not None and t.distribution != distribution:
                continue
            if subject_id is not None and t.subject_id != subject_id:
                continue
            out.append(t)
        return out


@dataclass(frozen=True)
class ValidationReport:
    """Everything wrong with a dataset, plus headline counts."""

    violations: tuple
    n_templates: int
    n_embeddings: int
    n_subjects: int

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        head = (
            f"{self.n_templates} templates, {self.n_embeddings} embeddings, "
            f"{self.n_subjects} subjects"
        )
        if self.ok:
            return f"valid: {head}"
        lines = [f"INVALID: {head}, {len(self.violations)} violation(s)"]
        lines.extend(f"  - {v}" for v in self.violations)
        return "\n".join(lines)


def validate(dataset: Dataset) -> ValidationReport:
    """Check every dataset-level invariant and report all violations.

    Checked: unique template ids, no empty templates, uniform embedding
    dimension, no zero-norm vectors, quality hints inside [0, 1], and that
    every subject with a probe template in val or test also has a gallery
    template in that split (so mated comparisons exist).
    """
    violations: list[str] = []
    seen_ids: set[str] = set()
    n_embeddings = 0

    for t in dataset.templates:
        if t.template_id in seen_ids:
            violations.append(f"duplicate template id {t.template_id!r}")
        seen_ids.add(t.template_id)
        if not t.embeddings:
            violations.append(f"template {t.template_id!r} is empty")
        for e in t.embeddings:
            n_embeddings += 1
            if e.d != dataset.d:
                violations.append(
                    f"template {t.template_id!r} embedding {e.media_id!r} has "
                    f"dimension {e.d}, dataset declares {dataset.d}"
                )
            if not np.any(e.vector):
                violations.append(
                    f"template {t.template_id!r} embedding {e.media_id!r} is "
                    f"a zero vector"
                )
            if e.quality_hint is not None and not 0.0 <= e.quality_hint <= 1.0:
                violations.append(
                    f"template {t.template_id!r} embedding {e.media_id!r} has "
                    f"quality hint {e.quality_hint} outside [0, 1]"
                )

    for split in ("val", "test"):
        probe_subjects = {
            t.subject_id
            for t in dataset.templates
            if t.split == split and t.distribution is Distribution.PROBE
        }
        gallery_subjects = {
            t.subject_id
            for t in dataset.templates
            if t.split == split and t.distribution is Distribution.GALLERY
        }
        for subject in sorted(probe_subjects - gallery_subjects):
            violations.append(
                f"subject {subject!r} has probe templates in split "
                f"{split!r} but no gallery template there"
            )

    return ValidationReport(
        violations=tuple(violations),
        n_templates=len(dataset.templates),
        n_embeddings=n_embeddings,
        n_subjects=len(dataset.subjects()),
    )


def subsample_template(t: Template, k: int, seed: int) -> Template:
    """A new template holding ``k`` members drawn without replacement.

    Deterministic for a given seed. Identity fields carry over unchanged;
    the draw keeps the surviving members in their original relative order.
    """
    n = len(t.embeddings)
    if not 1 <= k <= n:
        raise ParameterError(
            f"cannot draw {k} members from template {t.template_id!r} of size {n}"
        )
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(n, size=k, replace=False))
    return Template(
        template_id=t.template_id,
        subject_id=t.subject_id,
        distribution=t.distribution,
        embeddings=[t.embeddings[int(i)] for i in keep],
        split=t.split,
    )
