"""Verification and identification metrics over aggregated templates,
the unweighted-mean baseline, and weight-quality diagnostics.

Everything here is deterministic given its inputs: thresholds are taken
from the empirical score sets with no interpolation, and ties in
identification are broken pessimistically against the probe.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError, DegenerateInputError, ParameterError
from .model import ABLATION_PRESETS, ModelParams
from .pooling import AggregationResult, aggregate_template
from .templates import Dataset, Distribution, Template

log = logging.getLogger(__name__)

FAR_TARGETS = (1e-1, 1e-2, 1e-3)
RANK_KS = (1, 5)


def gap_aggregate(t: Template) -> np.ndarray:
    """Unweighted mean of the template's embeddings."""
    return t.matrix().mean(axis=0)


def _unit_rows(x: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise DegenerateInputError(f"{what} contains a zero-norm vector")
    return x / norms


def cosine_scores(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine of L2-normalized rows: (P, d) x (G, d) -> (P, G)."""
    return np.clip(_unit_rows(a, "left side") @ _unit_rows(b, "right side").T, -1.0, 1.0)


@dataclass(frozen=True)
class MatchResult:
    """Probe-by-gallery-subject score matrix for closed-set matching.

    Gallery templates of one subject are collapsed to the subject's best
    (maximum) score per probe. Exactly one mated column per probe row.
    """

    scores: np.ndarray
    mated: np.ndarray
    probe_ids: tuple[str, ...]
    gallery_subjects: tuple[str, ...]

    def __post_init__(self):
        if self.scores.shape != self.mated.shape:
            raise ParameterError("scores and mated mask must share a shape")
        if not np.array_equal(self.mated.sum(axis=1), np.ones(self.scores.shape[0])):
            raise ParameterError("closed-set matching needs exactly one mated column per probe")
        if np.any(self.scores < -1.0 - 1e-12) or np.any(self.scores > 1.0 + 1e-12):
            raise ParameterError("cosine scores must lie in [-1, 1]")


def match_aggregates(
    probe_vectors: np.ndarray,
    probe_subjects,
    probe_ids,
    gallery_vectors: np.ndarray,
    gallery_subjects,
) -> MatchResult:
    """Score probes against per-subject gallery maxima."""
    probe_subjects = [str(s) for s in probe_subjects]
    gallery_subjects = [str(s) for s in gallery_subjects]
    subjects = sorted(set(gallery_subjects))
    missing = sorted(set(probe_subjects) - set(subjects))
    if missing:
        raise DatasetError(f"probe subjects without gallery entries: {missing}")
    raw = cosine_scores(probe_vectors, gallery_vectors)
    columns = []
    for s in subjects:
        idx = [j for j, g in enumerate(gallery_subjects) if g == s]
        columns.append(raw[:, idx].max(axis=1))
    scores = np.stack(columns, axis=1)
    mated = np.zeros_like(scores)
    for i, s in enumerate(probe_subjects):
        mated[i, subjects.index(s)] = 1.0
    return MatchResult(
        scores=scores,
        mated=mated,
        probe_ids=tuple(str(p) for p in probe_ids),
        gallery_subjects=tuple(subjects),
    )


def verification_metrics(scores, mated_mask, far_targets=FAR_TARGETS) -> dict:
    """TAR at each FAR target, or None where the target is unachievable.

    The threshold is the smallest observed non-mated score whose empirical
    FAR is at or below the target; with fewer non-mated scores than 1/FAR
    the target is reported as undefined rather than extrapolated. If mass
    ties push every candidate past the target, TAR is 0 (no threshold
    accepted).
    """
    scores = np.asarray(scores, dtype=np.float64)
    mated_mask = np.asarray(mated_mask, dtype=bool)
    mated = scores[mated_mask]
    non_mated = scores[~mated_mask]
    if mated.size == 0 or non_mated.size == 0:
        raise ParameterError("need at least one mated and one non-mated score")
    candidates = np.unique(non_mated)
    out: dict[float, float | None] = {}
    for far in far_targets:
        if not 0 < far <= 1:
            raise ParameterError(f"FAR target must be in (0, 1], got {far}")
        if non_mated.size * far < 1:
            out[far] = None
            continue
        threshold = None
        for s in candidates:
            if np.count_nonzero(non_mated >= s) / non_mated.size <= far:
                threshold = s
                break
        if threshold is None:
            out[far] = 0.0
        else:
            out[far] = float(np.count_nonzero(mated >= threshold) / mated.size)
    return out


def identification_metrics(scores, mated_mask, ks=RANK_KS) -> dict:
    """Closed-set rank-k accuracy with pessimistic tie handling.

    A probe counts for rank k only if fewer than k non-mated scores are
    greater than or equal to its mated score, so an all-ties row fails
    rank-1 by construction.
    """
    scores = np.asarray(scores, dtype=np.float64)
    mated_mask = np.asarray(mated_mask, dtype=bool)
    if scores.ndim != 2 or not np.array_equal(mated_mask.sum(axis=1), np.ones(len(scores))):
        raise ParameterError("closed-set structure required: one mated column per row")
    mated_scores = scores[mated_mask]
    beaten = np.sum((scores >= mated_scores[:, None]) & ~mated_mask, axis=1)
    return {k: float(np.mean(beaten < k)) for k in ks}


def spearman(x, y) -> float:
    """Tie-corrected Spearman rank correlation; 0 when either side has no
    rank variation."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ParameterError("spearman needs two equal-length 1-d arrays")
    if x.size < 2:
        raise ParameterError("spearman needs at least two observations")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    sx = rx - rx.mean()
    sy = ry - ry.mean()
    denom = np.sqrt((sx * sx).sum() * (sy * sy).sum())
    if denom == 0:
        return 0.0
    return float((sx * sy).sum() / denom)


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties given the mean of their positions."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def weight_quality(results, dataset: Dataset) -> float | None:
    """Mean Spearman correlation between pooling weights and ground-truth
    informativeness over probe templates holding both classes.

    Templates without hints, or with only one informativeness class, are
    excluded; None when nothing qualifies.
    """
    correlations = []
    for r in results:
        t = dataset.by_id(r.template_id)
        hints = t.quality_hints()
        if any(h is None for h in hints):
            continue
        labels = np.asarray(hints, dtype=np.float64)
        if np.unique(labels).size < 2:
            continue
        correlations.append(spearman(np.asarray(r.weights), labels))
    if not correlations:
        return None
    return float(np.mean(correlations))


def aggregate_split(dataset: Dataset, split: str, aggregator) -> dict:
    """Aggregate every probe and gallery template of a split.

    ``aggregator`` maps a Template to either an AggregationResult or a raw
    vector.
    """
    probes = dataset.templates_for(split=split, distribution=Distribution.PROBE)
    galleries = dataset.templates_for(split=split, distribution=Distribution.GALLERY)
    if not probes or not galleries:
        raise DatasetError(f"split {split!r} lacks probe or gallery templates")
    probe_results = [aggregator(t) for t in probes]
    gallery_results = [aggregator(t) for t in galleries]

    def vector(r):
        return r.pooled if isinstance(r, AggregationResult) else np.asarray(r)

    return {
        "probe_vectors": np.stack([vector(r) for r in probe_results]),
        "probe_subjects": [t.subject_id for t in probes],
        "probe_ids": [t.template_id for t in probes],
        "probe_results": probe_results,
        "gallery_vectors": np.stack([vector(r) for r in gallery_results]),
        "gallery_subjects": [t.subject_id for t in galleries],
    }


def split_match(dataset: Dataset, split: str, aggregator) -> tuple[MatchResult, dict]:
    info = aggregate_split(dataset, split, aggregator)
    match = match_aggregates(
        info["probe_vectors"],
        info["probe_subjects"],
        info["probe_ids"],
        info["gallery_vectors"],
        info["gallery_subjects"],
    )
    return match, info


def rank1(dataset: Dataset, split: str, aggregator) -> float:
    match, _ = split_match(dataset, split, aggregator)
    return identification_metrics(match.scores, match.mated, ks=(1,))[1]


def model_aggregator(params: ModelParams):
    return lambda t: aggregate_template(t, params)


@dataclass
class EvalReport:
    """One row per aggregator or ablation configuration."""

    rows: list[dict] = field(default_factory=list)

    def add_row(self, name: str, match: MatchResult, weight_corr=None) -> dict:
        tars = verification_metrics(match.scores, match.mated)
        ranks = identification_metrics(match.scores, match.mated)
        row = {
            "name": name,
            "tar": {f"{far:g}": tars[far] for far in FAR_TARGETS},
            "rank1": ranks[1],
            "rank5": ranks[5],
            "weight_quality": weight_corr,
        }
        self.rows.append(row)
        return row

    def render(self) -> str:
        headers = ["aggregator"] + [f"TAR@{far:g}" for far in FAR_TARGETS] + [
            "rank-1", "rank-5", "weight-corr",
        ]
        table = [headers]
        for row in self.rows:
            cells = [row["name"]]
            for far in FAR_TARGETS:
                value = row["tar"][f"{far:g}"]
                cells.append("undefined" if value is None else f"{value:.4f}")
            cells.append(f"{row['rank1']:.4f}")
            cells.append(f"{row['rank5']:.4f}")
            wq = row["weight_quality"]
            cells.append("-" if wq is None else f"{wq:.4f}")
            table.append(cells)
        widths = [max(len(r[i]) for r in table) for i in range(len(headers))]
        lines = [
            "  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip()
            for r in table
        ]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return "\n".join(json.dumps(row, sort_keys=True) for row in self.rows) + "\n"


def evaluate_model(params: ModelParams, dataset: Dataset, split: str,
                   name: str = "model", report: EvalReport | None = None) -> EvalReport:
    report = report if report is not None else EvalReport()
    match, info = split_match(dataset, split, model_aggregator(params))
    report.add_row(name, match, weight_quality(info["probe_results"], dataset))
    return report


def evaluate_gap(dataset: Dataset, split: str,
                 report: EvalReport | None = None) -> EvalReport:
    report = report if report is not None else EvalReport()
    match, _ = split_match(dataset, split, gap_aggregate)
    report.add_row("gap", match)
    return report


def ablation_suite(dataset: Dataset, split: str, checkpoints: dict) -> EvalReport:
    """One report row per ablation preset; missing checkpoints are skipped
    with a warning. ``checkpoints`` maps preset name to ModelParams."""
    report = EvalReport()
    for preset in ABLATION_PRESETS:
        params = checkpoints.get(preset)
        if params is None:
            log.warning("no checkpoint for configuration %r, skipped", preset)
            continue
        expected = ABLATION_PRESETS[preset]
        if tuple(params.config.blocks) != tuple(expected):
            raise ParameterError(
                f"checkpoint for {preset!r} was trained with blocks "
                f"{params.config.blocks}, preset expects {expected}"
            )
        evaluate_model(params, dataset, split, name=preset, report=report)
    return report


def weight_dump(results) -> str:
    """Per-member weight lines for inspection: template, media, weight,
    similarity."""
    lines = []
    for r in results:
        for media_id, weight, sim in zip(r.media_ids, r.weights, r.similarities):
            lines.append(
                json.dumps(
                    {
                        "template_id": r.template_id,
                        "media_id": media_id,
                        "weight": float(weight),
                        "similarity": float(sim),
                    },
                    sort_keys=True,
                )
            )
    return "\n".join(lines) + "\n"
