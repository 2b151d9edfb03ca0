"""Order-invariant per-dimension summaries of a template.

Six statistics (max, min, mean, var, mode, median) are computed per
dimension over the member embeddings, then concatenated with the attention
output and the distribution token into one summary vector whose block order
is fixed:

    attn, token, max, min, mean, var, mode, median

The order is part of the checkpoint contract and must not change between
releases. Mean and variance reduce in sorted order, so the statistics are
bit-for-bit invariant to member permutations, not merely close.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import DimensionError, ParameterError

SUMMARY_BLOCKS = ("attn", "token", "max", "min", "mean", "var", "mode", "median")
STAT_BLOCKS = ("max", "min", "mean", "var", "mode", "median")
MODE_BINS = 16


@dataclass
class TemplateStats:
    """Per-dimension statistics of one template; each field is d-dim."""

    max: object
    min: object
    mean: object
    var: object
    mode: object
    median: object


def mode_estimate(values: np.ndarray, bins: int = MODE_BINS) -> np.ndarray:
    """Per-dimension mode estimate of an (n, d) value matrix.

    A dimension with any exactly repeated value takes its most frequent
    value (smallest value on count ties). Otherwise the dimension's range
    [min, max] is split into ``bins`` equal-width bins and the center of
    the densest bin is returned, ties going to the lowest bin. A single
    row, or a dimension whose min equals its max, is its own mode.

    Operates on plain values only: the estimate is piecewise constant and
    deliberately contributes no gradient.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError(f"mode_estimate expects (n, d), got {values.shape}")
    n, d = values.shape
    if n == 0:
        raise ParameterError("mode of an empty template")
    if n == 1:
        return values[0].copy()

    srt = np.sort(values, axis=0)
    lo, hi = srt[0], srt[-1]
    span = hi - lo
    flat = span == 0.0

    # histogram route, vectorized across dimensions; flat spans use a
    # placeholder width and are overwritten below. values >= lo, so the
    # cast truncation is the floor.
    width = np.where(flat, 1.0, span)
    idx = ((values - lo) / width * bins).astype(np.intp)
    np.clip(idx, 0, bins - 1, out=idx)
    counts = np.bincount(
        (idx + np.arange(d) * bins).ravel(), minlength=d * bins
    ).reshape(d, bins)
    best = np.argmax(counts, axis=1)
    out = lo + (best + 0.5) * width / bins

    out[flat] = lo[flat]

    # exact repeats dominate the histogram estimate
    has_repeat = (srt[1:] == srt[:-1]).any(axis=0)
    for j in np.nonzero(has_repeat)[0]:
        uniq, freq = np.unique(srt[:, j], return_counts=True)
        out[j] = uniq[np.argmax(freq)]
    return out


def compute_stats(x, blocks=None) -> TemplateStats:
    """Statistics of an (n, d) member matrix, n >= 1.

    Accepts a node or a plain array. Variance is the population variance
    (divide by n), defined even at n = 1. Mean and variance reduce in
    sorted order for exact permutation invariance. The mode is computed
    from values only and enters the graph as a constant.

    ``blocks``, if given, limits the work to the statistics it names;
    the other fields of the result are None. The mean is still computed
    whenever the variance needs it.
    """
    xv = nm.value_of(x)
    if xv.ndim != 2:
        raise DimensionError(f"compute_stats expects (n, d), got {xv.shape}")
    n = xv.shape[0]
    if n == 0:
        raise ParameterError("statistics of an empty template")

    wanted = frozenset(STAT_BLOCKS if blocks is None else blocks)
    mean = None
    var = None
    if wanted & {"mean", "var"}:
        mean = nm.div(nm.sorted_sum(x, axis=0), float(n))
        if "var" in wanted:
            centered = nm.sub(x, nm.reshape(mean, (1, xv.shape[1])))
            var = nm.div(nm.sorted_sum(nm.mul(centered, centered), axis=0), float(n))
        if "mean" not in wanted:
            mean = None
    return TemplateStats(
        max=nm.reduce_max(x, axis=0) if "max" in wanted else None,
        min=nm.reduce_min(x, axis=0) if "min" in wanted else None,
        mean=mean,
        var=var,
        mode=mode_estimate(xv) if "mode" in wanted else None,
        median=nm.median(x, axis=0) if "median" in wanted else None,
    )


def validate_blocks(blocks) -> tuple:
    """Check a block selection: known names, canonical order, non-empty."""
    blocks = tuple(blocks)
    if not blocks:
        raise ParameterError("at least one summary block must be enabled")
    unknown = [b for b in blocks if b not in SUMMARY_BLOCKS]
    if unknown:
        raise ParameterError(
            f"unknown summary block(s) {unknown}; valid: {list(SUMMARY_BLOCKS)}"
        )
    if len(set(blocks)) != len(blocks):
        raise ParameterError(f"duplicate summary blocks in {blocks}")
    canonical = tuple(b for b in SUMMARY_BLOCKS if b in set(blocks))
    if blocks != canonical:
        raise ParameterError(
            f"summary blocks must keep canonical order {canonical}, got {blocks}"
        )
    return blocks


def assemble_summary(stats: TemplateStats, attended=None, token=None,
                     blocks=SUMMARY_BLOCKS):
    """Concatenate the enabled d-dim blocks, in canonical order, into one
    vector of length len(blocks)*d."""
    blocks = validate_blocks(blocks)
    parts = []
    for name in blocks:
        if name == "attn":
            if attended is None:
                raise ParameterError("block 'attn' enabled but no attention output given")
            parts.append(attended)
        elif name == "token":
            if token is None:
                raise ParameterError("block 'token' enabled but no token given")
            parts.append(token)
        else:
            part = getattr(stats, name)
            if part is None:
                raise ParameterError(
                    f"block {name!r} enabled but its statistic was not computed"
                )
            parts.append(part)
    widths = {nm.value_of(p).shape for p in parts}
    if len(widths) != 1 or len(next(iter(widths))) != 1:
        raise DimensionError(
            f"summary blocks must all be 1-d of equal length, got shapes {widths}"
        )
    return nm.concat(parts, axis=0)
