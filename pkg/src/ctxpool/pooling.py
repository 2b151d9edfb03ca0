"""Context-scored pooling: template in, weights and one vector out.

The pipeline: (probe transform if probe) -> per-dimension statistics ->
token attention -> summary vector -> context MLP -> per-member cosine
scores against the context -> temperature softmax -> weighted sum of the
(transformed) members. The pooled vector is not L2-normalized here;
matching normalizes at comparison time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .attention import attend_token
from .context import affine_rows, context_vector
from .errors import DegenerateInputError, DimensionError, ParameterError
from .model import ModelConfig, ModelParams
from .summary import assemble_summary, compute_stats
from .templates import Distribution, Template

WEIGHT_SUM_TOLERANCE = 1e-6


def similarities(context, x):
    """Cosine score of every member row of ``x`` against ``context``.

    Scores are per member, not averaged over the template: the weighting
    step consumes one score per member. No 1/n factor is applied; a common
    positive factor over all scores would only rescale the softmax
    temperature, so nothing is lost by leaving it out.
    """
    cv = nm.value_of(context)
    xv = nm.value_of(x)
    if cv.ndim != 1 or xv.ndim != 2 or xv.shape[1] != cv.shape[0]:
        raise DimensionError(
            f"similarities expects context (d,) and members (n, d), got "
            f"{cv.shape} and {xv.shape}"
        )
    if not cv.dot(cv):
        raise DegenerateInputError("zero-norm context vector")
    d = cv.shape[0]
    member_dirs = nm.normalize(x, axis=-1)  # raises on zero-norm members
    context_dir = nm.reshape(nm.normalize(context), (d, 1))
    return nm.reshape(nm.matmul(member_dirs, context_dir), (xv.shape[0],))


def softmax_weights(sims, temperature):
    """Temperature softmax over one score vector (max-stabilized)."""
    sv = nm.value_of(sims)
    if sv.ndim != 1 or sv.shape[0] < 1:
        raise DimensionError(f"scores must be a non-empty vector, got {sv.shape}")
    return nm.softmax(sims, axis=-1, temperature=temperature)


def aggregate(x, weights):
    """Weighted sum of member rows under already-normalized weights."""
    xv = nm.value_of(x)
    wv = nm.value_of(weights)
    if wv.ndim != 1 or xv.ndim != 2 or wv.shape[0] != xv.shape[0]:
        raise DimensionError(
            f"weights {wv.shape} do not match members {xv.shape}"
        )
    total = float(wv.sum())
    if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise ParameterError(
            f"weights must sum to 1 within {WEIGHT_SUM_TOLERANCE}, got {total!r}"
        )
    return nm.reshape(
        nm.matmul(nm.reshape(weights, (1, wv.shape[0])), x), (xv.shape[1],)
    )


@dataclass
class ForwardPass:
    """Everything the pipeline produced for one template; nodes when the
    inputs were nodes, plain arrays otherwise."""

    pooled: object
    weights: object
    similarities: object
    context: object
    attention: object  # (heads, n+1, n+1) or None
    members: object  # post-transform member matrix actually pooled
    summary: object  # the concatenated conditioning vector


def aggregate_forward(x, distribution, tensors, config: ModelConfig,
                      temperature=None, stats=None) -> ForwardPass:
    """The full pipeline on a member matrix; polymorphic over nodes.

    ``tensors`` maps parameter names to arrays or nodes. The same MLP
    entries serve both distributions; only the token (and the probe-side
    transform) depend on the tag.

    ``stats`` may carry precomputed statistics of ``x`` when the caller
    evaluates the same members repeatedly. Refused when the probe
    transform rewrites the members, since the statistics would then
    depend on the transform parameters.
    """
    distribution = Distribution(distribution)
    temp = config.softmax_temperature if temperature is None else temperature
    if distribution is Distribution.PROBE and config.use_probe_transform:
        if stats is not None:
            raise ParameterError(
                "precomputed statistics conflict with the probe transform"
            )
        x = affine_rows(x, tensors["probe_transform.w"], tensors["probe_transform.b"])

    if stats is None:
        stats = compute_stats(x, config.blocks)
    attended = None
    attn = None
    token = None
    if config.uses_tokens:
        token = tensors[f"token.{distribution.value}"]
    if config.uses_attention:
        attended, attn = attend_token(
            x,
            token,
            tensors["attn.wq"],
            tensors["attn.wk"],
            tensors["attn.wv"],
            tensors["attn.wo"],
        )
    summary_vec = assemble_summary(
        stats, attended=attended, token=token, blocks=config.blocks
    )
    ctx = context_vector(
        summary_vec,
        tensors["mlp.w1"],
        tensors["mlp.b1"],
        tensors["mlp.w2"],
        tensors["mlp.b2"],
        tensors["mlp.w3"],
        tensors["mlp.b3"],
    )
    sims = similarities(ctx, x)
    weights = softmax_weights(sims, temp)
    pooled = aggregate(x, weights)
    return ForwardPass(
        pooled=pooled,
        weights=weights,
        similarities=sims,
        context=ctx,
        attention=attn,
        members=x,
        summary=summary_vec,
    )


@dataclass(frozen=True)
class AggregationResult:
    """One template reduced to one vector, with the evidence kept."""

    template_id: str
    subject_id: str
    distribution: Distribution
    pooled: np.ndarray
    weights: np.ndarray
    similarities: np.ndarray
    temperature: float
    media_ids: tuple

    def __post_init__(self):
        if not np.all(np.isfinite(self.pooled)):
            raise ParameterError("pooled vector must be finite")


def aggregate_template(t: Template, params: ModelParams,
                       temperature=None) -> AggregationResult:
    """Run the pipeline on a template with plain-value parameters."""
    if params.config.d != t.matrix().shape[1]:
        raise DimensionError(
            f"template {t.template_id!r} has width {t.matrix().shape[1]}, "
            f"model expects {params.config.d}"
        )
    temp = params.config.softmax_temperature if temperature is None else temperature
    fwd = aggregate_forward(
        t.matrix(), t.distribution, params.tensors, params.config, temp
    )
    return AggregationResult(
        template_id=t.template_id,
        subject_id=t.subject_id,
        distribution=t.distribution,
        pooled=np.asarray(fwd.pooled),
        weights=np.asarray(fwd.weights),
        # clip: pure float roundoff may poke a hair past +/-1
        similarities=np.clip(np.asarray(fwd.similarities), -1.0, 1.0),
        temperature=float(temp),
        media_ids=tuple(e.media_id for e in t.embeddings),
    )
