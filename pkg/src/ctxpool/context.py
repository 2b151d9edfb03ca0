"""The conditioning network: summary vector in, context vector out.

A three-layer fully connected pyramid (k*d -> 4d -> 2d -> d, rectifier
after the first two layers, none after the last) shared verbatim between
probe and gallery templates. Also home to the optional probe-side affine
map: an identity-initialized per-member transform that lets training undo
a systematic probe/gallery domain shift; at initialization it is an exact
no-op.
"""

from __future__ import annotations

import math

import numpy as np

from . import numerics as nm
from .errors import DimensionError, UsageError
from .templates import Distribution, Template


def init_mlp_params(rng: np.random.Generator, in_dim: int, d: int) -> dict:
    """Scaled-normal weights (1/sqrt(fan_in) per layer), zero biases."""
    widths = [in_dim, 4 * d, 2 * d, d]
    out = {}
    for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:]), start=1):
        out[f"w{layer}"] = rng.normal(
            0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out)
        )
        out[f"b{layer}"] = np.zeros(fan_out)
    return out


def context_vector(summary_vec, w1, b1, w2, b2, w3, b3):
    """MLP forward over one summary vector; returns the d-dim context."""
    sv = nm.value_of(summary_vec)
    in_dim = np.shape(nm.value_of(w1))[0]
    if sv.ndim != 1 or sv.shape[0] != in_dim:
        raise DimensionError(
            f"summary vector has shape {sv.shape}, network expects ({in_dim},)"
        )
    h = nm.reshape(summary_vec, (1, in_dim))
    h = nm.relu(nm.add(nm.matmul(h, w1), b1))
    h = nm.relu(nm.add(nm.matmul(h, w2), b2))
    h = nm.add(nm.matmul(h, w3), b3)
    return nm.reshape(h, (np.shape(nm.value_of(w3))[1],))


def init_probe_transform(d: int) -> dict:
    """Identity matrix and zero bias: a no-op until trained away from it."""
    return {"w": np.eye(d), "b": np.zeros(d)}


def affine_rows(x, w, b):
    """Row-wise affine map x @ w + b; polymorphic over nodes and arrays."""
    return nm.add(nm.matmul(x, w), b)


def transform_probe(t: Template, w, b) -> np.ndarray:
    """The probe-side affine map applied to a probe template's members.

    Guards the tag: running it on a gallery template is a usage error, not
    a silent transformation.
    """
    if t.distribution is not Distribution.PROBE:
        raise UsageError(
            f"probe transform applied to {t.distribution.value!r} template "
            f"{t.template_id!r}"
        )
    return np.asarray(affine_rows(t.matrix(), nm.value_of(w), nm.value_of(b)))
