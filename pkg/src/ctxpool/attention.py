"""Multi-head scaled dot-product attention over a template with one
prepended learnable distribution token.

The token row is the query of interest: full self-attention over all n+1
rows is computed, but only row 0 of the projected output (the token's
representation) is consumed downstream. One attention layer, no residual
path, no layer normalization, no feed-forward block. With no positional
encoding, the token's output is invariant to permutations of the member
rows.
"""

from __future__ import annotations

import math

import numpy as np

from . import numerics as nm
from .errors import DimensionError, ParameterError


def init_attention_params(rng: np.random.Generator, d: int, heads: int = 4) -> dict:
    """Seeded projections stacked per head: wq/wk/wv of shape
    (heads, d, d/heads), output projection (d, d), entries at scale 1/sqrt(d)."""
    if d < 1 or heads < 1:
        raise ParameterError(f"need positive d and heads, got d={d}, heads={heads}")
    if d % heads:
        raise ParameterError(f"d={d} not divisible by heads={heads}")
    scale = 1.0 / math.sqrt(d)
    dh = d // heads
    return {
        "wq": rng.normal(0.0, scale, size=(heads, d, dh)),
        "wk": rng.normal(0.0, scale, size=(heads, d, dh)),
        "wv": rng.normal(0.0, scale, size=(heads, d, dh)),
        "wo": rng.normal(0.0, scale, size=(d, d)),
    }


def attend_token(x, token, wq, wk, wv, wo):
    """Attention over the token-plus-members matrix.

    ``x`` is (n, d) with n >= 1, ``token`` is (d,); both may be nodes.
    Returns ``(c, attn)`` where ``c`` is the d-dim output row of the token
    and ``attn`` holds the per-head row-stochastic weights, shape
    (heads, n+1, n+1).
    """
    xv = nm.value_of(x)
    tv = nm.value_of(token)
    heads, d, dh = np.shape(nm.value_of(wq))
    if xv.ndim != 2 or xv.shape[0] < 1:
        raise DimensionError(f"members must be (n, d) with n >= 1, got {xv.shape}")
    if tv.shape != (d,) or xv.shape[1] != d:
        raise DimensionError(
            f"token {tv.shape} and members {xv.shape} must both have width {d}"
        )

    rows = nm.concat([nm.reshape(token, (1, d)), x], axis=0)  # (n+1, d)
    q = nm.matmul(rows, wq)  # (heads, n+1, dh) via broadcast
    k = nm.matmul(rows, wk)
    v = nm.matmul(rows, wv)
    scores = nm.matmul(q, nm.transpose(k))  # (heads, n+1, n+1)
    attn = nm.softmax(scores, axis=-1, temperature=math.sqrt(dh))
    per_head = nm.matmul(attn, v)  # (heads, n+1, dh)
    merged = nm.reshape(nm.transpose(per_head, (1, 0, 2)), (xv.shape[0] + 1, d))
    out = nm.matmul(merged, wo)
    c = nm.reshape(nm.narrow(out, 0, 0, 1), (d,))
    return c, attn


def attention_oracle(x, token, wq, wk, wv, wo):
    """Loop-based reference for the token's attended output.

    Same contract as :func:`attend_token` but written with explicit
    per-pair dot products and Python loops; returns only the token row.
    Values only, no gradient support.
    """
    x = np.asarray(x, dtype=float)
    token = np.asarray(token, dtype=float)
    wq, wk, wv, wo = (np.asarray(w, dtype=float) for w in (wq, wk, wv, wo))
    heads, d, dh = wq.shape
    rows = [token] + [x[i] for i in range(x.shape[0])]
    n1 = len(rows)

    def project(vec, w):
        return [sum(vec[a] * w[a, t] for a in range(d)) for t in range(dh)]

    merged = [0.0] * d
    for h in range(heads):
        q0 = project(rows[0], wq[h])
        keys = [project(r, wk[h]) for r in rows]
        vals = [project(r, wv[h]) for r in rows]
        scores = [
            sum(q0[t] * keys[j][t] for t in range(dh)) / math.sqrt(dh)
            for j in range(n1)
        ]
        peak = max(scores)
        exps = [math.exp(s - peak) for s in scores]
        total = sum(exps)
        weights = [e / total for e in exps]
        for t in range(dh):
            merged[h * dh + t] = sum(weights[j] * vals[j][t] for j in range(n1))

    return np.array(
        [sum(merged[a] * wo[a, j] for a in range(d)) for j in range(d)]
    )
