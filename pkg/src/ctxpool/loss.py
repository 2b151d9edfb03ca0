"""Supervised contrastive objective over aggregated template vectors,
with an optional cross-batch memory.

For anchor i with positives P(i) (same subject, self excluded) and pool
A(i) (everything except self), the per-anchor term is

    -(1/|P(i)|) * sum_{p in P(i)} log( exp(z_i.z_p / tau)
                                       / sum_{a in A(i)} exp(z_i.z_a / tau) )

averaged over anchors. All vectors are L2-normalized inside the loss: the
aggregates are unnormalized weighted sums, and the usual tau scale is
calibrated for cosine logits, so the dot products here are cosines by
construction.

Memory entries enlarge P and A but are plain detached arrays: they can
never receive or transmit gradient. Anchors with no positive are a batch
construction error, not a silent skip, because skipping would quietly bias
the loss.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from . import numerics as nm
from .errors import BatchError, ParameterError

ANCHOR_ROLES = ("both", "probe", "gallery")


class CrossBatchMemory:
    """FIFO ring of past aggregate directions and their subject labels.

    Entries are normalized and copied on the way in, so the buffer holds
    plain values with no link back to any computation graph. Capacity 0 is
    a valid, permanently empty memory.
    """

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ParameterError(f"memory capacity must be >= 0, got {capacity}")
        self.capacity = int(capacity)
        self._z: deque = deque(maxlen=self.capacity)
        self._subjects: deque = deque(maxlen=self.capacity)

    def __len__(self) -> int:
        return len(self._z)

    def push(self, zs, subjects) -> None:
        """Append detached unit-norm copies; oldest entries fall off."""
        zs = list(zs)
        subjects = list(subjects)
        if len(zs) != len(subjects):
            raise ParameterError("one subject label per vector required")
        for z, subject in zip(zs, subjects):
            v = np.array(nm.value_of(z), dtype=np.float64, copy=True)
            self._z.append(np.asarray(nm.normalize(v)))
            self._subjects.append(str(subject))

    def contents(self):
        """(m, d) array of entries plus subject labels; (None, ()) if empty."""
        if not self._z:
            return None, ()
        return np.stack(list(self._z)), tuple(self._subjects)

    def restore(self, z: np.ndarray | None, subjects) -> None:
        """Replace the buffer contents, e.g. when resuming training."""
        self._z.clear()
        self._subjects.clear()
        if z is None:
            return
        for row, subject in zip(np.asarray(z, dtype=np.float64), subjects):
            self._z.append(row.copy())
            self._subjects.append(str(subject))


def supcon_plan(subjects, tau, distributions=None, memory=None,
                anchor_roles="both"):
    """Validate a batch layout once and return the loss as a callable.

    The masks, positive counts, and memory snapshot depend only on the
    labels, so a caller that evaluates one batch many times (the gradient
    verifier, one optimizer step) pays for them once. The returned
    callable maps the sequence of aggregates to the loss.
    """
    if not tau > 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    if anchor_roles not in ANCHOR_ROLES:
        raise ParameterError(
            f"anchor_roles must be one of {ANCHOR_ROLES}, got {anchor_roles!r}"
        )
    subjects = [str(s) for s in subjects]
    b = len(subjects)
    if len(set(subjects)) < 2:
        raise BatchError(
            f"contrastive batch needs >= 2 subjects, got {sorted(set(subjects))}"
        )

    if anchor_roles == "both":
        anchor_mask = np.ones(b)
    else:
        if distributions is None:
            raise ParameterError(
                f"anchor_roles={anchor_roles!r} needs distribution tags"
            )
        tags = [getattr(t, "value", str(t)) for t in distributions]
        if len(tags) != b:
            raise ParameterError("one distribution tag per anchor required")
        anchor_mask = np.array([1.0 if t == anchor_roles else 0.0 for t in tags])
        if not anchor_mask.any():
            raise BatchError(f"no {anchor_roles} anchors in batch")

    if isinstance(memory, CrossBatchMemory):
        memory_z, memory_subjects = memory.contents()
    elif memory is None:
        memory_z, memory_subjects = None, ()
    else:
        memory_z, memory_subjects = memory
    m = 0 if memory_z is None else int(memory_z.shape[0])

    pool_subjects = subjects + [str(s) for s in memory_subjects]
    same = np.array(
        [[pool_subjects[j] == subjects[i] for j in range(b + m)] for i in range(b)],
        dtype=np.float64,
    )
    self_mask = np.ones((b, b + m))
    self_mask[:b, :b] -= np.eye(b)
    positives = same * self_mask
    counts = positives.sum(axis=1)
    starved = [
        subjects[i] for i in range(b) if anchor_mask[i] and counts[i] == 0
    ]
    if starved:
        raise BatchError(
            f"anchor(s) with no positive in batch or memory: {sorted(set(starved))}"
        )
    safe_counts = np.where(counts > 0, counts, 1.0)
    n_anchors = float(anchor_mask.sum())

    def apply(zs):
        zs = list(zs)
        if len(zs) != b:
            raise ParameterError(
                f"planned for {b} aggregates, got {len(zs)}"
            )
        stacked = nm.concat([nm.reshape(z, (1, -1)) for z in zs], axis=0)
        directions = nm.normalize(stacked, axis=-1)
        if m:
            pool = nm.concat([directions, memory_z], axis=0)
        else:
            pool = directions
        logits = nm.div(nm.matmul(directions, nm.transpose(pool)), tau)

        # constant row-max: shifts cancel between the positive mean and
        # the log-partition, so neither value nor gradient changes
        shift = np.max(nm.value_of(logits), axis=1, keepdims=True)
        masked_exp = nm.mul(nm.exp(nm.sub(logits, shift)), self_mask)
        log_partition = nm.add(nm.log(nm.reduce_sum(masked_exp, axis=1)), shift[:, 0])
        positive_mean = nm.div(
            nm.reduce_sum(nm.mul(logits, positives), axis=1), safe_counts
        )
        per_anchor = nm.mul(nm.sub(log_partition, positive_mean), anchor_mask)
        return nm.div(nm.reduce_sum(per_anchor), n_anchors)

    return apply


def supcon(zs, subjects, tau, distributions=None, memory=None,
           anchor_roles="both"):
    """The batch loss; a node when any anchor is a node.

    ``zs``: sequence of d-dim aggregates (nodes or arrays), ``subjects``:
    parallel labels. ``memory`` is a :class:`CrossBatchMemory` or an
    ``(array, subjects)`` pair of already-normalized entries.
    ``anchor_roles`` restricts which entries act as anchors ("probe" or
    "gallery" need ``distributions``); every entry stays in the
    positive/negative pools either way.
    """
    zs = list(zs)
    if len(zs) != len(subjects):
        raise ParameterError("one subject label per anchor required")
    plan = supcon_plan(
        subjects, tau,
        distributions=distributions, memory=memory, anchor_roles=anchor_roles,
    )
    return plan(zs)
