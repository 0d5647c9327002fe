"""Neural lower bound on the mutual information between modality embeddings.

A small scalar-output network scores (acoustic, text) pairs; aligned pairs
estimate the joint expectation and mismatched pairs the log-mean-exp term
of the variational bound. The training loss is the negated bound, so
minimizing it pushes the two embeddings toward higher mutual dependency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import BatchTooSmallError, ShapeError
from .pooling import uniform_init, zeros_param


@dataclass
class StatisticsNet:
    """Two hidden ReLU layers onto a scalar score per pair."""

    w1: Tensor   # (hidden, pair_dim)
    b1: Tensor   # (hidden,)
    w2: Tensor   # (hidden, hidden)
    b2: Tensor   # (hidden,)
    w3: Tensor   # (1, hidden)
    b3: Tensor   # (1,)

    def tensors(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2,
                "b2": self.b2, "w3": self.w3, "b3": self.b3}


@dataclass
class MiBatchEstimate:
    """One batch's bound: mean aligned score minus log-mean-exp of mismatched."""

    joint_term: Tensor
    marginal_term: Tensor
    value: Tensor


def init_statistics_net(pair_dim, hidden, rng, dtype=np.float64):
    return StatisticsNet(
        w1=uniform_init(rng, (hidden, pair_dim), pair_dim, dtype),
        b1=zeros_param((hidden,), dtype),
        w2=uniform_init(rng, (hidden, hidden), hidden, dtype),
        b2=zeros_param((hidden,), dtype),
        w3=uniform_init(rng, (1, hidden), hidden, dtype),
        b3=zeros_param((1,), dtype),
    )


def statistics_scores(net, pairs):
    """Scalar score per row of a (B, pair_dim) batch, shape (B,)."""
    if pairs.ndim != 2:
        raise ShapeError("statistics network expects a 2-D pair batch")
    if pairs.shape[1] != net.w1.shape[1]:
        raise ShapeError(
            f"pair width {pairs.shape[1]} does not match network input "
            f"width {net.w1.shape[1]}"
        )
    h1 = ad.relu(ad.add(ad.matmul(pairs, ad.transpose(net.w1)), net.b1))
    h2 = ad.relu(ad.add(ad.matmul(h1, ad.transpose(net.w2)), net.b2))
    out = ad.add(ad.matmul(h2, ad.transpose(net.w3)), net.b3)
    return ad.reshape(out, (pairs.shape[0],))


def _check_batches(p_a, p_t):
    if p_a.ndim != 2 or p_t.ndim != 2 or p_a.shape != p_t.shape:
        raise ShapeError(
            f"embedding batches must share shape (B, D), got "
            f"{p_a.shape} and {p_t.shape}"
        )
    if p_a.shape[0] < 2:
        raise BatchTooSmallError(
            "need at least 2 pairs to sample from the product of marginals"
        )


def negative_pairs(p_a, p_t, mode="shift", rng=None):
    """Mismatched (acoustic, text) pairs drawn from the marginals, (B, 2D).

    The default pairs row i with text row (i+1) mod B: a deterministic
    derangement, so no mismatched pair ever equals its aligned counterpart.
    mode="permute" instead samples a random permutation of the text rows
    (which may leave some rows aligned).
    """
    _check_batches(p_a, p_t)
    batch = p_a.shape[0]
    if mode == "shift":
        shifted = ad.concat(
            [ad.narrow(p_t, 0, 1, batch - 1), ad.narrow(p_t, 0, 0, 1)], axis=0
        )
    elif mode == "permute":
        if rng is None:
            raise ShapeError("permute mode needs an rng")
        order = rng.permutation(batch)
        shifted = ad.concat([ad.narrow(p_t, 0, int(i), 1) for i in order], axis=0)
    else:
        raise ShapeError(f"unknown negative sampling mode {mode!r}")
    return ad.concat([p_a, shifted], axis=1)


def dv_lower_bound(p_a, p_t, net, mode="shift", rng=None):
    """Variational lower bound on I(p_a; p_t) from one batch.

    joint_term = mean score over aligned pairs; marginal_term =
    log-mean-exp of the scores over mismatched pairs (max-subtracted, so it
    stays finite for scores up to about +-700). Differentiable with respect
    to the network and both embedding batches.
    """
    _check_batches(p_a, p_t)
    joint = ad.mean(statistics_scores(net, ad.concat([p_a, p_t], axis=1)))
    marginal = ad.logmeanexp(statistics_scores(net, negative_pairs(p_a, p_t, mode, rng)))
    return MiBatchEstimate(
        joint_term=joint,
        marginal_term=marginal,
        value=ad.sub(joint, marginal),
    )


def mi_loss(estimate):
    """Negated bound; minimizing it maximizes the estimated dependency."""
    return ad.neg(estimate.value)
