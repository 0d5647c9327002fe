"""Frame-to-chunk and chunk-to-utterance pooling of acoustic embeddings.

The main path scores every frame with a small attention head, softmax-
normalizes the scores, and summarizes the chunk with the attention-weighted
mean and standard deviation. Mean and max pooling are the ablation
alternatives; chunk embeddings are averaged into one utterance vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EmptyInputError, ShapeError

# variance is clamped here before the square root; the weighted-moment
# difference can dip below zero in floating point
VAR_EPS = 1e-8

_ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu}


@dataclass
class AspParams:
    """Attention head parameters for attentive statistics pooling."""

    w: Tensor          # (hidden, d_in)
    b: Tensor          # (hidden,)
    v: Tensor          # (hidden,)
    k: Tensor          # scalar bias
    activation: str = "tanh"

    def tensors(self):
        return {"w": self.w, "b": self.b, "v": self.v, "k": self.k}


def uniform_init(rng, shape, fan_in, dtype):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init used across the model."""
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True,
                  dtype=dtype)


def zeros_param(shape, dtype):
    return Tensor(np.zeros(shape), requires_grad=True, dtype=dtype)


def init_asp_params(d_in, hidden, rng, activation="tanh", dtype=np.float64):
    if activation not in _ACTIVATIONS:
        raise ShapeError(f"unknown ASP activation {activation!r}")
    return AspParams(
        w=uniform_init(rng, (hidden, d_in), d_in, dtype),
        b=zeros_param((hidden,), dtype),
        v=uniform_init(rng, (hidden,), hidden, dtype),
        k=zeros_param((), dtype),
        activation=activation,
    )


def _check_frames(frames):
    if not isinstance(frames, Tensor) or frames.ndim != 2:
        raise ShapeError("frame matrix must be a 2-D (frames x dim) tensor")


def asp_scores(frames, params):
    """Per-frame attention scores v . f(W h_t + b) + k, shape (T,)."""
    _check_frames(frames)
    if frames.shape[1] != params.w.shape[1]:
        raise ShapeError(
            f"frame dim {frames.shape[1]} does not match attention input "
            f"dim {params.w.shape[1]}"
        )
    act = _ACTIVATIONS[params.activation]
    hidden = act(ad.add(ad.matmul(frames, ad.transpose(params.w)), params.b))
    return ad.add(ad.matmul(hidden, params.v), params.k)


def asp_pool(frames, params):
    """Attention-weighted mean and std of the frames, concatenated (2D,)."""
    scores = asp_scores(frames, params)
    alpha = ad.softmax(scores)
    mu = ad.matmul(alpha, frames)
    mean_sq = ad.matmul(alpha, ad.mul(frames, frames))
    var = ad.sub(mean_sq, ad.mul(mu, mu))
    sigma = ad.sqrt(ad.clamp_min(var, VAR_EPS))
    return ad.concat([mu, sigma])


def mean_pool(frames):
    """Arithmetic mean over frames, shape (D,)."""
    _check_frames(frames)
    return ad.mean(frames, axis=0)


def max_pool(frames):
    """Columnwise max over frames; ties route gradient to the first frame."""
    _check_frames(frames)
    return ad.max_(frames, axis=0)


def pool_chunk(frames, method, asp_params=None):
    if method == "asp":
        if asp_params is None:
            raise ShapeError("asp pooling requires attention parameters")
        return asp_pool(frames, asp_params)
    if method == "mean":
        return mean_pool(frames)
    if method == "max":
        return max_pool(frames)
    raise ShapeError(f"unknown pooling method {method!r}")


def pooled_dim(d_a, method):
    """Chunk embedding width produced by a pooling method."""
    return 2 * d_a if method == "asp" else d_a


def utterance_aggregate(chunks):
    """Average chunk embeddings into one utterance vector."""
    chunks = list(chunks)
    if not chunks:
        raise EmptyInputError("utterance has no audio chunks to aggregate")
    if len(chunks) == 1:
        return chunks[0]
    dims = {c.shape for c in chunks}
    if len(dims) != 1:
        raise ShapeError(f"chunk embeddings disagree in shape: {sorted(dims)}")
    return ad.mean(ad.stack_rows(chunks), axis=0)
