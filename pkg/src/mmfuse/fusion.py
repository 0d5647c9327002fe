"""Modality projection and fusion mechanisms.

Both modality embeddings are linearly projected to a shared width D, then
combined by one of: attention fusion (softmax weights over the two
modalities), plain concatenation, a gated unit, or factorized bilinear
pooling (single or stacked blocks).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError
from .pooling import uniform_init, zeros_param

FUSION_METHODS = ("at", "concat", "gmu", "mfb", "mfh")

L2_EPS = 1e-12
SIGNED_SQRT_EPS = 1e-24


@dataclass
class ProjectionParams:
    w_a: Tensor   # (D, dim_audio_in)
    b_a: Tensor   # (D,)
    w_t: Tensor   # (D, dim_text_in)
    b_t: Tensor   # (D,)

    def tensors(self):
        return {"w_a": self.w_a, "b_a": self.b_a, "w_t": self.w_t, "b_t": self.b_t}


@dataclass
class AtFusionParams:
    w_mat: Tensor  # (hidden, D)
    w_vec: Tensor  # (hidden,)

    def tensors(self):
        return {"w_mat": self.w_mat, "w_vec": self.w_vec}


@dataclass
class GmuParams:
    w_t: Tensor    # (D, D)
    b_t: Tensor    # (D,)
    w_v: Tensor    # (D, D)
    b_v: Tensor    # (D,)
    w_z: Tensor    # (D, 2D)
    b_z: Tensor    # (D,)

    def tensors(self):
        return {"w_t": self.w_t, "b_t": self.b_t, "w_v": self.w_v,
                "b_v": self.b_v, "w_z": self.w_z, "b_z": self.b_z}


@dataclass
class MfbParams:
    """Factorized bilinear pooling parameters.

    One (U, V) projection pair per block; single-block for plain factorized
    pooling, two or more for the stacked higher-order variant.
    """

    us: tuple = field(default_factory=tuple)   # each (D*factor, D)
    vs: tuple = field(default_factory=tuple)   # each (D*factor, D)
    factor: int = 5
    blocks: int = 1

    def tensors(self):
        named = {}
        for i, (u, v) in enumerate(zip(self.us, self.vs)):
            named[f"u{i}"] = u
            named[f"v{i}"] = v
        return named


def init_projection(dim_audio_in, dim_text_in, out_dim, rng, dtype=np.float64):
    return ProjectionParams(
        w_a=uniform_init(rng, (out_dim, dim_audio_in), dim_audio_in, dtype),
        b_a=zeros_param((out_dim,), dtype),
        w_t=uniform_init(rng, (out_dim, dim_text_in), dim_text_in, dtype),
        b_t=zeros_param((out_dim,), dtype),
    )


def init_at_fusion(dim, hidden, rng, dtype=np.float64):
    return AtFusionParams(
        w_mat=uniform_init(rng, (hidden, dim), dim, dtype),
        w_vec=uniform_init(rng, (hidden,), hidden, dtype),
    )


def init_gmu(dim, rng, dtype=np.float64):
    return GmuParams(
        w_t=uniform_init(rng, (dim, dim), dim, dtype),
        b_t=zeros_param((dim,), dtype),
        w_v=uniform_init(rng, (dim, dim), dim, dtype),
        b_v=zeros_param((dim,), dtype),
        w_z=uniform_init(rng, (dim, 2 * dim), 2 * dim, dtype),
        b_z=zeros_param((dim,), dtype),
    )


def init_mfb(dim, factor, blocks, rng, dtype=np.float64):
    if factor < 1 or blocks < 1:
        raise ShapeError("factorized pooling needs factor >= 1 and blocks >= 1")
    us, vs = [], []
    for _ in range(blocks):
        us.append(uniform_init(rng, (dim * factor, dim), dim, dtype))
        vs.append(uniform_init(rng, (dim * factor, dim), dim, dtype))
    return MfbParams(us=tuple(us), vs=tuple(vs), factor=factor, blocks=blocks)


def _check_vec(x, name):
    if not isinstance(x, Tensor) or x.ndim != 1:
        raise ShapeError(f"{name} must be a 1-D tensor")


def project(z_a, f_t, params):
    """Map both modality vectors to the shared fusion width."""
    _check_vec(z_a, "acoustic embedding")
    _check_vec(f_t, "text embedding")
    p_a = ad.add(ad.matmul(params.w_a, z_a), params.b_a)
    p_t = ad.add(ad.matmul(params.w_t, f_t), params.b_t)
    return p_a, p_t


def at_fusion(p_a, p_t, params):
    """Attention fusion: softmax weights over the two modality columns.

    Returns the fused vector h = alpha[0] * p_a + alpha[1] * p_t together
    with the weights alpha (length 2, nonnegative, summing to 1).
    """
    _check_vec(p_a, "projected acoustic embedding")
    _check_vec(p_t, "projected text embedding")
    if p_a.shape != p_t.shape:
        raise ShapeError(f"fusion inputs disagree: {p_a.shape} vs {p_t.shape}")
    dim = p_a.shape[0]
    f_cat = ad.concat(
        [ad.reshape(p_a, (dim, 1)), ad.reshape(p_t, (dim, 1))], axis=1
    )
    scores = ad.matmul(params.w_vec, ad.tanh(ad.matmul(params.w_mat, f_cat)))
    alpha = ad.softmax(scores)
    fused = ad.matmul(f_cat, alpha)
    return fused, alpha


def concat_fusion(p_a, p_t):
    _check_vec(p_a, "projected acoustic embedding")
    _check_vec(p_t, "projected text embedding")
    return ad.concat([p_a, p_t])


def gmu_fusion(p_t, p_a, params):
    """Gated unit: sigmoid gate interpolating two tanh branches.

    Text is the first branch, audio the second; the gate sees both.
    """
    _check_vec(p_t, "projected text embedding")
    _check_vec(p_a, "projected acoustic embedding")
    h_t = ad.tanh(ad.add(ad.matmul(params.w_t, p_t), params.b_t))
    h_v = ad.tanh(ad.add(ad.matmul(params.w_v, p_a), params.b_v))
    gate = ad.sigmoid(
        ad.add(ad.matmul(params.w_z, ad.concat([p_t, p_a])), params.b_z)
    )
    return ad.add(ad.mul(gate, h_t), ad.mul(ad.sub(1.0, gate), h_v))


def _signed_sqrt(z):
    # sign(z) * sqrt(|z|); the tiny clamp keeps the backward pass finite at 0
    # without changing the forward value (the sign factor is 0 there)
    sign = Tensor(np.sign(z.data), dtype=z.dtype.type)
    magnitude = ad.clamp_min(ad.mul(z, sign), SIGNED_SQRT_EPS)
    return ad.mul(sign, ad.sqrt(magnitude))


def _l2_normalize(x):
    norm = ad.sqrt(ad.sum_(ad.square(x)))
    return ad.div(x, ad.clamp_min(norm, L2_EPS))


def _mfb_block(p_a, p_t, u, v, factor, prev_product):
    """One factorized bilinear block; chains on the previous block's product."""
    product = ad.mul(ad.matmul(u, p_a), ad.matmul(v, p_t))
    if prev_product is not None:
        product = ad.mul(product, prev_product)
    dim = product.shape[0] // factor
    pooled = ad.sum_(ad.reshape(product, (dim, factor)), axis=1)
    return _l2_normalize(_signed_sqrt(pooled)), product


def mfb_fusion(p_a, p_t, params):
    """Factorized bilinear pooling: project, multiply, sum-pool by factor,
    signed-sqrt, then l2 normalization. Output has l2 norm 1 unless zero."""
    _check_vec(p_a, "projected acoustic embedding")
    _check_vec(p_t, "projected text embedding")
    out, _ = _mfb_block(p_a, p_t, params.us[0], params.vs[0], params.factor, None)
    return out


def mfh_fusion(p_a, p_t, params):
    """Stacked factorized bilinear blocks, normalized outputs concatenated.

    Each block's pre-pooling product feeds the next block multiplicatively;
    a single block reduces exactly to mfb_fusion.
    """
    _check_vec(p_a, "projected acoustic embedding")
    _check_vec(p_t, "projected text embedding")
    outs = []
    product = None
    for u, v in zip(params.us, params.vs):
        out, product = _mfb_block(p_a, p_t, u, v, params.factor, product)
        outs.append(out)
    return outs[0] if len(outs) == 1 else ad.concat(outs)


def fused_dim(proj_dim, method, mfh_blocks=2):
    """Classifier input width for a fusion method."""
    if method in ("at", "gmu", "mfb"):
        return proj_dim
    if method == "concat":
        return 2 * proj_dim
    if method == "mfh":
        return mfh_blocks * proj_dim
    raise ShapeError(f"unknown fusion method {method!r}")
