"""Finite-difference verification suite over every differentiable component.

Each group builds a small random instance and a scalar readout, then
compares reverse-mode gradients against central differences. The CLI's
gradcheck command runs all groups and fails loudly on the first rule that
drifts past the tolerance.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import fusion as fu
from . import mine as mi
from . import pooling as pl
from .autodiff import Tensor
from .data import UtteranceRecord
from .model import combined_loss, cross_entropy, forward_utterance
from .training import _batch_objective

TOLERANCE = 1e-4
EPS = 1e-5


def _readout(rng, t):
    """Scalar probe sensitive to every coordinate of t."""
    probe = Tensor(rng.normal(size=t.shape))
    return ad.sum_(ad.mul(t, probe))


def _group_matmul(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    probe = Tensor(rng.normal(size=(3, 2)))
    return lambda: ad.sum_(ad.mul(ad.matmul(a, b), probe)), [a, b]


def _group_unary(rng):
    x = Tensor(rng.uniform(0.2, 1.5, size=6), requires_grad=True)
    y = Tensor(rng.normal(size=6), requires_grad=True)

    def f():
        mix = ad.add(ad.log(ad.sqrt(x)), ad.exp(ad.mul(x, 0.3)))
        mix = ad.add(mix, ad.add(ad.tanh(y), ad.sigmoid(y)))
        mix = ad.add(mix, ad.add(ad.relu(y), ad.square(ad.neg(y))))
        return ad.sum_(mix)

    return f, [x, y]


def _group_binary(rng):
    a = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)
    b = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)
    v = Tensor(rng.uniform(0.5, 2.0, size=4), requires_grad=True)

    def f():
        mix = ad.div(ad.mul(a, b), ad.add(a, b))
        mix = ad.add(ad.sub(mix, b), v)  # row-vector broadcast
        return ad.sum_(mix)

    return f, [a, b, v]


def _group_softmax(rng):
    x = Tensor(rng.normal(size=5), requires_grad=True)
    probe = Tensor(rng.normal(size=5))
    return lambda: ad.sum_(ad.mul(ad.softmax(x), probe)), [x]


def _group_reductions(rng):
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)

    def f():
        total = ad.sum_(x, axis=0)
        avg = ad.mean(x, axis=1)
        top = ad.max_(x, axis=0)
        return ad.add(ad.sum_(ad.square(total)),
                      ad.add(ad.sum_(ad.square(avg)), ad.sum_(top)))

    return f, [x]


def _group_concat_narrow(rng):
    a = Tensor(rng.normal(size=3), requires_grad=True)
    b = Tensor(rng.normal(size=2), requires_grad=True)
    probe = Tensor(rng.normal(size=4))

    def f():
        joined = ad.concat([a, b])
        return ad.sum_(ad.mul(ad.narrow(joined, 0, 1, 4), probe))

    return f, [a, b]


def _group_asp(rng):
    frames = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    params = pl.init_asp_params(3, 5, rng)
    probe = Tensor(rng.normal(size=6))
    f = lambda: ad.sum_(ad.mul(pl.asp_pool(frames, params), probe))
    return f, [frames, params.w, params.b, params.v, params.k]


def _group_mean_max_pool(rng):
    frames = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    probe = Tensor(rng.normal(size=3))

    def f():
        pooled = pl.utterance_aggregate(
            [pl.mean_pool(frames), pl.max_pool(frames)]
        )
        return ad.sum_(ad.mul(pooled, probe))

    return f, [frames]


def _group_projection(rng):
    z_a = Tensor(rng.normal(size=6), requires_grad=True)
    f_t = Tensor(rng.normal(size=4), requires_grad=True)
    params = fu.init_projection(6, 4, 5, rng)
    probe = Tensor(rng.normal(size=5))

    def f():
        p_a, p_t = fu.project(z_a, f_t, params)
        return ad.sum_(ad.mul(ad.add(p_a, p_t), probe))

    return f, [z_a, f_t, params.w_a, params.b_a, params.w_t, params.b_t]


def _fusion_group(build, apply_fn):
    def group(rng):
        p_a = Tensor(rng.normal(size=5), requires_grad=True)
        p_t = Tensor(rng.normal(size=5), requires_grad=True)
        params = build(rng)
        out_dim = apply_fn(p_a, p_t, params).shape[0]
        probe = Tensor(rng.normal(size=out_dim))
        f = lambda: ad.sum_(ad.mul(apply_fn(p_a, p_t, params), probe))
        wrt = [p_a, p_t] + list(params.tensors().values()) if params else [p_a, p_t]
        return f, wrt

    return group


_group_at_fusion = _fusion_group(
    lambda rng: fu.init_at_fusion(5, 4, rng),
    lambda a, t, p: fu.at_fusion(a, t, p)[0],
)
_group_gmu_fusion = _fusion_group(
    lambda rng: fu.init_gmu(5, rng),
    lambda a, t, p: fu.gmu_fusion(t, a, p),
)
_group_mfb_fusion = _fusion_group(
    lambda rng: fu.init_mfb(5, 2, 1, rng),
    lambda a, t, p: fu.mfb_fusion(a, t, p),
)
_group_mfh_fusion = _fusion_group(
    lambda rng: fu.init_mfb(5, 2, 2, rng),
    lambda a, t, p: fu.mfh_fusion(a, t, p),
)


def _group_concat_fusion(rng):
    p_a = Tensor(rng.normal(size=5), requires_grad=True)
    p_t = Tensor(rng.normal(size=5), requires_grad=True)
    probe = Tensor(rng.normal(size=10))
    f = lambda: ad.sum_(ad.mul(fu.concat_fusion(p_a, p_t), probe))
    return f, [p_a, p_t]


def _group_mine(rng):
    p_a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    p_t = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    net = mi.init_statistics_net(6, 5, rng)

    def f():
        est = mi.dv_lower_bound(p_a, p_t, net)
        return mi.mi_loss(est)

    return f, [p_a, p_t] + list(net.tensors().values())


def _group_cross_entropy(rng):
    logits = [Tensor(rng.normal(size=2), requires_grad=True) for _ in range(3)]
    labels = [0, 1, 0]
    return lambda: cross_entropy(logits, labels), logits


def _pipeline_group(fusion_name):
    def group(rng):
        from .training import TrainConfig

        config = TrainConfig(
            runs=1, pooling="asp", fusion=fusion_name, proj_dim=5,
            asp_hidden=4, fusion_hidden=4, mine_hidden=5, mfb_factor=2,
            mfh_blocks=2, lambda_mi=0.25,
        )
        mcfg = config.model_config(d_a=3, d_t=4)
        from .model import init_model

        params = init_model(mcfg, rng)
        records = []
        for i in range(3):
            chunks = [
                rng.normal(size=(int(rng.integers(2, 5)), 3)).astype(np.float32)
                for _ in range(int(rng.integers(1, 3)))
            ]
            records.append(UtteranceRecord(
                id=f"gc-{i}", label=i % 2,
                text_embedding=rng.normal(size=4).astype(np.float32),
                chunks=chunks,
            ))

        def f():
            return _batch_objective(records, params, mcfg, 0.25, "shift", None).total

        return f, list(params.named_tensors().values())

    return group


GROUPS = {
    "matmul": _group_matmul,
    "elementwise-unary": _group_unary,
    "elementwise-binary": _group_binary,
    "softmax": _group_softmax,
    "reductions": _group_reductions,
    "concat-narrow": _group_concat_narrow,
    "asp-pooling": _group_asp,
    "mean-max-pooling": _group_mean_max_pool,
    "projection": _group_projection,
    "at-fusion": _group_at_fusion,
    "concat-fusion": _group_concat_fusion,
    "gmu-fusion": _group_gmu_fusion,
    "mfb-fusion": _group_mfb_fusion,
    "mfh-fusion": _group_mfh_fusion,
    "mine-bound": _group_mine,
    "cross-entropy": _group_cross_entropy,
    "pipeline-at": _pipeline_group("at"),
    "pipeline-concat": _pipeline_group("concat"),
    "pipeline-gmu": _pipeline_group("gmu"),
    "pipeline-mfb": _pipeline_group("mfb"),
    "pipeline-mfh": _pipeline_group("mfh"),
}


def run_suite(seed=0, tolerance=TOLERANCE, eps=EPS):
    """Run every group; returns [(name, max_rel_err, passed)]."""
    results = []
    for name, builder in GROUPS.items():
        rng = np.random.default_rng(seed)
        f, wrt = builder(rng)
        err = ad.gradcheck(f, wrt, eps=eps)
        results.append((name, err, err < tolerance))
    return results
