"""Full classifier assembly, losses, and checkpoint serialization.

Pipeline per utterance: pool each chunk's frames, average the chunk
embeddings, project both modalities to the shared width, fuse, and apply a
single dense head with two output units. The training objective is
cross-entropy plus a weighted mutual-information term.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import fusion as fu
from . import pooling as pl
from .autodiff import Tensor
from .errors import (
    CheckpointMismatchError,
    ConfigError,
    DimensionMismatchError,
    EmptyInputError,
    PayloadError,
    ShapeError,
)
from .mine import StatisticsNet, init_statistics_net

CHECKPOINT_MAGIC = b"MMCK"
CHECKPOINT_VERSION = 1

POOLING_METHODS = ("asp", "mean", "max")


@dataclass
class ModelConfig:
    """Architecture description; its digest keys checkpoints to configs."""

    d_a: int
    d_t: int
    pooling: str = "asp"
    fusion: str = "at"
    proj_dim: int = 256
    asp_hidden: int = 128
    fusion_hidden: int = 128
    mine_hidden: int = 128
    mfb_factor: int = 5
    mfh_blocks: int = 2
    asp_activation: str = "tanh"
    precision: str = "double"

    def __post_init__(self):
        if self.pooling not in POOLING_METHODS:
            raise ConfigError(f"unknown pooling method {self.pooling!r}")
        if self.fusion not in fu.FUSION_METHODS:
            raise ConfigError(f"unknown fusion method {self.fusion!r}")
        if self.precision not in ("double", "single"):
            raise ConfigError(f"precision must be double or single")
        for name in ("d_a", "d_t", "proj_dim", "asp_hidden", "fusion_hidden",
                     "mine_hidden", "mfb_factor", "mfh_blocks"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")

    @property
    def dtype(self):
        return np.float64 if self.precision == "double" else np.float32

    @property
    def pooled_dim(self):
        return pl.pooled_dim(self.d_a, self.pooling)

    @property
    def head_dim(self):
        return fu.fused_dim(self.proj_dim, self.fusion, self.mfh_blocks)


def config_digest(config):
    """Stable hex digest of the architecture config."""
    canonical = json.dumps(asdict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class ModelParams:
    asp: Optional[pl.AspParams]
    proj: fu.ProjectionParams
    at: Optional[fu.AtFusionParams]
    gmu: Optional[fu.GmuParams]
    mfb: Optional[fu.MfbParams]
    mine_net: StatisticsNet
    head_w: Tensor   # (2, head_dim)
    head_b: Tensor   # (2,)

    def named_tensors(self):
        """Flat name -> Tensor map in a stable order (checkpoint layout)."""
        named = {}
        if self.asp is not None:
            for key, t in self.asp.tensors().items():
                named[f"asp.{key}"] = t
        for key, t in self.proj.tensors().items():
            named[f"proj.{key}"] = t
        for group_name, group in (("at", self.at), ("gmu", self.gmu),
                                  ("mfb", self.mfb)):
            if group is not None:
                for key, t in group.tensors().items():
                    named[f"{group_name}.{key}"] = t
        for key, t in self.mine_net.tensors().items():
            named[f"mine.{key}"] = t
        named["head.w"] = self.head_w
        named["head.b"] = self.head_b
        return named


def init_model(config, rng):
    """Fresh parameters; creation order is fixed so a seed pins the init."""
    dtype = config.dtype
    asp = None
    if config.pooling == "asp":
        asp = pl.init_asp_params(config.d_a, config.asp_hidden, rng,
                                 config.asp_activation, dtype)
    proj = fu.init_projection(config.pooled_dim, config.d_t, config.proj_dim,
                              rng, dtype)
    at = gmu = mfb = None
    if config.fusion == "at":
        at = fu.init_at_fusion(config.proj_dim, config.fusion_hidden, rng, dtype)
    elif config.fusion == "gmu":
        gmu = fu.init_gmu(config.proj_dim, rng, dtype)
    elif config.fusion == "mfb":
        mfb = fu.init_mfb(config.proj_dim, config.mfb_factor, 1, rng, dtype)
    elif config.fusion == "mfh":
        mfb = fu.init_mfb(config.proj_dim, config.mfb_factor,
                          config.mfh_blocks, rng, dtype)
    mine_net = init_statistics_net(2 * config.proj_dim, config.mine_hidden,
                                   rng, dtype)
    head_w = pl.uniform_init(rng, (2, config.head_dim), config.head_dim, dtype)
    head_b = pl.zeros_param((2,), dtype)
    return ModelParams(asp=asp, proj=proj, at=at, gmu=gmu, mfb=mfb,
                       mine_net=mine_net, head_w=head_w, head_b=head_b)


def _fuse(p_a, p_t, params, config):
    if config.fusion == "at":
        fused, _ = fu.at_fusion(p_a, p_t, params.at)
        return fused
    if config.fusion == "concat":
        return fu.concat_fusion(p_a, p_t)
    if config.fusion == "gmu":
        return fu.gmu_fusion(p_t, p_a, params.gmu)
    if config.fusion == "mfb":
        return fu.mfb_fusion(p_a, p_t, params.mfb)
    return fu.mfh_fusion(p_a, p_t, params.mfb)


def forward_utterance(record, params, config):
    """Logits for one utterance plus the projected modality embeddings.

    The projected embeddings feed the mutual-information estimator, so they
    are returned alongside the logits.
    """
    if not record.chunks:
        raise EmptyInputError(f"utterance {record.id!r} has no chunks")
    if record.text_embedding.shape != (config.d_t,):
        raise DimensionMismatchError(
            f"utterance {record.id!r}: text dim {record.text_embedding.shape} "
            f"!= configured ({config.d_t},)"
        )
    dtype = config.dtype
    pooled = []
    for i, chunk in enumerate(record.chunks):
        if chunk.ndim != 2 or chunk.shape[1] != config.d_a:
            raise DimensionMismatchError(
                f"utterance {record.id!r} chunk {i}: frame dim "
                f"{chunk.shape} != (*, {config.d_a})"
            )
        frames = Tensor(chunk, dtype=dtype)
        pooled.append(pl.pool_chunk(frames, config.pooling, params.asp))
    z_a = pl.utterance_aggregate(pooled)
    f_t = Tensor(record.text_embedding, dtype=dtype)
    p_a, p_t = fu.project(z_a, f_t, params.proj)
    fused = _fuse(p_a, p_t, params, config)
    logits = ad.add(ad.matmul(params.head_w, fused), params.head_b)
    return logits, p_a, p_t


def cross_entropy(logits, labels):
    """Mean negative log-softmax probability of the true labels.

    `logits` is a sequence of 1-D logit tensors (or a single (B, C) tensor,
    which is split into rows). Computed through a max-subtracted
    log-sum-exp, so extreme logits stay finite.
    """
    if isinstance(logits, Tensor):
        if logits.ndim != 2:
            raise ShapeError("batched logits must be 2-D")
        logits = [ad.reshape(ad.narrow(logits, 0, i, 1), (logits.shape[1],))
                  for i in range(logits.shape[0])]
    else:
        logits = list(logits)
    labels = list(labels)
    if len(logits) != len(labels) or not logits:
        raise ShapeError("need one label per logit row, at least one row")
    losses = []
    for row, label in zip(logits, labels):
        label = int(label)
        if not 0 <= label < row.shape[0]:
            raise ShapeError(f"label {label} outside {row.shape[0]} classes")
        lse = ad.logsumexp(row)
        picked = ad.narrow(row, 0, label, 1)
        losses.append(ad.sub(ad.reshape(lse, (1,)), picked))
    return ad.mean(ad.concat(losses))


@dataclass
class LossBreakdown:
    cls: Tensor
    mi: Optional[Tensor]
    lam: float
    total: Tensor


def combined_loss(cls, mi, lam):
    """total = cls + lam * mi; lam = 0 drops the MI term entirely."""
    if lam < 0:
        raise ConfigError(f"MI weight must be nonnegative, got {lam}")
    if lam == 0 or mi is None:
        return LossBreakdown(cls=cls, mi=mi, lam=lam, total=cls)
    return LossBreakdown(cls=cls, mi=mi, lam=lam,
                         total=ad.add(cls, ad.mul(mi, lam)))


# ---------------------------------------------------------------------------
# checkpoint serialization
#
# layout: "MMCK", version u16 LE, digest length u16 LE + ascii digest,
# then per tensor: name length u16 + utf-8 name, rank u8, dims u32 LE each,
# float64 LE values.


def save_checkpoint(path, params, config, extra=None):
    """Write parameters (plus scalar metadata under meta.*) to disk."""
    digest = config_digest(config)
    blobs = {name: t.data for name, t in params.named_tensors().items()}
    for key, value in (extra or {}).items():
        blobs[f"meta.{key}"] = np.asarray(float(value), dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        raw = digest.encode("ascii")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        for name, arr in blobs.items():
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return digest


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise PayloadError(f"checkpoint truncated while reading {what}")
    return buf


def load_checkpoint(path):
    """Read a checkpoint; returns (digest, {name: float64 array})."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise PayloadError(f"not a checkpoint file (magic {magic!r})")
        (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
        if version != CHECKPOINT_VERSION:
            raise PayloadError(f"unsupported checkpoint version {version}")
        (dlen,) = struct.unpack("<H", _read_exact(fh, 2, "digest length"))
        digest = _read_exact(fh, dlen, "digest").decode("ascii")
        blobs = {}
        while True:
            head = fh.read(2)
            if not head:
                break
            if len(head) != 2:
                raise PayloadError("checkpoint truncated in blob header")
            (nlen,) = struct.unpack("<H", head)
            name = _read_exact(fh, nlen, "blob name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, "rank"))
            dims = [
                struct.unpack("<I", _read_exact(fh, 4, "dim"))[0]
                for _ in range(rank)
            ]
            count = int(np.prod(dims)) if dims else 1
            raw = _read_exact(fh, 8 * count, f"values of {name}")
            blobs[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
    return digest, blobs


def restore_params(config, blobs, expected_digest=None, found_digest=None):
    """Rebuild ModelParams from checkpoint blobs for the given config."""
    if expected_digest is not None and found_digest != expected_digest:
        raise CheckpointMismatchError(
            "checkpoint was written under a different configuration "
            f"(digest {found_digest} != {expected_digest})"
        )
    rng = np.random.default_rng(0)
    params = init_model(config, rng)
    named = params.named_tensors()
    missing = sorted(set(named) - set(b for b in blobs if not b.startswith("meta.")))
    extras = sorted(set(b for b in blobs if not b.startswith("meta.")) - set(named))
    if missing or extras:
        raise CheckpointMismatchError(
            f"checkpoint tensors disagree with config: missing {missing}, "
            f"unexpected {extras}"
        )
    for name, tensor in named.items():
        arr = blobs[name]
        if tuple(arr.shape) != tensor.shape:
            raise CheckpointMismatchError(
                f"tensor {name} has shape {arr.shape}, expected {tensor.shape}"
            )
        tensor.data[...] = arr.astype(config.dtype)
    return params


def checkpoint_meta(blobs):
    return {name[5:]: float(arr) for name, arr in blobs.items()
            if name.startswith("meta.")}
