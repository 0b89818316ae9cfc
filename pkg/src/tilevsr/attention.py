"""Attention kernels and cross-tile key/value plumbing.

All kernels accept matrices of shape (..., tokens, d); leading axes are
batched (the video denoiser batches over frames). A single scoring path
serves both the plain kernel and the detail-suppressed one, so gamma = 0
reproduces plain attention bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _check_qkv(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> None:
    if q.ndim < 2 or k.ndim < 2 or v.ndim < 2:
        raise ValueError("q, k, v must be at least 2-D")
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"feature dims differ: q has {q.shape[-1]}, k has {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(f"k has {k.shape[-2]} rows but v has {v.shape[-2]}")
    if k.shape[-2] < 1:
        raise ValueError("attention needs at least one key")
    for name, arr in (("q", q), ("k", k), ("v", v)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")


def scaled_scores(q: np.ndarray, k: np.ndarray, gamma: float = 0.0) -> np.ndarray:
    """Q K^T / (max(gamma^2 * qmax * kmax, 1) * sqrt(d)).

    qmax/kmax are the largest absolute entries of Q and K (per batched
    matrix). gamma = 0 leaves the temper factor at exactly 1.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    d = q.shape[-1]
    raw = q @ np.swapaxes(k, -1, -2)
    qmax = np.max(np.abs(q), axis=(-2, -1), keepdims=True)
    kmax = np.max(np.abs(k), axis=(-2, -1), keepdims=True)
    temper = np.maximum(gamma * gamma * qmax * kmax, 1.0)
    return raw / (temper * np.sqrt(d))


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting the row maximum."""
    shifted = scores - scores.max(axis=-1, keepdims=True)
    w = np.exp(shifted)
    return w / w.sum(axis=-1, keepdims=True)


def self_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """softmax(Q K^T / sqrt(d)) V."""
    _check_qkv(q, k, v)
    return softmax_rows(scaled_scores(q, k, 0.0)) @ v


def dssag_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, gamma: float) -> np.ndarray:
    """Detail-suppressed attention: softmax(Q K^T / (max(g^2 q k, 1) sqrt(d))) V."""
    _check_qkv(q, k, v)
    return softmax_rows(scaled_scores(q, k, gamma)) @ v


def pag_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Identity-score perturbation: each query attends only to its own value."""
    _check_qkv(q, k, v)
    if q.shape[-2] != k.shape[-2]:
        raise ValueError(
            f"identity perturbation needs square attention, got {q.shape[-2]} queries "
            f"and {k.shape[-2]} keys"
        )
    return v.copy()


@dataclass
class AttentionTensors:
    """One attention instance's projections. k and v must agree on rows."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.k = np.asarray(self.k, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        _check_qkv(self.q, self.k, self.v)
        if self.d < 1:
            raise ValueError("feature dim must be >= 1")

    @property
    def d(self) -> int:
        return self.q.shape[-1]


@dataclass
class InjectedKV:
    """Key/value rows gathered from other tiles, plus where they came from."""

    keys: np.ndarray
    values: np.ndarray
    tag: str  # sap-global | tap-forward | tap-backward

    _TAGS = ("sap-global", "tap-forward", "tap-backward")

    def __post_init__(self):
        self.keys = np.asarray(self.keys, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.keys.ndim != 2 or self.values.ndim != 2:
            raise ValueError("injected keys/values must be 2-D")
        if self.keys.shape[0] != self.values.shape[0]:
            raise ValueError(
                f"injected keys have {self.keys.shape[0]} rows, values {self.values.shape[0]}"
            )
        if self.tag not in self._TAGS:
            raise ValueError(f"unknown origin tag {self.tag!r}")

    @property
    def rows(self) -> int:
        return self.keys.shape[0]


def extend_kv(k: np.ndarray, v: np.ndarray, injected: InjectedKV | None) -> tuple[np.ndarray, np.ndarray]:
    """Append injected rows to k and v, broadcasting over batch axes."""
    if injected is None or injected.rows == 0:
        return k, v
    if injected.keys.shape[1] != k.shape[-1]:
        raise ValueError(
            f"injected key dim {injected.keys.shape[1]} does not match {k.shape[-1]}"
        )
    if injected.values.shape[1] != v.shape[-1]:
        raise ValueError(
            f"injected value dim {injected.values.shape[1]} does not match {v.shape[-1]}"
        )
    batch = k.shape[:-2]
    inj_k = np.broadcast_to(injected.keys, batch + injected.keys.shape)
    inj_v = np.broadcast_to(injected.values, batch + injected.values.shape)
    return np.concatenate([k, inj_k], axis=-2), np.concatenate([v, inj_v], axis=-2)


def extended_self_attention(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, injected: InjectedKV | None
) -> np.ndarray:
    """Self-attention over the union of own and injected key/value rows."""
    k2, v2 = extend_kv(k, v, injected)
    return self_attention(q, k2, v2)


def subsample_spatial_kv(
    keys: np.ndarray, values: np.ndarray, rate: int, grid_dims: tuple[int, int, int]
) -> InjectedKV:
    """Keep tokens on a stride-`rate` grid in both spatial axes of every frame.

    keys/values are token-major (frames * grid_h * grid_w, d) with frame-major
    row order; the kept rows stay in ascending token order. The (0, 0) corner
    anchors the stride grid.
    """
    rate = int(rate)
    if rate < 1:
        raise ValueError(f"subsample rate must be >= 1, got {rate}")
    frames, gh, gw = (int(x) for x in grid_dims)
    if frames < 1 or gh < 1 or gw < 1:
        raise ValueError(f"bad token grid dims {grid_dims}")
    keys = np.asarray(keys, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if keys.ndim != 2 or values.ndim != 2:
        raise ValueError("keys/values must be 2-D token-major matrices")
    if keys.shape[0] != frames * gh * gw or values.shape[0] != frames * gh * gw:
        raise ValueError(
            f"token count mismatch: grid implies {frames * gh * gw} rows, "
            f"got keys {keys.shape[0]} / values {values.shape[0]}"
        )
    token_index = np.arange(frames * gh * gw).reshape(frames, gh, gw)
    kept = token_index[:, ::rate, ::rate].reshape(-1)
    return InjectedKV(keys=keys[kept], values=values[kept], tag="sap-global")


def aggregate_frame_kv(parts: list[InjectedKV]) -> InjectedKV:
    """Concatenate per-tile contributions, in the order given (ascending m)."""
    if not parts:
        raise ValueError("nothing to aggregate")
    tag = parts[0].tag
    d_k = parts[0].keys.shape[1]
    d_v = parts[0].values.shape[1]
    for p in parts:
        if p.tag != tag:
            raise ValueError(f"mixed origin tags: {tag!r} vs {p.tag!r}")
        if p.keys.shape[1] != d_k or p.values.shape[1] != d_v:
            raise ValueError("aggregated parts disagree on feature dims")
    return InjectedKV(
        keys=np.concatenate([p.keys for p in parts], axis=0),
        values=np.concatenate([p.values for p in parts], axis=0),
        tag=tag,
    )


def select_tap_frames(keys_by_frame: list[np.ndarray], count: int) -> list[int]:
    """Indices of the `count` frames whose keys have the largest standard
    deviation (population std over all entries). Ties go to the lower frame
    index; the result is ascending."""
    count = int(count)
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if count > len(keys_by_frame):
        raise ValueError(f"count {count} exceeds frame count {len(keys_by_frame)}")
    stds = np.array([float(np.std(np.asarray(k, dtype=np.float64))) for k in keys_by_frame])
    if not np.all(np.isfinite(stds)):
        raise ValueError("non-finite key statistics")
    # stable sort on descending std keeps lower indices first among ties
    order = np.argsort(-stds, kind="stable")[:count]
    return sorted(int(i) for i in order)
