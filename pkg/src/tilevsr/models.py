"""Deterministic stand-in models: an analytic Gaussian denoiser with a
closed-form ODE solution, a small attention denoiser with hookable layers,
and a linear low-pass codec. All weights come from seeded generators, so the
same construction arguments always give the same forward pass.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import InjectedKV, extend_kv, scaled_scores, softmax_rows
from .sampler import precondition


@dataclass
class LayerHook:
    """Attention-kernel override for one spatial layer.

    identity short-circuits to the value matrix (query-key scores replaced by
    the identity); otherwise injected rows extend K/V and gamma > 0 tempers
    the score denominator. identity ignores injections: it needs the tile's
    own value rows.
    """

    injected: InjectedKV | None = None
    gamma: float = 0.0
    identity: bool = False

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


@dataclass
class DenoiseResult:
    denoised: np.ndarray
    keys: dict = field(default_factory=dict)     # layer -> (frames * tokens, d)
    values: dict = field(default_factory=dict)   # layer -> (frames * tokens, d)
    attn_scores: dict = field(default_factory=dict)  # layer -> (frames, gh, gw)
    token_grid: tuple = (0, 0, 0)  # (frames, gh, gw)


@dataclass
class AnalyticGaussianDenoiser:
    """Exact posterior mean under an isotropic Gaussian data prior N(mu, sd^2).

    D(x; sigma) = (sd^2 * x + sigma^2 * mu) / (sd^2 + sigma^2). Along the
    probability-flow ODE this gives the closed-form trajectory
    x(s_b) = mu + (x(s_a) - mu) * sqrt((s_b^2 + sd^2) / (s_a^2 + sd^2)).
    """

    mu: float = 0.0
    sigma_data: float = 0.5

    hook_layers: tuple = ()
    cond_vector = None

    def __post_init__(self):
        if self.sigma_data <= 0:
            raise ValueError(f"sigma_data must be > 0, got {self.sigma_data}")

    def denoise(self, x, c=None, sigma: float = 1.0, hooks=None,
                collect_kv: bool = False, collect_attention: bool = False) -> DenoiseResult:
        x = np.asarray(x, dtype=np.float64)
        if hooks:
            raise ValueError("analytic denoiser has no hookable layers")
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        if sigma == 0:
            return DenoiseResult(denoised=x.copy())
        d2 = self.sigma_data * self.sigma_data
        s2 = sigma * sigma
        return DenoiseResult(denoised=(d2 * x + s2 * self.mu) / (d2 + s2))

    def closed_form(self, x_start, sigma_start: float, sigma_end: float):
        """Exact ODE solution from sigma_start down to sigma_end."""
        x_start = np.asarray(x_start, dtype=np.float64)
        d2 = self.sigma_data * self.sigma_data
        ratio = np.sqrt((sigma_end * sigma_end + d2) / (sigma_start * sigma_start + d2))
        return self.mu + (x_start - self.mu) * ratio


def _sinusoid(n_pos: int, dims: int) -> np.ndarray:
    pos = np.arange(n_pos, dtype=np.float64)[:, None]
    i = np.arange(dims, dtype=np.float64)[None, :]
    freq = 1.0 / (100.0 ** (np.floor(i / 2.0) * 2.0 / max(dims, 1)))
    ang = pos * freq
    return np.where(np.arange(dims)[None, :] % 2 == 0, np.sin(ang), np.cos(ang))


class ToyAttentionDenoiser:
    """Patch-token denoiser with hookable per-frame spatial attention.

    Layout: patch embedding with sinusoidal spatial position features, then
    `spatial_layers` self-attention blocks over each frame's tokens (these
    are the hookable ones), one attention block mixing tokens across frames,
    and a linear patch decoder. The network output feeds the standard
    skip/out preconditioning, so the object behaves as a denoiser D(x; sigma).

    Frames carry no positional encoding and the temporal block is plain
    attention, so the model is equivariant to frame permutations. Residual
    updates pass through tanh, keeping outputs bounded on bounded inputs.
    """

    def __init__(self, seed: int = 1234, channels: int = 3, patch_size: int = 4,
                 embed_dim: int = 32, spatial_layers: int = 4, cond_dim: int = 8,
                 sigma_data: float = 0.5, cond_vector=None):
        if spatial_layers < 4:
            raise ValueError(f"need >= 4 spatial layers for first-two/last-two hooks, got {spatial_layers}")
        if patch_size < 1 or channels < 1 or cond_dim < 1:
            raise ValueError("channels, patch_size, cond_dim must be >= 1")
        if embed_dim < 2 or embed_dim % 2 != 0:
            raise ValueError(f"embed_dim must be even and >= 2, got {embed_dim}")
        if sigma_data <= 0:
            raise ValueError(f"sigma_data must be > 0, got {sigma_data}")
        self.seed = int(seed)
        self.channels = int(channels)
        self.patch_size = int(patch_size)
        self.embed_dim = int(embed_dim)
        self.spatial_layers = int(spatial_layers)
        self.cond_dim = int(cond_dim)
        self.sigma_data = float(sigma_data)

        rng = np.random.default_rng(self.seed)
        d = self.embed_dim
        patch_dim = self.channels * self.patch_size * self.patch_size
        self.w_embed = rng.normal(0.0, 0.5 / np.sqrt(patch_dim), (patch_dim, d))
        self.v_noise = rng.normal(0.0, 0.1, (d,))
        self.w_cond = rng.normal(0.0, 0.1, (self.cond_dim, d))
        scale = 1.0 / np.sqrt(d)
        self.layers = [
            tuple(rng.normal(0.0, scale, (d, d)) for _ in range(4))  # wq, wk, wv, wo
            for _ in range(self.spatial_layers)
        ]
        self.temporal = tuple(rng.normal(0.0, scale, (d, d)) for _ in range(4))
        self.w_out = rng.normal(0.0, 0.5 / np.sqrt(d), (d, patch_dim))
        if cond_vector is None:
            self.cond_vector = rng.normal(0.0, 1.0, (self.cond_dim,))
        else:
            self.cond_vector = np.asarray(cond_vector, dtype=np.float64)
            if self.cond_vector.shape != (self.cond_dim,):
                raise ValueError(f"cond_vector must have shape ({self.cond_dim},)")

        first_last = [0, 1, self.spatial_layers - 2, self.spatial_layers - 1]
        self.hook_layers = tuple(sorted(set(first_last)))

    def _patchify(self, x: np.ndarray) -> np.ndarray:
        f, c, h, w = x.shape
        p = self.patch_size
        gh, gw = h // p, w // p
        return (
            x.reshape(f, c, gh, p, gw, p)
            .transpose(0, 2, 4, 1, 3, 5)
            .reshape(f, gh * gw, c * p * p)
        )

    def _unpatchify(self, tokens: np.ndarray, gh: int, gw: int) -> np.ndarray:
        f = tokens.shape[0]
        p = self.patch_size
        c = self.channels
        return (
            tokens.reshape(f, gh, gw, c, p, p)
            .transpose(0, 3, 1, 4, 2, 5)
            .reshape(f, c, gh * p, gw * p)
        )

    def _positions(self, gh: int, gw: int) -> np.ndarray:
        half = self.embed_dim // 2
        rows = _sinusoid(gh, half)
        cols = _sinusoid(gw, self.embed_dim - half)
        return np.concatenate(
            [np.repeat(rows, gw, axis=0), np.tile(cols, (gh, 1))], axis=1
        )

    def denoise(self, x, c=None, sigma: float = 1.0, hooks=None,
                collect_kv: bool = False, collect_attention: bool = False) -> DenoiseResult:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4:
            raise ValueError(f"expected (frames, channels, h, w), got shape {x.shape}")
        f, ch, h, w = x.shape
        if ch != self.channels:
            raise ValueError(f"denoiser built for {self.channels} channels, got {ch}")
        p = self.patch_size
        if h % p != 0 or w % p != 0 or h < p or w < p:
            raise ValueError(f"spatial dims {h}x{w} must be positive multiples of patch size {p}")
        if not np.all(np.isfinite(x)):
            raise ValueError("input contains non-finite values")
        hooks = hooks or {}
        for layer in hooks:
            if not 0 <= layer < self.spatial_layers:
                raise ValueError(f"hook on unknown layer {layer}; model has {self.spatial_layers} spatial layers")

        pre = precondition(sigma, self.sigma_data)
        gh, gw = h // p, w // p
        n_tok = gh * gw
        tok = self._patchify(pre.c_in * x) @ self.w_embed
        tok = tok + 0.1 * self._positions(gh, gw)[None]
        tok = tok + pre.c_noise * self.v_noise
        if c is not None:
            c = np.asarray(c, dtype=np.float64)
            if c.shape != (self.cond_dim,):
                raise ValueError(f"conditioning must have shape ({self.cond_dim},), got {c.shape}")
            if np.any(c):
                tok = tok + c @ self.w_cond

        keys_out: dict = {}
        values_out: dict = {}
        attn_out: dict = {}
        for idx, (wq, wk, wv, wo) in enumerate(self.layers):
            q = tok @ wq
            k = tok @ wk
            v = tok @ wv
            if collect_kv:
                keys_out[idx] = k.reshape(f * n_tok, self.embed_dim).copy()
                values_out[idx] = v.reshape(f * n_tok, self.embed_dim).copy()
            hook = hooks.get(idx)
            if hook is not None and hook.identity:
                out = v.copy()
                if collect_attention:
                    attn_out[idx] = np.full((f, gh, gw), 1.0 / n_tok)
            else:
                inj = hook.injected if hook is not None else None
                gamma = hook.gamma if hook is not None else 0.0
                k2, v2 = extend_kv(k, v, inj)
                weights = softmax_rows(scaled_scores(q, k2, gamma))
                out = weights @ v2
                if collect_attention:
                    # mean attention weight received by each of the tile's own tokens
                    attn_out[idx] = weights[..., :n_tok].mean(axis=-2).reshape(f, gh, gw)
            tok = tok + np.tanh(out @ wo) * 0.5

        twq, twk, twv, two = self.temporal
        tt = tok.transpose(1, 0, 2)  # (tokens, frames, d)
        out_t = softmax_rows(scaled_scores(tt @ twq, tt @ twk, 0.0)) @ (tt @ twv)
        tok = tok + np.tanh(out_t @ two).transpose(1, 0, 2) * 0.5

        raw = self._unpatchify(tok @ self.w_out, gh, gw)
        denoised = pre.c_skip * x + pre.c_out * raw
        return DenoiseResult(
            denoised=denoised,
            keys=keys_out,
            values=values_out,
            attn_scores=attn_out,
            token_grid=(f, gh, gw),
        )


@dataclass
class ToyCodec:
    """Linear spatial codec: power-of-two box low-pass down, nearest up.

    encode halves each spatial axis log2(factor) times by averaging adjacent
    pairs ((a + b) / 2 taps), which keeps constants exact; decode replicates
    each latent pixel factor x factor. factor = 1 is the identity.
    """

    factor: int = 8

    def __post_init__(self):
        f = int(self.factor)
        if f < 1 or (f & (f - 1)) != 0:
            raise ValueError(f"codec factor must be a power of two >= 1, got {self.factor}")
        self.factor = f

    def encode(self, video: np.ndarray) -> np.ndarray:
        x = np.asarray(video, dtype=np.float64)
        if x.ndim != 4:
            raise ValueError(f"expected (frames, channels, h, w), got shape {x.shape}")
        f = self.factor
        if x.shape[-2] % f != 0 or x.shape[-1] % f != 0:
            raise ValueError(f"spatial dims {x.shape[-2]}x{x.shape[-1]} not divisible by factor {f}")
        out = x.copy()
        steps = int(np.log2(f))
        for _ in range(steps):
            out = (out[..., 0::2, :] + out[..., 1::2, :]) * 0.5
            out = (out[..., :, 0::2] + out[..., :, 1::2]) * 0.5
        return out

    def decode(self, latent: np.ndarray) -> np.ndarray:
        z = np.asarray(latent, dtype=np.float64)
        if z.ndim != 4:
            raise ValueError(f"expected (frames, channels, h, w), got shape {z.shape}")
        f = self.factor
        if f == 1:
            return z.copy()
        return np.repeat(np.repeat(z, f, axis=-2), f, axis=-1)
