"""Gesture network: point-cloud autoencoder plus recurrent classifier.

Architecture per frame: learned input transform, three dynamic-graph edge
convolutions (widths 64/64/128) whose multi-scale outputs are concatenated
and max-pooled into a 136-d latent, and a decoder (17 pseudo-points x 8
features, two edge convolutions, one fully connected layer) reconstructing
a 17x3 skeleton. Per recording: the 30 frame latents feed two bidirectional
gated recurrent layers (64 units per direction); the concatenated final
states pass through FC 128->64 (the metric-learning embedding) and FC 64->5
(class logits).

Feature normalization is part of the model contract and is applied
identically at train and eval time: x, y, z are divided by 3 m, Doppler by
5 m/s, intensity by the frame's max intensity (0 for empty frames).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (
    ParamStore,
    Tensor,
    concat,
    leaky_relu,
    matmul,
    mse_loss,
    reshape,
    sigmoid,
    tanh,
)
from .graphnet import EdgeConvSpec, TNetSpec, column_max, edge_conv, input_transform

__all__ = ["ModelConfig", "RadarGestureNet", "normalize_cloud"]

SEQUENCE_LENGTH = 30


@dataclass
class ModelConfig:
    n_points: int = 64
    in_dim: int = 5
    k: int = 3
    tnet_width: int = 32
    enc_widths: tuple[int, ...] = (64, 64, 128)
    latent_dim: int = 136
    dec_points: int = 17
    dec_feat: int = 8
    dec_widths: tuple[int, ...] = (64, 64)
    lstm_units: int = 64
    embed_dim: int = 64
    n_classes: int = 5
    seq_len: int = SEQUENCE_LENGTH
    alpha: float = 0.2
    mask_padded: bool = False
    norm_xyz: float = 3.0
    norm_doppler: float = 5.0

    def __post_init__(self):
        if self.dec_points * self.dec_feat != self.latent_dim:
            raise ValueError(
                f"latent_dim {self.latent_dim} must factor into "
                f"{self.dec_points} x {self.dec_feat} decoder pseudo-points"
            )


def normalize_cloud(clouds: np.ndarray, cfg: ModelConfig | None = None) -> np.ndarray:
    """Scale (..., n, 5) clouds into network units; see module docstring."""
    if cfg is None:
        cfg = ModelConfig()
    clouds = np.asarray(clouds, dtype=np.float64)
    out = clouds.copy()
    out[..., 0:3] /= cfg.norm_xyz
    out[..., 3] /= cfg.norm_doppler
    peak = clouds[..., 4].max(axis=-1, keepdims=True)
    out[..., 4] = np.where(peak > 0.0, clouds[..., 4] / np.where(peak > 0.0, peak, 1.0), 0.0)
    return out


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def lstm_direction(x_seq: Tensor, wx: Tensor, wh: Tensor, b: Tensor, reverse: bool) -> Tensor:
    """One gated recurrent direction over (B, T, In) -> hidden states (B, T, H).

    Standard cell, gate order (input, forget, candidate, output): sigmoid
    gates, tanh candidate, zero initial state. Fused node: the whole unroll
    and its backpropagation-through-time run outside the tape, so a step
    costs a handful of ops instead of hundreds.
    """
    xd, wxd, whd, bd = x_seq.data, wx.data, wh.data, b.data
    batch, steps, in_dim = xd.shape
    units = whd.shape[0]
    order = range(steps - 1, -1, -1) if reverse else range(steps)

    xproj = (xd.reshape(batch * steps, in_dim) @ wxd).reshape(batch, steps, 4 * units) + bd
    hs = np.empty((batch, steps, units))
    gates_i = np.empty((steps, batch, units))
    gates_f = np.empty_like(gates_i)
    gates_g = np.empty_like(gates_i)
    gates_o = np.empty_like(gates_i)
    cells = np.empty_like(gates_i)
    tanh_c = np.empty_like(gates_i)
    h_prev = np.empty_like(gates_i)
    h = np.zeros((batch, units))
    c = np.zeros((batch, units))
    for si, t in enumerate(order):
        h_prev[si] = h
        z = xproj[:, t] + h @ whd
        i_g = _sigmoid(z[:, :units])
        f_g = _sigmoid(z[:, units : 2 * units])
        g_c = np.tanh(z[:, 2 * units : 3 * units])
        o_g = _sigmoid(z[:, 3 * units :])
        c = f_g * c + i_g * g_c
        tc = np.tanh(c)
        h = o_g * tc
        gates_i[si], gates_f[si], gates_g[si], gates_o[si] = i_g, f_g, g_c, o_g
        cells[si], tanh_c[si] = c, tc
        hs[:, t] = h

    def back(g_hs):
        dwx = np.zeros_like(wxd)
        dwh = np.zeros_like(whd)
        db = np.zeros_like(bd)
        dx = np.zeros_like(xd)
        dh_next = np.zeros((batch, units))
        dc_next = np.zeros((batch, units))
        dz = np.empty((batch, 4 * units))
        for si in range(steps - 1, -1, -1):
            t = order[si]
            i_g, f_g, g_c, o_g = gates_i[si], gates_f[si], gates_g[si], gates_o[si]
            tc = tanh_c[si]
            c_prev = cells[si - 1] if si > 0 else np.zeros((batch, units))
            dh = g_hs[:, t] + dh_next
            do = dh * tc
            dc = dc_next + dh * o_g * (1.0 - tc * tc)
            dz[:, :units] = (dc * g_c) * i_g * (1.0 - i_g)
            dz[:, units : 2 * units] = (dc * c_prev) * f_g * (1.0 - f_g)
            dz[:, 2 * units : 3 * units] = (dc * i_g) * (1.0 - g_c * g_c)
            dz[:, 3 * units :] = do * o_g * (1.0 - o_g)
            dc_next = dc * f_g
            dh_next = dz @ whd.T
            db += dz.sum(axis=0)
            dwh += h_prev[si].T @ dz
            dwx += xd[:, t].T @ dz
            dx[:, t] = dz @ wxd.T
        return dx, dwx, dwh, db

    from .engine.tensor import make_op

    return make_op(hs, (x_seq, wx, wh, b), back)


class _LstmDirection:
    """Parameters of one gated recurrent direction (gate order i, f, g, o)."""

    def __init__(self, store: ParamStore, prefix: str, in_dim: int, units: int, rng):
        self.units = units
        self.wx = store.add(f"{prefix}.wx", _glorot(rng, in_dim, 4 * units))
        self.wh = store.add(f"{prefix}.wh", _glorot(rng, units, 4 * units))
        bias = np.zeros(4 * units)
        bias[units : 2 * units] = 1.0  # forget-gate bias keeps early memory open
        self.b = store.add(f"{prefix}.b", bias)

    def run(self, x_seq: Tensor, reverse: bool) -> Tensor:
        return lstm_direction(x_seq, self.wx, self.wh, self.b, reverse)


class RadarGestureNet:
    """Full model: parameters live in ``self.store`` under the namespaces
    ``tnet.*``, ``enc.*``, ``dec.*``, ``cls.*``."""

    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0):
        self.cfg = cfg or ModelConfig()
        self.store = ParamStore()
        rng = np.random.default_rng(seed)
        c = self.cfg

        self.tnet = TNetSpec.create(self.store, "tnet", c.in_dim, c.tnet_width, rng, k=c.k, alpha=c.alpha)

        self.enc_blocks: list[EdgeConvSpec] = []
        in_dim = c.in_dim
        for bi, width in enumerate(c.enc_widths, start=1):
            self.enc_blocks.append(
                EdgeConvSpec.create(self.store, f"enc.ec{bi}", in_dim, (width,), rng, alpha=c.alpha)
            )
            in_dim = width
        concat_dim = sum(c.enc_widths)
        self.enc_fc_w = self.store.add("enc.fc.w", _glorot(rng, concat_dim, c.latent_dim))
        self.enc_fc_b = self.store.add("enc.fc.b", np.zeros(c.latent_dim))

        self.dec_blocks: list[EdgeConvSpec] = []
        in_dim = c.dec_feat
        for bi, width in enumerate(c.dec_widths, start=1):
            self.dec_blocks.append(
                EdgeConvSpec.create(self.store, f"dec.ec{bi}", in_dim, (width,), rng, alpha=c.alpha)
            )
            in_dim = width
        flat_dim = c.dec_points * c.dec_widths[-1]
        self.dec_fc_w = self.store.add("dec.fc.w", _glorot(rng, flat_dim, c.dec_points * 3))
        self.dec_fc_b = self.store.add("dec.fc.b", np.zeros(c.dec_points * 3))

        self.lstm = []
        in_dim = c.latent_dim
        for layer in (1, 2):
            fw = _LstmDirection(self.store, f"cls.l{layer}.fw", in_dim, c.lstm_units, rng)
            bw = _LstmDirection(self.store, f"cls.l{layer}.bw", in_dim, c.lstm_units, rng)
            self.lstm.append((fw, bw))
            in_dim = 2 * c.lstm_units
        self.cls_fc1_w = self.store.add("cls.fc1.w", _glorot(rng, 2 * c.lstm_units, c.embed_dim))
        self.cls_fc1_b = self.store.add("cls.fc1.b", np.zeros(c.embed_dim))
        self.cls_fc2_w = self.store.add("cls.fc2.w", _glorot(rng, c.embed_dim, c.n_classes))
        self.cls_fc2_b = self.store.add("cls.fc2.b", np.zeros(c.n_classes))

    # -- per-frame autoencoder ------------------------------------------------

    def encode(self, clouds) -> Tensor:
        """Normalized clouds (B, n, 5) or (n, 5) -> latents (B, 136) / (136,)."""
        t = clouds if isinstance(clouds, Tensor) else Tensor(clouds)
        single = t.ndim == 2
        if single:
            t = reshape(t, (1,) + t.shape)
        c = self.cfg
        if t.shape[1] != c.n_points or t.shape[2] != c.in_dim:
            raise ValueError(f"encode expects (B, {c.n_points}, {c.in_dim}) clouds, got {t.shape}")
        x = input_transform(t, self.tnet, mask_padded=c.mask_padded)
        scales = []
        for spec in self.enc_blocks:
            x = edge_conv(x, spec, c.k, mask_padded=c.mask_padded)
            scales.append(x)
        cat = concat(scales, axis=-1)
        pooled = column_max(cat)
        latent = matmul(pooled, self.enc_fc_w) + self.enc_fc_b
        if single:
            latent = reshape(latent, (c.latent_dim,))
        return latent

    def decode(self, latents) -> Tensor:
        """Latents (B, 136) or (136,) -> skeletons (B, 17, 3) / (17, 3)."""
        t = latents if isinstance(latents, Tensor) else Tensor(latents)
        single = t.ndim == 1
        if single:
            t = reshape(t, (1,) + t.shape)
        c = self.cfg
        b = t.shape[0]
        x = reshape(t, (b, c.dec_points, c.dec_feat))
        for spec in self.dec_blocks:
            x = edge_conv(x, spec, c.k)
        flat = reshape(x, (b, c.dec_points * c.dec_widths[-1]))
        out = matmul(flat, self.dec_fc_w) + self.dec_fc_b
        out = reshape(out, (b, c.dec_points, 3))
        if single:
            out = reshape(out, (c.dec_points, 3))
        return out

    def forward_autoencoder(self, clouds: np.ndarray, targets: np.ndarray) -> tuple[Tensor, Tensor]:
        """Raw clouds + target skeletons -> (reconstruction, scalar MSE)."""
        norm = normalize_cloud(clouds, self.cfg)
        recon = self.decode(self.encode(norm))
        return recon, mse_loss(recon, Tensor(np.asarray(targets, dtype=np.float64)))

    # -- sequence classifier --------------------------------------------------

    def classify_sequence(self, latents) -> tuple[Tensor, Tensor]:
        """Latent sequences (B, 30, 136) or (30, 136) -> (logits, embedding)."""
        t = latents if isinstance(latents, Tensor) else Tensor(latents)
        single = t.ndim == 2
        if single:
            t = reshape(t, (1,) + t.shape)
        c = self.cfg
        if t.shape[1] != c.seq_len:
            raise ValueError(f"classify_sequence expects length-{c.seq_len} sequences, got {t.shape}")
        x = t
        hs_fw = hs_bw = None
        for fw, bw in self.lstm:
            hs_fw = fw.run(x, reverse=False)
            hs_bw = bw.run(x, reverse=True)
            x = concat([hs_fw, hs_bw], axis=-1)
        # final forward state is at t = T-1; the backward direction finishes at t = 0
        merged = concat([hs_fw[:, -1, :], hs_bw[:, 0, :]], axis=-1)
        embedding = leaky_relu(matmul(merged, self.cls_fc1_w) + self.cls_fc1_b, alpha=c.alpha)
        logits = matmul(embedding, self.cls_fc2_w) + self.cls_fc2_b
        if single:
            logits = reshape(logits, (c.n_classes,))
            embedding = reshape(embedding, (c.embed_dim,))
        return logits, embedding

    def forward_full(self, cloud_seqs: np.ndarray) -> tuple[Tensor, Tensor]:
        """Raw cloud sequences (B, 30, n, 5) or (30, n, 5) -> (logits, embedding)."""
        arr = np.asarray(cloud_seqs, dtype=np.float64)
        single = arr.ndim == 3
        if single:
            arr = arr[None]
        c = self.cfg
        if arr.shape[1] != c.seq_len:
            raise ValueError(f"forward_full expects length-{c.seq_len} sequences, got {arr.shape}")
        b = arr.shape[0]
        norm = normalize_cloud(arr, c)
        latents = self.encode(norm.reshape(b * c.seq_len, c.n_points, c.in_dim))
        latents = reshape(latents, (b, c.seq_len, c.latent_dim))
        logits, embedding = self.classify_sequence(latents)
        if single:
            logits = reshape(logits, (c.n_classes,))
            embedding = reshape(embedding, (c.embed_dim,))
        return logits, embedding

    def encode_sequences(self, cloud_seqs: np.ndarray) -> Tensor:
        """Raw cloud sequences (B, 30, n, 5) -> latent sequences (B, 30, 136)."""
        arr = np.asarray(cloud_seqs, dtype=np.float64)
        b = arr.shape[0]
        c = self.cfg
        norm = normalize_cloud(arr, c)
        latents = self.encode(norm.reshape(b * c.seq_len, c.n_points, c.in_dim))
        return reshape(latents, (b, c.seq_len, c.latent_dim))
