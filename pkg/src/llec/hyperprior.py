"""Learned entropy model for occupancy tiles.

Encoder MLP: FC(512->64)+BN+ELU, FC(64->32)+BN+ELU, FC(32->8)+tanh, mapping a
tile of occupancy bytes (scaled to [0, 1]) to a latent in [-1, 1]^8.  The
latent is scalar-quantized to 64 evenly spaced levels in [-1, 1] (hard
nearest-neighbor at inference, a softmax-weighted soft surrogate during
training).  Decoder MLP: FC(8->72)+BN+ELU, FC(72->256)+softmax, producing one
256-way occupancy-byte distribution shared by all positions of the tile.

Everything is plain numpy with explicit backprop so gradients can be checked
against finite differences.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

NUM_SYMBOLS = 256
TILE_SIZE = 512
LATENT_SIZE = 8
NUM_LEVELS = 64
SIGMA_Q = 2.0
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
LN2 = float(np.log(2.0))

MODEL_MAGIC = b"LLMF"


class ModelCorruptionError(ValueError):
    """Non-finite weights or a damaged model file."""


@dataclass
class Tile:
    """N occupancy-byte symbols; positions >= valid_count are zero padding
    (real occupancy bytes are never zero, so padding is unambiguous)."""

    symbols: np.ndarray  # (N,) uint8
    valid_count: int

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.uint8)
        if self.valid_count < 0 or self.valid_count > len(self.symbols):
            raise ValueError("valid_count outside [0, N]")
        if (self.symbols[self.valid_count:] != 0).any():
            raise ValueError("padding symbols must be zero")


def quantization_levels(num_levels: int = NUM_LEVELS) -> np.ndarray:
    """Evenly spaced levels l_j = -1 + 2j/(L-1) over [-1, 1]."""
    return np.linspace(-1.0, 1.0, num_levels)


def quantize_hard(z: np.ndarray, num_levels: int = NUM_LEVELS) -> np.ndarray:
    """Nearest-level indices; exact midpoints round toward the lower index.

    Computed analytically on the uniform grid so the midpoint tie (e.g.
    z = 0 between levels 31 and 32) resolves exactly, independent of the
    rounding of the level values themselves.
    """
    u = (np.asarray(z, dtype=np.float64) + 1.0) * (num_levels - 1) / 2.0
    idx = np.ceil(u - 0.5).astype(np.int64)  # half-integers round down
    return np.clip(idx, 0, num_levels - 1)


def dequantize(indices: np.ndarray, num_levels: int = NUM_LEVELS) -> np.ndarray:
    indices = np.asarray(indices)
    if indices.min(initial=0) < 0 or indices.max(initial=0) >= num_levels:
        raise ValueError(f"index outside [0, {num_levels})")
    return quantization_levels(num_levels)[indices]


def quantize_soft(z: np.ndarray, sigma_q: float = SIGMA_Q,
                  num_levels: int = NUM_LEVELS) -> np.ndarray:
    """Differentiable surrogate: softmax(-sigma_q * |z - l_j|) weighted levels."""
    if sigma_q <= 0:
        raise ValueError("sigma_q must be positive")
    out, _ = _soft_quantize_cached(np.asarray(z, dtype=np.float64), sigma_q, num_levels)
    return out


def _soft_quantize_cached(z, sigma_q, num_levels):
    levels = quantization_levels(num_levels)
    d = z[..., None] - levels
    a = -sigma_q * np.abs(d)
    a -= a.max(axis=-1, keepdims=True)
    w = np.exp(a)
    w /= w.sum(axis=-1, keepdims=True)
    out = w @ levels
    return out, (w, np.sign(d), levels, sigma_q, out)


def _soft_quantize_backward(dout, cache):
    w, sgn, levels, sigma_q, out = cache
    # d out / d z = -sigma * (sum_j w_j l_j sgn_j - out * sum_j w_j sgn_j)
    wl_s = (w * levels * sgn).sum(axis=-1)
    w_s = (w * sgn).sum(axis=-1)
    return dout * (-sigma_q) * (wl_s - out * w_s)


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def _softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class HyperpriorModel:
    """Encoder/quantizer/decoder parameter container with forward/backward.

    Widths are configurable so gradient checks can run on a reduced model;
    the codec uses the defaults.
    """

    def __init__(self, tile_size: int = TILE_SIZE, latent_size: int = LATENT_SIZE,
                 encoder_hidden: tuple[int, ...] = (64, 32),
                 decoder_hidden: tuple[int, ...] = (72,),
                 num_levels: int = NUM_LEVELS, sigma_q: float = SIGMA_Q,
                 seed: int = 0):
        self.tile_size = tile_size
        self.latent_size = latent_size
        self.encoder_hidden = tuple(encoder_hidden)
        self.decoder_hidden = tuple(decoder_hidden)
        self.num_levels = num_levels
        self.sigma_q = float(sigma_q)
        self.enc_dims = [tile_size, *encoder_hidden, latent_size]
        self.dec_dims = [latent_size, *decoder_hidden, NUM_SYMBOLS]
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        rng = np.random.default_rng(seed)
        self._init_side("enc", self.enc_dims, rng)
        self._init_side("dec", self.dec_dims, rng)

    def _init_side(self, side, dims, rng):
        # uniform fan-in scaling, +-1/sqrt(fan_in); BN after every hidden FC
        for i in range(len(dims) - 1):
            k = 1.0 / np.sqrt(dims[i])
            self.params[f"{side}{i}_W"] = rng.uniform(-k, k, size=(dims[i], dims[i + 1]))
            self.params[f"{side}{i}_b"] = rng.uniform(-k, k, size=dims[i + 1])
            if i < len(dims) - 2:
                self.params[f"{side}_bn{i}_gamma"] = np.ones(dims[i + 1])
                self.params[f"{side}_bn{i}_beta"] = np.zeros(dims[i + 1])
                self.buffers[f"{side}_bn{i}_mean"] = np.zeros(dims[i + 1])
                self.buffers[f"{side}_bn{i}_var"] = np.ones(dims[i + 1])

    # ---- forward passes -------------------------------------------------

    def _check_finite(self):
        for name, arr in self.params.items():
            if not np.isfinite(arr).all():
                raise ModelCorruptionError(f"non-finite values in parameter {name}")

    def _mlp_forward(self, h, side, dims, training, caches=None):
        for i in range(len(dims) - 2):
            W, b = self.params[f"{side}{i}_W"], self.params[f"{side}{i}_b"]
            gamma = self.params[f"{side}_bn{i}_gamma"]
            beta = self.params[f"{side}_bn{i}_beta"]
            a = h @ W + b
            if training:
                mu = a.mean(axis=0)
                var = a.var(axis=0)
                inv = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (a - mu) * inv
                self.buffers[f"{side}_bn{i}_mean"] *= 1.0 - BN_MOMENTUM
                self.buffers[f"{side}_bn{i}_mean"] += BN_MOMENTUM * mu
                self.buffers[f"{side}_bn{i}_var"] *= 1.0 - BN_MOMENTUM
                self.buffers[f"{side}_bn{i}_var"] += BN_MOMENTUM * var
            else:
                mu = self.buffers[f"{side}_bn{i}_mean"]
                inv = 1.0 / np.sqrt(self.buffers[f"{side}_bn{i}_var"] + BN_EPS)
                xhat = (a - mu) * inv
            bn = gamma * xhat + beta
            out = _elu(bn)
            if caches is not None:
                caches.append((h, xhat, inv, bn))
            h = out
        i = len(dims) - 2
        W, b = self.params[f"{side}{i}_W"], self.params[f"{side}{i}_b"]
        a = h @ W + b
        if caches is not None:
            caches.append((h, None, None, None))
        return a

    def encode(self, symbols: np.ndarray, training: bool = False,
               caches=None) -> np.ndarray:
        """Tile symbols (B, N) or (N,) -> latent in [-1, 1]^M."""
        x = np.atleast_2d(np.asarray(symbols, dtype=np.float64)) / 255.0
        pre = self._mlp_forward(x, "enc", self.enc_dims, training, caches)
        z = np.tanh(pre)
        if not np.isfinite(z).all():
            raise ModelCorruptionError("non-finite encoder output")
        return z

    def decode(self, zq: np.ndarray, training: bool = False,
               caches=None) -> np.ndarray:
        """Quantized latent values (B, M) or (M,) -> (B, 256) distributions."""
        h = np.atleast_2d(np.asarray(zq, dtype=np.float64))
        logits = self._mlp_forward(h, "dec", self.dec_dims, training, caches)
        probs = _softmax(logits)
        if not np.isfinite(probs).all():
            raise ModelCorruptionError("non-finite decoder output")
        return probs

    # ---- training pass ---------------------------------------------------

    def _mlp_backward(self, dout, side, dims, caches, grads):
        n_layers = len(dims) - 1
        for i in reversed(range(n_layers)):
            h, xhat, inv, bn = caches[i]
            if i == n_layers - 1:
                da = dout
            else:
                dbn = dout * _elu_grad(bn)
                gamma = self.params[f"{side}_bn{i}_gamma"]
                grads[f"{side}_bn{i}_gamma"] = (dbn * xhat).sum(axis=0)
                grads[f"{side}_bn{i}_beta"] = dbn.sum(axis=0)
                dxhat = dbn * gamma
                B = dxhat.shape[0]
                da = (inv / B) * (B * dxhat - dxhat.sum(axis=0)
                                  - xhat * (dxhat * xhat).sum(axis=0))
            W = self.params[f"{side}{i}_W"]
            grads[f"{side}{i}_W"] = h.T @ da
            grads[f"{side}{i}_b"] = da.sum(axis=0)
            dout = da @ W.T
        return dout

    def forward_backward(self, symbols: np.ndarray):
        """Training step forward (soft quantizer, batch-stat BN) + full backprop.

        Returns (loss in mean bits per symbol, gradient dict).  The batch is
        assumed padding-free (training tiles are always full).
        """
        batch = np.atleast_2d(np.asarray(symbols, dtype=np.int64))
        B, N = batch.shape
        if B == 0:
            raise ValueError("empty batch")
        enc_caches, dec_caches = [], []
        z = self.encode(batch, training=True, caches=enc_caches)
        zq, sq_cache = _soft_quantize_cached(z, self.sigma_q, self.num_levels)
        probs = self.decode(zq, training=True, caches=dec_caches)

        counts = np.zeros((B, NUM_SYMBOLS))
        np.add.at(counts, (np.arange(B)[:, None], batch), 1.0)
        loss = float(-(counts * np.log2(probs)).sum() / (B * N))

        grads: dict[str, np.ndarray] = {}
        dlogits = (N * probs - counts) / (B * N * LN2)
        dzq = self._mlp_backward(dlogits, "dec", self.dec_dims, dec_caches, grads)
        dz = _soft_quantize_backward(dzq, sq_cache)
        dpre = dz * (1.0 - z * z)
        dx = self._mlp_backward(dpre, "enc", self.enc_dims, enc_caches, grads)
        del dx  # input gradient unused
        return loss, grads

    # ---- complexity accounting -------------------------------------------

    def _side_param_count(self, side, dims):
        total = 0
        for i in range(len(dims) - 1):
            total += dims[i] * dims[i + 1] + dims[i + 1]
            if i < len(dims) - 2:
                total += 2 * dims[i + 1]  # BN affine
        return total

    def encoder_parameter_count(self) -> int:
        return self._side_param_count("enc", self.enc_dims)

    def decoder_parameter_count(self) -> int:
        return self._side_param_count("dec", self.dec_dims)

    def encoder_mac_count(self) -> int:
        return sum(a * b for a, b in zip(self.enc_dims[:-1], self.enc_dims[1:]))

    def decoder_mac_count(self) -> int:
        return sum(a * b for a, b in zip(self.dec_dims[:-1], self.dec_dims[1:]))

    # ---- serialization ----------------------------------------------------

    def _array_names(self) -> list[str]:
        names = []
        for side, dims in (("enc", self.enc_dims), ("dec", self.dec_dims)):
            for i in range(len(dims) - 1):
                names += [f"{side}{i}_W", f"{side}{i}_b"]
                if i < len(dims) - 2:
                    names += [f"{side}_bn{i}_gamma", f"{side}_bn{i}_beta",
                              f"{side}_bn{i}_mean", f"{side}_bn{i}_var"]
        return names

    def _array(self, name) -> np.ndarray:
        return self.params[name] if name in self.params else self.buffers[name]

    def to_bytes(self) -> bytes:
        blob = b"".join(self._array(n).astype("<f4").tobytes()
                        for n in self._array_names())
        header = {
            "format_version": 1,
            "tile_size": self.tile_size,
            "latent_size": self.latent_size,
            "encoder_hidden": list(self.encoder_hidden),
            "decoder_hidden": list(self.decoder_hidden),
            "num_levels": self.num_levels,
            "sigma_q": self.sigma_q,
            "arrays": [[n, list(self._array(n).shape)] for n in self._array_names()],
            "blob_sha256": hashlib.sha256(blob).hexdigest(),
        }
        hj = json.dumps(header, sort_keys=True).encode()
        return MODEL_MAGIC + struct.pack("<I", len(hj)) + hj + blob

    @classmethod
    def from_bytes(cls, data: bytes) -> "HyperpriorModel":
        if data[:4] != MODEL_MAGIC:
            raise ModelCorruptionError("bad model file magic")
        (hlen,) = struct.unpack_from("<I", data, 4)
        header = json.loads(data[8:8 + hlen])
        model = cls(tile_size=header["tile_size"], latent_size=header["latent_size"],
                    encoder_hidden=tuple(header["encoder_hidden"]),
                    decoder_hidden=tuple(header["decoder_hidden"]),
                    num_levels=header["num_levels"], sigma_q=header["sigma_q"])
        blob = data[8 + hlen:]
        if hashlib.sha256(blob).hexdigest() != header["blob_sha256"]:
            raise ModelCorruptionError("model weight blob checksum mismatch")
        pos = 0
        for name, shape in header["arrays"]:
            size = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(blob, dtype="<f4", count=size, offset=pos)
            pos += size * 4
            arr = arr.reshape(shape).astype(np.float64)
            if not np.isfinite(arr).all():
                raise ModelCorruptionError(f"non-finite values in {name}")
            if name in model.params:
                model.params[name] = arr
            else:
                model.buffers[name] = arr
        if pos != len(blob):
            raise ModelCorruptionError("model weight blob has trailing bytes")
        return model

    def snap_to_float32(self) -> None:
        """Round parameters to their serialized float32 values in place, so an
        in-memory model matches its on-disk twin bit for bit."""
        for d in (self.params, self.buffers):
            for k in d:
                d[k] = d[k].astype(np.float32).astype(np.float64)

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "HyperpriorModel":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    def digest(self) -> bytes:
        """16-byte identity of the serialized weights."""
        return hashlib.md5(self.to_bytes()).digest()

    def copy_state(self) -> dict:
        return {"params": {k: v.copy() for k, v in self.params.items()},
                "buffers": {k: v.copy() for k, v in self.buffers.items()}}

    def load_state(self, state: dict) -> None:
        self.params = {k: v.copy() for k, v in state["params"].items()}
        self.buffers = {k: v.copy() for k, v in state["buffers"].items()}


# ---- single-tile convenience wrappers ---------------------------------------


def encode_tile(model: HyperpriorModel, tile: Tile) -> np.ndarray:
    """Inference-path latent code for one tile."""
    model._check_finite()
    return model.encode(tile.symbols)[0]


def decode_probs(model: HyperpriorModel, indices: np.ndarray) -> np.ndarray:
    """Inference-path 256-way distribution from quantized latent indices."""
    model._check_finite()
    zq = dequantize(indices, model.num_levels)
    return model.decode(zq)[0]


def tile_rate_loss(dist: np.ndarray, tile: Tile) -> float:
    """Ideal code length in bits over the tile's valid (non-padding) symbols."""
    dist = np.asarray(dist, dtype=np.float64)
    syms = np.asarray(tile.symbols[:tile.valid_count], dtype=np.int64)
    return float(-np.log2(dist[syms]).sum())


def inference_bits_per_symbol(model: HyperpriorModel, tiles: np.ndarray) -> float:
    """Mean ideal bits/symbol of full tiles under the deployed inference path
    (hard quantizer, BN running statistics)."""
    tiles = np.atleast_2d(np.asarray(tiles, dtype=np.int64))
    z = model.encode(tiles)
    zq = dequantize(quantize_hard(z, model.num_levels), model.num_levels)
    probs = model.decode(zq)
    bits = -np.log2(probs[np.arange(len(tiles))[:, None], tiles]).sum()
    return float(bits / tiles.size)
