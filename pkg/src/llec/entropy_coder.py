"""Integer range coder over quantized CDFs, plus latent bit packing.

The CDF has 16-bit precision (total 65536) with a minimum frequency of 1 per
symbol.  The coder keeps a 32-bit window of a conceptually unbounded low
value: carries ripple back into already-emitted bytes, and renormalization is
byte-wise whenever the range drops below 2**24.  Worst-case overhead over the
ideal code length is the 4 flush bytes plus ~log2(1 + 2**-8) bits/symbol of
truncation, well under the 64-bit budget per 512-symbol tile.
"""

from __future__ import annotations

from bisect import bisect_right

import numpy as np

CDF_TOTAL = 1 << 16
_TOP = 1 << 24
_MASK = 0xFFFFFFFF

LATENT_PACK_BITS = 6  # 64 quantization levels


class DecodeError(ValueError):
    """Payload cannot be decoded with the given CDF."""


def quantize_cdf(probs: np.ndarray) -> np.ndarray:
    """256 probabilities -> 257 strictly increasing cumulative counts.

    Frequencies start at max(1, round(p * 65536)); the excess or deficit is
    then moved one unit at a time at the currently largest frequency (ties to
    the lower symbol index), so encoder and decoder derive identical tables
    from identical probability bytes.
    """
    probs = np.asarray(probs, dtype=np.float64)
    freq = np.maximum(1, np.rint(probs * CDF_TOTAL).astype(np.int64))
    diff = CDF_TOTAL - int(freq.sum())
    while diff > 0:
        s = int(np.argmax(freq))
        freq[s] += 1
        diff -= 1
    while diff < 0:
        s = int(np.argmax(np.where(freq > 1, freq, -1)))
        freq[s] -= 1
        diff += 1
    cum = np.zeros(len(freq) + 1, dtype=np.int64)
    np.cumsum(freq, out=cum[1:])
    return cum


def ac_encode(symbols, cum) -> bytes:
    """Arithmetic-encode symbols under a quantized CDF."""
    cl = cum.tolist() if isinstance(cum, np.ndarray) else list(cum)
    total = cl[-1]
    syms = symbols.tolist() if isinstance(symbols, np.ndarray) else list(symbols)
    out = bytearray()
    low = 0
    rng = _MASK
    for s in syms:
        r = rng // total
        low += cl[s] * r
        rng = (cl[s + 1] - cl[s]) * r
        if rng == 0:
            raise ValueError(f"symbol {s} has zero frequency")
        if low > _MASK:  # carry into already-emitted bytes
            i = len(out) - 1
            while out[i] == 0xFF:
                out[i] = 0
                i -= 1
            out[i] += 1
            low &= _MASK
        while rng < _TOP:
            out.append(low >> 24)
            low = (low << 8) & _MASK
            rng <<= 8
    for _ in range(4):
        out.append(low >> 24)
        low = (low << 8) & _MASK
    return bytes(out)


def ac_decode(payload: bytes, cum, n_symbols: int) -> np.ndarray:
    """Exact inverse of :func:`ac_encode` for the same CDF and symbol count."""
    cl = cum.tolist() if isinstance(cum, np.ndarray) else list(cum)
    total = cl[-1]
    if len(payload) < 4:
        raise DecodeError("payload shorter than the coder flush")
    code = int.from_bytes(payload[:4], "big")
    pos = 4
    low = 0
    rng = _MASK
    out = np.empty(n_symbols, dtype=np.uint8)
    n_payload = len(payload)
    for i in range(n_symbols):
        r = rng // total
        v = ((code - low) & _MASK) // r
        if v >= total:
            v = total - 1
        s = bisect_right(cl, v) - 1
        out[i] = s
        low = (low + cl[s] * r) & _MASK
        rng = (cl[s + 1] - cl[s]) * r
        while rng < _TOP:
            if pos >= n_payload:
                raise DecodeError("payload truncated")
            code = ((code << 8) | payload[pos]) & _MASK
            pos += 1
            low = (low << 8) & _MASK
            rng <<= 8
    return out


def ideal_code_length_bits(symbols, cum) -> float:
    """Sum of -log2(freq/total) over the symbols: the entropy-coder target."""
    cum = np.asarray(cum, dtype=np.int64)
    freq = np.diff(cum)
    syms = np.asarray(symbols, dtype=np.int64)
    return float(-np.log2(freq[syms] / cum[-1]).sum())


def pack_latents(indices) -> bytes:
    """M 6-bit level indices -> ceil(6M/8) bytes, big-endian bit order."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.min(initial=0) < 0 or indices.max(initial=0) >= (1 << LATENT_PACK_BITS):
        raise ValueError("latent index does not fit 6 bits")
    val = 0
    for idx in indices:
        val = (val << LATENT_PACK_BITS) | int(idx)
    nbits = LATENT_PACK_BITS * len(indices)
    nbytes = (nbits + 7) // 8
    val <<= nbytes * 8 - nbits
    return val.to_bytes(nbytes, "big")


def unpack_latents(data: bytes, count: int = 8) -> np.ndarray:
    nbits = LATENT_PACK_BITS * count
    if len(data) != (nbits + 7) // 8:
        raise ValueError(f"expected {(nbits + 7) // 8} bytes for {count} latents")
    val = int.from_bytes(data, "big") >> (len(data) * 8 - nbits)
    out = np.empty(count, dtype=np.int64)
    for i in reversed(range(count)):
        out[i] = val & ((1 << LATENT_PACK_BITS) - 1)
        val >>= LATENT_PACK_BITS
    return out
