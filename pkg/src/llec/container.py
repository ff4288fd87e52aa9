"""End-to-end codec and bitstream container.

Layout (all integers little-endian; see FORMAT.md for the field-by-field
description):

  header   : magic "LLEC" | version u16 | width u16 | height u16 | ts u32
             | segment_count u32 | model_id (16 bytes)
  segment  : segment_index u32 | polarity u8 | min_timestamp u64
             | occupancy_byte_count u32 | tile_count u32 | crc32 u32
             | tile_count * (packed latent 6 bytes | varint payload_len
                             | payload)

Every segment's occupancy bytes are tiled into blocks of the model's tile
size, the last tile zero-padded; padding symbols travel through the
arithmetic coder and are stripped (and verified zero) on decode.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import entropy_coder as ec
from .event_io import EventStream
from .hyperprior import HyperpriorModel, dequantize, quantize_hard
from .octree import OccupancyStream, build_occupancy, compute_depth, decode_occupancy
from .preprocess import (PreprocessConfig, Segment, SegmentKey,
                         reassemble_stream, segment_stream)

MAGIC = b"LLEC"
FORMAT_VERSION = 1
_HEADER_FMT = "<4sHHHII16s"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)
_SEG_FMT = "<IBQIII"
_SEG_SIZE = struct.calcsize(_SEG_FMT)


class ContainerError(ValueError):
    """Malformed or corrupted container bytes."""


class ModelMismatchError(ValueError):
    """The loaded model is not the one the bitstream was encoded with."""


def _write_varint(out: bytearray, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    value = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise ContainerError("truncated varint")
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7


def _tile_up(occ: np.ndarray, tile_size: int) -> np.ndarray:
    n_tiles = -(-len(occ) // tile_size)
    padded = np.zeros(n_tiles * tile_size, dtype=np.uint8)
    padded[:len(occ)] = occ
    return padded.reshape(n_tiles, tile_size)


def encode_stream(stream: EventStream, model: HyperpriorModel,
                  cfg: PreprocessConfig) -> bytes:
    """Full pipeline: segment -> octree -> tiles -> hyperprior -> range coder."""
    segments = segment_stream(stream, cfg)
    params = compute_depth(stream.sensor_width, stream.sensor_height, cfg.ts)
    out = bytearray(struct.pack(
        _HEADER_FMT, MAGIC, FORMAT_VERSION, stream.sensor_width,
        stream.sensor_height, cfg.ts, len(segments), model.digest()))
    for seg in segments:
        occ = build_occupancy(seg.points, params).data
        tiles = _tile_up(occ, model.tile_size)
        z = model.encode(tiles)
        indices = quantize_hard(z, model.num_levels)
        probs = model.decode(dequantize(indices, model.num_levels))
        out += struct.pack(_SEG_FMT, seg.key.segment_index, seg.key.polarity,
                           seg.min_timestamp, len(occ), len(tiles),
                           zlib.crc32(occ.tobytes()))
        for i in range(len(tiles)):
            cdf = ec.quantize_cdf(probs[i])
            payload = ec.ac_encode(tiles[i], cdf)
            out += ec.pack_latents(indices[i])
            _write_varint(out, len(payload))
            out += payload
    return bytes(out)


def _parse_header(data: bytes):
    if len(data) < _HEADER_SIZE:
        raise ContainerError("container shorter than its header")
    magic, version, width, height, ts, seg_count, model_id = struct.unpack_from(
        _HEADER_FMT, data, 0)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported format version {version}")
    return width, height, ts, seg_count, model_id


def decode_stream(data: bytes, model: HyperpriorModel) -> EventStream:
    """Exact inverse of :func:`encode_stream` under the canonical ordering."""
    width, height, ts, seg_count, model_id = _parse_header(data)
    if model_id != model.digest():
        raise ModelMismatchError(
            "bitstream was encoded with a different model (id mismatch)")
    cfg = PreprocessConfig(ts)
    params = compute_depth(width, height, ts)
    pos = _HEADER_SIZE
    latent_bytes = (model.latent_size * ec.LATENT_PACK_BITS + 7) // 8
    segments = []
    for _ in range(seg_count):
        if pos + _SEG_SIZE > len(data):
            raise ContainerError("truncated segment record")
        seg_index, polarity, min_ts, occ_count, tile_count, crc = \
            struct.unpack_from(_SEG_FMT, data, pos)
        pos += _SEG_SIZE
        expected_tiles = -(-occ_count // model.tile_size)
        if tile_count != expected_tiles:
            raise ContainerError(
                f"segment {seg_index}: tile_count {tile_count} != {expected_tiles}")
        occ_tiles = []
        for _t in range(tile_count):
            if pos + latent_bytes > len(data):
                raise ContainerError("truncated latent field")
            indices = ec.unpack_latents(data[pos:pos + latent_bytes],
                                        model.latent_size)
            pos += latent_bytes
            plen, pos = _read_varint(data, pos)
            if pos + plen > len(data):
                raise ContainerError("truncated tile payload")
            probs = model.decode(dequantize(indices, model.num_levels))[0]
            cdf = ec.quantize_cdf(probs)
            occ_tiles.append(ec.ac_decode(data[pos:pos + plen], cdf,
                                          model.tile_size))
            pos += plen
        occ = np.concatenate(occ_tiles)[:occ_count] if occ_tiles else \
            np.zeros(0, dtype=np.uint8)
        tail = np.concatenate(occ_tiles)[occ_count:] if occ_tiles else []
        if len(tail) and (np.asarray(tail) != 0).any():
            raise ContainerError(f"segment {seg_index}: non-zero tile padding")
        if zlib.crc32(occ.tobytes()) != crc:
            raise ContainerError(f"segment {seg_index}: occupancy checksum mismatch")
        points = decode_occupancy(occ, params)
        segments.append(Segment(SegmentKey(seg_index, polarity), min_ts, points))
    if pos != len(data):
        raise ContainerError(f"{len(data) - pos} trailing bytes after last segment")
    return reassemble_stream(segments, cfg, width, height)


@dataclass
class BitstreamBreakdown:
    header_bits: int
    metadata_bits: int
    latent_bits: int
    payload_bits: int

    @property
    def total_bits(self) -> int:
        return (self.header_bits + self.metadata_bits
                + self.latent_bits + self.payload_bits)

    def as_dict(self) -> dict:
        return {"header_bits": self.header_bits, "metadata_bits": self.metadata_bits,
                "latent_bits": self.latent_bits, "payload_bits": self.payload_bits,
                "total_bits": self.total_bits}


def measure_bitstream(data: bytes, latent_size: int = 8,
                      tile_size: int = 512) -> BitstreamBreakdown:
    """Component sizes; they sum to the container size exactly."""
    _, _, _, seg_count, _ = _parse_header(data)
    pos = _HEADER_SIZE
    latent_bytes = (latent_size * ec.LATENT_PACK_BITS + 7) // 8
    metadata = latents = payloads = 0
    for _ in range(seg_count):
        if pos + _SEG_SIZE > len(data):
            raise ContainerError("truncated segment record")
        _, _, _, _occ, tile_count, _ = struct.unpack_from(_SEG_FMT, data, pos)
        pos += _SEG_SIZE
        metadata += _SEG_SIZE
        for _t in range(tile_count):
            latents += latent_bytes
            pos += latent_bytes
            plen, npos = _read_varint(data, pos)
            metadata += npos - pos
            pos = npos
            payloads += plen
            pos += plen
            if pos > len(data):
                raise ContainerError("truncated tile payload")
    if pos != len(data):
        raise ContainerError("trailing bytes after last segment")
    return BitstreamBreakdown(_HEADER_SIZE * 8, metadata * 8,
                              latents * 8, payloads * 8)
