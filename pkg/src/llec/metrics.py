"""Compression-ratio and bits-per-event metrics, plus the external-anchor
benchmark harness (lz4, bzip2, 7z invoked as subprocesses)."""

from __future__ import annotations

import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field


class MetricError(ValueError):
    pass


@dataclass
class CompressionReport:
    name: str
    input_bits: int
    compressed_bits: int
    event_count: int
    cr: float
    s: float
    breakdown: dict = field(default_factory=dict)

    @classmethod
    def build(cls, name, input_bits, compressed_bits, event_count, breakdown=None):
        return cls(name, input_bits, compressed_bits, event_count,
                   compute_cr(input_bits, compressed_bits),
                   compute_s(compressed_bits, event_count),
                   breakdown or {})

    def as_dict(self) -> dict:
        return {"name": self.name, "input_bits": self.input_bits,
                "compressed_bits": self.compressed_bits,
                "event_count": self.event_count, "cr": self.cr, "s": self.s,
                "breakdown": self.breakdown}


@dataclass
class AnchorResult:
    tool: str
    status: str                   # "ok" | "skipped"
    detail: str = ""
    compressed_bits: int = 0
    cr: float = 0.0
    s: float = 0.0
    version: str = ""


def compute_cr(input_bits: int, compressed_bits: int) -> float:
    """Input size over compressed size; input size is the EVT2 representation."""
    if compressed_bits <= 0:
        raise MetricError("compressed size must be positive")
    return input_bits / compressed_bits


def compute_s(compressed_bits: int, event_count: int) -> float:
    """Average compressed event size in bits per event."""
    if event_count <= 0:
        raise MetricError("event count must be positive")
    return compressed_bits / event_count


_TOOL_CANDIDATES = {
    "lz4": ("lz4",),
    "bzip2": ("bzip2",),
    "7z": ("7z", "7za", "7zz"),
}


def _tool_version(exe: str) -> str:
    for flag in ("--version", "-V", "-h"):
        try:
            r = subprocess.run([exe, flag], capture_output=True, text=True,
                               timeout=10)
            line = (r.stdout or r.stderr).strip().splitlines()
            if line:
                return line[0][:120]
        except Exception:
            continue
    return "unknown"


def _compress_with(tool: str, exe: str, src: str, dst_dir: str) -> int:
    dst = os.path.join(dst_dir, f"out.{tool}")
    if tool == "lz4":
        subprocess.run([exe, "-q", "-f", src, dst], check=True,
                       capture_output=True)
    elif tool == "bzip2":
        with open(src, "rb") as fin, open(dst, "wb") as fout:
            subprocess.run([exe, "-c"], stdin=fin, stdout=fout, check=True)
    else:  # 7z
        subprocess.run([exe, "a", "-bso0", "-bsp0", dst, src], check=True,
                       capture_output=True)
    return os.path.getsize(dst)


def bench_anchors(raw_path: str, input_bits: int, event_count: int,
                  tools=("lz4", "bzip2", "7z")) -> list[AnchorResult]:
    """Run each anchor codec on the raw EVT2 file with default settings.

    Tools that are absent or fail are reported as skipped, never as a global
    failure.
    """
    results = []
    for tool in tools:
        exe = next((shutil.which(c) for c in _TOOL_CANDIDATES.get(tool, (tool,))
                    if shutil.which(c)), None)
        if exe is None:
            results.append(AnchorResult(tool, "skipped", detail="not installed"))
            continue
        try:
            with tempfile.TemporaryDirectory() as tmp:
                size = _compress_with(tool, exe, raw_path, tmp)
            bits = size * 8
            results.append(AnchorResult(
                tool, "ok", compressed_bits=bits,
                cr=compute_cr(input_bits, bits), s=compute_s(bits, event_count),
                version=_tool_version(exe)))
        except Exception as exc:  # invocation failure -> per-tool skip
            results.append(AnchorResult(tool, "skipped", detail=str(exc)))
    return results
