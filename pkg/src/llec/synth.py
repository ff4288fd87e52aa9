"""Seeded synthetic event-stream generators for tests and benchmarks.

Structured patterns (moving dot, rotating spinner, falling particles) produce
the spatio-temporally correlated streams the codec is built for; the uniform
noise pattern is near-incompressible and exercises the structural bound.
"""

from __future__ import annotations

import numpy as np

from .event_io import EventStream

PATTERNS = ("moving-dot", "rotating-spinner", "uniform-noise", "falling-particles")

DOT_RADIUS = 4


def generate_synthetic(pattern: str, width: int, height: int, duration: float,
                       rate: float, seed: int = 0) -> EventStream:
    """Deterministic stream of round(rate * duration) events in [0, duration)."""
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; choose from {PATTERNS}")
    if min(width, height, duration, rate) <= 0:
        raise ValueError("all generator parameters must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(rate * duration))
    t = np.sort(rng.integers(0, max(1, int(duration * 1e6)), size=n))
    if pattern == "uniform-noise":
        x = rng.integers(0, width, size=n)
        y = rng.integers(0, height, size=n)
        p = rng.integers(0, 2, size=n)
    elif pattern == "moving-dot":
        x, y, p = _moving_dot(rng, t, width, height, duration)
    elif pattern == "rotating-spinner":
        x, y, p = _spinner(rng, t, width, height)
    else:
        x, y, p = _falling_particles(rng, t, width, height)
    x = np.clip(x, 0, width - 1).astype(np.int64)
    y = np.clip(y, 0, height - 1).astype(np.int64)
    return EventStream(width, height, x, y, t.astype(np.int64), p.astype(np.int64))


def _bounce(pos: np.ndarray, extent: int) -> np.ndarray:
    """Reflect an unbounded coordinate into [0, extent)."""
    period = 2 * (extent - 1)
    m = np.mod(pos, period)
    return np.where(m < extent, m, period - m)


def moving_dot_center(t_us: np.ndarray, width: int, height: int,
                      duration: float) -> tuple[np.ndarray, np.ndarray]:
    """Dot trajectory shared by the generator and its envelope test."""
    # crosses the sensor a few times over the duration, bouncing at edges
    speed_x = 3.0 * width / (duration * 1e6)
    speed_y = 2.0 * height / (duration * 1e6)
    cx = _bounce(np.floor(DOT_RADIUS + speed_x * t_us).astype(np.int64), width)
    cy = _bounce(np.floor(DOT_RADIUS + speed_y * t_us).astype(np.int64), height)
    return cx, cy


def _moving_dot(rng, t, width, height, duration):
    cx, cy = moving_dot_center(t, width, height, duration)
    n = len(t)
    dx = rng.integers(-DOT_RADIUS, DOT_RADIUS + 1, size=n)
    dy = rng.integers(-DOT_RADIUS, DOT_RADIUS + 1, size=n)
    keep = dx * dx + dy * dy > DOT_RADIUS * DOT_RADIUS
    dx[keep] = 0
    dy[keep] = 0
    p = (dx >= 0).astype(np.int64)  # leading edge brightens, trailing dims
    return cx + dx, cy + dy, p


def _spinner(rng, t, width, height):
    n = len(t)
    cx, cy = width // 2, height // 2
    arm = min(width, height) // 3
    omega = 2.0 * np.pi / 1e5  # one revolution per 0.1 s
    theta = omega * t + np.pi * rng.integers(0, 2, size=n)  # two-ended bar
    r = np.sqrt(rng.uniform(0, 1, size=n)) * arm
    jitter = rng.normal(0, 1.0, size=n)
    x = np.round(cx + r * np.cos(theta) - jitter * np.sin(theta)).astype(np.int64)
    y = np.round(cy + r * np.sin(theta) + jitter * np.cos(theta)).astype(np.int64)
    p = (np.mod(theta, 2 * np.pi) < np.pi).astype(np.int64)
    return x, y, p


def _falling_particles(rng, t, width, height):
    n = len(t)
    n_particles = 12
    px = rng.integers(0, width, size=n_particles)
    v = rng.uniform(0.5, 2.0, size=n_particles) * height / 1e6  # px per µs
    phase = rng.uniform(0, height, size=n_particles)
    which = rng.integers(0, n_particles, size=n)
    x = px[which] + rng.integers(-1, 2, size=n)
    y = np.mod(phase[which] + v[which] * t, height).astype(np.int64)
    p = rng.integers(0, 2, size=n)
    return x, y, p
