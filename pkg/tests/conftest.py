import numpy as np

from llec.event_io import EventStream


def random_stream(seed: int, n: int, width: int = 640, height: int = 480,
                  t_max: int = 1 << 20) -> EventStream:
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, t_max, size=n))
    return EventStream(width, height,
                       rng.integers(0, width, size=n),
                       rng.integers(0, height, size=n),
                       t,
                       rng.integers(0, 2, size=n))
