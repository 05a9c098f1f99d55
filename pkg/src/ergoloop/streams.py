"""Counter-based uniform streams keyed by run, component, step and draw kind.

Each stream is a Philox generator whose key is derived from
``(base seed, run index, component id, draw kind)``. Steps are grouped into
fixed-size blocks and block ``b`` is generated from counter ``b``, so the
draws for step ``k`` depend only on the key and ``k``: never on how many
other streams exist, the order they are consumed in, or which process runs
them.
"""

from __future__ import annotations

import numpy as np

KINDS = {"transition": 1, "output": 2, "init": 3, "oracle": 4}

BLOCK = 1024


def stream_key(seed: int, run_index: int, component: int, kind: str) -> np.ndarray:
    if kind not in KINDS:
        raise ValueError(f"unknown draw kind {kind!r}")
    ss = np.random.SeedSequence([int(seed), int(run_index), int(component), KINDS[kind]])
    return ss.generate_state(2, dtype=np.uint64)


def generator(seed: int, run_index: int, component: int, kind: str, block: int = 0) -> np.random.Generator:
    """Philox generator positioned at the start of counter block ``block``."""
    counter = np.array([0, 0, 0, block], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=stream_key(seed, run_index, component, kind), counter=counter))


class UniformStream:
    """Per-step rows of ``width`` uniforms in [0, 1) for one or more runs.

    ``row(k)`` has shape ``(runs, width)`` and may be requested in any order.
    Rows are cached one block at a time, so sequential access costs one
    generator call per run per ``BLOCK`` steps. Each run keeps its own key,
    so a run's draws do not depend on which other runs share the stream.
    """

    def __init__(self, seed: int, run_indices, component: int, kind: str, width: int):
        self.seed = int(seed)
        self.runs = tuple(int(r) for r in np.atleast_1d(run_indices))
        self.component = int(component)
        self.kind = kind
        self.width = int(width)
        self._block = -1
        self._rows = np.empty((0, len(self.runs), self.width))

    def block(self, b: int) -> np.ndarray:
        """Rows of steps ``b * BLOCK .. (b + 1) * BLOCK - 1``, shape ``(BLOCK, runs, width)``."""
        if b != self._block:
            self._rows = np.stack(
                [generator(self.seed, r, self.component, self.kind, block=b).random((BLOCK, self.width))
                 for r in self.runs],
                axis=1,
            )
            self._block = b
        return self._rows

    def row(self, k: int) -> np.ndarray:
        b, i = divmod(k, BLOCK)
        return self.block(b)[i]


class RunStreams:
    """All streams of a set of runs that advance together."""

    def __init__(self, seed: int, run_indices, widths: list[int]):
        self.seed = int(seed)
        self.runs = tuple(int(r) for r in np.atleast_1d(run_indices))
        self.transition = [UniformStream(seed, self.runs, m, "transition", w) for m, w in enumerate(widths)]
        self.output = [UniformStream(seed, self.runs, m, "output", w) for m, w in enumerate(widths)]

    def init(self, run_index: int, component: int) -> np.random.Generator:
        return generator(self.seed, run_index, component, "init")
