"""Allocation accounting for tensor buffers."""

import weakref
from contextlib import contextmanager
from typing import Any, Dict, Iterator

import numpy as np


class AllocationMeter:
    """Counts bytes owned by live tensors while tracking is active.

    Only buffers that own their memory are counted; reshapes, transposes and
    broadcast views share a base buffer and cost nothing. A buffer wrapped by
    several tensors is counted once, until its last owner is collected.
    """

    def __init__(self) -> None:
        self.current_bytes = 0
        self.peak_bytes = 0
        self._active = False
        self._generation = 0
        # id(buffer) -> number of live owners
        self._owners: Dict[int, int] = {}

    @property
    def active(self) -> bool:
        return self._active

    @contextmanager
    def track(self) -> Iterator["AllocationMeter"]:
        """Reset the counters and record allocations until the block exits."""
        self._generation += 1
        self.current_bytes = 0
        self.peak_bytes = 0
        self._owners = {}
        self._active = True
        try:
            yield self
        finally:
            self._active = False

    def register(self, owner: Any, array: np.ndarray) -> None:
        """Account for ``array`` until ``owner`` is garbage collected."""
        if not self._active or array.base is not None:
            return
        nbytes = int(array.nbytes)
        if nbytes == 0:
            return
        key = id(array)
        owners = self._owners.get(key, 0)
        if owners == 0:
            self.current_bytes += nbytes
            self.peak_bytes = max(self.peak_bytes, self.current_bytes)
        self._owners[key] = owners + 1
        weakref.finalize(owner, self._release, key, nbytes, self._generation)

    def _release(self, key: int, nbytes: int, generation: int) -> None:
        # Buffers from an earlier tracking window are ignored.
        if generation != self._generation:
            return
        owners = self._owners.get(key, 0) - 1
        if owners > 0:
            self._owners[key] = owners
            return
        self._owners.pop(key, None)
        self.current_bytes -= nbytes


meter = AllocationMeter()
