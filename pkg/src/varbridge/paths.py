"""Time grids and bundles of latent-state trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

DEDUP_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time points plus the grid-index -> observation-index map."""

    points: np.ndarray
    obs_index: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise InvalidArgumentError("grid points must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("grid points must be finite")
        if pts.size > 1 and np.any(np.diff(pts) <= 0):
            raise InvalidArgumentError("grid points must be strictly increasing")
        if len(set(self.obs_index.values())) != len(self.obs_index):
            raise InvalidArgumentError("each observation must appear exactly once on the grid")
        for k in self.obs_index:
            if not 0 <= k < pts.size:
                raise InvalidArgumentError(f"observation grid index {k} out of range")
        object.__setattr__(self, "points", pts)

    @classmethod
    def build(cls, t_start: float, t_end: float, n_steps: int, obs_times=()) -> "TimeGrid":
        """Union of a uniform grid with the observation times, deduplicated at 1e-12."""
        if n_steps < 1:
            raise InvalidArgumentError("n_steps must be >= 1")
        if not t_end > t_start:
            raise InvalidArgumentError("t_end must exceed t_start")
        uniform = np.linspace(t_start, t_end, n_steps + 1)
        return cls.merge(uniform, obs_times)

    @classmethod
    def merge(cls, base, obs_times=()) -> "TimeGrid":
        obs_times = np.asarray(obs_times, dtype=float)
        pts = np.sort(np.concatenate([np.asarray(base, dtype=float), obs_times]))
        keep = np.concatenate([[True], np.diff(pts) > DEDUP_TOL]) if pts.size else pts.astype(bool)
        pts = pts[keep]
        obs_index = {}
        for j, tau in enumerate(obs_times):
            k = int(np.argmin(np.abs(pts - tau)))
            if abs(pts[k] - tau) > DEDUP_TOL:
                raise InvalidArgumentError(f"observation time {tau} missing from grid")
            obs_index[k] = j
        if len(obs_index) != obs_times.size:
            raise InvalidArgumentError("observation times closer than the dedup tolerance")
        # snap observation slots to the exact observation times
        for k, j in obs_index.items():
            pts[k] = obs_times[j]
        return cls(pts, obs_index)

    @property
    def dts(self) -> np.ndarray:
        return np.diff(self.points)

    def __len__(self) -> int:
        return self.points.size

    def obs_grid_indices(self) -> np.ndarray:
        """Grid indices ordered by observation index."""
        return np.array(sorted(self.obs_index, key=self.obs_index.__getitem__), dtype=int)

    def indices_of(self, times) -> np.ndarray:
        """Grid index of each of ``times``; every time must be a grid point."""
        times = np.asarray(times, dtype=float).reshape(-1)
        idx = np.clip(np.searchsorted(self.points, times), 0, max(self.points.size - 1, 0))
        for j in (idx, np.maximum(idx - 1, 0)):
            hit = np.abs(self.points[j] - times) <= DEDUP_TOL
            idx = np.where(hit, j, idx)
        if times.size and not np.all(np.abs(self.points[idx] - times) <= DEDUP_TOL):
            missing = times[np.abs(self.points[idx] - times) > DEDUP_TOL]
            raise InvalidArgumentError(f"times {missing.tolist()} are not on the grid")
        return idx.astype(int)

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return np.array_equal(self.points, other.points) and self.obs_index == other.obs_index

    __hash__ = None


@dataclass(frozen=True)
class PathBundle:
    """``states`` has shape ``(n_paths, len(grid), m)``."""

    grid: TimeGrid
    states: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim != 3 or s.shape[1] != len(self.grid):
            raise InvalidArgumentError(
                f"states shape {s.shape} inconsistent with grid of length {len(self.grid)}"
            )
        if not np.all(np.isfinite(s)):
            raise InvalidArgumentError("path states must be finite")
        object.__setattr__(self, "states", s)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def projected(self) -> np.ndarray:
        """First state component of every path, shape ``(n_paths, len(grid))``."""
        return self.states[:, :, 0]
