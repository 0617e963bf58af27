"""Unbiased MMD^2 two-sample statistic with a permutation rejection threshold."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class MmdReport:
    mmd2: float
    threshold: float
    reject: bool
    bandwidth: float
    m: int
    n_permutations: int
    seed: int | None = None

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise InvalidArgumentError("bandwidth must be > 0")
        if self.reject != (self.mmd2 > self.threshold):
            raise InvalidArgumentError("reject must equal mmd2 > threshold")

    FIELDS = ("mmd2", "threshold", "reject", "bandwidth", "m", "n_permutations", "seed")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.FIELDS)
        row = asdict(self)
        w.writerow([
            repr(row["mmd2"]), repr(row["threshold"]), str(row["reject"]).lower(),
            repr(row["bandwidth"]), row["m"], row["n_permutations"], "" if self.seed is None else self.seed,
        ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MmdReport":
        rows = list(csv.DictReader(io.StringIO(text)))
        if len(rows) != 1:
            raise InvalidArgumentError("MMD report CSV must hold exactly one row")
        r = rows[0]
        return cls(
            float(r["mmd2"]), float(r["threshold"]), r["reject"].strip().lower() == "true",
            float(r["bandwidth"]), int(r["m"]), int(r["n_permutations"]),
            int(r["seed"]) if r.get("seed") else None,
        )


def _as_samples(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidArgumentError("samples must be a 2-D array (one vector per row)")
    return X


def gaussian_rkhs_kernel(x, y, bandwidth: float) -> float:
    """exp(-||x - y||^2 / (2 bandwidth^2))."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise InvalidArgumentError(f"length mismatch: {x.size} vs {y.size}")
    if not bandwidth > 0:
        raise InvalidArgumentError("bandwidth must be > 0")
    d = x - y
    return math.exp(-float(d @ d) / (2.0 * bandwidth**2))


def median_bandwidth(pooled) -> float:
    """Median pairwise Euclidean distance; mean distance if that is 0; else 1."""
    P = _as_samples(pooled)
    if P.shape[0] < 2:
        raise InvalidArgumentError("need at least two vectors for the median heuristic")
    dists = pdist(P)
    med = float(np.median(dists))
    if med > 0:
        return med
    avg = float(np.mean(dists))
    return avg if avg > 0 else 1.0


def _gram(P, bandwidth):
    D = cdist(P, P, "sqeuclidean")
    D = 0.5 * (D + D.T)  # exact symmetry, so relabelings only permute entries
    return np.exp(-D / (2.0 * bandwidth**2))


def _mmd2_from_gram(K: np.ndarray, m: int) -> float:
    # K is the pooled Gram matrix with X in the first m rows and Y in the last m.
    # fsum is correctly rounded, so the result does not depend on block order.
    kxx = K[:m, :m]
    kyy = K[m:, m:]
    kxy = K[:m, m:]
    s_xx = math.fsum(kxx.ravel()) - math.fsum(np.diag(kxx))
    s_yy = math.fsum(kyy.ravel()) - math.fsum(np.diag(kyy))
    s_xy = math.fsum(kxy.ravel()) - math.fsum(np.diag(kxy))
    return float((s_xx + s_yy - 2.0 * s_xy) / (m * (m - 1)))


def mmd2_unbiased(X, Y, bandwidth: float) -> float:
    """Unbiased MMD^2 over paired samples: mean over i != j of
    k(x_i, x_j) + k(y_i, y_j) - k(x_i, y_j) - k(x_j, y_i). May be negative."""
    X, Y = _as_samples(X), _as_samples(Y)
    if X.shape != Y.shape:
        raise InvalidArgumentError(f"X and Y must have equal shapes, got {X.shape} and {Y.shape}")
    m = X.shape[0]
    if m < 2:
        raise InvalidArgumentError("need m >= 2 samples per side")
    if not bandwidth > 0:
        raise InvalidArgumentError("bandwidth must be > 0")
    P = np.vstack([X, Y])
    return _mmd2_from_gram(_gram(P, bandwidth), m)


def permutation_statistics(X, Y, bandwidth: float, n_permutations: int, seed) -> np.ndarray:
    """MMD^2 under ``n_permutations`` random equal relabelings of the pooled sample.

    Permutation ``i`` uses ``default_rng([seed, i])``, so any subset can be
    recomputed independently of the others.
    """
    X, Y = _as_samples(X), _as_samples(Y)
    m = X.shape[0]
    P = np.vstack([X, Y])
    K = _gram(P, bandwidth)
    stats = np.empty(n_permutations)
    base = 0 if seed is None else seed
    for i in range(n_permutations):
        perm = np.random.default_rng([base, i]).permutation(2 * m)
        stats[i] = _mmd2_from_gram(K[np.ix_(perm, perm)], m)
    return stats


def permutation_threshold(X, Y, bandwidth: float, n_permutations: int = 1000, alpha: float = 0.05,
                          seed=0) -> float:
    """Empirical (1 - alpha) quantile of the permutation null of MMD^2."""
    if n_permutations < 100:
        raise InvalidArgumentError("n_permutations must be >= 100")
    if not 0 < alpha < 1:
        raise InvalidArgumentError("alpha must lie in (0, 1)")
    stats = permutation_statistics(X, Y, bandwidth, n_permutations, seed)
    return quantile_upper(stats, alpha)


def quantile_upper(stats: np.ndarray, alpha: float) -> float:
    """(1 - alpha) empirical quantile, rounded up to an observed permutation value."""
    return float(np.quantile(np.asarray(stats, dtype=float), 1.0 - alpha, method="higher"))


def mmd_test(X, Y, n_permutations: int = 1000, alpha: float = 0.05, seed: int = 0,
             bandwidth: float | None = None) -> MmdReport:
    X, Y = _as_samples(X), _as_samples(Y)
    if bandwidth is None:
        bandwidth = median_bandwidth(np.vstack([X, Y]))
    stat = mmd2_unbiased(X, Y, bandwidth)
    thr = permutation_threshold(X, Y, bandwidth, n_permutations, alpha, seed)
    return MmdReport(stat, thr, bool(stat > thr), bandwidth, X.shape[0], n_permutations, seed)
