"""Reference tables and the kernel-weighted neighbourhood of ``s_obs``."""

from dataclasses import dataclass, field
import csv
import io
import json
import os

import numpy as np

from .errors import ConfigError, DegenerateBandwidthError
from .kernels import (
    BandwidthMatrix,
    SphericalKernel,
    bandwidth_from_quantile,
    get_kernel,
    kernel_weight,
    standardized_distances,
)

__all__ = ["ReferenceTable", "AcceptedSet", "accept", "statistic_scale"]


@dataclass
class ReferenceTable:
    """Simulated pairs ``(theta_i, s_i)``.

    ``theta`` has shape (n, p) and ``stats`` shape (n, d).
    """

    theta: np.ndarray
    stats: np.ndarray
    theta_names: list
    stat_names: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.stats = np.asarray(self.stats, dtype=float)
        if self.theta.ndim == 1:
            self.theta = self.theta[:, None]
        if self.stats.ndim == 1:
            self.stats = self.stats[:, None]
        if self.theta.shape[0] != self.stats.shape[0]:
            raise ConfigError("theta and stats must have the same number of rows")
        self.theta_names = list(self.theta_names)
        self.stat_names = list(self.stat_names)
        if len(self.theta_names) != self.theta.shape[1]:
            raise ConfigError("theta_names does not match theta columns")
        if len(self.stat_names) != self.stats.shape[1]:
            raise ConfigError("stat_names does not match stats columns")

    def __len__(self):
        return self.theta.shape[0]

    @property
    def n(self):
        return len(self)

    @property
    def dim(self):
        return self.stats.shape[1]

    def param(self, name):
        """Column of parameter ``name`` (or integer index)."""
        if isinstance(name, (int, np.integer)):
            return self.theta[:, int(name)]
        try:
            return self.theta[:, self.theta_names.index(name)]
        except ValueError:
            raise ConfigError(
                f"unknown parameter {name!r}; table has {self.theta_names}"
            ) from None

    def header(self):
        return [f"theta_{t}" for t in self.theta_names] + [
            f"stat_{s}" for s in self.stat_names
        ]

    def to_csv_text(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        for row in np.hstack([self.theta, self.stats]):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def save(self, path, sidecar=None):
        """Write CSV to ``path`` and a JSON sidecar next to it."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv_text())
        meta = dict(self.meta)
        if sidecar:
            meta.update(sidecar)
        meta.setdefault("n", self.n)
        meta["theta_names"] = self.theta_names
        meta["stat_names"] = self.stat_names
        with open(_sidecar_path(path), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ConfigError(f"{path}: empty reference table") from None
            rows = [[float(v) for v in row] for row in reader if row]
        theta_cols = [i for i, h in enumerate(header) if h.startswith("theta_")]
        stat_cols = [i for i, h in enumerate(header) if h.startswith("stat_")]
        if not theta_cols or not stat_cols or len(theta_cols) + len(stat_cols) != len(header):
            raise ConfigError(
                f"{path}: header must be theta_<name>...,stat_<name>... got {header}"
            )
        data = np.asarray(rows, dtype=float).reshape(-1, len(header))
        meta = {}
        side = _sidecar_path(path)
        if os.path.exists(side):
            with open(side, encoding="utf-8") as fh:
                meta = json.load(fh)
        return cls(
            theta=data[:, theta_cols],
            stats=data[:, stat_cols],
            theta_names=[header[i][len("theta_"):] for i in theta_cols],
            stat_names=[header[i][len("stat_"):] for i in stat_cols],
            meta=meta,
        )


def _sidecar_path(path):
    root, _ = os.path.splitext(path)
    return root + ".json"


@dataclass
class AcceptedSet:
    """Rows of a reference table inside the kernel window around ``s_obs``."""

    indices: np.ndarray
    theta: np.ndarray
    stats: np.ndarray
    s_obs: np.ndarray
    weights: np.ndarray
    bandwidth: BandwidthMatrix
    kernel: SphericalKernel
    distances: np.ndarray

    def __len__(self):
        return self.indices.size

    @property
    def delta(self):
        return self.stats - self.s_obs

    @property
    def n_positive(self):
        return int(np.count_nonzero(self.weights > 0))

    def subset(self, mask):
        mask = np.asarray(mask)
        return AcceptedSet(
            indices=self.indices[mask],
            theta=self.theta[mask],
            stats=self.stats[mask],
            s_obs=self.s_obs,
            weights=self.weights[mask],
            bandwidth=self.bandwidth,
            kernel=self.kernel,
            distances=self.distances[mask],
        )


def statistic_scale(stats):
    """Per-statistic standard deviation over the whole table (the diagonal of D)."""
    stats = np.asarray(stats, dtype=float)
    if stats.ndim == 1:
        stats = stats[:, None]
    scale = stats.std(axis=0, ddof=1)
    if np.any(~np.isfinite(scale)) or np.any(scale <= 0):
        bad = np.flatnonzero(~(scale > 0))
        raise DegenerateBandwidthError(
            f"degenerate bandwidth: statistics {bad.tolist()} have zero spread"
        )
    return scale


def accept(stats, s_obs, q=0.025, kernel="epanechnikov", theta=None, scale=None):
    """Weight the reference table around ``s_obs``.

    The bandwidth is ``B = b D`` with ``D`` the per-statistic standard
    deviation and ``b`` the lower q-quantile of the standardised distances.
    For compactly supported kernels only rows with distance ``<= b`` are
    kept (the boundary row may carry zero weight).

    Parameters
    ----------
    stats : array_like, shape (n, d)
    s_obs : array_like, shape (d,)
    q : float
        Acceptance fraction.
    kernel : str or UnivariateKernel
        Radial profile of the spherical kernel.
    theta : array_like, optional
        Parameter values aligned with ``stats``; carried along.
    scale : array_like, optional
        Override for the diagonal of ``D``.
    """
    stats = np.asarray(stats, dtype=float)
    if stats.ndim == 1:
        stats = stats[:, None]
    s_obs = np.atleast_1d(np.asarray(s_obs, dtype=float))
    if s_obs.shape != (stats.shape[1],):
        raise ConfigError(
            f"observed statistics have dimension {s_obs.size}, table has {stats.shape[1]}"
        )
    if scale is None:
        scale = statistic_scale(stats)
    dist = standardized_distances(stats, s_obs, scale)
    b = bandwidth_from_quantile(dist, q)
    if b <= 0.0:
        raise DegenerateBandwidthError(
            "degenerate bandwidth: more than a fraction q of the table matches s_obs exactly"
        )
    bw = BandwidthMatrix(scale, b)
    sk = SphericalKernel(get_kernel(kernel), stats.shape[1])
    if sk.compact:
        idx = np.flatnonzero(dist <= b * sk.base.support)
    else:
        idx = np.arange(stats.shape[0])
    w = kernel_weight(sk, bw, stats[idx] - s_obs)
    if theta is None:
        th = np.empty((idx.size, 0))
    else:
        th = np.asarray(theta, dtype=float)[idx]
    return AcceptedSet(
        indices=idx,
        theta=th,
        stats=stats[idx],
        s_obs=s_obs,
        weights=w,
        bandwidth=bw,
        kernel=sk,
        distances=dist[idx],
    )
