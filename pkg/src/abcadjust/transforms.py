"""Summary-statistic and parameter transformations."""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import expit, logit

from .errors import ConfigError, DomainError, TransformNotApplicable

__all__ = ["StatTransform", "ParamTransform", "STAT_TAGS"]

STAT_TAGS = ("identity", "sqrt", "log")
_ALIASES = {"id": "identity", "none": "identity", "identity": "identity",
            "sqrt": "sqrt", "log": "log"}


@dataclass(frozen=True)
class StatTransform:
    """Per-coordinate transformation of the summary statistics."""

    tags: tuple

    def __post_init__(self):
        tags = tuple(_ALIASES.get(str(t).lower(), str(t).lower()) for t in self.tags)
        for t in tags:
            if t not in STAT_TAGS:
                raise ConfigError(f"unknown statistic transform {t!r}")
        object.__setattr__(self, "tags", tags)

    @classmethod
    def identity(cls, d):
        return cls(("identity",) * d)

    @classmethod
    def parse(cls, value):
        """Parse ``"id,log"`` or a sequence of tags."""
        if isinstance(value, StatTransform):
            return value
        if isinstance(value, str):
            value = [s.strip() for s in value.split(",") if s.strip()]
        return cls(tuple(value))

    def __len__(self):
        return len(self.tags)

    def __str__(self):
        return ",".join(self.tags)

    @property
    def complexity(self):
        """Number of transformed coordinates (tie-breaking key)."""
        return sum(t != "identity" for t in self.tags)

    def label(self, names):
        out = []
        for t, n in zip(self.tags, names):
            out.append(n if t == "identity" else f"{t}({n})")
        return " + ".join(out)

    def in_domain(self, stats):
        """Boolean mask of rows where every coordinate is in the domain."""
        stats = np.atleast_2d(np.asarray(stats, dtype=float))
        ok = np.ones(stats.shape[0], dtype=bool)
        for k, t in enumerate(self.tags):
            if t == "log":
                ok &= stats[:, k] > 0
            elif t == "sqrt":
                ok &= stats[:, k] >= 0
        return ok

    def apply(self, stats):
        stats = np.asarray(stats, dtype=float)
        one = stats.ndim == 1
        s = np.atleast_2d(stats).copy()
        if s.shape[1] != len(self.tags):
            raise ConfigError(
                f"transform has {len(self.tags)} coordinates, statistics have {s.shape[1]}"
            )
        if not np.all(self.in_domain(s)):
            raise DomainError(f"statistics outside the domain of transform {self}")
        for k, t in enumerate(self.tags):
            if t == "log":
                s[:, k] = np.log(s[:, k])
            elif t == "sqrt":
                s[:, k] = np.sqrt(s[:, k])
        return s[0] if one else s

    def prepare(self, stats, s_obs, max_drop=0.1):
        """Rows usable under this transform.

        Returns ``(mask, transformed_stats, transformed_s_obs)`` where
        ``mask`` selects the reference-table rows inside the domain.  Raises
        :class:`TransformNotApplicable` when ``s_obs`` is outside the domain
        or more than ``max_drop`` of the rows would be discarded.
        """
        stats = np.asarray(stats, dtype=float)
        s_obs = np.asarray(s_obs, dtype=float)
        if not self.in_domain(s_obs[None, :])[0]:
            raise TransformNotApplicable(f"observed statistics outside domain of {self}")
        mask = self.in_domain(stats)
        dropped = 1.0 - mask.mean()
        if dropped > max_drop:
            raise TransformNotApplicable(
                f"{self}: {dropped:.1%} of simulations outside the domain "
                f"(limit {max_drop:.0%})"
            )
        return mask, self.apply(stats[mask]), self.apply(s_obs)


@dataclass(frozen=True)
class ParamTransform:
    """Parameter transformation applied before regression adjustment.

    ``kind`` is ``"identity"``, ``"log"`` or ``"logit"``; ``logit`` maps
    ``(lower, upper)`` onto the real line.  The inverse always lands inside
    the support.
    """

    kind: str = "identity"
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if self.kind not in ("identity", "log", "logit"):
            raise ConfigError(f"unknown parameter transform {self.kind!r}")
        if self.kind == "logit" and not (
            math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower < self.upper
        ):
            raise ConfigError("logit transform needs finite lower < upper")

    @classmethod
    def from_support(cls, lower=-math.inf, upper=math.inf):
        """Automatic choice: half-line -> log, interval -> logit, line -> identity."""
        lower = -math.inf if lower is None else float(lower)
        upper = math.inf if upper is None else float(upper)
        if math.isfinite(lower) and math.isfinite(upper):
            return cls("logit", lower, upper)
        if lower == 0.0 and not math.isfinite(upper):
            return cls("log", 0.0, math.inf)
        if math.isfinite(lower) or math.isfinite(upper):
            raise ConfigError(
                f"no automatic transform for support ({lower}, {upper}); "
                "shift the parameter or give an explicit transform"
            )
        return cls("identity")

    @classmethod
    def parse(cls, value):
        if isinstance(value, ParamTransform):
            return value
        value = str(value).strip().lower()
        if value in ("identity", "id", "none"):
            return cls("identity")
        if value == "log":
            return cls("log", 0.0, math.inf)
        if value.startswith("logit"):
            inner = value[len("logit"):].strip("()[] ")
            lo, hi = (float(v) for v in inner.split(","))
            return cls("logit", lo, hi)
        raise ConfigError(f"cannot parse parameter transform {value!r}")

    def __str__(self):
        if self.kind == "logit":
            return f"logit({self.lower:g},{self.upper:g})"
        return self.kind

    def _check(self, x):
        if self.kind == "log":
            bad = ~(x > 0)
        elif self.kind == "logit":
            bad = ~((x > self.lower) & (x < self.upper))
        else:
            bad = ~np.isfinite(x)
        if np.any(bad):
            i = int(np.flatnonzero(bad.ravel())[0])
            raise DomainError(
                f"parameter draw {i} = {x.ravel()[i]!r} outside the domain of {self}"
            )

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        self._check(x)
        if self.kind == "log":
            return np.log(x)
        if self.kind == "logit":
            return logit((x - self.lower) / (self.upper - self.lower))
        return x.copy()

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "log":
            with np.errstate(over="ignore"):
                x = np.exp(y)
            return np.clip(x, np.nextafter(0.0, 1.0), np.finfo(float).max)
        if self.kind == "logit":
            x = self.lower + (self.upper - self.lower) * expit(y)
            lo = np.nextafter(self.lower, self.upper)
            hi = np.nextafter(self.upper, self.lower)
            return np.clip(x, lo, hi)
        return y.copy()

    def log_abs_derivative(self, x):
        """``log |d forward / dx|``, the log-Jacobian for densities."""
        x = np.asarray(x, dtype=float)
        if self.kind == "log":
            return -np.log(x)
        if self.kind == "logit":
            return math.log(self.upper - self.lower) - np.log(x - self.lower) - np.log(
                self.upper - x
            )
        return np.zeros_like(x)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "log":
            return x > 0
        if self.kind == "logit":
            return (x > self.lower) & (x < self.upper)
        return np.isfinite(x)
