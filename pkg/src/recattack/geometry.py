"""Exact lp-norm geometry.

Dual exponents, unit-norm steepest ascent directions, projections onto
lp balls, and the closed-form lp projection of a point onto a hyperplane
together with the exact fooling conditions for binary linear classifiers.
Throughout, ``q`` denotes the dual exponent of ``p`` (1/p + 1/q = 1, with
p=1 <-> q=inf).

All functions are pure and safe for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .models import BinaryLinearClassifier

INF = math.inf


class GeometryError(ValueError):
    """Base class for lp-geometry errors."""


class InvalidNormError(GeometryError):
    """Raised for norm exponents p < 1."""


class ZeroGradientError(GeometryError):
    """Raised when a steepest direction of the zero vector is requested."""


class UnsupportedProjectionError(GeometryError):
    """Raised for ball projections with no closed form (p not in {2, inf})."""


class DegenerateHyperplaneError(GeometryError):
    """Raised when a hyperplane with zero normal enters a distance computation."""


class MisclassifiedInputError(GeometryError):
    """Raised when a fooling check is asked about an already-misclassified point."""


def dual_exponent(p: float) -> float:
    """Return q with 1/p + 1/q = 1, mapping p=1 -> inf and p=inf -> 1."""
    if not p >= 1.0:
        raise InvalidNormError(f"norm exponent must satisfy p >= 1, got {p}")
    if p == 1.0:
        return INF
    if p == INF:
        return 1.0
    return p / (p - 1.0)


@dataclass(frozen=True)
class LpNorm:
    """A norm exponent p in [1, inf] together with its dual exponent q."""

    p: float
    q: float = None  # type: ignore[assignment]  # derived in __post_init__

    def __post_init__(self) -> None:
        p = float(self.p)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", dual_exponent(p))

    @classmethod
    def coerce(cls, value: "LpNorm | float | int | str") -> "LpNorm":
        """Accept an LpNorm, a number, or the string 'inf'."""
        if isinstance(value, LpNorm):
            return value
        if isinstance(value, str):
            return cls(INF) if value.lower() in ("inf", "infinity") else cls(float(value))
        return cls(float(value))

    def norm(self, v: np.ndarray) -> float:
        """The lp norm of ``v``."""
        return float(np.linalg.norm(np.asarray(v, dtype=float), ord=self.p))

    def dual_norm(self, v: np.ndarray) -> float:
        """The lq norm of ``v`` (q dual to p)."""
        return float(np.linalg.norm(np.asarray(v, dtype=float), ord=self.q))

    def to_json(self) -> "float | str":
        return "inf" if self.p == INF else self.p

    def __str__(self) -> str:
        return "inf" if self.p == INF else f"{self.p:g}"


@dataclass(frozen=True)
class Hyperplane:
    """The set {z : normal.z + offset = 0}.

    ``offset`` lives in the same units as the classifier logits that produce
    it.  A zero normal is representable (linearizations of two classes with
    identical gradients yield one) but is rejected by any distance
    computation.
    """

    normal: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def degenerate(self) -> bool:
        return not self.normal.any()

    def evaluate(self, z: np.ndarray) -> float:
        """Signed value normal.z + offset (zero iff z lies on the plane)."""
        return float(self.normal @ z + self.offset)


@dataclass(frozen=True)
class ProjectionResult:
    """Closest point of a hyperplane under an lp norm.

    ``zeta`` is the shortest lp distance, ``direction`` the unit-lp vector
    from the query point towards the plane, and ``foot`` the closest point
    itself.  When the query point already lies on the plane the direction is
    the zero vector and ``degenerate`` is set; callers must decide what that
    means for them.
    """

    zeta: float
    direction: np.ndarray
    foot: np.ndarray

    @property
    def degenerate(self) -> bool:
        return not self.direction.any()


def steepest_direction(g: np.ndarray, p: "LpNorm | float") -> np.ndarray:
    """Unit-lp-norm direction maximizing the inner product with ``g``.

    Returns v = |g|^(q-1) * sgn(g) / ||g||_q^(q-1), which satisfies
    ||v||_p = 1 and <g, v> = ||g||_q (the best value possible, by Hoelder).
    Limiting forms: p=inf gives sgn(g); p=1 gives a one-hot vector on the
    largest-magnitude coordinate (lowest index on ties).
    """
    lp = LpNorm.coerce(p)
    g = np.asarray(g, dtype=float)
    if not g.any():
        raise ZeroGradientError("steepest direction of the zero vector is undefined")
    if lp.p == INF:
        return np.sign(g)
    if lp.p == 1.0:
        i = int(np.argmax(np.abs(g)))
        v = np.zeros_like(g)
        v[i] = np.sign(g[i])
        return v
    q = lp.q
    a = np.abs(g)
    v = a ** (q - 1.0) * np.sign(g)
    return v / lp.dual_norm(g) ** (q - 1.0)


def project_ball(delta: np.ndarray, eps: float, p: "LpNorm | float") -> np.ndarray:
    """Euclidean-closest point of the lp ball of radius ``eps``.

    Only p in {2, inf} have a usable closed form; other exponents raise
    UnsupportedProjectionError.
    """
    lp = LpNorm.coerce(p)
    delta = np.asarray(delta, dtype=float)
    if not eps > 0.0:
        raise GeometryError(f"ball radius must be positive, got {eps}")
    if lp.p == INF:
        return np.clip(delta, -eps, eps)
    if lp.p == 2.0:
        n = float(np.linalg.norm(delta))
        if n > eps:
            return delta * (eps / n)
        return delta.copy()
    raise UnsupportedProjectionError(
        f"no closed-form ball projection for p={lp.p}; supported: 2, inf"
    )


def hyperplane_projection(
    h: Hyperplane, x: np.ndarray, p: "LpNorm | float"
) -> ProjectionResult:
    """Project ``x`` onto the hyperplane ``h`` under the lp norm.

    zeta = |normal.x + offset| / ||normal||_q, direction is the unit-lp
    vector pointing from x to the plane, and foot = x + zeta * direction
    satisfies the hyperplane equation exactly.  If x lies on the plane the
    result is degenerate (zero direction): sgn(0) = 0 by convention,
    never silently replaced by an arbitrary unit vector.
    """
    lp = LpNorm.coerce(p)
    if h.degenerate:
        raise DegenerateHyperplaneError("hyperplane normal is the zero vector")
    x = np.asarray(x, dtype=float)
    value = h.evaluate(x)
    zeta = abs(value) / lp.dual_norm(h.normal)
    direction = -np.sign(value) * steepest_direction(h.normal, lp)
    foot = x + zeta * direction
    return ProjectionResult(zeta=zeta, direction=direction, foot=foot)


def fooling_check(
    f: "BinaryLinearClassifier",
    x: np.ndarray,
    y: int,
    delta: np.ndarray,
    p: "LpNorm | float",
) -> bool:
    """Exact test of whether ``delta`` flips a correct binary linear decision.

    Requires that ``f`` correctly classifies (x, y), i.e. y * f(x) > 0.
    Returns True iff both -y * w.delta > 0 and |w.delta| / ||w||_q exceeds
    the boundary distance zeta = y * f(x) / ||w||_q; this is equivalent to
    the direct predicate y * f(x + delta) < 0.
    """
    lp = LpNorm.coerce(p)
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta, dtype=float)
    margin = float(f.value(x))
    if not y * margin > 0.0:
        raise MisclassifiedInputError(
            f"fooling conditions assume a correctly classified input; y*f(x)={y * margin}"
        )
    wq = lp.dual_norm(f.w)
    zeta = y * margin / wq
    wd = float(f.w @ delta)
    return (-y * wd > 0.0) and (abs(wd) / wq > zeta)
