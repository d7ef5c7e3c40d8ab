"""Domains, strip classification, exponent fields and boundary payoffs.

A :class:`Domain` is described by a signed distance function (negative
inside, positive outside, zero on the boundary) together with a bounding
box, an exact diameter and the space dimension.  For a step radius
``eps`` the closed neighbourhood of the domain splits into four regions:
the deep interior, the inner strip of width ``eps``, the closed outer
strip, and everything beyond.  The boundary cut-off ramps from 0 in the
deep interior to 1 outside and drives the stopping probability of the
game as well as the boundary term of the dynamic programming operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import GeometryError, InvalidExponentError

Array = np.ndarray
PointFunc = Callable[[Array], Array]


class Region(IntEnum):
    """Where a point sits relative to the domain for a fixed step radius."""

    INTERIOR = 0
    INNER_STRIP = 1
    OUTER_STRIP = 2
    OUTSIDE = 3


@dataclass(frozen=True)
class Domain:
    """Bounded domain given through a vectorised signed distance function.

    ``signed_distance`` accepts arrays shaped ``(..., dimension)`` and
    returns shape ``(...)``.  ``bounding_box`` is a ``(2, dimension)``
    array ``[lo, hi]`` that contains the unit-width neighbourhood of the
    closure.  ``diameter`` is exact for the built-in shapes, never
    estimated.  Exterior-ball data, when present, certifies the boundary
    regularity used by the boundary estimate: for every boundary point
    ``y`` and radius ``r <= exterior_ball_r0``, the ball of radius
    ``exterior_ball_s * r`` around ``exterior_ball(y, r)`` avoids the
    domain while staying inside the radius-``r`` ball around ``y``.
    """

    signed_distance: PointFunc
    bounding_box: Array
    diameter: float
    dimension: int
    name: str = "custom"
    tight_box: Optional[Array] = None
    exterior_ball: Optional[Callable[[Array, float], Array]] = None
    exterior_ball_s: Optional[float] = None
    exterior_ball_r0: Optional[float] = None

    def __post_init__(self) -> None:
        if self.dimension < 2:
            raise GeometryError(f"dimension must be >= 2, got {self.dimension}")
        if not self.diameter > 0:
            raise GeometryError("diameter must be positive")
        box = np.asarray(self.bounding_box, dtype=float)
        if box.shape != (2, self.dimension) or not np.all(box[0] < box[1]):
            raise GeometryError("bounding_box must be a (2, n) array with lo < hi")
        object.__setattr__(self, "bounding_box", box)
        if self.tight_box is None:
            # presets widen the exact domain box by the unit margin
            object.__setattr__(self, "tight_box", np.stack([box[0] + 1.0, box[1] - 1.0]))
        else:
            object.__setattr__(self, "tight_box", np.asarray(self.tight_box, dtype=float))

    def contains_in_box(self, x: Array) -> np.ndarray:
        lo, hi = self.bounding_box
        return np.all((x >= lo) & (x <= hi), axis=-1)


def classify_points(domain: Domain, x: Array, eps: float) -> Array:
    """Vectorised region tags; assumes the points lie in the bounding box."""
    d = domain.signed_distance(np.asarray(x, dtype=float))
    tags = np.full(np.shape(d), Region.OUTSIDE, dtype=np.int8)
    tags[d <= eps] = Region.OUTER_STRIP
    tags[d < 0.0] = Region.INNER_STRIP
    tags[d <= -eps] = Region.INTERIOR
    return tags


def classify_point(domain: Domain, x: Array, eps: float) -> Region:
    """Classify one point into interior, inner strip, outer strip or outside.

    The inner strip is the open band of points of the domain closer than
    ``eps`` to the boundary; the outer strip is the closed band outside it
    (boundary included).  Raises :class:`GeometryError` for points beyond
    the bounding box, where the signed distance is not trusted.
    """
    if eps <= 0:
        raise GeometryError(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=float)
    if not domain.contains_in_box(x):
        raise GeometryError(f"point {x} outside bounding box of {domain.name}")
    return Region(int(classify_points(domain, x, eps)))


def boundary_cutoff(domain: Domain, x: Array, eps: float) -> float:
    """Stopping ramp: 0 in the deep interior, 1 - dist/eps in the inner
    strip, 1 on the closed outer strip.  Undefined beyond the outer strip.
    """
    region = classify_point(domain, x, eps)
    if region == Region.OUTSIDE:
        raise GeometryError(f"cut-off undefined outside the eps-neighbourhood: {x}")
    if region == Region.INTERIOR:
        return 0.0
    if region == Region.OUTER_STRIP:
        return 1.0
    d = float(domain.signed_distance(np.asarray(x, dtype=float)))
    return 1.0 + d / eps  # d in (-eps, 0): equals 1 - dist/eps


def boundary_cutoff_values(domain: Domain, x: Array, eps: float) -> Array:
    """Vectorised cut-off over points known to lie in the closed
    eps-neighbourhood (values for points beyond it are clipped to 1 and
    must be masked by the caller)."""
    d = domain.signed_distance(np.asarray(x, dtype=float))
    return np.clip(1.0 + d / eps, 0.0, 1.0)


@dataclass(frozen=True)
class ExponentField:
    """Variable exponent p(x) with certified bounds 1 < p_min <= p_max."""

    p: PointFunc
    p_min: float
    p_max: float

    def __post_init__(self) -> None:
        if not self.p_min > 1.0:
            raise InvalidExponentError(f"p_min must exceed 1, got {self.p_min}")
        if not self.p_min <= self.p_max < math.inf:
            raise InvalidExponentError(
                f"need p_min <= p_max < inf, got [{self.p_min}, {self.p_max}]"
            )

    def alpha_bounds(self, n: int) -> tuple[float, float]:
        """(alpha_min, alpha_max) induced by the exponent bounds; the mixing
        weight (p-1)/(p+n) is increasing in p."""
        return (self.p_min - 1.0) / (self.p_min + n), (self.p_max - 1.0) / (self.p_max + n)

    def beta_min(self, n: int) -> float:
        return 1.0 - self.alpha_bounds(n)[1]


def alpha_beta(pfield: ExponentField, x: Array, n: int) -> tuple[float, float]:
    """Mixing weights (alpha, beta) at x: alpha = (p-1)/(p+n), beta = 1 - alpha."""
    value = float(pfield.p(np.asarray(x, dtype=float)))
    if value <= 1.0:
        raise InvalidExponentError(f"p(x) = {value} <= 1 at x = {x}")
    a = (value - 1.0) / (value + n)
    return a, 1.0 - a


def alpha_values(pfield: ExponentField, x: Array, n: int) -> Array:
    """Vectorised alpha = (p-1)/(p+n); raises if any sampled p(x) <= 1."""
    values = np.asarray(pfield.p(np.asarray(x, dtype=float)), dtype=float)
    if np.any(values <= 1.0):
        raise InvalidExponentError("p(x) <= 1 at a sampled point")
    return (values - 1.0) / (values + n)


@dataclass(frozen=True)
class BoundaryData:
    """Boundary payoff F, supplied on all of R^n and restricted to the strip.

    Supplying F globally realises the continuous extension that the
    boundary estimate needs without a separate extension algorithm.
    ``lipschitz`` is an optional modulus hint used only as metadata.
    """

    f: PointFunc
    lipschitz: Optional[float] = None

    def __call__(self, x: Array) -> Array:
        return self.f(np.asarray(x, dtype=float))


def strip_bounds(
    boundary: BoundaryData,
    domain: Domain,
    eps: float,
    n_samples: int = 20000,
    seed: int = 0,
) -> tuple[float, float]:
    """(inf F, sup F) over a dense sample of the closed width-eps strip."""
    rng = np.random.default_rng(seed)
    lo, hi = domain.bounding_box
    found_lo = math.inf
    found_hi = -math.inf
    found = 0
    while found < n_samples:
        pts = rng.uniform(lo, hi, size=(4 * n_samples, domain.dimension))
        d = domain.signed_distance(pts)
        sel = np.abs(d) <= eps
        if not np.any(sel):
            continue
        vals = boundary(pts[sel])
        found_lo = min(found_lo, float(np.min(vals)))
        found_hi = max(found_hi, float(np.max(vals)))
        found += int(np.count_nonzero(sel))
    return found_lo, found_hi


# ---------------------------------------------------------------------------
# Domain presets: closed-form signed distances keep strip classification exact.


def disk_domain(center: Sequence[float] = (0.0, 0.0), radius: float = 1.0) -> Domain:
    """Ball of given radius; works in any dimension >= 2."""
    c = np.asarray(center, dtype=float)
    n = c.size
    if radius <= 0:
        raise GeometryError("radius must be positive")

    def sdist(x: Array) -> Array:
        return np.linalg.norm(np.asarray(x, dtype=float) - c, axis=-1) - radius

    pad = radius + 1.0
    box = np.stack([c - pad, c + pad])

    def ext_ball(y: Array, r: float) -> Array:
        out = np.asarray(y, dtype=float) - c
        nrm = np.linalg.norm(out)
        if nrm == 0.0:
            raise GeometryError("exterior ball undefined at the center")
        return np.asarray(y, dtype=float) + (r / 2.0) * out / nrm

    return Domain(
        signed_distance=sdist,
        bounding_box=box,
        diameter=2.0 * radius,
        dimension=n,
        name="disk",
        exterior_ball=ext_ball,
        exterior_ball_s=0.5,
        exterior_ball_r0=0.5,
    )


def annulus_domain(
    inner: float = 0.25,
    outer: float = 1.0,
    center: Sequence[float] = (0.0, 0.0),
) -> Domain:
    """Points with inner < |x - c| < outer."""
    if not 0 < inner < outer:
        raise GeometryError("need 0 < inner < outer")
    c = np.asarray(center, dtype=float)
    n = c.size

    def sdist(x: Array) -> Array:
        r = np.linalg.norm(np.asarray(x, dtype=float) - c, axis=-1)
        return np.maximum(r - outer, inner - r)

    pad = outer + 1.0
    box = np.stack([c - pad, c + pad])

    def ext_ball(y: Array, r: float) -> Array:
        y = np.asarray(y, dtype=float)
        rel = y - c
        nrm = np.linalg.norm(rel)
        # outward for the outer circle, into the hole for the inner one
        sign = 1.0 if nrm >= (inner + outer) / 2.0 else -1.0
        return y + sign * (r / 2.0) * rel / nrm

    return Domain(
        signed_distance=sdist,
        bounding_box=box,
        diameter=2.0 * outer,
        dimension=n,
        name="annulus",
        exterior_ball=ext_ball,
        exterior_ball_s=0.5,
        exterior_ball_r0=min(inner, 0.5),
    )


def box_domain(lo: Sequence[float], hi: Sequence[float]) -> Domain:
    """Axis-aligned box with the exact exterior/interior distance."""
    lo_a = np.asarray(lo, dtype=float)
    hi_a = np.asarray(hi, dtype=float)
    if lo_a.shape != hi_a.shape or not np.all(lo_a < hi_a):
        raise GeometryError("box needs lo < hi componentwise")
    c = (lo_a + hi_a) / 2.0
    half = (hi_a - lo_a) / 2.0
    n = c.size

    def sdist(x: Array) -> Array:
        q = np.abs(np.asarray(x, dtype=float) - c) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    box = np.stack([lo_a - 1.0, hi_a + 1.0])

    def ext_ball(y: Array, r: float) -> Array:
        y = np.asarray(y, dtype=float)
        q = np.abs(y - c) - half
        w = np.where(q >= -1e-9, np.sign(y - c), 0.0)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            raise GeometryError(f"{y} is not a boundary point of the box")
        return y + (r / 2.0) * w / nrm

    return Domain(
        signed_distance=sdist,
        bounding_box=box,
        diameter=float(np.linalg.norm(hi_a - lo_a)),
        dimension=n,
        name="box",
        exterior_ball=ext_ball,
        exterior_ball_s=0.5,
        exterior_ball_r0=0.5,
    )


def polygon_domain(vertices: Sequence[Sequence[float]]) -> Domain:
    """Simple polygon in the plane via exact point-segment distances."""
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 2:
        raise GeometryError("polygon needs at least 3 planar vertices")
    a = verts
    b = np.roll(verts, -1, axis=0)
    edge = b - a
    edge_len2 = np.sum(edge**2, axis=1)

    def sdist(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        pts = x.reshape(-1, 2)
        rel = pts[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pki,ki->pk", rel, edge) / edge_len2, 0.0, 1.0)
        closest = a[None, :, :] + t[..., None] * edge[None, :, :]
        dist = np.min(np.linalg.norm(pts[:, None, :] - closest, axis=-1), axis=1)
        # even-odd crossing rule for the sign
        ya, yb = a[None, :, 1], b[None, :, 1]
        cond = (ya <= pts[:, None, 1]) != (yb <= pts[:, None, 1])
        xcross = a[None, :, 0] + (pts[:, None, 1] - ya) / (yb - ya + 1e-300) * edge[None, :, 0]
        inside = (np.count_nonzero(cond & (pts[:, None, 0] < xcross), axis=1) % 2) == 1
        signed = np.where(inside, -dist, dist)
        return signed.reshape(x.shape[:-1])

    lo_a = verts.min(axis=0)
    hi_a = verts.max(axis=0)
    diffs = verts[:, None, :] - verts[None, :, :]
    diam = float(np.max(np.linalg.norm(diffs, axis=-1)))
    box = np.stack([lo_a - 1.0, hi_a + 1.0])
    return Domain(
        signed_distance=sdist,
        bounding_box=box,
        diameter=diam,
        dimension=2,
        name="polygon",
    )


# ---------------------------------------------------------------------------
# Exponent presets.


def constant_exponent(value: float) -> ExponentField:
    if value <= 1.0:
        raise InvalidExponentError(f"constant exponent must exceed 1, got {value}")
    return ExponentField(p=lambda x: np.full(np.shape(x)[:-1], value), p_min=value, p_max=value)


def linear_exponent(
    base: float, gradient: Sequence[float], p_min: float, p_max: float
) -> ExponentField:
    g = np.asarray(gradient, dtype=float)

    def p(x: Array) -> Array:
        return np.clip(base + np.asarray(x, dtype=float) @ g, p_min, p_max)

    return ExponentField(p=p, p_min=p_min, p_max=p_max)


def radial_exponent(
    base: float,
    scale: float,
    p_min: float,
    p_max: float,
    center: Sequence[float] = (0.0, 0.0),
) -> ExponentField:
    c = np.asarray(center, dtype=float)

    def p(x: Array) -> Array:
        r2 = np.sum((np.asarray(x, dtype=float) - c) ** 2, axis=-1)
        return np.clip(base + scale * r2, p_min, p_max)

    return ExponentField(p=p, p_min=p_min, p_max=p_max)


def quadratic_exponent(
    base: float, coefficients: Sequence[float], p_min: float, p_max: float
) -> ExponentField:
    """p(x) = base + sum_i c_i x_i^2, clipped to [p_min, p_max]."""
    coef = np.asarray(coefficients, dtype=float)

    def p(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.clip(base + (x**2) @ coef, p_min, p_max)

    return ExponentField(p=p, p_min=p_min, p_max=p_max)


# ---------------------------------------------------------------------------
# Boundary payoff presets.


def constant_boundary(value: float) -> BoundaryData:
    return BoundaryData(f=lambda x: np.full(np.shape(x)[:-1], value), lipschitz=0.0)


def affine_boundary(gradient: Sequence[float], offset: float = 0.0) -> BoundaryData:
    g = np.asarray(gradient, dtype=float)
    return BoundaryData(
        f=lambda x: np.asarray(x, dtype=float) @ g + offset,
        lipschitz=float(np.linalg.norm(g)),
    )


def product_boundary(scale: float = 1.0) -> BoundaryData:
    """F(x) = scale * x_1 * x_2, harmonic in the plane."""

    def f(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return scale * x[..., 0] * x[..., 1]

    return BoundaryData(f=f)


def radial_power_boundary(
    exponent: float, scale: float = 1.0, center: Sequence[float] = (0.0, 0.0)
) -> BoundaryData:
    c = np.asarray(center, dtype=float)

    def f(x: Array) -> Array:
        r = np.linalg.norm(np.asarray(x, dtype=float) - c, axis=-1)
        return scale * r**exponent

    return BoundaryData(f=f)


def fourier_boundary(seed: int, terms: int = 4, amplitude: float = 1.0) -> BoundaryData:
    """Random smooth payoff: a seeded mix of plane-wave cosines."""
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(-2.0, 2.0, size=(terms, 2))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=terms)
    amps = rng.uniform(0.2, 1.0, size=terms) * amplitude / terms

    def f(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        args = np.einsum("...i,ki->...k", x[..., :2], freqs) + phases
        return np.sum(amps * np.cos(args), axis=-1)

    lip = float(np.sum(np.abs(amps) * np.linalg.norm(freqs, axis=1)))
    return BoundaryData(f=f, lipschitz=lip)
