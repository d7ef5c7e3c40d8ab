"""Direction sets, disk quadrature and the frame rotation.

The one-step operator averages over the (n-1)-dimensional ball orthogonal
to the chosen direction.  The quadrature lives in a reference frame (the
hyperplane orthogonal to e1) and is carried to the hyperplane orthogonal
to a direction ``nu`` by a fixed orthogonal map ``rotation_matrix(nu)``.
Both the direction set and the quadrature are antipodally symmetric so
that affine integrands average to the center value exactly, and the
quadrature weights are calibrated so the second moment matches the exact
mean of |y|^2 over the unit (n-1)-ball, (n-1)/(n+1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

Array = np.ndarray


@dataclass(frozen=True)
class DirectionSet:
    """Finite antipodally-closed set of unit vectors sampling the sphere.

    Directions are stored so that index ``m + M/2`` is the exact negation
    of index ``m``; ties in argmax/argmin scans resolve to the lowest
    index.
    """

    directions: Array
    antipodal_closure: bool = True

    def __post_init__(self) -> None:
        dirs = np.asarray(self.directions, dtype=float)
        if dirs.ndim != 2 or dirs.shape[0] == 0:
            raise ConfigurationError("direction set must be a nonempty (M, n) array")
        norms = np.linalg.norm(dirs, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise ConfigurationError("directions must have unit norm within 1e-12")
        object.__setattr__(self, "directions", dirs)

    def __len__(self) -> int:
        return self.directions.shape[0]

    @property
    def dimension(self) -> int:
        return self.directions.shape[1]


def direction_set(n: int, count: int) -> DirectionSet:
    """Build the default direction set: evenly spaced angles in the plane,
    a Fibonacci hemisphere plus antipodes in space.  ``count`` must be even
    so the antipodal closure is exact by construction."""
    if count < 2 or count % 2 != 0:
        raise ConfigurationError(f"direction count must be even and >= 2, got {count}")
    half = count // 2
    if n == 2:
        angles = np.pi * np.arange(half) / half
        first = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    elif n == 3:
        # Fibonacci points on the upper hemisphere
        golden = np.pi * (3.0 - np.sqrt(5.0))
        i = np.arange(half)
        z = (i + 0.5) / half
        rho = np.sqrt(np.maximum(0.0, 1.0 - z**2))
        theta = golden * i
        first = np.stack([rho * np.cos(theta), rho * np.sin(theta), z], axis=1)
        first /= np.linalg.norm(first, axis=1, keepdims=True)
    else:
        raise ConfigurationError(f"direction sets implemented for n in (2, 3), got {n}")
    return DirectionSet(directions=np.concatenate([first, -first], axis=0))


@dataclass(frozen=True)
class DiskQuadrature:
    """Nodes and weights averaging over the unit (n-1)-ball in e1-perp.

    Nodes are full n-vectors with zero first component.  Weights are
    positive, sum to one, the node multiset is closed under negation, and
    the second moment sum(w |y|^2) equals (n-1)/(n+1) exactly up to
    calibration round-off.
    """

    nodes: Array
    weights: Array

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 2 or weights.shape != (nodes.shape[0],):
            raise ConfigurationError("quadrature needs (K, n) nodes and (K,) weights")
        if np.any(weights <= 0):
            raise ConfigurationError("quadrature weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def dimension(self) -> int:
        return self.nodes.shape[1]


def _calibrate(base: Array, moment: Array, target: float) -> Array:
    """Rescale weights as w = a + b * moment so they sum to 1 and the
    weighted moment hits ``target`` exactly."""
    k = base.size
    s1, s2 = float(np.sum(moment)), float(np.sum(moment**2))
    det = k * s2 - s1 * s1
    a = (s2 - s1 * target) / det
    b = (k * target - s1) / det
    return a + b * moment


def disk_quadrature(n: int, size: int = 16) -> DiskQuadrature:
    """Default quadrature: calibrated midpoints on the diameter segment in
    the plane, a tensor ring-angle rule in space."""
    if n == 2:
        if size < 4 or size % 2 != 0:
            raise ConfigurationError(f"segment rule needs even size >= 4, got {size}")
        t = -1.0 + (np.arange(size) + 0.5) * (2.0 / size)
        weights = _calibrate(np.full(size, 1.0 / size), t**2, 1.0 / 3.0)
        nodes = np.zeros((size, 2))
        nodes[:, 1] = t
        return DiskQuadrature(nodes=nodes, weights=weights)
    if n == 3:
        rings = max(2, int(round(np.sqrt(size / 2.0))))
        angles = 2 * max(2, rings)
        r = (np.arange(rings) + 0.5) / rings
        ring_w = _calibrate(2.0 * r / rings, r**2, 0.5)
        theta = 2.0 * np.pi * np.arange(angles) / angles
        nodes = np.zeros((rings * angles, 3))
        weights = np.empty(rings * angles)
        for i in range(rings):
            sl = slice(i * angles, (i + 1) * angles)
            nodes[sl, 1] = r[i] * np.cos(theta)
            nodes[sl, 2] = r[i] * np.sin(theta)
            weights[sl] = ring_w[i] / angles
        return DiskQuadrature(nodes=nodes, weights=weights)
    raise ConfigurationError(f"disk quadrature implemented for n in (2, 3), got {n}")


def rotation_matrix(nu: Array) -> Array:
    """Deterministic orthogonal map sending e1 to the unit vector ``nu``.

    Reflection through the bisector span(e1 + nu); continuous in ``nu``
    except at nu = -e1, where a fixed half-turn (e2 kept, every other axis
    flipped) is used instead.
    """
    nu = np.asarray(nu, dtype=float)
    n = nu.size
    e1_plus = nu.copy()
    e1_plus[0] += 1.0
    s = float(e1_plus @ e1_plus)
    if s < 1e-12:
        diag = -np.ones(n)
        if n > 2:
            diag[1] = 1.0
        return np.diag(diag)
    return 2.0 * np.outer(e1_plus, e1_plus) / s - np.eye(n)


def rotate_frame_axis(nu: Array) -> Array:
    """Image of e2 under ``rotation_matrix(nu)`` without building the matrix;
    in the plane this is the unit vector spanning the noise segment."""
    nu = np.asarray(nu, dtype=float)
    e1_plus = nu.copy()
    e1_plus[0] += 1.0
    s = float(e1_plus @ e1_plus)
    if s < 1e-12:
        axis = np.zeros(nu.size)
        axis[1] = 1.0 if nu.size > 2 else -1.0
        return axis
    axis = (2.0 * e1_plus[1] / s) * e1_plus
    axis[1] -= 1.0
    return axis


def disk_points(x: Array, nu: Array, eps: float, quad: DiskQuadrature) -> Array:
    """Quadrature sample points of the radius-eps disk orthogonal to nu at x."""
    rot = rotation_matrix(nu)
    return np.asarray(x, dtype=float) + eps * quad.nodes @ rot.T


def disk_average_fn(f, x: Array, nu: Array, eps: float, quad: DiskQuadrature) -> float:
    """Quadrature average of a function over the disk orthogonal to nu."""
    pts = disk_points(x, nu, eps, quad)
    return float(quad.weights @ np.asarray(f(pts), dtype=float))
