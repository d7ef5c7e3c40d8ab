"""Lattice discretization and monotone bracket iteration of the one-step
dynamic programming operator.

A candidate value function lives on a uniform lattice covering the closed
eps-neighbourhood of the domain plus a safety pad.  One application of the
operator replaces the value at every domain node by

    (1 - delta)/2 * [ max_m W(u; x, nu_m) + min_m W(u; x, nu_m) ] + delta * F(x)

where W(u; x, nu) = alpha(x) u(x + eps nu) + beta(x) <disk average>, the
max/min run over a finite antipodally-closed direction set, and nodes on
the closed outer strip (and the pad ring beyond it) are pinned to the
boundary payoff and never recomputed.  Because every evaluation point is a
fixed offset from the lattice, each direction reduces to a constant-weight
stencil, applied with array shifts.

The bracket solver iterates the operator from the two constants inf F and
sup F.  The lower iterates increase, the upper ones decrease, and the
sup-norm gap between them is a computable error bound for the unique
fixed point.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, GridRangeError
from .geometry import (
    BoundaryData,
    Domain,
    ExponentField,
    Region,
    alpha_values,
    classify_points,
)
from .quadrature import DirectionSet, DiskQuadrature, rotation_matrix

Array = np.ndarray

#: lattice spacing as a fraction of eps when not specified explicitly
DEFAULT_SPACING_FRACTION = 0.25

try:  # fused sweep kernel; the numpy path below stays as the reference
    from numba import njit

    @njit(cache=True)
    def _fused_sweep(vals, out, upd, u_ptr, u_off, u_w, disk_map,
                     end_ptr, end_off, end_w, alpha_u, beta_u, hs_u, df_u, n_unique):
        dvals = np.empty(n_unique)
        for ii in range(upd.size):
            i = upd[ii]
            for u in range(n_unique):
                s = 0.0
                for k in range(u_ptr[u], u_ptr[u + 1]):
                    s += u_w[k] * vals[i + u_off[k]]
                dvals[u] = s
            wmax = -1e300
            wmin = 1e300
            a = alpha_u[ii]
            b = beta_u[ii]
            for m in range(disk_map.size):
                e = 0.0
                for k in range(end_ptr[m], end_ptr[m + 1]):
                    e += end_w[k] * vals[i + end_off[k]]
                w = a * e + b * dvals[disk_map[m]]
                if w > wmax:
                    wmax = w
                if w < wmin:
                    wmin = w
            out[i] = hs_u[ii] * (wmax + wmin) + df_u[ii]

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


@dataclass
class GridField:
    """Values of a candidate function on a uniform lattice.

    ``values`` has shape ``shape``; node ``i`` sits at ``origin + spacing*i``.
    ``eps`` is the step radius of the scheme the lattice was built for.
    """

    origin: Array
    spacing: float
    shape: tuple[int, ...]
    values: Array
    eps: float

    def copy(self) -> "GridField":
        return GridField(self.origin, self.spacing, self.shape, self.values.copy(), self.eps)

    def node_points(self) -> Array:
        axes = [self.origin[i] + self.spacing * np.arange(self.shape[i]) for i in range(len(self.shape))]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)


@dataclass
class SolverReport:
    """Diagnostics of one bracket solve."""

    iterations: int
    bracket_gap: float
    last_update: float
    wall_time: float
    converged: bool
    gap_history: list = field(default_factory=list)
    min_lower_step: float = 0.0
    max_upper_step: float = 0.0


def interpolate_many(fld: GridField, pts: Array) -> Array:
    """Multilinear interpolation at points of shape (P, n); exact on
    affine (and, in 2D, bilinear) node data."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = len(fld.shape)
    rel = (pts - fld.origin) / fld.spacing
    tol = 1e-9
    upper = np.asarray(fld.shape, dtype=float) - 1.0
    if np.any(rel < -tol) or np.any(rel > upper + tol):
        raise GridRangeError("interpolation point outside lattice extents")
    base = np.floor(rel).astype(np.int64)
    np.clip(base, 0, np.asarray(fld.shape) - 2, out=base)
    frac = rel - base
    flat = fld.values.reshape(-1)
    strides = np.array([int(np.prod(fld.shape[i + 1 :])) for i in range(n)], dtype=np.int64)
    base_flat = base @ strides
    acc = np.zeros(pts.shape[0])
    for corner in itertools.product((0, 1), repeat=n):
        w = np.ones(pts.shape[0])
        off = 0
        for axis, bit in enumerate(corner):
            w *= frac[:, axis] if bit else 1.0 - frac[:, axis]
            off += bit * strides[axis]
        acc += w * flat[base_flat + off]
    return acc


def interpolate(fld: GridField, x: Array) -> float:
    """Multilinear interpolation at a single point."""
    return float(interpolate_many(fld, np.asarray(x, dtype=float)[None, :])[0])


def disk_average(
    fld: GridField, x: Array, nu_unit: Array, eps: Optional[float] = None, quad: DiskQuadrature = None
) -> float:
    """Quadrature average of the field over the radius-eps disk orthogonal
    to ``nu_unit`` centered at x, in the rotated reference frame."""
    if quad is None:
        raise ConfigurationError("disk_average requires a quadrature")
    e = fld.eps if eps is None else eps
    rot = rotation_matrix(np.asarray(nu_unit, dtype=float))
    pts = np.asarray(x, dtype=float) + e * quad.nodes @ rot.T
    return float(quad.weights @ interpolate_many(fld, pts))


def eval_W(
    fld: GridField,
    x: Array,
    nu_unit: Array,
    domain: Domain,
    pfield: ExponentField,
    quad: DiskQuadrature,
    eps: Optional[float] = None,
) -> float:
    """One-direction expected value alpha(x) u(x + eps nu) + beta(x) <disk avg>."""
    from .geometry import alpha_beta

    e = fld.eps if eps is None else eps
    x = np.asarray(x, dtype=float)
    a, b = alpha_beta(pfield, x, domain.dimension)
    endpoint = interpolate(fld, x + e * np.asarray(nu_unit, dtype=float))
    return a * endpoint + b * disk_average(fld, x, nu_unit, e, quad)


def _bilinear_stencil(offset: Array, spacing: float, scale: float = 1.0) -> dict:
    """Decompose a fixed offset into integer shifts with multilinear weights."""
    rel = np.asarray(offset, dtype=float) / spacing
    base = np.floor(rel).astype(int)
    frac = rel - base
    out: dict[tuple, float] = {}
    n = rel.size
    for corner in itertools.product((0, 1), repeat=n):
        w = scale
        for axis, bit in enumerate(corner):
            w *= frac[axis] if bit else 1.0 - frac[axis]
        if w == 0.0:
            continue
        key = tuple(int(base[axis] + corner[axis]) for axis in range(n))
        out[key] = out.get(key, 0.0) + w
    return out


def _merge_stencils(parts: list[dict]) -> list[tuple[tuple, float]]:
    merged: dict[tuple, float] = {}
    for part in parts:
        for key, w in part.items():
            merged[key] = merged.get(key, 0.0) + w
    return sorted(merged.items())


class DppOperator:
    """Precomputed one-sweep application of the dynamic programming operator
    on a fixed lattice.

    Building the operator classifies every node once, pins outer-strip and
    pad nodes to the boundary payoff, and converts every direction's
    endpoint and disk evaluations into constant-weight shift stencils.
    ``apply`` is pure: node computations read only the input array.
    """

    PAD_CELLS = 4

    def __init__(
        self,
        domain: Domain,
        pfield: ExponentField,
        boundary: BoundaryData,
        eps: float,
        dirs: DirectionSet,
        quad: DiskQuadrature,
        spacing: Optional[float] = None,
    ) -> None:
        if eps <= 0:
            raise ConfigurationError(f"eps must be positive, got {eps}")
        if len(dirs) == 0:
            raise ConfigurationError("direction set is empty")
        n = domain.dimension
        if dirs.dimension != n or quad.dimension != n:
            raise ConfigurationError("direction set / quadrature dimension mismatch")
        h = eps * DEFAULT_SPACING_FRACTION if spacing is None else spacing
        if h <= 0 or h > eps:
            raise ConfigurationError(f"spacing must lie in (0, eps], got {h}")
        self.domain = domain
        self.pfield = pfield
        self.boundary = boundary
        self.eps = float(eps)
        self.spacing = float(h)
        self.dirs = dirs
        self.quad = quad

        tight = domain.tight_box
        pad = eps + self.PAD_CELLS * h
        lo = tight[0] - pad
        hi = tight[1] + pad
        shape = tuple(int(np.ceil((hi[i] - lo[i]) / h)) + 1 for i in range(n))
        self.origin = lo
        self.shape = shape

        pts = self._node_points()
        flatpts = pts.reshape(-1, n)
        sd = domain.signed_distance(flatpts).reshape(shape)
        self.region = np.full(shape, Region.OUTSIDE, dtype=np.int8)
        self.region[sd <= eps] = Region.OUTER_STRIP
        self.region[sd < 0.0] = Region.INNER_STRIP
        self.region[sd <= -eps] = Region.INTERIOR
        self.update_mask = sd < 0.0
        self.pinned_mask = ~self.update_mask

        fvals = np.asarray(boundary(flatpts), dtype=float).reshape(shape)
        self.f_values = fvals
        self.pinned_values = fvals[self.pinned_mask]

        delta = np.clip(1.0 + sd / eps, 0.0, 1.0)
        delta[self.pinned_mask] = 1.0
        self.delta = delta
        self.half_survive = 0.5 * (1.0 - delta)
        self.delta_f = np.where(self.update_mask, delta * fvals, 0.0)

        upd_pts = flatpts[self.update_mask.reshape(-1)]
        a_upd = alpha_values(pfield, upd_pts, n)
        alpha = np.full(shape, 0.5)
        alpha[self.update_mask] = a_upd
        self.alpha = alpha
        self.beta = 1.0 - alpha

        self._build_stencils()
        self._scratch: dict[tuple, list] = {}

    # -- lattice helpers ---------------------------------------------------

    def _node_points(self) -> Array:
        axes = [self.origin[i] + self.spacing * np.arange(self.shape[i]) for i in range(len(self.shape))]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def field(self, values: Array) -> GridField:
        if values.shape != self.shape:
            raise ConfigurationError("values do not match the operator lattice")
        return GridField(self.origin, self.spacing, self.shape, values, self.eps)

    def constant_field(self, value: float) -> GridField:
        vals = np.full(self.shape, float(value))
        vals[self.pinned_mask] = self.pinned_values
        return self.field(vals)

    def boundary_bounds(self) -> tuple[float, float]:
        """(inf F, sup F) over every node where the payoff is ever read:
        the pinned nodes and the inner strip."""
        sel = self.region != Region.INTERIOR
        vals = self.f_values[sel]
        return float(np.min(vals)), float(np.max(vals))

    # -- stencils ------------------------------------------------------------

    def _build_stencils(self) -> None:
        n = self.domain.dimension
        h = self.spacing
        m_count = len(self.dirs)
        self.end_stencils: list[list] = []
        self.disk_stencils: list[list] = []
        share_antipodes = n == 2 and self.dirs.antipodal_closure
        half = m_count // 2
        for m, nu in enumerate(self.dirs.directions):
            self.end_stencils.append(sorted(_bilinear_stencil(self.eps * nu, h).items()))
            if share_antipodes and m >= half:
                # the noise disk and its quadrature multiset agree for +-nu
                self.disk_stencils.append(self.disk_stencils[m - half])
                continue
            rot = rotation_matrix(nu)
            offsets = self.eps * self.quad.nodes @ rot.T
            parts = [
                _bilinear_stencil(offsets[k], h, scale=self.quad.weights[k])
                for k in range(offsets.shape[0])
            ]
            self.disk_stencils.append(_merge_stencils(parts))

        seen: dict[int, int] = {}
        self._disk_reused_later = [False] * m_count
        for m, st in enumerate(self.disk_stencils):
            if id(st) in seen:
                self._disk_reused_later[seen[id(st)]] = True
            else:
                seen[id(st)] = m

        max_shift = 0
        for st in self.end_stencils + self.disk_stencils:
            for key, _ in st:
                max_shift = max(max_shift, max(abs(s) for s in key))
        idx = np.argwhere(self.update_mask)
        if idx.size:
            lo = idx.min(axis=0)
            hi = np.asarray(self.shape) - 1 - idx.max(axis=0)
            if lo.min() < max_shift or hi.min() < max_shift:
                raise ConfigurationError("lattice padding too small for the stencil reach")
        self._max_shift = max_shift

    def _shift_slices(self, shift: tuple) -> tuple[tuple, tuple]:
        dst = []
        src = []
        for s, dim in zip(shift, self.shape):
            lo = max(0, -s)
            hi = dim - max(0, s)
            dst.append(slice(lo, hi))
            src.append(slice(lo + s, hi + s))
        return tuple(dst), tuple(src)

    def _apply_stencil(self, stencil: list, values: Array, out: Array) -> None:
        out.fill(0.0)
        lead = (slice(None),) * (values.ndim - len(self.shape))
        for shift, w in stencil:
            dst, src = self._shift_slices(shift)
            out[lead + dst] += w * values[lead + src]

    # -- sweeps ----------------------------------------------------------------

    def _buffers(self, batch_shape: tuple) -> list:
        key = batch_shape
        if key not in self._scratch:
            full = batch_shape + self.shape
            self._scratch[key] = [np.empty(full) for _ in range(6)]
        return self._scratch[key]

    def apply_batch(self, values: Array) -> Array:
        """One sweep over a stack of fields, shape (..., *lattice shape)."""
        batch_shape = values.shape[: values.ndim - len(self.shape)]
        end, dsk, w_buf, tmp, smax, smin = self._buffers(batch_shape)
        disk_cache: dict[int, Array] = {}
        first = True
        for m in range(len(self.dirs)):
            self._apply_stencil(self.end_stencils[m], values, end)
            st = self.disk_stencils[m]
            disk_here = disk_cache.get(id(st))
            if disk_here is None:
                self._apply_stencil(st, values, dsk)
                if self._disk_reused_later[m]:
                    disk_here = dsk.copy()
                    disk_cache[id(st)] = disk_here
                else:
                    disk_here = dsk
            np.multiply(end, self.alpha, out=w_buf)
            np.multiply(disk_here, self.beta, out=tmp)
            w_buf += tmp
            if first:
                smax[...] = w_buf
                smin[...] = w_buf
                first = False
            else:
                np.maximum(smax, w_buf, out=smax)
                np.minimum(smin, w_buf, out=smin)
        out = self.half_survive * (smax + smin)
        out += self.delta_f
        out[..., self.pinned_mask] = self.pinned_values
        return out

    def apply(self, fld: GridField) -> GridField:
        """One sweep; returns a new field, the input is untouched."""
        if fld.values.shape != self.shape:
            raise ConfigurationError("field does not match the operator lattice")
        return self.field(self.apply_batch(fld.values))


def apply_T(
    fld: GridField,
    domain: Domain,
    pfield: ExponentField,
    boundary: BoundaryData,
    dirs: DirectionSet,
    quad: DiskQuadrature,
) -> GridField:
    """One application of the dynamic programming operator on the field's
    own lattice.  Outer-strip and pad nodes come back holding exactly the
    boundary payoff."""
    op = DppOperator(domain, pfield, boundary, fld.eps, dirs, quad, spacing=fld.spacing)
    if op.shape != fld.values.shape:
        raise ConfigurationError("field lattice does not match the domain lattice")
    return op.apply(fld)


def solve_bracket(
    domain: Domain,
    pfield: ExponentField,
    boundary: BoundaryData,
    eps: float,
    tol: float = 1e-8,
    max_iters: int = 100000,
    dirs: Optional[DirectionSet] = None,
    quad: Optional[DiskQuadrature] = None,
    spacing: Optional[float] = None,
    operator: Optional[DppOperator] = None,
) -> tuple[GridField, GridField, SolverReport]:
    """Monotone bracket iteration from the constants inf F and sup F.

    Both iterates are swept until the sup-norm gap between them falls to
    ``tol`` or ``max_iters`` sweeps elapse; non-convergence is flagged in
    the report, not raised.  The report also records the extreme nodewise
    increments seen, so monotonicity of the two brackets is checkable
    after the fact.
    """
    if tol <= 0:
        raise ConfigurationError(f"tol must be positive, got {tol}")
    from .quadrature import direction_set, disk_quadrature

    n = domain.dimension
    if dirs is None:
        dirs = direction_set(n, 32 if n == 2 else 64)
    if quad is None:
        quad = disk_quadrature(n)
    op = operator or DppOperator(domain, pfield, boundary, eps, dirs, quad, spacing)

    t0 = time.perf_counter()
    inf_f, sup_f = op.boundary_bounds()
    pair = np.stack([op.constant_field(inf_f).values, op.constant_field(sup_f).values])
    gap = float(np.max(pair[1] - pair[0]))
    history = [(0, gap)]
    min_lower_step = np.inf
    max_upper_step = -np.inf
    last_update = np.inf
    converged = gap <= tol
    sweeps = 0
    while not converged and sweeps < max_iters:
        new_pair = op.apply_batch(pair)
        d_lower = new_pair[0] - pair[0]
        d_upper = new_pair[1] - pair[1]
        min_lower_step = min(min_lower_step, float(np.min(d_lower)))
        max_upper_step = max(max_upper_step, float(np.max(d_upper)))
        last_update = max(float(np.max(np.abs(d_lower))), float(np.max(np.abs(d_upper))))
        pair = new_pair.copy()
        sweeps += 1
        gap = float(np.max(pair[1] - pair[0]))
        history.append((sweeps, gap))
        converged = gap <= tol
    report = SolverReport(
        iterations=sweeps,
        bracket_gap=gap,
        last_update=0.0 if sweeps == 0 else last_update,
        wall_time=time.perf_counter() - t0,
        converged=converged,
        gap_history=history,
        min_lower_step=0.0 if sweeps == 0 else min_lower_step,
        max_upper_step=0.0 if sweeps == 0 else max_upper_step,
    )
    return op.field(pair[0].copy()), op.field(pair[1].copy()), report
