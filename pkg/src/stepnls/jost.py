"""Jost solutions and scattering data for step-like elliptic backgrounds.

The field is u(x) = u0_l(x) + du(x) for x <= 0 and u0_r(x) + du(x) for
x > 0, where each u0_s is a genus-1 elliptic background and du is a sampled
perturbation with compact numerical support.  Everything here is at t = 0;
the time dependence of scattering data is explicit and handled downstream.

The side-s Jost matrix is computed in the gauge

    W^s = O^s m^s exp(-i (x - x0_s)(p_s - E_s) sigma3),

where m^s solves the Volterra equation (phi_s = p_s(z) - E_s)

    m^s(x) = I + int_{inf_s}^x e^{-i(x-y) phi_s sigma3} O^s(y)^{-1}
             dU^s(y) O^s(y) m^s(y) e^{i(x-y) phi_s sigma3} dy,

with dU^s built from du_s(y) = u(y) - u0_s(y).  The integral starts at
-inf on the left and +inf on the right, but the density vanishes outside a
finite window (the background part of the solution is exact), so only that
window is discretized.  Off the real axis and the bands only one column of
m^s stays bounded; the solver tracks which and refuses the rest.

Numerics: uniform grid, composite product trapezoid -- the density is
linear per panel and integrated exactly against the oscillatory weight
e^{i beta (y - x_i)} -- with cumulative integrals advanced by the one-step
recurrence T_i = e^{-i beta h} T_{i-1} + P_i (scipy.signal.lfilter, so the
Picard sweeps stay vectorized).  A second solve on the half mesh plus
Richardson extrapolation removes the trapezoid's h^2 error.  Band boundary
values are obtained at z + delta n and z + delta n / 2 off the cut
(delta = 1e-6 of the band length) and extrapolated linearly onto it.

Scattering coefficients are Wronskians of Jost columns at an assembly
point (default x = 0, cross-checked at x = +-1): a = det[W1_l, W2_r],
b = det[W1_r, W1_l] (continues to b1 on the right band), b2 =
det[W2_r, W2_l] on the left band and s22 = det[W1_r, W2_l].  The scalar
column phases are combined analytically so nothing overflows at large |z|.
"""

from __future__ import annotations

import cmath
import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .background import (
    O_matrix_grid,
    W0_matrix_grid,
    _H_matrix_grid,
    _point_data,
    u0_theta,
)
from .contours import point_segment_distance

__all__ = [
    "StepPotential",
    "make_step_potential",
    "JostSolution",
    "solve_jost",
    "jost_W",
    "ScatteringPoint",
    "scattering_coeffs",
    "pure_step_lambda",
    "pure_step_oracle",
    "EndpointData",
    "endpoint_limit",
    "asymptotic_expansion",
    "fit_pi_coefficients",
    "ScatteringData",
    "compute_scattering_data",
    "scattering_to_csv",
    "load_scattering_csv",
    "scattering_manifest",
]


# ---------------------------------------------------------------------------
# the potential


@dataclass
class StepPotential:
    """Step-like field: two elliptic backgrounds glued at x = 0 plus a
    localized perturbation.

    The perturbation samples describe u - u0_side on each side's own half
    line; they are interpolated linearly (zero outside the support).  Both
    backgrounds are non-crossing by construction (make_background refuses
    crossing endpoint configurations).
    """

    left: object
    right: object
    x_pert: np.ndarray
    du_pert: np.ndarray
    support: tuple | None
    du_fn: object = None

    def background(self, side):
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        return self.left if side == "left" else self.right

    def du_global(self, xs):
        """The perturbation at xs: the callable when one was kept (exact,
        so interpolation kinks cannot pollute the large-z coefficients),
        else linear interpolation of the samples (0 outside)."""
        xs = np.asarray(xs, dtype=float)
        if self.x_pert.size == 0:
            return np.zeros(xs.shape, dtype=complex)
        if self.du_fn is not None:
            out = np.asarray(self.du_fn(xs), dtype=complex)
            lo, hi = self.support
            out[(xs < lo) | (xs > hi)] = 0.0
            return out
        re = np.interp(xs, self.x_pert, self.du_pert.real, left=0.0, right=0.0)
        im = np.interp(xs, self.x_pert, self.du_pert.imag, left=0.0, right=0.0)
        return re + 1j * im

    def u(self, xs):
        """The full field (left background up to x = 0, right beyond)."""
        xs = np.asarray(xs, dtype=float)
        base = np.where(xs <= 0.0, u0_theta(self.left, xs),
                        u0_theta(self.right, xs))
        return base + self.du_global(xs)

    def du_side(self, side, xs):
        """Deviation u - u0_side seen by that side's Volterra kernel."""
        return self.u(xs) - u0_theta(self.background(side), xs)

    def du_side_limits(self, side, xs):
        """One-sided node values of du_side: (from below, from above).

        The two agree except at x = 0, where the glued field keeps its step;
        panels to the right of the origin must see the upper limit.
        """
        xs = np.asarray(xs, dtype=float)
        ul = u0_theta(self.left, xs)
        ur = u0_theta(self.right, xs)
        own = ul if side == "left" else ur
        pert = self.du_global(xs)
        minus = np.where(xs <= 0.0, ul, ur) + pert - own
        plus = np.where(xs < 0.0, ul, ur) + pert - own
        return minus, plus


def make_step_potential(left, right, perturbation=None, support=(-6.0, 6.0),
                        samples_per_unit=600, tail_tol=1e-12,
                        keep_callable=True):
    """Sample the perturbation and trim it to its numerical support.

    perturbation is a callable x -> complex (None for a pure step); it is
    sampled uniformly on `support` and trimmed where the running L1 tail
    drops below tail_tol, which is where the Volterra windows start.  With
    keep_callable the solver keeps evaluating it exactly; pass False to
    freeze the sampled (piecewise-linear) version instead.
    """
    if perturbation is None:
        return StepPotential(left, right, np.empty(0),
                             np.empty(0, dtype=complex), None)
    lo, hi = (float(support[0]), float(support[1]))
    if not lo < hi:
        raise ValueError("support must be an increasing interval")
    n = max(8, int(round((hi - lo) * samples_per_unit)) + 1)
    xs = np.linspace(lo, hi, n)
    try:
        vals = np.asarray(perturbation(xs), dtype=complex)
        if vals.shape != xs.shape:
            raise TypeError
    except Exception:
        vals = np.array([complex(perturbation(float(v))) for v in xs])
        def perturbation(arr, _fn=perturbation):
            return np.array([complex(_fn(float(v))) for v in
                             np.asarray(arr, dtype=float)])
    if not np.all(np.isfinite(vals)):
        raise ValueError("perturbation samples must be finite")
    h = xs[1] - xs[0]
    mass_lo = h * np.cumsum(np.abs(vals))
    mass_hi = h * np.cumsum(np.abs(vals)[::-1])[::-1]
    keep = (mass_lo > tail_tol) & (mass_hi > tail_tol)
    if not keep.any():
        return StepPotential(left, right, np.empty(0),
                             np.empty(0, dtype=complex), None)
    i0 = max(0, int(np.argmax(keep)) - 1)
    i1 = min(n - 1, n - 1 - int(np.argmax(keep[::-1])) + 1)
    xs, vals = xs[i0:i1 + 1], vals[i0:i1 + 1]
    return StepPotential(left, right, xs, vals,
                         (float(xs[0]), float(xs[-1])),
                         perturbation if keep_callable else None)


# ---------------------------------------------------------------------------
# product-trapezoid Volterra machinery


def _trapezoid_weights(theta):
    """Product-trapezoid weights: int_0^1 e^{theta(s-1)} (1-s, s) ds."""
    if abs(theta) < 1e-4:
        t = theta
        wb = 0.5 - t / 6.0 + t * t / 24.0 - t ** 3 / 120.0 + t ** 4 / 720.0
        wa = 0.5 - t / 3.0 + t * t / 8.0 - t ** 3 / 30.0 + t ** 4 / 144.0
        return wa, wb
    em = cmath.exp(-theta)
    wb = (theta - 1.0 + em) / (theta * theta)
    wa = (1.0 - em) / theta - wb
    return wa, wb


def _osc_cumulative(g_a, g_b, h, beta):
    """Cumulative T_i = int_{x_0}^{x_i} e^{i beta (y - x_i)} g(y) dy.

    g is piecewise linear with one-sided panel values g_a (left endpoints)
    and g_b (right endpoints); returns T at nodes 1..N-1.
    """
    theta = 1j * beta * h
    wa, wb = _trapezoid_weights(theta)
    P = h * (wa * g_a + wb * g_b)
    q = cmath.exp(-theta)
    return lfilter(np.array([1.0 + 0j]), np.array([1.0, -q]), P)


_BETA_SIGNS = {(0, 0): 0.0, (0, 1): 2.0, (1, 0): -2.0, (1, 1): 0.0}


def _picard(G_a, G_b, h, phi, mode, tol, max_iter):
    """Picard iteration for the left-type Volterra system on one window.

    G_a, G_b: per-panel endpoint values of O^{-1} dU O; mode selects the
    full matrix or a single bounded column.  Returns (m, iters, converged)
    with the unsolved column set to NaN in single-column modes.
    """
    n_panels = len(G_a)
    N = n_panels + 1
    eye = np.eye(2, dtype=complex)
    if mode == "both":
        cols = (0, 1)
        m = np.tile(eye, (N, 1, 1))
    else:
        cols = (0,) if mode == "first" else (1,)
        m = np.tile(eye, (N, 1, 1))
        m[:, :, 1 - cols[0]] = np.nan
    entries = [((i, j), _BETA_SIGNS[(i, j)] * phi)
               for i in (0, 1) for j in cols]
    prev = m
    for it in range(1, max_iter + 1):
        new = np.zeros_like(m)
        if mode == "both":
            gm_a = np.einsum("kij,kjl->kil", G_a, prev[:-1])
            gm_b = np.einsum("kij,kjl->kil", G_b, prev[1:])
        else:
            c = cols[0]
            gm_a = np.zeros((n_panels, 2, 2), dtype=complex)
            gm_b = np.zeros((n_panels, 2, 2), dtype=complex)
            gm_a[:, :, c] = np.einsum("kij,kj->ki", G_a, prev[:-1, :, c])
            gm_b[:, :, c] = np.einsum("kij,kj->ki", G_b, prev[1:, :, c])
        for (i, j), beta in entries:
            new[1:, i, j] = _osc_cumulative(gm_a[:, i, j], gm_b[:, i, j],
                                            h, beta)
        for c in cols:
            new[:, c, c] += 1.0
        if mode != "both":
            new[:, :, 1 - cols[0]] = np.nan
        diff = np.nanmax(np.abs(new - prev))
        if not np.isfinite(diff):
            raise ArithmeticError("Volterra sweep produced non-finite "
                                  "values; z is outside the stable domain")
        prev = new
        if diff < tol:
            return prev, it, True
    return prev, max_iter, False


def _solve_window(pot, side, x):
    """Integration window (lo, hi) for the side's Volterra equation, or
    None when the density vanishes on the whole half line up to x."""
    if side == "left":
        starts = []
        if pot.x_pert.size:
            starts.append(pot.support[0])
        if x > 0.0:
            starts.append(0.0)
        if not starts:
            return None
        lo = min(starts)
        return None if lo >= x else (lo, x)
    ends = []
    if pot.x_pert.size:
        ends.append(pot.support[1])
    if x < 0.0:
        ends.append(0.0)
    if not ends:
        return None
    hi = max(ends)
    return None if hi <= x else (x, hi)


def _grid_spec(window, side, x, spu):
    """Uniform grid covering the window, anchored so that both the assembly
    point x and the origin are nodes (the glued field jumps at 0)."""
    lo, hi = window
    span = hi - lo
    if abs(x) > 1e-12:
        h = abs(x) / max(1, math.ceil(abs(x) * spu))
    else:
        h = 1.0 / spu
    n = max(1, math.ceil(span / h - 1e-9))
    if side == "left":
        return x - n * h, x, n
    return x, x + n * h, n


def _adj2(M):
    out = np.empty_like(M)
    out[..., 0, 0] = M[..., 1, 1]
    out[..., 0, 1] = -M[..., 0, 1]
    out[..., 1, 0] = -M[..., 1, 0]
    out[..., 1, 1] = M[..., 0, 0]
    return out


def _kernel_panels(pot, side, bg, z, xs):
    """Panel-endpoint samples of G = O^{-1} dU O along the grid."""
    O = O_matrix_grid(bg, z, xs)
    adjO = _adj2(O)
    du_m, du_p = pot.du_side_limits(side, xs)
    mid = 0.5 * (xs[:-1] + xs[1:])
    right_of_0 = mid > 0.0
    du_a = np.where(right_of_0, du_p[:-1], du_m[:-1])
    du_b = np.where(right_of_0, du_p[1:], du_m[1:])

    def G_of(du_vals, nodesO, nodesAdj):
        dU = np.zeros_like(nodesO)
        dU[:, 0, 1] = du_vals
        dU[:, 1, 0] = -np.conj(du_vals)
        return np.einsum("kij,kjl,klm->kim", nodesAdj, dU, nodesO)

    return G_of(du_a, O[:-1], adjO[:-1]), G_of(du_b, O[1:], adjO[1:])


def _column_mode(phi_core, span, requested):
    """Pick/validate the solved columns from the sign of Im(p - E)."""
    im = phi_core.imag
    tube = abs(im) * span < 0.5
    if requested == "auto":
        if tube:
            return "both"
        return "first" if im > 0 else "second"
    if requested == "both":
        if not tube:
            raise ValueError(
                "full-matrix Jost solve is only defined on the real axis "
                "and the bands; |Im(p - E)| is too large here")
        return requested
    if requested == "first" and im * span < -0.5:
        raise ValueError("first Jost column grows on this side of the "
                         "spectrum; request the second column")
    if requested == "second" and im * span > 0.5:
        raise ValueError("second Jost column grows on this side of the "
                         "spectrum; request the first column")
    if requested not in ("first", "second"):
        raise ValueError("columns must be 'auto', 'both', 'first' or "
                         "'second'")
    return requested


# ---------------------------------------------------------------------------
# Jost solutions


@dataclass
class JostSolution:
    """One Volterra solve: m samples on the window grid.

    columns records which columns are meaningful ('both' on the real axis
    and the bands, single columns in the open half planes); the assembly
    point is the grid end nearest the origin side (last node on the left,
    first on the right).  m is anchored to the identity at the far end.
    """

    side: str
    z: complex
    side_tag: str | None
    x_grid: np.ndarray
    m: np.ndarray
    columns: str
    phi: complex
    converged: bool
    iterations: int

    @property
    def assembly_index(self):
        return len(self.x_grid) - 1 if self.side == "left" else 0

    def m_assembly(self):
        return self.m[self.assembly_index]


def _iter_band_arcs(pot):
    for bg in (pot.left, pot.right):
        for arc in bg.bands.arcs:
            yield arc


def _band_offset(pot, z):
    arc = min(_iter_band_arcs(pot), key=lambda a: a.distance(z))
    return arc.normal_at(z), 1e-6 * arc.length()


def _band_distance(pot, z):
    return min(arc.distance(z) for arc in _iter_band_arcs(pot))


def solve_jost(pot, side, z, side_tag=None, x=0.0, columns="auto",
               samples_per_unit=600, mesh_scale=1, tol=1e-12, max_iter=80,
               raise_on_fail=True):
    """Solve the side-s Volterra equation for m^s( . ; z) up to x.

    side_tag '+'/'-' computes the band boundary value (two solves just off
    the cut, extrapolated onto it).  Raises ValueError when a requested
    column is outside its domain, RuntimeError when Picard iteration does
    not reach tol within max_iter (unless raise_on_fail=False, which
    returns the unconverged solution flagged).
    """
    bg = pot.background(side)
    z = complex(z)
    if side_tag is not None:
        if side_tag not in ("+", "-"):
            raise ValueError("side_tag must be '+' or '-'")
        nrm, delta = _band_offset(pot, z)
        sgn = 1.0 if side_tag == "+" else -1.0
        far = solve_jost(pot, side, z + sgn * delta * nrm, None, x, columns,
                         samples_per_unit, mesh_scale, tol, max_iter,
                         raise_on_fail)
        near = solve_jost(pot, side, z + 0.5 * sgn * delta * nrm, None, x,
                          columns, samples_per_unit, mesh_scale, tol,
                          max_iter, raise_on_fail)
        return JostSolution(side, z, side_tag, far.x_grid,
                            2.0 * near.m - far.m, far.columns,
                            2.0 * near.phi - far.phi,
                            far.converged and near.converged,
                            max(far.iterations, near.iterations))
    p = _point_data(bg, z)[0]
    phi = p - bg.curve.E
    window = _solve_window(pot, side, x)
    if window is None:
        return JostSolution(side, z, None, np.array([float(x)]),
                            np.eye(2, dtype=complex)[None],
                            "both" if columns == "auto" else columns,
                            phi, True, 0)
    lo, hi, n = _grid_spec(window, side, x, samples_per_unit)
    n *= int(mesh_scale)
    xs = np.linspace(lo, hi, n + 1)
    h = (hi - lo) / n
    phi_core = phi if side == "left" else -phi
    mode = _column_mode(phi_core, hi - lo, columns)
    G_a, G_b = _kernel_panels(pot, side, bg, z, xs)
    if side == "right":
        # mirror x -> -x turns the downward integral into the left form,
        # with phi -> -phi and a sign on the density
        G_a, G_b = -G_b[::-1], -G_a[::-1]
    m, its, ok = _picard(G_a, G_b, h, phi_core, mode, tol, max_iter)
    if side == "right":
        m = m[::-1]
    if not ok and raise_on_fail:
        raise RuntimeError(
            "Picard iteration for the %s Jost solution did not reach "
            "%.1e in %d sweeps at z = %s" % (side, tol, max_iter, z))
    return JostSolution(side, z, None, xs, m, mode, phi, ok, its)


def _assembled(pot, side, z, x, **kw):
    """(V, log alpha, solution) with W = V diag(alpha, 1/alpha) at x."""
    sol = solve_jost(pot, side, z, None, x=x, **kw)
    bg = pot.background(side)
    xv = float(sol.x_grid[sol.assembly_index])
    O_end = O_matrix_grid(bg, z, np.array([xv]))[0]
    V = O_end @ sol.m_assembly()
    expo = -1j * (xv - bg.x0) * sol.phi
    return V, expo, sol


def jost_W(pot, side, z, side_tag=None, x=0.0, **kw):
    """The assembled Jost matrix W^s(x; z) (band tags as boundary values).

    Columns outside their analyticity domain come back as NaN; the scalar
    phase factors are applied directly, so this can overflow far off the
    spectrum (the scattering assembly below never does).
    """
    z = complex(z)
    if side_tag is not None:
        if side_tag not in ("+", "-"):
            raise ValueError("side_tag must be '+' or '-'")
        nrm, delta = _band_offset(pot, z)
        sgn = 1.0 if side_tag == "+" else -1.0
        far = jost_W(pot, side, z + sgn * delta * nrm, None, x, **kw)
        near = jost_W(pot, side, z + 0.5 * sgn * delta * nrm, None, x, **kw)
        return 2.0 * near - far
    V, expo, _ = _assembled(pot, side, z, x, **kw)
    al = cmath.exp(expo)
    return V @ np.array([[al, 0.0], [0.0, 1.0 / al]])


# ---------------------------------------------------------------------------
# scattering coefficients


@dataclass(frozen=True)
class ScatteringPoint:
    """Wronskian scattering coefficients at one z.

    b continues to b1 on the right band; b2 lives on the left band and
    equals conj(b) on the real axis; s22 = det[W1_r, W2_l] continues
    conj(a).  Fields are None where the defining columns do not extend.
    """

    z: complex
    side_tag: str | None
    a: complex | None
    b: complex | None
    b2: complex | None
    s22: complex | None
    iterations: int = 0
    converged: bool = True


def _det2(u, v):
    return u[0] * v[1] - u[1] * v[0]


def _coeffs_level(pot, z, x, spu, scale, tol, max_iter):
    VL, eL, solL = _assembled(pot, "left", z, x, samples_per_unit=spu,
                              mesh_scale=scale, tol=tol, max_iter=max_iter)
    VR, eR, solR = _assembled(pot, "right", z, x, samples_per_unit=spu,
                              mesh_scale=scale, tol=tol, max_iter=max_iter)
    L1 = solL.columns in ("both", "first")
    L2 = solL.columns in ("both", "second")
    R1 = solR.columns in ("both", "first")
    R2 = solR.columns in ("both", "second")
    a = cmath.exp(eL - eR) * _det2(VL[:, 0], VR[:, 1]) if L1 and R2 else None
    b = cmath.exp(eL + eR) * _det2(VR[:, 0], VL[:, 0]) if R1 and L1 else None
    b2 = (cmath.exp(-eL - eR) * _det2(VR[:, 1], VL[:, 1])
          if R2 and L2 else None)
    s22 = cmath.exp(eR - eL) * _det2(VR[:, 0], VL[:, 1]) if R1 and L2 else None
    its = max(solL.iterations, solR.iterations)
    conv = solL.converged and solR.converged
    return (a, b, b2, s22), its, conv, solL.iterations + solR.iterations


def _coeffs_plain(pot, z, x, spu, tol, max_iter, refine):
    c1, its, conv, work = _coeffs_level(pot, z, x, spu, 1, tol, max_iter)
    if refine and work > 0:
        c2, its2, conv2, _ = _coeffs_level(pot, z, x, spu, 2, tol, max_iter)
        c1 = tuple(None if v1 is None or v2 is None
                   else (4.0 * v2 - v1) / 3.0 for v1, v2 in zip(c1, c2))
        its, conv = max(its, its2), conv and conv2
    return ScatteringPoint(z, None, *c1, iterations=its, converged=conv)


def scattering_coeffs(pot, z, side=None, x=0.0, refine=True,
                      samples_per_unit=600, tol=1e-12, max_iter=80):
    """Scattering coefficients at z (assembled at x, default 0).

    On the real axis and in the open half planes call with side=None; on a
    band pass side '+'/'-' for the boundary value, computed from two
    off-cut evaluations Richardson-extrapolated onto the cut.  refine=True
    adds a half-mesh solve and removes the h^2 quadrature error.
    """
    z = complex(z)
    if side is None:
        if _band_distance(pot, z) < 1e-7:
            raise ValueError("z lies on a spectral band: pass side='+' "
                             "or side='-' for the boundary value")
        return _coeffs_plain(pot, z, x, samples_per_unit, tol, max_iter,
                             refine)
    if side not in ("+", "-"):
        raise ValueError("side must be '+', '-' or None")
    nrm, delta = _band_offset(pot, z)
    sgn = 1.0 if side == "+" else -1.0
    far = _coeffs_plain(pot, z + sgn * delta * nrm, x, samples_per_unit,
                        tol, max_iter, refine)
    near = _coeffs_plain(pot, z + 0.5 * sgn * delta * nrm, x,
                         samples_per_unit, tol, max_iter, refine)
    vals = tuple(None if f is None or n is None else 2.0 * n - f
                 for f, n in zip((far.a, far.b, far.b2, far.s22),
                                 (near.a, near.b, near.b2, near.s22)))
    return ScatteringPoint(z, side, *vals,
                           iterations=max(far.iterations, near.iterations),
                           converged=far.converged and near.converged)


# ---------------------------------------------------------------------------
# the pure-step closed form


def _step_segments(eta_l, eta_r):
    segs = []
    for e1, e2 in (eta_l, eta_r):
        segs.append((1j * e1, 1j * e2, -1.0))   # upper band, oriented up
        segs.append((-1j * e1, -1j * e2, 1.0))  # mirror band, oriented down
    return segs


def pure_step_lambda(eta_l, eta_r, z, side=None):
    """lambda(z) = gamma_l / gamma_r for the pure step with imaginary
    branch points (x0 = 0, E = N = 0 on both sides).

    Each gamma is a product of two principal quarter roots of Moebius
    ratios, cut exactly on its two vertical bands and -> 1 at infinity.
    On a cut a '+'/'-' side tag is required ('+' is the left of the
    upward band orientation, as everywhere else in this package).
    """
    z = complex(z)
    segs = _step_segments(eta_l, eta_r)
    dist, seg = min(((point_segment_distance(z, s[0], s[1]), s)
                     for s in segs), key=lambda t: t[0])
    if dist < 1e-9 * (1.0 + abs(z)):
        if side is None:
            raise ValueError("z is on a spectral cut of the step: pass "
                             "side='+' or side='-'")
        sgn = 1.0 if side == "+" else -1.0
        z = z + sgn * 1e-11 * (1.0 + abs(z)) * seg[2]

    def gam(eta):
        r1 = (z - 1j * eta[1]) / (z - 1j * eta[0])
        r2 = (z + 1j * eta[0]) / (z + 1j * eta[1])
        return r1 ** 0.25 * r2 ** 0.25

    return gam(eta_l) / gam(eta_r)


def pure_step_oracle(eta_l, eta_r, z, side=None):
    """Closed-form scattering matrix S(z) of the pure elliptic step.

    S = (1/2) [[lam + 1/lam, lam - 1/lam], [lam - 1/lam, lam + 1/lam]];
    S[0,0] continues a, S[1,0] continues b (= b1 on the right band) and
    -S[1,0] continues b2 on the left band.
    """
    lam = pure_step_lambda(eta_l, eta_r, z, side)
    sp = 0.5 * (lam + 1.0 / lam)
    sm = 0.5 * (lam - 1.0 / lam)
    return np.array([[sp, sm], [sm, sp]], dtype=complex)


# ---------------------------------------------------------------------------
# regularized solution at the band endpoints


@dataclass
class EndpointData:
    side: str
    endpoint: str
    tag: str
    x_grid: np.ndarray
    What: np.ndarray
    What0: np.ndarray
    A_limit: complex
    p_limit: complex
    converged: bool
    iterations: int


def _endpoint_constants(bg, tag):
    """Limits of the Abel map and quasimomentum at the inner endpoint z1.

    Both are half periods (A -> +-tau/2, p -> +-Omega1/2 up to the lattice
    of path classes); a probe point a little inside the band, on the
    requested side, picks the representative the solver actually reaches.
    """
    cur = bg.curve
    arc = bg.bands.arcs[0]
    nodes = arc.nodes
    zb = complex(nodes[max(1, len(nodes) // 40)])
    p_probe, _, A_probe, _ = _point_data(bg, zb, tag)
    p_best = min((0.5 * s + k for s in (1.0, -1.0) for k in (-1, 0, 1)),
                 key=lambda c: abs(p_probe - c * cur.Omega1))
    p_lim = p_best * cur.Omega1
    if abs(p_probe - p_lim) > 0.45 * abs(cur.Omega1):
        raise ArithmeticError("could not identify the quasimomentum limit "
                              "at the band endpoint")
    cands = [0.5 * s * cur.tau + mm + nn * cur.tau
             for s in (1.0, -1.0) for mm in range(-2, 3)
             for nn in range(-2, 3)]
    A_lim = min(cands, key=lambda c: abs(A_probe - c))
    if abs(A_probe - A_lim) > 0.45 * min(1.0, abs(cur.tau)):
        raise ArithmeticError("could not identify the Abel-map limit at "
                              "the band endpoint")
    return complex(A_lim), complex(p_lim)


def _What0_grid(bg, xs, A_lim, p_lim, flip):
    """Exact rank-one limit of gamma^{+-1} e^{ixE sigma3} W0 at an endpoint.

    At z2 the quartic root vanishes and the limit keeps the sign-flipped
    theta matrix (sigma3 H sigma3)/2; at z1 it diverges and gamma^{-1} W0
    keeps H/2, evaluated at the half-period Abel value.
    """
    Hm = _H_matrix_grid(bg, A_lim, xs)
    if flip:
        Hm = Hm * np.array([[1.0, -1.0], [-1.0, 1.0]])
    E = bg.curve.E
    phL = np.exp(1j * xs * E)
    phR = np.exp(-1j * (xs - bg.x0) * (p_lim - E))
    out = 0.5 * Hm
    out[:, 0, :] *= phL[:, None]
    out[:, 1, :] /= phL[:, None]
    out[:, :, 0] *= phR[:, None]
    out[:, :, 1] /= phR[:, None]
    return out


def endpoint_limit(pot, side, endpoint, x=0.0, tag="+",
                   samples_per_unit=600, tol=1e-12, max_iter=80,
                   eps_frac=2e-3, full_output=False):
    """Regularized Jost matrix What(x) at a band endpoint ('z1' or 'z2').

    Solves What = What0 + int K(.,y) dU^(y) What(y) dy where the kernel
    K(x,y) = [e^{ixE s3} W0(x)] [e^{iyE s3} W0(y)]^{-1} is analytic at the
    endpoint: it is sampled at three regular points on a ray off the band
    and Richardson-extrapolated, while What0 is the exact theta limit.
    dU^ carries e^{+-2iEy} dressed off-diagonal entries of du_side.

    At z1 the limit depends on the approach side (tag); at z2 it does not.
    """
    bg = pot.background(side)
    arc = bg.bands.arcs[0]
    nodes = arc.nodes
    L = arc.length()
    if endpoint == "z2":
        A_lim, p_lim, flip = 0.0j, 0.0j, True
        zj = complex(nodes[-1])
        dhat = (zj - complex(nodes[-2]))
        dhat /= abs(dhat)
    elif endpoint == "z1":
        zj = complex(nodes[0])
        tout = zj - complex(nodes[1])
        tout /= abs(tout)
        nrm = arc.normal_at(zj)
        sgn = 1.0 if tag == "+" else -1.0
        dhat = tout + sgn * nrm
        dhat /= abs(dhat)
        A_lim, p_lim = _endpoint_constants(bg, tag)
        flip = False
    else:
        raise ValueError("endpoint must be 'z1' or 'z2'")
    window = _solve_window(pot, side, x)
    if window is None:
        xs = np.array([float(x)])
        W0g = _What0_grid(bg, xs, A_lim, p_lim, flip)
        data = EndpointData(side, endpoint, tag, xs, W0g.copy(), W0g,
                            A_lim, p_lim, True, 0)
        return data if full_output else data.What[0]
    lo, hi, n = _grid_spec(window, side, x, samples_per_unit)
    xs = np.linspace(lo, hi, n + 1)
    h = (hi - lo) / n
    W0g = _What0_grid(bg, xs, A_lim, p_lim, flip)
    E = bg.curve.E
    phE = np.exp(1j * xs * E)
    kernel = []
    for frac, coef in zip((4.0, 2.0, 1.0), (1.0 / 3.0, -2.0, 8.0 / 3.0)):
        zeta = zj + frac * eps_frac * L * dhat
        Phi = W0_matrix_grid(bg, zeta, xs)
        Phi[:, 0, :] *= phE[:, None]
        Phi[:, 1, :] /= phE[:, None]
        kernel.append((coef, Phi, _adj2(Phi)))
    du_m, du_p = pot.du_side_limits(side, xs)
    mid = 0.5 * (xs[:-1] + xs[1:])

    def dressed(du_vals, xnodes):
        out = np.zeros((len(du_vals), 2, 2), dtype=complex)
        ph = np.exp(2j * E * xnodes)
        out[:, 0, 1] = du_vals * ph
        out[:, 1, 0] = -np.conj(du_vals) / ph
        return out

    dU_a = dressed(np.where(mid > 0, du_p[:-1], du_m[:-1]), xs[:-1])
    dU_b = dressed(np.where(mid > 0, du_p[1:], du_m[1:]), xs[1:])
    W = W0g.copy()
    ok = False
    it = 0
    for it in range(1, max_iter + 1):
        acc = W0g.copy()
        for coef, Phi, Psi in kernel:
            Ya = np.einsum("kij,kjl,klm->kim", Psi[:-1], dU_a, W[:-1])
            Yb = np.einsum("kij,kjl,klm->kim", Psi[1:], dU_b, W[1:])
            P = 0.5 * h * (Ya + Yb)
            cum = np.zeros_like(W)
            if side == "left":
                cum[1:] = np.cumsum(P, axis=0)
            else:
                cum[:-1] = -np.cumsum(P[::-1], axis=0)[::-1]
            acc += coef * np.einsum("kij,kjl->kil", Phi, cum)
        diff = np.max(np.abs(acc - W))
        W = acc
        if diff < tol:
            ok = True
            break
    if not ok:
        raise RuntimeError("endpoint Picard iteration did not converge")
    data = EndpointData(side, endpoint, tag, xs, W, W0g, A_lim, p_lim,
                        ok, it)
    idx = n if side == "left" else 0
    return data if full_output else data.What[idx]


# ---------------------------------------------------------------------------
# large-z expansion coefficients


def _derivative4(f, h):
    n = len(f)
    if n < 5:
        return np.gradient(f, h)
    d = np.empty_like(f)
    d[2:-2] = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    return d


def _cumtrapz(f, h):
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * h * (f[1:] + f[:-1]))
    return out


def asymptotic_expansion(u_vals, x_grid, pi_coeffs, order=3,
                         alpha_init=None):
    """Laurent coefficients Gamma_k of W = Gamma e^{-i(x-x0)(p-E) sigma3}.

    Gamma_k = [[alpha_k, beta_k], [-conj(beta_k), conj(alpha_k)]] with
    alpha_0 = 1, beta_0 = 0 and the recurrences

        beta_{n+1} = (u conj(alpha_n) - i sum_j pi_j beta_{n-j}
                      - beta_n') / (2i),
        alpha_{n+1}' = -u conj(beta_{n+1}) + i sum_j pi_j alpha_{n+1-j},

    pi_j the Laurent coefficients of p - E - z.  Returns (alpha, beta):
    lists of arrays for k = 0..order (order <= 4; alpha_order picks up an
    unresolved linear drift when pi_order is not supplied).  Derivatives
    are 4th-order finite differences, integrals cumulative trapezoid with
    alpha_k anchored at the first grid point (alpha_init, default zeros).
    """
    xs = np.asarray(x_grid, dtype=float)
    u = np.asarray(u_vals, dtype=complex)
    if len(xs) < 2 or u.shape != xs.shape:
        raise ValueError("need matching u samples on a grid")
    steps = np.diff(xs)
    h = steps[0]
    if np.max(np.abs(steps - h)) > 1e-9 * abs(h):
        raise ValueError("x_grid must be uniform")
    if not 1 <= int(order) <= 4:
        raise ValueError("order must be between 1 and 4")
    pis = (list(pi_coeffs) + [0.0] * 4)[:4]
    consts = list(alpha_init or ())
    alpha = [np.ones_like(u)]
    beta = [np.zeros_like(u)]
    for n in range(int(order)):
        acc = u * np.conj(alpha[n]) - _derivative4(beta[n], h)
        for j in range(1, n + 1):
            acc = acc - 1j * pis[j - 1] * beta[n - j]
        beta.append(acc / 2j)
        der = -u * np.conj(beta[n + 1])
        for j in range(1, n + 2):
            der = der + 1j * pis[j - 1] * alpha[n + 1 - j]
        c0 = consts[n] if n < len(consts) else 0.0
        alpha.append(c0 + _cumtrapz(der, h))
    return alpha, beta


def fit_pi_coefficients(bg, radii=(100.0, 300.0, 1000.0), n_angles=5):
    """(pi1, pi2, pi3) by least squares on z (p(z) - z - E) at large |z|."""
    rows, rhs = [], []
    for r in radii:
        for th in np.linspace(0.25, math.pi - 0.25, n_angles):
            z = r * cmath.exp(1j * th)
            p = _point_data(bg, z)[0]
            rows.append([1.0, 1.0 / z, 1.0 / (z * z)])
            rhs.append(z * (p - z - bg.curve.E))
    sol, *_ = np.linalg.lstsq(np.array(rows, dtype=complex),
                              np.array(rhs, dtype=complex), rcond=None)
    return sol


# ---------------------------------------------------------------------------
# sampled scattering data and its on-disk formats


@dataclass
class ScatteringData:
    points: list
    meta: dict


def _bg_meta(bg):
    return {"z1": [bg.params.z1.real, bg.params.z1.imag],
            "z2": [bg.params.z2.real, bg.params.z2.imag],
            "x0": bg.x0, "E": bg.curve.E, "N": bg.curve.N}


def compute_scattering_data(pot, real_points=24, real_span=8.0,
                            band_points=8, x=0.0, refine=True,
                            samples_per_unit=600, tol=1e-12, max_iter=80):
    """Sample a, b on the real line and boundary values along both upper
    bands (both sides of each cut)."""
    kw = dict(x=x, refine=refine, samples_per_unit=samples_per_unit,
              tol=tol, max_iter=max_iter)
    pts = [scattering_coeffs(pot, zv, None, **kw)
           for zv in np.linspace(-real_span, real_span, real_points)]
    n_real = len(pts)
    for bg in (pot.left, pot.right):
        arc = bg.bands.arcs[0]
        for f in np.linspace(0.1, 0.9, band_points):
            zb = complex(arc.point_at(f))
            for tag in ("+", "-"):
                pts.append(scattering_coeffs(pot, zb, tag, **kw))
    meta = {
        "left": _bg_meta(pot.left),
        "right": _bg_meta(pot.right),
        "solver": {"samples_per_unit": samples_per_unit,
                   "picard_tol": tol, "max_iter": max_iter,
                   "mesh_richardson": bool(refine),
                   "boundary_delta_frac": 1e-6, "assembly_x": x},
        "counts": {"real": n_real, "band": len(pts) - n_real},
    }
    return ScatteringData(points=pts, meta=meta)


_CSV_FIELDS = ["z_re", "z_im", "side_tag", "a_re", "a_im", "b_re", "b_im",
               "b2_re", "b2_im", "s22_re", "s22_im", "iterations",
               "converged"]


def scattering_to_csv(sd, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_FIELDS)
        for p in sd.points:
            row = [repr(float(p.z.real)), repr(float(p.z.imag)),
                   p.side_tag or ""]
            for c in (p.a, p.b, p.b2, p.s22):
                row += (["", ""] if c is None
                        else [repr(float(c.real)), repr(float(c.imag))])
            row += [str(p.iterations), "1" if p.converged else "0"]
            w.writerow(row)


def load_scattering_csv(path):
    pts = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            def cx(pre):
                s = row[pre + "_re"]
                if s == "":
                    return None
                return complex(float(s), float(row[pre + "_im"]))
            pts.append(ScatteringPoint(
                complex(float(row["z_re"]), float(row["z_im"])),
                row["side_tag"] or None, cx("a"), cx("b"), cx("b2"),
                cx("s22"), int(row["iterations"]),
                row["converged"] == "1"))
    return pts


def scattering_manifest(sd, csv_name):
    return {"format": "stepnls-scattering-v1", "csv": csv_name, **sd.meta}


def write_scattering_manifest(sd, path, csv_name):
    with open(path, "w") as fh:
        json.dump(scattering_manifest(sd, csv_name), fh, indent=1,
                  sort_keys=True)
