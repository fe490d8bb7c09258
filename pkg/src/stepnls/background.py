"""Elliptic background fields for the focusing NLS Lax pair.

Builds the theta-ratio solution O(z;x,t) of the genus-1 Riemann-Hilbert
problem, the background fundamental matrix

    W0(x,t;z) = O(z;x,t) exp(-i((x-x0)(p(z)-E) + t(q(z)-N)) sigma3),

and the travelling elliptic wave u0(x,t) it encodes, in both theta-ratio and
Jacobi-elliptic form.  The phase bookkeeping runs through

    Omega(x,t) = Omega0 + x*Omega1 + t*Omega2,      x0 = -Omega0/Omega1,

so the theta arguments advance by one unit per spatial period of |u0|^2.

Conventions: `EllipticParams.x0` fixes the wave offset; a nonzero
`EllipticParams.Omega0` overrides it via x0 = -Omega0/Omega1 (the two encode
the same constant).  The Abel map, gamma and p/q values are evaluated with
planned cut-avoiding quadrature from the curve machinery and cached per
(z, side).
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .contours import Contour
from .curve import (
    CurveData,
    EllipticParams,
    _frame_of,
    _nearest_cut,
    boundary_value,
    curve_constants,
)
from .special import elliptic_K, jacobi_elliptic, theta, theta3_array, theta_prime

__all__ = [
    "Background",
    "PhaseState",
    "make_background",
    "make_phase",
    "O_matrix",
    "O_matrix_grid",
    "W0_matrix",
    "W0_matrix_grid",
    "u0_theta",
    "u0_closed",
    "u0_abs2",
    "u0_mean_square",
    "legacy_roots_form",
    "roots_to_branch_points",
]


@dataclass(frozen=True)
class PhaseState:
    """Evaluation point (x, t) together with the theta phase Omega."""

    x: float
    t: float
    Omega: float


@dataclass
class Background:
    """One elliptic background: curve constants plus the theta ingredients.

    gamma_fn is the branched quartic root gamma(z) = ((z-z2)(z-conj z1) /
    ((z-z1)(z-conj z2)))^(1/4), normalized to 1 at infinity, with
    gamma_+ = i gamma_- on the bands.  A_inf is the Abel map at infinity;
    band-curve cuts are used throughout.
    """

    params: EllipticParams
    curve: CurveData
    bands: Contour
    gamma_fn: object
    A_inf: complex
    x0: float
    Omega0: float
    _frame: object = field(repr=False, default=None)
    _points: dict = field(repr=False, default_factory=dict)

    def phase(self, x, t=0.0):
        return make_phase(self, x, t)


def make_background(params, curve=None):
    """Assemble a Background (tracing the spectrum if needed).

    Raises ValueError for crossing configurations: those have no periodic
    two-band spectrum and no theta-function background of this form.
    """
    if curve is None:
        curve = curve_constants(params)
    if curve.crossing or curve.bands is None:
        raise ValueError("spectral bands cross the real axis; "
                         "no genus-1 background for these endpoints")
    gap_im = abs(params.z1.imag - params.z2.imag)
    if 1e-10 <= gap_im < 1e-6:
        warnings.warn(
            "Im z1 and Im z2 differ by %.1e: theta3(2 A_inf) is nearly on "
            "the divisor and the generic theta ratio for u0 is "
            "ill-conditioned here" % gap_im, RuntimeWarning, stacklevel=2)
    frame = _frame_of(params, curve)
    if params.Omega0 != 0.0:
        Omega0 = float(params.Omega0)
        x0 = -Omega0 / curve.Omega1
    else:
        x0 = float(params.x0)
        Omega0 = -x0 * curve.Omega1
    return Background(
        params=params,
        curve=curve,
        bands=curve.bands,
        gamma_fn=frame.quartic.gamma,
        A_inf=frame.A_inf,
        x0=x0,
        Omega0=Omega0,
        _frame=frame,
    )


def make_phase(bg, x, t=0.0):
    Omega = bg.Omega0 + bg.curve.Omega1 * float(x) + bg.curve.Omega2 * float(t)
    return PhaseState(x=float(x), t=float(t), Omega=Omega)


# ---------------------------------------------------------------------------
# per-point spectral data (p, q, A, gamma), cached


def _point_data(bg, z, side=None):
    key = (complex(z), side)
    hit = bg._points.get(key)
    if hit is not None:
        return hit
    fr = bg._frame
    if side is None:
        p, A = fr.pA(complex(z))
        q = fr.q_value(complex(z), p_val=p)
        g = complex(fr.quartic.gamma(np.array([complex(z)]))[0])
    else:
        nrm, delta = _nearest_cut(bg.curve, bg.bands, z)

        def stacked(w):
            p_w, A_w = fr.pA(w)
            q_w = fr.q_value(w, p_val=p_w)
            g_w = complex(fr.quartic.gamma(np.array([w]))[0])
            return np.array([p_w, q_w, A_w, g_w])

        p, q, A, g = boundary_value(stacked, complex(z), nrm, side, delta)
    data = (complex(p), complex(q), complex(A), complex(g))
    bg._points[key] = data
    return data


def _H_entries(bg, A, Omega):
    """The four theta ratios of the RHP solution at Abel-map value A."""
    tau = bg.curve.tau
    s = Omega / (2.0 * math.pi)
    th0 = theta(3, 0.0, tau)
    thO = theta(3, s, tau)
    den_m = theta(3, A - bg.A_inf, tau)
    den_p = theta(3, A + bg.A_inf, tau)
    if min(abs(den_m), abs(den_p)) < 1e-12 * abs(th0):
        raise ValueError("theta divisor hit: H entries are singular here")
    H11 = th0 * theta(3, A - bg.A_inf - s, tau) / (thO * den_m)
    H12 = th0 * theta(3, A + bg.A_inf + s, tau) / (thO * den_p)
    H21 = th0 * theta(3, A + bg.A_inf - s, tau) / (thO * den_p)
    H22 = th0 * theta(3, A - bg.A_inf + s, tau) / (thO * den_m)
    return H11, H12, H21, H22


def O_matrix(bg, z, ph, side=None):
    """The theta/gamma RHP solution O(z; x, t) (2x2, det = 1).

    side '+'/'-' gives the boundary value on the cut system (left/right of
    the arc orientation).  Conjugation by exp(i(xE+tN) sigma3) dresses the
    off-diagonal entries with the plane-wave phase.
    """
    _, _, A, g = _point_data(bg, z, side)
    H11, H12, H21, H22 = _H_entries(bg, A, ph.Omega)
    gp = 0.5 * (g + 1.0 / g)
    gm = 0.5 * (g - 1.0 / g)
    e2 = cmath.exp(2j * (ph.x * bg.curve.E + ph.t * bg.curve.N))
    return np.array([[gp * H11, gm * H12 * e2],
                     [gm * H21 / e2, gp * H22]], dtype=complex)


def _H_matrix_grid(bg, A, xs, t=0.0):
    """[[H11, H12 e2], [H21/e2, H22]] over an x grid at Abel-map value A.

    The x dependence enters through the phase Omega(x,t) in the theta
    arguments and through e2 = exp(2i(xE+tN)); A is held fixed, so this is
    the vectorized core shared by the per-z solvers.
    """
    cur = bg.curve
    xs = np.asarray(xs, dtype=float)
    Om = bg.Omega0 + cur.Omega1 * xs + cur.Omega2 * t
    s = Om / (2.0 * math.pi)
    tau = cur.tau
    th0 = complex(theta(3, 0.0, tau))
    den_m = complex(theta(3, A - bg.A_inf, tau))
    den_p = complex(theta(3, A + bg.A_inf, tau))
    if min(abs(den_m), abs(den_p)) < 1e-12 * abs(th0):
        raise ValueError("theta divisor hit: H entries are singular here")
    thO = theta3_array(s, tau)
    e2 = np.exp(2j * (xs * cur.E + t * cur.N))
    out = np.empty(xs.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = th0 * theta3_array(A - bg.A_inf - s, tau) / (thO * den_m)
    out[..., 0, 1] = th0 * theta3_array(A + bg.A_inf + s, tau) / (thO * den_p) * e2
    out[..., 1, 0] = th0 * theta3_array(A + bg.A_inf - s, tau) / (thO * den_p) / e2
    out[..., 1, 1] = th0 * theta3_array(A - bg.A_inf + s, tau) / (thO * den_m)
    return out


def O_matrix_grid(bg, z, xs, t=0.0, side=None):
    """O(z; x, t) for a whole array of x at one spectral point z: (..., 2, 2)."""
    _, _, A, g = _point_data(bg, z, side)
    Hm = _H_matrix_grid(bg, A, xs, t)
    gp = 0.5 * (g + 1.0 / g)
    gm = 0.5 * (g - 1.0 / g)
    return Hm * np.array([[gp, gm], [gm, gp]])


def W0_matrix_grid(bg, z, xs, t=0.0, side=None):
    """W0(x,t;z) over an x grid at one z (phases column-scaled into O)."""
    O = O_matrix_grid(bg, z, xs, t, side)
    p, q, _, _ = _point_data(bg, z, side)
    cur = bg.curve
    xs = np.asarray(xs, dtype=float)
    w = np.exp(-1j * ((xs - bg.x0) * (p - cur.E) + t * (q - cur.N)))
    return O * np.stack([w, 1.0 / w], axis=-1)[..., None, :]


def W0_matrix(bg, x, t, z, side=None):
    """Background fundamental solution of the Lax pair at (x, t; z)."""
    ph = make_phase(bg, x, t)
    O = O_matrix(bg, z, ph, side)
    p, q, _, _ = _point_data(bg, z, side)
    cur = bg.curve
    w = cmath.exp(-1j * ((x - bg.x0) * (p - cur.E) + t * (q - cur.N)))
    return O * np.array([[w, 1.0 / w]])


# ---------------------------------------------------------------------------
# the potential u0


def _is_dn_case(params, tol=1e-10):
    return abs(params.z1.real - params.z2.real) < tol


def _is_cn_case(params, tol=1e-10):
    return abs(params.z1.imag - params.z2.imag) < tol


def u0_theta(bg, x, t=0.0):
    """u0(x,t) from the theta-ratio formula (x may be an array).

    Switches to the degenerate representation when Im z1 = Im z2, where
    theta3(2 A_inf) sits on the theta divisor and the generic ratio is 0/0.
    """
    cur = bg.curve
    par = bg.params
    x = np.asarray(x, dtype=float)
    Om = bg.Omega0 + cur.Omega1 * x + cur.Omega2 * t
    s = Om / (2.0 * math.pi)
    tau = cur.tau
    th0 = complex(theta(3, 0.0, tau))
    thO = theta3_array(s, tau)
    carrier = np.exp(2j * (x * cur.E + t * cur.N))
    if _is_cn_case(par):
        # theta3(2 A_inf) = 0 here and the ratio is the derivative limit.
        # It must be taken at the representative the Abel map actually
        # converges to, not at a fixed half-period: shifting the divisor
        # point by k tau multiplies u0 by exp(-i k Omega), which is an
        # (x,t)-dependent factor, so a hardcoded (tau+1)/2 silently breaks
        # the evolution equation whenever the measured 2 A_inf lands on a
        # different lattice representative.
        half = 2.0 * bg.A_inf
        amp = (par.z1.real - par.z2.real) * par.z2.imag * th0 / (
            complex(theta_prime(3, half, tau)) * cur.c)
        vals = amp * theta3_array(s + half, tau) / thO * carrier
    else:
        amp = (par.z2.imag - par.z1.imag) * th0 / complex(
            theta(3, 2.0 * bg.A_inf, tau))
        vals = amp * theta3_array(2.0 * bg.A_inf + s, tau) / thO * carrier
    return vals if vals.ndim else complex(vals)


def u0_abs2(bg, x, t=0.0):
    """|u0|^2 in Jacobi form: a shifted sn^2 oscillating between the
    squared wave extremes (Im(z2-z1))^2 and (Im(z1+z2))^2."""
    par = bg.params
    cur = bg.curve
    dbar = abs(par.z1 - np.conj(par.z2))
    K = elliptic_K(cur.m)
    x = np.asarray(x, dtype=float)
    arg = dbar * (x - bg.x0 - cur.v * t) + K
    sn2 = np.array([jacobi_elliptic(float(u), cur.m)[0] ** 2
                    for u in np.atleast_1d(arg)]).reshape(x.shape)
    vals = (par.z1.imag + par.z2.imag) ** 2 - 4.0 * par.z1.imag * par.z2.imag * sn2
    return vals if vals.ndim else float(vals)


def _delta_invariant(params):
    """The phase-current constant delta = (i/2)(psi conj(psi)_x - c.c.).

    Read off the Galilean-shifted curve: with zeta_j = z_j + v/2 the quartic
    becomes zeta^4 - omega0 zeta^2 - delta zeta + (omega0^2 - delta1)/4, so
    delta is minus the linear coefficient.
    """
    v = -(params.z1.real + params.z2.real)
    shifted = [params.z1 + v / 2, np.conj(params.z1) + v / 2,
               params.z2 + v / 2, np.conj(params.z2) + v / 2]
    coeffs = np.real(np.poly(shifted))
    return -float(coeffs[3])


def u0_closed(bg, x, t=0.0):
    """u0(x,t) via Jacobi elliptic functions.

    dn form when Re z1 = Re z2, cn form when Im z1 = Im z2; the generic
    (nontrivial phase) case integrates the exact phase derivative
    theta' = delta/phi^2 and anchors the constant at x = x0 + v t, where
    the theta representation reduces to Im(z2-z1) e^{2i(xE+tN)}.
    """
    par = bg.params
    cur = bg.curve
    dbar = abs(par.z1 - np.conj(par.z2))
    K = elliptic_K(cur.m)
    v, E, N, om0 = cur.v, cur.E, cur.N, cur.omega0
    scalar = np.isscalar(x) or np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    xi = dbar * (xs - bg.x0 - v * t) + K
    if _is_dn_case(par):
        dn = np.array([jacobi_elliptic(float(u), cur.m)[2] for u in xi])
        vals = dbar * dn * np.exp(1j * (-om0 * t + v * xs - 0.5 * v * v * t))
    elif _is_cn_case(par):
        cn = np.array([jacobi_elliptic(float(u), cur.m)[1] for u in xi])
        vals = 2j * par.z2.imag * cn * np.exp(
            1j * (v * xs - 0.5 * v * v * t - om0 * t + 0.5 * bg.Omega0))
    else:
        delta = _delta_invariant(par)
        amp = par.z2.imag - par.z1.imag

        def inv_phi2(xi_val):
            sn = jacobi_elliptic(dbar * xi_val + K, cur.m)[0]
            return 1.0 / ((par.z1.imag + par.z2.imag) ** 2
                          - 4.0 * par.z1.imag * par.z2.imag * sn * sn)

        mod = np.sqrt(u0_abs2(bg, xs, t))
        phase0 = 2.0 * bg.x0 * E - v * bg.x0 + (0.0 if amp > 0 else math.pi)
        vals = np.empty(len(xs), dtype=complex)
        for i, xv in enumerate(xs):
            th = delta * quad(inv_phi2, 0.0, xv - bg.x0 - v * t, limit=400)[0]
            vals[i] = mod[i] * cmath.exp(
                1j * (th + v * xv - 0.5 * v * v * t - om0 * t + phase0))
    return complex(vals[0]) if scalar else vals


def u0_mean_square(bg):
    """Average of |u0|^2 over one spatial period (equals 2 pi1)."""
    par = bg.params
    cur = bg.curve
    dbar2 = abs(par.z1 - np.conj(par.z2)) ** 2
    from .special import elliptic_E as _ee
    return dbar2 * _ee(cur.m) / elliptic_K(cur.m) - (par.z1.real - par.z2.real) ** 2


# ---------------------------------------------------------------------------
# the classical three-roots parametrization


def roots_to_branch_points(e1, e2, e3, sign_delta=-1):
    """Map the real zeros e1 < e2 < e3 to the curve endpoints (z1, z2)."""
    _check_roots(e1, e2, e3)
    re = 0.5 * math.sqrt(-e1)
    hi = 0.5 * (math.sqrt(e3) + math.sqrt(e2))
    lo = 0.5 * (math.sqrt(e3) - math.sqrt(e2))
    if sign_delta < 0:
        return complex(-re, lo), complex(re, hi)
    return complex(-re, hi), complex(re, lo)


def _check_roots(e1, e2, e3):
    if not (e1 < e2 < e3 or (e1 == 0.0 and 0.0 < e2 < e3)):
        raise ValueError("roots must satisfy e1 < e2 < e3")
    if e1 > 0.0 or e2 < 0.0:
        raise ValueError("sign pattern must give delta^2 = -e1*e2*e3 >= 0")


def legacy_roots_form(e1, e2, e3, sign_delta=-1):
    """Travelling-wave sampler psi(x) = phi(x) e^{i theta(x)} from the roots.

    phi^2(x) = e3 - (e3-e2) sn^2(sqrt(e3-e1) x; k) with k = (e3-e2)/(e3-e1)
    and theta from quadrature of delta/phi^2, delta = sign * sqrt(-e1 e2 e3).
    With e1 = 0 this is the dn wave, with e2 = 0 the cn wave (theta = 0).
    """
    _check_roots(e1, e2, e3)
    k = (e3 - e2) / (e3 - e1)
    s = math.sqrt(e3 - e1)
    delta = (1 if sign_delta > 0 else -1) * math.sqrt(max(0.0, -e1 * e2 * e3))

    def phi2(xv):
        sn = jacobi_elliptic(s * xv, k)[0]
        return e3 - (e3 - e2) * sn * sn

    def psi(xv):
        xv = float(xv)
        ph = math.sqrt(max(0.0, phi2(xv)))
        if delta == 0.0:
            if e2 == 0.0:  # cn wave crosses zero; keep the sign
                ph = math.copysign(ph, jacobi_elliptic(s * xv, k)[1])
            return complex(ph)
        th = delta * quad(lambda y: 1.0 / phi2(y), 0.0, xv, limit=400)[0]
        return ph * cmath.exp(1j * th)

    return psi
