"""Complete elliptic integrals, Jacobi theta and elliptic functions.

Everything here is self-contained (AGM iteration plus rapidly convergent
q-series); no scipy.special.  Conventions:

* the elliptic *parameter* m = k^2 is used throughout, never the modulus k;
* theta functions follow the period-1 convention
      theta3(z; tau) = sum_n exp(2*pi*i*n*z + i*pi*n^2*tau),
  so quasi-periods are 1 and tau (not pi and pi*tau), which matches
  sn(2Kz; m) = theta3(0)*theta1(z) / (theta2(0)*theta4(z)).
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "elliptic_K",
    "elliptic_E",
    "theta",
    "theta_prime",
    "jacobi_elliptic",
    "landen_ascend",
]

_AGM_TOL = 5e-16
_THETA_REL_TOL = 1e-16
_THETA_TERM_CAP = 100_000


def _check_m(m, allow_one=False):
    m = float(m)
    hi = 1.0 if allow_one else 1.0 - 1e-300
    if not (0.0 <= m <= 1.0) or (not allow_one and m == 1.0):
        kind = "[0,1]" if allow_one else "[0,1)"
        raise ValueError(f"elliptic parameter m={m} outside {kind}")
    return m


def elliptic_K(m):
    """Complete elliptic integral of the first kind, K(m), by AGM.

    K(m) = int_0^{pi/2} (1 - m sin^2 t)^{-1/2} dt = pi / (2 agm(1, sqrt(1-m))).
    Relative accuracy ~1e-15 on [0, 1).  For m within 1e-12 of 1 the AGM
    suffers cancellation in sqrt(1-m), so the complementary logarithmic
    expansion is used instead.
    """
    m = _check_m(m)
    mc = 1.0 - m
    if mc < 1e-12:
        # K(m) ~ L + (mc/4)(L - 1),  L = log(4/sqrt(mc))   (m -> 1)
        L = math.log(4.0 / math.sqrt(mc))
        return L + 0.25 * mc * (L - 1.0)
    a, b = 1.0, math.sqrt(mc)
    for _ in range(64):
        if abs(a - b) <= _AGM_TOL * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return math.pi / (2.0 * a)


def elliptic_E(m):
    """Complete elliptic integral of the second kind, E(m), by AGM.

    Uses E = K * (1 - sum_n 2^{n-1} c_n^2) with c_0 = sqrt(m),
    c_{n+1} = (a_n - b_n)/2 along the AGM ladder.
    """
    m = _check_m(m, allow_one=True)
    if m == 1.0:
        return 1.0
    a, b = 1.0, math.sqrt(1.0 - m)
    csum = 0.5 * m  # 2^{-1} c_0^2
    pow2 = 1.0
    for _ in range(64):
        if abs(a - b) <= _AGM_TOL * a:
            break
        c = 0.5 * (a - b)
        a, b = 0.5 * (a + b), math.sqrt(a * b)
        csum += pow2 * c * c
        pow2 *= 2.0
    K = math.pi / (2.0 * a)
    return K * (1.0 - csum)


def _reduce_theta_arg(z, tau):
    """Shift z by the lattice so the series converges in a few terms.

    Returns (w, logfac) with theta3(z) = exp(logfac) * theta3(w) where
    w = z - h - k*tau, h = round(Re effective shift), k chosen to kill Im z.
    theta3(w + k*tau) = exp(-i*pi*k^2*tau - 2*pi*i*k*w) * theta3(w).
    """
    k = int(round(z.imag / tau.imag))
    w = z - k * tau
    w = complex(w.real - round(w.real), w.imag)
    logfac = -1j * math.pi * k * k * tau - 2j * math.pi * k * w
    return w, logfac


def _theta3_raw(z, tau):
    """theta3 by direct summation; argument assumed lattice-reduced."""
    total = 1.0 + 0j
    for n in range(1, _THETA_TERM_CAP):
        term = 2.0 * np.exp(1j * math.pi * n * n * tau) * np.cos(2.0 * math.pi * n * z)
        total += term
        if abs(term) < _THETA_REL_TOL * max(abs(total), 1.0):
            return total
    raise ArithmeticError("theta series failed to converge (term cap exceeded)")


def theta(kind, z, tau):
    """Jacobi theta function theta_kind(z; tau), kind in {1,2,3,4}.

    theta1, theta2, theta4 are reduced to theta3 through the exact
    half-period shifts
        theta4(z) = theta3(z + 1/2)
        theta2(z) = exp(i*pi*z + i*pi*tau/4) * theta3(z + tau/2)
        theta1(z) = -theta2(z + 1/2).
    """
    if complex(tau).imag <= 0.0:
        raise ValueError("lattice parameter tau must have Im(tau) > 0")
    z = complex(z)
    tau = complex(tau)
    if kind == 3:
        w, logfac = _reduce_theta_arg(z, tau)
        return np.exp(logfac) * _theta3_raw(w, tau)
    if kind == 4:
        return theta(3, z + 0.5, tau)
    if kind == 2:
        return np.exp(1j * math.pi * z + 1j * math.pi * tau / 4.0) * theta(3, z + tau / 2.0, tau)
    if kind == 1:
        return -theta(2, z + 0.5, tau)
    raise ValueError(f"theta kind must be 1..4, got {kind}")


def theta_prime(kind, z, tau):
    """d/dz of theta_kind at z, by term-wise differentiation of the series.

    Needed at machine precision for theta1'(0) (the degenerate-background
    amplitude); finite differences would cap accuracy near 1e-10.
    """
    if complex(tau).imag <= 0.0:
        raise ValueError("lattice parameter tau must have Im(tau) > 0")
    z = complex(z)
    tau = complex(tau)
    if kind == 3:
        w, logfac = _reduce_theta_arg(z, tau)
        fac = np.exp(logfac)
        # theta3(z) = fac(z) * theta3(w),  d fac/dz = -2*pi*i*k * fac
        k = int(round(z.imag / tau.imag))
        t3 = _theta3_raw(w, tau)
        total = 0.0 + 0j
        for n in range(1, _THETA_TERM_CAP):
            term = (-4.0 * math.pi * n) * np.exp(1j * math.pi * n * n * tau) * np.sin(
                2.0 * math.pi * n * w
            )
            total += term
            if abs(term) < _THETA_REL_TOL * max(abs(total), abs(t3), 1.0):
                break
        else:
            raise ArithmeticError("theta series failed to converge (term cap exceeded)")
        return fac * (total - 2j * math.pi * k * t3)
    if kind == 4:
        return theta_prime(3, z + 0.5, tau)
    if kind == 2:
        pref = np.exp(1j * math.pi * z + 1j * math.pi * tau / 4.0)
        return pref * (
            1j * math.pi * theta(3, z + tau / 2.0, tau) + theta_prime(3, z + tau / 2.0, tau)
        )
    if kind == 1:
        return -theta_prime(2, z + 0.5, tau)
    raise ValueError(f"theta kind must be 1..4, got {kind}")


def jacobi_elliptic(u, m):
    """Jacobi elliptic functions (sn, cn, dn) for real u and m in [0,1].

    Uses the descending-Landen/AGM backward recursion (Abramowitz & Stegun
    16.4).  dn is recovered from dn^2 = 1 - m*sn^2, which is safe because
    dn > 0 for real argument.
    """
    m = _check_m(m, allow_one=True)
    u = float(u)
    if m == 0.0:
        return math.sin(u), math.cos(u), 1.0
    if m == 1.0:
        sn = math.tanh(u)
        sech = 1.0 / math.cosh(u)
        return sn, sech, sech
    a = [1.0]
    c = [math.sqrt(m)]
    b = math.sqrt(1.0 - m)
    while abs(c[-1]) > _AGM_TOL * a[-1]:
        a.append(0.5 * (a[-1] + b))
        c.append(0.5 * (a[-2] - b))
        b = math.sqrt(a[-2] * b)
    n = len(a) - 1
    phi = (2.0 ** n) * a[n] * u
    for i in range(n, 0, -1):
        phi = 0.5 * (phi + math.asin(max(-1.0, min(1.0, c[i] / a[i] * math.sin(phi)))))
    sn = math.sin(phi)
    cn = math.cos(phi)
    dn = math.sqrt(max(0.0, 1.0 - m * sn * sn))
    return sn, cn, dn


def landen_ascend(mt):
    """Ascending Landen map m = 4*sqrt(mt) / (1 + sqrt(mt))^2.

    Companion identities (checkable pairs, see tests):
        K(m) = (1 + sqrt(mt)) K(mt)
        E(m) = [2 E(mt) - (1 - mt) K(mt)] / (1 + sqrt(mt)).
    """
    mt = _check_m(mt, allow_one=True)
    r = math.sqrt(mt)
    return 4.0 * r / (1.0 + r) ** 2


def theta3_array(z, tau):
    """theta3 over an array of arguments at fixed tau (broadcasting sum).

    Same lattice reduction as the scalar path; the term count is fixed from
    Im(tau) so the whole grid is one numpy expression.  Matches theta(3,...)
    to machine precision.
    """
    tau = complex(tau)
    if tau.imag <= 0.0:
        raise ValueError("lattice parameter tau must have Im(tau) > 0")
    z = np.asarray(z, dtype=complex)
    k = np.round(z.imag / tau.imag)
    w = z - k * tau
    w = (w.real - np.round(w.real)) + 1j * w.imag
    logfac = -1j * math.pi * k * k * tau - 2j * math.pi * k * w
    # after reduction |Im w| <= Im(tau)/2, so |term_n| <= 2 exp(-pi*Im(tau)*(n^2-n))
    nmax = int(math.ceil(0.5 * (1.0 + math.sqrt(1.0 + 160.0 / (math.pi * tau.imag))))) + 2
    n = np.arange(1, nmax + 1)
    terms = 2.0 * np.exp(1j * math.pi * tau * n**2) * np.cos(
        2.0 * math.pi * np.multiply.outer(w, n))
    total = 1.0 + terms.sum(axis=-1)
    return np.exp(logfac) * total
