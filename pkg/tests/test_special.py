"""Self-contained special functions against independent oracles.

mpmath (arbitrary precision, completely different algorithms) provides the
reference values; a couple of table constants are frozen inline as well.
Conventions under test: parameter m = k^2 everywhere, theta functions with
period 1 in z (theta3(z) = sum exp(2 pi i n z + i pi n^2 tau)).
"""

import math

import mpmath
import numpy as np
import pytest

from stepnls import (
    elliptic_E,
    elliptic_K,
    jacobi_elliptic,
    landen_ascend,
    theta,
    theta_prime,
)


def mp_theta(kind, z, tau):
    # mpmath uses the pi-scaled argument and the nome q = exp(i pi tau)
    q = mpmath.exp(1j * mpmath.pi * tau)
    return complex(mpmath.jtheta(kind, mpmath.pi * z, q))


def test_complete_integrals_table_values():
    # frozen reference values (independent tables)
    assert abs(elliptic_K(0.5) - 1.8540746773013719) < 1e-14
    assert abs(elliptic_E(0.5) - 1.3506438810476755) < 1e-14
    assert abs(elliptic_K(0.0) - math.pi / 2) < 1e-15
    assert abs(elliptic_E(0.0) - math.pi / 2) < 1e-15
    assert elliptic_E(1.0) == 1.0


def test_complete_integrals_against_mpmath():
    rng = np.random.default_rng(20240817)
    for m in rng.uniform(1e-6, 1.0 - 1e-9, size=40):
        K_ref = float(mpmath.ellipk(m))
        E_ref = float(mpmath.ellipe(m))
        assert abs(elliptic_K(m) - K_ref) < 1e-13 * K_ref
        assert abs(elliptic_E(m) - E_ref) < 1e-13 * E_ref


def test_K_near_one_log_regime():
    # the AGM/log switchover must be seamless
    for mc in (1e-11, 1e-12, 1e-13, 1e-14):
        m = 1.0 - mc  # rounded once, in double; hand mpmath that exact value
        ref = float(mpmath.ellipk(mpmath.mpf(m)))
        assert abs(elliptic_K(m) - ref) < 1e-10 * ref


def test_legendre_relation():
    """E(m) K(1-m) + E(1-m) K(m) - K(m) K(1-m) = pi/2."""
    rng = np.random.default_rng(7)
    for m in rng.uniform(0.02, 0.98, size=25):
        lhs = (elliptic_E(m) * elliptic_K(1 - m)
               + elliptic_E(1 - m) * elliptic_K(m)
               - elliptic_K(m) * elliptic_K(1 - m))
        assert abs(lhs - math.pi / 2) < 1e-12


def test_landen_ascend_pairs():
    rng = np.random.default_rng(123)
    for mt in rng.uniform(0.01, 0.99, size=20):
        m = landen_ascend(mt)
        r = math.sqrt(mt)
        assert abs(elliptic_K(m) - (1 + r) * elliptic_K(mt)) < 1e-12 * elliptic_K(m)
        E_pred = (2 * elliptic_E(mt) - (1 - mt) * elliptic_K(mt)) / (1 + r)
        assert abs(elliptic_E(m) - E_pred) < 1e-12


def test_parameter_domain_errors():
    with pytest.raises(ValueError):
        elliptic_K(1.0)
    with pytest.raises(ValueError):
        elliptic_K(-0.1)
    with pytest.raises(ValueError):
        elliptic_E(1.2)


# ---------------------------------------------------------------------- theta


def test_theta3_against_mpmath():
    rng = np.random.default_rng(42)
    for _ in range(30):
        tau = complex(rng.uniform(-0.4, 0.4), rng.uniform(0.15, 2.5))
        z = complex(rng.uniform(-3, 3), rng.uniform(-2, 2))
        ref = mp_theta(3, z, tau)
        got = theta(3, z, tau)
        assert abs(got - ref) < 1e-11 * max(1.0, abs(ref))


@pytest.mark.parametrize("kind", [1, 2, 4])
def test_theta_other_kinds_against_mpmath(kind):
    rng = np.random.default_rng(100 + kind)
    for _ in range(15):
        tau = complex(rng.uniform(-0.3, 0.3), rng.uniform(0.2, 1.5))
        z = complex(rng.uniform(-2, 2), rng.uniform(-1, 1))
        ref = mp_theta(kind, z, tau)
        got = theta(kind, z, tau)
        assert abs(got - ref) < 1e-10 * max(1.0, abs(ref))


def test_theta3_periodicity_and_quasi_periodicity():
    tau = 0.3 + 0.8j
    rng = np.random.default_rng(5)
    for _ in range(10):
        z = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        t0 = theta(3, z, tau)
        assert abs(theta(3, z + 1, tau) - t0) < 1e-12 * abs(t0)
        lam = np.exp(-1j * math.pi * tau - 2j * math.pi * z)
        assert abs(theta(3, z + tau, tau) - lam * t0) < 1e-11 * abs(lam * t0)
        assert abs(theta(3, -z, tau) - t0) < 1e-12 * abs(t0)  # even


def test_theta3_zero_location():
    # theta3 vanishes at the half-period (1 + tau)/2
    for tau in (0.9j, 0.25 + 0.6j, 1.4j):
        val = theta(3, (1 + tau) / 2, tau)
        assert abs(val) < 1e-12


def test_theta1_odd_and_derivative_identity():
    """theta1 is odd; theta1'(0) = pi theta2(0) theta3(0) theta4(0).

    (In the period-1 convention the classical identity picks up the pi from
    the argument scaling.)
    """
    tau = 0.7j
    z = 0.3 + 0.1j
    assert abs(theta(1, z, tau) + theta(1, -z, tau)) < 1e-12
    d = theta_prime(1, 0.0, tau)
    prod = math.pi * theta(2, 0, tau) * theta(3, 0, tau) * theta(4, 0, tau)
    assert abs(d - prod) < 1e-11 * abs(prod)


def test_jacobi_quartic_identity():
    # theta2^4 + theta4^4 = theta3^4 at z = 0
    for tau in (0.5j, 0.2 + 0.9j, 1.1j):
        t2 = theta(2, 0, tau)
        t3 = theta(3, 0, tau)
        t4 = theta(4, 0, tau)
        assert abs(t2**4 + t4**4 - t3**4) < 1e-11 * abs(t3) ** 4


def test_theta_prime_matches_finite_difference():
    tau = 0.35 + 0.75j
    rng = np.random.default_rng(77)
    for kind in (1, 2, 3, 4):
        z = complex(rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3))
        h = 1e-5
        fd = (theta(kind, z + h, tau) - theta(kind, z - h, tau)) / (2 * h)
        assert abs(theta_prime(kind, z, tau) - fd) < 1e-7 * max(1.0, abs(fd))


def test_theta_elliptic_consistency():
    """Dual route: K and m recovered from theta constants at tau = i K'/K."""
    for m in (0.25, 0.5, 0.8, 0.96):
        K = elliptic_K(m)
        tau = 1j * elliptic_K(1 - m) / K
        t3 = theta(3, 0, tau)
        t2 = theta(2, 0, tau)
        assert abs(t3**2 - 2 * K / math.pi) < 1e-12 * abs(t3) ** 2
        assert abs((t2 / t3) ** 4 - m) < 1e-12


# --------------------------------------------------------------------- jacobi


def test_jacobi_elliptic_against_mpmath():
    rng = np.random.default_rng(2024)
    sn_f = mpmath.ellipfun("sn")
    for _ in range(40):
        m = rng.uniform(0.02, 0.98)
        u = rng.uniform(-8.0, 8.0)
        sn, cn, dn = jacobi_elliptic(u, m)
        assert abs(sn - float(sn_f(u, m))) < 2e-12
        assert abs(cn - float(mpmath.ellipfun("cn", u, m))) < 2e-12
        assert abs(dn - float(mpmath.ellipfun("dn", u, m))) < 2e-12


def test_jacobi_pythagorean_identities():
    rng = np.random.default_rng(11)
    for _ in range(50):
        m = rng.uniform(0.0, 1.0)
        u = rng.uniform(-12, 12)
        sn, cn, dn = jacobi_elliptic(u, m)
        assert abs(sn**2 + cn**2 - 1) < 1e-12
        assert abs(dn**2 + m * sn**2 - 1) < 1e-12


def test_jacobi_special_arguments():
    m = 0.64
    K = elliptic_K(m)
    sn, cn, dn = jacobi_elliptic(K, m)
    assert abs(sn - 1) < 1e-12
    assert abs(cn) < 1e-12
    assert abs(dn - math.sqrt(1 - m)) < 1e-12
    # period 4K
    for u in (0.3, 1.7):
        s0, c0, d0 = jacobi_elliptic(u, m)
        s4, c4, d4 = jacobi_elliptic(u + 4 * K, m)
        assert abs(s0 - s4) < 1e-11 and abs(c0 - c4) < 1e-11 and abs(d0 - d4) < 1e-11


def test_jacobi_derivative_relations():
    # sn' = cn dn, cn' = -sn dn, dn' = -m sn cn
    m = 0.41
    h = 1e-6
    for u in (-2.3, 0.4, 1.9):
        sn, cn, dn = jacobi_elliptic(u, m)
        snp = (jacobi_elliptic(u + h, m)[0] - jacobi_elliptic(u - h, m)[0]) / (2 * h)
        assert abs(snp - cn * dn) < 1e-8
