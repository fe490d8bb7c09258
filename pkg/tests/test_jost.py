"""Direct-scattering tests.

Oracle strategy: the pure elliptic step with imaginary branch points has a
closed-form scattering matrix built from two quarter roots, so the whole
Volterra pipeline (background matrices, oscillatory quadrature, boundary
extrapolation, Wronskian assembly) is checked end to end against it, off
and on the bands.  mpmath at 40 digits cross-checks the quarter roots
themselves.  Everything without a closed form is property-tested: the
Wronskian identities and symmetries of the scattering matrix, the jump
relations across each band region (with their x0-dependent phase factors
on a curved-band pair), independence of the assembly point, the large-z
column asymptotics, and the Laurent recurrences through the telescoping
cancellations that make b decay.
"""

import numpy as np
import pytest

from stepnls.background import make_background, u0_theta
from stepnls.curve import EllipticParams, _nearest_cut
from stepnls.jost import (
    asymptotic_expansion,
    endpoint_limit,
    fit_pi_coefficients,
    jost_W,
    load_scattering_csv,
    make_step_potential,
    pure_step_lambda,
    pure_step_oracle,
    scattering_coeffs,
    scattering_manifest,
    scattering_to_csv,
    solve_jost,
    compute_scattering_data,
)

ETA_L, ETA_R = (1.0, 2.0), (0.5, 1.5)


def _bump(x):
    return 0.35 * np.exp(-np.asarray(x, dtype=float) ** 2) * (1.0 + 0.3j)


@pytest.fixture(scope="module")
def canon():
    left = make_background(EllipticParams(1j, 2j))
    right = make_background(EllipticParams(0.5j, 1.5j))
    return left, right


@pytest.fixture(scope="module")
def pure_pot(canon):
    return make_step_potential(*canon)


@pytest.fixture(scope="module")
def bump_pot(canon):
    return make_step_potential(*canon, perturbation=_bump)


@pytest.fixture(scope="module")
def generic_pot():
    # curved, disjoint bands with x0 != 0 on both sides, so every phase
    # factor in the jump relations is a nontrivial complex number
    left = make_background(EllipticParams(-0.3 + 1.0j, 0.45 + 1.3j, x0=0.35))
    right = make_background(EllipticParams(0.9 + 0.6j, 1.2 + 1.5j, x0=-0.2))
    return make_step_potential(left, right, perturbation=_bump)


# ---------------------------------------------------------------------------
# the closed-form oracle itself


def test_pure_step_lambda_against_mpmath():
    import mpmath as mp

    mp.mp.dps = 40
    quarter = mp.mpf(1) / 4

    def mp_lam(z):
        z = mp.mpc(z)

        def gam(eta):
            r1 = (z - 1j * eta[1]) / (z - 1j * eta[0])
            r2 = (z + 1j * eta[0]) / (z + 1j * eta[1])
            return mp.power(r1, quarter) * mp.power(r2, quarter)

        return complex(gam(ETA_L) / gam(ETA_R))

    for z in (3.0, -0.62, 1.7 - 0.4j, 0.25 + 2.6j):
        lam = pure_step_lambda(ETA_L, ETA_R, z)
        assert lam == pytest.approx(mp_lam(z), rel=1e-13)


def test_pure_step_oracle_structure():
    # identical steps scatter trivially
    S = pure_step_oracle(ETA_L, ETA_L, 0.83)
    assert np.array_equal(S, np.eye(2))
    # on the real axis |lambda| = 1, so a is real, b imaginary, det = 1
    for z in (2.4, -0.31, 7.9):
        lam = pure_step_lambda(ETA_L, ETA_R, z)
        S = pure_step_oracle(ETA_L, ETA_R, z)
        assert abs(lam) == pytest.approx(1.0, abs=1e-14)
        assert S[0, 0].imag == pytest.approx(0.0, abs=1e-14)
        assert S[1, 0].real == pytest.approx(0.0, abs=1e-14)
        assert S[0, 0] ** 2 - S[1, 0] ** 2 == pytest.approx(1.0, abs=1e-14)


def test_pure_step_lambda_cut_tags():
    with pytest.raises(ValueError, match="side"):
        pure_step_lambda(ETA_L, ETA_R, 1.2j)
    # only the left factor is cut on (1.5i, 2i): lambda_+ = i lambda_-
    lp = pure_step_lambda(ETA_L, ETA_R, 1.8j, side="+")
    lm = pure_step_lambda(ETA_L, ETA_R, 1.8j, side="-")
    assert lp == pytest.approx(1j * lm, rel=1e-9)
    # on the overlap both quarter roots jump and the ratio is continuous
    lp = pure_step_lambda(ETA_L, ETA_R, 1.2j, side="+")
    lm = pure_step_lambda(ETA_L, ETA_R, 1.2j, side="-")
    assert lp == pytest.approx(lm, rel=1e-9)


def test_endpoint_ratio_of_b_boundary_values():
    # with the right band on top, b1(z+)/b1(z-) -> -i at the top endpoint
    # of the right-only region; the approach is sqrt(distance)
    eta_l, eta_r = (0.5, 1.5), (1.0, 2.0)
    ds = np.array([0.0005, 0.001, 0.002, 0.004, 0.008, 0.016])
    ratios = []
    for d in ds:
        z = (2.0 - d) * 1j
        Sp = pure_step_oracle(eta_l, eta_r, z, side="+")
        Sm = pure_step_oracle(eta_l, eta_r, z, side="-")
        ratios.append(Sp[1, 0] / Sm[1, 0])
    A = np.vstack([np.sqrt(ds) ** k for k in range(4)]).T
    sol, *_ = np.linalg.lstsq(A, np.array(ratios), rcond=None)
    assert sol[0] == pytest.approx(-1j, abs=1e-3)


# ---------------------------------------------------------------------------
# Volterra pipeline against the oracle


def test_scattering_matches_oracle_off_band(pure_pot):
    for z in np.linspace(-9.7, 9.7, 10):
        sp = scattering_coeffs(pure_pot, z)
        S = pure_step_oracle(ETA_L, ETA_R, z)
        assert sp.a == pytest.approx(S[0, 0], rel=1e-8)
        assert sp.b == pytest.approx(S[1, 0], rel=1e-8, abs=1e-12)


def test_scattering_matches_oracle_nontrivial_assembly(pure_pot):
    # assembly away from 0 exercises the oscillatory quadrature and the
    # grid mirroring on the right half line
    for x, z in ((0.5, 3.1), (-1.0, 0.42), (1.0, -6.3)):
        sp = scattering_coeffs(pure_pot, z, x=x)
        S = pure_step_oracle(ETA_L, ETA_R, z)
        assert sp.iterations > 0
        assert sp.a == pytest.approx(S[0, 0], rel=1e-8)
        assert sp.b == pytest.approx(S[1, 0], rel=1e-8)


def test_scattering_matches_oracle_on_bands(pure_pot):
    # b continues to b1 = S21 on the right band; on the left band the
    # continuation is b2 = -S21
    cases = [(1.2j, "overlap"), (1.8j, "left"), (0.7j, "right")]
    for z, region in cases:
        for tag in ("+", "-"):
            sp = scattering_coeffs(pure_pot, z, side=tag)
            S = pure_step_oracle(ETA_L, ETA_R, z, side=tag)
            assert sp.a == pytest.approx(S[0, 0], rel=1e-6)
            if region in ("overlap", "right"):
                assert sp.b == pytest.approx(S[1, 0], rel=1e-6)
            if region in ("overlap", "left"):
                assert sp.b2 == pytest.approx(-S[1, 0], rel=1e-6)


# ---------------------------------------------------------------------------
# Wronskian identities and symmetries


def test_unitarity_and_conjugation_on_axis(bump_pot):
    for z in (3.0, -0.8, 0.55):
        sp = scattering_coeffs(bump_pot, z)
        assert abs(sp.a) ** 2 + abs(sp.b) ** 2 == pytest.approx(1.0, abs=1e-10)
        assert sp.b2 == pytest.approx(np.conj(sp.b), abs=1e-10)
        assert sp.s22 == pytest.approx(np.conj(sp.a), abs=1e-10)
        assert sp.a * sp.s22 + sp.b * sp.b2 == pytest.approx(1.0, abs=1e-10)


def test_schwarz_symmetry_across_axis(bump_pot):
    up = scattering_coeffs(bump_pot, 1.3 + 0.9j)
    dn = scattering_coeffs(bump_pot, 1.3 - 0.9j)
    assert dn.s22 == pytest.approx(np.conj(up.a), abs=1e-10)
    assert up.b is None and up.b2 is None and up.s22 is None
    assert dn.a is None and dn.b is None and dn.b2 is None


def test_assembly_point_independence(bump_pot):
    ref = scattering_coeffs(bump_pot, 1.9)
    for x in (1.0, -1.0):
        sp = scattering_coeffs(bump_pot, 1.9, x=x)
        assert sp.a == pytest.approx(ref.a, abs=1e-10)
        assert sp.b == pytest.approx(ref.b, abs=1e-10)


def test_jump_relations_stacked_bands(bump_pot):
    # overlap of both bands: S(z+) and S(z-) exchange entries (the phase
    # factors are 1 here since E = 0 for vertically stacked curves)
    p = scattering_coeffs(bump_pot, 1.2j, side="+")
    m = scattering_coeffs(bump_pot, 1.2j, side="-")
    assert p.a == pytest.approx(m.s22, abs=1e-9)
    assert p.s22 == pytest.approx(m.a, abs=1e-9)
    assert p.b2 == pytest.approx(-m.b, abs=1e-9)
    assert p.b == pytest.approx(-m.b2, abs=1e-9)
    # left band only: a(z+-) = -+ i b2(z-+), and b does not extend
    p = scattering_coeffs(bump_pot, 1.8j, side="+")
    m = scattering_coeffs(bump_pot, 1.8j, side="-")
    assert p.a == pytest.approx(-1j * m.b2, abs=1e-9)
    assert m.a == pytest.approx(1j * p.b2, abs=1e-9)
    assert p.b is None
    # the same relation as a multiplicative jump of a
    assert p.a / m.a == pytest.approx(-m.b2 / p.b2, rel=1e-8)
    # right band only: a(z+-) = -+ i b1(z-+)
    p = scattering_coeffs(bump_pot, 0.7j, side="+")
    m = scattering_coeffs(bump_pot, 0.7j, side="-")
    assert p.a == pytest.approx(-1j * m.b, abs=1e-9)
    assert m.a == pytest.approx(1j * p.b, abs=1e-9)
    assert p.b2 is None


def test_jump_relations_generic_phases(generic_pot):
    import cmath

    bg_l = generic_pot.left
    bg_r = generic_pot.right
    # right band (disjoint from the left one): a(z+) = -i e^{2i x0 E} b1(z-)
    z = complex(bg_r.bands.arcs[0].point_at(0.45))
    p = scattering_coeffs(generic_pot, z, side="+")
    m = scattering_coeffs(generic_pot, z, side="-")
    ph = cmath.exp(2j * bg_r.x0 * bg_r.curve.E)
    assert abs(ph.imag) > 0.1  # the phase actually matters here
    assert p.a == pytest.approx(-1j * ph * m.b, abs=1e-9)
    assert m.a == pytest.approx(1j * ph * p.b, abs=1e-9)
    # left band: a(z+) = -i e^{-2i x0 E} b2(z-)
    z = complex(bg_l.bands.arcs[0].point_at(0.55))
    p = scattering_coeffs(generic_pot, z, side="+")
    m = scattering_coeffs(generic_pot, z, side="-")
    ph = cmath.exp(-2j * bg_l.x0 * bg_l.curve.E)
    assert p.a == pytest.approx(-1j * ph * m.b2, abs=1e-9)
    assert m.a == pytest.approx(1j * ph * p.b2, abs=1e-9)


def test_jost_matrix_band_jump(generic_pot):
    # W(z+) = W(z-) e^{2i x0 E sigma3} (i sigma1) across a band.  jost_W is
    # single-mesh, so extrapolate the O(h^2) quadrature error away by hand.
    bg = generic_pot.left
    z = complex(bg.bands.arcs[0].point_at(0.5))

    def refined(tag):
        coarse, fine = (jost_W(generic_pot, "left", z, side_tag=tag, x=0.4,
                               mesh_scale=s) for s in (1, 2))
        return (4.0 * fine - coarse) / 3.0

    Wp, Wm = refined("+"), refined("-")
    e = np.exp(2j * bg.x0 * bg.curve.E)
    jump = np.array([[e, 0.0], [0.0, 1.0 / e]]) @ (1j * np.array(
        [[0.0, 1.0], [1.0, 0.0]]))
    assert np.max(np.abs(Wp - Wm @ jump)) < 1e-9


# ---------------------------------------------------------------------------
# asymptotics


def test_large_z_column_asymptotics(bump_pot):
    from stepnls.jost import _assembled

    z = 1000j
    for x in (-0.7, 0.6):
        VL, _, _ = _assembled(bump_pot, "left", z, x)
        VR, _, _ = _assembled(bump_pot, "right", z, x)
        u = complex(bump_pot.u(np.array([x]))[0])
        assert 2j * z * VL[1, 0] == pytest.approx(np.conj(u), rel=1e-2)
        assert 2j * z * VR[0, 1] == pytest.approx(u, rel=1e-2)


def test_a_normalization_at_infinity(generic_pot):
    import cmath

    dx0 = generic_pot.left.x0 - generic_pot.right.x0
    for z in (800j, 500 + 500j):
        sp = scattering_coeffs(generic_pot, z)
        assert abs(sp.a * cmath.exp(-1j * dx0 * z) - 1.0) < 5e-3


def test_b_decay_for_smooth_step(canon):
    # smooth the step itself (tanh blend) and add a perturbation with a
    # third-derivative kink: u then has four integrable derivatives and
    # b must decay at least like z^-4 (the kink keeps it measurable)
    left, right = canon

    def smooth_du(x):
        x = np.asarray(x, dtype=float)
        s = 0.5 * (1.0 + np.tanh(x / 0.05))
        diff = u0_theta(right, x) - u0_theta(left, x)
        blend = np.where(x <= 0, s * diff, (s - 1.0) * diff)
        kink = 1.5 * np.abs(x - 1.1) ** 3 * np.exp(-(x - 1.1) ** 2)
        return blend + kink * np.exp(0.4j)

    pot = make_step_potential(left, right, smooth_du)
    zs = np.array([50.0, 158.0, 500.0])
    bs = np.array([abs(scattering_coeffs(pot, z, samples_per_unit=800).b)
                   for z in zs])
    assert np.all(np.diff(bs) < 0)
    slope = np.polyfit(np.log(zs), np.log(bs), 1)[0]
    assert slope <= -3.5


# ---------------------------------------------------------------------------
# solver mechanics


def test_pure_step_solution_is_trivial_at_origin(pure_pot):
    sol = solve_jost(pure_pot, "left", 2.3)
    assert sol.iterations == 0
    assert np.array_equal(sol.m_assembly(), np.eye(2))


def test_solution_anchored_and_unimodular(bump_pot):
    sol = solve_jost(bump_pot, "right", 1.7, x=-2.0, mesh_scale=2)
    assert sol.iterations > 0 and sol.converged
    # anchored to I at the +infinity end, det m = 1 along the whole grid
    # (trace-free generator, so only quadrature error shows up here)
    assert np.max(np.abs(sol.m[-1] - np.eye(2))) < 1e-12
    dets = np.linalg.det(sol.m)
    assert np.max(np.abs(dets - 1.0)) < 1e-6


def test_identical_backgrounds_scatter_trivially(canon):
    left, _ = canon
    pot = make_step_potential(left, left)
    for z in (2.2, 1.3 + 0.8j):
        sp = scattering_coeffs(pot, z)
        assert sp.a == pytest.approx(1.0, abs=1e-13)


def test_domain_errors():
    left = make_background(EllipticParams(1j, 2j))
    right = make_background(EllipticParams(0.5j, 1.5j))
    pot = make_step_potential(left, right, perturbation=_bump)
    with pytest.raises(ValueError, match="column"):
        solve_jost(pot, "left", 2 + 3j, columns="second")
    with pytest.raises(ValueError, match="real axis"):
        solve_jost(pot, "left", 2 + 3j, columns="both")
    with pytest.raises(ValueError, match="side"):
        scattering_coeffs(pot, 1.2j)
    with pytest.raises(ValueError, match="'left' or 'right'"):
        solve_jost(pot, "middle", 2.0)
    with pytest.raises(RuntimeError, match="did not reach"):
        solve_jost(pot, "left", 0.9, x=1.0, max_iter=1)
    sol = solve_jost(pot, "left", 0.9, x=1.0, max_iter=1,
                     raise_on_fail=False)
    assert not sol.converged


def test_half_plane_availability(bump_pot):
    up = scattering_coeffs(bump_pot, 2 + 2j)
    assert up.a is not None and up.b is None
    dn = scattering_coeffs(bump_pot, 2 - 2j)
    assert dn.s22 is not None and dn.a is None


# ---------------------------------------------------------------------------
# endpoint regularization


def test_endpoint_limit_matches_band_extrapolation(bump_pot):
    # gamma^{+-1} e^{ixE sigma3} W, extrapolated onto the endpoint along
    # the band in powers of sqrt(d), must match the regularized solve
    def reference(side, endpoint, sigma):
        bg = bump_pot.background(side)
        arc = bg.bands.arcs[0]
        nodes, Lb = arc.nodes, arc.length()
        zj, zin = ((complex(nodes[-1]), complex(nodes[-2]))
                   if endpoint == "z2"
                   else (complex(nodes[0]), complex(nodes[1])))
        that = (zin - zj) / abs(zin - zj)
        ds = np.array([0.0005, 0.001, 0.002, 0.004, 0.008, 0.016]) * Lb
        vals = []
        for d in ds:
            z = zj + d * that
            nrm, delta = _nearest_cut(bg.curve, bg.bands, z)
            gn = complex(bg.gamma_fn(np.array([z + 0.5 * delta * nrm]))[0])
            gf = complex(bg.gamma_fn(np.array([z + delta * nrm]))[0])
            g = 2.0 * gn - gf
            vals.append(g ** sigma * jost_W(bump_pot, side, z,
                                            side_tag="+", x=-1.0))
        A = np.vstack([np.sqrt(ds) ** k for k in range(4)]).T
        sol, *_ = np.linalg.lstsq(A, np.array(vals).reshape(len(ds), 4),
                                  rcond=None)
        return sol[0].reshape(2, 2)

    for side in ("left", "right"):
        for endpoint, sigma in (("z2", 1), ("z1", -1)):
            What = endpoint_limit(bump_pot, side, endpoint, x=-1.0, tag="+")
            ref = reference(side, endpoint, sigma)
            assert np.max(np.abs(What - ref)) < 3e-4


def test_endpoint_limit_trivial_case(pure_pot):
    # empty window: the regularized solution is exactly its leading term
    data = endpoint_limit(pure_pot, "left", "z2", x=-1.0, full_output=True)
    assert data.iterations == 0
    assert np.array_equal(data.What, data.What0)
    assert data.A_limit == 0 and data.p_limit == 0
    with pytest.raises(ValueError, match="endpoint"):
        endpoint_limit(pure_pot, "left", "z3")


def test_endpoint_limit_z1_half_periods(bump_pot):
    data = endpoint_limit(bump_pot, "left", "z1", tag="+", full_output=True)
    cur = bump_pot.left.curve
    # the Abel map and quasimomentum reach half periods at z1
    assert abs(abs(data.p_limit) - abs(cur.Omega1) / 2) < 1e-12
    two_A = 2.0 * data.A_limit
    # 2 A_limit is a lattice point congruent to tau
    k = round((two_A - cur.tau).real)
    n = round(((two_A - cur.tau - k) / cur.tau).real)
    assert abs(two_A - (k + (n + 1) * cur.tau)) < 1e-12


# ---------------------------------------------------------------------------
# Laurent recurrences


def test_expansion_leading_coefficients(canon):
    left, _ = canon
    xs = np.linspace(-3.0, 3.0, 3001)
    u0 = u0_theta(left, xs)
    alpha, beta = asymptotic_expansion(u0, xs, (left.curve.pi1,), order=2)
    assert np.array_equal(beta[1], u0 / 2j)
    # i alpha1' = |u|^2 / 2 - pi1, so alpha1 stays bounded on the torus
    h = xs[1] - xs[0]
    d1 = np.gradient(alpha[1], h)
    target = (np.abs(u0) ** 2 / 2 - left.curve.pi1) / 1j
    assert np.max(np.abs(d1[5:-5] - target[5:-5])) < 2e-4
    assert np.max(np.abs(alpha[1])) < 2.0


def test_expansion_telescoping_brackets(canon):
    # the order z^-1..z^-3 coefficients of b are sums that cancel exactly
    # for a shared potential, whatever integration constants the two
    # sides picked -- this is why b decays like z^-4
    left, _ = canon
    xs = np.linspace(-3.0, 3.0, 3001)
    u = u0_theta(left, xs) + _bump(xs)
    pis = fit_pi_coefficients(left)
    aL, bL = asymptotic_expansion(u, xs, pis, order=3,
                                  alpha_init=(0.17 - 0.05j, -0.3j, 0.1))
    aR, bR = asymptotic_expansion(u, xs, pis, order=3,
                                  alpha_init=(-0.4 + 0.21j, 0.09, -0.2j))
    for n in (1, 2, 3):
        tot = np.zeros_like(u)
        for j in range(1, n + 1):
            tot += np.conj(bR[j]) * aL[n - j] - np.conj(bL[j]) * aR[n - j]
        assert np.max(np.abs(tot)) < 1e-11


def test_expansion_zero_field():
    xs = np.linspace(-1.0, 1.0, 101)
    alpha, beta = asymptotic_expansion(np.zeros_like(xs), xs, (0.0, 0.0),
                                       order=4)
    for k in (1, 2, 3, 4):
        assert np.array_equal(beta[k], np.zeros_like(xs))
        assert np.array_equal(alpha[k], np.zeros_like(xs))
    with pytest.raises(ValueError, match="order"):
        asymptotic_expansion(np.zeros_like(xs), xs, (), order=5)
    with pytest.raises(ValueError, match="uniform"):
        asymptotic_expansion(np.zeros(3), np.array([0.0, 0.1, 0.3]), ())


def test_fit_pi_coefficients(canon):
    left, _ = canon
    pis = fit_pi_coefficients(left)
    assert pis[0] == pytest.approx(left.curve.pi1, rel=1e-6)
    assert abs(pis[0].imag) < 1e-6


# ---------------------------------------------------------------------------
# sampled data and formats


def test_scattering_data_roundtrip(pure_pot, tmp_path):
    sd = compute_scattering_data(pure_pot, real_points=4, band_points=1)
    assert len(sd.points) == 4 + 2 * 2 * 1
    csv_path = tmp_path / "scattering.csv"
    scattering_to_csv(sd, csv_path)
    back = load_scattering_csv(csv_path)
    assert len(back) == len(sd.points)
    for p, q in zip(sd.points, back):
        assert complex(p.z) == q.z and p.side_tag == q.side_tag
        for name in ("a", "b", "b2", "s22"):
            v, w = getattr(p, name), getattr(q, name)
            assert (v is None) == (w is None)
            if v is not None:
                assert complex(v) == w
        assert p.iterations == q.iterations
        assert p.converged == q.converged
    man = scattering_manifest(sd, "scattering.csv")
    assert man["format"].startswith("stepnls-scattering")
    assert man["counts"] == {"real": 4, "band": 4}
    assert man["solver"]["mesh_richardson"] is True


def test_potential_sampling_and_branches(canon):
    left, right = canon
    pot = make_step_potential(left, right, perturbation=_bump)
    assert pot.support[0] < -4 and pot.support[1] > 4
    # the glued field takes the left background at 0 and the right just after
    um, up = pot.du_side_limits("left", np.array([0.0]))
    assert um[0] == 0.0 + _bump(0.0)
    assert up[0] != um[0]
    # scalar (non-vectorized) perturbations work too
    pot2 = make_step_potential(left, right,
                               perturbation=lambda x: complex(_bump(x)))
    assert pot2.du_global(np.array([0.3]))[0] == pytest.approx(
        complex(_bump(0.3)), rel=1e-12)
    with pytest.raises(ValueError, match="increasing"):
        make_step_potential(left, right, _bump, support=(2.0, -2.0))
