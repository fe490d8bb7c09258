"""Cauchy transforms and Plemelj boundary values on panelized contours.

Densities live on oriented polyline arcs, sampled at Gauss-Legendre panel
nodes with dyadic grading toward the arc endpoints (band tips).  Endpoint
behavior is declared per tip -- bounded, log, or a power p in (-1, 0) --
and singular tips get a polynomial substitution rule on the innermost
panel so the declared classes integrate to full accuracy.

Off-contour evaluation is hybrid: a panel whose Bernstein-ellipse
parameter for the target is large contributes through the plain
quadrature sum, while close targets go through the exact formula

    (1/2 pi i) int P_n(t) / (t - w) dt = -Q_n(w) / (pi i),

with Q_n the Legendre functions of the second kind (upward recurrence;
stable precisely in the close regime where it is used).  On-contour
limits take Q_n(t +- i0) = Q_n(t) -+ (i pi/2) P_n(t), which is how the
boundary-values matrix for the singular-equation solver is assembled.
Spot boundary values are instead computed by the classical subtraction
trick -- integrate (f(s) - f(z))/(s - z) and add the analytic principal
value of the pure kernel -- so the two paths cross-validate each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .contours import Contour, point_segment_distance

__all__ = [
    "Panel",
    "PanelQuadrature",
    "DensityOnContour",
    "panel_quadrature",
    "sample_density",
    "cauchy_transform",
    "plemelj_boundary",
    "boundary_values_matrix",
    "endpoint_log_coefficient",
]

# on-contour detection radius, as a fraction of total contour length
TUBE_FRACTION = 1e-9


@lru_cache(maxsize=None)
def _gauss_rule(order):
    return legendre.leggauss(order)


@lru_cache(maxsize=None)
def _coef_matrix(order):
    """Samples at the Gauss nodes -> Legendre coefficients of the interpolant."""
    t, v = _gauss_rule(order)
    vander = legendre.legvander(t, order - 1).T
    return (np.arange(order) + 0.5)[:, None] * vander * v[None, :]


def _check_tag(tag):
    if tag in ("bounded", "log"):
        return tag
    if isinstance(tag, (int, float)) and -1.0 < float(tag) < 0.0:
        return float(tag)
    raise ValueError(
        "endpoint tag must be 'bounded', 'log', or a power in (-1, 0); "
        f"got {tag!r}")


def _normalize_tags(tags, narcs):
    if tags is None:
        return tuple(("bounded", "bounded") for _ in range(narcs))
    tags = list(tags)
    if len(tags) == 2 and not isinstance(tags[0], (tuple, list)):
        tags = [tags] * narcs
    if len(tags) != narcs:
        raise ValueError(f"need one (start, end) tag pair per arc; got "
                         f"{len(tags)} pairs for {narcs} arcs")
    return tuple((_check_tag(a), _check_tag(b)) for a, b in tags)


def _tip_beta(tag):
    """Substitution exponent flattening the tagged singularity.

    s = tip + (far - tip) x^beta turns s^p ds into x^(beta(1+p)-1) dx; any
    exponent >= 3 leaves the Gauss rule with at worst an x^3-type kink,
    which is below 1e-9 at the orders used here.
    """
    if tag == "bounded":
        return 0.0
    if tag == "log":
        return 4.0
    return max(4.0, math.ceil(4.0 / (1.0 + tag)))


@dataclass(frozen=True)
class Panel:
    """One straight quadrature panel from a to b (a slice of an arc)."""

    a: complex
    b: complex
    arc_index: int
    offset: int          # index of this panel's first node in the flat arrays
    order: int
    beta: float = 0.0    # 0 -> plain Gauss rule; else tip substitution
    tip_at_b: bool = False

    @property
    def center(self):
        return 0.5 * (self.a + self.b)

    @property
    def radius(self):
        return 0.5 * (self.b - self.a)

    def local(self, z):
        return (np.asarray(z, dtype=complex) - self.center) / self.radius

    def rule(self):
        """Global nodes and complex line-element weights for this panel."""
        t, v = _gauss_rule(self.order)
        if not self.beta:
            return self.center + self.radius * t, self.radius * v
        x = 0.5 * (t + 1.0)
        tip = self.b if self.tip_at_b else self.a
        # nodes must stay off the tip in float arithmetic: tip + u*(b-a)
        # rounds onto the tip once u drops below ~eps*|tip|/|b-a|, so the
        # exponent is reduced to what the tip's position can represent.
        # This caps the accuracy for strong powers at tips far from the
        # origin (p = -3/4 at |tip| ~ 1 lands near 1e-5); the log and
        # quartic-root classes the scattering theory produces are uncapped.
        floor_u = (8.0 * np.finfo(float).eps * abs(tip)
                   / abs(self.b - self.a) + 1e-300)
        beta = self.beta
        if x[0] ** beta < floor_u:
            beta = max(4.0, math.log(floor_u) / math.log(x[0]))
        u = np.maximum(x ** beta, floor_u)
        w = (self.b - self.a) * beta * x ** (beta - 1.0) * (0.5 * v)
        if self.tip_at_b:
            return self.b - (self.b - self.a) * u, w
        return self.a + (self.b - self.a) * u, w


@dataclass
class PanelQuadrature:
    """Flattened panel discretization of a contour."""

    contour: Contour
    order: int
    panels: list
    nodes: np.ndarray
    weights: np.ndarray
    tags: tuple

    @property
    def tube(self):
        return TUBE_FRACTION * self.contour.length()

    def integrate(self, values):
        return complex(self.weights @ np.asarray(values))


def _graded_breaks(depth, grade_start, grade_end):
    dy = [2.0 ** -k for k in range(depth, 0, -1)]       # 2^-depth .. 1/2
    lo = dy if grade_start else [0.5]
    hi = [1.0 - x for x in dy[:-1]][::-1] if grade_end else []
    return np.array([0.0] + lo + hi + [1.0])


def panel_quadrature(contour, order=16, depth=12, tags=None, max_panel=None):
    """Panelize a contour for Cauchy-transform work.

    Each polyline segment is covered exactly (panels never straddle a
    kink).  Segments containing an arc endpoint are graded dyadically
    toward it, `depth` halvings deep; `max_panel` additionally splits any
    panel longer than that.  `tags` declares the endpoint behavior of the
    densities to come, one (start, end) pair per arc; singular tags put a
    flattening substitution on the tip panel.
    """
    if order < 2:
        raise ValueError("panel order must be at least 2")
    tags = _normalize_tags(tags, len(contour.arcs))
    panels = []
    nodes, weights = [], []
    offset = 0
    for ai, arc in enumerate(contour.arcs):
        start_tag, end_tag = tags[ai]
        pts = arc.nodes
        nseg = len(pts) - 1
        for k in range(nseg):
            A, B = complex(pts[k]), complex(pts[k + 1])
            if A == B:
                continue
            first, last = k == 0, k == nseg - 1
            fr = _graded_breaks(depth, first, last)
            if max_panel is not None:
                seg_len = abs(B - A)
                refined = [fr[0]]
                for s0, s1 in zip(fr[:-1], fr[1:]):
                    extra = int(np.ceil((s1 - s0) * seg_len / max_panel))
                    refined.extend(s0 + (s1 - s0) * np.arange(1, extra + 1) / extra)
                fr = np.array(refined)
            for j, (s0, s1) in enumerate(zip(fr[:-1], fr[1:])):
                beta, tip_at_b = 0.0, False
                if first and j == 0 and start_tag != "bounded":
                    beta = _tip_beta(start_tag)
                if last and j == len(fr) - 2 and end_tag != "bounded":
                    beta, tip_at_b = _tip_beta(end_tag), True
                pan = Panel(A + s0 * (B - A), A + s1 * (B - A), ai, offset,
                            order, beta=beta, tip_at_b=tip_at_b)
                s, w = pan.rule()
                panels.append(pan)
                nodes.append(s)
                weights.append(w)
                offset += order
    return PanelQuadrature(contour, order, panels, np.concatenate(nodes),
                           np.concatenate(weights), tags)


@dataclass
class DensityOnContour:
    """Complex density sampled at the quadrature nodes of a contour."""

    contour: Contour
    values: np.ndarray
    quad: PanelQuadrature
    tags: tuple = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.quad.nodes.shape:
            raise ValueError("density needs one value per quadrature node: "
                             f"{self.values.shape} vs {self.quad.nodes.shape}")
        if self.contour is not self.quad.contour:
            raise ValueError("density contour and quadrature contour differ")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density values must be finite at the "
                             "(interior) quadrature nodes")
        if self.tags is None:
            self.tags = self.quad.tags
        else:
            self.tags = _normalize_tags(self.tags, len(self.contour.arcs))


def sample_density(quad, fn):
    """Evaluate fn at the quadrature nodes and wrap as a density."""
    return DensityOnContour(quad.contour, fn(quad.nodes), quad)


# ---------------------------------------------------------------------------
# core evaluation


def _bernstein_radius(w):
    """|w + sqrt(w^2 - 1)| with the branch making it >= 1."""
    s = np.sqrt(w - 1.0) * np.sqrt(w + 1.0)
    r = np.abs(w + s)
    return np.where(r >= 1.0, r, 1.0 / r)


def _legendre_q(w, count, side=0):
    """Q_0 .. Q_{count-1} at points w, upward recurrence.

    side=+1/-1 asks for the boundary values from the left/right of the
    oriented cut [-1, 1] (w is then taken as the real cut coordinate).
    """
    w = np.asarray(w, dtype=complex)
    if side:
        t = w.real.astype(complex)
        q0 = 0.5 * np.log((1.0 + t) / (1.0 - t)) - side * 0.5j * np.pi
        w = t
    else:
        q0 = 0.5 * np.log((w + 1.0) / (w - 1.0))
    out = np.empty((count,) + w.shape, dtype=complex)
    out[0] = q0
    if count > 1:
        out[1] = w * q0 - 1.0
    for n in range(1, count - 1):
        out[n + 1] = ((2 * n + 1) * w * out[n] - n * out[n - 1]) / (n + 1)
    return out


def _panel_block(quad, pan, zs, oncut_side=None):
    """(len(zs), order) weights: block @ panel_values = panel's share of C[f].

    oncut_side marks targets that are quadrature nodes of this very panel
    (+1 plus side, -1 minus side); everything else is classified by the
    Bernstein radius of its local coordinate.
    """
    order = pan.order
    sl = slice(pan.offset, pan.offset + order)
    snodes, swei = quad.nodes[sl], quad.weights[sl]
    zs = np.asarray(zs, dtype=complex)
    block = np.empty((len(zs), order), dtype=complex)

    oncut = np.zeros(len(zs), dtype=bool)
    if oncut_side is not None:
        oncut = oncut_side != 0
    w = pan.local(zs)
    rho = np.full(len(zs), np.inf)
    if pan.beta == 0.0:
        rho[~oncut] = _bernstein_radius(w[~oncut])
    # quadrature error of the plain sum ~ rho^-(2g+1); Q recurrence noise
    # grows like rho^g * eps, so this cutoff keeps both below ~1e-12
    cut = 10.0 ** (12.0 / (2 * order + 1))

    far = (~oncut) & (rho >= cut)
    if np.any(far):
        block[far] = swei / (2j * np.pi) / (snodes[None, :] - zs[far, None])
    near = (~oncut) & ~far
    if np.any(near):
        q = _legendre_q(w[near], order)
        block[near] = (q.T @ _coef_matrix(order)) / (-1j * np.pi)
    if np.any(oncut):
        for sgn in (1, -1):
            rows = oncut_side == sgn
            if np.any(rows):
                q = _legendre_q(w[rows], order, side=sgn)
                block[rows] = (q.T @ _coef_matrix(order)) / (-1j * np.pi)
    return block


def cauchy_transform(f, z, side=None):
    """(1/2 pi i) int f(s)/(s - z) ds over the contour carrying f.

    z inside the on-contour tube needs a side tag ('plus'/'minus', the
    left/right of the orientation) and is routed to plemelj_boundary.
    """
    z = complex(z)
    quad = f.quad
    if float(f.contour.distance(z)) <= quad.tube:
        if side is None:
            raise ValueError("z sits on the contour (within the detection "
                             "tube); pass side='plus' or side='minus'")
        return plemelj_boundary(f, z, side)
    zs = np.array([z])
    total = 0.0 + 0.0j
    for pan in quad.panels:
        vals = f.values[pan.offset:pan.offset + pan.order]
        total += _panel_block(quad, pan, zs)[0] @ vals
    return complex(total)


def _side_sign(side):
    try:
        return {"plus": 1, "minus": -1, 1: 1, -1: -1}[side]
    except KeyError:
        raise ValueError(f"side must be 'plus' or 'minus', got {side!r}") from None


def _owner_panel(quad, z):
    best, best_d = None, np.inf
    for pan in quad.panels:
        d = float(point_segment_distance(z, pan.a, pan.b))
        if d < best_d:
            best, best_d = pan, d
    return best


def plemelj_boundary(f, z, side):
    """One-sided boundary value C_side[f](z) at an interior contour point.

    Computed by the subtraction trick: the smooth remainder
    (f(s) - f(z))/(s - z) goes through the standard rule, and f(z) times
    the exact principal value of the bare kernel is added back, so
    C_+ - C_- = f(z) and C_+ + C_- = 2 PV hold by construction.
    """
    sgn = _side_sign(side)
    z = complex(z)
    quad = f.quad

    arcs = f.contour.arcs
    ai = int(np.argmin([float(a.distance(z)) for a in arcs]))
    arc = arcs[ai]
    if min(abs(z - arc.start), abs(z - arc.end)) <= 1e-6 * arc.length():
        raise ValueError("z is at (or hugging) an arc endpoint; boundary "
                         "values are defined on the open arc -- for the tip "
                         "behavior use endpoint_log_coefficient")

    own = _owner_panel(quad, z)
    if own.beta:
        raise ValueError("z lies on the graded tip panel of a singular-"
                         "tagged endpoint, where the density has no "
                         "pointwise boundary value")
    t = float(np.clip(np.real(own.local(z)), -1.0, 1.0))
    if 1.0 - abs(t) < 1e-9:
        raise ValueError("z sits on a panel junction; move it along the arc")

    coef = _coef_matrix(own.order) @ f.values[own.offset:own.offset + own.order]
    fz = complex(legendre.legval(t, coef))

    diff = quad.nodes - z
    quot = np.empty_like(diff)
    ok = np.abs(diff) > 1e-13 * abs(own.radius)
    quot[ok] = (f.values[ok] - fz) / diff[ok]
    if not np.all(ok):
        # z collides with a node: the quotient limit is the density slope
        quot[~ok] = legendre.legval(t, legendre.legder(coef)) / own.radius
    pv = quad.weights @ quot

    for pan in quad.panels:
        if pan is own:
            pv += fz * math.log((1.0 - t) / (1.0 + t))
        else:
            pv += fz * np.log((pan.b - z) / (pan.a - z))
    pv /= 2j * np.pi
    return complex(pv + sgn * 0.5 * fz)


def boundary_values_matrix(quad, side):
    """Dense matrix of the one-sided Cauchy operator at the nodes.

    Row i holds quadrature weights such that (B @ values)_i is the
    side-`side` boundary value of the transform at node i; the Plemelj
    identity appears as B_plus - B_minus = I exactly.  This is the
    discretization the singular-integral solver collocates with.
    """
    sgn = _side_sign(side)
    n = len(quad.nodes)
    out = np.empty((n, n), dtype=complex)
    marks = np.zeros(n, dtype=int)
    for pan in quad.panels:
        sl = slice(pan.offset, pan.offset + pan.order)
        marks[:] = 0
        marks[sl] = sgn
        out[:, sl] = _panel_block(quad, pan, quad.nodes, oncut_side=marks)
    return out


def endpoint_log_coefficient(f, endpoint, approach_angle, radii=None):
    """Strength of the log singularity of C[f] at an arc endpoint.

    Samples the transform along the ray endpoint + r exp(i angle) and
    fits C ~ kappa log(r) + const by least squares; kappa approaches
    +f(z0)/(2 pi i) at a terminal endpoint and -f(z0)/(2 pi i) at an
    initial one.  The ray must stay non-tangential, and the density must
    be tagged bounded there (a singular tip has no log model).
    """
    z0 = complex(endpoint)
    scale = f.contour.length()
    hit = []
    for ai, arc in enumerate(f.contour.arcs):
        if abs(z0 - arc.start) <= 1e-12 * scale:
            hit.append((ai, "initial"))
        if abs(z0 - arc.end) <= 1e-12 * scale:
            hit.append((ai, "terminal"))
    if not hit:
        raise ValueError("endpoint does not coincide with any arc endpoint")

    ray = np.exp(1j * approach_angle)
    for ai, which in hit:
        tag = f.tags[ai][0 if which == "initial" else 1]
        if tag != "bounded":
            raise ValueError("density is tagged singular at this endpoint; "
                             "the log-coefficient model needs a bounded one")
        tangent = f.contour.arcs[ai].tangent_at(z0)
        if abs(np.imag(ray * np.conj(tangent))) < 0.15:
            raise ValueError("approach ray is tangential to the contour "
                             "at this endpoint")

    if radii is None:
        radii = np.geomspace(1e-6, 1e-3, 12) * scale
    vals = np.array([cauchy_transform(f, z0 + r * ray) for r in radii])
    design = np.stack([np.log(radii), np.ones_like(radii)], axis=1)
    sol = np.linalg.lstsq(design, vals, rcond=None)[0]
    return complex(sol[0])
