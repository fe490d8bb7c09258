"""Oriented polyline contours: membership, tangents, set algebra, CSV export.

Bands, the gap segment and the real-line pieces of the scattering contour are
all represented as `Arc`s (oriented polylines through complex nodes).  The
set algebra needed for the seven jump regions (intersections / differences of
left and right bands) is implemented for the configuration the scattering
theory actually uses: bands that are collinear vertical segments.  Arcs that
are farther apart than the tolerance everywhere are handled as disjoint;
anything else is rejected as unsupported, loudly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Arc", "Contour", "winding_number", "point_segment_distance"]


def point_segment_distance(z, a, b):
    """Distance from point(s) z to the segment [a, b] in the complex plane."""
    z = np.asarray(z, dtype=complex)
    d = b - a
    L2 = abs(d) ** 2
    if L2 == 0.0:
        return np.abs(z - a)
    t = np.clip(((z - a) * np.conj(d)).real / L2, 0.0, 1.0)
    return np.abs(z - (a + t * d))


def winding_number(poly, z):
    """Winding number of the closed polyline `poly` (last node joins first)
    around point(s) z, by summing argument increments.  Half-integer results
    (z on the polygon) are rounded towards zero-crossing noise; callers keep
    query points off the boundary.
    """
    z = np.asarray(z, dtype=complex)
    total = np.zeros(z.shape, dtype=float)
    nodes = np.asarray(poly, dtype=complex)
    for k in range(len(nodes)):
        a = nodes[k] - z
        b = nodes[(k + 1) % len(nodes)] - z
        total += np.angle(b / a)
    return np.rint(total / (2.0 * np.pi)).astype(int)


@dataclass
class Arc:
    """One oriented polyline from nodes[0] to nodes[-1].

    start_tag / end_tag name the branch point (or region label) the arc
    begins/ends at; purely metadata.
    """

    nodes: np.ndarray
    start_tag: str = ""
    end_tag: str = ""

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=complex)
        if self.nodes.ndim != 1 or len(self.nodes) < 2:
            raise ValueError("an arc needs at least two nodes")

    @property
    def start(self):
        return complex(self.nodes[0])

    @property
    def end(self):
        return complex(self.nodes[-1])

    def length(self):
        return float(np.sum(np.abs(np.diff(self.nodes))))

    def reversed(self):
        return Arc(self.nodes[::-1].copy(), start_tag=self.end_tag, end_tag=self.start_tag)

    def conjugated(self):
        """Schwarz reflection (pointwise conjugate, same node order)."""
        return Arc(np.conj(self.nodes), start_tag=self.start_tag + "*", end_tag=self.end_tag + "*")

    def distance(self, z):
        """Distance from z (scalar or array) to this polyline."""
        z = np.asarray(z, dtype=complex)
        best = np.full(z.shape, np.inf)
        for k in range(len(self.nodes) - 1):
            best = np.minimum(best, point_segment_distance(z, self.nodes[k], self.nodes[k + 1]))
        return best

    def nearest_parameter(self, z):
        """Arc-length parameter (0..length) of the point nearest to scalar z."""
        z = complex(z)
        best_d, best_s = np.inf, 0.0
        s_acc = 0.0
        for k in range(len(self.nodes) - 1):
            a, b = self.nodes[k], self.nodes[k + 1]
            seg = b - a
            L = abs(seg)
            t = 0.0 if L == 0 else min(1.0, max(0.0, ((z - a) * np.conj(seg)).real / L**2))
            d = abs(z - (a + t * seg))
            if d < best_d:
                best_d, best_s = d, s_acc + t * L
            s_acc += L
        return best_s

    def tangent_at(self, z):
        """Unit tangent of the nearest segment to z (orientation of the arc)."""
        z = complex(z)
        best_d, best_t = np.inf, 1.0 + 0j
        for k in range(len(self.nodes) - 1):
            a, b = self.nodes[k], self.nodes[k + 1]
            d = point_segment_distance(z, a, b)
            if d < best_d and abs(b - a) > 0:
                best_d, best_t = d, (b - a) / abs(b - a)
        return complex(best_t)

    def normal_at(self, z):
        """Unit normal pointing to the plus side (left of the orientation)."""
        return 1j * self.tangent_at(z)

    def is_vertical_segment(self, tol):
        return np.max(np.abs(self.nodes.real - self.nodes[0].real)) <= tol

    def point_at(self, frac):
        """Point at fractional arc length frac in [0, 1]."""
        target = frac * self.length()
        acc = 0.0
        for k in range(len(self.nodes) - 1):
            a, b = self.nodes[k], self.nodes[k + 1]
            L = abs(b - a)
            if acc + L >= target or k == len(self.nodes) - 2:
                t = 0.0 if L == 0 else (target - acc) / L
                return complex(a + min(max(t, 0.0), 1.0) * (b - a))
            acc += L
        return complex(self.nodes[-1])


@dataclass
class Contour:
    """A set of oriented arcs with tolerance-based queries."""

    arcs: list = field(default_factory=list)

    def length(self):
        return sum(a.length() for a in self.arcs)

    def distance(self, z):
        z = np.asarray(z, dtype=complex)
        best = np.full(z.shape, np.inf)
        for a in self.arcs:
            best = np.minimum(best, a.distance(z))
        return best

    def contains_point(self, z, tol):
        return bool(np.all(self.distance(z) <= tol))

    def conjugated(self):
        return Contour([a.conjugated() for a in self.arcs])

    def to_csv(self):
        """CSV dump with columns arc_id, node_index, re, im."""
        buf = io.StringIO()
        buf.write("arc_id,node_index,re,im\n")
        for i, arc in enumerate(self.arcs):
            for j, z in enumerate(arc.nodes):
                buf.write(f"{i},{j},{z.real:.17g},{z.imag:.17g}\n")
        return buf.getvalue()


def _vertical_interval(arc, tol):
    """(re, lo, hi) for a vertical-segment arc, or None."""
    if not arc.is_vertical_segment(tol):
        return None
    ys = arc.nodes.imag
    return float(arc.nodes[0].real), float(ys.min()), float(ys.max())


def _interval_arc(re, lo, hi, n=2, start_tag="", end_tag=""):
    ys = np.linspace(lo, hi, max(n, 2))
    return Arc(re + 1j * ys, start_tag=start_tag, end_tag=end_tag)


def intersect_arcs(arc_a, arc_b, tol):
    """Overlap of two band arcs, as a (possibly empty) list of arcs.

    Supported configurations mirror the scattering theory: either the arcs are
    disjoint (mutual distance > tol) or both are collinear vertical segments,
    in which case ordinary interval arithmetic on Im z applies.  Oriented
    bottom-to-top like the inputs.
    """
    da = float(np.min(arc_b.distance(arc_a.nodes)))
    db = float(np.min(arc_a.distance(arc_b.nodes)))
    if min(da, db) > tol:
        return []
    va, vb = _vertical_interval(arc_a, tol), _vertical_interval(arc_b, tol)
    if va is None or vb is None or abs(va[0] - vb[0]) > tol:
        raise NotImplementedError(
            "band overlap is only supported for collinear vertical segments; "
            "got arcs that neither separate nor align"
        )
    lo, hi = max(va[1], vb[1]), min(va[2], vb[2])
    if hi - lo <= tol:
        return []
    return [_interval_arc(va[0], lo, hi)]


def subtract_arcs(arc_a, arc_b, tol):
    """Part of arc_a at least tol away from arc_b (list of arcs)."""
    if not intersect_arcs(arc_a, arc_b, tol):
        return [arc_a]
    va, vb = _vertical_interval(arc_a, tol), _vertical_interval(arc_b, tol)
    pieces = []
    if vb[1] - va[1] > tol:
        pieces.append(_interval_arc(va[0], va[1], min(va[2], vb[1])))
    if va[2] - vb[2] > tol:
        pieces.append(_interval_arc(va[0], max(va[1], vb[2]), va[2]))
    return pieces
