"""Concentration diagnostics: bubble location, mass profiles, dichotomy.

The report realizes the concentration alternative in measurable form.  The
candidate point is the maximum of the |u|^q density after one heat-type
smoothing step (symbol multiplication by exp(-delta * mu) with delta equal
to one cell area), which makes the argmax stable under grid refinement.
The mass profile m(rho) is the fraction of total Lq mass within torus
distance rho of that point; the concentration weight is read off the first
plateau of the profile, the radius rho_eps is the smallest rho capturing
mass 1 - eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import DomainSpec, Grid, RECT_KINDS
from .spectral import (
    BoundaryCondition,
    Field,
    NEUMANN,
    PERIODIC,
    apply_mode_filter,
    symbol,
)


class DiagnosticsError(ValueError):
    pass


@dataclass(eq=False)
class ConcentrationReport:
    """Located concentration point with its mass-in-ball profile."""

    x_star: tuple          # physical coordinates of the density maximum
    index: tuple           # grid index of the maximum
    rho_grid: np.ndarray
    mass_profile: np.ndarray
    rho_eps: float
    weight: float
    epsilon: float
    multi_bubble: bool
    location_class: str = "unclassified"
    vertex_distances: dict = None
    edge_distance: float = math.nan
    diameter: float = math.nan

    def as_dict(self) -> dict:
        return {
            "x_star": [float(v) for v in self.x_star],
            "index": [int(v) for v in self.index],
            "rho_grid": [float(v) for v in self.rho_grid],
            "mass_profile": [float(v) for v in self.mass_profile],
            "rho_eps": float(self.rho_eps),
            "weight": float(self.weight),
            "epsilon": float(self.epsilon),
            "multi_bubble": bool(self.multi_bubble),
            "location_class": self.location_class,
            "vertex_distances": self.vertex_distances,
            "edge_distance": None if math.isnan(self.edge_distance) else float(self.edge_distance),
        }


@dataclass(eq=False)
class DichotomyVerdict:
    verdict: str           # "concentration" | "vanishing"
    evidence: list         # (R, fixed-radius ball mass) pairs
    rho_fixed: float


def _smoothing_symbol(grid: Grid):
    bc = BoundaryCondition(NEUMANN) if grid.domain.kind in RECT_KINDS else BoundaryCondition(PERIODIC)
    return symbol(grid, bc)


def _orbit_factor(grid: Grid, flat_idx: int) -> int:
    """Orbit size of a node under the triangle symmetry group, else 1.

    Applies only to grids that discretize the triangle's own periodic cell
    (extended patches carry extra translation copies the cell group cannot
    see, so they are left unscaled).
    """
    if not grid.domain.is_triangle:
        return 1
    if not np.allclose(grid.cell, grid.domain.cell_matrix()):
        return 1  # extended patch, not the cell the group acts on
    from .domain import symmetry_group

    try:
        group = symmetry_group(grid.domain, grid, "even")
    except Exception:
        return 1
    images = {int(np.nonzero(g.src == flat_idx)[0][0]) for g in group.elements}
    return len(images)


def smoothed_density(u: Field, q: float) -> np.ndarray:
    """|u|^q density after one heat step of width one cell area."""
    dens = np.abs(u.values) ** q
    sym = _smoothing_symbol(u.grid)
    delta = u.grid.node_weight
    filt = np.exp(-delta * sym.mu)
    sm = apply_mode_filter(Field(u.grid, dens), sym, filt)
    return np.real(sm.values)


def concentration_report(u: Field, q: float, eps: float = 0.01) -> ConcentrationReport:
    """Locate the bubble and measure its mass profile and weight.

    The weight is the profile value at the first plateau (ball mass stops
    growing while at least eps of the mass is inside); for a field with k
    far-apart equal bubbles this reports about 1/k and raises the
    multi-bubble flag.
    """
    if not (0.0 < eps < 0.5):
        raise DiagnosticsError("eps must lie in (0, 1/2)")
    grid = u.grid
    total = float(np.sum(np.abs(u.values) ** q))
    if total <= 0.0:
        raise DiagnosticsError("concentration report of the zero field")
    dens = smoothed_density(u, q)
    flat_idx = int(np.argmax(dens))  # ties resolve to the smallest (i, j)
    idx = np.unravel_index(flat_idx, grid.dims)
    x_star = grid.nodes()[idx]

    d = grid.torus_distance(grid.nodes(), x_star).reshape(-1)
    mass = (np.abs(u.values) ** q).reshape(-1) / total
    order = np.argsort(d, kind="stable")
    d_sorted = d[order]
    cum = np.cumsum(mass[order])
    # Triangle solves live on the torus where a group-invariant bubble is
    # replicated over the orbit of its location; the per-fundamental-domain
    # mass fraction is the torus fraction times the orbit size (capped at 1).
    cum = np.minimum(1.0, _orbit_factor(grid, flat_idx) * cum)

    diam = max(grid.diameter(), float(d_sorted[-1]))
    h = min(grid.spacings())
    rho_grid = np.geomspace(h, diam, 64)
    profile = np.empty_like(rho_grid)
    for k, rho in enumerate(rho_grid):
        j = np.searchsorted(d_sorted, rho, side="right")
        profile[k] = cum[j - 1] if j > 0 else 0.0
    profile = np.minimum.accumulate(profile[::-1])[::-1]  # guard against fp wiggle

    # smallest rho capturing 1 - eps of the mass
    hit = np.nonzero(profile >= 1.0 - eps)[0]
    rho_eps = float(rho_grid[hit[0]]) if hit.size else float(diam)

    weight = float(profile[-1])
    for k, rho in enumerate(rho_grid):
        if profile[k] < eps:
            continue
        j2 = np.searchsorted(rho_grid, min(2.0 * rho, diam), side="left")
        j2 = min(j2, len(rho_grid) - 1)
        if profile[j2] - profile[k] <= 0.25 * eps:
            weight = float(profile[j2])
            break
    multi = weight < 1.0 - 2.0 * eps
    return ConcentrationReport(
        x_star=tuple(float(v) for v in x_star),
        index=tuple(int(v) for v in idx),
        rho_grid=rho_grid,
        mass_profile=profile,
        rho_eps=rho_eps,
        weight=weight,
        epsilon=eps,
        multi_bubble=multi,
        diameter=float(diam),
    )


def mass_at_radius(report: ConcentrationReport, rho: float) -> float:
    """Profile value at an arbitrary radius (step interpolation)."""
    j = np.searchsorted(report.rho_grid, rho, side="right")
    if j <= 0:
        return 0.0
    return float(report.mass_profile[min(j - 1, len(report.mass_profile) - 1)])


def classify_dichotomy(reports: list, R_values: list | None = None) -> DichotomyVerdict:
    """Concentration versus vanishing across an R-sweep.

    Vanishing means the fixed-radius ball mass around the best center decays
    monotonically and ends below 0.05 at the largest R.
    """
    if len(reports) < 3:
        raise DiagnosticsError("need at least 3 sweep points to classify")
    if R_values is None:
        R_values = list(range(len(reports)))
    rho_fixed = 0.5 * min(r.diameter for r in reports)
    masses = [mass_at_radius(r, rho_fixed) for r in reports]
    decreasing = all(b <= a + 0.02 for a, b in zip(masses, masses[1:]))
    vanishing = decreasing and masses[-1] < 0.05
    return DichotomyVerdict(
        verdict="vanishing" if vanishing else "concentration",
        evidence=list(zip([float(R) for R in R_values], [float(m) for m in masses])),
        rho_fixed=float(rho_fixed),
    )


# ---------------------------------------------------------------------------
# vertex / edge classification
# ---------------------------------------------------------------------------


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    t = float(np.dot(p - a, ab) / np.dot(ab, ab))
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(p - (a + t * ab)))


def _torus_segment_distance(grid: Grid, p, a, b) -> float:
    best = math.inf
    for m1 in (-1, 0, 1):
        for m2 in (-1, 0, 1):
            shift = m1 * grid.cell[:, 0] + m2 * grid.cell[:, 1]
            best = min(best, _segment_distance(np.asarray(p) + shift, a, b))
    return best


def vertex_distance(report: ConcentrationReport, domain: DomainSpec, grid: Grid,
                    group=None) -> ConcentrationReport:
    """Classify the bubble location against the fundamental polygon.

    vertex: within 2 rho_eps of a vertex (any group image, for triangles);
    edge: within 2 rho_eps of an edge only; interior otherwise.  A profile
    with rho_eps beyond half the cell diameter has no localized bubble and
    is classified interior.
    """
    if domain.kind not in RECT_KINDS and not domain.is_triangle:
        raise DiagnosticsError("vertex classification needs a rectangle or triangle domain")
    verts = domain.fundamental_vertices()
    labels = domain.fundamental_vertex_labels()
    p = np.asarray(report.x_star)

    vert_images = {lab: [np.asarray(v)] for lab, v in zip(labels, verts)}
    edges = [(verts[i], verts[(i + 1) % len(verts)]) for i in range(len(verts))]
    if domain.is_triangle and group is not None:
        nodes = grid.nodes().reshape(-1, 2)
        for lab, v in zip(labels, verts):
            vidx = int(np.argmin(grid.torus_distance(nodes, np.asarray(v))))
            images = set()
            for g in group.elements:
                tgt = int(np.nonzero(g.src == vidx)[0][0])
                images.add(tgt)
            vert_images[lab] = [nodes[i] for i in images]

    dists = {
        lab: min(float(grid.torus_distance(p, v)) for v in vs)
        for lab, vs in vert_images.items()
    }
    edge_d = min(_torus_segment_distance(grid, p, np.asarray(a), np.asarray(b)) for a, b in edges)

    threshold = 2.0 * report.rho_eps
    if report.rho_eps > 0.5 * report.diameter:
        cls = "interior"  # no localized bubble
    elif min(dists.values()) <= threshold:
        cls = "vertex"
    elif edge_d <= threshold:
        cls = "edge"
    else:
        cls = "interior"
    report.location_class = cls
    report.vertex_distances = {k: float(v) for k, v in dists.items()}
    report.edge_distance = float(edge_d)
    return report


def decay_profile(u: Field, center) -> tuple:
    """Max of |u| over distance shells around ``center``.

    Returns (radii, shell_max); shell width is one grid cell.  Used for
    breather tail checks and radial monotonicity reporting.
    """
    grid = u.grid
    h = min(grid.spacings())
    d = grid.torus_distance(grid.nodes(), np.asarray(center, dtype=float))
    bins = np.rint(d / h).astype(np.intp).reshape(-1)
    vals = np.abs(u.values).reshape(-1)
    nb = bins.max() + 1
    prof = np.zeros(nb)
    np.maximum.at(prof, bins, vals)
    radii = h * np.arange(nb)
    return radii, prof
