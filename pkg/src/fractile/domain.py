"""Computational domains, grids, and reflection symmetry groups.

A solve always happens on a flat torus (the computational cell).  Rectangles
and strips are their own cell.  Triangle domains are never discretized
directly: the cell is the 60-degree rhombic torus built from the triangle's
reflection lattice, and the triangle is recovered as the invariant cone of a
finite group of grid automorphisms (6 elements for the regular triangle,
12 for the 30-60-90 one).  Minimizing over the invariant cone is equivalent
to minimizing over the fundamental domain because the quotient functional is
reflection invariant and every copy carries equal mass and energy.

Grids are uniform with one quadrature weight per node (the cell area divided
by the node count).  Rectangle-kind grids are cell-centered so that the even
and odd half-sample transforms implement Neumann and Dirichlet conditions
without nodes on mirror lines.  Triangle-kind grids are lattice-aligned
(offset 0) because half-sample offsets are incompatible with the rhombic
mirrors; see the note in ``build_grid``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

SQRT3 = math.sqrt(3.0)

RECT_KINDS = ("rectangle", "strip")
TRIANGLE_KINDS = ("equilateral_triangle", "triangle_30_60_90")
ALL_KINDS = RECT_KINDS + ("parallelogram",) + TRIANGLE_KINDS


class DomainError(ValueError):
    """Invalid domain, grid, or symmetry-group request."""


@dataclass(frozen=True)
class DomainSpec:
    """Geometry of the computational cell before discretization.

    ``scale`` is the dilation parameter: every stored length is multiplied
    by it, so a family of expanding domains shares one spec with varying
    ``scale``.

    kind parameters:
      rectangle            lengths = (L1, L2), sides scale*L1 x scale*L2
      strip                lengths = (width, truncation); the unbounded
                           direction is truncated with Neumann ends
      parallelogram        h1, h2 generator vectors (scaled)
      equilateral_triangle lengths = (side,)
      triangle_30_60_90    lengths = (hypotenuse,)
    """

    kind: str
    scale: float = 1.0
    lengths: tuple = ()
    h1: tuple = ()
    h2: tuple = ()

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise DomainError(f"unknown domain kind {self.kind!r}")
        if not self.scale > 0:
            raise DomainError("scale must be positive")
        if self.kind == "parallelogram":
            a = np.asarray(self.h1, dtype=float)
            b = np.asarray(self.h2, dtype=float)
            if a.shape != (2,) or b.shape != (2,):
                raise DomainError("parallelogram needs two 2-vectors")
            if abs(a[0] * b[1] - a[1] * b[0]) < 1e-14 * (np.linalg.norm(a) * np.linalg.norm(b) + 1e-300):
                raise DomainError("parallelogram generators must be linearly independent")
        else:
            if any(l <= 0 for l in self.lengths):
                raise DomainError("all lengths must be strictly positive")
        if self.kind == "strip":
            width, trunc = self.lengths
            if trunc < 8.0 * width - 1e-12:
                raise DomainError(
                    f"strip truncation {trunc} too short: need >= 8 x width = {8.0 * width}"
                )

    # -- constructors ----------------------------------------------------

    @staticmethod
    def rectangle(L1: float, L2: float, scale: float = 1.0) -> "DomainSpec":
        return DomainSpec("rectangle", scale, (float(L1), float(L2)))

    @staticmethod
    def strip(width: float, truncation: float | None = None, scale: float = 1.0) -> "DomainSpec":
        w = float(width)
        t = 8.0 * w if truncation is None else float(truncation)
        return DomainSpec("strip", scale, (w, t))

    @staticmethod
    def parallelogram(h1, h2, scale: float = 1.0) -> "DomainSpec":
        return DomainSpec("parallelogram", scale, (), tuple(map(float, h1)), tuple(map(float, h2)))

    @staticmethod
    def equilateral_triangle(side: float, scale: float = 1.0) -> "DomainSpec":
        return DomainSpec("equilateral_triangle", scale, (float(side),))

    @staticmethod
    def triangle_30_60_90(hypotenuse: float, scale: float = 1.0) -> "DomainSpec":
        return DomainSpec("triangle_30_60_90", scale, (float(hypotenuse),))

    # -- derived geometry -------------------------------------------------

    @property
    def is_triangle(self) -> bool:
        return self.kind in TRIANGLE_KINDS

    def cell_matrix(self) -> np.ndarray:
        """2x2 matrix whose columns generate the periodic computational cell."""
        R = self.scale
        if self.kind == "rectangle":
            L1, L2 = self.lengths
            return np.array([[R * L1, 0.0], [0.0, R * L2]])
        if self.kind == "strip":
            w, t = self.lengths
            return np.array([[R * w, 0.0], [0.0, R * t]])
        if self.kind == "parallelogram":
            return np.column_stack([R * np.asarray(self.h1), R * np.asarray(self.h2)])
        # Both triangles tile the same rhombic torus of side sqrt(3)*a,
        # a = (scaled) side or hypotenuse: the translation lattice of the
        # reflection group.
        a = R * self.lengths[0]
        return np.column_stack([(1.5 * a, 0.5 * SQRT3 * a), (0.0, SQRT3 * a)])

    def cell_area(self) -> float:
        return abs(float(np.linalg.det(self.cell_matrix())))

    def side_lengths(self) -> tuple:
        A = self.cell_matrix()
        return (float(np.linalg.norm(A[:, 0])), float(np.linalg.norm(A[:, 1])))

    def fundamental_vertices(self) -> np.ndarray:
        """Vertices of the fundamental polygon, in physical coordinates.

        For rectangle kinds this is the cell itself; for triangles it is one
        triangle copy inside the rhombic cell.  Triangle vertices are ordered
        smallest angle first (X, Y, Z for the 30-60-90 case).
        """
        R = self.scale
        if self.kind in RECT_KINDS:
            a, b = self.side_lengths()
            return np.array([(0.0, 0.0), (a, 0.0), (a, b), (0.0, b)])
        if self.kind == "parallelogram":
            A = self.cell_matrix()
            return np.array([(0.0, 0.0), tuple(A[:, 0]), tuple(A[:, 0] + A[:, 1]), tuple(A[:, 1])])
        a = R * self.lengths[0]
        if self.kind == "equilateral_triangle":
            return np.array([(0.0, 0.0), (a, 0.0), (0.5 * a, 0.5 * SQRT3 * a)])
        # 30-60-90: altitude split of the parent equilateral triangle.
        # X carries the pi/6 angle, Y the pi/3 angle, Z the right angle.
        return np.array([(0.5 * a, 0.5 * SQRT3 * a), (0.0, 0.0), (0.5 * a, 0.0)])

    def fundamental_vertex_labels(self) -> tuple:
        if self.kind == "equilateral_triangle":
            return ("A", "B", "C")
        if self.kind == "triangle_30_60_90":
            return ("X", "Y", "Z")
        if self.kind in RECT_KINDS:
            return ("SW", "SE", "NE", "NW")
        return ("P0", "P1", "P2", "P3")


def _triangle_divisor(kind: str) -> int:
    # p6m altitude mirrors carry 1/3-cell translation parts; p3m1 does not.
    return 3 if kind == "triangle_30_60_90" else 1


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform structured grid on the periodic computational cell.

    Node (i, j) sits at ``cell @ ((i + offset) / N1, (j + offset) / N2)``.
    The quadrature weight is the same for every node, so weighted sums are
    exact trapezoid quadrature on the torus.
    """

    domain: DomainSpec
    dims: tuple
    cell: np.ndarray
    offset: float

    def __post_init__(self):
        n1, n2 = self.dims
        if n1 <= 0 or n2 <= 0:
            raise DomainError("grid dims must be positive")
        if abs(np.linalg.det(self.cell)) < 1e-300:
            raise DomainError("cell matrix must be invertible")
        self.cell.setflags(write=False)

    @property
    def size(self) -> int:
        return self.dims[0] * self.dims[1]

    @property
    def cell_area(self) -> float:
        return abs(float(np.linalg.det(self.cell)))

    @property
    def node_weight(self) -> float:
        return self.cell_area / self.size

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.dims, self.node_weight)

    def spacings(self) -> tuple:
        return (
            float(np.linalg.norm(self.cell[:, 0])) / self.dims[0],
            float(np.linalg.norm(self.cell[:, 1])) / self.dims[1],
        )

    def fractional_coords(self) -> tuple:
        n1, n2 = self.dims
        a = (np.arange(n1) + self.offset) / n1
        b = (np.arange(n2) + self.offset) / n2
        return a, b

    def nodes(self) -> np.ndarray:
        """Physical node coordinates, shape (N1, N2, 2)."""
        a, b = self.fractional_coords()
        A, B = np.meshgrid(a, b, indexing="ij")
        xy = np.stack([A, B], axis=-1) @ self.cell.T
        return xy

    def torus_distance(self, x, y) -> np.ndarray:
        """Geodesic distance on the torus between point sets x and y.

        Broadcasting shapes: x (..., 2), y (..., 2).  Minimizes over the
        nine nearest lattice translates, which is exact for cells with
        angles in [60, 120] degrees (all cells produced here).
        """
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        best = None
        for m1 in (-1, 0, 1):
            for m2 in (-1, 0, 1):
                shift = m1 * self.cell[:, 0] + m2 * self.cell[:, 1]
                r = np.linalg.norm(d + shift, axis=-1)
                best = r if best is None else np.minimum(best, r)
        return best

    def diameter(self) -> float:
        """Largest torus distance from the origin (deep hole of the lattice)."""
        g1, g2 = self.cell[:, 0], self.cell[:, 1]
        # candidates: half-sum, half-difference, half-generators, and the
        # triangle circumcenters that are the deep holes of rhombic lattices
        probe = np.array([
            0.5 * (g1 + g2), 0.5 * (g1 - g2), 0.5 * g1, 0.5 * g2,
            (g1 + g2) / 3.0, 2.0 * (g1 + g2) / 3.0,
            (2.0 * g1 + g2) / 3.0, (g1 + 2.0 * g2) / 3.0,
        ])
        return float(np.max(self.torus_distance(probe, np.zeros(2))))


def build_grid(domain: DomainSpec, resolution: int) -> Grid:
    """Discretize the periodic computational cell of ``domain``.

    ``resolution`` is nodes per unit physical length.  Rectangle-kind cells
    get cell-centered nodes; triangle cells get lattice-aligned nodes (a
    half-sample offset cannot be invariant under the rhombic mirrors) and
    their dimension is rounded up to the symmetry-compatibility divisor.
    """
    if resolution <= 0:
        raise DomainError("resolution must be a positive integer")
    sides = domain.side_lengths()
    if domain.is_triangle:
        a = domain.scale * domain.lengths[0]
        if resolution * a < 8:
            raise DomainError(
                f"resolution too coarse: {resolution} x side {a} < 8 nodes across the fundamental domain"
            )
        n = int(round(resolution * sides[0]))
        div = _triangle_divisor(domain.kind)
        if n % div:
            n += div - n % div
        return make_grid(domain, (n, n))
    if resolution * min(sides) < 8:
        raise DomainError(
            f"resolution too coarse: {resolution} x min side {min(sides)} < 8"
        )
    dims = (int(round(resolution * sides[0])), int(round(resolution * sides[1])))
    return make_grid(domain, dims)


def make_grid(domain: DomainSpec, dims: tuple) -> Grid:
    """Grid with explicit dims; raises if dims are incompatible with the kind."""
    n1, n2 = dims
    if domain.is_triangle:
        div = _triangle_divisor(domain.kind)
        if n1 != n2:
            raise DomainError("triangle cells need square dims (N, N)")
        if n1 % div:
            raise DomainError(
                f"triangle grid dims {n1} not divisible by the symmetry-compatibility factor {div}"
            )
        offset = 0.0
    else:
        offset = 0.5
    return Grid(domain, (int(n1), int(n2)), domain.cell_matrix(), offset)


# ---------------------------------------------------------------------------
# symmetry groups
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GroupElement:
    """One grid automorphism: a node permutation with a scalar character.

    Acting on a field: ``(g . u).flat = char * u.flat[src]``.
    """

    name: str
    src: np.ndarray
    char: float

    def __post_init__(self):
        self.src.setflags(write=False)

    def apply(self, values: np.ndarray) -> np.ndarray:
        out = values.reshape(-1)[self.src].reshape(values.shape)
        if self.char != 1.0:
            out = self.char * out
        return out


@dataclass(frozen=True, eq=False)
class SymmetryGroup:
    grid: Grid
    character: str
    elements: tuple

    def __len__(self):
        return len(self.elements)

    def average(self, values: np.ndarray) -> np.ndarray:
        """Group-averaging projector onto the invariant (character) subspace."""
        acc = np.zeros_like(values)
        for g in self.elements:
            acc += g.apply(values)
        return acc / len(self.elements)

    def max_asymmetry(self, values: np.ndarray) -> float:
        """Largest deviation of the field from invariance under any element."""
        worst = 0.0
        for g in self.elements:
            worst = max(worst, float(np.max(np.abs(g.apply(values) - values))))
        return worst


def _perm_from_index_map(grid: Grid, imap) -> np.ndarray:
    """Flat source-index array for a node bijection (i, j) -> (i', j')."""
    n1, n2 = grid.dims
    ii, jj = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    ti, tj = imap(ii, jj)
    ti = np.mod(ti, n1)
    tj = np.mod(tj, n2)
    src = np.empty(n1 * n2, dtype=np.intp)
    # element maps node (i,j) to node (ti,tj): (g.u)[ti,tj] = u[i,j]
    src[(ti * n2 + tj).reshape(-1)] = (ii * n2 + jj).reshape(-1)
    return src


def _rect_mirror_group(grid: Grid, character: str) -> SymmetryGroup:
    n1, n2 = grid.dims
    defs = [
        ("id", lambda i, j: (i, j), 0),
        ("mirror_x", lambda i, j: (n1 - 1 - i, j), 1),
        ("mirror_y", lambda i, j: (i, n2 - 1 - j), 1),
        ("mirror_xy", lambda i, j: (n1 - 1 - i, n2 - 1 - j), 2),
    ]
    els = []
    for name, imap, nmirror in defs:
        char = 1.0 if character == "even" else float((-1) ** nmirror)
        els.append(GroupElement(name, _perm_from_index_map(grid, imap), char))
    return SymmetryGroup(grid, character, tuple(els))


def _parallelogram_group(grid: Grid, character: str) -> SymmetryGroup:
    n1, n2 = grid.dims
    els = [
        GroupElement("id", _perm_from_index_map(grid, lambda i, j: (i, j)), 1.0),
        # point inversion = two mirrors, character +1 in both parities
        GroupElement(
            "inversion",
            _perm_from_index_map(grid, lambda i, j: (n1 - 1 - i, n2 - 1 - j)),
            1.0,
        ),
    ]
    return SymmetryGroup(grid, character, tuple(els))


class _Affine:
    """Exact affine map on lattice fractions: v -> M @ v + t, t in (1/3)Z^2."""

    def __init__(self, M, t, nmirror):
        self.M = tuple(tuple(int(x) for x in row) for row in M)
        self.t = (Fraction(t[0]) % 1, Fraction(t[1]) % 1)
        self.nmirror = nmirror

    def key(self):
        return (self.M, self.t)

    def compose(self, other: "_Affine") -> "_Affine":
        # self after other: v -> Ms (Mo v + to) + ts
        Ms, Mo = self.M, other.M
        M = tuple(
            tuple(Ms[r][0] * Mo[0][c] + Ms[r][1] * Mo[1][c] for c in (0, 1)) for r in (0, 1)
        )
        t = (
            Ms[0][0] * other.t[0] + Ms[0][1] * other.t[1] + self.t[0],
            Ms[1][0] * other.t[0] + Ms[1][1] * other.t[1] + self.t[1],
        )
        return _Affine(M, t, self.nmirror + other.nmirror)

    def det(self) -> int:
        return self.M[0][0] * self.M[1][1] - self.M[0][1] * self.M[1][0]


def _triangle_affines(kind: str):
    """Quotient of the triangle reflection group on the rhombic torus.

    Coordinates are fractions of the cell generators P1 = (3a/2, sqrt3 a/2),
    P2 = (0, sqrt3 a).  Edge mirrors of the fundamental triangle:
      AB (y = 0):        (u, v) -> (u, -u - v)
      AC (60 deg line):  (u, v) -> (v, u)
      BC:                (u, v) -> (-u - v, v)      (translation part cancels)
    The 30-60-90 group adds the altitude mirror x = a/2:
      (u, v) -> (2/3 - u, u + v - 1/3)
    """
    gens = [
        _Affine(((1, 0), (-1, -1)), (0, 0), 1),
        _Affine(((0, 1), (1, 0)), (0, 0), 1),
    ]
    if kind == "triangle_30_60_90":
        gens.append(_Affine(((-1, 0), (1, 1)), (Fraction(2, 3), Fraction(-1, 3)), 1))
    ident = _Affine(((1, 0), (0, 1)), (0, 0), 0)
    seen = {ident.key(): ident}
    frontier = [ident]
    while frontier:
        nxt = []
        for g in frontier:
            for h in gens:
                e = h.compose(g)
                if e.key() not in seen:
                    seen[e.key()] = e
                    nxt.append(e)
        frontier = nxt
    return list(seen.values())


def _triangle_group(grid: Grid, character: str) -> SymmetryGroup:
    kind = grid.domain.kind
    n = grid.dims[0]
    els = []
    for k, aff in enumerate(_triangle_affines(kind)):
        t1 = aff.t[0] * n
        t2 = aff.t[1] * n
        if t1.denominator != 1 or t2.denominator != 1:
            raise DomainError(
                f"grid dims {n} incompatible with the symmetry group: need a multiple of 3"
            )
        i1, i2 = int(t1), int(t2)
        M = aff.M

        def imap(i, j, M=M, i1=i1, i2=i2):
            return (M[0][0] * i + M[0][1] * j + i1, M[1][0] * i + M[1][1] * j + i2)

        char = 1.0 if character == "even" else float(aff.det())
        els.append(GroupElement(f"g{k}", _perm_from_index_map(grid, imap), char))
    return SymmetryGroup(grid, character, tuple(els))


def symmetry_group(domain: DomainSpec, grid: Grid, character: str = "even") -> SymmetryGroup:
    """Reflection group realizing the fundamental domain on the grid.

    The invariant subspace of the returned group corresponds to functions on
    the fundamental domain with Neumann (even character) or Dirichlet (odd)
    conditions.  Rectangle kinds give the midline Klein four-group, the
    regular triangle the order-6 dihedral quotient, the 30-60-90 triangle
    the order-12 quotient.
    """
    if character not in ("even", "odd"):
        raise DomainError("character must be 'even' or 'odd'")
    if grid.domain.kind != domain.kind:
        raise DomainError("grid was built for a different domain kind")
    if domain.kind in RECT_KINDS:
        return _rect_mirror_group(grid, character)
    if domain.kind == "parallelogram":
        return _parallelogram_group(grid, character)
    return _triangle_group(grid, character)


def mirror_group(grid: Grid, axes: tuple, character: str = "even") -> SymmetryGroup:
    """Midline-mirror subgroup for selected axes of a rectangle-kind grid.

    Used for solves that should be symmetrized about one axis only, e.g.
    centering a strip bubble along the unbounded direction.
    """
    if grid.domain.kind not in RECT_KINDS:
        raise DomainError("mirror_group applies to rectangle-kind grids")
    n1, n2 = grid.dims
    els = [GroupElement("id", _perm_from_index_map(grid, lambda i, j: (i, j)), 1.0)]
    sign = 1.0 if character == "even" else -1.0
    if 0 in axes:
        els.append(GroupElement("mirror_x", _perm_from_index_map(grid, lambda i, j: (n1 - 1 - i, j)), sign))
    if 1 in axes:
        els.append(GroupElement("mirror_y", _perm_from_index_map(grid, lambda i, j: (i, n2 - 1 - j)), sign))
    if 0 in axes and 1 in axes:
        els.append(
            GroupElement(
                "mirror_xy",
                _perm_from_index_map(grid, lambda i, j: (n1 - 1 - i, n2 - 1 - j)),
                1.0,
            )
        )
    return SymmetryGroup(grid, character, tuple(els))


# ---------------------------------------------------------------------------
# fundamental mask
# ---------------------------------------------------------------------------


def fundamental_mask(domain: DomainSpec, grid: Grid) -> np.ndarray:
    """Boolean field marking one fundamental-domain copy inside the cell.

    Rectangle kinds are their own cell, so the whole grid is marked.  For
    triangles, nodes inside (or on the boundary of) one triangle copy are
    marked; copies under the group partition the cell up to shared boundary
    nodes.
    """
    if grid.domain.kind != domain.kind:
        raise DomainError("grid was built for a different domain kind")
    if not domain.is_triangle:
        return np.ones(grid.dims, dtype=bool)
    verts = domain.fundamental_vertices()
    v0, v1, v2 = verts[0], verts[1], verts[2]
    T = np.column_stack([v1 - v0, v2 - v0])
    Tinv = np.linalg.inv(T)
    xy = grid.nodes().reshape(-1, 2)
    inside = np.zeros(xy.shape[0], dtype=bool)
    tol = 1e-9
    for m1 in (-1, 0, 1):
        for m2 in (-1, 0, 1):
            shift = m1 * grid.cell[:, 0] + m2 * grid.cell[:, 1]
            lam = (xy + shift - v0) @ Tinv.T
            ok = (lam[:, 0] >= -tol) & (lam[:, 1] >= -tol) & (lam.sum(axis=1) <= 1 + tol)
            inside |= ok
    return inside.reshape(grid.dims)


def fundamental_weights(grid: Grid, group: SymmetryGroup, mask: np.ndarray) -> np.ndarray:
    """Quadrature weights of the restriction to one fundamental copy.

    Boundary nodes shared by k copies get weight w/k, so that summing an
    invariant field over the mask gives exactly (torus sum)/|group|.
    """
    flat_mask = mask.reshape(-1)
    copies = np.zeros(grid.size, dtype=np.intp)
    for g in group.elements:
        # node n lies in copy g iff g^{-1}(n) is marked; src gives g^{-1}
        copies += flat_mask[g.src]
    w = np.zeros(grid.size)
    nz = copies > 0
    w[nz] = grid.node_weight / copies[nz]
    w = w * flat_mask
    return w.reshape(grid.dims)


def group_extend(group: SymmetryGroup, values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Rebuild an invariant field on the whole cell from its masked restriction."""
    out = np.zeros_like(values)
    filled = np.zeros(values.shape, dtype=bool)
    flat_mask = mask.reshape(-1)
    for g in group.elements:
        take = flat_mask[g.src].reshape(values.shape) & ~filled
        cand = g.apply(values * mask)
        out[take] = cand[take]
        filled |= take
    return out
