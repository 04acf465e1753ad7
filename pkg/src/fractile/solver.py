"""Quotient minimization by projected gradient descent with BB steps.

The iteration is u <- P(u - tau * grad J(u)) where P composes, in order:
positivity, group averaging, radial averaging, constraint-ball rescaling,
and renormalization to the unit Lq sphere.  The step length follows the
Barzilai-Borwein spectral quotient with monotone backtracking: a trial is
accepted only if J does not rise by more than a 1e-12 tolerance, and
non-finite trials halve the step.

Because the iterate is kept Lq-normalized, the Euler-Lagrange residual of
the Nehari-rescaled iterate equals ||grad J||_L2 / (2 ||u||_{H^s}), so the
convergence check costs nothing beyond the gradient itself.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .domain import DomainSpec, Grid, SymmetryGroup, build_grid
from .energy import EnergyParams, gradient_J, nehari_normalize, quotient_J, el_residual
from .spectral import (
    BoundaryCondition,
    Field,
    QUASI_PERIODIC,
    norms,
    hs_norm_sq,
    seminorm_sq,
    symbol,
)

log = logging.getLogger("fractile.solver")


class SolverError(ValueError):
    pass


def theta_q_default(q: float) -> float:
    """Largest theta with (theta/(1-theta))^(1-2/q) * 2^(2/q) = 1/2.

    Strictly inside the smallness regime required by the hexagonal
    two-bubble comparison; solved by bisection at call time.
    """
    target = 0.5
    expo = 1.0 - 2.0 / q

    def f(th):
        return (th / (1.0 - th)) ** expo * 2.0 ** (2.0 / q) - target

    lo, hi = 1e-12, 0.5
    if f(hi) < 0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return lo


@dataclass(frozen=True)
class MassConstraint:
    """Cap on the Lq mass fraction inside a ball at a fundamental vertex.

    ``vertex`` names a fundamental-domain vertex (or ``point`` gives raw
    coordinates); radius defaults to a quarter of the domain diameter
    parameter R.  The mask is the group orbit of the ball, so rescaling
    preserves symmetry.
    """

    vertex: str | None = None
    point: tuple | None = None
    radius: float | None = None
    theta_q: float | None = None


@dataclass(frozen=True)
class InitSpec:
    kind: str = "constant_plus_noise"
    vertex: str | None = None
    width: float | None = None
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("constant_plus_noise", "corner_bump", "file", "corner_scan"):
            raise SolverError(f"unknown init kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class SolveConfig:
    params: EnergyParams
    max_iters: int = 5000
    tol_J: float = 1e-12
    tol_residual: float = 1e-8
    init: InitSpec = field(default_factory=InitSpec)
    enforce_positivity: bool = True
    symmetrize: SymmetryGroup | None = None
    radialize: bool = False
    constraints: tuple = ()
    seed: int = 0
    noise_amplitude: float = 1e-2
    backtrack_tol: float = 1e-12

    def __post_init__(self):
        if self.max_iters < 1:
            raise SolverError("max_iters must be >= 1")
        if self.tol_J <= 0 or self.tol_residual <= 0:
            raise SolverError("tolerances must be positive")


@dataclass(eq=False)
class Solution:
    """Minimizer with its quotient value and solution-quality data."""

    field: Field
    lam: float
    residual: float
    iterations: int
    constraint_active: tuple
    history: np.ndarray
    converged: bool
    character: str | None = None
    flags: dict = None

    def __post_init__(self):
        if self.flags is None:
            self.flags = {}


# ---------------------------------------------------------------------------
# projection chain
# ---------------------------------------------------------------------------


def _radial_bins(grid: Grid):
    center = 0.5 * (grid.cell[:, 0] + grid.cell[:, 1])
    d = grid.torus_distance(grid.nodes(), center)
    h = min(grid.spacings())
    return np.rint(d / h).astype(np.intp)


def _radialize(values: np.ndarray, bins: np.ndarray) -> np.ndarray:
    flat = values.reshape(-1)
    b = bins.reshape(-1)
    nb = b.max() + 1
    sums = np.bincount(b, weights=flat.real, minlength=nb)
    if np.iscomplexobj(flat):
        sums = sums + 1j * np.bincount(b, weights=flat.imag, minlength=nb)
    counts = np.bincount(b, minlength=nb)
    return (sums / counts)[b].reshape(values.shape)


def _constraint_mask(grid: Grid, con: MassConstraint, group: SymmetryGroup | None) -> np.ndarray:
    if con.point is not None:
        center = np.asarray(con.point, dtype=float)
    elif con.vertex is not None:
        labels = grid.domain.fundamental_vertex_labels()
        if con.vertex not in labels:
            raise SolverError(f"unknown vertex {con.vertex!r}; have {labels}")
        center = grid.domain.fundamental_vertices()[labels.index(con.vertex)]
    else:
        raise SolverError("constraint needs a vertex label or a point")
    radius = con.radius
    if radius is None:
        radius = 0.25 * grid.domain.scale * (grid.domain.lengths[0] if grid.domain.lengths else 1.0)
    ball = grid.torus_distance(grid.nodes(), center) <= radius
    if group is not None:
        acc = ball.reshape(-1).copy()
        for g in group.elements:
            acc |= ball.reshape(-1)[g.src]
        ball = acc.reshape(grid.dims)
    if ball.all():
        raise SolverError("constraint infeasible: ball covers the whole cell")
    return ball


class _Projector:
    def __init__(self, grid: Grid, cfg: SolveConfig, q: float):
        self.grid = grid
        self.cfg = cfg
        self.q = q
        self.bins = _radial_bins(grid) if cfg.radialize else None
        self.masks = []
        self.thetas = []
        for con in cfg.constraints:
            self.masks.append(_constraint_mask(grid, con, cfg.symmetrize))
            self.thetas.append(con.theta_q if con.theta_q is not None else theta_q_default(q))

    def __call__(self, values: np.ndarray) -> np.ndarray:
        v = values
        if self.cfg.enforce_positivity:
            v = np.abs(v)
        if self.cfg.symmetrize is not None:
            v = self.cfg.symmetrize.average(v)
        if self.bins is not None:
            v = _radialize(v, self.bins)
        for mask, theta in zip(self.masks, self.thetas):
            v = self._rescale_ball(v, mask, theta)
        nq = self._lq(v)
        if not nq > 0:
            raise SolverError("projection collapsed the field to zero")
        return v / nq

    def _lq(self, v) -> float:
        w = self.grid.node_weight
        return float(np.sum(np.abs(v) ** self.q) * w) ** (1.0 / self.q)

    def _rescale_ball(self, v, mask, theta):
        aq = np.abs(v) ** self.q
        inside = float(aq[mask].sum())
        total = float(aq.sum())
        if total <= 0 or inside <= theta * total:
            return v
        # scale t inside the ball so the fraction lands exactly on theta
        outside = total - inside
        if outside <= 0:
            raise SolverError("constraint infeasible: all mass inside the ball")
        t = (theta * outside / ((1.0 - theta) * inside)) ** (1.0 / self.q)
        out = v.copy()
        out[mask] *= t
        return out

    def fractions(self, v) -> list:
        aq = np.abs(v) ** self.q
        total = float(aq.sum())
        return [float(aq[m].sum()) / total for m in self.masks]


# ---------------------------------------------------------------------------
# initial iterates
# ---------------------------------------------------------------------------


def _initial_values(grid: Grid, init: InitSpec, seed: int, amp: float, want_complex: bool) -> np.ndarray:
    if init.kind == "constant_plus_noise":
        rng = np.random.default_rng(seed)
        v = np.ones(grid.dims) + amp * rng.standard_normal(grid.dims)
        if want_complex:
            v = v + 1j * amp * rng.standard_normal(grid.dims)
        return v
    if init.kind == "corner_bump":
        labels = grid.domain.fundamental_vertex_labels()
        if init.vertex not in labels:
            raise SolverError(f"corner_bump vertex {init.vertex!r} not in {labels}")
        center = grid.domain.fundamental_vertices()[labels.index(init.vertex)]
        width = init.width if init.width is not None else min(grid.domain.side_lengths()) / 8.0
        d = grid.torus_distance(grid.nodes(), center)
        v = np.exp(-(d**2) / (2.0 * width**2))
        return v.astype(np.complex128) if want_complex else v
    if init.kind == "file":
        from .fieldfile import read_field

        _, values = read_field(init.path)
        if values.shape != tuple(grid.dims):
            raise SolverError(
                f"init file dims {values.shape} do not match grid {grid.dims}"
            )
        return values
    raise SolverError(f"init kind {init.kind!r} must be expanded before use")


# ---------------------------------------------------------------------------
# the minimizer
# ---------------------------------------------------------------------------


def minimize(grid: Grid, bc: BoundaryCondition, cfg: SolveConfig) -> Solution:
    """Minimize J over the admissible cone; returns the Nehari-normalized field."""
    if cfg.init.kind == "corner_scan":
        return _corner_scan(grid, bc, cfg)
    want_complex = bc.regime == QUASI_PERIODIC and not bc.phase_is_real()
    v = _initial_values(grid, cfg.init, cfg.seed, cfg.noise_amplitude, want_complex)
    return _run_minimize(grid, bc, cfg, v)


def _run_minimize(grid: Grid, bc: BoundaryCondition, cfg: SolveConfig, init_values) -> Solution:
    sym = symbol(grid, bc)
    p = cfg.params.bind(sym)
    want_complex = bc.regime == QUASI_PERIODIC and not bc.phase_is_real()
    if cfg.enforce_positivity and want_complex:
        raise SolverError("positivity projection is incompatible with complex phases")
    v = np.asarray(init_values)
    if want_complex and not np.iscomplexobj(v):
        v = v.astype(np.complex128)
    proj = _Projector(grid, cfg, p.q)
    v = proj(v)
    u = Field(grid, v)

    J = quotient_J(u, p)
    history = [J]
    tau = None
    prev_v = None
    prev_g = None
    res = math.inf
    it = 0
    converged = False
    for it in range(1, cfg.max_iters + 1):
        g = gradient_J(u, p)
        gn2 = float(np.sum(np.abs(g.values) ** 2)) * grid.node_weight
        res = math.sqrt(gn2) / (2.0 * math.sqrt(hs_norm_sq(u, sym, p.s)))
        rel_dec = math.inf if len(history) < 2 else (history[-2] - history[-1]) / history[-2]
        if res <= cfg.tol_residual and rel_dec <= cfg.tol_J:
            converged = True
            break
        if tau is None:
            tau = 0.1 / max(math.sqrt(gn2), 1e-30)
        else:
            du = u.values - prev_v
            dg = g.values - prev_g
            num = float(np.real(np.sum(np.conj(du) * du)))
            den = float(np.real(np.sum(np.conj(du) * dg)))
            if den > 0 and np.isfinite(den):
                tau = min(max(num / den, 1e-14), 1e14)
        prev_v = u.values
        prev_g = g.values
        accepted = False
        t = tau
        for _ in range(60):
            trial = proj(u.values - t * g.values)
            ut = Field(grid, trial)
            Jt = quotient_J(ut, p)
            if np.isfinite(Jt) and Jt <= J + cfg.backtrack_tol:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break  # stalled: no admissible step at any length
        tau = t
        u = ut
        J = Jt
        history.append(J)

    un = nehari_normalize(u, p)
    lam = quotient_J(u, p)
    resid = el_residual(un, p)
    proj_fracs = proj.fractions(u.values)
    active = tuple(
        f >= th * (1.0 - 1e-9) for f, th in zip(proj_fracs, proj.thetas)
    )
    sol = Solution(
        field=un,
        lam=lam,
        residual=resid,
        iterations=it,
        constraint_active=active,
        history=np.asarray(history),
        converged=converged,
        character=cfg.symmetrize.character if cfg.symmetrize is not None else None,
    )
    if grid.domain.kind == "strip":
        sol.flags.update(_strip_tail_monitor(un, p.q))
    if not converged:
        log.warning("minimize did not converge: residual %.3e after %d iterations", res, it)
    return sol


def _corner_scan(grid: Grid, bc: BoundaryCondition, cfg: SolveConfig) -> Solution:
    """Deterministic multistart: bumps at every fundamental vertex plus the
    constant, keeping the lowest quotient.  Used to discover which corner
    the constrained problem selects without prescribing it."""
    labels = grid.domain.fundamental_vertex_labels()
    starts = [InitSpec("constant_plus_noise")]
    starts += [InitSpec("corner_bump", vertex=l, width=cfg.init.width) for l in labels]
    best = None
    for init in starts:
        sol = minimize(grid, bc, replace(cfg, init=init))
        if best is None or sol.lam < best.lam:
            best = sol
            best.flags["scan_start"] = init.vertex or init.kind
    return best


def _strip_tail_monitor(u: Field, q: float) -> dict:
    n2 = u.grid.dims[1]
    edge = max(1, int(round(0.05 * n2)))
    aq = np.abs(u.values) ** q
    tail = float(aq[:, :edge].sum() + aq[:, -edge:].sum())
    total = float(aq.sum())
    frac = tail / total if total > 0 else 0.0
    return {"strip_tail_mass": frac, "strip_tail_ok": frac < 1e-8}


def minimize_constrained(grid: Grid, bc: BoundaryCondition, cfg: SolveConfig) -> Solution:
    """Constrained variant; identical to ``minimize`` when no constraints set.

    With constraints the projection step also rescales the field inside each
    constraint ball so the ball's q-mass fraction is min(current, theta_q);
    accepted hexagonal runs must end with every constraint inactive.
    """
    return minimize(grid, bc, cfg)


# ---------------------------------------------------------------------------
# sweeps over the dilation parameter
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SweepEntry:
    R: float
    solution: Solution | None
    report: "object"
    status: str
    error: str | None = None


def _rescale_to(values: np.ndarray, new_dims: tuple, periodic: bool) -> np.ndarray:
    """Resample a field onto new dims by bilinear interpolation in index space."""
    n1, n2 = new_dims
    m1, m2 = values.shape
    fi = (np.arange(n1) + 0.5) * m1 / n1 - 0.5
    fj = (np.arange(n2) + 0.5) * m2 / n2 - 0.5
    FI, FJ = np.meshgrid(fi, fj, indexing="ij")
    mode = "grid-wrap" if periodic else "reflect"
    if np.iscomplexobj(values):
        re = ndimage.map_coordinates(values.real, [FI, FJ], order=1, mode=mode)
        im = ndimage.map_coordinates(values.imag, [FI, FJ], order=1, mode=mode)
        return re + 1j * im
    return ndimage.map_coordinates(values, [FI, FJ], order=1, mode=mode)


def sweep_R(
    domain: DomainSpec,
    bc: BoundaryCondition,
    resolution: int,
    R_list,
    cfg: SolveConfig,
    warm_start: bool = True,
    threads: int = 1,
    eps: float = 0.01,
) -> list:
    """Independent solves over increasing R, with optional warm starts.

    Returns one entry per R carrying the solution and its concentration
    report.  Per-R failures are recorded and the sweep continues.
    """
    from .diagnostics import concentration_report

    R_list = list(R_list)
    if any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise SolverError("R_list must be strictly increasing")

    def solve_one(R: float, init_values):
        g = build_grid(replace(domain, scale=R), resolution)
        if init_values is not None:
            periodic = domain.is_triangle or bc.regime in (QUASI_PERIODIC, "periodic")
            seeded = _rescale_to(init_values, g.dims, periodic)
            try:
                sol = _run_minimize(g, bc, cfg, seeded)
            except SolverError:
                sol = minimize(g, bc, cfg)  # fall back to the configured init
        else:
            sol = minimize(g, bc, cfg)
        rep = concentration_report(sol.field, cfg.params.q, eps)
        return sol, rep

    entries = []
    if warm_start or threads <= 1:
        prev = None
        for R in R_list:
            try:
                sol, rep = solve_one(R, prev if warm_start else None)
                entries.append(SweepEntry(R, sol, rep, "ok"))
                prev = sol.field.values
            except Exception as exc:  # propagate per-R failures as entries
                entries.append(SweepEntry(R, None, None, "failed", str(exc)))
                prev = None
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            futs = {ex.submit(solve_one, R, None): R for R in R_list}
            got = {}
            for fut, R in futs.items():
                try:
                    got[R] = SweepEntry(R, *fut.result(), "ok")
                except Exception as exc:
                    got[R] = SweepEntry(R, None, None, "failed", str(exc))
        entries = [got[R] for R in R_list]
    return entries


# bubble reallocation -------------------------------------------------------


def bubble_reallocation(a: Field, b: Field, c: Field, p: EnergyParams) -> Field:
    """Move the worse bubble's mass onto the better one, preserving ||.||_q.

    Given fields with pairwise separated supports and quotient ordering
    ||b||_{H^s}^2 / ||b||_q^q >= ||c||_{H^s}^2 / ||c||_q^q, returns
    U = a + ((||b||_q^q + ||c||_q^q)^{1/q} / ||c||_q) c, which keeps the
    total Lq norm of a+b+c exactly and strictly lowers the H^s norm once
    the supports are far apart.
    """
    sym = p._sym()
    for (x, y, names) in ((a, b, "a,b"), (a, c, "a,c"), (b, c, "b,c")):
        ov = _overlap_mass(x, y, p.q)
        scale = max(norms(x, p.q)[1] ** (p.q / 2) * norms(y, p.q)[1] ** (p.q / 2), 1e-300)
        if ov > 1e-12 * scale:
            raise SolverError(f"supports of {names} overlap (mass {ov:.3e})")
    _, bq = norms(b, p.q)
    _, cq = norms(c, p.q)
    if bq <= 0 or cq <= 0:
        raise SolverError("bubbles b and c must carry positive Lq mass")
    rb = hs_norm_sq(b, sym, p.s) / bq**p.q
    rc = hs_norm_sq(c, sym, p.s) / cq**p.q
    if rb < rc:
        log.info("bubble_reallocation: quotient ordering violated, swapping b and c")
        b, c, bq, cq = c, b, cq, bq
    coef = (bq**p.q + cq**p.q) ** (1.0 / p.q) / cq
    return Field(a.grid, a.values + coef * c.values)


def _overlap_mass(x: Field, y: Field, q: float) -> float:
    w = x.grid.node_weight
    return float(np.sum((np.abs(x.values) * np.abs(y.values)) ** (q / 2)) * w)
