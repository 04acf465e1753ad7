"""Spectral fractional Laplacians as diagonal symbols in fast trig/Fourier bases.

The operator is the continuum one, Galerkin-truncated: each boundary regime
has an orthonormal eigenbasis that the grid resolves exactly (half-sample
cosines for Neumann, half-sample sines for Dirichlet, their product for the
mixed operator, plane waves for periodic and quasi-periodic cells), and the
fractional power acts as mu^s on the eigencoefficients, with 0^s := 0 so the
constant mode is annihilated.

Coefficients are scaled by the square root of the node weight, which makes
Parseval exact against the grid quadrature: ||u||_L2^2 equals the sum of
squared coefficient moduli to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .domain import Grid, RECT_KINDS, DomainError

TWO_PI = 2.0 * math.pi

NEUMANN = "neumann"
DIRICHLET = "dirichlet"
PERIODIC = "periodic"
QUASI_PERIODIC = "quasi_periodic"
MIXED_DN = "mixed_dn"

REGIMES = (NEUMANN, DIRICHLET, PERIODIC, QUASI_PERIODIC, MIXED_DN)


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary regime of the computational cell.

    Quasi-periodic phases are stored modulo 2*pi; theta = (0, 0) reproduces
    the periodic operator bit for bit.
    """

    regime: str
    theta: tuple = (0.0, 0.0)
    dirichlet_axis: int = 0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise SpectralError(f"unknown boundary regime {self.regime!r}")
        if self.regime == QUASI_PERIODIC:
            th = tuple(float(t) % TWO_PI for t in self.theta)
            object.__setattr__(self, "theta", th)
        if self.regime == MIXED_DN and self.dirichlet_axis not in (0, 1):
            raise SpectralError("dirichlet_axis must be 0 or 1")

    @property
    def is_spectral_trig(self) -> bool:
        return self.regime in (NEUMANN, DIRICHLET, MIXED_DN)

    def phase_is_real(self) -> bool:
        """Phases under which real fields stay real (0 or pi per axis)."""
        if self.regime != QUASI_PERIODIC:
            return True
        return all(
            min(t % TWO_PI, abs(t % TWO_PI - math.pi), abs(t % TWO_PI - TWO_PI)) < 1e-12
            for t in self.theta
        )


@dataclass(eq=False)
class Field:
    """Sampled function on a grid, one value per node."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != tuple(self.grid.dims):
            raise SpectralError(f"values shape {v.shape} does not match grid dims {self.grid.dims}")
        if v.dtype not in (np.float64, np.complex128):
            v = v.astype(np.complex128 if np.iscomplexobj(v) else np.float64)
        self.values = v

    @property
    def scalar_kind(self) -> str:
        return "complex" if np.iscomplexobj(self.values) else "real"

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


@dataclass(frozen=True, eq=False)
class SpectralSymbol:
    """Per-mode Laplacian eigenvalues for one (grid, boundary regime) pair."""

    grid: Grid
    bc: BoundaryCondition
    mu: np.ndarray
    kappa: tuple = (0.0, 0.0)

    def __post_init__(self):
        self.mu.setflags(write=False)

    @property
    def has_zero_mode(self) -> bool:
        return bool(np.any(self.mu == 0.0))


def _require_rect(grid: Grid, regime: str):
    if grid.domain.kind not in RECT_KINDS:
        raise SpectralError(
            f"{regime} symbol needs a rectangle-kind cell, got {grid.domain.kind}"
        )


def symbol(grid: Grid, bc: BoundaryCondition) -> SpectralSymbol:
    """Continuum Laplacian eigenvalues indexed by transform modes."""
    n1, n2 = grid.dims
    if bc.regime in (NEUMANN, DIRICHLET, MIXED_DN):
        _require_rect(grid, bc.regime)
        a = float(np.linalg.norm(grid.cell[:, 0]))
        b = float(np.linalg.norm(grid.cell[:, 1]))
        j = np.arange(n1, dtype=float)
        k = np.arange(n2, dtype=float)
        if bc.regime == DIRICHLET:
            j = j + 1.0
            k = k + 1.0
        elif bc.regime == MIXED_DN:
            if bc.dirichlet_axis == 0:
                j = j + 1.0
            else:
                k = k + 1.0
        mu = np.add.outer((j * math.pi / a) ** 2, (k * math.pi / b) ** 2)
        return SpectralSymbol(grid, bc, mu)
    if bc.regime == QUASI_PERIODIC and grid.domain.is_triangle:
        raise SpectralError("quasi-periodic symbols need a parallelogram or rectangle cell")
    # periodic / quasi-periodic: plane waves on the cell lattice
    Binv = np.linalg.inv(grid.cell)  # rows are the dual basis vectors
    m1 = sfft.fftfreq(n1, d=1.0 / n1)
    m2 = sfft.fftfreq(n2, d=1.0 / n2)
    if bc.regime == QUASI_PERIODIC:
        kap = bc.theta[0] * Binv[0] + bc.theta[1] * Binv[1]
    else:
        kap = np.zeros(2)
    kx = TWO_PI * (np.add.outer(m1 * Binv[0, 0], m2 * Binv[1, 0])) + kap[0]
    ky = TWO_PI * (np.add.outer(m1 * Binv[0, 1], m2 * Binv[1, 1])) + kap[1]
    mu = kx * kx + ky * ky
    return SpectralSymbol(grid, bc, mu, kappa=(float(kap[0]), float(kap[1])))


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def _phase(sym: SpectralSymbol) -> np.ndarray | None:
    if sym.kappa == (0.0, 0.0):
        return None
    xy = sym.grid.nodes()
    return np.exp(1j * (sym.kappa[0] * xy[..., 0] + sym.kappa[1] * xy[..., 1]))


def to_coeff(values: np.ndarray, sym: SpectralSymbol) -> np.ndarray:
    """Forward transform to Parseval-normalized eigencoefficients."""
    w = math.sqrt(sym.grid.node_weight)
    bc = sym.bc
    if bc.regime == NEUMANN:
        return w * sfft.dctn(values, type=2, norm="ortho")
    if bc.regime == DIRICHLET:
        return w * sfft.dstn(values, type=2, norm="ortho")
    if bc.regime == MIXED_DN:
        d = bc.dirichlet_axis
        out = sfft.dst(values, type=2, norm="ortho", axis=d)
        out = sfft.dct(out, type=2, norm="ortho", axis=1 - d)
        return w * out
    ph = _phase(sym)
    v = values if ph is None else values * np.conj(ph)
    return w * sfft.fft2(v, norm="ortho")


def from_coeff(coeff: np.ndarray, sym: SpectralSymbol, want_real: bool) -> np.ndarray:
    """Inverse of :func:`to_coeff`."""
    w = math.sqrt(sym.grid.node_weight)
    bc = sym.bc
    c = coeff / w
    if bc.regime == NEUMANN:
        return sfft.idctn(c, type=2, norm="ortho")
    if bc.regime == DIRICHLET:
        return sfft.idstn(c, type=2, norm="ortho")
    if bc.regime == MIXED_DN:
        d = bc.dirichlet_axis
        out = sfft.idst(c, type=2, norm="ortho", axis=d)
        out = sfft.idct(out, type=2, norm="ortho", axis=1 - d)
        return out
    v = sfft.ifft2(c, norm="ortho")
    ph = _phase(sym)
    if ph is not None:
        v = v * ph
    return v.real if want_real else v


def _keeps_real(field: Field, sym: SpectralSymbol) -> bool:
    if field.scalar_kind == "complex":
        return False
    if sym.bc.regime != QUASI_PERIODIC:
        return True
    # real fields stay real only under phases 0 or pi per axis
    return sym.bc.phase_is_real()


def prepare_field(field: Field, sym: SpectralSymbol) -> Field:
    """Promote real fields to complex when the phase regime demands it."""
    if field.scalar_kind == "real" and sym.bc.regime == QUASI_PERIODIC and not sym.bc.phase_is_real():
        return Field(field.grid, field.values.astype(np.complex128))
    return field


def apply_fraclap(u: Field, sym: SpectralSymbol, s: float) -> Field:
    """Apply the fractional Laplacian: transform, multiply mu^s, invert."""
    _check_match(u, sym)
    c = to_coeff(u.values, sym)
    c = c * _mu_pow(sym.mu, s)
    out = from_coeff(c, sym, want_real=_keeps_real(u, sym))
    return Field(u.grid, out)


def apply_mode_filter(u: Field, sym: SpectralSymbol, factors: np.ndarray) -> Field:
    """Multiply eigencoefficients by an arbitrary per-mode factor array."""
    _check_match(u, sym)
    c = to_coeff(u.values, sym) * factors
    return Field(u.grid, from_coeff(c, sym, want_real=_keeps_real(u, sym)))


def _mu_pow(mu: np.ndarray, s: float) -> np.ndarray:
    if s == 1.0:
        return mu
    out = np.zeros_like(mu)
    nz = mu > 0.0
    out[nz] = mu[nz] ** s
    return out


def _check_match(u: Field, sym: SpectralSymbol):
    if tuple(u.grid.dims) != tuple(sym.grid.dims):
        raise SpectralError(
            f"field dims {u.grid.dims} do not match symbol dims {sym.grid.dims}"
        )


def seminorm_sq(u: Field, sym: SpectralSymbol, s: float) -> float:
    """Fractional seminorm [u]^2 = sum over modes of mu^s |coefficient|^2."""
    _check_match(u, sym)
    c = to_coeff(u.values, sym)
    return float(np.sum(_mu_pow(sym.mu, s) * np.abs(c) ** 2))


def norms(u: Field, q: float) -> tuple:
    """Quadrature-weighted (L2, Lq) norms."""
    if q < 1:
        raise SpectralError("q must be >= 1")
    w = u.grid.node_weight
    av = np.abs(u.values)
    l2 = math.sqrt(float(np.sum(av * av)) * w)
    lq = float(np.sum(av**q) * w) ** (1.0 / q)
    return l2, lq


def inner(u: Field, v: Field) -> float:
    """Real quadrature inner product (conjugate-symmetric for complex fields)."""
    w = u.grid.node_weight
    return float(np.real(np.sum(np.conj(u.values) * v.values)) * w)


def hs_norm_sq(u: Field, sym: SpectralSymbol, s: float) -> float:
    l2, _ = norms(u, 2.0)
    return seminorm_sq(u, sym, s) + l2 * l2


def support_separation_defect(v1: Field, v2: Field, sym: SpectralSymbol, s: float) -> float:
    """|[v1+v2]^2 - [v1]^2 - [v2]^2|, the separated-supports energy defect."""
    if v1.grid is not v2.grid and tuple(v1.grid.dims) != tuple(v2.grid.dims):
        raise SpectralError("fields must share a grid")
    both = Field(v1.grid, v1.values + v2.values)
    return abs(seminorm_sq(both, sym, s) - seminorm_sq(v1, sym, s) - seminorm_sq(v2, sym, s))
