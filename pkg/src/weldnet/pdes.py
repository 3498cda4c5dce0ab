"""Grids, initial-condition primitives and PDE solvers for trajectory data.

Burgers' and KdV are integrated with a Fourier pseudo-spectral discretisation
and fourth-order exponential time differencing (ETDRK4, Cox-Matthews scheme
with Kassam-Trefethen contour-integral coefficients).  Transport is evaluated
from its closed-form solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class SolverBlowUp(FloatingPointError):
    def __init__(self, step: int, detail: str):
        super().__init__(f"solution blew up at internal step {step}: {detail}")
        self.step = step


@dataclass(frozen=True)
class SpatialGrid:
    n_points: int = 512
    domain_start: float = 0.0
    domain_end: float = 1.0
    periodic: bool = True

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("a spatial grid needs at least 2 points")
        if not self.domain_end > self.domain_start:
            raise ValueError("empty spatial domain")

    @property
    def length(self) -> float:
        return self.domain_end - self.domain_start

    @property
    def points(self) -> np.ndarray:
        if self.periodic:
            return self.domain_start + self.length * np.arange(self.n_points) / self.n_points
        return np.linspace(self.domain_start, self.domain_end, self.n_points)

    @property
    def dx(self) -> float:
        return self.length / (self.n_points if self.periodic else self.n_points - 1)

    def to_dict(self) -> dict:
        return {"n_points": self.n_points, "domain_start": self.domain_start,
                "domain_end": self.domain_end, "periodic": self.periodic}


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    n_steps: int = 301

    def __post_init__(self):
        if self.n_steps < 2 or not self.t_end > 0:
            raise ValueError("time grid needs n_steps >= 2 and t_end > 0")

    @property
    def dt(self) -> float:
        return self.t_end / (self.n_steps - 1)

    @property
    def times(self) -> np.ndarray:
        # index * dt, not cumulative sums, so grid times are reproducible exactly
        return np.arange(self.n_steps) * self.dt

    def to_dict(self) -> dict:
        return {"t_end": self.t_end, "n_steps": self.n_steps}


def relu(x):
    return np.maximum(x, 0.0)


def hat(eps: float, x):
    """Piecewise-linear bump on [0, eps] with peak 1 at eps/2."""
    return 2.0 / eps * (relu(x) - 2.0 * relu(x - eps / 2.0) + relu(x - eps))


def soliton(c: float, x):
    """KdV soliton profile (c/2) sech(sqrt(c) x / 2)^2."""
    return c / 2.0 / np.cosh(np.sqrt(c) * np.asarray(x) / 2.0) ** 2


# --- Gaussian random fields ---------------------------------------------------

@dataclass(frozen=True)
class GrfSpec:
    amplitude: float = 49.0
    length_scale_k0: float = 7.0
    smoothness_exponent: float = 2.5
    grid: SpatialGrid = SpatialGrid()

    def mode_std(self, k) -> np.ndarray:
        """Standard deviation of the Fourier coefficient of wavenumber ``k`` (cycles per unit length)."""
        k = np.asarray(k, dtype=np.float64)
        return self.amplitude * ((2 * np.pi * k / self.grid.length) ** 2 + self.length_scale_k0 ** 2) ** (
            -self.smoothness_exponent / 2.0)


@dataclass(frozen=True)
class FourierField:
    """Real periodic field ``sum_k c_k exp(2 pi i k (x - start) / L)`` stored by its k >= 0 coefficients."""

    coeffs: np.ndarray  # complex, index k = 0..K
    domain_start: float
    length: float

    def __call__(self, x, shift: float = 0.0) -> np.ndarray:
        """Evaluate at ``x - shift`` exactly (no interpolation)."""
        x = np.asarray(x, dtype=np.float64)
        k = np.arange(len(self.coeffs))
        phase = np.exp(2j * np.pi * np.outer(x - shift - self.domain_start, k) / self.length)
        c = self.coeffs.copy()
        c[1:] *= 2.0
        return (phase @ c).real

    def on_grid(self, grid: SpatialGrid) -> np.ndarray:
        if not grid.periodic:
            raise ValueError("Fourier fields live on periodic grids")
        n = grid.n_points
        spec = np.zeros(n // 2 + 1, dtype=np.complex128)
        m = min((n - 1) // 2 + 1, len(self.coeffs))
        spec[:m] = self.coeffs[:m]
        return np.fft.irfft(spec * n, n=n)


def grf_coefficients(spec: GrfSpec, seed) -> FourierField:
    """Independent complex Gaussian modes with Hermitian symmetry (real field).

    Modes |k| < n/2 are kept; the unpaired Nyquist mode of an even grid is left at zero.
    """
    grid = spec.grid
    if not grid.periodic:
        raise ValueError("GRF sampling requires a periodic grid")
    rng = np.random.default_rng(seed)
    n_modes = (grid.n_points - 1) // 2 + 1
    k = np.arange(n_modes)
    std = spec.mode_std(k)
    re = rng.standard_normal(n_modes)
    im = rng.standard_normal(n_modes)
    c = std * (re + 1j * im) / math.sqrt(2.0)
    c[0] = std[0] * re[0]
    return FourierField(c, grid.domain_start, grid.length)


def grf_pointwise_variance(spec: GrfSpec) -> float:
    """Sum of std_k^2 over all signed wavenumbers kept on the grid."""
    k = np.arange((spec.grid.n_points - 1) // 2 + 1)
    s2 = spec.mode_std(k) ** 2
    return float(s2[0] + 2.0 * s2[1:].sum())


def sample_grf(spec: GrfSpec, seed) -> np.ndarray:
    return grf_coefficients(spec, seed).on_grid(spec.grid)


# --- transport -----------------------------------------------------------------

def transport_solution(g, t: float, grid: SpatialGrid) -> np.ndarray:
    """Solution of u_t = -u_x with zero inflow at the left boundary: g(x - t), 0 upstream."""
    if t < 0:
        raise ValueError("t must be >= 0")
    x = grid.points
    xs = x - t
    out = np.asarray(g(xs), dtype=np.float64)
    return np.where(xs >= grid.domain_start, out, 0.0)


# --- ETDRK4 ---------------------------------------------------------------------

class Etdrk4:
    """u_t = L u + N(u) on a periodic grid with diagonal L in Fourier space."""

    def __init__(self, grid: SpatialGrid, linear: np.ndarray, nonlinear, dt: float, n_contour: int = 64):
        self.grid = grid
        self.dt = dt
        self.nonlinear = nonlinear
        Lh = dt * linear
        self.E = np.exp(Lh)
        self.E2 = np.exp(Lh / 2.0)
        r = np.exp(2j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
        LR = Lh[:, None] + r[None, :]
        eLR = np.exp(LR)
        self.Q = dt * np.mean((np.exp(LR / 2.0) - 1.0) / LR, axis=1)
        self.f1 = dt * np.mean((-4.0 - LR + eLR * (4.0 - 3.0 * LR + LR ** 2)) / LR ** 3, axis=1)
        self.f2 = dt * np.mean((2.0 + LR + eLR * (LR - 2.0)) / LR ** 3, axis=1)
        self.f3 = dt * np.mean((-4.0 - 3.0 * LR - LR ** 2 + eLR * (4.0 - LR)) / LR ** 3, axis=1)
        if np.all(np.isreal(linear)):
            for name in ("Q", "f1", "f2", "f3"):
                setattr(self, name, getattr(self, name).real)

    def step(self, v: np.ndarray) -> np.ndarray:
        N = self.nonlinear
        Nv = N(v)
        a = self.E2 * v + self.Q * Nv
        Na = N(a)
        b = self.E2 * v + self.Q * Na
        Nb = N(b)
        c = self.E2 * a + self.Q * (2.0 * Nb - Nv)
        Nc = N(c)
        return self.E * v + self.f1 * Nv + 2.0 * self.f2 * (Na + Nb) + self.f3 * Nc


def _wavenumbers(grid: SpatialGrid) -> np.ndarray:
    return 2.0 * np.pi * np.fft.rfftfreq(grid.n_points, d=grid.length / grid.n_points)


def _advection_term(grid: SpatialGrid, dealias: bool = True):
    """Spectral -(u^2/2)_x.

    With ``dealias`` the square is formed on a zero-padded 3n/2 grid (3/2 rule),
    which removes quadratic aliasing without discarding any resolved mode.
    """
    n = grid.n_points
    k = _wavenumbers(grid)
    g = -0.5j * k
    m = 3 * n // 2 if dealias else n
    n_modes = len(k)

    def N(v):
        if dealias and n % 2 == 0:
            # the lone Nyquist mode of the coarse grid has no partner on the padded one
            v = v.copy()
            v[-1] = 0.0
        u = np.fft.irfft(v, n=m) * (m / n)
        return g * np.fft.rfft(u * u)[:n_modes] * (n / m)
    return N


def integrate(u0, grid: SpatialGrid, time: TimeGrid, linear: np.ndarray, substeps: int,
              dealias: bool = True, blowup: float = 1e6) -> np.ndarray:
    if not grid.periodic:
        raise ValueError("pseudo-spectral solvers need a periodic grid")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    u0 = np.asarray(u0, dtype=np.float64)
    if u0.shape != (grid.n_points,):
        raise ValueError(f"initial field has shape {u0.shape}, grid has {grid.n_points} points")
    stepper = Etdrk4(grid, linear, _advection_term(grid, dealias), time.dt / substeps)
    out = np.empty((time.n_steps, grid.n_points))
    out[0] = u0
    v = np.fft.rfft(u0)
    n_internal = 0
    for k in range(1, time.n_steps):
        # overflow is reported through SolverBlowUp below
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(substeps):
                v = stepper.step(v)
                n_internal += 1
            u = np.fft.irfft(v, n=grid.n_points)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > blowup:
            n_bad = int(np.count_nonzero(~np.isfinite(u)))
            raise SolverBlowUp(n_internal, f"output step {k}, {n_bad} non-finite values, "
                                           f"max finite |u| = {np.max(np.abs(u[np.isfinite(u)]), initial=0.0):.3g}")
        out[k] = u
    return out


def solve_burgers(u0, nu: float, time: TimeGrid, grid: SpatialGrid, substeps: int = 8,
                  dealias: bool = True) -> np.ndarray:
    """u_t = nu u_xx - u u_x, periodic."""
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    k = _wavenumbers(grid)
    return integrate(u0, grid, time, -nu * k ** 2, substeps, dealias)


def solve_kdv(u0, time: TimeGrid, grid: SpatialGrid, substeps: int = 8, dealias: bool = True) -> np.ndarray:
    """u_t = -u_xxx - u u_x, periodic."""
    k = _wavenumbers(grid)
    return integrate(u0, grid, time, 1j * k ** 3, substeps, dealias)


def kdv_traveling_wave(c: float, x0: float, x, t: float):
    """Exact soliton of u_t + u u_x + u_xxx = 0: 3c sech^2(sqrt(c)(x - ct - x0)/2)."""
    return 3.0 * c / np.cosh(np.sqrt(c) * (np.asarray(x) - c * t - x0) / 2.0) ** 2


def trapezoid(u, grid: SpatialGrid) -> float:
    """Integral over the domain; periodic grids wrap around."""
    u = np.asarray(u)
    if grid.periodic:
        return float(u.sum() * grid.dx)
    return float(np.trapezoid(u, dx=grid.dx))
