"""Stationary soliton profiles and their linearization.

Solves the nonlinear eigenproblem

    -E S = -S'' + lam S^3 + V S,   lam < 0,

for the positive even profile S, either at fixed E (amplitude set by the
nonlinearity) or at fixed mass (E reported as the eigenvalue).  The solver
is imaginary-time propagation with per-step renormalization as globalizer,
then damped Newton on the full spectral residual; the Newton steps use a
4th-order banded approximation of the Jacobian, which contracts the
high-wavenumber error (a 2nd-order band would amplify it) while the fixed
point remains the exact spectral root.  Profiles are kept even by parity
projection, which removes the translation zero mode from the Jacobian.

The linearization around S acts on doubled vectors K = (u, w) ~ (chi, chi*)
of the multiplicative perturbation psi = S(1+chi)e^{i theta}:

    H = [[-d2 + lam S^2 - 2(S'/S) d1,  lam S^2],
        [-lam S^2,  d2 - lam S^2 + 2(S'/S) d1]]

and its S-conjugated companion H_D = S H S^{-1}, which by the profile
equation takes the division-free closed form

    H_D = [[L,  lam S^2], [-lam S^2,  -L]],   L = -d2 + V + E + 2 lam S^2,

with exact kernel vectors H_D (S, -S) = 0 and H_D^2 (dS/dE, dS/dE) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    Grid1D,
    RealField,
    integrate_values,
    reflect_even,
    spectral_denoise,
    spectral_derivative,
)
from .potentials import PotentialSpec, evaluate


class SolverError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


def _fd4_second_derivative(n: int, dx: float) -> sp.csc_matrix:
    c = np.array([-1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12]) / dx**2
    idx = np.arange(n)
    rows, cols, vals = [], [], []
    for o, cv in zip((-2, -1, 0, 1, 2), c):
        rows.append(idx)
        cols.append((idx + o) % n)
        vals.append(np.full(n, cv))
    return sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )


@dataclass
class SolitonProfile:
    """Converged stationary profile with its E-derivative and widths."""

    grid: Grid1D
    potential: PotentialSpec
    lam: float
    E: float
    S: RealField
    dS_dE: RealField | None = None
    residual: float = 0.0
    residual_history: list = field(default_factory=list, repr=False)

    @property
    def mass(self) -> float:
        return float(integrate_values(self.S.values**2, self.grid))

    @property
    def x2s_integral(self) -> float:
        """Integral of x^2 S dx (first power of the profile)."""
        return float(integrate_values(self.grid.x**2 * self.S.values, self.grid))

    @property
    def x2s2_ratio(self) -> float:
        """Integral x^2 S^2 dx / integral S^2 dx (standard variance)."""
        s2 = self.S.values**2
        return float(
            integrate_values(self.grid.x**2 * s2, self.grid) / integrate_values(s2, self.grid)
        )

    def export_rows(self):
        """Rows (x, S, dS_dE) for CSV regression goldens."""
        d = self.dS_dE.values if self.dS_dE is not None else np.zeros(self.grid.n)
        return np.column_stack([self.grid.x, self.S.values, d])


def width(profile: SolitonProfile) -> tuple[float, float]:
    """(beta_paper, beta_variance) widths from the two stored integrals.

    beta_paper = (integral x^2 S dx)^(-1/2); beta_variance is the RMS width
    sqrt(integral x^2 S^2 / integral S^2).  Both are kept because the
    first-power integrand is unusual; comparisons must say which they use.
    """
    return 1.0 / np.sqrt(profile.x2s_integral), float(np.sqrt(profile.x2s2_ratio))


def _residual(S, E, lam, V, k2):
    return np.real(sfft.ifft(-k2 * sfft.fft(S))) - E * S - lam * S**3 - V * S


def _even(S):
    return 0.5 * (S + reflect_even(S))


def _imaginary_time(S, E_or_none, mass, lam, V, grid, dtau=0.01, steps=400):
    """Split-step imaginary-time relaxation at fixed mass (globalizer)."""
    k2 = grid.wavenumbers**2
    kin = np.exp(-dtau * k2)
    S = S.copy()
    for _ in range(steps):
        S = np.real(sfft.ifft(kin * sfft.fft(S)))
        S = S * np.exp(-dtau * (V + lam * S**2))
        S = _even(np.abs(S))
        m = integrate_values(S**2, grid)
        if not np.isfinite(m) or m <= 0:
            raise SolverError("imaginary-time relaxation collapsed")
        S *= np.sqrt(mass / m)
    return S


def default_guess(potential, lam, grid, E=None, mass=None):
    """Family guess: sech profile for attractive nonlinearity, trap Gaussian
    when the nonlinear amplitude would be negligible."""
    x = grid.x
    if E is not None and E > 0:
        amp = np.sqrt(2.0 * E / abs(lam))
        return amp / np.cosh(np.sqrt(E) * x)
    if mass is not None:
        E_est = (mass * abs(lam) / 4.0) ** 2
        if E_est > 1e-3:
            return np.sqrt(2.0 * E_est / abs(lam)) / np.cosh(np.sqrt(E_est) * x)
        omega = getattr(potential, "omega", 1.0)
        g = np.exp(-omega * x**2 / 4.0)
        g *= np.sqrt(mass / integrate_values(g**2, grid))
        return g
    omega = getattr(potential, "omega", 1.0)
    return np.exp(-omega * x**2 / 4.0)


def solve_profile(
    potential: PotentialSpec,
    lam: float,
    grid: Grid1D,
    E: float | None = None,
    mass: float | None = None,
    guess: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 200,
    relax_steps: int = 300,
    with_dS_dE: bool = True,
) -> SolitonProfile:
    """Solve the profile equation for target E or target mass (exactly one)."""
    if lam >= 0:
        raise SolverError("attractive nonlinearity required: lam < 0")
    if (E is None) == (mass is None):
        raise SolverError("specify exactly one of E or mass")

    V = evaluate(potential, grid).values
    x = grid.x
    k2 = grid.wavenumbers**2
    n = grid.n
    D2 = _fd4_second_derivative(n, grid.dx)

    S = guess.copy() if guess is not None else default_guess(potential, lam, grid, E, mass)
    S = _even(np.abs(S))

    if relax_steps > 0:
        relax_mass = mass if mass is not None else integrate_values(S**2, grid)
        S = _imaginary_time(S, E, relax_mass, lam, V, grid, steps=relax_steps)

    E_cur = E if E is not None else _rayleigh_E(S, lam, V, grid, k2)
    history = []
    S_scale = np.max(np.abs(S))

    for it in range(max_iter):
        S = _even(S)
        r = _residual(S, E_cur, lam, V, k2)
        rn = float(np.max(np.abs(r)) / np.max(np.abs(S)))
        history.append(rn)
        mass_err = 0.0 if mass is None else integrate_values(S**2, grid) - mass
        if rn < tol and abs(mass_err) < max(tol, 1e-12) * max(1.0, mass or 1.0):
            break
        if not np.all(np.isfinite(S)) or np.max(np.abs(S)) > 1e8 * S_scale:
            raise SolverError("profile solve collapsed (norm blow-up)", history)

        J = (D2 - sp.diags(E_cur + 3.0 * lam * S**2 + V)).tocsc()
        if mass is None:
            dS = spla.splu(J).solve(-r)
            dE = 0.0
        else:
            # bordered system stays nonsingular even where J itself is
            # singular (the weak-coupling linear limit)
            A = sp.bmat(
                [[J, -S[:, None]], [2.0 * grid.dx * S[None, :], None]], format="csc"
            )
            rhs = np.concatenate([-r, [-(mass_err)]])
            sol = spla.splu(A).solve(rhs)
            dS, dE = sol[:-1], float(sol[-1])

        step = 1.0
        base = np.linalg.norm(r) + abs(mass_err)
        for _ in range(10):
            St = S + step * dS
            Et = E_cur + step * dE
            rt = _residual(St, Et, lam, V, k2)
            mt = 0.0 if mass is None else integrate_values(St**2, grid) - mass
            if np.linalg.norm(rt) + abs(mt) < base:
                break
            step *= 0.5
        S = S + step * dS
        E_cur = E_cur + step * dE
    else:
        raise SolverError(
            f"profile solve did not reach tol={tol:g}; residual history tail "
            f"{['%.2e' % v for v in history[-5:]]}",
            history,
        )

    prof = SolitonProfile(
        grid=grid,
        potential=potential,
        lam=lam,
        E=float(E_cur),
        S=RealField(grid, S),
        residual=history[-1],
        residual_history=history,
    )
    if with_dS_dE:
        prof.dS_dE = RealField(grid, dE_derivative(prof))
    return prof


def _rayleigh_E(S, lam, V, grid, k2):
    d2S = np.real(sfft.ifft(-k2 * sfft.fft(S)))
    num = integrate_values(S * (-d2S + V * S + lam * S**3), grid)
    return -num / integrate_values(S**2, grid)


def dE_derivative(profile: SolitonProfile, dE: float = 1e-4,
                  richardson: bool = True) -> np.ndarray:
    """dS/dE at fixed lam by central differences of re-solved profiles.

    With richardson=True the dE and dE/2 differences are combined to fourth
    order.  The result is spectrally denoised: the finite-difference
    subtraction leaves round-off at high wavenumbers that squared operators
    (H_D^2) would amplify by k^4.
    """

    def shifted(EE):
        p = solve_profile(
            profile.potential,
            profile.lam,
            profile.grid,
            E=EE,
            guess=profile.S.values,
            tol=max(5.0 * profile.residual, 5e-11),
            relax_steps=0,
            with_dS_dE=False,
        )
        return p.S.values

    d_h = (shifted(profile.E + dE) - shifted(profile.E - dE)) / (2.0 * dE)
    if richardson:
        d_h2 = (shifted(profile.E + dE / 2) - shifted(profile.E - dE / 2)) / dE
        d_h = (4.0 * d_h2 - d_h) / 3.0
    return spectral_denoise(d_h, profile.grid, rel_floor=1e-11)


@dataclass
class LinearizedOperators:
    """Matrix-free linearized operators around a profile, plus mode vectors."""

    profile: SolitonProfile
    s_floor_frac: float = 1e-8

    def __post_init__(self):
        p = self.profile
        self.grid = p.grid
        self.S = p.S.values
        self.V = evaluate(p.potential, p.grid).values
        self.E = p.E
        self.lam = p.lam
        self.Sx = spectral_derivative(self.S, p.grid, 1)
        floor = self.s_floor_frac * np.max(np.abs(self.S))
        t = np.clip((np.abs(self.S) - floor) / (9.0 * floor), 0.0, 1.0)
        self._taper = t * t * (3.0 - 2.0 * t)
        self._ratio = self._taper * self.Sx / np.maximum(np.abs(self.S), floor) * np.sign(self.S)
        if p.dS_dE is None:
            p.dS_dE = RealField(p.grid, dE_derivative(p))

    # mode vectors (doubled structure)
    @property
    def kernel_vector(self):
        return self.S, -self.S

    @property
    def eta1(self):
        return self.Sx, self.Sx

    @property
    def eta2(self):
        x = self.grid.x
        return x * self.S, -x * self.S

    @property
    def xi1(self):
        d = self.profile.dS_dE.values
        return d, d

    def sigma_z(self, u, w):
        return u, -w

    def apply_H(self, u, w):
        """Block operator on perturbation vectors (chi, chi*).

        The first-order term carries S'/S and is tapered to zero where S
        falls below s_floor_frac * max(S); the operator is singular there.
        """
        g = self.grid
        lamS2 = self.lam * self.S**2
        du = spectral_derivative(u, g, 1)
        dw = spectral_derivative(w, g, 1)
        d2u = spectral_derivative(u, g, 2)
        d2w = spectral_derivative(w, g, 2)
        row1 = -d2u + lamS2 * u - 2.0 * self._ratio * du + lamS2 * w
        row2 = -lamS2 * u + d2w - lamS2 * w + 2.0 * self._ratio * dw
        return row1, row2

    def apply_HD(self, u, w):
        """S-conjugated operator in closed form (no division by S)."""
        g = self.grid
        diag = self.V + self.E + 2.0 * self.lam * self.S**2
        lamS2 = self.lam * self.S**2
        Lu = -spectral_derivative(u, g, 2) + diag * u
        Lw = -spectral_derivative(w, g, 2) + diag * w
        return Lu + lamS2 * w, -lamS2 * u - Lw

    def _block_norm(self, u, w):
        return float(np.sqrt(self.grid.dx * (np.sum(u**2) + np.sum(w**2))))

    def kernel_residuals(self) -> dict:
        """Relative norms of the two kernel identities."""
        u, w = self.kernel_vector
        r1, r2 = self.apply_HD(u, w)
        res_kernel = self._block_norm(r1, r2) / self._block_norm(u, w)
        a, b = self.xi1
        h1, h2 = self.apply_HD(a, b)
        g1, g2 = self.apply_HD(h1, h2)
        res_xi = self._block_norm(g1, g2) / self._block_norm(a, b)
        return {"kernel": res_kernel, "generalized": res_xi}


def build_linearized(profile: SolitonProfile, s_floor_frac: float = 1e-8) -> LinearizedOperators:
    if profile.residual > 1e-6:
        raise SolverError(f"profile residual {profile.residual:.2e} too large to linearize")
    return LinearizedOperators(profile, s_floor_frac)


class ProfileFamily:
    """Profiles S_E cached over E with warm-started re-solves.

    fit_modulation leans on this: each fit needs S and dS/dE at a slowly
    drifting E, so re-solving from the nearest cached profile takes a
    couple of Newton steps.
    """

    def __init__(self, potential, lam, grid, tol=1e-10):
        self.potential = potential
        self.lam = lam
        self.grid = grid
        self.tol = tol
        self._cache: dict[float, SolitonProfile] = {}

    def solve(self, E: float) -> SolitonProfile:
        key = round(float(E), 12)
        if key in self._cache:
            return self._cache[key]
        guess = None
        relax = 300
        if self._cache:
            nearest = min(self._cache, key=lambda e: abs(e - E))
            guess = self._cache[nearest].S.values
            relax = 0
        prof = solve_profile(
            self.potential, self.lam, self.grid, E=E, guess=guess, tol=self.tol,
            relax_steps=relax,
        )
        self._cache[key] = prof
        return prof
