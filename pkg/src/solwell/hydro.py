"""Madelung decomposition, quantum potential, and the outflow velocity law.

Writing psi = sqrt(rho) e^{i phi} with v = 2 phi_x (m = 1/2 units), the
field equations become continuity and an Euler-type balance

    r1 = rho_t + (rho v)_x,
    r2 = v_t / 2 + v v_x / 2 + d/dx [ V - (sqrt(rho))_xx/sqrt(rho) + lam rho ],

both of which vanish on exact solutions; hydro_residuals measures them on
stored snapshots.  Velocity and quantum potential are only meaningful where
the density sits above a floor (Madelung quantities are singular at nodes),
so they are reported on a mask.

burgers_velocity is the closed-form characteristic solution for the
tunneling outflow past the transition exit x_edge = (1+delta)/omega:

    v(x,t) = (alpha eps^2 omega^2 / 2) [ t - sqrt(t^2 - beta (x-x_edge) / (eps^2 omega^2)) ]

when the square root is real, and zero before that (no characteristic has
arrived).  The minus branch is the smaller exit time, which minimizes the
classical action; the plus branch is never used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ComplexField, Grid1D, RealField, spectral_derivative
from .potentials import PotentialSpec, TruncatedWell, transition_force_coefficients
from .soliton import SolitonProfile


class HydroError(ValueError):
    pass


@dataclass
class HydroFields:
    grid: Grid1D
    rho: np.ndarray
    phase: np.ndarray          # unwrapped, valid on the mask
    v: np.ndarray              # 2 * phase_x, NaN off the mask
    support_mask: np.ndarray   # rho >= floor

    def reconstruct(self) -> np.ndarray:
        """sqrt(rho) e^{i phase} on the mask (zero elsewhere)."""
        out = np.zeros(self.grid.n, dtype=complex)
        m = self.support_mask
        out[m] = np.sqrt(self.rho[m]) * np.exp(1j * self.phase[m])
        return out


def _connected_components(mask: np.ndarray):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    splits = np.flatnonzero(np.diff(idx) > 1)
    return [seg for seg in np.split(idx, splits + 1)]


def _derivative_in_window(values: np.ndarray, dx: float) -> np.ndarray:
    """Second-order differences with one-sided stencils at window ends."""
    g = np.empty_like(values, dtype=float)
    if values.size < 3:
        g[:] = 0.0 if values.size < 2 else (values[-1] - values[0]) / dx
        return g
    g[1:-1] = (values[2:] - values[:-2]) * (0.5 / dx)
    g[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dx)
    g[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dx)
    return g


def madelung(psi: ComplexField, rho_floor: float = 1e-10) -> HydroFields:
    """Density, unwrapped phase and velocity of psi on the support mask.

    rho_floor is a fraction of max(rho).  The phase is unwrapped along x
    within each connected component of the mask, anchored at the component's
    density maximum; v = 2 phase_x by centered differences (one-sided at
    component edges).
    """
    g = psi.grid
    vals = psi.values
    rho = vals.real**2 + vals.imag**2
    floor = rho_floor * float(np.max(rho))
    mask = rho >= floor
    comps = _connected_components(mask)
    if not comps:
        raise HydroError("support mask is empty (field below floor everywhere)")

    phase = np.full(g.n, np.nan)
    v = np.full(g.n, np.nan)
    raw = np.angle(vals)
    for seg in comps:
        anchor = seg[np.argmax(rho[seg])] - seg[0]
        ph = raw[seg].copy()
        # unwrap outward from the density maximum
        ph[anchor:] = np.unwrap(ph[anchor:])
        ph[: anchor + 1] = np.unwrap(ph[: anchor + 1][::-1])[::-1]
        phase[seg] = ph
        v[seg] = 2.0 * _derivative_in_window(ph, g.dx)
    return HydroFields(grid=g, rho=rho, phase=phase, v=v, support_mask=mask)


def quantum_potential(amplitude: RealField, rho_floor: float = 1e-10) -> RealField:
    """Q = -A_xx / A with A = |psi|, via the spectral second derivative.

    Reported on the support mask (A above sqrt(floor)); NaN elsewhere.
    """
    A = amplitude.values
    if np.any(A < 0):
        raise HydroError("amplitude must be nonnegative")
    g = amplitude.grid
    floor = np.sqrt(rho_floor) * float(np.max(A))
    mask = A >= floor
    d2A = spectral_derivative(A, g, 2)
    out = np.full(g.n, np.nan)
    out[mask] = -d2A[mask] / A[mask]
    return RealField(g, np.where(mask, out, 0.0))


def mass_current(psi: ComplexField) -> np.ndarray:
    """j = rho v = -i (psi* psi_x - psi psi_x*); smooth everywhere, no mask."""
    g = psi.grid
    dpsi = spectral_derivative(psi.values, g, 1)
    return 2.0 * np.imag(np.conj(psi.values) * dpsi)


def hydro_residuals(
    snapshots: list[tuple[float, ComplexField]],
    potential: PotentialSpec,
    lam: float,
    rho_floor: float = 1e-10,
) -> list[dict]:
    """Continuity and Euler residuals at interior snapshot times.

    Snapshots must be equally spaced in time; time derivatives are centered
    differences over the stored fields (never re-stepped).  Residual fields
    are NaN off the common mask; each entry reports the interior max norms.
    """
    if len(snapshots) < 3:
        raise HydroError("need at least 3 snapshots for centered time differences")
    times = np.array([t for t, _ in snapshots])
    dts = np.diff(times)
    if not np.allclose(dts, dts[0], rtol=1e-8):
        raise HydroError("snapshots must be equally spaced in time")
    dt = float(dts[0])

    g = snapshots[0][1].grid
    Vx = potential(g.x)
    hyd = [madelung(f, rho_floor) for _, f in snapshots]
    cur = [mass_current(f) for _, f in snapshots]

    out = []
    for i in range(1, len(snapshots) - 1):
        hm, h0, hp = hyd[i - 1], hyd[i], hyd[i + 1]
        mask = hm.support_mask & h0.support_mask & hp.support_mask
        if not np.any(mask):
            raise HydroError(f"mask empty at t={times[i]}")
        # erode the mask edges: one-sided stencils there are noisier
        mask = mask & np.roll(mask, 3) & np.roll(mask, -3)

        drho_dt = (hp.rho - hm.rho) / (2.0 * dt)
        r1 = drho_dt + _masked_gradient(cur[i], mask, g.dx)

        dv_dt = (hp.v - hm.v) / (2.0 * dt)
        A = np.sqrt(np.maximum(h0.rho, 0.0))
        d2A = spectral_derivative(A, g, 2)
        Q = np.where(mask, -d2A / np.where(mask, A, 1.0), 0.0)
        bracket = Vx + Q + lam * h0.rho
        r2 = 0.5 * dv_dt + 0.5 * h0.v * _masked_gradient(h0.v, mask, g.dx) \
            + _masked_gradient(bracket, mask, g.dx)

        r1 = np.where(mask, r1, np.nan)
        r2 = np.where(mask, r2, np.nan)
        out.append(
            {
                "t": float(times[i]),
                "r1": RealField(g, np.where(mask, r1, 0.0)),
                "r2": RealField(g, np.where(mask, r2, 0.0)),
                "mask": mask,
                "r1_max": float(np.nanmax(np.abs(r1))),
                "r2_max": float(np.nanmax(np.abs(r2))),
            }
        )
    return out


def _masked_gradient(values: np.ndarray, mask: np.ndarray, dx: float) -> np.ndarray:
    out = np.zeros_like(values, dtype=float)
    for seg in _connected_components(mask):
        out[seg] = _derivative_in_window(np.asarray(values[seg], dtype=float), dx)
    return out


def q_expansion_check(
    profile: SolitonProfile,
    chi: ComplexField,
    rho_floor: float = 1e-10,
) -> dict:
    """Error of the linear quantum-potential model against the exact Q.

    Exact: Q(S|1+chi|).  Linear model: -S''/S - (2 S'/S) Re(chi)_x - Re(chi)_xx.
    The difference is quadratic in chi; callers verify the order by halving
    the amplitude.
    """
    if np.max(np.abs(chi.values)) >= 0.3:
        raise HydroError("chi too large for the expansion check (need max|chi| < 0.3)")
    g = profile.grid
    S = profile.S.values
    A = S * np.abs(1.0 + chi.values)
    floor = np.sqrt(rho_floor) * float(np.max(A))
    mask = (A >= floor) & (np.abs(S) >= floor)
    if np.count_nonzero(mask) < 8:
        raise HydroError("mask too small for the expansion check")

    d2A = spectral_derivative(A, g, 2)
    Q_exact = -d2A[mask] / A[mask]

    re = np.real(chi.values)
    d_re = spectral_derivative(re, g, 1)
    d2_re = spectral_derivative(re, g, 2)
    d2S = spectral_derivative(S, g, 2)
    Q_model = (-d2S[mask] / S[mask]
               - 2.0 * spectral_derivative(S, g, 1)[mask] / S[mask] * d_re[mask]
               - d2_re[mask])

    err = Q_exact - Q_model
    return {
        "error_max": float(np.max(np.abs(err))),
        "error_l2": float(np.sqrt(g.dx * np.sum(err**2))),
        "n_mask": int(np.count_nonzero(mask)),
    }


@dataclass(frozen=True)
class BurgersParams:
    """Parameters of the closed-form outflow velocity.

    alpha is the dimensionless transition-curvature scale (|V''|/omega^2 at
    the band center), beta = 8/alpha the validity-boundary coefficient fixed
    by the constant-acceleration characteristic x - x_edge =
    (alpha eps^2 omega^2 / 2) t'(t - t'); epsilon is the oscillation
    amplitude and t0 = 1/(omega epsilon) the exit-time scale.
    """

    alpha: float
    beta: float
    omega: float
    epsilon: float
    delta: float

    def __post_init__(self):
        if self.epsilon <= 0 or self.omega <= 0:
            raise HydroError("epsilon and omega must be positive")

    @property
    def x_edge(self) -> float:
        return (1.0 + self.delta) / self.omega

    @property
    def t0(self) -> float:
        return 1.0 / (self.omega * self.epsilon)

    @classmethod
    def from_potential(cls, well: TruncatedWell, epsilon: float) -> "BurgersParams":
        """alpha from the transition curvature fit, never hand-tuned."""
        a0, b0 = transition_force_coefficients(well)
        x_c = (1.0 + well.delta / 2.0) / well.omega
        alpha = abs(a0 * x_c + b0)
        if alpha <= 0:
            raise HydroError("transition fit produced alpha = 0")
        return cls(alpha=alpha, beta=8.0 / alpha, omega=well.omega,
                   epsilon=epsilon, delta=well.delta)


def burgers_validity_bound(params: BurgersParams, x) -> np.ndarray:
    """t^2 must exceed this for a characteristic to have reached x."""
    dx_out = np.asarray(x, dtype=float) - params.x_edge
    return params.beta * dx_out / (params.epsilon**2 * params.omega**2)


def burgers_velocity(params: BurgersParams, x, t):
    """Closed-form outflow velocity at (x, t); zero before the first
    characteristic arrives.  x must lie at or beyond the transition exit."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(x < params.x_edge - 1e-12):
        raise HydroError(f"x inside the well: need x >= x_edge = {params.x_edge}")
    c = burgers_validity_bound(params, x)
    pref = 0.5 * params.alpha * params.epsilon**2 * params.omega**2
    with np.errstate(invalid="ignore"):
        disc = t**2 - c
        v = pref * (t - np.sqrt(np.where(disc > 0, disc, 0.0)))
    v = np.where(disc > 0, v, 0.0)
    if v.ndim == 0:
        return float(v)
    return v


def characteristic_exit_time(params: BurgersParams, x, t):
    """Smaller root t' of the constant-acceleration characteristic through
    (x, t); the returned root satisfies
    x - x_edge = (alpha eps^2 omega^2 / 2) t'(t - t') exactly."""
    c = burgers_validity_bound(params, x)
    disc = np.asarray(t, dtype=float) ** 2 - c
    if np.any(disc < 0):
        raise HydroError("no characteristic reaches (x, t): validity bound fails")
    return 0.5 * (t - np.sqrt(disc))


def suppression_timescale(params: BurgersParams) -> float:
    """sqrt(beta) / (epsilon sqrt(omega)): outflow stays negligible this long."""
    return float(np.sqrt(params.beta) / (params.epsilon * np.sqrt(params.omega)))
