"""Trap potentials: harmonic well, piecewise-harmonic truncated well, tabulated.

Conventions (m = 1/2 units): the harmonic trap is V(x) = omega^2 x^2 / 4 and
a classical particle in it oscillates at angular frequency omega.

The truncated well is harmonic up to |x| = 1/omega, inverted-harmonic over
the transition band |x| -/+ 1/omega <= delta/omega, harmonic again down to
zero at |x| = 2/omega, and identically zero outside.  As written branch by
branch the formula is discontinuous (it jumps by 1/4 at |x| = 1/omega);
with continuity_fix=True additive per-branch constants restore continuity
while leaving every local derivative unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid1D, RealField


class PotentialError(ValueError):
    pass


@dataclass(frozen=True)
class Harmonic:
    """V(x) = omega^2 x^2 / 4 + offset."""

    omega: float
    offset: float = 0.0

    def __call__(self, x):
        return self.omega**2 * np.asarray(x, dtype=float) ** 2 / 4.0 + self.offset

    def to_dict(self):
        return {"kind": "harmonic", "omega": self.omega, "offset": self.offset}


@dataclass(frozen=True)
class TruncatedWell:
    """Piecewise-harmonic well truncated to zero beyond |x| = 2/omega.

    delta sets the half-width delta/omega of the inverted-harmonic
    transition band centered on |x| = 1/omega.  cubic_coeff adds an optional
    c*omega^2*sgn(x)*(|x| - 1/omega)^3 correction inside the band (zero by
    default; the transition is then exactly inverted-harmonic).
    """

    omega: float
    delta: float
    continuity_fix: bool = True
    cubic_coeff: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise PotentialError(f"delta must lie in (0, 1), got {self.delta}")
        if self.omega <= 0:
            raise PotentialError("omega must be positive")

    @property
    def x_inner(self) -> float:
        return 1.0 / self.omega

    @property
    def x_edge(self) -> float:
        """Transition exit point (1 + delta)/omega."""
        return (1.0 + self.delta) / self.omega

    @property
    def x_outer(self) -> float:
        return 2.0 / self.omega

    def branch_constants(self) -> tuple[float, float]:
        """(inner, transition) additive constants; outer branches stay pinned at 0."""
        if not self.continuity_fix:
            return 0.0, 0.0
        de = self.delta
        cub = self.cubic_coeff * self.omega**2 * (de / self.omega) ** 3
        c_tr = ((1.0 - de) ** 2 + de**2) / 4.0 - cub
        c_in = c_tr - 0.25
        return c_in, c_tr

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        om = self.omega
        c_in, c_tr = self.branch_constants()
        u = ax - self.x_inner
        inner = om**2 * x**2 / 4.0 + c_in
        trans = -(om**2 / 4.0) * u**2 + self.cubic_coeff * om**2 * u**3 + c_tr
        outer = om**2 * (ax - self.x_outer) ** 2 / 4.0
        v = np.where(
            ax <= self.x_inner,
            inner,
            np.where(ax <= self.x_edge, trans, np.where(ax <= self.x_outer, outer, 0.0)),
        )
        return v + self.offset

    def to_dict(self):
        return {
            "kind": "truncated_well",
            "omega": self.omega,
            "delta": self.delta,
            "continuity_fix": self.continuity_fix,
            "cubic_coeff": self.cubic_coeff,
            "offset": self.offset,
        }


@dataclass(frozen=True)
class Tabulated:
    """Potential given by samples on a grid; evaluated by linear interpolation."""

    table: RealField = field(repr=False)
    offset: float = 0.0

    def __call__(self, x):
        g = self.table.grid
        return np.interp(np.asarray(x, dtype=float), g.x, self.table.values) + self.offset

    def to_dict(self):
        g = self.table.grid
        return {
            "kind": "tabulated",
            "n": g.n,
            "x_min": g.x_min,
            "x_max": g.x_max,
            "values": self.table.values.tolist(),
            "offset": self.offset,
        }


PotentialSpec = Harmonic | TruncatedWell | Tabulated


def from_dict(d: dict) -> PotentialSpec:
    kind = d.get("kind")
    if kind == "harmonic":
        return Harmonic(omega=float(d["omega"]), offset=float(d.get("offset", 0.0)))
    if kind == "truncated_well":
        return TruncatedWell(
            omega=float(d["omega"]),
            delta=float(d["delta"]),
            continuity_fix=bool(d.get("continuity_fix", True)),
            cubic_coeff=float(d.get("cubic_coeff", 0.0)),
            offset=float(d.get("offset", 0.0)),
        )
    if kind == "tabulated":
        grid = Grid1D(int(d["n"]), float(d["x_min"]), float(d["x_max"]))
        return Tabulated(RealField(grid, np.asarray(d["values"], dtype=float)),
                         offset=float(d.get("offset", 0.0)))
    raise PotentialError(f"unknown potential kind {kind!r}")


def _require_coverage(spec, grid: Grid1D):
    if isinstance(spec, TruncatedWell):
        margin = 2.0 * grid.dx
        if grid.x_min > -spec.x_outer - margin or grid.x_max < spec.x_outer + margin:
            raise PotentialError(
                f"grid [{grid.x_min}, {grid.x_max}] does not cover the well support "
                f"[-{spec.x_outer}, {spec.x_outer}]"
            )


def evaluate(spec: PotentialSpec, grid: Grid1D) -> RealField:
    """Sample the potential on the grid."""
    _require_coverage(spec, grid)
    return RealField(grid, spec(grid.x))


def shifted_difference(spec: PotentialSpec, X: float, grid: Grid1D) -> RealField:
    """W(x) = V(x) - V(x - X) sampled on the grid."""
    _require_coverage(spec, grid)
    x = grid.x
    return RealField(grid, spec(x) - spec(x - X))


def transition_force_coefficients(
    spec: PotentialSpec,
    center: float | None = None,
    half_width: float | None = None,
    n_samples: int = 65,
    residual_tol: float = 1e-3,
) -> tuple[float, float]:
    """Affine coefficients (alpha0, beta0) of the transition-band curvature.

    The shifted difference of a locally quadratic potential obeys
    V(x) - V(x-X) = V'(x) X - alpha(x) omega^2 X^2 + O(X^3) with
    alpha(x) = V''(x)/omega^2 (so a pure harmonic branch gives alpha = 1/2).
    alpha(x) is extracted from Richardson-combined symmetric second
    differences of V and least-squares fitted to alpha0*x + beta0 over the
    transition band.  Raises if the affine fit leaves a large residual
    (potential not locally quadratic-plus-cubic there).
    """
    if isinstance(spec, Harmonic):
        omega = spec.omega
        if center is None:
            center = 1.0 / omega
        if half_width is None:
            half_width = 0.1 / omega
    elif isinstance(spec, TruncatedWell):
        omega = spec.omega
        if center is None:
            center = (1.0 + spec.delta / 2.0) / omega
        if half_width is None:
            half_width = 0.8 * (spec.delta / 2.0) / omega
    else:
        raise PotentialError("transition fit needs an analytic potential variant")

    xs = np.linspace(center - half_width, center + half_width, n_samples)
    h = half_width / 64.0
    d2_h = (spec(xs + h) - 2.0 * spec(xs) + spec(xs - h)) / h**2
    d2_h2 = (spec(xs + h / 2) - 2.0 * spec(xs) + spec(xs - h / 2)) / (h / 2) ** 2
    alpha_x = (4.0 * d2_h2 - d2_h) / 3.0 / omega**2

    A = np.vstack([xs, np.ones_like(xs)]).T
    coef, *_ = np.linalg.lstsq(A, alpha_x, rcond=None)
    fit_residual = float(np.max(np.abs(A @ coef - alpha_x)))
    scale = max(1.0, float(np.max(np.abs(alpha_x))))
    if fit_residual > residual_tol * scale:
        raise PotentialError(
            f"transition curvature is not affine: fit residual {fit_residual:.3e}"
        )
    return float(coef[0]), float(coef[1])
