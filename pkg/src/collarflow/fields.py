"""Maps from the collar cylinder into flat tori and round spheres.

Discrete maps are node-sampled vector fields on a CollarGrid.  The
derivative stencils are chosen so the algebra downstream (Hopf
differentials, energy identities, length evolution) is exact on the
model maps used throughout the tests:

  * theta is periodic, so theta derivatives are central everywhere,
    with torus increments reduced modulo the periods; winding maps such
    as u = (a theta, 0) differentiate exactly across the seam,
  * s derivatives are central in the interior and one-sided second
    order on the two boundary rows, hence exact on fields linear in s.

Energies are reported in the conformal picture: the coordinate energy
E = 1/2 int |du|^2 ds dtheta is invariant under the conformal factor,
while the weighted quantities (I, I_theta, the cutoff variant) carry
explicit rho^-2 weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from collarflow.geometry import CollarGrid, DomainError

# cutoff scale for the smoothed weighted energy: the cutoff is 1 where
# rho <= _CUTOFF_DELTA and falls to 0 at 2 * _CUTOFF_DELTA
_CUTOFF_DELTA = 1.0 / (2.0 * math.pi)


@dataclass(frozen=True)
class TargetSpec:
    """Target manifold: a flat torus R^d / (periods Z^d) or the round unit sphere.

    kind is "flat-torus" or "round-sphere".  For the torus, periods holds
    one period per component; increments between nearby samples are
    reduced to the nearest representative so winding maps differentiate
    cleanly.  For the sphere, dim is the ambient dimension and values
    are unit vectors.
    """

    kind: str
    dim: int
    periods: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("flat-torus", "round-sphere"):
            raise DomainError(f"unknown target kind {self.kind!r}")
        if self.kind == "flat-torus":
            if self.periods is None or len(self.periods) != self.dim:
                raise DomainError("flat torus needs one period per component")
            if any(p <= 0 for p in self.periods):
                raise DomainError("torus periods must be positive")
        elif self.periods is not None:
            raise DomainError("sphere target takes no periods")

    @staticmethod
    def flat_torus(dim: int = 1, periods=None) -> "TargetSpec":
        if periods is None:
            periods = (2.0 * math.pi,) * dim
        return TargetSpec("flat-torus", dim, tuple(float(p) for p in periods))

    @staticmethod
    def round_sphere(dim: int = 3) -> "TargetSpec":
        if dim < 2:
            raise DomainError("sphere ambient dimension must be >= 2")
        return TargetSpec("round-sphere", dim)

    def wrap_increment(self, d: np.ndarray) -> np.ndarray:
        """Reduce component increments to the nearest torus representative."""
        if self.kind != "flat-torus":
            return d
        p = np.asarray(self.periods)
        return d - p * np.round(d / p)

    def second_fundamental_form(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """A(u)(v, v); zero on the torus, -|v|^2 u on the unit sphere.

        Radial at u in the sphere case, so it drops out of the
        tangentially projected tension; it is kept explicit for use in
        audits of the raw second-order operator.
        """
        if self.kind == "flat-torus":
            return np.zeros_like(v)
        return -np.sum(v * v, axis=-1, keepdims=True) * u

    def project(self, values: np.ndarray) -> np.ndarray:
        """Closest-point projection onto the target."""
        if self.kind == "flat-torus":
            return values
        norms = np.linalg.norm(values, axis=-1, keepdims=True)
        if np.any(norms == 0.0):
            raise DomainError("cannot project the zero vector onto the sphere")
        return values / norms

    def tangential(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Project w onto the tangent space of the target at u."""
        if self.kind == "flat-torus":
            return w
        return w - np.sum(w * u, axis=-1, keepdims=True) * u


@dataclass
class MapField:
    """Node-sampled map u: grid -> target, values of shape (n_s, n_theta, dim)."""

    grid: CollarGrid
    values: np.ndarray
    target: TargetSpec

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.n_s, self.grid.n_theta, self.target.dim)
        if self.values.shape != expected:
            raise DomainError(f"values shape {self.values.shape} != {expected}")
        if not np.isfinite(self.values).all():
            raise DomainError("map values must be finite")
        if self.target.kind == "round-sphere":
            norms = np.linalg.norm(self.values, axis=-1)
            if np.max(np.abs(norms - 1.0)) > 1e-9:
                raise DomainError("sphere map values must be unit vectors")

    def copy(self) -> "MapField":
        return MapField(self.grid, self.values.copy(), self.target)


def sample_map(grid: CollarGrid, target: TargetSpec, fn) -> MapField:
    """Build a MapField by sampling fn(s, theta) -> dim-vector on the grid."""
    S, T = np.meshgrid(grid.s_nodes, grid.theta_nodes, indexing="ij")
    vals = np.asarray(fn(S, T), dtype=float)
    if vals.shape[:2] != (grid.n_s, grid.n_theta):
        vals = np.moveaxis(vals, 0, -1)
    if target.kind == "round-sphere":
        vals = target.project(vals)
    return MapField(grid, vals, target)


@dataclass
class MapJet:
    """First derivatives of a map at the grid nodes."""

    u_s: np.ndarray
    u_theta: np.ndarray


def _forward_diffs_s(values: np.ndarray, target: TargetSpec) -> np.ndarray:
    return target.wrap_increment(values[1:] - values[:-1])


def _forward_diffs_theta(values: np.ndarray, target: TargetSpec) -> np.ndarray:
    return target.wrap_increment(np.roll(values, -1, axis=1) - values)


def jet(u: MapField) -> MapJet:
    """First derivatives: central interior / one-sided second order in s,
    periodic central in theta, all through wrapped increments."""
    grid, target = u.grid, u.target
    if grid.stretch != "uniform":
        raise DomainError("derivative stencils require a uniform grid")
    h_s, h_t = grid.h_s, grid.h_theta
    v = u.values

    D = _forward_diffs_s(v, target)  # (n_s-1, n_theta, d)
    u_s = np.empty_like(v)
    u_s[1:-1] = (D[1:] + D[:-1]) / (2.0 * h_s)
    u_s[0] = (3.0 * D[0] - D[1]) / (2.0 * h_s)
    u_s[-1] = (3.0 * D[-1] - D[-2]) / (2.0 * h_s)

    Dt = _forward_diffs_theta(v, target)  # periodic
    u_theta = (Dt + np.roll(Dt, 1, axis=1)) / (2.0 * h_t)
    return MapJet(u_s=u_s, u_theta=u_theta)


def _second_derivatives(u: MapField):
    """(u_ss, u_thth) with one-sided second-order s rows, periodic theta."""
    grid, target = u.grid, u.target
    h_s, h_t = grid.h_s, grid.h_theta
    v = u.values

    D = _forward_diffs_s(v, target)
    u_ss = np.empty_like(v)
    u_ss[1:-1] = (D[1:] - D[:-1]) / h_s**2
    u_ss[0] = (-2.0 * D[0] + 3.0 * D[1] - D[2]) / h_s**2
    u_ss[-1] = (-2.0 * D[-1] + 3.0 * D[-2] - D[-3]) / h_s**2

    Dt = _forward_diffs_theta(v, target)
    u_thth = (Dt - np.roll(Dt, 1, axis=1)) / h_t**2
    return u_ss, u_thth


def tension(u: MapField, target: TargetSpec | None = None,
            grid: CollarGrid | None = None) -> np.ndarray:
    """Tension field tau_g(u) = rho^-2 P_tan(u_ss + u_thth + A(u)(u_s,u_s) + A(u)(u_th,u_th)).

    The final tangential projection makes the result tangent to the
    target at u by construction (the sphere's second fundamental form is
    radial, so only the projected Laplacian survives); on the flat torus
    the projection and A are trivial.  Returns an array of shape
    (n_s, n_theta, dim).
    """
    target = target or u.target
    grid = grid or u.grid
    if target is not u.target and target != u.target:
        raise DomainError("tension target must match the map's target")
    u_ss, u_thth = _second_derivatives(u)
    J = jet(u)
    raw = (u_ss + u_thth
           + target.second_fundamental_form(u.values, J.u_s)
           + target.second_fundamental_form(u.values, J.u_theta))
    flat = target.tangential(u.values, raw)
    return grid.rho_inv_sq[:, None, None] * flat


def tension_l2(u: MapField, tau: np.ndarray | None = None) -> float:
    """||tau_g(u)||_{L^2} in the hyperbolic metric.

    |tau_g|^2 dv = rho^-2 |tau_flat|^2 ds dtheta, i.e. the norm of
    rho tau_g against the flat measure.
    """
    if tau is None:
        tau = tension(u)
    grid = u.grid
    dens = np.sum(tau * tau, axis=-1) * grid.rho_sq[:, None]  # |tau_g|^2 rho^2
    return math.sqrt(grid.integrate_flat(dens))


def smooth_cutoff(rho: np.ndarray, delta: float = _CUTOFF_DELTA) -> np.ndarray:
    """Quintic-smoothstep cutoff: 1 for rho <= delta, 0 for rho >= 2 delta.

    The quintic ramp keeps |phi'| <= 15/(8 delta) < 2/delta.
    """
    x = np.clip((np.asarray(rho) - delta) / delta, 0.0, 1.0)
    return 1.0 - x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


@dataclass(frozen=True)
class EnergyReport:
    """Energy functionals of a map in one sweep.

    E         coordinate (conformal) energy 1/2 int |du|^2 ds dtheta
    I         rho^-2-weighted energy
    I_theta   rho^-2-weighted angular energy int rho^-2 |u_theta|^2
    I_smooth  cutoff-weighted variant of I (cutoff on the conformal factor)
    sup_density  max of the weighted energy density e = 1/2 |du|^2 rho^-2
    reg_diag  int (|D^2 u|^2 + |du|^4) over the unit subcylinder at s = 0
    """

    E: float
    I: float
    I_theta: float
    I_smooth: float
    sup_density: float
    reg_diag: float


def energies(u: MapField, jet_: MapJet | None = None,
             cutoff_delta: float = _CUTOFF_DELTA) -> EnergyReport:
    grid = u.grid
    J = jet_ or jet(u)
    e_flat = 0.5 * (np.sum(J.u_s**2, axis=-1) + np.sum(J.u_theta**2, axis=-1))
    w_inv = grid.rho_inv_sq[:, None]

    E = grid.integrate_flat(e_flat)
    I = grid.integrate_flat(e_flat * w_inv)
    I_theta = grid.integrate_flat(np.sum(J.u_theta**2, axis=-1) * w_inv)
    phi = smooth_cutoff(grid.rho, cutoff_delta)[:, None]
    I_smooth = grid.integrate_flat(e_flat * w_inv * phi**2)
    sup_density = float(np.max(e_flat * w_inv))

    u_ss, u_thth = _second_derivatives(u)
    # mixed derivative: theta-central of u_s
    Dt = (np.roll(J.u_s, -1, axis=1) - np.roll(J.u_s, 1, axis=1)) / (2.0 * grid.h_theta)
    hess_sq = (np.sum(u_ss**2, axis=-1) + 2.0 * np.sum(Dt**2, axis=-1)
               + np.sum(u_thth**2, axis=-1))
    window = np.abs(grid.s_nodes) < 1.0
    integrand = (hess_sq + (2.0 * e_flat)**2) * window[:, None]
    reg_diag = grid.integrate_flat(integrand)

    return EnergyReport(E=E, I=I, I_theta=I_theta, I_smooth=I_smooth,
                        sup_density=sup_density, reg_diag=reg_diag)


def _bump(x: np.ndarray) -> np.ndarray:
    """Squared-cosine bump: 1 on [-1/2, 1/2], supported in (-1, 1), C^1 ramps."""
    ax = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(ax)
    out[ax <= 0.5] = 1.0
    ramp = (ax > 0.5) & (ax < 1.0)
    out[ramp] = np.cos(math.pi * (ax[ramp] - 0.5)) ** 2
    return out


def theta_profile(u: MapField, s0: float, jet_: MapJet | None = None) -> float:
    """Windowed angular energy Theta(s0) = int bump^4(s - s0) |u_theta|^2.

    The window is 1 on [s0 - 1/2, s0 + 1/2] and supported in
    (s0 - 1, s0 + 1), so Theta is sandwiched between the angular energy
    of those two bands and never exceeds twice the total energy.
    """
    grid = u.grid
    if abs(s0) > grid.s_max - 1.0:
        raise DomainError(f"profile window at s0 = {s0} leaves the grid")
    J = jet_ or jet(u)
    w = _bump(grid.s_nodes - s0) ** 4
    dens = np.sum(J.u_theta**2, axis=-1) * w[:, None]
    return grid.integrate_flat(dens)
