"""Arc length of the collar family toward the pinch.

Moving the collar metric in its conformal family at unit speed with
respect to the quadratic-differential pairing, the core length obeys

    d ell / d s = -(8 pi^2 / ell) / ||dz^2||_{L^2(ell)},

so the distance from core length ell0 to the pinch (ell -> 0) is the
integral of the reciprocal speed.  In the substitution m = sqrt(ell)
the integrand becomes sqrt(g(m^2)) / (4 pi^2) with

    g(ell) = ell^3 ||dz^2||^2
           = 32 pi^3 * ell X(ell) + 64 pi^4 sinh(ell/2) / cosh^2(ell/2),

which is smooth through the pinch: g(0) = 32 pi^5 and g is strictly
decreasing (g' = -64 pi^4 sinh^2 / cosh^3), so the integrand never
exceeds sqrt(2 pi) and the total distance is finite, below
sqrt(2 pi ell0).  The shortfall starts at cubic order,
dist = sqrt(2 pi ell0) (1 - ell0^3 / (84 pi) + O(ell0^5)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from collarflow.geometry import ELL_MAX, DomainError, dz2_norms

G_AT_PINCH = 32.0 * math.pi**5


def speed_normalizer(ell):
    """g(ell) = ell^3 ||dz^2||_L2^2 in a form with no cancellation at 0.

    ell * X(ell) is expanded to 2 pi (pi/2 - arctan sinh(ell/2)), which
    stays finite and smooth as ell -> 0; accepts scalars or arrays with
    entries in [0, 2 arsinh 1].
    """
    ell = np.asarray(ell, dtype=float)
    if np.any(ell < 0) or np.any(ell > ELL_MAX):
        raise DomainError("need 0 <= ell <= 2 arsinh 1")
    half = np.sinh(ell / 2.0)
    ell_x = 2.0 * math.pi * (math.pi / 2.0 - np.arctan(half))
    out = 32.0 * math.pi**3 * ell_x \
        + 64.0 * math.pi**4 * half / np.cosh(ell / 2.0) ** 2
    return float(out) if out.ndim == 0 else out


def pinch_speed(ell):
    """d ell / d s along the unit-speed family, always negative.

    Tends to -sqrt(2 ell / pi) at the pinch; computed from the L^2 norm
    of dz^2 so it agrees with the quadrature route used elsewhere.
    """
    ell_arr = np.asarray(ell, dtype=float)
    if np.any(ell_arr <= 0) or np.any(ell_arr >= ELL_MAX):
        raise DomainError("need 0 < ell < 2 arsinh 1")
    out = -(8.0 * math.pi**2 / ell_arr) / np.sqrt(
        np.vectorize(lambda l: dz2_norms(l).l2_sq)(ell_arr))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WPPath:
    """Sampled distance-to-pinch along decreasing core lengths."""

    ell: np.ndarray        # strictly decreasing, ell[0] = starting length
    distance: np.ndarray   # remaining distance to the pinch at each ell
    total: float           # distance[0]

    def __post_init__(self):
        e = np.asarray(self.ell, dtype=float)
        d = np.asarray(self.distance, dtype=float)
        object.__setattr__(self, "ell", e)
        object.__setattr__(self, "distance", d)
        if e.shape != d.shape or e.ndim != 1 or e.size < 2:
            raise DomainError("path needs matching 1-d samples")
        if not np.all(np.diff(e) < 0):
            raise DomainError("core length samples must strictly decrease")
        if not np.all(np.diff(d) < 0) or d[-1] < 0:
            raise DomainError("distance samples must strictly decrease to 0")


def integrate_to_pinch(ell0: float, tol: float = 1e-10,
                       n_samples: int = 200) -> WPPath:
    """Distance from core length ell0 to the pinch, with a sampled path.

    Integrates d s / d m = sqrt(g(m^2)) / (4 pi^2) from the pinch m = 0
    up to m = sqrt(ell0) (adaptive RK45, tolerance tol); the integrand
    is smooth on the closed interval, so the pinch end needs no special
    treatment.
    """
    if not 0.0 < ell0 < ELL_MAX:
        raise DomainError("need 0 < ell0 < 2 arsinh 1")
    if n_samples < 2:
        raise DomainError("need at least 2 path samples")
    m0 = math.sqrt(ell0)
    m_eval = np.linspace(0.0, m0, n_samples)
    sol = solve_ivp(
        lambda m, s: [math.sqrt(speed_normalizer(m * m)) / (4.0 * math.pi**2)],
        (0.0, m0), [0.0], method="RK45", rtol=tol, atol=tol * 1e-2,
        t_eval=m_eval, dense_output=False)
    if not sol.success:
        raise DomainError(f"distance integration failed: {sol.message}")
    dist = sol.y[0]
    # path runs from ell0 down to the pinch
    return WPPath(ell=m_eval[::-1].copy() ** 2, distance=dist[::-1].copy(),
                  total=float(dist[-1]))


def rk4_distance(ell0: float, n_steps: int) -> float:
    """Fixed-step classical RK4 for the same integral, for order audits."""
    if not 0.0 < ell0 < ELL_MAX:
        raise DomainError("need 0 < ell0 < 2 arsinh 1")
    h = math.sqrt(ell0) / n_steps
    rate = lambda m: math.sqrt(speed_normalizer(m * m)) / (4.0 * math.pi**2)
    s = 0.0
    for k in range(n_steps):
        m = k * h
        k1 = rate(m)
        k2 = rate(m + 0.5 * h)
        k3 = k2  # the rate has no s dependence, the two midpoint stages agree
        k4 = rate(m + h)
        s += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return s


@dataclass(frozen=True)
class CorrectionFit:
    """Least-squares cubic/quintic fit of the distance shortfall."""

    c3: float
    c5: float
    max_rel_residual: float
    condition: float


def correction_coefficient(ell_list, dists=None, tol: float = 1e-11) -> CorrectionFit:
    """Fit 1 - dist / sqrt(2 pi ell) = c3 ell^3 + c5 ell^5 over sample lengths.

    Needs at least three well-separated lengths; the distances are
    integrated on demand when not supplied.  An ill-conditioned design
    matrix (clustered or out-of-range lengths) is rejected rather than
    silently fitted.
    """
    ells = np.asarray(ell_list, dtype=float)
    if ells.ndim != 1 or ells.size < 3:
        raise DomainError("need at least 3 sample lengths")
    if np.any(ells <= 0) or np.any(ells >= ELL_MAX):
        raise DomainError("sample lengths must sit in (0, 2 arsinh 1)")
    spread = np.max(ells) - np.min(ells)
    if spread <= 0 or np.min(np.diff(np.sort(ells))) < 0.05 * spread:
        raise DomainError("sample lengths must be well separated")
    if dists is None:
        dists = np.array([integrate_to_pinch(l, tol=tol).total for l in ells])
    else:
        dists = np.asarray(dists, dtype=float)
        if dists.shape != ells.shape:
            raise DomainError("distances must match the sample lengths")
    shortfall = 1.0 - dists / np.sqrt(2.0 * math.pi * ells)
    design = np.stack([ells**3, ells**5], axis=1)
    scale = np.max(design, axis=0)
    coeffs, *_ = np.linalg.lstsq(design / scale, shortfall, rcond=None)
    coeffs = coeffs / scale
    cond = float(np.linalg.cond(design / scale))
    if cond > 1e8:
        raise DomainError(f"fit design matrix ill-conditioned ({cond:.2e})")
    resid = design @ coeffs - shortfall
    max_rel = float(np.max(np.abs(resid)) / np.max(np.abs(shortfall)))
    return CorrectionFit(c3=float(coeffs[0]), c5=float(coeffs[1]),
                         max_rel_residual=max_rel, condition=cond)
