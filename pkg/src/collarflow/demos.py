"""Shipped demonstration runs and initial-field builders.

Three runs cover the three terminal behaviours: a wrapped circle map
whose constant Hopf differential pushes the core length up
("wrap", completes), a radial stretch whose Hopf differential drains
the length to the floor ("pinch"), and a length-frozen sinusoidal
relaxation ("relax", completes with decreasing energy).
"""

from __future__ import annotations

import math

import numpy as np

from collarflow.geometry import CollarGrid, DomainError
from collarflow.fields import MapField, TargetSpec, sample_map
from collarflow.flow import FlowConfig, FlowTrace, run, stability_limit


def build_initial(config: FlowConfig, spec: dict) -> np.ndarray:
    """Initial node values from a small declarative recipe.

    Kinds: "wrap" (theta winding, scale a), "radial" (u = b s per
    component), "theta-modes" (sum of a_n sin(n theta) profiles with a
    gaussian envelope in s), "sphere-equator" (equatorial winding,
    optional transverse tilt eps).
    """
    grid = config.grid_at(config.ell0)
    target = config.target
    kind = spec.get("kind")
    known = {"wrap", "radial", "theta-modes", "sphere-equator"}
    if kind not in known:
        raise DomainError(f"unknown initial kind {kind!r} (one of {sorted(known)})")

    if kind == "wrap":
        a = float(spec.get("a", 1.0))
        u = sample_map(grid, target, lambda s, t: np.stack(
            [a * t] + [np.zeros_like(t)] * (target.dim - 1), axis=-1))
        return u.values
    if kind == "radial":
        b = float(spec.get("b", 1.0))
        u = sample_map(grid, target, lambda s, t: np.stack(
            [b * s] + [np.zeros_like(s)] * (target.dim - 1), axis=-1))
        return u.values
    if kind == "theta-modes":
        amps = spec.get("amplitudes", [0.3])
        width = float(spec.get("width", 0.5)) * grid.s_max
        vals = np.zeros((grid.n_s, grid.n_theta, target.dim))
        env = np.exp(-0.5 * (grid.s_nodes / width) ** 2)
        for n, a_n in enumerate(amps, start=1):
            comp = (n - 1) % target.dim
            vals[:, :, comp] += a_n * env[:, None] \
                * np.sin(n * grid.theta_nodes)[None, :]
        return vals
    # sphere-equator
    if target.kind != "round-sphere":
        raise DomainError("sphere-equator initial data needs a sphere target")
    eps = float(spec.get("eps", 0.0))
    u = sample_map(grid, target, lambda s, t: np.stack(
        [np.cos(t), np.sin(t), eps * np.tanh(s) * np.ones_like(t)], axis=-1))
    return target.project(u.values)


def _demo_wrap() -> tuple[FlowConfig, dict]:
    n_s, n_theta, floor, ell_max = 48, 12, 0.2, 0.6
    s_max = CollarGrid(ell_max, 4, 4).s_max
    dt = 0.8 * stability_limit(floor, n_s, n_theta, s_max)
    cfg = FlowConfig(ell0=0.25, eta=0.5, dt=dt, t_end=150 * dt, n_s=n_s,
                     n_theta=n_theta, ell_max=ell_max, ell_floor=floor,
                     target=TargetSpec.flat_torus(dim=1), stride=5)
    return cfg, {"kind": "wrap", "a": 1.0}


def _demo_pinch() -> tuple[FlowConfig, dict]:
    n_s, n_theta, floor = 40, 8, 0.05
    ell0, eta, b = 0.15, 0.6, 0.8
    s_max = CollarGrid(ell0, 4, 4).s_max
    dt = 0.8 * stability_limit(floor, n_s, n_theta, s_max)
    t_hit = (ell0**2 - floor**2) / (math.pi**2 * eta**2 * b**2)
    cfg = FlowConfig(ell0=ell0, eta=eta, dt=dt, t_end=2.0 * t_hit, n_s=n_s,
                     n_theta=n_theta, ell_floor=floor,
                     target=TargetSpec.flat_torus(dim=1), stride=10)
    return cfg, {"kind": "radial", "b": b}


def _demo_relax() -> tuple[FlowConfig, dict]:
    n_s, n_theta, floor = 64, 16, 0.18
    ell0 = 0.2
    s_max = CollarGrid(ell0, 4, 4).s_max
    dt = 0.5 * stability_limit(floor, n_s, n_theta, s_max)
    cfg = FlowConfig(ell0=ell0, eta=0.0, dt=dt, t_end=200 * dt, n_s=n_s,
                     n_theta=n_theta, ell_floor=floor,
                     target=TargetSpec.flat_torus(dim=2), stride=4)
    return cfg, {"kind": "theta-modes", "amplitudes": [0.3, 0.15, 0.1]}


DEMOS = {"wrap": _demo_wrap, "pinch": _demo_pinch, "relax": _demo_relax}


def demo_config(name: str) -> tuple[FlowConfig, dict]:
    if name not in DEMOS:
        raise DomainError(f"unknown demo {name!r} (one of {sorted(DEMOS)})")
    return DEMOS[name]()


def run_demo(name: str) -> FlowTrace:
    cfg, init = demo_config(name)
    return run(cfg, build_initial(cfg, init))
