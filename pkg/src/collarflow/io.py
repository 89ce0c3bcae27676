"""Serialization: deterministic CSV/JSON writers and strict config parsing.

Numbers are written with 17 significant digits so a round trip through
text reproduces the exact float64 values.  CSV files carry provenance
as leading comment lines; JSON files carry it as a "provenance" object.
Writers emit byte-identical output for identical inputs: keys are
sorted, line endings are always "\\n", and nothing derived from wall
time is included.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict
from pathlib import Path

import numpy as np

from collarflow import __version__
from collarflow.geometry import DomainError
from collarflow.fields import TargetSpec
from collarflow.flow import TRACE_COLUMNS, FlowConfig, FlowTrace

FLOAT_FMT = "%.17g"
COMMENT_PREFIX = "# "


def _format_value(x) -> str:
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    return str(x)


def write_csv(path, columns: dict, provenance: dict | None = None) -> None:
    """Write named columns with an exact-width float format.

    Column order follows the dict; all columns must share one length.
    Provenance entries become sorted leading comment lines.
    """
    names = list(columns)
    if not names:
        raise DomainError("csv needs at least one column")
    arrays = [np.asarray(columns[n]) for n in names]
    n_rows = arrays[0].shape[0]
    if any(a.ndim != 1 or a.shape[0] != n_rows for a in arrays):
        raise DomainError("csv columns must be 1-d and equal length")
    lines = []
    for key in sorted(provenance or {}):
        lines.append(f"{COMMENT_PREFIX}{key}: {_format_value((provenance or {})[key])}")
    lines.append(",".join(names))
    for i in range(n_rows):
        lines.append(",".join(_format_value(a[i]) for a in arrays))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path) -> tuple[dict, dict]:
    """Read a csv written by write_csv: (columns, provenance)."""
    provenance = {}
    header = None
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith(COMMENT_PREFIX.rstrip()):
            body = line[len(COMMENT_PREFIX):] if line.startswith(COMMENT_PREFIX) \
                else line.lstrip("#")
            if ": " in body:
                key, val = body.split(": ", 1)
                provenance[key] = val
            continue
        if header is None:
            header = line.split(",")
            continue
        if line:
            rows.append([float(v) for v in line.split(",")])
    if header is None:
        raise DomainError(f"{path}: no header line")
    data = np.array(rows) if rows else np.zeros((0, len(header)))
    return {name: data[:, j] for j, name in enumerate(header)}, provenance


def write_json(path, payload: dict, provenance: dict | None = None) -> None:
    """Deterministic JSON: sorted keys, '\\n' ending, provenance object."""
    doc = dict(payload)
    if provenance is not None:
        doc["provenance"] = {k: provenance[k] for k in sorted(provenance)}
    Path(path).write_text(
        json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n",
        encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


_TARGET_KEYS = {"kind", "dim", "periods"}
_CONFIG_KEYS = {"ell0", "eta", "dt", "t_end", "n_s", "n_theta", "target",
                "ell_max", "ell_floor", "s_max", "stepper", "stride",
                "blowup_sup_density"}


def target_to_dict(target: TargetSpec) -> dict:
    d = {"kind": target.kind, "dim": target.dim}
    if target.periods is not None:
        d["periods"] = list(target.periods)
    return d


def target_from_dict(d: dict) -> TargetSpec:
    unknown = set(d) - _TARGET_KEYS
    if unknown:
        raise DomainError(f"unknown target keys: {sorted(unknown)}")
    if "kind" not in d:
        raise DomainError("target needs a 'kind'")
    kind = d["kind"]
    if kind == "flat-torus":
        periods = tuple(d["periods"]) if "periods" in d else None
        return TargetSpec.flat_torus(dim=d.get("dim", 1), periods=periods)
    if kind == "round-sphere":
        if "periods" in d:
            raise DomainError("round-sphere target takes no periods")
        return TargetSpec.round_sphere(dim=d.get("dim", 3))
    raise DomainError(f"unknown target kind {kind!r}")


def config_to_dict(config: FlowConfig) -> dict:
    d = asdict(config)
    d["target"] = target_to_dict(config.target)
    return d


def config_from_dict(d: dict) -> FlowConfig:
    """Strict parse: unknown keys are errors, nothing is silently dropped."""
    unknown = set(d) - _CONFIG_KEYS
    if unknown:
        raise DomainError(f"unknown config keys: {sorted(unknown)}")
    missing = {"ell0", "eta", "dt", "t_end", "n_s", "n_theta", "target"} - set(d)
    if missing:
        raise DomainError(f"config missing keys: {sorted(missing)}")
    kwargs = {k: v for k, v in d.items() if k != "target"}
    return FlowConfig(target=target_from_dict(d["target"]), **kwargs)


def config_digest(config: FlowConfig) -> str:
    """sha256 of the canonical JSON form, for provenance lines."""
    canon = json.dumps(config_to_dict(config), sort_keys=True,
                       separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def provenance_for(config: FlowConfig | None = None,
                   seed: int | None = None, **extra) -> dict:
    prov = {"version": __version__,
            "threads": os.environ.get("COLLARFLOW_THREADS", "1")}
    if config is not None:
        prov["config_sha256"] = config_digest(config)
    if seed is not None:
        prov["seed"] = seed
    prov.update(extra)
    return prov


def trace_to_csv(trace: FlowTrace, path, provenance: dict | None = None) -> None:
    """Write a flow trace with the canonical column order."""
    columns = {name: trace[name] for name in TRACE_COLUMNS}
    prov = provenance_for(trace.config)
    prov["status"] = trace.status
    prov.update(provenance or {})
    write_csv(path, columns, prov)


def trace_summary(trace: FlowTrace) -> dict:
    """JSON-ready run summary: terminal state plus trace extrema."""
    return {
        "status": trace.status,
        "n_rows": trace.n_rows,
        "t_final": float(trace["t"][-1]),
        "ell_initial": float(trace["ell"][0]),
        "ell_final": float(trace["ell"][-1]),
        "energy_initial": float(trace["E"][0]),
        "energy_final": float(trace["E"][-1]),
        "tension_l2_final": float(trace["tension_l2"][-1]),
        "max_dE_residual": float(np.nanmax(np.abs(trace["dE_residual"])))
        if trace.n_rows > 1 else None,
    }


def _grid_header(grid) -> dict:
    return {"ell": grid.ell, "n_s": grid.n_s, "n_theta": grid.n_theta,
            "s_max": grid.s_max, "stretch": grid.stretch}


def _grid_from_header(d: dict):
    from collarflow.geometry import CollarGrid
    needed = {"ell", "n_s", "n_theta", "s_max"}
    missing = needed - set(d)
    if missing:
        raise DomainError(f"field header missing keys: {sorted(missing)}")
    return CollarGrid(d["ell"], d["n_s"], d["n_theta"], s_max=d["s_max"],
                      stretch=d.get("stretch", "uniform"))


def _node_columns(grid) -> dict:
    s = np.repeat(grid.s_nodes, grid.n_theta)
    theta = np.tile(grid.theta_nodes, grid.n_s)
    return {"s": s, "theta": theta}


def _check_nodes(grid, columns: dict, path) -> None:
    want = _node_columns(grid)
    for name in ("s", "theta"):
        if columns[name].shape != want[name].shape \
                or not np.allclose(columns[name], want[name], rtol=0, atol=1e-12):
            raise DomainError(f"{path}: node column {name!r} disagrees with header grid")


def qd_field_to_csv(field, csv_path, header_path, provenance: dict | None = None) -> None:
    """Columnar dump of a quadratic differential plus a JSON grid header.

    Rows run s-major over the tensor grid; values are the raw coefficient
    psi so the dump is grid-metric agnostic.
    """
    grid = field.grid
    columns = _node_columns(grid)
    columns["re_psi"] = field.psi.real.ravel()
    columns["im_psi"] = field.psi.imag.ravel()
    prov = provenance_for(**(provenance or {}))
    write_csv(csv_path, columns, prov)
    write_json(header_path, _grid_header(grid), prov)


def qd_field_from_csv(csv_path, header_path):
    from collarflow.quad_diff import QuadDiffField
    grid = _grid_from_header(read_json(header_path))
    columns, _ = read_csv(csv_path)
    for name in ("s", "theta", "re_psi", "im_psi"):
        if name not in columns:
            raise DomainError(f"{csv_path}: missing column {name!r}")
    _check_nodes(grid, columns, csv_path)
    shape = (grid.n_s, grid.n_theta)
    psi = columns["re_psi"].reshape(shape) + 1j * columns["im_psi"].reshape(shape)
    return QuadDiffField(grid, psi)


def map_to_csv(u, csv_path, header_path, provenance: dict | None = None) -> None:
    """Columnar dump of a map into its target, plus a JSON grid header."""
    grid = u.grid
    columns = _node_columns(grid)
    for d in range(u.target.dim):
        columns[f"u_{d}"] = u.values[:, :, d].ravel()
    prov = provenance_for(**(provenance or {}))
    write_csv(csv_path, columns, prov)
    header = _grid_header(grid)
    header["target"] = target_to_dict(u.target)
    write_json(header_path, header, prov)


def map_from_csv(csv_path, header_path):
    from collarflow.fields import MapField
    header = read_json(header_path)
    if "target" not in header:
        raise DomainError(f"{header_path}: map header needs a 'target'")
    target = target_from_dict(header["target"])
    grid = _grid_from_header({k: v for k, v in header.items()
                              if k not in ("target", "provenance")})
    columns, _ = read_csv(csv_path)
    _check_nodes(grid, columns, csv_path)
    values = np.zeros((grid.n_s, grid.n_theta, target.dim))
    for d in range(target.dim):
        name = f"u_{d}"
        if name not in columns:
            raise DomainError(f"{csv_path}: missing column {name!r}")
        values[:, :, d] = columns[name].reshape(grid.n_s, grid.n_theta)
    return MapField(grid, values, target)
