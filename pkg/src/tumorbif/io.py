"""Run configuration, result files, CSV tables and SVG figures.

Formats
-------
* configuration: YAML (or JSON) with sections ``model``, ``numerics`` and
  ``tasks``; command-line flags override file values.
* tables: CSV with a header row.
* results and branches: YAML or JSON by file extension, with fields
  ``schema_version``, ``kind``, ``config``, ``payload`` and ``provenance``.
* figures: SVG.
"""

from __future__ import annotations

import copy
import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy.special import iv

from .continuation import Branch, BranchPoint
from .geometry import ShapeCoeffs, boundary_points
from .model import ModelParams, NutrientFn, ParameterError, validate_params
from .spectrum import BifurcationPoint

SCHEMA_VERSION = 1
RESULTS_ENV = "TUMORBIF_RESULTS"

# A for which f = id gives R_A = 1: 2 I_1(1)/I_0(1)
CANONICAL_A = float(2 * iv(1, 1.0) / iv(0, 1.0))


class ConfigError(ValueError):
    pass


def _defaults() -> dict:
    return {
        "model": {"A": CANONICAL_A, "G": 0.0, "f": {"kind": "identity", "sigma": 1.0}},
        "numerics": {
            "radial_grid": 256,
            "n_r": 48,
            "n_theta": 128,
            "K": None,
            "k_max": 64,
            "tolerances": {"newton": 1e-10, "linear": 1e-14, "branch": 1e-8, "multiplier": 1e-3},
        },
        "tasks": {},
    }


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


@dataclass
class RunConfig:
    model: dict = field(default_factory=lambda: _defaults()["model"])
    numerics: dict = field(default_factory=lambda: _defaults()["numerics"])
    tasks: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict | None) -> "RunConfig":
        data = data or {}
        unknown = set(data) - {"model", "numerics", "tasks"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        merged = _merge(_defaults(), data)
        cfg = cls(model=merged["model"], numerics=merged["numerics"], tasks=merged["tasks"] or {})
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    def override(self, section: str, **values) -> "RunConfig":
        """Return a copy with non-None ``values`` written into ``section`` (flags win)."""
        data = self.to_dict()
        target = data.setdefault(section, {})
        for key, val in values.items():
            if val is None:
                continue
            if "." in key:
                head, tail = key.split(".", 1)
                target.setdefault(head, {})[tail] = val
            else:
                target[key] = val
        return RunConfig.from_dict(data)

    def nutrient(self) -> NutrientFn:
        law = self.model.get("f") or {}
        kind = law.get("kind", "identity")
        if kind == "identity":
            return NutrientFn.identity()
        if kind == "michaelis_menten":
            return NutrientFn.michaelis_menten(float(law.get("sigma", 1.0)))
        raise ConfigError(f"nutrient kind {kind!r} is not available from a config file")

    @property
    def A(self) -> float:
        return float(self.model["A"])

    @property
    def G(self) -> float:
        return float(self.model.get("G") or 0.0)

    def validate(self) -> None:
        try:
            validate_params(ModelParams(A=self.A, G=self.G, f=self.nutrient()))
        except (ParameterError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        num = self.numerics
        for name, val in num.get("tolerances", {}).items():
            if not (isinstance(val, (int, float)) and val > 0):
                raise ConfigError(f"tolerance {name} must be positive, got {val!r}")
        if not 16 <= int(num["radial_grid"]) <= 4096:
            raise ConfigError("radial_grid must lie in [16, 4096]")
        if not 32 <= int(num["n_r"]) <= 256:
            raise ConfigError("n_r must lie in [32, 256]")
        if not (64 <= int(num["n_theta"]) <= 2048 and int(num["n_theta"]) % 2 == 0):
            raise ConfigError("n_theta must be even and lie in [64, 2048]")
        if not 4 <= int(num["k_max"]) <= 1024:
            raise ConfigError("k_max must lie in [4, 1024]")
        if num.get("K") is not None and not 1 <= int(num["K"]) <= 64:
            raise ConfigError("K must lie in [1, 64]")


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig.from_dict({})
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    text = p.read_text()
    data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"config file {p} must hold a mapping")
    return RunConfig.from_dict(data)


def result_dir(default: str | os.PathLike = "results") -> Path:
    """Output directory, overridable through the TUMORBIF_RESULTS environment variable."""
    p = Path(os.environ.get(RESULTS_ENV) or default)
    p.mkdir(parents=True, exist_ok=True)
    return p


# -- result files -------------------------------------------------------------

def _plain(obj):
    """Convert numpy scalars/arrays recursively to builtin types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class ResultFile:
    kind: str
    config: dict
    payload: object
    provenance: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return _plain({"schema_version": self.schema_version, "kind": self.kind, "config": self.config,
                       "payload": self.payload, "provenance": self.provenance})

    @classmethod
    def from_dict(cls, data: dict) -> "ResultFile":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {version!r}")
        return cls(kind=data["kind"], config=data["config"], payload=data["payload"],
                   provenance=data.get("provenance", {}), schema_version=version)


def provenance(cfg: RunConfig, started: float, **extra) -> dict:
    num = cfg.numerics
    out = {"grid": {"radial_grid": num["radial_grid"], "n_r": num["n_r"], "n_theta": num["n_theta"],
                    "K": num.get("K"), "k_max": num["k_max"]},
           "tolerances": dict(num["tolerances"]),
           "wall_time_s": round(time.perf_counter() - started, 3)}
    out.update(extra)
    return out


def write_result(path: str | os.PathLike, result: ResultFile) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    data = result.to_dict()
    # repr-exact floats in both formats, so a re-read compares equal
    if p.suffix == ".json":
        p.write_text(json.dumps(data, indent=2))
    else:
        p.write_text(yaml.safe_dump(data, sort_keys=False))
    return p


def read_result(path: str | os.PathLike) -> ResultFile:
    p = Path(path)
    text = p.read_text()
    data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    return ResultFile.from_dict(data)


def write_csv(path: str | os.PathLike, header, rows) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return p


def read_csv(path: str | os.PathLike) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# -- branches -------------------------------------------------------------------

def branch_records(branch: Branch) -> dict:
    return {
        "l": branch.l, "k": branch.k, "mode": branch.mode, "G_kl": branch.G_kl,
        "warnings": list(branch.warnings),
        "points": [{"eps": p.eps, "G": p.G, "coefficients": p.rho.a.tolist(), "residual": p.residual,
                    "fine_residual": p.fine_residual, "iterations": p.iterations}
                   for p in branch.points],
    }


def branch_from_records(rec: dict) -> Branch:
    b = Branch(l=int(rec["l"]), k=int(rec["k"]), G_kl=float(rec["G_kl"]), warnings=list(rec.get("warnings", [])))
    for p in rec["points"]:
        b.points.append(BranchPoint(eps=float(p["eps"]), G=float(p["G"]),
                                    rho=ShapeCoeffs(int(rec["l"]), p["coefficients"]),
                                    residual=float(p["residual"]),
                                    fine_residual=float(p.get("fine_residual", float("nan"))),
                                    iterations=int(p.get("iterations", 0))))
    return b


# -- figures --------------------------------------------------------------------

def _svg(width, height, body) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
            + "\n".join(body) + "\n</svg>\n")


def emit_diagram(catalog: list[BifurcationPoint], branches: list[Branch], path: str | os.PathLike,
                 width: int = 720, height: int = 420) -> Path:
    """Bifurcation diagram: G horizontal, amplitude ε vertical, trivial branch on the axis."""
    if not catalog and not branches:
        raise ValueError("nothing to draw: pass catalog points or branches")
    Gs = [c.G for c in catalog] + [g for b in branches for g in b.G]
    eps = [e for b in branches for e in b.eps] or [0.0]
    g_lo, g_hi = min(Gs), max(Gs)
    pad = 0.1 * (g_hi - g_lo) if g_hi > g_lo else max(1.0, 0.1 * abs(g_hi))
    g_lo, g_hi = g_lo - pad, g_hi + pad
    e_max = max(1e-3, max(abs(e) for e in eps)) * 1.15
    m = 50

    def X(g):
        return m + (g - g_lo) / (g_hi - g_lo) * (width - 2 * m)

    def Y(e):
        return height / 2 - e / e_max * (height / 2 - m)

    body = [f'<line x1="{m}" y1="{Y(0):.2f}" x2="{width - m}" y2="{Y(0):.2f}" stroke="black" stroke-width="2"/>',
            f'<text x="{width - m}" y="{Y(0) + 20:.2f}" font-size="14" text-anchor="end">G</text>',
            f'<text x="{m}" y="{m - 15}" font-size="14">amplitude ε</text>']
    for c in catalog:
        body.append(f'<circle cx="{X(c.G):.2f}" cy="{Y(0):.2f}" r="5" fill="red"/>')
        body.append(f'<text x="{X(c.G):.2f}" y="{Y(0) + 22:.2f}" font-size="12" text-anchor="middle">'
                    f'G_{c.mode} = {c.G:.4g}</text>')
    for b in branches:
        for sign in (1, -1):
            pts = " ".join(f"{X(g):.2f},{Y(sign * e):.2f}" for g, e in zip(b.G, b.eps))
            body.append(f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="2"/>')
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(_svg(width, height, body))
    return p


def emit_outline(rho: ShapeCoeffs, R_A: float, path: str | os.PathLike, size: int = 320,
                 n: int = 512) -> Path:
    """Domain outline r = R_A (1 + ρ) as an SVG polygon, with the reference circle dashed."""
    pts = boundary_points(rho, R_A, n)
    scale = (size / 2 - 10) / (1.3 * R_A)
    c = size / 2
    poly = " ".join(f"{c + scale * x:.3f},{c - scale * y:.3f}" for x, y in pts)
    body = [f'<circle cx="{c}" cy="{c}" r="{scale * R_A:.3f}" fill="none" stroke="gray" stroke-dasharray="4 3"/>',
            f'<polygon points="{poly}" fill="none" stroke="black" stroke-width="1.5"/>']
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(_svg(size, size, body))
    return p
