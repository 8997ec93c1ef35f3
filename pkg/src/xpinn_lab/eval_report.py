"""Test-grid evaluation, error-field export and multi-seed summary tables."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import Box, Decomposition
from .errors import InvalidInputError
from .network import Mlp, forward
from .pde import PdeProblem, ReferenceGrid, save_reference_grid

DEFAULT_GRID = {"kdv": 320, "heat": 401, "poisson": 401, "advection": 401}


def grid_points(domain: Box, n: int) -> tuple[list[np.ndarray], np.ndarray]:
    """Uniform ``n`` nodes per axis; points ordered first-axis major."""
    if n < 2:
        raise InvalidInputError("grid needs at least two nodes per axis")
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(domain.lower, domain.upper)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    return axes, pts


def _parts(model):
    if isinstance(model, Mlp):
        return [model], None
    return list(model.nets), model.decomposition


def predict(model, pts: np.ndarray) -> np.ndarray:
    """Model output; an XPINN point is evaluated only by the sub-net that owns it."""
    nets, dec = _parts(model)
    if dec is None:
        return forward(nets[0], pts)
    owner = dec.assign_many(pts)
    out = np.empty(pts.shape[0])
    for k, net in enumerate(nets):
        m = owner == k
        if np.any(m):
            out[m] = forward(net, pts[m])
    return out


@dataclass
class EvalGrid:
    axes: list[np.ndarray]
    points: np.ndarray
    predicted: np.ndarray
    reference: np.ndarray
    owner: np.ndarray


def evaluate_grid(model, problem: PdeProblem, n: int | None = None) -> EvalGrid:
    n = n or DEFAULT_GRID.get(problem.name, 401)
    axes, pts = grid_points(problem.domain, n)
    nets, dec = _parts(model)
    owner = np.zeros(pts.shape[0], dtype=int) if dec is None else dec.assign_many(pts)
    return EvalGrid(axes, pts, predict(model, pts), problem.solution(pts), owner)


def relative_l2_values(pred, ref) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    denom = float(np.linalg.norm(ref))
    if denom == 0.0:
        raise InvalidInputError("reference has zero norm; relative error undefined")
    return float(np.linalg.norm(pred - ref)) / denom


def relative_l2(model, problem: PdeProblem, n: int | None = None) -> float:
    """``||u_pred - u_ref||_2 / ||u_ref||_2`` over the uniform test grid."""
    g = evaluate_grid(model, problem, n)
    return relative_l2_values(g.predicted, g.reference)


def error_field(model, problem: PdeProblem, path, n: int | None = None) -> float:
    """Write ``|u_pred - u_ref|`` on the test grid as a reference-grid file; returns its max."""
    g = evaluate_grid(model, problem, n)
    if problem.dim != 2:
        raise InvalidInputError("error fields are exported for 2-D problems only")
    err = np.abs(g.predicted - g.reference).reshape(g.axes[0].size, g.axes[1].size)
    grid = ReferenceGrid((g.axes[0], g.axes[1]), err, tuple(problem.domain.names) or ("x", "t"))
    try:
        save_reference_grid(grid, path)
    except OSError as exc:
        raise OSError(f"cannot write error field to {path}: {exc}") from exc
    return float(err.max())


# -- seed tables ---------------------------------------------------------------------

def format_sci(v: float, digits: int = 4) -> str:
    """Compact scientific notation: 0.0017784 -> ``1.778e-3``."""
    if not math.isfinite(v):
        return str(v)
    if v == 0:
        return "0"
    mant, exp = f"{v:.{digits - 1}e}".split("e")
    return f"{mant}e{int(exp)}"


def format_pct(v: float | None) -> str:
    return "" if v is None else f"{v:.2f}%"


def format_pm(mean: float, std: float) -> str:
    return f"{format_sci(mean)}±{format_sci(std)}"


@dataclass(frozen=True)
class SeedStat:
    field: str
    mean: float
    std: float
    n: int

    @property
    def text(self) -> str:
        return format_pm(self.mean, self.std)


def seed_table(results: list[dict], fields) -> list[SeedStat]:
    """Mean and population standard deviation of each field across seed runs."""
    if not results:
        raise InvalidInputError("at least one result is required")
    out = []
    for f in fields:
        vals = np.array([float(r[f]) for r in results])
        out.append(SeedStat(f, float(vals.mean()), float(vals.std(ddof=0)), vals.size))
    return out


def seed_table_csv(rows: dict[str, list[SeedStat]]) -> str:
    """CSV with one line per model: ``model, <field>`` cells holding ``mean±std``."""
    fields = []
    for stats in rows.values():
        for s in stats:
            if s.field not in fields:
                fields.append(s.field)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", *fields])
    for name, stats in rows.items():
        by = {s.field: s.text for s in stats}
        w.writerow([name, *[by.get(f, "") for f in fields]])
    return buf.getvalue()
