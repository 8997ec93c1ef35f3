"""Run orchestration behind the CLI: training runs on disk, bound tables and run comparisons."""
from __future__ import annotations

import csv
import datetime as _dt
import functools
import hashlib
import io
import json
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import CSV_COLUMNS, bound_report, compare_posterior, xpinn_aggregate, xpinn_reports, l2_bound
from .config import RunConfig
from .domain import builtin_decompositions
from .errors import ConfigError, TrainingDiverged
from .eval_report import error_field, evaluate_grid, format_pct, relative_l2_values, seed_table
from .network import mlp_dims
from .pde import fd_poisson_reference, load_reference_grid, make_problem
from .trainer import TrainConfig, TrainResult, build_model, save_checkpoint, train

SUMMARY_SCHEMA = "xpinn-lab/run-summary"
BOUNDS_SCHEMA = "xpinn-lab/bound-table"
COMPARISON_SCHEMA = "xpinn-lab/comparison"
EXAMPLE_SCHEMA = "xpinn-lab/example"
SCHEMA_VERSION = 1


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def metadata(wall_time: float | None = None) -> dict:
    """Non-hashed block: anything that legitimately differs between identical reruns."""
    meta = {
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "xpinn_lab_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    if wall_time is not None:
        meta["wall_time_s"] = wall_time
    return meta


def content_hash(doc: dict) -> str:
    """SHA-256 of a JSON document with its ``metadata`` block removed."""
    body = {k: v for k, v in doc.items() if k != "metadata"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


@functools.lru_cache(maxsize=4)
def _poisson_reference(n: int):
    return fd_poisson_reference(n)


def problem_for(cfg: RunConfig, reference: str | None = None):
    ref_path = reference or cfg.reference
    if cfg.benchmark == "kdv":
        if ref_path is None:
            raise ConfigError("the kdv benchmark needs a reference grid (--reference or 'reference' key)")
        return make_problem("kdv", load_reference_grid(ref_path))
    if cfg.benchmark == "poisson":
        return make_problem("poisson", _poisson_reference(cfg.reference_n))
    return make_problem(cfg.benchmark)


def _history_csv(result: TrainResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n_sub = len(result.model.nets)
    parts = ("boundary", "residual", "iface_u", "iface_res", "iface_grad", "total")
    w.writerow(["epoch", "total", "train_loss"] + [f"sub{k}_{p}" for k in range(n_sub) for p in parts])
    for h in result.history:
        row = [h.epoch, repr(h.total), repr(h.train_loss)]
        for sub in h.subnets:
            row += [repr(sub[p]) for p in parts]
        w.writerow(row)
    return buf.getvalue()


def subnet_names(cfg: RunConfig) -> list[str]:
    if cfg.model == "pinn":
        return ["PINN"]
    return list(builtin_decompositions(cfg.decomposition).subdomain_names)


def run_seed(cfg: RunConfig, seed: int, out_dir, reference: str | None = None, error_fields: bool = False) -> dict:
    """Train one seed and write its artifacts; returns the per-seed summary block.

    On divergence the partial history and parameters are written before the
    error propagates.
    """
    out = Path(out_dir) / f"seed_{seed}"
    out.mkdir(parents=True, exist_ok=True)
    problem = problem_for(cfg, reference)
    dec = builtin_decompositions(cfg.decomposition) if cfg.model == "xpinn" else None
    model = build_model(mlp_dims(problem.dim, cfg.depth, cfg.width), cfg.activation, seed, dec)
    tc = TrainConfig(cfg.epochs, cfg.optimizer, cfg.lr, cfg.memory, seed, cfg.weights, cfg.counts, cfg.record_every)
    try:
        result = train(problem, model, tc)
    except TrainingDiverged as exc:
        if exc.result is not None:
            save_checkpoint(exc.result, out)
            (out / "history.csv").write_text(_history_csv(exc.result), encoding="utf-8")
        dump_json({"status": "diverged", "seed": seed, "message": str(exc)}, out / "status.json")
        raise
    save_checkpoint(result, out)
    (out / "history.csv").write_text(_history_csv(result), encoding="utf-8")

    grid = evaluate_grid(result.model, problem, cfg.eval_grid)
    rel = relative_l2_values(grid.predicted, grid.reference)
    max_err = float(np.max(np.abs(grid.predicted - grid.reference)))
    if error_fields and problem.dim == 2:
        error_field(result.model, problem, out / "error_field.refgrid", cfg.eval_grid)

    ts = result.training_set
    nb, nr = ts.n_b_sub(), ts.n_r_sub()
    if cfg.model == "pinn":
        reps = [bound_report(result.model.nets[0], ts.n_b, ts.n_r, problem.K, cfg.delta, cfg.c1,
                             cfg.include_bias, problem.flags)]
    else:
        reps = xpinn_reports(result.model.nets, nb, nr, problem.K, cfg.delta, cfg.c1, cfg.include_bias, problem.flags)
    return {
        "seed": seed,
        "status": "ok",
        "epochs_run": result.epochs_run,
        "train_loss": result.train_loss,
        "total_loss": result.total,
        "rel_l2": rel,
        "max_abs_error": max_err,
        "eval_grid": int(grid.axes[0].size),
        "n_b": ts.n_b, "n_r": ts.n_r, "n_b_sub": nb, "n_r_sub": nr,
        "subnets": [{"name": name, "final_loss": bd.as_dict(), "bounds": rep.to_dict()}
                    for name, bd, rep in zip(subnet_names(cfg), result.final, reps)],
        "_wall_time": result.wall_time,
    }


def _seed_job(args):
    cfg, seed, out_dir, reference, error_fields = args
    return run_seed(cfg, seed, out_dir, reference, error_fields)


def run_training(cfg: RunConfig, out_dir, seeds=None, reference: str | None = None, workers: int = 1,
                 error_fields: bool = False) -> dict:
    """Train every seed, write ``summary.json`` and return it."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(seeds if seeds is not None else cfg.seeds)
    jobs = [(cfg, s, out, reference, error_fields) for s in seeds]
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            runs = list(pool.map(_seed_job, jobs))
    else:
        runs = [_seed_job(j) for j in jobs]
    wall = {f"seed_{r['seed']}": r.pop("_wall_time") for r in runs}
    stats = {s.field: {"mean": s.mean, "std": s.std, "text": s.text}
             for s in seed_table(runs, ["train_loss", "rel_l2"])}
    summary = {
        "schema": SUMMARY_SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "benchmark": cfg.benchmark,
        "model": cfg.model,
        "decomposition": cfg.decomposition,
        "subnet_names": subnet_names(cfg),
        "config": cfg.to_dict(),
        "seeds": seeds,
        "std_convention": "population",
        "runs": runs,
        "aggregate": stats,
        "metadata": metadata(),
    }
    summary["metadata"]["wall_time_s"] = wall
    dump_json(summary, out / "summary.json")
    return summary


# -- comparisons of finished runs -------------------------------------------------------

def load_summary(run_dir) -> dict:
    path = Path(run_dir) / "summary.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read run summary {path}: {exc}") from exc
    if doc.get("schema") != SUMMARY_SCHEMA or doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{path} is not a version-{SCHEMA_VERSION} run summary")
    for key in ("runs", "benchmark", "model", "subnet_names"):
        if key not in doc:
            raise ConfigError(f"{path} lacks '{key}'")
    return doc


def _run_figures(doc: dict) -> dict:
    """Seed-averaged bound figures of one run (aggregated over its sub-nets)."""
    res, bnd, l2, c1 = [], [], [], None
    n_sub = len(doc["subnet_names"])
    per_sub_spec = [[] for _ in range(n_sub)]
    for run in doc["runs"]:
        reps = [s["bounds"] for s in run["subnets"]]
        c1 = reps[0]["c1"]
        r_pairs = [(b["residual_bound"], c) for b, c in zip(reps, run["n_r_sub"]) if b["residual_bound"] is not None]
        b_pairs = [(b["boundary_bound"], c) for b, c in zip(reps, run["n_b_sub"]) if c > 0]
        r = xpinn_aggregate(*zip(*r_pairs))
        # a sub-net owning one boundary point has no boundary bound, so neither does the run
        b = xpinn_aggregate(*zip(*b_pairs)) if b_pairs and all(v is not None for v, _ in b_pairs) else None
        res.append(r)
        if b is not None:
            bnd.append(b)
            l2.append(l2_bound(b, r, c1))
        for k, rep in enumerate(reps):
            per_sub_spec[k].append(rep["complexity_spectral"])
    mean = lambda xs: float(np.mean(xs)) if xs else None  # noqa: E731
    return {
        "residual": mean(res), "boundary": mean(bnd) if len(bnd) == len(res) else None,
        "l2": mean(l2) if len(l2) == len(res) else None,
        "complexity": [mean(v) for v in per_sub_spec],
    }


def _pct(v, ref):
    if v is None or ref in (None, 0):
        return None
    return 100.0 * v / ref


def compare_runs(docs: list[dict], labels: list[str]) -> dict:
    """Merge run summaries into comparison blocks; the first run is the 100% baseline."""
    if len(docs) < 1:
        raise ConfigError("nothing to compare")
    bench = {d["benchmark"] for d in docs}
    if len(bench) != 1:
        raise ConfigError(f"runs mix benchmarks {sorted(bench)}")
    figs = [_run_figures(d) for d in docs]
    base = figs[0]
    base_cx = float(np.mean(base["complexity"]))

    def cx_ref(fig, k):
        # sub-net k of a like-shaped run is measured against the baseline's sub-net k
        if len(fig["complexity"]) == len(base["complexity"]):
            return base["complexity"][k]
        return base_cx

    blocks, rows = [], []
    for doc, fig, label in zip(docs, figs, labels):
        agg = doc.get("aggregate", {})
        block = {
            "label": label, "model": doc["model"],
            "train_loss": agg.get("train_loss", {}).get("text"),
            "rel_l2": agg.get("rel_l2", {}).get("text"),
            "train_loss_mean": agg.get("train_loss", {}).get("mean"),
            "rel_l2_mean": agg.get("rel_l2", {}).get("mean"),
            "bound_raw": fig["residual"], "bound_pct": _pct(fig["residual"], base["residual"]),
            "boundary_raw": fig["boundary"], "boundary_pct": _pct(fig["boundary"], base["boundary"]),
            "l2_raw": fig["l2"], "l2_pct": _pct(fig["l2"], base["l2"]),
            "subnets": [{"name": n, "complexity_spectral_pct": _pct(c, cx_ref(fig, k))}
                        for k, (n, c) in enumerate(zip(doc["subnet_names"], fig["complexity"]))],
        }
        blocks.append(block)
        rows.append({
            "model": label, "train_loss": block["train_loss_mean"], "rel_l2": block["rel_l2_mean"],
            "complexity_spectral_pct": block["subnets"][0]["complexity_spectral_pct"] if len(block["subnets"]) == 1 else None,
            "bound_pct": block["bound_pct"], "bound_raw": block["bound_raw"],
        })
        if len(block["subnets"]) > 1:
            for sub in block["subnets"]:
                rows.append({"model": f"{label}/{sub['name']}", "train_loss": None, "rel_l2": None,
                             "complexity_spectral_pct": sub["complexity_spectral_pct"], "bound_pct": None,
                             "bound_raw": None})
    return {
        "schema": COMPARISON_SCHEMA, "schema_version": SCHEMA_VERSION,
        "benchmark": bench.pop(), "baseline": labels[0], "blocks": blocks, "rows": rows,
        "metadata": metadata(),
    }


def render_comparison(doc: dict) -> str:
    head = ["", "Train Loss", "Relative L2", "Complexity", "Bound", "L2 bound"]
    lines = []
    for b in doc["blocks"]:
        subs = b["subnets"]
        lines.append([b["label"], b["train_loss"] or "", b["rel_l2"] or "",
                      format_pct(subs[0]["complexity_spectral_pct"]) if len(subs) == 1 else "",
                      format_pct(b["bound_pct"]), format_pct(b["l2_pct"])])
        if len(subs) > 1:
            lines += [[f"  {sub['name']}", "", "", format_pct(sub["complexity_spectral_pct"]), "", ""] for sub in subs]
    widths = [max(len(str(r[i])) for r in [head] + lines) for i in range(len(head))]
    fmt = lambda r: "  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip()  # noqa: E731
    return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in lines])


def comparison_csv(doc: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in doc["rows"]:
        w.writerow(["" if r.get(c) is None else (r[c] if isinstance(r[c], str) else format(r[c], ".6g"))
                    for c in CSV_COLUMNS])
    return buf.getvalue()
