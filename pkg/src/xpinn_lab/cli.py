"""``xpinn-lab`` command line: train, bounds, compare, example, check.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.
"""
from __future__ import annotations

import json
import math
import os
import sys
from pathlib import Path

import click

from .bounds import (BoundReport, bound_report, compare_posterior, example as example_problem, prior_compare,
                     tradeoff_threshold, xpinn_reports)
from .config import list_presets, load_config, preset_path
from .errors import (ConfigError, InvalidInputError, NumericError, NumericOverflowError, ParseError,
                     TrainingDiverged, XpinnLabError)
from .eval_report import format_pct
from .network import load_mlp
from .runs import (BOUNDS_SCHEMA, COMPARISON_SCHEMA, EXAMPLE_SCHEMA, SCHEMA_VERSION, comparison_csv, compare_runs, dump_json,
                   load_summary, metadata, render_comparison, run_training)

EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageFailure(click.ClickException):
    exit_code = EXIT_USAGE


class NumericFailure(click.ClickException):
    exit_code = EXIT_NUMERIC


def _fail(exc: Exception):
    if isinstance(exc, (TrainingDiverged, NumericError, NumericOverflowError)):
        raise NumericFailure(str(exc)) from exc
    raise UsageFailure(str(exc)) from exc


def _workers() -> int:
    raw = os.environ.get("XPINN_LAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageFailure(f"XPINN_LAB_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _resolve_config(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    if arg in list_presets():
        return preset_path(arg)
    raise UsageFailure(f"no config file or preset named {arg!r} (presets: {', '.join(list_presets())})")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(package_name="xpinn-lab")
def main():
    """PINN and XPINN training with posterior generalization bounds."""


# -- train ---------------------------------------------------------------------------

@main.command()
@click.argument("config")
@click.option("--seed", "seeds", type=int, multiple=True, help="Seed(s) to run; defaults to the config's list.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory (default runs/<name>).")
@click.option("--delta", type=float, default=None, help="Confidence budget for the bounds.")
@click.option("--c1", type=float, default=None, help="Stability constant of the L2 bound.")
@click.option("--include-bias/--no-include-bias", default=None, help="Bound the augmented [W | b] layers.")
@click.option("--reference", type=click.Path(dir_okay=False), default=None, help="Reference grid (required for kdv).")
@click.option("--epochs", type=int, default=None, help="Override the configured epoch count.")
@click.option("--error-field", is_flag=True, help="Also write |u_pred - u_ref| on the test grid.")
def train(config, seeds, out, delta, c1, include_bias, reference, epochs, error_field):
    """Train CONFIG (a TOML path or preset name) and write checkpoints and a run summary."""
    try:
        cfg = load_config(_resolve_config(config))
        if delta is not None:
            cfg.delta = delta
        if c1 is not None:
            cfg.c1 = c1
        if include_bias is not None:
            cfg.include_bias = include_bias
        if epochs is not None:
            if epochs < 1:
                raise ConfigError("--epochs must be positive")
            cfg.epochs = epochs
        if not 0 < cfg.delta < 1 or cfg.c1 <= 0:
            raise ConfigError("delta must lie in (0, 1) and c1 must be positive")
        out_dir = Path(out) if out else Path("runs") / cfg.name
        summary = run_training(cfg, out_dir, list(seeds) or None, reference, _workers(), error_field)
    except XpinnLabError as exc:
        _fail(exc)
    except OSError as exc:
        raise UsageFailure(str(exc)) from exc
    for run in summary["runs"]:
        click.echo(f"seed {run['seed']}: train loss {run['train_loss']:.4e}  rel L2 {run['rel_l2']:.4e}  "
                   f"epochs {run['epochs_run']}")
    agg = summary["aggregate"]
    click.echo(f"{cfg.name}: train loss {agg['train_loss']['text']}  rel L2 {agg['rel_l2']['text']}")
    click.echo(f"wrote {out_dir / 'summary.json'}")


# -- bounds --------------------------------------------------------------------------

def _nets_of(path: Path):
    """A checkpoint is a network JSON file or a directory of ``net_k.json`` files."""
    if path.is_dir():
        files = sorted(path.glob("net_*.json"), key=lambda p: p.name)
        files = [f for f in files if not f.name.endswith(".optimizer.json")]
        files.sort(key=lambda p: int(p.stem.split("_")[1]))
        if not files:
            raise ParseError(f"{path} holds no net_*.json checkpoints")
    else:
        files = [path]
    return [load_mlp(f) for f in files]


def _int_list(text: str | None, what: str):
    if text is None:
        return None
    try:
        vals = [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageFailure(f"{what} must be a comma-separated list of integers") from None
    if any(v < 0 for v in vals):
        raise UsageFailure(f"{what} must be nonnegative")
    return vals


def _report_text(label: str, rep: BoundReport) -> str:
    fmt = lambda v: "n/a" if v is None else f"{v:.6e}"  # noqa: E731
    return (f"{label}: M={list(rep.caps.M)} N={list(rep.caps.N)} delta={rep.delta:g} "
            f"residual={fmt(rep.residual_bound)} boundary={fmt(rep.boundary_bound)} l2={fmt(rep.l2_bound)} "
            f"complexity={rep.complexity_spectral:.6e}")


@main.command()
@click.argument("checkpoints", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--n-r", type=int, required=True, help="Residual points of the whole problem.")
@click.option("--n-b", type=int, required=True, help="Boundary points of the whole problem.")
@click.option("--n-r-sub", default=None, help="Comma-separated residual counts per XPINN sub-net.")
@click.option("--n-b-sub", default=None, help="Comma-separated boundary counts per XPINN sub-net.")
@click.option("--subnets", type=int, default=1, help="Treat a lone network as one of this many sub-nets (delta / k).")
@click.option("--k", "K", type=float, default=1.0, help="Operator coefficient bound K.")
@click.option("--delta", type=float, default=0.1)
@click.option("--c1", type=float, default=1.0)
@click.option("--include-bias", is_flag=True)
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Directory for bounds.json / bounds.csv.")
def bounds(checkpoints, n_r, n_b, n_r_sub, n_b_sub, subnets, K, delta, c1, include_bias, out):
    """Posterior bounds of trained checkpoints.

    One network prints raw values. A PINN checkpoint followed by an XPINN
    checkpoint (a directory of sub-nets, or several files) prints the table
    with the PINN at 100%.
    """
    if not 0 < delta < 1 or c1 <= 0 or subnets < 1 or K <= 0:
        raise UsageFailure("need 0 < delta < 1, c1 > 0, K > 0 and subnets >= 1")
    try:
        groups = [_nets_of(Path(c)) for c in checkpoints]
    except (XpinnLabError, OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageFailure(f"cannot read checkpoint: {exc}") from exc
    nets = [n for g in groups for n in g]
    doc = {"schema": BOUNDS_SCHEMA, "schema_version": SCHEMA_VERSION, "checkpoints": list(checkpoints),
           "settings": {"n_r": n_r, "n_b": n_b, "K": K, "delta": delta, "c1": c1, "include_bias": include_bias}}
    try:
        if len(nets) == 1:
            rep = bound_report(nets[0], n_b, n_r, K, delta / subnets, c1, include_bias)
            click.echo(_report_text("net", rep))
            doc["reports"] = [rep.to_dict()]
            doc["table"] = None
        else:
            pinn, sub = (groups[0][0], [n for g in groups[1:] for n in g]) if len(groups[0]) == 1 else (None, nets)
            rs = _int_list(n_r_sub, "--n-r-sub")
            bs = _int_list(n_b_sub, "--n-b-sub")
            if rs is None or bs is None or len(rs) != len(sub) or len(bs) != len(sub):
                raise UsageFailure(f"--n-r-sub and --n-b-sub need one count per sub-net ({len(sub)})")
            if sum(rs) != n_r or sum(bs) != n_b:
                raise UsageFailure("per-sub-net counts must sum to --n-r and --n-b")
            reps = xpinn_reports(sub, bs, rs, K, delta, c1, include_bias)
            for k, rep in enumerate(reps):
                click.echo(_report_text(f"sub-net {k}", rep))
            doc["reports"] = [r.to_dict() for r in reps]
            doc["table"] = None
            if pinn is not None:
                prep = bound_report(pinn, n_b, n_r, K, delta, c1, include_bias)
                table = compare_posterior(prep, reps, rs, bs)
                doc["pinn_report"] = prep.to_dict()
                doc["table"] = table.to_dict()
                click.echo("")
                for row in table.rows:
                    click.echo(f"{row['model']:<10} complexity {format_pct(row['complexity_spectral_pct']):>10}  "
                               f"bound {format_pct(row['bound_pct']):>10}  L2 bound {format_pct(row['l2_pct']):>10}")
                click.echo(f"verdict: {table.verdict}" + (f"  (L2 level: {table.l2_verdict})" if table.l2_verdict else ""))
                if out:
                    Path(out).mkdir(parents=True, exist_ok=True)
                    (Path(out) / "bounds.csv").write_text(table.to_csv(), encoding="utf-8")
    except XpinnLabError as exc:
        _fail(exc)
    doc["metadata"] = metadata()
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        dump_json(doc, Path(out) / "bounds.json")


# -- compare -------------------------------------------------------------------------

@main.command()
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--label", "labels", multiple=True, help="Row label per run (default: model name).")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Directory for comparison.json / .csv.")
def compare(run_dirs, labels, out):
    """Merge finished runs into one table; the first run is the 100% baseline."""
    if len(run_dirs) < 2:
        raise UsageFailure("compare needs at least two run directories")
    if labels and len(labels) != len(run_dirs):
        raise UsageFailure("give one --label per run directory")
    try:
        docs = [load_summary(d) for d in run_dirs]
        names = list(labels) or [d.get("model", "run").upper() for d in docs]
        seen = {}
        for i, n in enumerate(names):
            seen[n] = seen.get(n, 0) + 1
            if seen[n] > 1:
                names[i] = f"{n}#{seen[n]}"
        report = compare_runs(docs, names)
    except XpinnLabError as exc:
        _fail(exc)
    click.echo(render_comparison(report))
    if out:
        o = Path(out)
        o.mkdir(parents=True, exist_ok=True)
        dump_json(report, o / "comparison.json")
        (o / "comparison.csv").write_text(comparison_csv(report), encoding="utf-8")


# -- example -------------------------------------------------------------------------

@main.command()
@click.argument("name", required=False, type=click.Choice(["4.1", "4.2", "4.3"]))
@click.option("--q", type=float, default=None, help="Coefficient of the second term in the tradeoff example.")
@click.option("--n", "n_r", type=int, default=None, help="Residual count; omit for the large-n limit.")
@click.option("--json", "as_json", is_flag=True, help="Print a JSON document instead of text.")
def example(name, q, n_r, as_json):
    """Prior (Barron-norm) comparison on the analytic broken-line examples."""
    if q is not None and (q < 0 or not math.isfinite(q)):
        raise UsageFailure("--q must be a finite nonnegative number")
    if name is None:
        if q is None:
            raise UsageFailure("give an example name or --q")
        name = "4.3"
    if name == "4.3" and q is None:
        q = 1.0
    try:
        target, segs = example_problem(name, q)
        res = prior_compare(target, segs, n_r=n_r, asymptotic=n_r is None)
        threshold = tradeoff_threshold() if name == "4.3" else None
    except XpinnLabError as exc:
        _fail(exc)
    doc = {"schema": EXAMPLE_SCHEMA, "schema_version": SCHEMA_VERSION, "example": name, "q": q,
           "n_r": n_r, "pinn": res.pinn, "xpinn": res.xpinn, "verdict": res.verdict,
           "whole_norm": res.whole_norm, "subdomain_norms": list(res.norms), "q_threshold": threshold}
    if as_json:
        click.echo(json.dumps(doc, indent=2, sort_keys=True))
        return
    click.echo(f"example {name}" + (f" (q = {q:g})" if name == "4.3" else ""))
    click.echo(f"  Barron norm whole = {res.whole_norm:g}, per subdomain = {', '.join(f'{v:g}' for v in res.norms)}")
    click.echo(f"  PINN  ||u||^3       = {res.pinn:.10g}")
    click.echo(f"  XPINN weighted sum  = {res.xpinn:.10g}")
    click.echo(f"  verdict: {res.verdict}")
    if threshold is not None:
        click.echo(f"  q* = {threshold:.10g} (XPINN wins for q > q*)")


# -- check ---------------------------------------------------------------------------

@main.command()
def check():
    """Run the quick oracle suites."""
    from .checks import run_checks

    results = run_checks()
    for r in results:
        click.echo(r.line)
    failed = [r for r in results if not r.passed]
    if failed:
        click.echo(f"{len(failed)} of {len(results)} checks failed", err=True)
        sys.exit(EXIT_NUMERIC)
    click.echo(f"all {len(results)} checks passed")


if __name__ == "__main__":  # pragma: no cover
    main()
