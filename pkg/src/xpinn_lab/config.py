"""TOML run configurations (schema version 1)."""
from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .domain import SampleCounts
from .errors import ConfigError
from .losses import LossWeights, default_weights
from .network import ACTIVATIONS

CONFIG_VERSION = 1
BENCHMARKS = ("kdv", "heat", "advection", "poisson")
KNOWN_KEYS = {
    None: {"version", "name", "benchmark", "model", "decomposition", "weights", "seeds", "record_every", "eval_grid",
           "reference", "reference_n", "network", "train", "points", "bounds"},
    "network": {"depth", "width", "activation"},
    "train": {"optimizer", "lr", "epochs", "memory"},
    "points": {"n_b", "n_r", "n_i", "n_r_sub", "n_b_sub"},
    "bounds": {"delta", "c1", "include_bias"},
}
PRESET_DIR = Path(__file__).parent / "presets"


@dataclass
class RunConfig:
    name: str
    benchmark: str
    model: str
    decomposition: str | None
    depth: int
    width: int
    activation: str
    optimizer: str
    lr: float
    epochs: int
    memory: int
    counts: SampleCounts
    weights: LossWeights
    weights_name: str | None = None
    seeds: list[int] = field(default_factory=lambda: [0])
    record_every: int = 100
    eval_grid: int | None = None
    reference: str | None = None
    reference_n: int = 401
    delta: float = 0.1
    c1: float = 1.0
    include_bias: bool = False

    def to_dict(self) -> dict:
        out = asdict(self)
        out["counts"] = {k: v for k, v in asdict(self.counts).items() if v is not None}
        return out


def _take(table: dict, key: str, kind, where: str, default=...):
    if key not in table:
        if default is ...:
            raise ConfigError(f"missing key '{key}' in {where}")
        return default
    v = table[key]
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    wrong_type = kind is not None and not isinstance(v, kind)
    if wrong_type or (isinstance(v, bool) and kind is not bool):
        raise ConfigError(f"'{key}' in {where} must be {getattr(kind, '__name__', kind)}, got {v!r}")
    return v


def _int_list(table, key, where):
    v = table.get(key)
    if v is None:
        return None
    if not isinstance(v, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise ConfigError(f"'{key}' in {where} must be a list of integers")
    return v


def _check_keys(doc: dict) -> None:
    for table, allowed in KNOWN_KEYS.items():
        sub = doc if table is None else doc.get(table, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"[{table}] must be a table")
        extra = sorted(set(sub) - allowed)
        if extra:
            where = "config" if table is None else f"[{table}]"
            raise ConfigError(f"unknown key(s) {extra} in {where}")


def parse_config(doc: dict, name: str = "run", base_dir: Path | None = None) -> RunConfig:
    version = doc.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}")
    _check_keys(doc)
    benchmark = _take(doc, "benchmark", str, "config")
    if benchmark not in BENCHMARKS:
        raise ConfigError(f"unknown benchmark {benchmark!r}; choose from {', '.join(BENCHMARKS)}")
    model = _take(doc, "model", str, "config", "pinn")
    if model not in ("pinn", "xpinn"):
        raise ConfigError("model must be 'pinn' or 'xpinn'")
    decomposition = _take(doc, "decomposition", str, "config", benchmark if model == "xpinn" else None)
    if model == "xpinn" and decomposition not in BENCHMARKS:
        raise ConfigError(f"unknown decomposition {decomposition!r}")

    net = doc.get("network", {})
    tr = doc.get("train", {})
    pts = doc.get("points")
    if pts is None:
        raise ConfigError("missing [points] table")
    activation = _take(net, "activation", str, "[network]")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"activation must be one of {ACTIVATIONS}")
    try:
        counts = SampleCounts(
            _take(pts, "n_b", int, "[points]"), _take(pts, "n_r", int, "[points]"),
            _take(pts, "n_i", int, "[points]", None), _int_list(pts, "n_r_sub", "[points]"),
            _int_list(pts, "n_b_sub", "[points]"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    wname = None
    w = doc.get("weights")
    if isinstance(w, str):
        wname = w
        weights = default_weights(benchmark, w)
    elif isinstance(w, dict):
        known = {f.name for f in fields(LossWeights)}
        extra = set(w) - known
        if extra:
            raise ConfigError(f"unknown weight keys {sorted(extra)}")
        try:
            weights = LossWeights(**{k: float(v) for k, v in w.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    elif w is None:
        weights = default_weights(benchmark)
    else:
        raise ConfigError("weights must be a preset name or a table")

    seeds = _int_list(doc, "seeds", "config") or [0]
    bounds = doc.get("bounds", {})
    reference = doc.get("reference")
    if reference is not None and base_dir is not None and not Path(reference).is_absolute():
        reference = str((base_dir / reference).resolve())
    cfg = RunConfig(
        name=_take(doc, "name", str, "config", name),
        benchmark=benchmark, model=model, decomposition=decomposition if model == "xpinn" else None,
        depth=_take(net, "depth", int, "[network]"), width=_take(net, "width", int, "[network]"),
        activation=activation,
        optimizer=_take(tr, "optimizer", str, "[train]"), lr=_take(tr, "lr", float, "[train]"),
        epochs=_take(tr, "epochs", int, "[train]"), memory=_take(tr, "memory", int, "[train]", 10),
        counts=counts, weights=weights, weights_name=wname, seeds=seeds,
        record_every=_take(doc, "record_every", int, "config", 100),
        eval_grid=_take(doc, "eval_grid", int, "config", None),
        reference=reference, reference_n=_take(doc, "reference_n", int, "config", 401),
        delta=_take(bounds, "delta", float, "[bounds]", 0.1), c1=_take(bounds, "c1", float, "[bounds]", 1.0),
        include_bias=_take(bounds, "include_bias", bool, "[bounds]", False),
    )
    if cfg.optimizer not in ("adam", "lbfgs"):
        raise ConfigError(f"unknown optimizer {cfg.optimizer!r}")
    if cfg.depth < 1 or cfg.width < 1 or cfg.epochs < 1 or cfg.record_every < 1:
        raise ConfigError("depth, width, epochs and record_every must be positive")
    if not 0 < cfg.delta < 1 or cfg.c1 <= 0:
        raise ConfigError("delta must lie in (0, 1) and c1 must be positive")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(doc, path.stem, path.parent)


def preset_path(name: str) -> Path:
    p = PRESET_DIR / f"{name}.toml"
    if not p.exists():
        raise ConfigError(f"no preset named {name!r}")
    return p


def list_presets() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.toml"))
