"""Posterior generalization bounds, complexity products and the prior Barron-norm comparison."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidInputError, UnsupportedTargetError
from .linalg import norm_2_1, spectral_norm
from .network import Mlp

SNAP_RTOL = 1e-12
TIE_RTOL = 1e-12


def _ceil(v: float) -> int:
    """Ceiling that treats values within 1e-12 relative of an integer as that integer."""
    r = round(v)
    if abs(v - r) <= SNAP_RTOL * max(1.0, abs(v)):
        return int(r)
    return math.ceil(v)


@dataclass(frozen=True)
class LayerCaps:
    M: tuple[int, ...]
    N: tuple[int, ...]
    spectral: tuple[float, ...]
    norm21: tuple[float, ...]
    include_bias: bool = False

    @property
    def depth(self) -> int:
        return len(self.M)

    @classmethod
    def ones(cls, depth: int) -> "LayerCaps":
        return cls((1,) * depth, (1,) * depth, (1.0,) * depth, (1.0,) * depth)


def layer_caps(net: Mlp, include_bias: bool = False) -> LayerCaps:
    """``M(l) = ceil ||W||_2`` and ``N(l) = ceil(||W||_{2,1} / ||W||_2)``; a zero layer gets M = N = 1."""
    mats = net.augmented_weights() if include_bias else net.weights
    M, N, sp, n21 = [], [], [], []
    for w in mats:
        s = spectral_norm(w)
        c = norm_2_1(w)
        sp.append(s)
        n21.append(c)
        if s == 0.0:
            M.append(1)
            N.append(1)
        else:
            M.append(max(1, _ceil(s)))
            N.append(max(1, _ceil(c / s)))
    return LayerCaps(tuple(M), tuple(N), tuple(sp), tuple(n21), include_bias)


def delta_split(delta: float, caps: LayerCaps) -> float:
    """``delta / prod_l M(l)(M(l)+1)N(l)(N(l)+1)``."""
    if not 0.0 < delta < 1.0:
        raise InvalidInputError(f"delta must lie in (0, 1), got {delta}")
    denom = 1
    for m, n in zip(caps.M, caps.N):
        denom *= m * (m + 1) * n * (n + 1)
    return delta / denom


@dataclass(frozen=True)
class BoundInputs:
    caps: LayerCaps
    n: int
    d: int
    h: int
    K: float = 1.0
    delta: float = 0.1

    def __post_init__(self):
        if self.n < 2:
            raise InvalidInputError(f"at least two samples are needed (log n > 0), got n={self.n}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidInputError("delta must lie in (0, 1)")
        if self.d < 1 or self.h < 1 or self.K < 0:
            raise InvalidInputError("d and h must be positive and K nonnegative")
        if min(self.caps.M) < 1 or min(self.caps.N) < 1:
            raise InvalidInputError("caps must be at least 1")

    @property
    def L(self) -> int:
        return self.caps.depth


def _common(inp: BoundInputs):
    prod_m = math.prod(inp.caps.M)
    sum_n = sum(v ** (2.0 / 3.0) for v in inp.caps.N)
    stat = 2.0 * math.sqrt(math.log(2.0 / delta_split(inp.delta, inp.caps)) / (2.0 * inp.n))
    rate = math.sqrt(inp.d * math.log(2.0 * inp.h * inp.h)) * math.log(inp.n) / math.sqrt(inp.n)
    return prod_m, sum_n**1.5, stat, rate


def residual_bound(inp: BoundInputs, empirical: float = 0.0) -> float:
    """Residual-loss bound; ``empirical`` (default 0) adds the training residual loss."""
    prod_m, cap_n, stat, rate = _common(inp)
    L, d, K, n = inp.L, inp.d, inp.K, inp.n
    first = (64 * K + 32 * d * (L - 1) * K) / (n * math.sqrt(n))
    bracket = 1 + math.sqrt(2) * L * prod_m + math.sqrt(2) * d * (L * L - 1) * prod_m**2
    return empirical + first + stat + 144 * K * rate * prod_m * cap_n * bracket


def boundary_bound(inp: BoundInputs, empirical: float = 0.0) -> float:
    """Boundary-loss bound; independent of K."""
    prod_m, cap_n, stat, rate = _common(inp)
    n = inp.n
    return empirical + 32 / (n * math.sqrt(n)) + 144 * rate * prod_m * cap_n + stat


def xpinn_aggregate(bounds, counts) -> float:
    """Count-weighted average ``sum_i (n_i / sum n) B_i``."""
    bounds = [float(b) for b in bounds]
    counts = [float(c) for c in counts]
    if len(bounds) != len(counts) or not bounds:
        raise InvalidInputError("bounds and counts must be non-empty and of equal length")
    if any(c < 0 for c in counts) or sum(counts) <= 0:
        raise InvalidInputError("counts must be nonnegative with a positive sum")
    total = sum(counts)
    return float(sum(b * c / total for b, c in zip(bounds, counts) if c > 0))


def l2_bound(boundary: float, residual: float, c1: float = 1.0) -> float:
    """``sqrt(2)/C1 * sqrt(boundary + residual)``."""
    if not c1 > 0:
        raise InvalidInputError(f"C1 must be positive, got {c1}")
    if boundary < 0 or residual < 0:
        raise InvalidInputError("bounds must be nonnegative")
    return math.sqrt(2.0) / c1 * math.sqrt(boundary + residual)


@dataclass(frozen=True)
class Complexity:
    spectral_product: float  # prod_l ||W^l||_2, raw
    full_product: float  # prod_l M(l) * (sum_l N(l)^(2/3))^(3/2)


def complexity(net: Mlp, include_bias: bool = False) -> Complexity:
    caps = layer_caps(net, include_bias)
    full = math.prod(caps.M) * sum(v ** (2.0 / 3.0) for v in caps.N) ** 1.5
    return Complexity(float(math.prod(caps.spectral)), float(full))


# -- per-network reports -------------------------------------------------------------

@dataclass
class BoundReport:
    caps: LayerCaps
    delta: float
    delta_mn: float
    n_b: int
    n_r: int
    d: int
    h: int
    L: int
    K: float
    c1: float
    boundary_bound: float | None
    residual_bound: float | None
    l2_bound: float | None
    complexity_spectral: float
    complexity_full: float
    include_bias: bool = False
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["caps"] = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.caps).items()}
        return out


def bound_report(net: Mlp, n_b: int, n_r: int, K: float = 1.0, delta: float = 0.1, c1: float = 1.0,
                 include_bias: bool = False, flags=()) -> BoundReport:
    """All bound quantities for one trained network.

    With ``include_bias`` each layer is the augmented ``[W | b]`` and both the
    input dimension and the width grow by one. A count below 2 leaves that
    bound as ``None``.
    """
    caps = layer_caps(net, include_bias)
    d = net.input_dim + (1 if include_bias else 0)
    h = net.max_width + (1 if include_bias else 0)
    res = residual_bound(BoundInputs(caps, n_r, d, h, K, delta)) if n_r >= 2 else None
    bnd = boundary_bound(BoundInputs(caps, n_b, d, h, K, delta)) if n_b >= 2 else None
    l2 = l2_bound(bnd, res, c1) if (bnd is not None and res is not None) else None
    cx = complexity(net, include_bias)
    return BoundReport(caps, delta, delta_split(delta, caps), n_b, n_r, d, h, caps.depth, K, c1, bnd, res, l2,
                       cx.spectral_product, cx.full_product, include_bias, list(flags))


def xpinn_reports(nets, n_b_sub, n_r_sub, K: float = 1.0, delta: float = 0.1, c1: float = 1.0,
                  include_bias: bool = False, flags=()) -> list[BoundReport]:
    """Per-sub-net reports with the confidence budget split evenly (delta / N_D each)."""
    share = delta / len(nets)
    return [bound_report(net, nb, nr, K, share, c1, include_bias, flags) for net, nb, nr in zip(nets, n_b_sub, n_r_sub)]


# -- PINN vs XPINN comparison -----------------------------------------------------------

CSV_COLUMNS = ("model", "train_loss", "rel_l2", "complexity_spectral_pct", "bound_pct", "bound_raw")


def _pct(value, ref):
    if value is None or ref is None or ref == 0:
        return None
    return 100.0 * value / ref


def _verdict(pinn: float, xpinn: float) -> str:
    if abs(pinn - xpinn) <= TIE_RTOL * max(abs(pinn), abs(xpinn)):
        return "tie"
    return "PINN" if pinn < xpinn else "XPINN"


@dataclass
class ComparisonReport:
    rows: list[dict]
    pinn_residual: float
    xpinn_residual: float
    pinn_boundary: float | None
    xpinn_boundary: float | None
    pinn_l2: float | None
    xpinn_l2: float | None
    verdict: str
    l2_verdict: str | None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        """Aligned-column CSV of the table rows."""
        cells = [list(CSV_COLUMNS)]
        for r in self.rows:
            cells.append([_fmt_cell(r.get(c)) for c in CSV_COLUMNS])
        widths = [max(len(row[i]) for row in cells) for i in range(len(CSV_COLUMNS))]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for row in cells:
            w.writerow([v.ljust(widths[i]) if i < len(row) - 1 else v for i, v in enumerate(row)])
        return buf.getvalue()


def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return format(float(v), ".6g")


def compare_posterior(pinn: BoundReport, xpinn: list[BoundReport], n_r_sub, n_b_sub,
                      labels=None, pinn_label: str = "PINN", xpinn_label: str = "XPINN",
                      pinn_metrics: dict | None = None, xpinn_metrics: dict | None = None) -> ComparisonReport:
    """PINN against the count-weighted XPINN aggregate, PINN normalized to 100%.

    The residual aggregate weights sub-nets by n_{r,i}, the boundary one by
    n_{b,i}; the L2 comparison sums the two aggregates before the square root.
    """
    labels = labels or [f"{xpinn_label}-{k}" for k in range(len(xpinn))]
    if not (len(xpinn) == len(n_r_sub) == len(n_b_sub) == len(labels)):
        raise InvalidInputError("one count pair and label per sub-net is required")
    if pinn.residual_bound is None:
        raise InvalidInputError("PINN report has no residual bound")
    res_i = [r.residual_bound if r.residual_bound is not None else 0.0 for r in xpinn]
    res_w = [c if r.residual_bound is not None else 0 for r, c in zip(xpinn, n_r_sub)]
    x_res = xpinn_aggregate(res_i, res_w)
    bnd_pairs = [(r.boundary_bound, c) for r, c in zip(xpinn, n_b_sub) if r.boundary_bound is not None and c > 0]
    x_bnd = xpinn_aggregate([b for b, _ in bnd_pairs], [c for _, c in bnd_pairs]) if bnd_pairs else None
    x_l2 = l2_bound(x_bnd, x_res, pinn.c1) if x_bnd is not None else None
    pm, xm = pinn_metrics or {}, xpinn_metrics or {}
    rows = [{
        "model": pinn_label, "role": "pinn",
        "train_loss": pm.get("train_loss"), "rel_l2": pm.get("rel_l2"),
        "complexity_spectral_pct": 100.0, "complexity_full_pct": 100.0,
        "bound_pct": 100.0, "bound_raw": pinn.residual_bound,
        "boundary_pct": 100.0 if pinn.boundary_bound is not None else None, "boundary_raw": pinn.boundary_bound,
        "l2_pct": 100.0 if pinn.l2_bound is not None else None, "l2_raw": pinn.l2_bound,
    }, {
        "model": xpinn_label, "role": "xpinn",
        "train_loss": xm.get("train_loss"), "rel_l2": xm.get("rel_l2"),
        "complexity_spectral_pct": None, "complexity_full_pct": None,
        "bound_pct": _pct(x_res, pinn.residual_bound), "bound_raw": x_res,
        "boundary_pct": _pct(x_bnd, pinn.boundary_bound), "boundary_raw": x_bnd,
        "l2_pct": _pct(x_l2, pinn.l2_bound), "l2_raw": x_l2,
    }]
    for label, r in zip(labels, xpinn):
        rows.append({
            "model": label, "role": "subnet", "train_loss": None, "rel_l2": None,
            "complexity_spectral_pct": _pct(r.complexity_spectral, pinn.complexity_spectral),
            "complexity_full_pct": _pct(r.complexity_full, pinn.complexity_full),
            "bound_pct": None, "bound_raw": r.residual_bound,
            "boundary_pct": None, "boundary_raw": r.boundary_bound, "l2_pct": None, "l2_raw": None,
        })
    l2v = _verdict(pinn.l2_bound, x_l2) if (pinn.l2_bound is not None and x_l2 is not None) else None
    return ComparisonReport(rows, pinn.residual_bound, x_res, pinn.boundary_bound, x_bnd, pinn.l2_bound, x_l2,
                            _verdict(pinn.residual_bound, x_res), l2v)


# -- prior comparison with sinusoid targets ----------------------------------------------

@dataclass(frozen=True)
class Segment:
    start: tuple[float, ...]
    end: tuple[float, ...]


@dataclass(frozen=True)
class SinusoidTarget:
    """``u(x) = sum_i a_i sin(x_{axis_i})``."""

    terms: tuple[tuple[float, int], ...]

    def __post_init__(self):
        if any(not math.isfinite(a) for a, _ in self.terms):
            raise InvalidInputError("coefficients must be finite")


def barron_norm(target: SinusoidTarget, region, tol: float = 1e-15) -> float:
    """Sum of |a_i| over terms whose argument varies on ``region`` (a segment or a list of them).

    A term that is constant and zero on the region contributes nothing; one
    constant at a nonzero value is rejected.
    """
    segs = [region] if isinstance(region, Segment) else list(region)
    total = 0.0
    for a, axis in target.terms:
        if a == 0:
            continue
        if any(abs(s.end[axis] - s.start[axis]) > tol for s in segs):
            total += abs(a)
            continue
        if any(abs(math.sin(s.start[axis])) > tol for s in segs):
            raise UnsupportedTargetError(
                f"term {a}*sin(x{axis}) is constant but nonzero on the region; its Barron norm is not defined here")
    return total


@dataclass(frozen=True)
class PriorComparison:
    pinn: float
    xpinn: float
    verdict: str
    norms: tuple[float, ...]
    whole_norm: float


def prior_compare(target: SinusoidTarget, subdomains, n_r: int | None = None, n_r_sub=None,
                  asymptotic: bool = False) -> PriorComparison:
    """``||u||^3`` on the whole region against ``sum_i (log n_i sqrt n_i)/(log n sqrt n) ||u||_i^3``.

    ``asymptotic`` drops the log ratio (large-n limit), leaving ``sqrt(n_i/n)``;
    then only the proportions of ``n_r_sub`` matter and equal shares are the default.
    """
    subdomains = list(subdomains)
    whole = barron_norm(target, subdomains)
    norms = tuple(barron_norm(target, s) for s in subdomains)
    if n_r_sub is None:
        if not asymptotic and n_r is None:
            raise InvalidInputError("counts are required unless asymptotic")
        n_r = n_r if n_r is not None else len(subdomains)
        n_r_sub = [n_r / len(subdomains)] * len(subdomains)
    n_r = n_r if n_r is not None else sum(n_r_sub)
    if not asymptotic and (n_r < 2 or min(n_r_sub) < 2):
        raise InvalidInputError("every count must be at least 2")
    if asymptotic:
        factors = [math.sqrt(ni / n_r) for ni in n_r_sub]
    else:
        factors = [math.log(ni) * math.sqrt(ni) / (math.log(n_r) * math.sqrt(n_r)) for ni in n_r_sub]
    pinn_q = whole**3
    xpinn_q = sum(f * v**3 for f, v in zip(factors, norms))
    return PriorComparison(pinn_q, xpinn_q, _verdict(pinn_q, xpinn_q), norms, whole)


SQRT_HALF = math.sqrt(2.0) / 2.0


def example(name: str, q: float | None = None) -> tuple[SinusoidTarget, list[Segment]]:
    """The analytic broken-line examples ``"4.1"``, ``"4.2"`` and ``"4.3"`` (the latter with ``q``)."""
    horizontal = Segment((0.0, 0.0), (1.0, 0.0))
    if name == "4.1":
        return SinusoidTarget(((2.0, 0), (1.0, 1))), [horizontal, Segment((0.0, 0.0), (0.0, 1.0))]
    diagonal = Segment((0.0, 0.0), (SQRT_HALF, SQRT_HALF))
    if name == "4.2":
        return SinusoidTarget(((2.0, 0), (0.5, 1))), [horizontal, diagonal]
    if name == "4.3":
        if q is None or q < 0:
            raise InvalidInputError("example 4.3 needs q >= 0")
        return SinusoidTarget(((2.0, 0), (float(q), 1))), [horizontal, diagonal]
    raise KeyError(f"unknown example {name!r}")


def tradeoff_threshold(lo: float = 0.0, hi: float = 10.0, tol: float = 1e-12) -> float:
    """Smallest q at which the decomposed model wins the asymptotic prior comparison (bisection)."""

    def gap(q):
        c = prior_compare(*example("4.3", q), asymptotic=True)
        return c.pinn - c.xpinn

    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo * g_hi > 0:
        raise InvalidInputError("threshold not bracketed")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (gap(mid) > 0) == (g_hi > 0):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
