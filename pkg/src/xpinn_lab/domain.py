"""Box domains, domain decompositions, and seeded collocation sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CoverageError, DomainError, InvalidInputError

TIE_TOL = 1e-12


@dataclass(frozen=True)
class Face:
    """One face of a box: ``axis`` pinned at its lower (side 0) or upper (side 1) bound.

    ``kind`` is ``"dirichlet"`` (u = g there) or ``"periodic"`` (u here equals
    u on the opposite face of the same axis; the pair is counted once).
    """

    axis: int
    side: int
    kind: str = "dirichlet"


@dataclass(frozen=True)
class Box:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    faces: tuple[Face, ...] = ()
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise InvalidInputError("lower and upper bounds differ in length")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise InvalidInputError(f"empty box {self.lower} .. {self.upper}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, pts: np.ndarray, tol: float = TIE_TOL) -> np.ndarray:
        pts = np.atleast_2d(pts)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)

    def face_measure(self, face: Face) -> float:
        return math.prod(hi - lo for a, (lo, hi) in enumerate(zip(self.lower, self.upper)) if a != face.axis)

    def sample_face(self, face: Face, n: int, rng: np.random.Generator) -> np.ndarray:
        pts = rng.uniform(self.lower, self.upper, size=(n, self.dim))
        pts[:, face.axis] = self.lower[face.axis] if face.side == 0 else self.upper[face.axis]
        return pts

    def partner(self, pts: np.ndarray, face: Face) -> np.ndarray:
        out = pts.copy()
        out[:, face.axis] = self.upper[face.axis] if face.side == 0 else self.lower[face.axis]
        return out


@dataclass(frozen=True)
class Interface:
    """Shared boundary of subdomains ``i`` and ``j`` as a union of straight segments.

    ``normals`` holds one unit normal per segment pointing from ``i`` into ``j``.
    """

    i: int
    j: int
    segments: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]
    normals: tuple[tuple[float, ...], ...] = ()

    @property
    def length(self) -> float:
        return sum(math.dist(a, b) for a, b in self.segments)

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        lengths = np.array([math.dist(a, b) for a, b in self.segments])
        which = rng.choice(len(self.segments), size=n, p=lengths / lengths.sum())
        s = rng.uniform(0.0, 1.0, size=n)
        p0 = np.array([a for a, _ in self.segments])[which]
        p1 = np.array([b for _, b in self.segments])[which]
        pts = p0 + s[:, None] * (p1 - p0)
        return pts, np.array(self.normals)[which]


@dataclass(frozen=True)
class Decomposition:
    """Ordered membership predicates; a point belongs to the first that accepts it."""

    name: str
    domain: Box
    subdomain_names: tuple[str, ...]
    predicates: tuple[Callable[[np.ndarray], np.ndarray], ...]
    interfaces: tuple[Interface, ...] = ()
    default_interface_points: int | None = None

    @property
    def n_sub(self) -> int:
        return len(self.predicates)

    def assign_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if not np.all(self.domain.contains(pts)):
            raise DomainError(f"{int(np.sum(~self.domain.contains(pts)))} point(s) outside the domain")
        owner = np.full(pts.shape[0], -1)
        for k, pred in enumerate(self.predicates):
            free = owner < 0
            if not np.any(free):
                break
            # points within TIE_TOL of a cut count as on it, so rounding cannot flip a tie
            hit = np.asarray(pred(pts[free], TIE_TOL), dtype=bool)
            idx = np.flatnonzero(free)[hit]
            owner[idx] = k
        if np.any(owner < 0):
            raise CoverageError(f"{int(np.sum(owner < 0))} point(s) not covered by decomposition {self.name!r}")
        return owner

    def member(self, k: int, pts: np.ndarray, tol: float = TIE_TOL) -> np.ndarray:
        """Closure membership of subdomain ``k`` (tolerant, ignores tie-breaking)."""
        return np.asarray(self.predicates[k](np.atleast_2d(pts), tol), dtype=bool)


def assign(decomposition: Decomposition, point) -> int:
    return int(decomposition.assign_many(np.asarray(point, dtype=np.float64).reshape(1, -1))[0])


def trivial_decomposition(domain: Box) -> Decomposition:
    return Decomposition("single", domain, ("all",), (lambda p, tol=0.0: np.ones(len(p), dtype=bool),))


def _halfspace(axis, bound, below):
    if below:
        return lambda p, tol=0.0: p[:, axis] <= bound + tol
    return lambda p, tol=0.0: p[:, axis] >= bound - tol


def _with_normals(dec: Decomposition) -> Decomposition:
    fixed = []
    for itf in dec.interfaces:
        normals = []
        for a, b in itf.segments:
            a, b = np.asarray(a), np.asarray(b)
            tangent = (b - a) / np.linalg.norm(b - a)
            nrm = np.array([-tangent[1], tangent[0]])
            probe = ((a + b) / 2 + 1e-6 * nrm)[None, :]
            if dec.assign_many(probe)[0] != itf.j:
                nrm = -nrm
            normals.append(tuple(nrm.tolist()))
        fixed.append(Interface(itf.i, itf.j, itf.segments, tuple(normals)))
    return Decomposition(dec.name, dec.domain, dec.subdomain_names, dec.predicates, tuple(fixed), dec.default_interface_points)


XT_BOX = dict(lower=(-1.0, 0.0), upper=(1.0, 1.0), names=("x", "t"))


def builtin_decompositions(name: str) -> Decomposition:
    if name == "kdv":
        dom = kdv_domain()
        cut = -0.74
        dec = Decomposition(
            "kdv", dom, ("XPINN-L", "XPINN-R"),
            (_halfspace(0, cut, True), _halfspace(0, cut, False)),
            (Interface(0, 1, (((cut, 0.0), (cut, 1.0)),)),),
            default_interface_points=10_000,
        )
    elif name == "heat":
        dom = heat_domain()
        dec = Decomposition(
            "heat", dom, ("XPINN-B", "XPINN-T"),
            (_halfspace(1, 0.5, True), _halfspace(1, 0.5, False)),
            (Interface(0, 1, (((-1.0, 0.5), (1.0, 0.5)),)),),
        )
    elif name == "advection":
        dom = heat_domain()

        def shift(p):
            return p[:, 0] - 0.5 * p[:, 1]

        # the middle band is open, so it comes last and loses both tie lines
        dec = Decomposition(
            "advection", dom, ("XPINN-L", "XPINN-R", "XPINN-M"),
            (
                lambda p, tol=0.0: shift(p) <= -0.2 + tol,
                lambda p, tol=0.0: shift(p) >= 0.2 - tol,
                lambda p, tol=0.0: (shift(p) >= -0.2 - tol) & (shift(p) <= 0.2 + tol),
            ),
            (
                Interface(0, 2, (((-0.2, 0.0), (0.3, 1.0)),)),
                Interface(1, 2, (((0.2, 0.0), (0.7, 1.0)),)),
            ),
        )
    elif name == "poisson":
        dom = poisson_domain()
        lo, hi = 0.25, 0.75

        def middle(p, tol=0.0):
            return np.all((p >= lo - tol) & (p <= hi + tol), axis=1)

        corners = [(lo, lo), (hi, lo), (hi, hi), (lo, hi)]
        segs = tuple((corners[k], corners[(k + 1) % 4]) for k in range(4))
        dec = Decomposition(
            "poisson", dom, ("XPINN-M", "XPINN-A"),
            (middle, lambda p, tol=0.0: ~middle(p, -tol)),
            (Interface(0, 1, segs),),
        )
    else:
        raise KeyError(f"no built-in decomposition named {name!r}")
    return _with_normals(dec)


def heat_domain() -> Box:
    return Box(**XT_BOX, faces=(Face(0, 0), Face(0, 1), Face(1, 0)))


def kdv_domain() -> Box:
    return Box(**XT_BOX, faces=(Face(1, 0), Face(0, 0, "periodic")))


def poisson_domain() -> Box:
    return Box((0.0, 0.0), (1.0, 1.0), (Face(0, 0), Face(0, 1), Face(1, 0), Face(1, 1)), ("x", "y"))


# -- training sets -----------------------------------------------------------------

@dataclass
class SampleCounts:
    n_b: int
    n_r: int
    n_i: int | None = None
    n_r_sub: list[int] | None = None
    n_b_sub: list[int] | None = None

    def __post_init__(self):
        if self.n_b < 1 or self.n_r < 1 or (self.n_i is not None and self.n_i < 1):
            raise InvalidInputError("point counts must be positive")


@dataclass
class TrainingSet:
    boundary: np.ndarray
    boundary_values: np.ndarray
    boundary_owner: np.ndarray
    residual: np.ndarray
    residual_owner: np.ndarray
    # periodic items: ``boundary_partner[k]`` is the matching point, NaN rows for Dirichlet items
    boundary_partner: np.ndarray
    partner_owner: np.ndarray
    interfaces: dict = field(default_factory=dict)  # (i, j) -> (points, normals i->j)
    n_sub: int = 1
    seed: int = 0

    @property
    def n_b(self) -> int:
        return self.boundary.shape[0]

    @property
    def n_r(self) -> int:
        return self.residual.shape[0]

    @property
    def periodic(self) -> np.ndarray:
        return ~np.isnan(self.boundary_partner[:, 0])

    def n_b_sub(self) -> list[int]:
        return np.bincount(self.boundary_owner, minlength=self.n_sub).tolist()

    def n_r_sub(self) -> list[int]:
        return np.bincount(self.residual_owner, minlength=self.n_sub).tolist()

    def restrict(self, k: int) -> "TrainingSet":
        """Points owned by subdomain ``k`` (interfaces dropped)."""
        b = self.boundary_owner == k
        r = self.residual_owner == k
        return TrainingSet(
            self.boundary[b], self.boundary_values[b], np.zeros(int(b.sum()), dtype=int),
            self.residual[r], np.zeros(int(r.sum()), dtype=int),
            self.boundary_partner[b], np.zeros(int(b.sum()), dtype=int), {}, 1, self.seed,
        )


def _split_counts(total: int, weights: list[float]) -> list[int]:
    """Largest-remainder apportionment of ``total`` proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    if total == 0:
        return [0] * len(w)
    raw = total * w / w.sum()
    base = np.floor(raw).astype(int)
    rest = total - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:rest]] += 1
    return base.tolist()


def _interior(domain: Box, n: int, rng, accept=None) -> np.ndarray:
    out = []
    have = 0
    while have < n:
        batch = rng.uniform(domain.lower, domain.upper, size=(max(2 * (n - have), 16), domain.dim))
        strict = np.all((batch > np.asarray(domain.lower)) & (batch < np.asarray(domain.upper)), axis=1)
        batch = batch[strict]
        if accept is not None:
            batch = batch[accept(batch)]
        out.append(batch)
        have += batch.shape[0]
    return np.concatenate(out)[:n]


def _owned_fraction(domain: Box, face: Face, accept) -> float:
    """Share of a face lying in the accepted region, from a fixed midpoint lattice."""
    free = [a for a in range(domain.dim) if a != face.axis]
    m = 2048 if len(free) == 1 else 64
    axes = [domain.lower[a] + (np.arange(m) + 0.5) / m * (domain.upper[a] - domain.lower[a]) for a in free]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(free))
    pts = np.empty((grid.shape[0], domain.dim))
    pts[:, free] = grid
    pts[:, face.axis] = domain.lower[face.axis] if face.side == 0 else domain.upper[face.axis]
    return float(np.mean(accept(pts)))


def _boundary(domain: Box, n: int, rng, accept=None):
    faces = list(domain.faces)
    share = [1.0 if accept is None else _owned_fraction(domain, f, accept) for f in faces]
    if n > 0 and sum(share) == 0:
        raise CoverageError("subdomain owns no labelled boundary")
    counts = _split_counts(n, [domain.face_measure(f) * s for f, s in zip(faces, share)])
    pts, partners = [], []
    for face, m in zip(faces, counts):
        got, have = [], 0
        while have < m:
            batch = domain.sample_face(face, max(2 * (m - have), 16), rng)
            if accept is not None:
                batch = batch[accept(batch)]
            got.append(batch)
            have += batch.shape[0]
        p = np.concatenate(got)[:m] if got else np.zeros((0, domain.dim))
        pts.append(p)
        partners.append(domain.partner(p, face) if face.kind == "periodic" else np.full_like(p, np.nan))
    return np.concatenate(pts), np.concatenate(partners)


def sample(domain: Box, counts: SampleCounts, seed: int, decomposition: Decomposition | None = None,
           boundary_data: Callable[[np.ndarray], np.ndarray] | None = None) -> TrainingSet:
    """Uniform i.i.d. collocation points; deterministic for a given seed.

    Without per-subdomain counts the points are drawn over the whole domain
    and then assigned; with ``n_r_sub`` / ``n_b_sub`` each subdomain's points
    are drawn by rejection inside it. Interface points are drawn on every
    interface of the decomposition.
    """
    dec = decomposition or trivial_decomposition(domain)
    rng = np.random.default_rng([seed, 1])
    if counts.n_r_sub is not None:
        if len(counts.n_r_sub) != dec.n_sub:
            raise InvalidInputError("n_r_sub needs one count per subdomain")
        res = np.concatenate([
            _interior(domain, m, rng, lambda p, k=k: dec.assign_many(p) == k) for k, m in enumerate(counts.n_r_sub)
        ])
    else:
        res = _interior(domain, counts.n_r, rng)
    if counts.n_b_sub is not None:
        if len(counts.n_b_sub) != dec.n_sub:
            raise InvalidInputError("n_b_sub needs one count per subdomain")
        parts = [_boundary(domain, m, rng, lambda p, k=k: dec.assign_many(p) == k) for k, m in enumerate(counts.n_b_sub)]
        bnd = np.concatenate([p for p, _ in parts])
        partner = np.concatenate([q for _, q in parts])
    else:
        bnd, partner = _boundary(domain, counts.n_b, rng)
    res_owner = dec.assign_many(res)
    bnd_owner = dec.assign_many(bnd)
    periodic = ~np.isnan(partner[:, 0])
    partner_owner = bnd_owner.copy()
    if np.any(periodic):
        partner_owner[periodic] = dec.assign_many(partner[periodic])
    values = np.zeros(bnd.shape[0])
    if boundary_data is not None and np.any(~periodic):
        values[~periodic] = boundary_data(bnd[~periodic])
    itfs = {}
    for itf in dec.interfaces:
        n_i = counts.n_i or dec.default_interface_points or max(64, counts.n_r // 10)
        itfs[(itf.i, itf.j)] = itf.sample(n_i, rng)
    return TrainingSet(bnd, values, bnd_owner, res, res_owner, partner, partner_owner, itfs, dec.n_sub, seed)
