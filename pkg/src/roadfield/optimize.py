"""Search over road families for the largest efficiency ratio.

Candidates come from a parametrized family (grid enumeration) and can be
improved by a greedy coordinate search.  Every emitted candidate is a valid
connected network inside the field whose length respects the budget.
"""
from __future__ import annotations

import itertools
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import EfficiencyReport, efficiency_report
from .assembly import CouplingParams, build_system
from .errors import GeometryError, RoadFieldError, SearchError
from .meshing import DomainGeometry, _check_road_against_boundary, triangulate
from .network import RoadNetwork, locate, total_length, validate_network
from .spectral import dirichlet_gamma, smallest_eigenpairs

KINDS = ("segment-bundle", "cross", "comb", "tree", "user-list")

DEFAULT_RANGES = {
    "segment-bundle": {"s0": (0.0, 1.0), "s1": (0.0, 1.0)},
    "cross": {"cx": (0.2, 0.8), "cy": (0.2, 0.8), "r": (0.05, 0.25), "theta": (0.0, math.pi / 2)},
    "comb": {"y": (0.2, 0.8), "x0": (0.1, 0.4), "x1": (0.6, 0.9), "tooth": (0.05, 0.3)},
    "tree": {"cx": (0.2, 0.8), "cy": (0.2, 0.8), "r": (0.05, 0.3), "theta": (0.0, math.pi)},
    "user-list": {},
}


MOORE_MAX_DIM = 4


class Infeasible(Exception):
    """Parameter point does not produce an admissible road."""


@dataclass(frozen=True)
class RoadFamilySpec:
    """Family of candidate roads and the constraints they must satisfy.

    ``ranges`` maps free parameter names to ``(lo, hi)``; ``resolution`` is
    the number of grid points per parameter (an int, or a dict by name).  ``options`` holds fixed
    family settings (``count`` for segment bundles, ``teeth`` for combs,
    ``arms`` for trees).  ``networks`` is only used by ``user-list``.

    Segment bundles are fans of ``count`` chords from the boundary point at
    perimeter fraction ``s0`` to the points at ``s1 .. s{count}``; the
    perimeter is walked counterclockwise from the first polygon vertex.
    """

    kind: str
    budget: float
    required_points: tuple = ()
    boundary_anchored: bool = False
    ranges: dict = field(default_factory=dict)
    resolution: int | dict = 5
    options: dict = field(default_factory=dict)
    networks: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SearchError(f"unknown family kind {self.kind!r}; expected one of {KINDS}")
        if not self.budget > 0:
            raise SearchError("length budget must be positive")
        ranges = dict(DEFAULT_RANGES[self.kind])
        if self.kind == "segment-bundle":
            count = int(self.options.get("count", 1))
            for k in range(count + 1):
                ranges.setdefault(f"s{k}", (0.0, 1.0))
            ranges = {f"s{k}": ranges[f"s{k}"] for k in range(count + 1)}
        ranges.update({k: tuple(map(float, v)) for k, v in self.ranges.items()})
        object.__setattr__(self, "ranges", ranges)
        if any(r < 1 for r in self._res(None).values()):
            raise SearchError("resolution must be at least 1")

    def _res(self, resolution) -> dict:
        res = self.resolution if resolution is None else resolution
        if isinstance(res, dict):
            return {n: int(res.get(n, 5)) for n in self.ranges}
        return {n: int(res) for n in self.ranges}

    @property
    def names(self) -> tuple:
        if self.kind == "user-list":
            return ("index",)
        return tuple(self.ranges)

    def grid(self, resolution=None):
        """Deterministic tensor grid over the free parameters."""
        if self.kind == "user-list":
            return [{"index": i} for i in range(len(self.networks))]
        res = self._res(resolution)
        axes = []
        for name in self.names:
            lo, hi = self.ranges[name]
            n = res[name]
            axes.append(np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)]))
        return [dict(zip(self.names, map(float, pt))) for pt in itertools.product(*axes)]

    def step(self, resolution=None) -> dict:
        res = self._res(resolution)
        return {n: (hi - lo) / max(res[n] - 1, 1) for n, (lo, hi) in self.ranges.items()}


@dataclass(frozen=True)
class Candidate:
    id: str
    params: dict
    net: RoadNetwork

    @property
    def length(self) -> float:
        return total_length(self.net)


# ---------------------------------------------------------------------------
# family builders


def perimeter_point(domain: DomainGeometry, s: float) -> np.ndarray:
    """Point at fraction ``s`` (mod 1) of the perimeter, counterclockwise."""
    a, b = domain.edges
    seg = np.hypot(*(b - a).T)
    cum = np.r_[0.0, np.cumsum(seg)]
    target = (s % 1.0) * cum[-1]
    k = min(int(np.searchsorted(cum, target, side="right")) - 1, len(seg) - 1)
    t = (target - cum[k]) / seg[k]
    if t <= 1e-12:
        return a[k].copy()
    if t >= 1 - 1e-12:
        return b[k].copy()
    return a[k] + t * (b[k] - a[k])


def _dedupe(points, edges, tol):
    """Merge coincident points and drop degenerate or repeated edges."""
    out, index = [], []
    for p in points:
        for k, q in enumerate(out):
            if np.hypot(*(p - q)) <= tol:
                index.append(k)
                break
        else:
            out.append(np.asarray(p, float))
            index.append(len(out) - 1)
    es = set()
    for i, j in edges:
        a, b = index[i], index[j]
        if a == b:
            raise Infeasible("degenerate edge")
        es.add((min(a, b), max(a, b)))
    return np.asarray(out), sorted(es)


def _build_raw(spec: RoadFamilySpec, domain: DomainGeometry, p: dict):
    k = spec.kind
    o = spec.options
    if k == "segment-bundle":
        count = int(o.get("count", 1))
        hub = perimeter_point(domain, p["s0"])
        pts = [hub] + [perimeter_point(domain, p[f"s{i}"]) for i in range(1, count + 1)]
        return pts, [(0, i) for i in range(1, count + 1)]
    if k == "cross":
        c = np.array([p["cx"], p["cy"]])
        u = p["r"] * np.array([math.cos(p["theta"]), math.sin(p["theta"])])
        w = np.array([-u[1], u[0]])
        return [c, c + u, c - u, c + w, c - w], [(0, 1), (0, 2), (0, 3), (0, 4)]
    if k == "comb":
        n = int(o.get("teeth", 3))
        y, x0, x1, t = p["y"], p["x0"], p["x1"], p["tooth"]
        if x1 <= x0:
            raise Infeasible("empty spine")
        xs = np.linspace(x0, x1, n)
        pts = [np.array([x, y]) for x in xs] + [np.array([x, y + t]) for x in xs]
        edges = [(i, i + 1) for i in range(n - 1)] + [(i, n + i) for i in range(n)]
        return pts, edges
    if k == "tree":
        n = int(o.get("arms", 3))
        c = np.array([p["cx"], p["cy"]])
        pts = [c] + [c + p["r"] * np.array([math.cos(p["theta"] + 2 * math.pi * i / n), math.sin(p["theta"] + 2 * math.pi * i / n)]) for i in range(n)]
        return pts, [(0, i) for i in range(1, n + 1)]
    net = spec.networks[int(p["index"])]
    return list(net.vertices), [tuple(e) for e in net.edges]


def admissible(spec: RoadFamilySpec, domain: DomainGeometry, net: RoadNetwork) -> RoadNetwork:
    """Return ``net`` with geometric boundary flags, or raise :class:`Infeasible`."""
    tol = 1e-9 * domain.diameter()
    flags = [domain.on_boundary(x, tol) for x in net.vertices]
    net = RoadNetwork(net.vertices, net.edges, flags)
    report = validate_network(net, domain)
    if not report.valid:
        raise Infeasible("; ".join(report.problems()))
    length = total_length(net)
    if length > spec.budget * (1 + 1e-12):
        raise Infeasible(f"length {length:.6g} exceeds budget {spec.budget:.6g}")
    try:
        _check_road_against_boundary(domain, net, tol)
    except GeometryError as exc:
        raise Infeasible(str(exc)) from None
    for q in spec.required_points:
        try:
            locate(net, np.asarray(q, float), tol=1e-9)
        except RoadFieldError:
            raise Infeasible(f"required point {tuple(q)} not on road") from None
    if spec.boundary_anchored:
        deg = np.bincount(net.edges.ravel(), minlength=net.n_vertices)
        leaves = np.nonzero(deg == 1)[0]
        if not all(net.boundary[leaves]):
            raise Infeasible("a road end is not on the boundary")
    return net


def build_candidate(spec: RoadFamilySpec, domain: DomainGeometry, params: dict) -> RoadNetwork:
    for name, (lo, hi) in spec.ranges.items():
        if name in params and not lo - 1e-12 <= params[name] <= hi + 1e-12:
            raise Infeasible(f"{name}={params[name]:.6g} outside [{lo:.6g}, {hi:.6g}]")
    pts, edges = _build_raw(spec, domain, params)
    pts, edges = _dedupe([np.asarray(q, float) for q in pts], edges, 1e-9 * domain.diameter())
    if not edges:
        raise Infeasible("no edges")
    return admissible(spec, domain, RoadNetwork(pts, edges))


def _key(c: "Candidate"):
    """Identity of a candidate's geometry, used to memoize evaluations."""
    if c.params:
        return tuple((k, round(v, 12)) for k, v in c.params.items())
    return c.net.vertices.round(12).tobytes() + c.net.edges.tobytes()


def enumerate_candidates(spec: RoadFamilySpec, domain: DomainGeometry, resolution=None):
    """Feasible grid points of the family.

    Returns ``(candidates, log)`` where ``log`` lists rejected parameter
    points with reasons.  Raises :class:`SearchError` if nothing is feasible.
    """
    cands, log = [], []
    for n, p in enumerate(spec.grid(resolution)):
        try:
            net = build_candidate(spec, domain, p)
        except Infeasible as exc:
            log.append({"params": p, "status": "rejected", "reason": str(exc)})
            continue
        cands.append(Candidate(f"g{n:04d}", p, net))
    if not cands:
        reasons = sorted({entry["reason"] for entry in log})[:5]
        raise SearchError(f"no feasible candidate in family {spec.kind!r}; e.g. {reasons}")
    return cands, log


# ---------------------------------------------------------------------------
# evaluation


class GammaCache:
    """Road-free Dirichlet eigenvalue per (domain, h, a, min_angle).

    Read-mostly; insertion is serialized by a lock.
    """

    def __init__(self):
        self._data = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, domain: DomainGeometry, h: float, a: float, min_angle: float = 25.0):
        key = (domain.polygon.tobytes(), float(h), float(a), float(min_angle))
        with self._lock:
            if key in self._data:
                self.hits += 1
                return self._data[key]
        mesh = triangulate(domain, None, h, min_angle)
        gamma = float(dirichlet_gamma(mesh, a, k=1)[0])
        with self._lock:
            if key in self._data:
                self.hits += 1
            else:
                self.misses += 1
                self._data[key] = (gamma, mesh)
            return self._data[key]


def evaluate_candidate(
    domain: DomainGeometry,
    net: RoadNetwork,
    params: CouplingParams,
    h: float,
    cache: GammaCache | None = None,
    with_constants: bool = True,
    band: float = 1e-3,
    min_angle: float = 25.0,
    road: str = "",
    tol: float = 1e-10,
) -> EfficiencyReport:
    """Mesh, assemble and solve one road; compare with the road-free gamma_1."""
    cache = cache if cache is not None else GammaCache()
    gamma, base_mesh = cache.get(domain, h, params.a, min_angle)
    mesh = triangulate(domain, net, h, min_angle)
    sys = build_system(mesh, params)
    spec = smallest_eigenpairs(sys, 1, tol=tol)
    return efficiency_report(sys, spec, gamma, base_mesh, net, band, with_constants, road, baseline=True)


@dataclass
class SearchResult:
    ranked: list  # of (Candidate, EfficiencyReport)
    log: list = field(default_factory=list)
    history: list = field(default_factory=list)  # accepted ratios (local search)
    converged: dict = field(default_factory=dict)  # candidate id -> (ratio at h/2, ok)

    @property
    def best(self):
        return self.ranked[0]


def rank(results) -> SearchResult:
    """Stable sort by ratio (descending), ties broken by shorter length."""
    results = list(results.ranked if isinstance(results, SearchResult) else results)
    if not results:
        raise SearchError("nothing to rank")
    ordered = sorted(results, key=lambda cr: (-cr[1].ratio, cr[0].length, cr[0].id))
    return SearchResult(ordered)


def _evaluate_all(cands, domain, params, h, cache, threads, **kw):
    def run(c):
        try:
            return c, evaluate_candidate(domain, c.net, params, h, cache, road=c.id, **kw), None
        except RoadFieldError as exc:
            return c, None, str(exc)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(run, cands))
    else:
        out = [run(c) for c in cands]
    ok = [(c, r) for c, r, e in out if r is not None]
    log = [{"params": c.params, "status": "failed", "reason": e} for c, r, e in out if r is None]
    return ok, log


def local_search(
    domain: DomainGeometry,
    seed,
    params: CouplingParams,
    step,
    iterations: int,
    spec: RoadFamilySpec | None = None,
    h: float = 1 / 16,
    cache: GammaCache | None = None,
    **kw,
) -> SearchResult:
    """Greedy best-improvement search from ``seed``.

    With ``spec`` and a :class:`Candidate` seed, moves shift the family
    parameters by every combination of ``-step, 0, +step`` (one parameter
    at a time for families with more than four parameters).  Otherwise
    ``seed`` is a network and moves shift one free vertex (not on the boundary, not a required point)
    by ``+/- step`` in x or y; networks over budget are scaled toward their
    centroid and rejected if that breaks a constraint.
    """
    cache = cache if cache is not None else GammaCache()
    spec = spec or RoadFamilySpec("user-list", budget=float("inf"))
    seen = {}
    log = []
    counter = itertools.count()

    def evaluate(c):
        key = _key(c)
        if key not in seen:
            try:
                seen[key] = evaluate_candidate(domain, c.net, params, h, cache, road=c.id, **kw)
            except RoadFieldError as exc:
                log.append({"params": c.params, "status": "failed", "reason": str(exc)})
                seen[key] = None
        return seen[key]

    if not isinstance(seed, Candidate):
        seed = Candidate("seed", {}, admissible(spec, domain, seed))
    current, cur_rep = seed, evaluate(seed)
    if cur_rep is None:
        raise SearchError("seed road could not be evaluated")
    history = [cur_rep.ratio]
    for _ in range(iterations):
        best = None
        for nb in _neighbors(current, spec, domain, step, log):
            nb = replace(nb, id=f"L{next(counter):04d}")
            rep = evaluate(nb)
            if rep is None:
                continue
            if best is None or (rep.ratio, -nb.length) > (best[1].ratio, -best[0].length):
                best = (nb, rep)
        if best is None or best[1].ratio <= cur_rep.ratio:
            break
        current, cur_rep = best
        history.append(cur_rep.ratio)
    res = rank([(current, cur_rep)])
    res.log = log
    res.history = history
    return res


def _neighbors(c: Candidate, spec, domain, step, log):
    if c.params and spec.kind != "user-list":
        names = spec.names
        # all +/- step combinations for small families, axis moves otherwise
        if len(names) <= MOORE_MAX_DIM:
            moves = [m for m in itertools.product((-1, 0, 1), repeat=len(names)) if any(m)]
        else:
            moves = [tuple(s * (i == k) for i in range(len(names))) for k in range(len(names)) for s in (-1, 1)]
        for m in moves:
            p = dict(c.params)
            for name, sgn in zip(names, m):
                p[name] = p[name] + sgn * (step[name] if isinstance(step, dict) else step)
            try:
                yield Candidate("", p, build_candidate(spec, domain, p))
            except Infeasible as exc:
                log.append({"params": p, "status": "rejected", "reason": str(exc)})
        return
    net = c.net
    fixed = set(np.nonzero(net.boundary)[0].tolist())
    for q in spec.required_points:
        try:
            pt = locate(net, np.asarray(q, float))
        except RoadFieldError:
            continue
        if isinstance(pt, int):
            fixed.add(pt)
    ds = float(step if not isinstance(step, dict) else next(iter(step.values())))
    for v in range(net.n_vertices):
        if v in fixed:
            continue
        for axis, sgn in itertools.product((0, 1), (-1, 1)):
            verts = net.vertices.copy()
            verts[v, axis] += sgn * ds
            moved = RoadNetwork(verts, net.edges, net.boundary)
            length = total_length(moved)
            if length > spec.budget:
                cen = verts.mean(0)
                verts = cen + (verts - cen) * (spec.budget / length)
                moved = RoadNetwork(verts, net.edges, net.boundary)
            tag = f"v{v}{'xy'[axis]}{'+' if sgn > 0 else '-'}"
            try:
                yield Candidate("", {}, admissible(spec, domain, moved))
            except Infeasible as exc:
                log.append({"params": {"move": tag}, "status": "rejected", "reason": str(exc)})


def search(
    spec: RoadFamilySpec,
    domain: DomainGeometry,
    params: CouplingParams,
    h: float,
    threads: int = 1,
    recheck_top: int = 3,
    convergence_tol: float = 5e-3,
    cache: GammaCache | None = None,
    local_steps: int = 0,
    local_refine: int = 2,
    **kw,
) -> SearchResult:
    """Grid enumeration, optional local search from the grid optimum, and
    re-evaluation of the top candidates at ``h / 2``.

    The local search uses the grid step divided by ``local_refine``; its
    final road joins the ranking unless it coincides with a grid point.
    """
    cache = cache if cache is not None else GammaCache()
    cands, log = enumerate_candidates(spec, domain)
    ok, fail = _evaluate_all(cands, domain, params, h, cache, threads, **kw)
    if not ok:
        raise SearchError("every candidate failed to evaluate")
    res = rank(ok)
    res.log = log + fail
    if local_steps and spec.kind != "user-list":
        step = {n: d / local_refine for n, d in spec.step().items()}
        ls = local_search(domain, res.best[0], params, step, local_steps, spec=spec, h=h, cache=cache, **kw)
        res.log += ls.log
        res.history = ls.history
        if _key(ls.best[0]) not in {_key(c) for c, _ in res.ranked}:
            merged = rank(res.ranked + ls.ranked)
            merged.log, merged.history = res.log, res.history
            res = merged
    for c, rep in res.ranked[:recheck_top]:
        kw_fine = {k: v for k, v in kw.items() if k != "with_constants"}
        fine = evaluate_candidate(domain, c.net, params, h / 2, cache, with_constants=False, road=c.id, **kw_fine)
        change = abs(fine.ratio - rep.ratio) / abs(rep.ratio)
        res.converged[c.id] = (fine.ratio, change < convergence_tol)
    return res


def with_budget(spec: RoadFamilySpec, budget: float) -> RoadFamilySpec:
    return replace(spec, budget=budget)
