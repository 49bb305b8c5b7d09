"""First passage percolation on the complete graph K_n.

Edge weights are Y_e = g(E_e) with E_e ~ Exp(1).  Internally an edge is
described by its PWIT-scale value x = n * E_e, and its weight in units of
f_n(1) is phi(x); that keeps weights of order one whatever s_n and n are.

Vertices are numbered 1..n in every public interface.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .calculus import derive_params, mstar
from .errors import ContractError, DomainError, ResourceError
from .pwit import INF, NODE_CAP, Explorer, TwoClock
from .rng import edge_exponentials, stream
from .weights import WeightFamily, WeightScale

MATERIALIZE_MAX = 4096


# -- edge weights ----------------------------------------------------------------------

class EdgeWeightTable:
    """Symmetric edge weights of K_n.

    Three storage modes: ``hash`` derives every edge from ``(seed, i, j)``
    (optionally materialized for n <= 4096), ``explicit`` holds a PWIT-scale
    matrix (used by the coupled construction) and ``weights`` holds normalized
    weights directly.
    """

    def __init__(self, n: int, family: WeightFamily | None = None, seed: int | None = None,
                 x: np.ndarray | None = None, y: np.ndarray | None = None, materialize: bool = False):
        if n < 2:
            raise DomainError("need n >= 2")
        self.n = int(n)
        self.family = family
        self.seed = seed
        self.ws = WeightScale(family, n) if family is not None else None
        self._x = None
        self._y = None
        if y is not None:
            self.mode = "weights"
            self._y = self._square(y)
        elif x is not None:
            self.mode = "explicit"
            self._x = self._square(x)
        elif seed is not None:
            self.mode = "hash"
            if materialize:
                if n > MATERIALIZE_MAX:
                    raise ResourceError(f"cannot materialize n={n} > {MATERIALIZE_MAX}")
                self._x = np.vstack([self._hash_row(i) for i in range(1, n + 1)])
        else:
            raise ContractError("need a seed, a PWIT-scale matrix or a weight matrix")
        if self._y is None and self.ws is None:
            raise ContractError("a family is required unless weights are given directly")

    @classmethod
    def from_weights(cls, weights) -> "EdgeWeightTable":
        """Table from an explicit symmetric weight matrix (the diagonal is ignored)."""
        w = np.asarray(weights, float)
        return cls(w.shape[0], y=w)

    def _square(self, m) -> np.ndarray:
        m = np.array(m, float)
        if m.shape != (self.n, self.n):
            raise ContractError(f"expected a {self.n}x{self.n} matrix")
        if not np.allclose(m, m.T, rtol=0, atol=0, equal_nan=True):
            raise ContractError("edge matrix must be symmetric")
        np.fill_diagonal(m, np.inf)
        return m

    def _hash_row(self, i: int) -> np.ndarray:
        j = np.arange(1, self.n + 1)
        x = self.n * edge_exponentials(self.seed, np.full(self.n, i), j)
        x[i - 1] = np.inf
        return x

    def row_x(self, i: int) -> np.ndarray:
        """PWIT-scale values n * E_{i,.} (inf on the diagonal)."""
        if self.mode == "weights":
            raise ContractError("weight-mode tables carry no PWIT-scale values")
        if self._x is not None:
            return self._x[i - 1]
        return self._hash_row(i)

    def y_row(self, i: int) -> np.ndarray:
        """Normalized weights Y_{i,.} / f_n(1)."""
        if self._y is not None:
            return self._y[i - 1]
        return self.ws.phi(self.row_x(i))

    def y(self, i: int, j: int) -> float:
        if i == j:
            raise DomainError("no self loops")
        if self._y is not None:
            return float(self._y[i - 1, j - 1])
        if self._x is not None:
            return float(self.ws.phi1(float(self._x[i - 1, j - 1])))
        x = self.n * float(edge_exponentials(self.seed, i, j)[0])
        return float(self.ws.phi1(x))

    @property
    def log_scale(self) -> float:
        """log of the weight unit (log f_n(1)); 0 for weight-mode tables."""
        return 0.0 if self.ws is None else self.ws.log_fn1

    def weight(self, i: int, j: int) -> float:
        """Physical weight Y_ij (may underflow to 0 for large s_n log n)."""
        return self.y(i, j) * math.exp(self.log_scale)


def sample_weights(n: int, family: WeightFamily, seed: int, materialize: bool | None = None) -> EdgeWeightTable:
    """Edge weights reproducible from (seed, i, j)."""
    if materialize is None:
        materialize = n <= 512
    return EdgeWeightTable(n, family, seed=seed, materialize=materialize)


# -- shortest paths --------------------------------------------------------------------

@dataclass
class PathResult:
    W: float              # normalized weight (units of f_n(1))
    H: int
    path: list
    log_scale: float = 0.0

    @property
    def W_physical(self) -> float:
        return self.W * math.exp(self.log_scale)


def _settle(table: EdgeWeightTable, src: int, stop_at: int | None = None, horizon: float = INF):
    n = table.n
    dist = np.full(n, INF)
    open_d = np.full(n, INF)
    parent = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    open_d[src - 1] = dist[src - 1] = 0.0
    order = []
    while True:
        u = int(np.argmin(open_d))       # first index among ties
        du = open_d[u]
        if du == INF or du > horizon:
            break
        done[u] = True
        open_d[u] = INF
        order.append(u)
        if stop_at is not None and u == stop_at - 1:
            break
        cand = du + table.y_row(u + 1)
        better = (cand < dist) & ~done
        dist[better] = cand[better]
        open_d[better] = cand[better]
        parent[better] = u
    return dist, parent, done, order


def _path_to(parent: np.ndarray, v: int) -> list:
    path = [v]
    while parent[path[-1]] >= 0:
        path.append(int(parent[path[-1]]))
    return [p + 1 for p in reversed(path)]


def dijkstra(table: EdgeWeightTable, i: int, j: int) -> PathResult:
    """Exact smallest-weight path between i and j (dense Dijkstra)."""
    if i == j or not (1 <= i <= table.n and 1 <= j <= table.n):
        raise DomainError("need distinct vertices in 1..n")
    _, parent, _, _ = _settle(table, i, stop_at=j)
    path = _path_to(parent, j - 1)
    w = math.fsum(table.y(a, b) for a, b in zip(path, path[1:]))
    return PathResult(w, len(path) - 1, path, table.log_scale)


@dataclass
class Tree:
    root: int
    vertices: list
    parent: dict
    dist: dict

    @property
    def edges(self) -> list:
        return [(p, v) for v, p in self.parent.items()]


def swt_single(table: EdgeWeightTable, root: int, horizon: float = INF) -> Tree:
    """Smallest-weight tree of all vertices within normalized distance ``horizon`` of root."""
    dist, parent, done, order = _settle(table, root, horizon=horizon)
    verts = [u + 1 for u in order]
    par = {u + 1: int(parent[u]) + 1 for u in order if parent[u] >= 0}
    for v, p in par.items():
        if p not in par and p != root:
            raise ContractError("smallest-weight tree is not connected")
    return Tree(root, verts, par, {u + 1: float(dist[u]) for u in order})


# -- two-source exploration with freezing ----------------------------------------------

@dataclass
class CollisionRecord:
    T_coll: float
    I1: int
    I2: int
    W: float
    H: int
    H1: int
    H2: int
    heights_unfr: tuple      # per side generation above the first unfrozen ancestor (None if frozen)
    T_fr: tuple
    T_unfr: float
    second_gap: float        # second best collision value minus the best
    explored: int
    I1_time: float = 0.0
    I2_time: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)


class SProcess:
    """Two smallest-weight trees grown from vertices 1 and 2 on their own clocks.

    A vertex outside both trees joins side j at global time R_j^{-1}(R_j(T(i)) + Y_{i,v})
    minimized over explored i on side j; frozen sides do not advance.  Local times
    R_j(T(v)) are accumulated exactly along tree paths.
    """

    def __init__(self, table: EdgeWeightTable, clock: TwoClock, log_events: bool = False):
        self.table = table
        self.clock = clock
        n = table.n
        self.n = n
        self.side = np.full(n, -1, dtype=np.int8)
        self.loc = np.full(n, INF)
        self.tglob = np.full(n, INF)
        self.parent = np.full(n, -1, dtype=np.int64)
        self.gen = np.zeros(n, dtype=np.int64)
        self.unfr_gen = np.full(n, -1, dtype=np.int64)
        self.frozen = np.zeros(n, dtype=bool)
        self.best = np.full((2, n), INF)
        self.best_par = np.full((2, n), -1, dtype=np.int64)
        self.members: list[list[int]] = [[], []]
        self.order: list[int] = []
        self.t = 0.0
        self.W = INF
        self.W2 = INF
        self.pair = (-1, -1)
        self.log_events = log_events
        self.events: list[tuple] = []
        self._add(0, 0, 0.0, -1, 0.0)
        self._add(1, 1, 0.0, -1, 0.0)

    def _add(self, v: int, j: int, loc: float, par: int, edge_y: float) -> None:
        self.side[v] = j
        self.loc[v] = loc
        self.tglob[v] = self.t
        self.parent[v] = par
        frozen = self.clock.is_frozen_birth(j, self.t)
        self.frozen[v] = frozen
        if par >= 0:
            self.gen[v] = self.gen[par] + 1
        if not frozen:
            self.unfr_gen[v] = self.gen[v] if (par < 0 or self.frozen[par]) else self.unfr_gen[par]
        self.members[j].append(v)
        self.order.append(v)
        self.best[:, v] = INF
        row = self.table.y_row(v + 1)
        other = np.asarray(self.members[1 - j], dtype=np.int64)
        if other.size:
            vals = loc + row[other] + self.loc[other]
            k = int(np.argmin(vals))
            top = np.partition(vals, 1)[:2] if vals.size > 1 else vals
            cands = sorted([self.W, self.W2, *top.tolist()])
            if vals[k] < self.W:
                self.pair = (v, int(other[k])) if j == 0 else (int(other[k]), v)
            self.W, self.W2 = cands[0], cands[1]
        cand = loc + row
        better = (cand < self.best[j]) & (self.side < 0)
        self.best[j][better] = cand[better]
        self.best_par[j][better] = v
        if self.log_events:
            self.events.append((v + 1, j + 1, par + 1 if par >= 0 else 0, self.t, loc, edge_y))
        self.clock.register_birth(j, loc)

    def next_event(self) -> tuple[float, int, int]:
        g, side, vert = INF, -1, -1
        for j in (0, 1):
            if not self.clock.running(j):
                continue
            v = int(np.argmin(self.best[j]))
            c = self.best[j][v]
            if c == INF:
                continue
            gj = self.clock.to_global(j, c)
            if gj < g:
                g, side, vert = gj, j, v
        return g, side, vert

    def step(self) -> bool:
        """Explore one vertex; False when nothing is left."""
        g, j, v = self.next_event()
        jf = self.clock.crossing_before(self.t, g)
        if jf >= 0:
            self.t = self.clock.Tfr[jf]
            return True
        if j < 0:
            return False
        self.t = g
        par = int(self.best_par[j][v])
        self._add(v, j, float(self.best[j][v]), par, float(self.best[j][v] - self.loc[par]))
        return True

    def certified(self) -> bool:
        g, _, _ = self.next_event()
        return self.W <= self.clock.Rsum(g)

    def run(self, stop: str = "certify", budget: int | None = None) -> "SProcess":
        """Grow until the collision is certified (``certify``) or every vertex is explored (``all``)."""
        budget = budget or self.n
        while True:
            if stop == "certify" and self.certified():
                return self
            if len(self.order) >= budget + 2 and stop == "certify":
                raise ResourceError("collision not certified within the exploration budget")
            if not self.step():
                return self

    def collision(self) -> CollisionRecord:
        i1, i2 = self.pair
        if i1 < 0:
            raise ContractError("no cross pair explored yet")
        t_coll = float(self.clock.Rsum_inv(self.W))
        hu = tuple(None if self.frozen[v] else int(self.gen[v] - self.unfr_gen[v]) for v in (i1, i2))
        h1, h2 = int(self.gen[i1]), int(self.gen[i2])
        return CollisionRecord(t_coll, i1 + 1, i2 + 1, float(self.W), h1 + h2 + 1, h1, h2, hu,
                               tuple(self.clock.Tfr), float(self.clock.Tunfr), float(self.W2 - self.W),
                               len(self.order), float(self.tglob[i1]), float(self.tglob[i2]))

    def tree_path(self, v: int) -> list:
        path = [v - 1]
        while self.parent[path[-1]] >= 0:
            path.append(int(self.parent[path[-1]]))
        return [p + 1 for p in reversed(path)]

    def collision_path(self) -> list:
        i1, i2 = self.pair
        return self.tree_path(i1 + 1) + list(reversed(self.tree_path(i2 + 1)))


def online_clock(family: WeightFamily, n: float) -> TwoClock:
    ws = WeightScale(family, n)
    return TwoClock(2, ws.s, mstar(family, n))


def collide(table: EdgeWeightTable, clock: TwoClock | None = None, budget: int | None = None) -> CollisionRecord:
    """Collision edge and (W_n, H_n) from the two-source exploration, certified exactly."""
    if clock is None:
        clock = online_clock(table.family, table.n)
    return SProcess(table, clock).run("certify", budget).collision()


# -- the PWIT coupling -----------------------------------------------------------------

@dataclass
class CoupledRun:
    n: int
    family: WeightFamily
    seed: int
    explorer: Explorer = field(repr=False)
    table: EdgeWeightTable = field(repr=False)
    first_vertex: np.ndarray = field(repr=False)   # node id of the first unthinned vertex per mark
    derived_x: np.ndarray = field(repr=False)      # n * E of every edge, root pair included

    def fixed_clock(self) -> TwoClock:
        c = self.explorer.clock
        return TwoClock(2, c.s, fixed=(tuple(c.Tfr), c.Tunfr))


def run_coupled(n: int, family: WeightFamily, seed: int, node_cap: int = NODE_CAP) -> CoupledRun:
    """Two-source frozen exploration with marks, and the K_n weights it determines."""
    rng = stream(seed, 0, "coupled")
    ex = Explorer(family, n, rng, sides=2, freeze=True, n_marks=n, prune_thinned=True,
                  keep_children=True, node_cap=node_cap)
    try:
        while len(ex.first_of_mark) < n or not ex.clock.unfrozen:
            ex.step()
    except ResourceError as exc:
        missing = sorted(set(range(1, n + 1)) - set(ex.first_of_mark))
        raise ResourceError(f"{exc}; marks never reached: {missing[:20]}") from exc
    f = ex.f
    # node ids follow birth order; birth times alone can tie in floating point
    first = np.array([ex.first_of_mark[i] for i in range(1, n + 1)], dtype=np.int64)
    root = np.array([f.parent[v] < 0 for v in first])
    x = np.full((n, n), np.inf)
    for a in range(n):
        v = int(first[a])
        seen: dict[int, float] = {}
        k = 0
        while len(seen) < n - 1:
            k += 1
            xv, mk = ex.child(v, k)
            if mk != a + 1 and mk not in seen:
                seen[mk] = xv
        for b in range(n):
            if b != a and first[a] < first[b] and not (root[a] and root[b]):
                x[a, b] = x[b, a] = seen[b + 1]
    fill = stream(seed, 0, "coupled-fill")
    for a in range(n):
        for b in range(a + 1, n):
            if root[a] and root[b]:
                x[a, b] = x[b, a] = n * fill.standard_exponential()
    table = EdgeWeightTable(n, family, x=x)
    return CoupledRun(n, family, seed, ex, table, first, x)


@dataclass
class CouplingReport:
    ok: bool
    events: int
    unthinned: int
    first_divergence: str = ""


def coupling_check(run: CoupledRun, rtol: float = 1e-9) -> CouplingReport:
    """Replay the K_n exploration on the derived weights and compare with the unthinned PWIT."""
    sp = SProcess(run.table, run.fixed_clock(), log_events=True).run("all")
    f = run.explorer.f
    ws = WeightScale(run.family, run.n)
    clock = run.explorer.clock
    tree = [v for v in range(len(f)) if not f.thinned[v]]
    tree.sort(key=lambda v: (f.TB[v], v))
    events = sp.events
    if len(tree) != len(events):
        return CouplingReport(False, len(events), len(tree),
                              f"event counts differ: {len(events)} vs {len(tree)} unthinned")
    for k, (v, ev) in enumerate(zip(tree, events)):
        vert, side, par, tg, loc, ey = ev
        p = f.parent[v]
        want_par = f.mark[p] if p >= 0 else 0
        want_y = ws.phi1(f.X[v]) if p >= 0 else 0.0
        want_t = clock.to_global(f.side[v], f.T[v])
        problems = []
        if vert != f.mark[v]:
            problems.append(f"vertex {vert} vs mark {f.mark[v]}")
        if side != f.side[v] + 1:
            problems.append(f"side {side} vs {f.side[v] + 1}")
        if par != want_par:
            problems.append(f"parent {par} vs {want_par}")
        if not math.isclose(tg, want_t, rel_tol=rtol, abs_tol=1e-300):
            problems.append(f"arrival {tg!r} vs {want_t!r}")
        if not math.isclose(ey, want_y, rel_tol=rtol, abs_tol=rtol * max(1.0, loc)):
            problems.append(f"edge weight {ey!r} vs {want_y!r}")
        if problems:
            return CouplingReport(False, len(events), len(tree),
                                  f"event {k} ({f.label(v)}): " + "; ".join(problems))
    return CouplingReport(True, len(events), len(tree))


# -- batches ---------------------------------------------------------------------------

CSV_HEADER = ["seed", "n", "sn", "W", "H", "H1", "H2", "Tcoll", "I1", "I2", "Wstd", "Hstd", "censored"]


def standardize(rec: CollisionRecord, family: WeightFamily, n: int) -> tuple[float, float, float, bool]:
    """(phi^{-1}(W), recentred weight statistic, standardized hopcount, censored flag)."""
    ws = WeightScale(family, n)
    bp = derive_params(family, n)
    s = ws.s
    L = math.log(n / s ** 3)
    w_plain = float(ws.phi_inv(rec.W))
    shifted = rec.W - L / bp.lambda_norm
    censored = shifted < 0
    w_std = math.nan if censored else float(ws.phi_inv(shifted))
    h_std = (rec.H - bp.phi_n * L) / math.sqrt(s * s * L) if L > 0 else math.nan
    return w_plain, w_std, h_std, censored


def run_batch(n: int, family: WeightFamily, replicas: int, seed: int, mode: str = "bidirectional",
              table: EdgeWeightTable | None = None, first_replica: int = 0) -> list[dict]:
    """Rows of the batch CSV; replica k uses edge seed derived from (seed, k)."""
    rows = []
    s = family.s_n(n)
    for k in range(first_replica, first_replica + replicas):
        esd = int(stream(seed, k, "edges").integers(0, 2 ** 63))
        tab = table if table is not None else sample_weights(n, family, esd, materialize=False)
        if mode == "dijkstra":
            res = dijkstra(tab, 1, 2)
            rec = CollisionRecord(math.nan, 0, 0, res.W, res.H, -1, -1, (None, None), (), math.nan,
                                  math.nan, 0)
        elif mode == "bidirectional":
            rec = collide(tab)
        else:
            raise ContractError(f"unknown batch mode {mode!r}")
        if tab.family is not None:
            w_plain, w_std, h_std, cens = standardize(rec, family, n)
        else:
            w_plain, w_std, h_std, cens = rec.W, math.nan, math.nan, False
        rows.append({"seed": k, "n": n, "sn": s, "W": rec.W, "H": rec.H, "H1": rec.H1, "H2": rec.H2,
                     "Tcoll": rec.T_coll, "I1": rec.I1, "I2": rec.I2, "Wstd": w_plain,
                     "Hstd": h_std, "censored": int(cens), "Wshift": w_std})
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in CSV_HEADER])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
