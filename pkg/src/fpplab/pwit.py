"""Lazy exploration of the Poisson-weighted infinite tree (PWIT).

Every vertex has children at the points of a rate-1 Poisson process; a child at
PWIT weight X is born f_n(X) after its parent.  The explorers below generate
children on demand: popping vertex v pushes its next sibling and its first
child, so only O(1) heap entries exist per born vertex.

Times are in normalized units (multiples of f_n(1)).
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .calculus import MStar, gw_survival, mstar
from .errors import ContractError, ResourceError
from .rng import BufferedStream
from .weights import WeightFamily, WeightScale

NODE_CAP = 10_000_000
INF = math.inf


# -- node storage ----------------------------------------------------------------

class Forest:
    """Column store of born vertices; index = node id in birth order."""

    def __init__(self):
        self.parent: list[int] = []
        self.side: list[int] = []
        self.kidx: list[int] = []      # child index among siblings (0 for roots)
        self.X: list[float] = []       # PWIT edge weight to the parent
        self.T: list[float] = []       # birth time in the side's own clock
        self.TB: list[float] = []      # birth time in the global clock
        self.gen: list[int] = []
        self.mark: list[int] = []
        self.thinned: list[bool] = []
        self.frozen: list[bool] = []
        self.unfr_gen: list[int] = []  # generation of the unfrozen ancestor, -1 inside the frozen cluster

    def __len__(self) -> int:
        return len(self.parent)

    def label(self, v: int) -> str:
        path = []
        while self.parent[v] >= 0:
            path.append(str(self.kidx[v]))
            v = self.parent[v]
        return ".".join([f"r{self.side[v] + 1}"] + path[::-1])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("label,parent,X,T,mark,thinned,side\n")
            for v in range(len(self)):
                fh.write(f"{self.label(v)},{self.parent[v]},{self.X[v]!r},{self.T[v]!r},"
                         f"{self.mark[v]},{int(self.thinned[v])},{self.side[v] + 1}\n")


# -- freezing clocks -------------------------------------------------------------------

class TwoClock:
    """On-off clocks of the two exploration sides.

    Side j runs in its own time R_j(t) = min(t, T_fr[j]) + max(t - T_unfr, 0).
    ``online`` clocks locate the freezing times from registered births through
    the residual offspring intensity F_j(t) = sum_v m*(t - T_v); ``fixed``
    clocks replay known freezing times; with neither, R_j(t) = t.
    """

    def __init__(self, sides: int = 2, s: float = 1.0, mstar: MStar | None = None,
                 fixed: tuple | None = None):
        self.sides = sides
        self.s = s
        self.mstar = mstar
        self.online = mstar is not None
        self.freezing = self.online or fixed is not None
        self.F_at_fr = [math.nan] * sides
        self.births: list[list[float]] = [[] for _ in range(sides)]
        self._bound = [0.0] * sides   # upper bound on F_j valid until the next evaluation
        if fixed is not None:
            self.Tfr = list(fixed[0])
            self.Tunfr = float(fixed[1])
        elif self.online:
            self.Tfr = [INF] * sides
            self.Tunfr = INF
        else:
            self.Tfr = [0.0] * sides
            self.Tunfr = 0.0

    @property
    def unfrozen(self) -> bool:
        return self.Tunfr < INF

    def running(self, j: int) -> bool:
        return self.Tfr[j] == INF or self.Tunfr < INF

    def is_frozen_birth(self, j: int, t_global: float) -> bool:
        """Whether a vertex arriving at t_global on side j belongs to the frozen cluster."""
        return self.freezing and t_global <= self.Tfr[j]

    def to_global(self, j: int, local: float) -> float:
        if local <= self.Tfr[j]:
            return local
        return self.Tunfr - self.Tfr[j] + local

    def R(self, j: int, t):
        t = np.asarray(t, float)
        out = np.minimum(t, self.Tfr[j]) + np.maximum(t - self.Tunfr, 0.0)
        return float(out) if out.ndim == 0 else out

    def R_inv(self, j: int, y: float) -> float:
        return self.to_global(j, y)

    def Rsum(self, t):
        return R_sum(self.Tfr, self.Tunfr, t)

    def Rsum_inv(self, w: float) -> float:
        return R_sum_inv(self.Tfr, self.Tunfr, w)

    def Rsum_inv_array(self, w) -> np.ndarray:
        w = np.asarray(w, float)
        a = min(self.Tfr)
        return np.where(w <= 2 * a, w / 2,
                        np.where(w <= a + self.Tunfr, w - a, self.Tunfr + (w - a - self.Tunfr) / 2))

    def Rsum_rate(self, t: float) -> float:
        return R_sum_rate(self.Tfr, self.Tunfr, t)

    # online freezing --------------------------------------------------------------
    def F(self, j: int, t_local: float) -> float:
        b = np.asarray(self.births[j])
        b = b[b <= t_local]
        return float(np.sum(self.mstar(t_local - b)))

    def _set_frozen(self, j: int, t: float, value: float) -> None:
        self.Tfr[j] = t
        self.F_at_fr[j] = value
        if all(tf < INF for tf in self.Tfr):
            self.Tunfr = max(self.Tfr)

    def register_birth(self, j: int, t_local: float) -> bool:
        """Record a birth on a not-yet-frozen side; True if the side freezes at this instant."""
        if not self.online or self.Tfr[j] < INF:
            return False
        self.births[j].append(t_local)
        self._bound[j] += 1.0
        if self._bound[j] < self.s:
            return False
        val = self.F(j, t_local)
        if val >= self.s:
            self._set_frozen(j, t_local, val)
            return True
        self._bound[j] = val if self.mstar.decreasing else INF
        return False

    def crossing_before(self, t_now: float, until: float) -> int:
        """Freeze a side whose intensity crosses s_n continuously in (t_now, until); returns it or -1."""
        if not self.online or self.Tunfr < INF or self.mstar.decreasing or not until > t_now:
            return -1
        for j in range(self.sides):
            if self.Tfr[j] != INF:
                continue
            hi_end = min(until, t_now + 1e6)
            grid = np.linspace(t_now, hi_end, 65)[1:-1]
            vals = np.array([self.F(j, g) for g in grid])
            hit = np.flatnonzero(vals >= self.s)
            if hit.size == 0:
                continue
            hi = grid[hit[0]]
            lo = grid[hit[0] - 1] if hit[0] > 0 else t_now
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if self.F(j, mid) >= self.s:
                    hi = mid
                else:
                    lo = mid
            self._set_frozen(j, hi, self.F(j, hi))
            return j
        return -1


# -- explorer ----------------------------------------------------------------------

class Explorer:
    """Event-driven exploration of one or two PWIT copies.

    With ``freeze=True`` each side stops its clock once its residual offspring
    intensity reaches s_n; both restart together when the second side freezes.
    With ``n_marks`` set, vertices receive uniform marks and are thinned on the
    fly in global birth order.
    """

    def __init__(self, family: WeightFamily, n: float, rng: np.random.Generator, sides: int = 2,
                 freeze: bool = True, n_marks: int | None = None, prune_thinned: bool = True,
                 keep_children: bool = False, node_cap: int = NODE_CAP):
        self.ws = WeightScale(family, n)
        self.family = family
        self.n = n
        self.s = self.ws.s
        self.sides = sides
        self.stream = BufferedStream(rng)
        self.clock = TwoClock(sides, self.s, mstar(family, n) if freeze else None)
        self.n_marks = n_marks
        self.prune = prune_thinned
        self.keep_children = keep_children
        self.node_cap = node_cap
        self.f = Forest()
        self.heaps: list[list] = [[] for _ in range(sides)]
        self.kids: dict[int, list[tuple[float, int]]] = {}
        self._seq = 0
        self.t = 0.0
        self.first_of_mark: dict[int, int] = {}
        for j in range(sides):
            self._add_node(-1, j, 0, 0.0, 0.0, j + 1)

    # child generation ---------------------------------------------------------------
    def child(self, v: int, k: int) -> tuple[float, int]:
        """(X, mark) of the k-th child (1-based) of v, generated lazily."""
        if not self.keep_children:
            raise ContractError("child lookup needs keep_children=True")
        lst = self.kids.setdefault(v, [])
        while len(lst) < k:
            prev = lst[-1][0] if lst else 0.0
            lst.append((prev + self.stream.exponential(), self._draw_mark()))
        return lst[k - 1]

    def _draw_mark(self) -> int:
        return self.stream.mark(self.n_marks) if self.n_marks else 0

    def _push_child(self, v: int, k: int, prev_x: float) -> None:
        if self.keep_children:
            x, mk = self.child(v, k)
        else:
            x, mk = prev_x + self.stream.exponential(), self._draw_mark()
        tloc = self.f.T[v] + self.ws.phi1(x)
        self._seq += 1
        heapq.heappush(self.heaps[self.f.side[v]], (tloc, self._seq, v, k, x, mk))

    def _pruned(self, v: int) -> bool:
        return bool(self.n_marks) and self.prune and self.clock.unfrozen and self.f.thinned[v]

    def _add_node(self, parent: int, side: int, k: int, x: float, tloc: float, mk: int) -> int:
        f = self.f
        v = len(f)
        if v >= self.node_cap:
            raise ResourceError(f"node cap {self.node_cap} exceeded")
        f.parent.append(parent)
        f.side.append(side)
        f.kidx.append(k)
        f.X.append(x)
        f.T.append(tloc)
        f.TB.append(self.t)
        f.gen.append(0 if parent < 0 else f.gen[parent] + 1)
        f.mark.append(mk)
        frozen = self.clock.is_frozen_birth(side, self.t)
        f.frozen.append(frozen)
        if frozen:
            f.unfr_gen.append(-1)
        elif parent < 0 or f.frozen[parent]:
            f.unfr_gen.append(f.gen[v])
        else:
            f.unfr_gen.append(f.unfr_gen[parent])
        thinned = False
        if self.n_marks:
            if parent >= 0 and f.thinned[parent]:
                thinned = True
            elif mk in self.first_of_mark:
                thinned = True
            else:
                self.first_of_mark[mk] = v
        f.thinned.append(thinned)
        if not self._pruned(v):
            self._push_child(v, 1, 0.0)
        return v

    # main loop ------------------------------------------------------------------------
    def next_birth(self) -> tuple[float, int]:
        best, side = INF, -1
        for j in range(self.sides):
            if not self.clock.running(j) or not self.heaps[j]:
                continue
            g = self.clock.to_global(j, self.heaps[j][0][0])
            if g < best:
                best, side = g, j
        return best, side

    def step(self) -> tuple[str, int]:
        """Advance to the next event: ('birth', node) or ('freeze', side)."""
        g, j = self.next_birth()
        jf = self.clock.crossing_before(self.t, g)
        if jf >= 0:
            self.t = self.clock.Tfr[jf]
            return "freeze", jf
        if j < 0:
            raise ResourceError("no side can advance")
        tloc, _, parent, k, x, mk = heapq.heappop(self.heaps[j])
        self.t = g
        v = self._add_node(parent, j, k, x, tloc, mk)
        if not self._pruned(parent):
            self._push_child(parent, k + 1, x)
        if self.clock.register_birth(j, tloc):
            return "freeze", j
        return "birth", v

    def run_until_unfrozen(self) -> None:
        while not self.clock.unfrozen:
            self.step()

    def run_until_time(self, t: float) -> None:
        """Explore every event with global time <= t."""
        while True:
            g, _ = self.next_birth()
            if g > t:
                jf = self.clock.crossing_before(self.t, t)
                if jf >= 0:
                    self.t = self.clock.Tfr[jf]
                    continue
                break
            self.step()
        self.t = max(self.t, t)

    def frozen_state(self) -> "FrozenState":
        fs = [[v for v in range(len(self.f)) if self.f.side[v] == j and self.f.frozen[v]]
              for j in range(self.sides)]
        c = self.clock
        return FrozenState(tuple(c.Tfr), c.Tunfr, fs, tuple(c.F_at_fr), c)


@dataclass
class FrozenState:
    T_fr: tuple
    T_unfr: float
    frozen_sets: list
    F_at_fr: tuple
    clock: TwoClock = field(repr=False)

    def R(self, j: int, t):
        return self.clock.R(j, t)

    def R_inv(self, j: int, y: float) -> float:
        return self.clock.R_inv(j, y)

    def intensity(self, j: int, t: float) -> float:
        """F_j at side-j time t (sum over the side's vertices born up to freezing)."""
        return self.clock.F(j, t)


def R_sum(T_fr, T_unfr: float, t):
    t = np.asarray(t, float)
    out = sum(np.minimum(t, tf) for tf in T_fr) + len(T_fr) * np.maximum(t - T_unfr, 0.0)
    return float(out) if out.ndim == 0 else out


def R_sum_inv(T_fr, T_unfr: float, w: float) -> float:
    """Inverse of t -> R_1(t) + R_2(t), which is strictly increasing."""
    a = min(T_fr)
    if w <= 2 * a:
        return w / 2
    if w <= a + T_unfr:
        return w - a
    return T_unfr + (w - a - T_unfr) / 2


def R_sum_rate(T_fr, T_unfr: float, t: float) -> float:
    """(R_1 + R_2)'(t), right derivative."""
    if t < min(T_fr) or t >= T_unfr:
        return 2.0
    return 1.0


def freeze(family: WeightFamily, n: float, rng: np.random.Generator, n_marks: int | None = None,
           node_cap: int = NODE_CAP) -> FrozenState:
    """Run two-source exploration until both sides have frozen."""
    ex = Explorer(family, n, rng, sides=2, freeze=True, n_marks=n_marks, node_cap=node_cap)
    ex.run_until_unfrozen()
    return ex.frozen_state()


# -- plain exploration ---------------------------------------------------------------

def bp_explore(family: WeightFamily, n: float, rng: np.random.Generator, sides: int = 1,
               stop_time: float | None = None, stop_count: int | None = None,
               n_marks: int | None = None, node_cap: int = NODE_CAP) -> Forest:
    """Explore without freezing until a time or vertex-count bound (birth order output)."""
    if stop_time is None and stop_count is None:
        raise ContractError("need a stop time or a vertex count")
    ex = Explorer(family, n, rng, sides=sides, freeze=False, n_marks=n_marks,
                  prune_thinned=False, node_cap=node_cap)
    if stop_count is not None and stop_count <= sides:
        return ex.f
    while True:
        g, _ = ex.next_birth()
        if stop_time is not None and g > stop_time:
            break
        ex.step()
        if stop_count is not None and len(ex.f) >= stop_count:
            break
    return ex.f


def thin(forest: Forest, order=None) -> list[bool]:
    """Recompute thinning flags from marks, processing vertices in global birth order."""
    idx = list(range(len(forest))) if order is None else list(order)
    tb = [forest.TB[v] for v in idx]
    if any(b < a for a, b in zip(tb, tb[1:])):
        raise ContractError("trace must be processed in nondecreasing birth time")
    flags = {}
    taken: set[int] = set()
    for v in idx:
        p = forest.parent[v]
        if p >= 0 and flags.get(p, False):
            flags[v] = True
        elif forest.mark[v] in taken:
            flags[v] = True
        else:
            flags[v] = False
            taken.add(forest.mark[v])
    return [flags[v] for v in idx]


def bp_population(family: WeightFamily, n: float, t: float, replicas: int, rng: np.random.Generator,
                  max_nodes: int = 20_000_000) -> np.ndarray:
    """|BP_t| for independent single-root processes, generation by generation.

    A vertex born at T has Poisson(f_n^{-1}(t - T)) children before t, at PWIT
    weights uniform on [0, f_n^{-1}(t - T)].
    """
    ws = WeightScale(family, n)
    counts = np.zeros(replicas, dtype=np.int64)
    births = np.zeros(replicas)
    owner = np.arange(replicas)
    total = 0
    while births.size:
        counts += np.bincount(owner, minlength=replicas)
        total += births.size
        if total > max_nodes * max(1, replicas // 1000 + 1):
            raise ResourceError("population sampler exceeded its node budget")
        span = ws.phi_inv(t - births)
        k = rng.poisson(span)
        if k.sum() == 0:
            break
        parent_t = np.repeat(births, k)
        owner = np.repeat(owner, k)
        x = rng.random(parent_t.size) * np.repeat(span, k)
        births = parent_t + ws.phi(x)
        keep = births <= t
        births, owner = births[keep], owner[keep]
    return counts


# -- invasion percolation and the limit variable M ---------------------------------

@dataclass
class IpState:
    invaded: list          # (node id, parent id, X)
    record_max: float
    steps: int
    boundary: list = field(repr=False, default_factory=list)


def ip_run(rng: np.random.Generator, steps: int | None = None, window: int | None = None,
           debug: bool = False, step_cap: int = 50_000_000) -> IpState:
    """Invasion percolation from one PWIT root.

    Stops after ``steps`` invasions, or once ``window`` consecutive invasions
    stay below the running record.
    """
    if steps is None and window is None:
        raise ContractError("need a step count or a window")
    if window is not None and window < 1:
        raise ContractError("window must be >= 1")
    st = BufferedStream(rng)
    heap: list = [(st.exponential(), 0, 1)]     # (X, parent node, child index)
    invaded = []
    record = 0.0
    streak = 0
    nid = 0
    while True:
        x, p, k = heapq.heappop(heap)
        if debug and heap and heap[0][0] < x:
            raise AssertionError("invaded a vertex while a cheaper boundary vertex existed")
        nid += 1
        invaded.append((nid, p, x))
        if x < record:
            streak += 1
        else:
            record, streak = x, 0
        heapq.heappush(heap, (x + st.exponential(), p, k + 1))
        heapq.heappush(heap, (st.exponential(), nid, 1))
        if steps is not None and len(invaded) >= steps:
            break
        if window is not None and streak >= window:
            break
        if len(invaded) >= step_cap:
            raise ResourceError("invasion step cap exceeded")
    return IpState(invaded, record, len(invaded), heap)


def ip_sample_M(rng: np.random.Generator, window: int, size: int = 1) -> np.ndarray:
    """Record-level simulation of invasion percolation with the window stop rule.

    After a new record r, the invasions that follow stay below r exactly while
    they exhaust the Poisson(r) Galton-Watson cluster hanging below the new
    vertex; every invaded vertex then has one boundary child, independent and
    distributed as r + Exp(1).  This gives the same law of the stopped record
    as :func:`ip_run` at a cost independent of the window length.
    """
    out = np.empty(size)
    for i in range(size):
        slots, r = 1, 0.0
        while True:
            r += rng.standard_exponential() / slots
            cluster, z = 1, 1
            while z and cluster <= window:
                z = int(rng.poisson(r * z))
                cluster += z
            if cluster - 1 >= window:
                out[i] = r
                break
            slots += cluster
    return out


def M_quantile(u) -> np.ndarray:
    """x with gw_survival(x) = u, by bisection on (1, 60)."""
    u = np.atleast_1d(np.asarray(u, float))
    lo = np.ones_like(u)
    hi = np.full_like(u, 60.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = gw_survival(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 1e-12):
            break
    return 0.5 * (lo + hi)


def sample_M_oracle(rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """Exact draws of M by inverting its distribution function."""
    return M_quantile(rng.random(size))
