"""Cox-process description of the collision edge.

Given a two-source exploration with clocks R_1, R_2, a pair (v1, v2) of
explored vertices carries the cumulative intensity

    Z_t(v1, v2) = mu_n(dR, R_1(t) - R_1(T_v1) + R_2(t) - R_2(T_v2)) / n,

where dR is the clock gap accrued between the two births.  Conditionally on
the exploration, collision candidates form a Poisson process with this
intensity; the first point whose endpoints are both unthinned is the
collision edge of K_n.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .calculus import derive_params
from .errors import ContractError, DomainError, NumericalError, ResourceError
from .pwit import INF, NODE_CAP, Explorer, TwoClock
from .rng import edge_exponentials
from .weights import WeightFamily, WeightScale


@dataclass
class SideArrays:
    node: np.ndarray
    TB: np.ndarray       # global birth time
    loc: np.ndarray      # R_j(T_v): the side's own clock at birth
    gen: np.ndarray
    unfr_gen: np.ndarray
    thinned: np.ndarray
    frozen: np.ndarray


class CoxTrajectory:
    """Collision intensity of one exploration, extended lazily in time.

    ``restrict="unfrozen"`` keeps only pairs with both endpoints outside the
    frozen clusters.
    """

    def __init__(self, explorer: Explorer, restrict: str = "all", step: float | None = None):
        if explorer.sides != 2:
            raise ContractError("collision intensity needs a two-source exploration")
        if restrict not in ("all", "unfrozen"):
            raise ContractError(f"unknown restriction {restrict!r}")
        self.ex = explorer
        self.clock: TwoClock = explorer.clock
        self.ws: WeightScale = explorer.ws
        self.n = float(explorer.n)
        self.restrict = restrict
        self.step = step or 0.5 / derive_params(explorer.family, explorer.n).lambda_norm
        self.horizon = 0.0
        self._count = -1
        self.sides: list[SideArrays] = []
        self.extend(0.0)

    # exploration ---------------------------------------------------------------------
    def extend(self, t: float) -> None:
        """Make sure every vertex born by global time t is present."""
        if t > self.horizon or self._count < 0:
            self.ex.run_until_time(t)
            self.horizon = max(self.horizon, t)
        if len(self.ex.f) != self._count:
            self._rebuild()

    def _rebuild(self) -> None:
        f = self.ex.f
        self._count = len(f)
        side = np.asarray(f.side)
        out = []
        for j in (0, 1):
            idx = np.flatnonzero(side == j)
            fr = np.asarray(f.frozen, bool)[idx]
            if self.restrict == "unfrozen":
                idx, fr = idx[~fr], fr[~fr]
            out.append(SideArrays(idx, np.asarray(f.TB)[idx], np.asarray(f.T)[idx], np.asarray(f.gen)[idx],
                                  np.asarray(f.unfr_gen)[idx], np.asarray(f.thinned, bool)[idx], fr))
        self.sides = out

    # intensity -------------------------------------------------------------------------
    def _pair_terms(self, t: float):
        s1, s2 = self.sides
        m1 = s1.TB <= t
        m2 = s2.TB <= t
        a1, a2 = s1, s2
        i1 = np.flatnonzero(m1)
        i2 = np.flatnonzero(m2)
        tb1 = a1.TB[i1][:, None]
        tb2 = a2.TB[i2][None, :]
        l1 = a1.loc[i1][:, None]
        l2 = a2.loc[i2][None, :]
        c = self.clock
        first1 = tb1 <= tb2
        gap = np.where(first1, c.R(0, np.broadcast_to(tb2, first1.shape)) - l1,
                       c.R(1, np.broadcast_to(tb1, first1.shape)) - l2)
        upper = c.R(0, t) - l1 + c.R(1, t) - l2
        return i1, i2, np.maximum(gap, 0.0), upper

    def pair_masses(self, t: float):
        """(indices on side 1, indices on side 2, mass matrix) at time t."""
        self.extend(t)
        i1, i2, a, b = self._pair_terms(t)
        return i1, i2, self.ws.mu(a, b) / self.n

    def total(self, t: float) -> float:
        """|Z_t| with compensated summation."""
        _, _, m = self.pair_masses(t)
        return math.fsum(m.ravel()) if m.size else 0.0

    def pair_rates(self, t: float):
        """Time derivatives of the pair masses at t (right derivative of the clocks)."""
        self.extend(t)
        i1, i2, a, b = self._pair_terms(t)
        speed = self.clock.Rsum_rate(t)
        with np.errstate(invalid="ignore"):
            rate = np.where(b > a, self.ws.density(np.maximum(b, 1e-300)), 0.0) * speed / self.n
        return i1, i2, np.nan_to_num(rate, nan=0.0, posinf=0.0)

    def trace(self, t_max: float) -> tuple[np.ndarray, np.ndarray]:
        """Total mass at every birth time up to t_max (and at t_max)."""
        if t_max < 0:
            raise DomainError("t_max must be nonnegative")
        self.extend(t_max)
        times = np.unique(np.concatenate([self.sides[0].TB, self.sides[1].TB, [t_max]]))
        times = times[times <= t_max]
        return times, np.array([self.total(float(t)) for t in times])

    # first points -------------------------------------------------------------------------
    def invert(self, level: float, t_from: float = 0.0, t_cap: float = INF) -> float:
        """inf{t >= t_from: |Z_t| >= level}."""
        lo = t_from
        hi = t_from + self.step
        while self.total(hi) < level:
            lo = hi
            hi += self.step
            if hi > t_cap:
                raise ResourceError("intensity never reached the requested level")
        if self.total(lo) >= level:
            return lo
        try:
            return brentq(lambda u: self.total(u) - level, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps)
        except ValueError as exc:
            raise NumericalError(f"root bracketing failed on [{lo}, {hi}]") from exc

    def draw_pair(self, t: float, rng: np.random.Generator) -> tuple[int, int]:
        """Forest node ids of a pair chosen with probability proportional to its rate at t."""
        i1, i2, r = self.pair_rates(t)
        w = r.ravel()
        tot = w.sum()
        if not tot > 0:
            raise NumericalError("no pair carries intensity at the sampled time")
        k = int(np.searchsorted(np.cumsum(w), rng.random() * tot, side="right"))
        k = min(k, w.size - 1)
        a, b = divmod(k, r.shape[1])
        return int(self.sides[0].node[i1[a]]), int(self.sides[1].node[i2[b]])


@dataclass
class CoxPoint:
    T: float
    v1: int
    v2: int
    unthinned: bool
    rejected: int          # thinned points passed over before this one
    level: float


def sample_first_point_cox(traj: CoxTrajectory, rng: np.random.Generator, unthinned: bool = True,
                           max_points: int = 100_000) -> CoxPoint:
    """First point of the collision Cox process (first unthinned one by default).

    Points are generated in time order by inverting the total mass at
    cumulative Exp(1) levels; each point's pair is drawn proportionally to the
    pair rates.  Thinned pairs are skipped when ``unthinned`` is set.
    """
    f = traj.ex.f
    level, t, rejected = 0.0, 0.0, 0
    for _ in range(max_points):
        level += rng.standard_exponential()
        t = traj.invert(level, t)
        v1, v2 = traj.draw_pair(t, rng)
        ok = not (f.thinned[v1] or f.thinned[v2])
        if ok or not unthinned:
            return CoxPoint(t, v1, v2, ok, rejected, level)
        rejected += 1
    raise ResourceError("no unthinned point among the first max_points points")


def competing_first_point(traj: CoxTrajectory, key: int, unthinned: bool = False,
                          t_max: float | None = None, block: int = 2_000_000) -> CoxPoint:
    """First point via independent per-pair clocks.

    Pair p fires when its own mass reaches an Exp(1) variable E_p, a time with a
    closed form through the inverse clock; the first point is the earliest
    firing.  E_p is a hash of (key, node ids), so extending the exploration
    horizon never redraws a pair.  With ``t_max`` the search stops there and
    returns T = inf when nothing fired.
    """
    f = traj.ex.f
    ws = traj.ws
    h = max(traj.horizon, traj.clock.Tunfr if math.isfinite(traj.clock.Tunfr) else 0.0)
    if t_max is not None:
        h = t_max
    while True:
        traj.extend(h)
        s1, s2 = traj.sides
        i2 = np.flatnonzero(s2.TB <= h)
        if unthinned:
            i2 = i2[~s2.thinned[i2]]
        i1_all = np.flatnonzero(s1.TB <= h)
        if unthinned:
            i1_all = i1_all[~s1.thinned[i1_all]]
        best = (INF, -1, -1)
        rows = max(1, block // max(1, i2.size))
        for c0 in range(0, i1_all.size, rows):
            i1 = i1_all[c0:c0 + rows]
            if i1.size == 0 or i2.size == 0:
                break
            tb1 = s1.TB[i1][:, None]
            tb2 = s2.TB[i2][None, :]
            l1 = s1.loc[i1][:, None]
            l2 = s2.loc[i2][None, :]
            first1 = tb1 <= tb2
            gap = np.where(first1, traj.clock.R(0, np.broadcast_to(tb2, first1.shape)) - l1,
                           traj.clock.R(1, np.broadcast_to(tb1, first1.shape)) - l2)
            n1 = np.broadcast_to(s1.node[i1][:, None] + 1, first1.shape)
            n2 = np.broadcast_to(s2.node[i2][None, :] + 1, first1.shape)
            e = edge_exponentials(key, n1.ravel(), n2.ravel()).reshape(first1.shape)
            target = l1 + l2 + ws.phi(ws.phi_inv(np.maximum(gap, 0.0)) + traj.n * e)
            times = traj.clock.Rsum_inv_array(target)
            k = int(np.argmin(times))
            tk = float(times.ravel()[k])
            if tk < best[0]:
                a, b = divmod(k, times.shape[1])
                best = (tk, int(s1.node[i1[a]]), int(s2.node[i2[b]]))
        if best[0] <= h:
            v1, v2 = best[1], best[2]
            return CoxPoint(best[0], v1, v2, not (f.thinned[v1] or f.thinned[v2]), 0, math.nan)
        if t_max is not None:
            return CoxPoint(INF, -1, -1, False, 0, math.nan)
        h += traj.step


# -- rescaled heights ------------------------------------------------------------------

@dataclass
class RescaledPoint:
    t_star: float
    h1_star: float
    h2_star: float
    touched_frozen: bool


def rescale_time(t: float, T_unfr: float, lam: float, n: float, s: float) -> float:
    return lam * (t - T_unfr) - 0.5 * math.log(n / s ** 3)


def unscale_time(t_star: float, T_unfr: float, lam: float, n: float, s: float) -> float:
    return T_unfr + (t_star + 0.5 * math.log(n / s ** 3)) / lam


def rescale_height(h: float, phi_n: float, n: float, s: float) -> float:
    L = math.log(n / s ** 3)
    if L <= 0:
        raise DomainError("rescaling needs n > s_n^3")
    return (h - 0.5 * phi_n * L) / math.sqrt(s * s * L)


def rescale_points(records, family: WeightFamily, n: float) -> list[RescaledPoint]:
    """Map first points (dicts or objects with T, T_unfr, h1, h2) to rescaled coordinates.

    ``h1``/``h2`` are heights above the first unfrozen ancestor; None marks a
    frozen endpoint, which yields NaN heights and ``touched_frozen``.
    """
    bp = derive_params(family, n)
    s = family.s_n(n)
    out = []
    for r in records:
        get = r.get if isinstance(r, dict) else (lambda k, _r=r: getattr(_r, k, None))
        T, Tu, h1, h2 = get("T"), get("T_unfr"), get("h1"), get("h2")
        if T is None or Tu is None or not math.isfinite(Tu):
            raise ContractError("record lacks the unfreezing time")
        touched = h1 is None or h2 is None
        hs = [math.nan if h is None else rescale_height(h, bp.phi_n, n, s) for h in (h1, h2)]
        out.append(RescaledPoint(rescale_time(T, Tu, bp.lambda_norm, n, s), hs[0], hs[1], touched))
    return out


def cox_run(family: WeightFamily, n: int, rng: np.random.Generator, marks: bool = True,
            restrict: str = "all", node_cap: int = NODE_CAP) -> CoxTrajectory:
    """Frozen two-source exploration (run to unfreezing) wrapped as a collision trajectory."""
    ex = Explorer(family, n, rng, sides=2, freeze=True, n_marks=n if marks else None,
                  prune_thinned=False, node_cap=node_cap)
    ex.run_until_unfrozen()
    return CoxTrajectory(ex, restrict=restrict)


def first_point_heights(traj: CoxTrajectory, point: CoxPoint) -> dict:
    f = traj.ex.f
    hs = [None if f.frozen[v] else f.gen[v] - f.unfr_gen[v] for v in (point.v1, point.v2)]
    return {"T": point.T, "T_unfr": traj.clock.Tunfr, "h1": hs[0], "h2": hs[1],
            "H": f.gen[point.v1] + f.gen[point.v2] + 1}


POINTS_HEADER = ["seed", "t_star", "h1_star", "h2_star", "touched_frozen"]


def points_to_csv(seeds, points: list[RescaledPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(POINTS_HEADER)
    for sd, p in zip(seeds, points):
        w.writerow([sd, repr(p.t_star), repr(p.h1_star), repr(p.h2_star), int(p.touched_frozen)])
    return buf.getvalue()
