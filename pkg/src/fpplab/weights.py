"""Edge-weight families and the n-dependent weight map f_n.

A family is specified by an increasing map g with Y = g(E), E ~ Exp(1); the
rescaled map is f_n(x) = g(x / n).  Everything is evaluated through log g to
survive the underflow of f_n(1) = n^(-s_n).

Most downstream code works in *normalized* units where the weight unit is
f_n(1); :class:`WeightScale` bundles the normalized map, its inverse and the
density of the image measure mu_n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigError, DomainError, ModelError

FAMILIES = ("ExpPower", "LogPower", "ExpExp", "InvPower", "Generic")


def _log1mexp(z):
    """log(1 - exp(-z)) for z > 0, accurate at both ends."""
    z = np.asarray(z, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(z > math.log(2), np.log1p(-np.exp(-z)), np.log(-np.expm1(-z)))


@dataclass(frozen=True)
class SnSchedule:
    """Rule n -> s_n.

    kinds: ``explicit`` (constant ``value``), ``log_n`` (``scale * log n``),
    ``power`` (``coef * n**alpha * (log n)**log_power``) and ``family`` (the
    closed form attached to the named family).
    """

    kind: str = "family"
    value: float = 1.0
    scale: float = 1.0
    coef: float = 1.0
    alpha: float = 0.0
    log_power: float = 0.0

    def __call__(self, n: float, family: "WeightFamily") -> float:
        if self.kind == "explicit":
            return float(self.value)
        if self.kind == "log_n":
            return self.scale * math.log(n)
        if self.kind == "power":
            return self.coef * n ** self.alpha * math.log(n) ** self.log_power
        if self.kind == "family":
            return family._family_sn(n)
        raise ConfigError(f"unknown s_n schedule kind {self.kind!r}")


@dataclass(frozen=True)
class WeightFamily:
    family_id: str
    params: tuple = ()
    sn: SnSchedule = field(default_factory=SnSchedule)
    table_z: tuple = ()
    table_g: tuple = ()

    def __post_init__(self):
        if self.family_id not in FAMILIES:
            raise ConfigError(f"unknown family {self.family_id!r}")
        p = dict(self.params)
        if self.family_id == "ExpPower":
            if self.sn.kind == "family":
                raise ConfigError("ExpPower needs an explicit, log_n or power s_n schedule")
        elif self.family_id == "LogPower":
            if not (p.get("rho", 0) > 0 and 0 < p.get("kappa", 0) < 1):
                raise ConfigError("LogPower needs rho > 0 and kappa in (0, 1)")
        elif self.family_id in ("ExpExp", "InvPower"):
            if not (p.get("rho", 0) > 0 and 0 < p.get("alpha", 0) < 1):
                raise ConfigError(f"{self.family_id} needs rho > 0 and alpha in (0, 1)")
        else:
            z = np.asarray(self.table_z, float)
            g = np.asarray(self.table_g, float)
            if z.size < 4 or z.size != g.size or np.any(z <= 0) or np.any(g <= 0):
                raise ConfigError("Generic needs >= 4 positive (z, g) table points")
            if np.any(np.diff(z) <= 0) or np.any(np.diff(g) <= 0):
                raise ModelError("Generic table must be strictly increasing in z and g")
            if self.sn.kind == "family":
                raise ConfigError("Generic needs an explicit s_n schedule")

    # -- construction helpers -------------------------------------------------
    @classmethod
    def exp_power(cls, sn: float | SnSchedule) -> "WeightFamily":
        sched = sn if isinstance(sn, SnSchedule) else SnSchedule("explicit", value=float(sn))
        return cls("ExpPower", (), sched)

    @classmethod
    def from_config(cls, cfg: dict[str, Any]) -> "WeightFamily":
        cfg = dict(cfg)
        fid = cfg.pop("family")
        sn_cfg = dict(cfg.pop("sn", {"kind": "family"}))
        kind = sn_cfg.pop("kind", "family")
        try:
            sched = SnSchedule(kind=kind, **sn_cfg)
        except TypeError as exc:
            raise ConfigError(f"bad s_n schedule: {exc}") from None
        table = cfg.pop("table", None) or {}
        params = tuple(sorted((k, float(v)) for k, v in cfg.items()))
        return cls(fid, params, sched, tuple(table.get("z", ())), tuple(table.get("g", ())))

    def to_config(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.family_id, **dict(self.params)}
        s = self.sn
        sn = {"kind": s.kind}
        if s.kind == "explicit":
            sn["value"] = s.value
        elif s.kind == "log_n":
            sn["scale"] = s.scale
        elif s.kind == "power":
            sn.update(coef=s.coef, alpha=s.alpha, log_power=s.log_power)
        out["sn"] = sn
        if self.family_id == "Generic":
            out["table"] = {"z": list(self.table_z), "g": list(self.table_g)}
        return out

    # -- s_n ------------------------------------------------------------------
    def s_n(self, n: float) -> float:
        s = self.sn(n, self)
        if not s > 0:
            raise ConfigError(f"s_n must be positive, got {s} at n={n}")
        return float(s)

    def _family_sn(self, n: float) -> float:
        p = dict(self.params)
        if self.family_id == "LogPower":
            rho, kap = p["rho"], p["kappa"]
            return math.log(n) ** (1 / kap - 1) / (kap * rho ** (1 / kap))
        if self.family_id == "ExpExp":
            return p["rho"] * n ** p["alpha"]
        if self.family_id == "InvPower":
            rho, al = p["rho"], p["alpha"]
            return rho / (n - 1) * (-math.log1p(-1 / n)) ** (-(al + 1))
        raise ConfigError(f"{self.family_id} has no built-in s_n")

    # -- log g and its elasticity --------------------------------------------
    def _generic_interp(self):
        cached = self.__dict__.get("_pchip")
        if cached is None:
            lz = np.log(np.asarray(self.table_z, float))
            lg = np.log(np.asarray(self.table_g, float))
            cached = (PchipInterpolator(lz, lg, extrapolate=False), lz, lg)
            object.__setattr__(self, "_pchip", cached)
        return cached

    def log_g(self, z, n: float) -> np.ndarray:
        """log g(z) for z > 0 (g may depend on n through s_n for ExpPower)."""
        z = np.asarray(z, float)
        p = dict(self.params)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if self.family_id == "ExpPower":
                return self.s_n(n) * np.log(z)
            if self.family_id == "LogPower":
                big_l = -_log1mexp(z)
                return -(big_l / p["rho"]) ** (1 / p["kappa"])
            if self.family_id == "ExpExp":
                prob = -np.expm1(-z)
                return -(p["rho"] / p["alpha"]) * prob ** (-p["alpha"])
            if self.family_id == "InvPower":
                return -(p["rho"] / p["alpha"]) * z ** (-p["alpha"])
            interp, lz, lg = self._generic_interp()
            u = np.log(z)
            out = interp(u)
            lo_slope = (lg[1] - lg[0]) / (lz[1] - lz[0])
            hi_slope = (lg[-1] - lg[-2]) / (lz[-1] - lz[-2])
            out = np.where(u < lz[0], lg[0] + lo_slope * (u - lz[0]), out)
            out = np.where(u > lz[-1], lg[-1] + hi_slope * (u - lz[-1]), out)
            return out

    def elasticity(self, z, n: float) -> np.ndarray:
        """z g'(z) / g(z); for the rescaled map this equals x f_n'(x) / f_n(x) at x = n z."""
        z = np.asarray(z, float)
        p = dict(self.params)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if self.family_id == "ExpPower":
                return np.full_like(z, self.s_n(n))
            if self.family_id == "LogPower":
                rho, kap = p["rho"], p["kappa"]
                big_l = -_log1mexp(z)
                return (1 / (kap * rho)) * (big_l / rho) ** (1 / kap - 1) * z / np.expm1(z)
            if self.family_id == "ExpExp":
                prob = -np.expm1(-z)
                return p["rho"] * z * np.exp(-z) * prob ** (-p["alpha"] - 1)
            if self.family_id == "InvPower":
                return p["rho"] * z ** (-p["alpha"])
            h = 1e-6
            up = self.log_g(z * (1 + h), n)
            dn = self.log_g(z * (1 - h), n)
            return (up - dn) / (np.log1p(h) - np.log1p(-h))

    def log_g_inv(self, ly, n: float) -> np.ndarray:
        """z with log g(z) = ly."""
        ly = np.asarray(ly, float)
        p = dict(self.params)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if self.family_id == "ExpPower":
                return np.exp(ly / self.s_n(n))
            if self.family_id == "LogPower":
                big_l = p["rho"] * (-ly) ** p["kappa"]
                return -_log1mexp(big_l)
            if self.family_id == "ExpExp":
                prob = (-p["alpha"] * ly / p["rho"]) ** (-1 / p["alpha"])
                return np.where(prob >= 1, np.inf, -np.log1p(-prob))
            if self.family_id == "InvPower":
                return (-p["alpha"] * ly / p["rho"]) ** (-1 / p["alpha"])
            return _bisect_log(lambda lz: self.log_g(np.exp(lz), n), ly)

    def log_sup(self) -> float:
        """log of sup g (the right end of the support of Y)."""
        p = dict(self.params)
        if self.family_id in ("LogPower", "InvPower"):
            return 0.0
        if self.family_id == "ExpExp":
            return -p["rho"] / p["alpha"]
        return math.inf


def _bisect_log(log_fun, target: np.ndarray, lo: float = -700.0, hi: float = 700.0, iters: int = 200):
    """Vectorized bisection for log_fun(u) = target over u in [lo, hi]; returns exp(u)."""
    target = np.atleast_1d(np.asarray(target, float))
    a = np.full(target.shape, lo)
    b = np.full(target.shape, hi)
    for _ in range(iters):
        m = 0.5 * (a + b)
        below = log_fun(m) < target
        a = np.where(below, m, a)
        b = np.where(below, b, m)
        if np.all(b - a < 1e-13 * np.maximum(1.0, np.abs(a))):
            break
    return np.exp(0.5 * (a + b))


def _out(v, like):
    return float(v) if np.ndim(like) == 0 else v


# -- public weight-map API -------------------------------------------------------

def log_fn(family: WeightFamily, n: float, x) -> np.ndarray:
    """log f_n(x); -inf at x = 0."""
    x = np.asarray(x, float)
    if np.any(x < 0):
        raise DomainError("f_n is defined for x >= 0")
    with np.errstate(divide="ignore"):
        return _out(family.log_g(x / n, n), x)


def eval_fn(family: WeightFamily, n: float, x):
    """f_n(x) = g(x / n) in linear space (may underflow to 0)."""
    lv = log_fn(family, n, x)
    if np.any(np.asarray(lv) > 709.0):
        raise DomainError("f_n(x) overflows double precision; use log_fn")
    return _out(np.exp(lv), x)


def eval_fn_inv(family: WeightFamily, n: float, y, log: bool = False):
    """x with f_n(x) = y; pass ``log=True`` to supply log y instead of y."""
    y = np.asarray(y, float)
    if log:
        ly = y
    else:
        if np.any(y < 0):
            raise DomainError("f_n^{-1} needs y >= 0")
        with np.errstate(divide="ignore"):
            ly = np.log(y)
    if np.any(ly > family.log_sup()):
        raise DomainError("y exceeds the support of the weight law")
    x = n * family.log_g_inv(ly, n)
    x = np.where(np.isneginf(ly), 0.0, x)
    return _out(x, y)


@dataclass(frozen=True)
class MeasureMuN:
    """Image of Lebesgue measure on (0, inf) under f_n."""

    family: WeightFamily
    n: float


def mu_n_interval(measure: MeasureMuN, a, b):
    """mu_n((a, b]) = f_n^{-1}(b) - f_n^{-1}(a)."""
    a_arr, b_arr = np.asarray(a, float), np.asarray(b, float)
    if np.any(a_arr > b_arr):
        raise DomainError("mu_n_interval needs a <= b")
    fam, n = measure.family, measure.n
    return _out(eval_fn_inv(fam, n, b_arr) - eval_fn_inv(fam, n, a_arr), a_arr + b_arr)


class WeightScale:
    """Normalized weight map phi(x) = f_n(x) / f_n(1) for one (family, n).

    Times and weights measured in units of f_n(1) are what every simulation in
    this package uses internally.
    """

    def __init__(self, family: WeightFamily, n: float):
        self.family = family
        self.n = float(n)
        self.s = family.s_n(n)
        self.log_fn1 = float(family.log_g(1.0 / n, n))
        if not math.isfinite(self.log_fn1):
            raise DomainError(f"log f_n(1) is not finite for n={n}")
        self._power = self.s if family.family_id == "ExpPower" else None

    def phi1(self, x: float) -> float:
        """Scalar fast path of :meth:`phi`."""
        if self._power is not None:
            return x ** self._power
        return float(self.phi(x))

    def log_phi(self, x):
        with np.errstate(divide="ignore"):
            return self.family.log_g(np.asarray(x, float) / self.n, self.n) - self.log_fn1

    def phi(self, x):
        with np.errstate(over="ignore"):
            if self._power is not None:
                return np.power(np.asarray(x, float), self._power)
            return np.exp(self.log_phi(x))

    def phi_inv(self, y):
        """x with phi(x) = y (mu_n mass of (0, y] in normalized units)."""
        y = np.asarray(y, float)
        with np.errstate(divide="ignore"):
            ly = np.log(y) + self.log_fn1
        sup = self.family.log_sup()
        x = self.n * self.family.log_g_inv(np.minimum(ly, sup), self.n)
        x = np.where(y <= 0, 0.0, np.where(ly > sup, np.inf, x))
        return x

    def elasticity(self, x):
        """x phi'(x) / phi(x)."""
        return self.family.elasticity(np.asarray(x, float) / self.n, self.n)

    def density(self, y):
        """Lebesgue density of mu_n at normalized weight y: 1 / phi'(phi^{-1}(y))."""
        y = np.asarray(y, float)
        x = self.phi_inv(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = x / (y * self.elasticity(x))
        return np.where(y > 0, d, np.inf)

    def mu(self, a, b):
        """mu_n((a, b]) for normalized endpoints, zero when b <= a."""
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        return np.where(b > a, self.phi_inv(np.maximum(b, 0)) - self.phi_inv(np.maximum(a, 0)), 0.0)


# -- condition checks --------------------------------------------------------------

@dataclass
class ConditionRecord:
    n: float
    s_n: float
    scaling_max_dev: float
    ratio_low_min: float
    ratio_low_max: float
    ratio_high_min: float
    ratio_high_max: float
    monotone: bool
    sn_warning: bool

    @property
    def epsilon0(self) -> float:
        return self.ratio_low_min


@dataclass
class ConditionReport:
    family: dict
    delta: float
    R: float
    records: list[ConditionRecord]

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "delta": self.delta,
            "R": self.R,
            "records": [dict(vars(r), epsilon0=r.epsilon0) for r in self.records],
        }


def check_conditions(family: WeightFamily, n_list, grid=None, delta: float = 0.5,
                     R: float = 4.0) -> ConditionReport:
    """Scaling deviation and relative-derivative bounds of f_n per n.

    ``grid`` is the x-grid for the scaling check |f_n(x^(1/s_n))/f_n(1) - x|;
    it defaults to 400 points on [1 - delta, R].
    """
    if len(n_list) == 0:
        raise DomainError("n_list must be nonempty")
    if not (0 < delta <= 1 and R > 1):
        raise DomainError("need delta in (0, 1] and R > 1")
    xs = np.linspace(1 - delta, R, 400) if grid is None else np.asarray(grid, float)
    xs = xs[xs > 0]
    recs = []
    for n in n_list:
        ws = WeightScale(family, n)
        s = ws.s
        scaled = ws.phi(xs ** (1 / s))
        dev = float(np.max(np.abs(scaled - xs)))
        low = np.linspace(1 - delta, 1, 200)
        low = low[low > 0]
        high = np.linspace(1, R, 200)
        r_low = ws.elasticity(low) / s
        r_high = ws.elasticity(high) / s
        mono_grid = np.concatenate([np.geomspace(1e-6, 1, 300), np.linspace(1, 10 * R, 300)[1:]])
        lv = ws.log_phi(mono_grid)
        finite = np.isfinite(lv)
        monotone = bool(np.all(np.diff(lv[finite]) > 0))
        if not monotone:
            raise ModelError(f"f_n is not strictly increasing on the check grid at n={n}")
        recs.append(ConditionRecord(
            n=float(n), s_n=s, scaling_max_dev=dev,
            ratio_low_min=float(np.min(r_low)), ratio_low_max=float(np.max(r_low)),
            ratio_high_min=float(np.min(r_high)), ratio_high_max=float(np.max(r_high)),
            monotone=monotone, sn_warning=bool(s >= n ** (1 / 3)),
        ))
    return ConditionReport(family.to_config(), delta, R, recs)
