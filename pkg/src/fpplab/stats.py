"""Goodness-of-fit and moment summaries used by every experiment."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .calculus import gw_survival
from .errors import DomainError


def _clean(sample) -> np.ndarray:
    x = np.asarray(sample, float).ravel()
    if x.size == 0:
        raise DomainError("empty sample")
    if np.any(np.isnan(x)):
        raise DomainError("NaN in sample")
    return x


def kolmogorov_sf(lam: float, terms: int = 100) -> float:
    """P(K > lam) for the Kolmogorov distribution via its alternating series."""
    if lam <= 0:
        return 1.0
    if lam < 0.2:  # series is numerically useless here and the tail is 1 to double precision
        return 1.0
    total = 0.0
    for k in range(1, terms + 1):
        term = math.exp(-2.0 * k * k * lam * lam)
        total += term if k % 2 else -term
        if term < 1e-16:
            break
    return min(1.0, max(0.0, 2.0 * total))


def ks_test(sample, cdf: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
    """One-sample KS distance and asymptotic p-value."""
    x = np.sort(_clean(sample))
    m = x.size
    f = np.asarray(cdf(x), float)
    i = np.arange(1, m + 1)
    d = float(max(np.max(i / m - f), np.max(f - (i - 1) / m)))
    d = min(max(d, 0.0), 1.0)
    return d, kolmogorov_sf(math.sqrt(m) * d)


def ks_2samp(a, b) -> tuple[float, float]:
    """Two-sample KS distance sup |F_a - F_b| (handles ties) and asymptotic p-value."""
    a = np.sort(_clean(a))
    b = np.sort(_clean(b))
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    eff = a.size * b.size / (a.size + b.size)
    return d, kolmogorov_sf(math.sqrt(eff) * d)


def ecdf(sample) -> tuple[np.ndarray, np.ndarray]:
    x = np.sort(_clean(sample))
    return x, np.arange(1, x.size + 1) / x.size


def _moments(x: np.ndarray) -> tuple[float, float, float, float]:
    mu = x.mean()
    c = x - mu
    m2 = float(np.mean(c ** 2))
    m3 = float(np.mean(c ** 3))
    m4 = float(np.mean(c ** 4))
    skew = m3 / m2 ** 1.5 if m2 > 0 else 0.0
    kurt = m4 / m2 ** 2 - 3.0 if m2 > 0 else 0.0
    return float(mu), m2 * x.size / max(x.size - 1, 1), skew, kurt


def _jackknife_moments(x: np.ndarray) -> np.ndarray:
    """Leave-one-out (mean, var, skew, kurt) for every index, O(m) via power sums."""
    m = x.size
    loc, sc = x.mean(), x.std() or 1.0
    z = (x - loc) / sc
    sums = [np.sum(z ** k) for k in range(5)]
    k1 = m - 1
    r1 = (sums[1] - z) / k1
    r2 = (sums[2] - z ** 2) / k1
    r3 = (sums[3] - z ** 3) / k1
    r4 = (sums[4] - z ** 4) / k1
    c2 = r2 - r1 ** 2
    c3 = r3 - 3 * r1 * r2 + 2 * r1 ** 3
    c4 = r4 - 4 * r1 * r3 + 6 * r1 ** 2 * r2 - 3 * r1 ** 4
    mean = loc + sc * r1
    var = sc ** 2 * c2 * k1 / max(k1 - 1, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        skew = c3 / c2 ** 1.5
        kurt = c4 / c2 ** 2 - 3.0
    return np.vstack([mean, var, skew, kurt])


def _jackknife_se(loo: np.ndarray) -> np.ndarray:
    m = loo.shape[1]
    dev = loo - loo.mean(axis=1, keepdims=True)
    return np.sqrt((m - 1) / m * np.sum(dev ** 2, axis=1))


def norm_cdf(x):
    return special.ndtr(np.asarray(x, float))


def normal_summary(sample, cdf: Callable | None = None) -> dict:
    """Standardized moments with jackknife standard errors and KS against a normal law."""
    x = _clean(sample)
    mean, var, skew, kurt = _moments(x)
    if x.size > 2:
        se = _jackknife_se(_jackknife_moments(x))
    else:
        se = np.full(4, math.nan)
    d, p = ks_test(x, cdf or norm_cdf)
    return {
        "m": int(x.size), "mean": mean, "var": var, "skew": skew, "kurt": kurt,
        "se_mean": float(se[0]), "se_var": float(se[1]), "se_skew": float(se[2]), "se_kurt": float(se[3]),
        "ks": d, "ks_p": p,
    }


def target_cdfs() -> dict[str, Callable]:
    """Limit laws used as KS targets."""
    return {
        "M": lambda x: gw_survival(np.asarray(x, float)),
        "M_max2": lambda x: gw_survival(np.asarray(x, float)) ** 2,
        "N01": norm_cdf,
        "N0half": lambda x: special.ndtr(np.asarray(x, float) * math.sqrt(2.0)),
        "Exp1": lambda x: np.where(np.asarray(x, float) > 0, -np.expm1(-np.asarray(x, float)), 0.0),
        "Gamma": lambda x, shape=1.0: special.gammainc(shape, np.maximum(np.asarray(x, float), 0.0)),
    }


@dataclass
class StatReport:
    name: str
    m: int
    moments: dict
    ks: float | None = None
    ks_p: float | None = None
    target: str | None = None
    censored: int = 0
    config_hash: str = ""
    seed: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, name: str, sample, target: str | None = None, censored: int = 0,
              config_hash: str = "", seed: int = 0, **extra) -> "StatReport":
        x = _clean(sample)
        mean, var, skew, kurt = _moments(x)
        se = _jackknife_se(_jackknife_moments(x)) if x.size > 2 else np.full(4, math.nan)
        mom = {"mean": mean, "var": var, "skew": skew, "kurt": kurt,
               "se_mean": float(se[0]), "se_var": float(se[1]),
               "se_skew": float(se[2]), "se_kurt": float(se[3])}
        d = p = None
        if target is not None:
            d, p = ks_test(x, target_cdfs()[target])
        return cls(name, int(x.size), mom, d, p, target, censored, config_hash, seed, dict(extra))

    def to_json(self) -> dict:
        return asdict(self)
