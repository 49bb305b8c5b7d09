"""Numerical calculus of the exploration branching process.

Birth intensity is the image measure mu_n of Lebesgue measure under f_n.  All
integrals against mu_n are computed in normalized units (weight unit f_n(1))
via the substitution u = x**s_n, which straightens the sharp knee of f_n near
x = 1.  Public helpers that take physical rates convert with f_n(1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaln

from .errors import DomainError, NumericalError
from .weights import WeightFamily, WeightScale

EULER_GAMMA = 0.57721566490153286


# -- integrals against mu_n ---------------------------------------------------------

def _tilted_integral(ws: WeightScale, lam: float, h: Callable[[float], float] | None = None,
                     epsrel: float = 1e-12) -> float:
    """int h(y) exp(-lam y) dmu_n(y) in normalized units, by substituted quadrature."""
    s = ws.s
    inv_s = 1.0 / s

    def body(u):  # integrand without the u**(1/s - 1) factor
        y = float(ws.phi(u ** inv_s)) if u > 0 else 0.0
        val = math.exp(-lam * y) * inv_s
        return val * h(y) if h is not None else val

    def full(u):
        return u ** (inv_s - 1) * body(u)

    head, err0 = integrate.quad(body, 0.0, 1.0, weight="alg", wvar=(inv_s - 1, 0.0),
                                epsabs=0.0, epsrel=epsrel, limit=200)
    pieces = [head]
    lo = 1.0
    scale = max(head, 1e-300)
    while True:
        hi = 2.0 * lo
        val, _ = integrate.quad(full, lo, hi, epsabs=0.0, epsrel=epsrel, limit=200)
        pieces.append(val)
        if full(hi) * hi < 1e-17 * scale and val < 1e-17 * scale:
            break
        lo = hi
        if lo > 1e300:
            raise NumericalError("tail of tilted integral does not decay")
    total = math.fsum(pieces)
    if not math.isfinite(total) or total <= 0:
        raise NumericalError(f"quadrature failed (lam={lam}, s={s}, parts={pieces[:4]})")
    return total


def _expower_laplace(s: float, lam_norm: float) -> float:
    return math.exp(gammaln(1 + 1 / s) - math.log(lam_norm) / s)


class BpModel:
    """Cached calculus for one (family, n)."""

    def __init__(self, family: WeightFamily, n: float):
        self.family = family
        self.n = float(n)
        self.ws = WeightScale(family, n)
        self.s = self.ws.s
        self.closed_form = family.family_id == "ExpPower"
        self._lam_cache: dict[float, float] = {}

    # Laplace transform in normalized units: lam_norm = lam * f_n(1)
    def laplace(self, lam_norm: float, method: str = "auto") -> float:
        if lam_norm <= 0:
            raise DomainError("Laplace argument must be positive")
        if method == "closed" or (method == "auto" and self.closed_form):
            if not self.closed_form:
                raise DomainError("closed form only exists for ExpPower")
            return _expower_laplace(self.s, lam_norm)
        return _tilted_integral(self.ws, lam_norm)

    def lam(self, a: float = 1.0, method: str = "auto") -> float:
        """Normalized tilted Malthusian rate: root of a * laplace(lam) = 1."""
        if a <= 0:
            raise DomainError("a must be positive")
        key = (float(a), method)
        if key in self._lam_cache:
            return self._lam_cache[key]
        la = math.log(a)

        def h(v):
            return la + math.log(self.laplace(math.exp(v), method))

        v0 = la + math.log(math.exp(-EULER_GAMMA))
        step = 1.0
        lo = hi = v0
        f0 = h(v0)
        if f0 > 0:
            while h(hi) > 0:
                lo, hi = hi, hi + step
                step *= 2
                if step > 1e4:
                    raise NumericalError("cannot bracket lambda")
        else:
            while h(lo) < 0:
                hi, lo = lo, lo - step
                step *= 2
                if step > 1e4:
                    raise NumericalError("cannot bracket lambda")
        v = optimize.brentq(h, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
        out = math.exp(v)
        self._lam_cache[key] = out
        return out

    def moment(self, k: int, lam_norm: float, a: float = 1.0) -> float:
        """E_a(D^k) in normalized units: a * int y^k exp(-lam y) dmu_n(y)."""
        return a * _tilted_integral(self.ws, lam_norm, h=lambda y: y ** k)


@lru_cache(maxsize=64)
def bp_model(family: WeightFamily, n: float) -> BpModel:
    return BpModel(family, float(n))


# -- public operations ----------------------------------------------------------

def laplace_mu(family: WeightFamily, n: float, lam: float, method: str = "auto") -> float:
    """int_0^inf exp(-lam f_n(x)) dx for a physical rate lam."""
    m = bp_model(family, n)
    return m.laplace(lam * math.exp(m.ws.log_fn1), method)


def solve_lambda(family: WeightFamily, n: float, a: float = 1.0, method: str = "auto") -> float:
    """Physical rate lambda_n(a) (may overflow for huge s_n log n; see BpParams.lambda_norm)."""
    m = bp_model(family, n)
    return m.lam(a, method) * math.exp(-m.ws.log_fn1)


@dataclass(frozen=True)
class BpParams:
    n: float
    s_n: float
    log_fn1: float
    lambda_norm: float      # lambda_n(1) * f_n(1)
    mean_D_norm: float      # E_1(D) / f_n(1)
    mean_D2_norm: float     # E_1(D^2) / f_n(1)^2
    phi_n: float
    phi_n_fd: float

    @property
    def fn1(self) -> float:
        return math.exp(self.log_fn1)

    @property
    def lambda_n1(self) -> float:
        return self.lambda_norm * math.exp(-self.log_fn1) if -self.log_fn1 < 700 else math.inf

    @property
    def mean_D(self) -> float:
        return self.mean_D_norm * self.fn1

    @property
    def mean_D2(self) -> float:
        return self.mean_D2_norm * self.fn1 ** 2

    def to_json(self) -> dict:
        return {
            "n": self.n, "s_n": self.s_n, "lambda_n": self.lambda_n1, "lambda_norm": self.lambda_norm,
            "phi_n": self.phi_n, "phi_n_fd": self.phi_n_fd, "fn1_log": self.log_fn1,
            "mean_D": self.mean_D, "mean_D2": self.mean_D2,
            "mean_D_norm": self.mean_D_norm, "mean_D2_norm": self.mean_D2_norm,
        }


@lru_cache(maxsize=64)
def derive_params(family: WeightFamily, n: float, method: str = "auto") -> BpParams:
    m = bp_model(family, n)
    lam = m.lam(1.0, method)
    d1 = m.moment(1, lam)
    d2 = m.moment(2, lam)
    phi = 1.0 / (lam * d1)
    h = 1e-4 / max(1.0, m.s)  # lambda(a) behaves like a**s_n, so the step shrinks with s_n
    fd = (m.lam(1 + h, method) - m.lam(1 - h, method)) / (2 * h * lam)
    if abs(fd - phi) > 1e-4 * phi:
        raise NumericalError(f"phi_n cross-check failed: identity {phi}, finite difference {fd}")
    return BpParams(float(n), m.s, m.ws.log_fn1, lam, d1, d2, phi, fd)


# -- step laws and samplers -----------------------------------------------------

class StepLaw:
    """Step law nu_a of the many-to-one random walk, with a size-biased twin.

    Both are sampled by inverse transform on a 512-knot quantile grid of log x
    (x = f_n^{-1}(D) in mu_n-mass units); the 1e-9 tails are handled separately.
    """

    KNOTS = 512
    P_TAIL = 1e-9

    def __init__(self, family: WeightFamily, n: float, a: float = 1.0):
        self.model = bp_model(family, n)
        self.ws = self.model.ws
        self.a = float(a)
        self.lam = self.model.lam(a)
        s = self.model.s
        lam = self.lam
        # fine grid in t = log x; knee at t ~ 0 has width ~ 1/s
        t_lo = math.log(1e-12 / self.a)
        t_hi = 0.0
        while self.a * math.exp(t_hi) * math.exp(-lam * float(self.ws.phi(math.exp(t_hi)))) > 1e-30:
            t_hi += 0.25
        t_hi += 0.25
        npts = int(min(2_000_001, max(20001, (t_hi - t_lo) * 40 * max(s, 1.0))))
        t = np.linspace(t_lo, t_hi, npts | 1)
        x = np.exp(t)
        y = self.ws.phi(x)
        w_plain = self.a * np.exp(-lam * y) * x
        w_sized = self.a * y * np.exp(-lam * y) * x
        c_plain = integrate.cumulative_simpson(w_plain, x=t, initial=0.0) + self.a * x[0]
        c_sized = integrate.cumulative_simpson(w_sized, x=t, initial=0.0)
        self.mass = float(c_plain[-1])               # should be 1 (root identity)
        self.mean = float(c_sized[-1])               # E_a(D) in normalized units
        self._x_lo = x[0]
        self.plain = self._build(t, c_plain / c_plain[-1])
        self.sized = self._build(t, c_sized / c_sized[-1])
        self._tail_elasticity = float(self.ws.elasticity(np.array([x[0]]))[0])

    def _build(self, t, cdf):
        p = np.concatenate([np.geomspace(self.P_TAIL, 0.5, self.KNOTS // 2),
                            1 - np.geomspace(0.5, self.P_TAIL, self.KNOTS // 2)[1:]])
        # cdf may have flat stretches in floating point; interpolate on its strictly increasing part
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        tk = np.interp(p, cdf[keep], t[keep])
        logit = np.log(p) - np.log1p(-p)
        return PchipInterpolator(logit, tk, extrapolate=False), p[0], p[-1], tk

    def _draw(self, table, size: int, rng: np.random.Generator, sized: bool) -> np.ndarray:
        interp, p_lo, p_hi, tk = table
        u = rng.random(size)
        u = np.clip(u, 1e-300, None)
        out = np.empty(size)
        mid = (u >= p_lo) & (u <= p_hi)
        logit = np.log(u[mid]) - np.log1p(-u[mid])
        out[mid] = self.ws.phi(np.exp(interp(logit)))
        low = u < p_lo
        if np.any(low):
            # near zero the CDF in x is a power law with exponent 1 (plain) or 1 + elasticity (sized)
            expo = 1.0 + (self._tail_elasticity if sized else 0.0)
            x = np.exp(tk[0]) * (u[low] / p_lo) ** (1.0 / expo)
            out[low] = self.ws.phi(x)
        high = u > p_hi
        if np.any(high):
            out[high] = self._upper_tail(int(high.sum()), np.exp(tk[-1]), rng, sized)
        return out

    def _upper_tail(self, k: int, x_hi: float, rng, sized: bool) -> np.ndarray:
        # rejection from a shifted exponential; target density ~ y^sized * rho(y) * exp(-lam y)
        y_hi = float(self.ws.phi(x_hi))
        lam = self.lam
        probe = y_hi + np.linspace(0, 60 / lam, 400)
        env = self.ws.density(probe) * (probe if sized else 1.0) * np.exp(-lam * (probe - y_hi) / 2)
        bound = 1.05 * float(np.max(env))
        res = []
        while len(res) < k:
            y = y_hi + rng.standard_exponential(4 * k) / (lam / 2)
            dens = self.ws.density(y) * (y if sized else 1.0) * np.exp(-lam * (y - y_hi) / 2)
            acc = rng.random(4 * k) * bound < dens
            res.extend(y[acc].tolist())
        return np.asarray(res[:k])

    def sample_D(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draws from nu_a in normalized time units."""
        return self._draw(self.plain, size, rng, sized=False)

    def sample_Dstar(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draws from the size-biased law nu*_a in normalized time units."""
        return self._draw(self.sized, size, rng, sized=True)

    def cdf(self, y) -> np.ndarray:
        """G_a(y) = a int_0^y exp(-lam u) dmu_n(u), by quadrature in x."""
        y = np.atleast_1d(np.asarray(y, float))
        out = []
        for yy in y:
            xu = float(self.ws.phi_inv(yy))
            val, _ = integrate.quad(lambda x: math.exp(-self.lam * float(self.ws.phi(x))), 0, xu,
                                    points=[p for p in (0.5, 1.0) if p < xu], limit=200)
            out.append(self.a * val)
        return np.asarray(out)


@lru_cache(maxsize=64)
def step_law(family: WeightFamily, n: float, a: float = 1.0) -> StepLaw:
    return StepLaw(family, float(n), float(a))


def sample_D(step: StepLaw, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    return step.sample_D(size, rng)


def sample_Dstar(step: StepLaw, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    return step.sample_Dstar(size, rng)


def _walk_points(step: StepLaw, t: float, replicas: int, rng) -> list[np.ndarray]:
    """Partial sums S_0 = 0, S_1, ... <= t for independent walks (normalized time)."""
    pts = [[0.0] for _ in range(replicas)]
    pos = np.zeros(replicas)
    alive = np.arange(replicas)
    while alive.size:
        pos[alive] += step.sample_D(alive.size, rng)
        ok = pos[alive] <= t
        for idx in alive[ok]:
            pts[idx].append(pos[idx])
        alive = alive[ok]
    return [np.asarray(p) for p in pts]


def rw_char_mean(char: Callable[[np.ndarray], np.ndarray], t: float, a: float, replicas: int,
                 rng: np.random.Generator, family: WeightFamily, n: float) -> tuple[float, float]:
    """Monte Carlo estimate (mean, standard error) of the discounted characteristic mean.

    ``t`` and the argument of ``char`` are in normalized time units.
    """
    step = step_law(family, n, a)
    lam = step.lam
    acc = np.zeros(replicas)
    pos = np.zeros(replicas)
    alive = np.ones(replicas, dtype=bool)
    while alive.any():
        idx = np.flatnonzero(alive)
        age = t - pos[idx]
        acc[idx] += np.exp(-lam * age) * char(age)
        pos[idx] += step.sample_D(idx.size, rng)
        alive[idx] = pos[idx] <= t
    return float(acc.mean()), float(acc.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.nan


def rw_two_vertex_mean(char2: Callable[[np.ndarray, np.ndarray], np.ndarray], t1: float, t2: float,
                       replicas: int, rng: np.random.Generator, family: WeightFamily, n: float,
                       a1: float = 1.0, a2: float = 1.0) -> tuple[float, float]:
    """Mean of a two-vertex characteristic from pairs of independent walks."""
    st1, st2 = step_law(family, n, a1), step_law(family, n, a2)
    w1 = _walk_points(st1, t1, replicas, rng)
    w2 = _walk_points(st2, t2, replicas, rng)
    vals = np.empty(replicas)
    for k in range(replicas):
        age1 = t1 - w1[k]
        age2 = t2 - w2[k]
        g = char2(age1[:, None], age2[None, :])
        vals[k] = float(np.exp(-st1.lam * age1) @ g @ np.exp(-st2.lam * age2))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replicas))


# -- residual offspring intensity used for freezing --------------------------------

class MStar:
    """m*(u) = int_u^inf exp(-lam (y - u)) dmu_n(y) at a = 1, normalized units.

    Knots are log-spaced on [U_LO, u_max]; below U_LO a two-term small-age
    expansion is exact to O(u); above u_max the leading tail term rho(u)/lam.
    """

    KNOTS = 2048
    U_LO = 1e-8

    def __init__(self, family: WeightFamily, n: float):
        self.model = bp_model(family, n)
        self.ws = self.model.ws
        self.lam = self.model.lam(1.0)
        s = self.model.s
        self.s = s
        u_max = 1.0
        while self.ws.density(np.array([u_max]))[0] / self.lam >= 1e-7 * s:
            u_max *= 2.0
        self.u_max = u_max
        self.knots = np.geomspace(self.U_LO, u_max, self.KNOTS)
        self.values = self._quadrature(self.knots)
        self._interp = PchipInterpolator(np.log(self.knots), self.values, extrapolate=False)
        d = np.diff(self.values)
        self.decreasing = bool(np.all(d <= 0))

    def _quadrature(self, u: np.ndarray) -> np.ndarray:
        """Trapezoid rule in tau = log w for int_0^inf exp(-lam w) rho(u + w) dw."""
        lam = self.lam
        tau = np.linspace(-60.0, math.log(80.0 / lam), 2400)
        h = tau[1] - tau[0]
        w = np.exp(tau)
        out = np.empty(u.size)
        for k0 in range(0, u.size, 64):
            uu = u[k0:k0 + 64, None]
            w_sh = w[None, :]
            y = uu + w_sh
            f = np.exp(-lam * w_sh) * self.ws.density(y) * w_sh
            # the part w < exp(tau[0]) is below 1e-26 * rho(u) and dropped
            out[k0:k0 + 64] = h * (f.sum(axis=1) - 0.5 * (f[:, 0] + f[:, -1]))
        return out

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, float)
        out = np.empty(u.shape)
        small = u < self.U_LO
        big = u > self.u_max
        mid = ~(small | big)
        if np.any(mid):
            out[mid] = self._interp(np.log(u[mid]))
        if np.any(small):
            us = np.maximum(u[small], 0.0)
            xu = self.ws.phi_inv(us)
            e = self.ws.elasticity(np.maximum(xu, 1e-300))
            j = xu * (1.0 - self.lam * us / (1.0 + e))
            out[small] = np.exp(self.lam * us) * (1.0 - j)
        if np.any(big):
            out[big] = self.ws.density(u[big]) / self.lam
        return out

    def exact(self, u: float) -> float:
        """Adaptive-quadrature value of m*(u), for validation."""
        lam = self.lam
        f = lambda w: math.exp(-lam * w) * float(self.ws.density(np.array([u + w]))[0])
        brk = sorted({min(max(u, 1e-300) * k, 1e3) for k in (1, 10, 100)} | {1.0, 10.0})
        pieces, lo = [], 0.0
        for b in brk + [math.inf]:
            if b <= lo:
                continue
            val, _ = integrate.quad(f, lo, b, epsabs=0, epsrel=1e-11, limit=400)
            pieces.append(val)
            lo = b
        return math.fsum(pieces)


@lru_cache(maxsize=32)
def mstar(family: WeightFamily, n: float) -> MStar:
    return MStar(family, float(n))


# -- limit functions ---------------------------------------------------------------

def zeta(r: float) -> float:
    """zeta(a1/a2) with a2 = 1; symmetric under r -> 1/r, zeta(1) = 1."""
    if not r > 0:
        raise DomainError("zeta needs r > 0")
    d = r - 1.0
    if abs(d) < 1e-6:
        return 1.0 - d * d / 6.0
    if r > 1.0:  # evaluate through the symmetry so both branches share rounding
        r = 1.0 / r
    return 2.0 * r * math.log(r) / ((r + 1.0) * (r - 1.0))


def I_func(z: float) -> float:
    """int_0^inf (exp(-|y - z|) - exp(-(y + z))) dy / y, split at y = z."""
    if z < 0:
        raise DomainError("I_func needs z >= 0")
    if z == 0:
        return 0.0
    # for y < z: exp(y - z)(1 - exp(-2y))/y ; for y > z: exp(z - y)(1 - exp(-2z))/y
    left = lambda y: math.exp(y - z) * (-math.expm1(-2 * y)) / y if y > 0 else 2.0 * math.exp(-z)
    right = lambda y: math.exp(z - y) * (-math.expm1(-2 * z)) / y
    a, _ = integrate.quad(left, 0.0, z, epsabs=0, epsrel=1e-10, limit=200)
    b, _ = integrate.quad(right, z, math.inf, epsabs=0, epsrel=1e-10, limit=200)
    return a + b


def zeta_from_I(r: float) -> float:
    """int_0^inf exp(-z) I(r z) dz by nested quadrature."""
    val, _ = integrate.quad(lambda z: math.exp(-z) * I_func(r * z), 0, math.inf,
                            epsabs=0, epsrel=1e-9, limit=200, points=None)
    return val


def chi_n(ws: WeightScale, t1, t2):
    """Two-vertex characteristic mu_n(|t1 - t2|, t1 + t2] (normalized times)."""
    t1 = np.asarray(t1, float)
    t2 = np.asarray(t2, float)
    val = ws.mu(np.abs(t1 - t2), t1 + t2)
    val = np.where((t1 < 0) | (t2 < 0), 0.0, val)
    return float(val) if val.ndim == 0 else val


def chi_n_K(ws: WeightScale, t1, t2, K: float):
    """chi_n with mu_n restricted to x in (1 - K/s_n, 1 + K/s_n]."""
    if K >= ws.s:
        raise DomainError("truncation needs K < s_n")
    t1 = np.asarray(t1, float)
    t2 = np.asarray(t2, float)
    lo = np.maximum(ws.phi_inv(np.abs(t1 - t2)), 1 - K / ws.s)
    hi = np.minimum(ws.phi_inv(np.maximum(t1 + t2, 0.0)), 1 + K / ws.s)
    val = np.where((t1 < 0) | (t2 < 0) | (hi <= lo), 0.0, hi - lo)
    return float(val) if val.ndim == 0 else val


def gw_survival(x):
    """Survival probability of a Poisson(x) Galton-Watson tree (largest root of q = 1 - exp(-x q))."""
    xa = np.atleast_1d(np.asarray(x, float))
    q = np.where(xa > 1, 1 - 1 / np.where(xa > 1, xa, 2.0), 0.0)
    sup = xa > 1
    for _ in range(200):
        e = np.exp(-xa * q)
        h = q - 1 + e
        dh = 1 - xa * e
        step = np.where(sup & (dh > 0), h / np.where(dh > 0, dh, 1.0), 0.0)
        q = np.clip(q - step, 0.0, 1.0)
        if np.all(np.abs(step) <= 1e-16):
            break
    q = np.where(sup, q, 0.0)
    return float(q[0]) if np.ndim(x) == 0 else q
