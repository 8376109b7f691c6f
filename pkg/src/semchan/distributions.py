"""Distribution families used by the semantic libraries.

Parameterizations follow the densities the libraries were fitted under:

* Normal(mu, sigma)
* LogNormal(mu, sigma)            -- mean / std of ln(x)
* Exponential(rate)               -- f(x) = rate * exp(-rate * x)
* Gamma(shape, rate)              -- f(x) = rate^shape / G(shape) x^(shape-1) e^(-rate x)
* Weibull(shape, scale)           -- f(x) = shape/scale (x/scale)^(shape-1) e^(-(x/scale)^shape)
* TLocationScale(mu, sigma, nu)

Random streams are :class:`numpy.random.Generator` instances owned by the
caller.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.optimize import minimize, minimize_scalar

# t draws above this many degrees of freedom use the Gaussian limit
T_GAUSSIAN_LIMIT = 1e5

MLE_RTOL = 1e-8
MLE_MAX_ITER = 500
MIN_FIT_SAMPLES = 10


class DistributionError(ValueError):
    pass


class ParameterError(DistributionError):
    pass


class DomainError(DistributionError):
    pass


class DegenerateDataError(DistributionError):
    pass


class ConvergenceError(DistributionError):
    def __init__(self, message, iterations):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


class SelectionError(DistributionError):
    """Every candidate family failed to fit."""

    def __init__(self, failures):
        detail = "; ".join(f"{fam.key}: {err}" for fam, err in failures.items())
        super().__init__(f"no candidate family could be fitted ({detail})")
        self.failures = failures


class Family(enum.Enum):
    # Declaration order is the tie-break order for model selection.
    NORMAL = ("normal", ("mu", "sigma"), False)
    LOGNORMAL = ("lognormal", ("mu", "sigma"), True)
    EXPONENTIAL = ("exponential", ("rate",), True)
    GAMMA = ("gamma", ("shape", "rate"), True)
    WEIBULL = ("weibull", ("shape", "scale"), True)
    TLOCATIONSCALE = ("tlocationscale", ("mu", "sigma", "nu"), False)

    def __init__(self, key, param_names, positive_support):
        self.key = key
        self.param_names = param_names
        self.positive_support = positive_support

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @classmethod
    def parse(cls, name) -> "Family":
        if isinstance(name, Family):
            return name
        key = str(name).strip().lower().replace("-", "").replace("_", "").replace(" ", "")
        aliases = {"t": "tlocationscale", "student": "tlocationscale", "gaussian": "normal",
                   "lognorm": "lognormal", "exp": "exponential"}
        key = aliases.get(key, key)
        for fam in cls:
            if fam.key == key:
                return fam
        raise ParameterError(f"unknown distribution family {name!r}")


#: The five families compared when fitting multipath-number data.
NUMBER_FAMILIES = (Family.NORMAL, Family.LOGNORMAL, Family.EXPONENTIAL,
                   Family.GAMMA, Family.WEIBULL)


@dataclass(frozen=True)
class DistributionSpec:
    family: Family
    params: tuple

    def __post_init__(self):
        fam = Family.parse(self.family)
        object.__setattr__(self, "family", fam)
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if len(params) != fam.n_params:
            raise ParameterError(
                f"{fam.key} takes {fam.n_params} parameters {fam.param_names}, got {len(params)}")
        if not all(math.isfinite(p) for p in params):
            raise ParameterError(f"{fam.key} parameters must be finite, got {params}")
        named = dict(zip(fam.param_names, params))
        for name in ("sigma", "rate", "shape", "scale", "nu"):
            if name in named and not named[name] > 0:
                raise ParameterError(f"{fam.key} parameter {name} must be > 0, got {named[name]}")

    # -- constructors ---------------------------------------------------------

    @classmethod
    def normal(cls, mu, sigma):
        return cls(Family.NORMAL, (mu, sigma))

    @classmethod
    def lognormal(cls, mu, sigma):
        return cls(Family.LOGNORMAL, (mu, sigma))

    @classmethod
    def exponential(cls, rate):
        return cls(Family.EXPONENTIAL, (rate,))

    @classmethod
    def exponential_mean(cls, mean):
        if not mean > 0:
            raise ParameterError(f"exponential mean must be > 0, got {mean}")
        return cls(Family.EXPONENTIAL, (1.0 / mean,))

    @classmethod
    def gamma(cls, shape, rate):
        return cls(Family.GAMMA, (shape, rate))

    @classmethod
    def weibull(cls, shape, scale):
        return cls(Family.WEIBULL, (shape, scale))

    @classmethod
    def t(cls, mu, sigma, nu):
        return cls(Family.TLOCATIONSCALE, (mu, sigma, nu))

    # -- properties -----------------------------------------------------------

    @property
    def named(self) -> dict:
        return dict(zip(self.family.param_names, self.params))

    def __getitem__(self, name):
        return self.named[name]

    def mean(self) -> float:
        f, p = self.family, self.params
        if f is Family.NORMAL or f is Family.TLOCATIONSCALE:
            if f is Family.TLOCATIONSCALE and p[2] <= 1:
                return math.nan
            return p[0]
        if f is Family.LOGNORMAL:
            return math.exp(p[0] + p[1] ** 2 / 2)
        if f is Family.EXPONENTIAL:
            return 1.0 / p[0]
        if f is Family.GAMMA:
            return p[0] / p[1]
        return p[1] * math.gamma(1 + 1 / p[0])

    def median(self) -> float:
        return float(self.ppf(0.5))

    # -- densities ------------------------------------------------------------

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        f, p = self.family, self.params
        with np.errstate(divide="ignore", invalid="ignore"):
            if f is Family.NORMAL:
                mu, s = p
                out = -0.5 * ((x - mu) / s) ** 2 - math.log(s) - 0.5 * math.log(2 * math.pi)
            elif f is Family.TLOCATIONSCALE:
                mu, s, nu = p
                z = (x - mu) / s
                out = (special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2)
                       - 0.5 * math.log(nu * math.pi) - math.log(s)
                       - (nu + 1) / 2 * np.log1p(z * z / nu))
            else:
                pos = x > 0
                xs = np.where(pos, x, 1.0)
                lx = np.log(xs)
                if f is Family.LOGNORMAL:
                    mu, s = p
                    out = -0.5 * ((lx - mu) / s) ** 2 - lx - math.log(s) - 0.5 * math.log(2 * math.pi)
                elif f is Family.EXPONENTIAL:
                    (rate,) = p
                    out = math.log(rate) - rate * xs
                    pos = x >= 0
                elif f is Family.GAMMA:
                    a, b = p
                    out = a * math.log(b) - special.gammaln(a) + (a - 1) * lx - b * xs
                else:
                    k, lam = p
                    out = math.log(k / lam) + (k - 1) * (lx - math.log(lam)) - (xs / lam) ** k
                out = np.where(pos, out, -np.inf)
        return out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def loglik(self, data) -> float:
        return float(np.sum(self.logpdf(data)))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        f, p = self.family, self.params
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if f is Family.NORMAL:
                return special.ndtr((x - p[0]) / p[1])
            if f is Family.TLOCATIONSCALE:
                z = (x - p[0]) / p[1]
                return special.ndtr(z) if p[2] > T_GAUSSIAN_LIMIT else special.stdtr(p[2], z)
            xp = np.clip(x, 0.0, None)
            if f is Family.LOGNORMAL:
                return np.where(x > 0, special.ndtr((np.log(np.where(x > 0, x, 1.0)) - p[0]) / p[1]), 0.0)
            if f is Family.EXPONENTIAL:
                return -np.expm1(-p[0] * xp)
            if f is Family.GAMMA:
                return special.gammainc(p[0], p[1] * xp)
            return -np.expm1(-((xp / p[1]) ** p[0]))

    def ppf(self, q):
        q = np.asarray(q, dtype=float)
        f, p = self.family, self.params
        if f is Family.NORMAL:
            return p[0] + p[1] * special.ndtri(q)
        if f is Family.TLOCATIONSCALE:
            z = special.ndtri(q) if p[2] > T_GAUSSIAN_LIMIT else special.stdtrit(p[2], q)
            return p[0] + p[1] * z
        if f is Family.LOGNORMAL:
            return np.exp(p[0] + p[1] * special.ndtri(q))
        if f is Family.EXPONENTIAL:
            return -np.log1p(-q) / p[0]
        if f is Family.GAMMA:
            return special.gammaincinv(p[0], q) / p[1]
        return p[1] * (-np.log1p(-q)) ** (1.0 / p[0])

    def support(self) -> tuple:
        return (0.0, math.inf) if self.family.positive_support else (-math.inf, math.inf)

    # -- sampling -------------------------------------------------------------

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        return sample(self, rng, n)


def sample(spec: DistributionSpec, rng: np.random.Generator, n: int = 1) -> np.ndarray:
    """Draw ``n`` i.i.d. values from ``spec``."""
    if n < 1:
        raise ParameterError(f"sample size must be >= 1, got {n}")
    f, p = spec.family, spec.params
    if f is Family.NORMAL:
        return rng.normal(p[0], p[1], n)
    if f is Family.LOGNORMAL:
        return rng.lognormal(p[0], p[1], n)
    if f is Family.EXPONENTIAL:
        return rng.exponential(1.0 / p[0], n)
    if f is Family.GAMMA:
        return rng.gamma(p[0], 1.0 / p[1], n)
    if f is Family.WEIBULL:
        return p[1] * rng.weibull(p[0], n)
    mu, sigma, nu = p
    if nu > T_GAUSSIAN_LIMIT:
        return rng.normal(mu, sigma, n)
    return mu + sigma * rng.standard_t(nu, n)


# -- maximum likelihood --------------------------------------------------------

def _check_data(family: Family, data) -> np.ndarray:
    x = np.asarray(data, dtype=float).ravel()
    if x.size < MIN_FIT_SAMPLES:
        raise DistributionError(
            f"{family.key} fit needs at least {MIN_FIT_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{family.key} fit got non-finite data")
    if family.positive_support and np.any(x <= 0):
        raise DomainError(
            f"{family.key} has positive support but data contains {int(np.sum(x <= 0))} "
            f"nonpositive values (min {x.min():g})")
    return x


def _moments(family, x):
    mu = float(np.mean(x))
    sigma = float(np.sqrt(np.mean((x - mu) ** 2)))
    if not sigma > 0 or sigma <= 1e-12 * max(1.0, abs(mu)):
        raise DegenerateDataError(
            f"{family.key} fit: zero variance (all values equal {mu:g})")
    return mu, sigma


def _fit_gamma(x):
    mean = float(np.mean(x))
    s = math.log(mean) - float(np.mean(np.log(x)))
    if s <= 1e-14:
        raise DegenerateDataError("gamma fit: zero variance")
    a = mean ** 2 / float(np.var(x))  # method of moments start
    for it in range(1, MLE_MAX_ITER + 1):
        g = math.log(a) - special.digamma(a) - s
        dg = 1.0 / a - special.polygamma(1, a)
        step = g / dg
        a_new = a - step
        if a_new <= 0:
            a_new = a / 2
        if abs(a_new - a) <= MLE_RTOL * a:
            a = a_new
            break
        a = a_new
    else:
        raise ConvergenceError("gamma shape did not converge", MLE_MAX_ITER)
    return DistributionSpec.gamma(a, a / mean)


def _fit_weibull(x):
    y = x / x.max()
    ly = np.log(y)
    mean_ly = float(np.mean(ly))
    sd = float(np.std(ly))
    if sd <= 1e-14:
        raise DegenerateDataError("weibull fit: zero variance")

    def h(k):
        w = y ** k
        sw = w.sum()
        m1 = float(np.dot(w, ly) / sw)
        m2 = float(np.dot(w, ly * ly) / sw)
        return m1 - 1.0 / k - mean_ly, (m2 - m1 * m1) + 1.0 / (k * k)

    k = math.pi / (math.sqrt(6.0) * sd)  # moments of ln(x)
    lo, hi = 0.0, math.inf
    for it in range(1, MLE_MAX_ITER + 1):
        val, der = h(k)
        # h is increasing in k; maintain a bracket for bisection fallback
        if val > 0:
            hi = min(hi, k)
        else:
            lo = max(lo, k)
        k_new = k - val / der
        if not (lo < k_new < hi):
            k_new = (lo + hi) / 2 if math.isfinite(hi) else 2 * k
        if abs(k_new - k) <= MLE_RTOL * k:
            k = k_new
            break
        k = k_new
    else:
        raise ConvergenceError("weibull shape did not converge", MLE_MAX_ITER)
    scale = x.max() * float(np.mean(y ** k)) ** (1.0 / k)
    return DistributionSpec.weibull(k, scale)


_NU_BOUNDS = (math.log(0.05), math.log(1e9))


def _fit_t(x):
    mu, sigma = _moments(Family.TLOCATIONSCALE, x)
    kurt = float(np.mean(((x - mu) / sigma) ** 4)) - 3.0
    nu = 4.0 + 6.0 / kurt if kurt > 0.01 else 1e6

    def nll_nu(log_nu, mu, sigma):
        return -DistributionSpec.t(mu, sigma, math.exp(log_nu)).loglik(x)

    prev = -math.inf
    for it in range(1, MLE_MAX_ITER + 1):
        z2 = ((x - mu) / sigma) ** 2
        w = (nu + 1.0) / (nu + z2)
        mu = float(np.dot(w, x) / w.sum())
        sigma = math.sqrt(float(np.dot(w, (x - mu) ** 2)) / x.size)
        res = minimize_scalar(nll_nu, bounds=_NU_BOUNDS, args=(mu, sigma),
                              method="bounded", options={"xatol": 1e-10})
        nu = math.exp(res.x)
        ll = -res.fun
        if abs(ll - prev) <= MLE_RTOL * max(1.0, abs(ll)):
            break
        prev = ll
    else:
        raise ConvergenceError("t location-scale EM did not converge", MLE_MAX_ITER)
    return _polish_t(x, DistributionSpec.t(mu, sigma, nu))


def _polish_t(x, start):
    """EM crawls near the optimum; finish with a joint quasi-Newton step."""
    mu0, s0, nu0 = start.params
    lo, hi = _NU_BOUNDS

    def nll(theta):
        mu, ls, lnu = theta
        if not lo <= lnu <= hi:
            return math.inf
        return -DistributionSpec.t(mu, math.exp(ls), math.exp(lnu)).loglik(x) / x.size

    res = minimize(nll, [mu0, math.log(s0), math.log(nu0)], method="BFGS",
                   options={"gtol": 1e-10, "maxiter": MLE_MAX_ITER})
    if res.success or res.fun < nll([mu0, math.log(s0), math.log(nu0)]):
        cand = DistributionSpec.t(res.x[0], math.exp(res.x[1]), math.exp(res.x[2]))
        if cand.loglik(x) > start.loglik(x):
            return cand
    return start


def fit_mle(family, data) -> DistributionSpec:
    """Maximum-likelihood fit of one family to ``data``."""
    family = Family.parse(family)
    x = _check_data(family, data)
    if family is Family.NORMAL:
        return DistributionSpec.normal(*_moments(family, x))
    if family is Family.LOGNORMAL:
        return DistributionSpec.lognormal(*_moments(family, np.log(x)))
    if family is Family.EXPONENTIAL:
        return DistributionSpec.exponential(1.0 / float(np.mean(x)))
    if family is Family.GAMMA:
        return _fit_gamma(x)
    if family is Family.WEIBULL:
        return _fit_weibull(x)
    return _fit_t(x)


def select_best_family(data, candidates=NUMBER_FAMILIES) -> DistributionSpec:
    """Fit every candidate and keep the one with the largest log-likelihood.

    Near-ties (relative difference below 1e-9) go to the family with fewer
    parameters, then to declaration order.
    """
    candidates = [Family.parse(c) for c in candidates]
    if not candidates:
        raise ParameterError("no candidate families given")
    fits, failures = [], {}
    for fam in candidates:
        try:
            spec = fit_mle(fam, data)
        except DistributionError as err:
            failures[fam] = err
            continue
        fits.append((spec.loglik(data), spec))
    if not fits:
        raise SelectionError(failures)
    best_ll = max(ll for ll, _ in fits)
    tol = 1e-9 * max(1.0, abs(best_ll))
    order = list(Family)
    tied = [s for ll, s in fits if best_ll - ll <= tol]
    return min(tied, key=lambda s: (s.family.n_params, order.index(s.family)))


def ks_statistic(data, spec: DistributionSpec) -> float:
    """One-sample Kolmogorov-Smirnov distance between data and ``spec``."""
    x = np.sort(np.asarray(data, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise DistributionError("KS statistic needs at least one sample")
    F = spec.cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_two_sample(a, b) -> float:
    """Two-sample KS distance, the sup gap between the empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise DistributionError("two-sample KS needs nonempty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5)
