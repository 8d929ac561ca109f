"""Cox regression with right censoring on the unit time interval.

The estimator for the regression coefficient is the partial-likelihood
maximizer (Newton with step-halving).  Piecewise-constant hazard sieves
enter only through diagnostics: sieve scores, cell-aggregated risk moments,
and exact log-likelihood ratios, all in closed form over the cells.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import (
    DegenerateInformationError,
    EmptyRiskError,
    InvalidHazardError,
    IterationError,
    NoInformationError,
    SeparationError,
    ShapeError,
    SupportTruncationError,
)
from .quadrature import cumulative_integral, integrate, simpson_nodes_weights

CSV_HEADER = "t,delta,w"

_THETA_DIVERGENCE = 50.0
_S0_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Covariate and censoring laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteLaw:
    """Covariate with finite support; all exponential moments exist."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.min() < 0 or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be a probability vector")
        if len(self.values) != len(self.probs):
            raise ValueError("values and probs must align")

    def draw(self, rng, n):
        return rng.choice(np.asarray(self.values, dtype=float), size=n,
                          p=np.asarray(self.probs, dtype=float))

    def expectation(self, fn):
        """E fn(W); fn maps a support array to an array of the same tail shape."""
        vals = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        return np.tensordot(probs, fn(vals), axes=(0, 0))


@dataclass(frozen=True)
class GaussianLaw:
    mean: float = 0.0
    sd: float = 1.0
    nodes: int = 128

    def draw(self, rng, n):
        return self.mean + self.sd * rng.standard_normal(n)

    def expectation(self, fn):
        x, w = np.polynomial.hermite_e.hermegauss(self.nodes)
        pts = self.mean + self.sd * x
        return np.tensordot(w / math.sqrt(2 * math.pi), fn(pts), axes=(0, 0))


@dataclass(frozen=True)
class UniformCensor:
    """C uniform on (0, upper), independent of lifetime given W."""

    upper: float

    def draw(self, rng, n):
        return rng.uniform(0.0, self.upper, size=n)

    def survival(self, t):
        return np.clip(1.0 - np.asarray(t, dtype=float) / self.upper, 0.0, 1.0)

    @property
    def breakpoints(self):
        return (self.upper,) if self.upper < 1.0 else ()


@dataclass(frozen=True)
class ExponentialCensor:
    rate: float

    def draw(self, rng, n):
        return rng.exponential(1.0 / self.rate, size=n)

    def survival(self, t):
        return np.exp(-self.rate * np.asarray(t, dtype=float))

    @property
    def breakpoints(self):
        return ()


@dataclass(frozen=True)
class NoCensor:
    def draw(self, rng, n):
        return np.full(n, np.inf)

    def survival(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    @property
    def breakpoints(self):
        return ()


@dataclass(frozen=True)
class CoxDgpSpec:
    """True law: hazard eta0(t) * exp(theta0 * w), censored at C and at 1.

    eta0 must be positive and continuously differentiable on [0, 1]; the
    covariate law must have finite exponential moments (finite support or
    Gaussian).  Observation stops at the horizon, which is fixed to 1.
    """

    theta0: float
    eta0: Callable[[np.ndarray], np.ndarray]
    w_law: object
    censor_law: object = field(default_factory=NoCensor)
    horizon: float = 1.0

    def __post_init__(self):
        if self.horizon != 1.0:
            raise ValueError("horizon is fixed to 1.0 (sieve domain)")
        probe = np.asarray(self.eta0(np.linspace(0.0, 1.0, 257)), dtype=float)
        if probe.min() <= 0:
            raise InvalidHazardError("eta0 must be positive on [0, 1]")


class CoxSample(NamedTuple):
    t: float
    delta: int
    w: float


@dataclass(frozen=True)
class CoxData:
    t: np.ndarray
    delta: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        if not (self.t.shape == self.delta.shape == self.w.shape):
            raise ShapeError("t, delta, w must have identical shapes")

    @property
    def n(self):
        return self.t.shape[0]

    def row(self, i):
        return CoxSample(float(self.t[i]), int(self.delta[i]), float(self.w[i]))

    def to_csv(self, path):
        arr = np.column_stack([self.t, self.delta.astype(float), self.w])
        np.savetxt(path, arr, delimiter=",", header=CSV_HEADER, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"expected header {CSV_HEADER!r}, got {header!r}")
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if arr.shape[1] != 3:
            raise ValueError("expected three columns t,delta,w")
        return cls(t=arr[:, 0], delta=arr[:, 1].astype(np.int64), w=arr[:, 2])


@dataclass(frozen=True)
class CoxFit:
    theta_hat: float
    se: float
    J_hat: float
    iterations: int
    loglik: float
    trace: tuple

    def to_json_dict(self):
        return {
            "theta_hat": self.theta_hat,
            "se": self.se,
            "J_hat": self.J_hat,
            "iterations": self.iterations,
            "loglik": self.loglik,
        }


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def default_k_contiguity(n):
    """Sieve dimension making the sieve law contiguous: k = ceil(n^(3/4))."""
    return math.ceil(n ** 0.75)


def simulate_cox(dgp, n, seed, resolution=4096):
    """Inverse-transform lifetimes from the cumulative hazard, then censor."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    w = dgp.w_law.draw(rng, n)
    expo = rng.exponential(size=n)
    c = dgp.censor_law.draw(rng, n)

    grid, lam0 = cumulative_integral(
        lambda t: np.asarray(dgp.eta0(t), dtype=float), 0.0, 1.0, resolution
    )
    target = expo * np.exp(-dgp.theta0 * w)
    beyond = target >= lam0[-1]
    tprime = np.where(beyond, np.inf, np.interp(target, lam0, grid))

    t = np.minimum(np.minimum(tprime, c), 1.0)
    delta = ((tprime <= c) & (tprime <= 1.0)).astype(np.int64)
    # guard against zero observation times from censoring draws at 0
    t = np.maximum(t, np.finfo(float).tiny)
    return CoxData(t=t, delta=delta, w=w)


# ---------------------------------------------------------------------------
# Risk-set machinery and the partial likelihood
# ---------------------------------------------------------------------------

def s_n_k(t, theta, data, k):
    """At-risk moment n^{-1} sum Y_i(t) W_i^k exp(theta W_i)."""
    if k not in (0, 1, 2):
        raise ValueError("k must be 0, 1, or 2")
    at_risk = data.t >= t
    return float(np.mean(at_risk * data.w**k * np.exp(theta * data.w)))


@dataclass(frozen=True)
class RiskSetCurves:
    event_times: np.ndarray
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray


class _SortedCox(NamedTuple):
    ts: np.ndarray
    ws: np.ndarray
    event_pos: np.ndarray
    risk_start: np.ndarray
    w_event_sum: float


def _sort_for_partial(data):
    order = np.argsort(data.t, kind="stable")
    ts = data.t[order]
    ws = data.w[order]
    ds = data.delta[order]
    event_pos = np.flatnonzero(ds == 1)
    risk_start = np.searchsorted(ts, ts[event_pos], side="left")
    return _SortedCox(ts, ws, event_pos, risk_start, float(ws[event_pos].sum()))


def _suffix_sums(arr):
    return np.cumsum(arr[::-1])[::-1]

def _partial_stats(sc, theta):
    """(loglik, score, information) of the log partial likelihood at theta."""
    arg = theta * sc.ws
    shift = float(np.max(arg)) if arg.size else 0.0
    e0 = np.exp(arg - shift)
    s0 = _suffix_sums(e0)[sc.risk_start]
    s1 = _suffix_sums(sc.ws * e0)[sc.risk_start]
    s2 = _suffix_sums(sc.ws**2 * e0)[sc.risk_start]
    loglik = theta * sc.w_event_sum - float(np.sum(np.log(s0) + shift))
    ratio = s1 / s0
    score = sc.w_event_sum - float(np.sum(ratio))
    info = float(np.sum(s2 / s0 - ratio**2))
    return loglik, score, info


def risk_set_curves(data, theta):
    """S_n^(k) at the (sorted) observed event times for a given theta."""
    sc = _sort_for_partial(data)
    n = data.n
    e0 = np.exp(theta * sc.ws)
    s0 = _suffix_sums(e0)[sc.risk_start] / n
    s1 = _suffix_sums(sc.ws * e0)[sc.risk_start] / n
    s2 = _suffix_sums(sc.ws**2 * e0)[sc.risk_start] / n
    return RiskSetCurves(event_times=sc.ts[sc.event_pos], s0=s0, s1=s1, s2=s2)


def cox_partial_loglik(data, theta):
    """Log partial likelihood (Breslow ties) at scalar or array theta."""
    sc = _sort_for_partial(data)
    thetas = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.array([_partial_stats(sc, th)[0] for th in thetas])
    return float(out[0]) if np.isscalar(theta) or np.ndim(theta) == 0 else out


def fit_cox_partial(data, max_iter=50, max_halvings=30, score_tol=1e-10,
                    theta_init=0.0):
    """Newton maximization of the partial likelihood with step-halving.

    Convergence when |score| < score_tol * n.  Diverging iterates signal a
    monotone likelihood (separation); an exhausted budget raises with the
    full iteration trace attached.
    """
    if not np.any(data.delta == 1):
        raise NoInformationError("no events observed")
    if np.ptp(data.w) == 0.0:
        raise NoInformationError("covariate constant; partial likelihood flat")
    sc = _sort_for_partial(data)
    n = data.n

    theta = float(theta_init)
    loglik, score, info = _partial_stats(sc, theta)
    trace = [(theta, score)]
    for it in range(1, max_iter + 1):
        if info <= 0:
            if it == 1:
                raise NoInformationError("non-positive curvature at the start")
            # curvature underflowed after the iterates walked off: monotone
            # likelihood in float arithmetic
            raise SeparationError(
                f"curvature vanished at theta = {theta:.3f}; monotone partial likelihood"
            )
        step = score / info
        # a monotone likelihood keeps |step| of order one while the score
        # decays, so require both to vanish before declaring convergence
        if abs(score) < score_tol * n and abs(step) < 1e-8 * max(1.0, abs(theta)):
            return CoxFit(theta_hat=theta, se=1.0 / math.sqrt(info), J_hat=info / n,
                          iterations=it - 1, loglik=loglik, trace=tuple(trace))
        accepted = False
        for _ in range(max_halvings + 1):
            cand = theta + step
            if abs(cand) > _THETA_DIVERGENCE:
                raise SeparationError(
                    f"iterate |theta| > {_THETA_DIVERGENCE}; monotone partial likelihood"
                )
            cand_stats = _partial_stats(sc, cand)
            if cand_stats[0] >= loglik - 1e-12 * max(1.0, abs(loglik)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            raise IterationError(trace, "step-halving failed to improve the likelihood")
        theta = cand
        loglik, score, info = cand_stats
        trace.append((theta, score))
    raise IterationError(trace)


def a_n_cox(data, theta0, h_grid):
    """Partial-likelihood ratio process h -> logPL(theta0 + h/sqrt(n)) - logPL(theta0)."""
    sc = _sort_for_partial(data)
    base = _partial_stats(sc, theta0)[0]
    rn = math.sqrt(data.n)
    return np.array([_partial_stats(sc, theta0 + h / rn)[0] - base for h in h_grid])


# ---------------------------------------------------------------------------
# Piecewise-constant sieve: closed-form cell arithmetic
# ---------------------------------------------------------------------------

def _require_cox_cells(spec):
    if spec.family != "piecewise-constant" or spec.scaling != "cox-scale":
        raise ValueError("sieve operations need a piecewise-constant cox-scale basis")


def cell_hazards(spec, gamma0):
    """Per-cell hazard values k * gamma0_j of the sieve hazard function."""
    _require_cox_cells(spec)
    gamma0 = np.asarray(gamma0, dtype=float)
    if gamma0.shape != (spec.k,):
        raise ShapeError("gamma0 must have length k")
    c = spec.k * gamma0
    if np.min(c) <= 0:
        raise InvalidHazardError("sieve hazard must be positive on every cell")
    return c


def _cell_index(k, t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return t, np.minimum((t * k).astype(np.int64), k - 1)


def _cells_and_overlaps(spec, t):
    """Cell index of each t and the overlap lengths of [0, t] with every cell."""
    k = spec.k
    t, idx = _cell_index(k, t)
    left = np.arange(k) / k
    overlaps = np.clip(t[:, None] - left[None, :], 0.0, 1.0 / k)
    return idx, overlaps


def _sieve_cum_hazard(c, t):
    """Cumulative integral of the cell-hazard step function at times t, O(n)."""
    k = c.shape[0]
    t, idx = _cell_index(k, t)
    cum_edges = np.concatenate([[0.0], np.cumsum(c)]) / k
    return cum_edges[idx] + c[idx] * (t - idx / k)


def sieve_scores_cox(sample, spec, gamma0, theta0):
    """Sieve-model scores: (theta score, per-cell hazard-coefficient scores).

    Both are counting-process integrals with piecewise-constant integrands,
    evaluated in closed form over the cells.
    """
    c = cell_hazards(spec, gamma0)
    single = isinstance(sample, CoxSample)
    t = np.atleast_1d(np.asarray(sample.t, dtype=float))
    delta = np.atleast_1d(np.asarray(sample.delta, dtype=float))
    w = np.atleast_1d(np.asarray(sample.w, dtype=float))
    k = spec.k

    idx, overlaps = _cells_and_overlaps(spec, t)
    lam_m = overlaps @ c
    expw = np.exp(theta0 * w)
    ldot = w * (delta - expw * lam_m)

    # the compensator of N carries the hazard, which cancels the 1/(cell
    # hazard) of the integrand: the drift of the j-th score is k * overlap_j
    vdot = -expw[:, None] * k * overlaps
    rows = np.arange(t.shape[0])
    vdot[rows, idx] += delta * k / c[idx]
    if single:
        return float(ldot[0]), vdot[0]
    return ldot, vdot


def sieve_efficient_score_cox(sample, spec, gamma0, theta0, interval_ratios):
    """Efficient score under the sieve model, given per-cell risk ratios.

    ``interval_ratios[j]`` is the cell-aggregated first-over-zeroth risk
    moment; analytic under the generating law or plugged in from the sample
    at-risk sums.  Callers record which.
    """
    c = cell_hazards(spec, gamma0)
    ratios = np.asarray(interval_ratios, dtype=float)
    if ratios.shape != (spec.k,):
        raise ShapeError("interval_ratios must have length k")
    single = isinstance(sample, CoxSample)
    t = np.atleast_1d(np.asarray(sample.t, dtype=float))
    delta = np.atleast_1d(np.asarray(sample.delta, dtype=float))
    w = np.atleast_1d(np.asarray(sample.w, dtype=float))

    k = spec.k
    t, idx = _cell_index(k, t)
    touched_max = int(np.max(np.where(t > idx / k, idx, idx - 1), initial=-1))
    if np.any(delta == 1):
        touched_max = max(touched_max, int(np.max(idx[delta == 1])))
    if touched_max >= 0 and not np.all(np.isfinite(ratios[: touched_max + 1])):
        raise EmptyRiskError("cell with zero at-risk mass intersects the data window")

    # drift = exp(theta w) * (w * Lambda_m(T) - int_0^T ratio(s) d Lambda_m(s)),
    # with the second cumulative evaluated the same way as the first
    lam_m = _sieve_cum_hazard(c, t)
    safe_ratios = np.where(np.isfinite(ratios), ratios, 0.0)
    psi = _sieve_cum_hazard(c * safe_ratios, t)
    jump = delta * (w - safe_ratios[idx])
    drift = np.exp(theta0 * w) * (w * lam_m - psi)
    out = jump - drift
    return float(out[0]) if single else out


class LoglrCox(NamedTuple):
    total: float
    linear_term: float
    quadratic_term: float
    remainder: float


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def _gl_segment_integrals(fn, lo, hi):
    """Gauss-Legendre integral of fn over each [lo_i, hi_i], vectorized."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = fn(pts.ravel()).reshape(pts.shape)
    return half * (vals @ _GL_WEIGHTS)


def baseline_cum_hazard(dgp, spec, t):
    """Cumulative integral of eta0 at times t, exact per sieve cell."""
    k = spec.k
    edges = np.arange(k + 1) / k
    eta = lambda x: np.asarray(dgp.eta0(x), dtype=float)
    cell_ints = _gl_segment_integrals(eta, edges[:-1], edges[1:])
    cum_edges = np.concatenate([[0.0], np.cumsum(cell_ints)])
    t, idx = _cell_index(k, t)
    within = _gl_segment_integrals(eta, idx / k, t)
    return cum_edges[idx] + within


def loglr_cox(data, spec, gamma0, eta0, theta0):
    """Exact per-sample log-likelihood ratio of the sieve law to the true law.

    Returns the total together with its decomposition into the martingale
    linear term, the quadratic term, and the Taylor remainder; the identity
    total = linear - quadratic + remainder holds to rounding.
    """
    c = cell_hazards(spec, gamma0)
    dgp_like = type("E", (), {"eta0": staticmethod(eta0)})
    probe = np.asarray(eta0(np.linspace(0.0, 1.0, 257)), dtype=float)
    if probe.min() <= 0:
        raise InvalidHazardError("eta0 must be positive on [0, 1]")
    _, idx = _cell_index(spec.k, data.t)
    lam_m = _sieve_cum_hazard(c, data.t)
    lam_0 = baseline_cum_hazard(dgp_like, spec, data.t)
    eta_at_t = np.asarray(eta0(data.t), dtype=float)
    if np.min(eta_at_t) <= 0:
        raise InvalidHazardError("eta0 must be positive on the data window")

    expw = np.exp(theta0 * data.w)
    ev = data.delta == 1
    a = (c[idx[ev]] - eta_at_t[ev]) / eta_at_t[ev]

    drift = float(np.sum(expw * (lam_m - lam_0)))
    total = float(np.sum(np.log1p(a))) - drift
    linear = float(np.sum(a)) - drift
    quadratic = 0.5 * float(np.sum(a**2))
    remainder = float(np.sum(np.log1p(a) - a + 0.5 * a**2))
    return LoglrCox(total=total, linear_term=linear,
                    quadratic_term=quadratic, remainder=remainder)


# ---------------------------------------------------------------------------
# Population quantities by quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PopulationCurves:
    """Population at-risk moments of the true law on a uniform grid."""

    grid: np.ndarray
    lam0: np.ndarray
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    rho: np.ndarray          # s1 / s0
    rho_eta_cum: np.ndarray  # cumulative integral of rho * eta0
    v: np.ndarray            # s2/s0 - (s1/s0)^2


def _s_moments_at(dgp, lam_values, t):
    """s^(k)(t) for k = 0,1,2 given the cumulative hazard at those t."""
    surv_c = dgp.censor_law.survival(t)

    def inner(wvals):
        ew = np.exp(dgp.theta0 * wvals)
        base = np.exp(-np.multiply.outer(ew, lam_values)) * ew[:, None]
        return np.stack([base, wvals[:, None] * base, wvals[:, None] ** 2 * base], axis=1)

    mom = dgp.w_law.expectation(inner)
    return mom[0] * surv_c, mom[1] * surv_c, mom[2] * surv_c


def population_curves(dgp, resolution=4096):
    grid, lam0 = cumulative_integral(
        lambda t: np.asarray(dgp.eta0(t), dtype=float), 0.0, 1.0, resolution
    )
    s0, s1, s2 = _s_moments_at(dgp, lam0, grid)
    if np.min(s0) < _S0_FLOOR:
        raise SupportTruncationError(
            "at-risk mass vanishes before the horizon; shrink the horizon"
        )
    rho = s1 / s0
    eta_vals = np.asarray(dgp.eta0(grid), dtype=float)
    integrand = rho * eta_vals
    h = grid[1] - grid[0]
    # trapezoid cumulative is enough: consumers interpolate at sample times
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (integrand[1:] + integrand[:-1]))])
    v = s2 / s0 - rho**2
    return PopulationCurves(grid=grid, lam0=lam0, s0=s0, s1=s1, s2=s2,
                            rho=rho, rho_eta_cum=cum, v=v)


class CoxInfo(NamedTuple):
    J: float
    grid: np.ndarray
    v: np.ndarray
    curves: PopulationCurves


def efficient_info_cox(dgp, quadrature_panels=4096):
    """Efficient information J = integral of v * s0 * eta0 over [0, 1]."""
    curves = population_curves(dgp, resolution=quadrature_panels)
    eta_vals = np.asarray(dgp.eta0(curves.grid), dtype=float)
    _, weights = simpson_nodes_weights(0.0, 1.0, quadrature_panels)
    j = float(weights @ (curves.v * curves.s0 * eta_vals))
    if j < 1e-12:
        raise DegenerateInformationError("efficient information is numerically zero")
    return CoxInfo(J=j, grid=curves.grid, v=curves.v, curves=curves)


def efficient_score_cox_limit(data, dgp, curves=None):
    """Semiparametric efficient score at the data, from population curves."""
    if curves is None:
        curves = population_curves(dgp)
    rho_t = np.interp(data.t, curves.grid, curves.rho)
    lam_t = np.interp(data.t, curves.grid, curves.lam0)
    cum_t = np.interp(data.t, curves.grid, curves.rho_eta_cum)
    expw = np.exp(dgp.theta0 * data.w)
    return data.delta * (data.w - rho_t) - expw * (data.w * lam_t - cum_t)


# --- sieve-law (cell) population moments -----------------------------------

def sieve_cum_hazard_fn(spec, gamma0):
    """Vectorized cumulative hazard of the piecewise-constant sieve."""
    c = cell_hazards(spec, gamma0)
    return lambda t: _sieve_cum_hazard(c, t)


def sieve_cell_moments(dgp, spec, gamma0, tol=1e-10):
    """Cell integrals of the sieve-law at-risk moments s_m^(k), k = 0,1,2.

    Returns a (3, k) array; row k holds the integral of s_m^(k) over each
    cell.  The sieve law shares theta0, the covariate law and the censoring
    law with ``dgp`` and replaces the baseline hazard.
    """
    c = cell_hazards(spec, gamma0)
    k = spec.k
    edges = np.arange(k + 1) / k
    cum_edges = np.concatenate([[0.0], np.cumsum(c) / k])

    out = np.zeros((3, k))
    extra = list(getattr(dgp.censor_law, "breakpoints", ()))
    for j in range(k):
        def s_row(t, j=j):
            t = np.asarray(t, dtype=float)
            lam = cum_edges[j] + c[j] * (t - edges[j])
            return np.stack(_s_moments_at(dgp, lam, t), axis=0)

        brk = [b for b in extra if edges[j] < b < edges[j + 1]]
        for order in range(3):
            out[order, j] = integrate(
                lambda t, o=order, jj=j: s_row(t, jj)[o], edges[j], edges[j + 1],
                tol=tol, breakpoints=brk,
            )
    return out


def interval_ratios_population(dgp, spec, gamma0):
    """Per-cell s_m^(1)-over-s_m^(0) aggregates under the sieve law."""
    mom = sieve_cell_moments(dgp, spec, gamma0)
    if np.min(mom[0]) < _S0_FLOOR:
        raise EmptyRiskError("cell with zero at-risk mass")
    return mom[1] / mom[0]


def interval_ratios_sample(data, spec, theta0):
    """Plug-in per-cell ratios from integrated sample at-risk sums."""
    _, overlaps = _cells_and_overlaps(spec, data.t)
    expw = np.exp(theta0 * data.w)
    i0 = overlaps.T @ expw / data.n
    i1 = overlaps.T @ (data.w * expw) / data.n
    ratios = np.full(spec.k, np.nan)
    nz = i0 > 0
    ratios[nz] = i1[nz] / i0[nz]
    return ratios


def efficient_info_cox_sieve(dgp, spec, gamma0):
    """Variance of the sieve efficient score under the sieve law.

    Sum over cells of hazard * (second-moment deficit), the cell analogue of
    the information integral.
    """
    c = cell_hazards(spec, gamma0)
    mom = sieve_cell_moments(dgp, spec, gamma0)
    if np.min(mom[0]) < _S0_FLOOR:
        raise EmptyRiskError("cell with zero at-risk mass")
    v_cells = mom[2] / mom[0] - (mom[1] / mom[0]) ** 2
    j_m = float(np.sum(c * v_cells * mom[0]))
    if j_m < 1e-12:
        raise DegenerateInformationError("sieve efficient information is zero")
    return j_m
