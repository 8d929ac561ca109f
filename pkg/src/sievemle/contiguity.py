"""Likelihood-ratio and efficient-score approximation diagnostics.

Everything here quantifies, at a given sample size and sieve level, how
close the sieve law sits to the generating law: exact log-likelihood
ratios, their local-asymptotic-normality residuals, squared Hellinger
distance, the L2 gap between sieve and limiting efficient scores, and the
convergence of the efficient information along a sieve-dimension grid.
"""

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import cox as _cox
from . import plm as _plm
from .basis import (
    BasisSpec,
    _cholesky_with_pivot_report,
    coefficients_for_target,
    gram_and_orthonormalize,
    sup_norm,
)
from .errors import SupportMismatchError
from .quadrature import integrate

_WEIGHT_CLIP = 1e6


# ---------------------------------------------------------------------------
# Exact log-likelihood ratios and LAN residuals
# ---------------------------------------------------------------------------

class LoglrPlm(NamedTuple):
    total: float
    linear_term: float
    quadratic_term: float


def loglr_plm(data, basis, gamma0, dgp):
    """Exact Gaussian log-likelihood ratio of the sieve law to the true law.

    Diagnostics mode: the generating spec is known, so the true residuals
    are recoverable sample by sample.
    """
    eta_m = basis.evaluate(data.z) @ np.asarray(gamma0, dtype=float)
    eta_0 = np.asarray(dgp.eta0(data.z), dtype=float)
    eps = data.y - eta_0 - dgp.theta0 * data.w
    n = data.n
    h_vals = math.sqrt(n) / dgp.sigma * (eta_m - eta_0)
    linear = float(np.sum(h_vals * (eps / dgp.sigma))) / math.sqrt(n)
    quadratic = float(np.sum(h_vals**2)) / (2 * n)
    return LoglrPlm(total=linear - quadratic, linear_term=linear,
                    quadratic_term=quadratic)


def lan_residual(loglr_total, g_values, g_second_moment):
    """Difference between a log-likelihood ratio and its LAN form in g."""
    g_values = np.asarray(g_values, dtype=float)
    n = g_values.shape[0]
    return float(loglr_total - (g_values.sum() / math.sqrt(n) - 0.5 * g_second_moment))


def plm_approximation_error_sq(basis, gamma0, dgp):
    """Squared L2 distance between the sieve function and the true nuisance."""
    fn = basis.function(np.asarray(gamma0, dtype=float))
    return integrate(
        lambda z: (fn(z) - np.asarray(dgp.eta0(z), dtype=float)) ** 2,
        0.0, 1.0, breakpoints=basis.spec.breakpoints,
    )


def plm_lan_surrogate(data, basis, gamma0, dgp, err_sq=None):
    """Finite-n LAN ingredients for the regression model.

    Returns (g values at the samples, population second moment of g) for
    the score surrogate g = h(Z) * eps / sigma built from the sieve
    approximation error h.  ``err_sq`` caches the population approximation
    error across replications.
    """
    gamma0 = np.asarray(gamma0, dtype=float)
    eta_m = basis.evaluate(data.z) @ gamma0
    eta_0 = np.asarray(dgp.eta0(data.z), dtype=float)
    eps = data.y - eta_0 - dgp.theta0 * data.w
    n = data.n
    h_vals = math.sqrt(n) / dgp.sigma * (eta_m - eta_0)
    g_values = h_vals * eps / dgp.sigma
    if err_sq is None:
        err_sq = plm_approximation_error_sq(basis, gamma0, dgp)
    g_second_moment = n / dgp.sigma**2 * err_sq
    return g_values, g_second_moment


# ---------------------------------------------------------------------------
# Sieve laws as explicit objects: sampler plus log density ratio
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SieveLaw:
    """The sieve distribution: usable as a generating law and as a density ratio."""

    dgp_m: object
    log_density_ratio: Callable

    def simulate(self, n, seed):
        if isinstance(self.dgp_m, _plm.PlmDgpSpec):
            return _plm.simulate_plm(self.dgp_m, n, seed)
        return _cox.simulate_cox(self.dgp_m, n, seed)


def plm_sieve_law(dgp, basis, gamma0):
    gamma0 = np.asarray(gamma0, dtype=float)
    eta_m_fn = basis.function(gamma0)
    dgp_m = dataclasses.replace(dgp, eta0=eta_m_fn)

    def log_ratio(data):
        eta_m = basis.evaluate(data.z) @ gamma0
        eta_0 = np.asarray(dgp.eta0(data.z), dtype=float)
        rm = data.y - eta_m - dgp.theta0 * data.w
        r0 = data.y - eta_0 - dgp.theta0 * data.w
        return (r0**2 - rm**2) / (2 * dgp.sigma**2)

    return SieveLaw(dgp_m=dgp_m, log_density_ratio=log_ratio)


def cox_sieve_law(dgp, spec, gamma0):
    c = _cox.cell_hazards(spec, gamma0)

    def eta_m_fn(t):
        _, idx = _cox._cell_index(spec.k, t)
        return c[idx]

    dgp_m = dataclasses.replace(dgp, eta0=eta_m_fn)

    def log_ratio(data):
        _, idx = _cox._cell_index(spec.k, data.t)
        lam_m = _cox._sieve_cum_hazard(c, data.t)
        lam_0 = _cox.baseline_cum_hazard(dgp, spec, data.t)
        eta_0 = np.asarray(dgp.eta0(data.t), dtype=float)
        return (
            data.delta * (np.log(c[idx]) - np.log(eta_0))
            - np.exp(dgp.theta0 * data.w) * (lam_m - lam_0)
        )

    return SieveLaw(dgp_m=dgp_m, log_density_ratio=log_ratio)


def _simulate_p0(dgp, n, seed):
    if isinstance(dgp, _plm.PlmDgpSpec):
        return _plm.simulate_plm(dgp, n, seed)
    return _cox.simulate_cox(dgp, n, seed)


class McEstimate(NamedTuple):
    estimate: float
    stderr: float


def hellinger_sq(dgp, model_pm, mc_draws, seed):
    """Monte Carlo squared Hellinger distance between sieve and true laws.

    Estimates the expectation under the true law of (sqrt(ratio) - 1)^2,
    which equals the integral of the squared root-density difference.
    """
    draws = _simulate_p0(dgp, mc_draws, seed)
    log_ratio = model_pm.log_density_ratio(draws)
    if not np.all(np.isfinite(log_ratio)):
        raise SupportMismatchError("density ratio non-finite on sampled support")
    vals = (np.exp(0.5 * log_ratio) - 1.0) ** 2
    return McEstimate(float(vals.mean()), float(vals.std() / math.sqrt(mc_draws)))


class ScoreApproxResult(NamedTuple):
    estimate: float
    stderr: float
    clipped: int


def score_approx_err(effscore_m, effscore_lim, dgp, model_pm, mc_draws, seed):
    """L2 gap between root-density-weighted sieve and limiting scores.

    The squared gap expands into a second moment under the sieve law (own
    draws), a second moment under the true law, and a cross term estimated
    by importance sampling from the true law with sqrt-density-ratio
    weights, clipped at 1e6 with the clip count reported.  The two draw
    sets share the seed (common random numbers), so the estimate is exactly
    zero when the laws and scores coincide.
    """
    draws0 = _simulate_p0(dgp, mc_draws, seed)
    draws_m = model_pm.simulate(mc_draws, seed)

    sm_under_m = np.asarray(effscore_m(draws_m), dtype=float)
    term_m = sm_under_m**2

    s_lim = np.asarray(effscore_lim(draws0), dtype=float)
    s_m_at0 = np.asarray(effscore_m(draws0), dtype=float)
    log_ratio = model_pm.log_density_ratio(draws0)
    if not np.all(np.isfinite(log_ratio)):
        raise SupportMismatchError("density ratio non-finite on sampled support")
    weights = np.exp(0.5 * log_ratio)
    clipped = int(np.sum(weights > _WEIGHT_CLIP))
    weights = np.minimum(weights, _WEIGHT_CLIP)

    under_0 = s_lim**2 - 2.0 * s_m_at0 * s_lim * weights
    est = float(term_m.mean() + under_0.mean())
    stderr = math.sqrt((term_m.var() + under_0.var()) / mc_draws)
    return ScoreApproxResult(est, stderr, clipped)


# ---------------------------------------------------------------------------
# Information convergence, rate conditions, projection convergence
# ---------------------------------------------------------------------------

def jm_convergence(dgp, model, m_grid, family="piecewise-constant", degree=0):
    """Sieve efficient information along a dimension grid, with its limit."""
    j_values = []
    if model == "plm":
        for k in m_grid:
            spec = BasisSpec(family, int(k), degree=degree,
                             scaling="probability-orthonormal")
            j_values.append(_plm.efficient_info_plm(dgp, spec))
        return np.asarray(j_values), _plm.efficient_info_plm(dgp)
    if model == "cox":
        for k in m_grid:
            spec = BasisSpec("piecewise-constant", int(k), scaling="cox-scale")
            gamma0 = coefficients_for_target(spec, dgp.eta0, "cox-left-endpoint")
            j_values.append(_cox.efficient_info_cox_sieve(dgp, spec, gamma0))
        return np.asarray(j_values), _cox.efficient_info_cox(dgp).J
    raise ValueError(f"unknown model {model!r}")


class RateEntry(NamedTuple):
    magnitude: float
    passed: bool


def rate_check(n, k_m, s, xi_m, a_n, threshold=0.5):
    """Advisory magnitudes of the rate conditions at a concrete (n, k).

    Asymptotic o(1) requirements reported as finite-n numbers against a
    user threshold; nothing here is a proof.
    """
    if min(n, k_m, s) <= 0 or xi_m <= 0 or a_n < 0:
        raise ValueError("rate inputs must be positive (a_n nonnegative)")
    rn = math.sqrt(n)
    mags = {
        "k^2/sqrt(n)": k_m**2 / rn,
        "xi*k/sqrt(n)": xi_m * k_m / rn,
        "a*sqrt(k)*xi": a_n * math.sqrt(k_m) * xi_m,
        "sqrt(n)*k^-s": rn * k_m ** (-s),
        "sqrt(n)/k": rn / k_m,
    }
    return {name: RateEntry(mag, mag <= threshold) for name, mag in mags.items()}


class ProjectionTestResult(NamedTuple):
    deviations: np.ndarray
    final_deviation: float


def random_nested_spans(dim, steps, seed, start_dim=1):
    """Nested random spans growing to the full ambient dimension."""
    rng = np.random.default_rng(seed)
    frame = rng.standard_normal((dim, dim))
    dims = np.minimum(start_dim + np.arange(steps), dim)
    return [frame[:, : d].copy() for d in dims]


def projection_convergence_test(dim, target, nested_spans=None, seed=0,
                                steps=12, perturbation=1e-2):
    """Finite-dimensional projection stability along nested spans.

    Projects perturbed targets h_i = h + d_i (with geometrically decaying
    random d_i) onto growing spans and measures the distance to the
    projection of h onto the final span.  Projections are computed by
    normal equations.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (dim,):
        raise ValueError("target must have length dim")
    if nested_spans is None:
        nested_spans = random_nested_spans(dim, steps, seed)
    rng = np.random.default_rng(seed + 1)

    def project(vec, span):
        gram = span.T @ span
        chol = _cholesky_with_pivot_report(gram)
        coef = np.linalg.solve(chol.T, np.linalg.solve(chol, span.T @ vec))
        return span @ coef

    limit = project(target, nested_spans[-1])
    deviations = []
    for i, span in enumerate(nested_spans):
        direction = rng.standard_normal(dim)
        direction /= np.linalg.norm(direction)
        h_i = target + perturbation * 4.0 ** (-(i + 1)) * direction
        deviations.append(float(np.linalg.norm(project(h_i, span) - limit)))
    deviations = np.asarray(deviations)
    return ProjectionTestResult(deviations, float(deviations[-1]))


# ---------------------------------------------------------------------------
# Replication-level diagnostics over an m-grid
# ---------------------------------------------------------------------------

def mix_seed(master_seed, index):
    """SplitMix64 of (master_seed, index): deterministic, order-free."""
    z = (master_seed + 0x9E3779B97F4A7C15 * (index + 1)) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


@dataclass(frozen=True)
class DiagnosticsReport:
    model: str
    n: int
    reps: int
    m_grid: np.ndarray
    loglr_mean: np.ndarray
    loglr_var: np.ndarray
    lan_residual_quantiles: np.ndarray  # median |residual| per sieve level
    hellinger_sq: np.ndarray
    hellinger_se: np.ndarray
    score_approx_err: np.ndarray
    score_approx_se: np.ndarray
    score_clip_counts: np.ndarray
    J_m_values: np.ndarray
    J_limit: float
    rate_flags: dict

    def to_json_dict(self):
        return {
            "model": self.model,
            "n": self.n,
            "reps": self.reps,
            "m_grid": [int(k) for k in self.m_grid],
            "loglr_mean": list(map(float, self.loglr_mean)),
            "loglr_var": list(map(float, self.loglr_var)),
            "lan_residual_quantiles": list(map(float, self.lan_residual_quantiles)),
            "hellinger_sq": list(map(float, self.hellinger_sq)),
            "hellinger_se": list(map(float, self.hellinger_se)),
            "score_approx_err": list(map(float, self.score_approx_err)),
            "score_approx_se": list(map(float, self.score_approx_se)),
            "score_clip_counts": [int(c) for c in self.score_clip_counts],
            "J_m_values": list(map(float, self.J_m_values)),
            "J_limit": float(self.J_limit),
            "rate_flags": {
                name: {"magnitude": float(e.magnitude), "pass": bool(e.passed)}
                for name, e in self.rate_flags.items()
            },
        }

    def csv_rows(self):
        rows = []
        for i, k in enumerate(self.m_grid):
            rows.append((
                i + 1, int(k), float(self.loglr_mean[i]), float(self.loglr_var[i]),
                float(self.hellinger_sq[i]), float(self.score_approx_err[i]),
                float(self.J_m_values[i]),
            ))
        return rows


CSV_DIAG_HEADER = "m,k_m,loglr_mean,loglr_var,hellinger_sq,score_err,J_m"


def _plm_level(dgp, k, degree, family):
    spec = BasisSpec(family, k, degree=degree, scaling="probability-orthonormal")
    bm = gram_and_orthonormalize(spec)
    gamma0 = coefficients_for_target(spec, dgp.eta0, "l2-projection")
    return spec, bm, gamma0


_LEVEL_CTX = None


def _level_init(payload):
    global _LEVEL_CTX
    _LEVEL_CTX = payload


def _level_rep(arg):
    return _one_replication(_LEVEL_CTX, arg)


def _one_replication(payload, seed):
    model, dgp, carrier, gamma0, n, err_sq = payload
    if model == "plm":
        data = _plm.simulate_plm(dgp, n, seed)
        parts = loglr_plm(data, carrier, gamma0, dgp)
        g_vals, g2 = plm_lan_surrogate(data, carrier, gamma0, dgp, err_sq=err_sq)
        return parts.total, abs(lan_residual(parts.total, g_vals, g2))
    data = _cox.simulate_cox(dgp, n, seed)
    parts = _cox.loglr_cox(data, carrier, gamma0, dgp.eta0, dgp.theta0)
    # contiguity built to vanish: g = 0, residual is the ratio itself
    return parts.total, abs(parts.total)


def _level_replications(payload, reps, level_seed, workers):
    seeds = [mix_seed(level_seed, rep) for rep in range(reps)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers, initializer=_level_init,
                                 initargs=(payload,)) as pool:
            out = list(pool.map(_level_rep, seeds, chunksize=8))
    else:
        out = [_one_replication(payload, s) for s in seeds]
    totals = np.array([t for t, _ in out])
    residuals = np.array([r for _, r in out])
    return totals, residuals


def diagnostics_report(dgp, model, n, reps, m_grid, master_seed,
                       mc_draws=50_000, family=None, degree=3, smoothness=3.0,
                       workers=1):
    """Replication study of the contiguity and score-approximation limits.

    For every sieve level in ``m_grid``: the exact log-likelihood ratio
    across replications, the LAN residual (g = score surrogate for the
    regression model, g = 0 for the hazard model), the Hellinger gap, the
    efficient-score gap, and the sieve information.  Per-replication seeds
    are mixed from (master_seed, level index, replication index), so the
    result does not depend on the worker count.
    """
    m_grid = [int(k) for k in m_grid]
    loglr_mean, loglr_var, lan_med = [], [], []
    hell, hell_se, serr, serr_se, sclip = [], [], [], [], []

    for ki, k in enumerate(m_grid):
        level_seed = mix_seed(master_seed, ki)
        if model == "plm":
            fam = family or "bspline"
            spec, bm, gamma0 = _plm_level(dgp, k, degree if fam == "bspline" else 0, fam)
            law = plm_sieve_law(dgp, bm, gamma0)
            wb = _plm.wbeta_moments_population(law.dgp_m, bm)

            def esc_m(d, g=gamma0, b=bm, w=wb):
                return _plm.efficient_score_plm_m(d, dgp.theta0, g, b, w,
                                                  sigma=dgp.sigma)

            esc_lim = lambda d: _plm.efficient_score_plm_limit(d, dgp)
            payload = ("plm", dgp, bm, gamma0, n,
                       plm_approximation_error_sq(bm, gamma0, dgp))
        elif model == "cox":
            spec = BasisSpec("piecewise-constant", k, scaling="cox-scale")
            gamma0 = coefficients_for_target(spec, dgp.eta0, "cox-left-endpoint")
            law = cox_sieve_law(dgp, spec, gamma0)
            ratios = _cox.interval_ratios_population(law.dgp_m, spec, gamma0)
            curves = _cox.population_curves(dgp)

            def esc_m(d, s=spec, g=gamma0, r=ratios):
                return _cox.sieve_efficient_score_cox(d, s, g, dgp.theta0, r)

            esc_lim = lambda d: _cox.efficient_score_cox_limit(d, dgp, curves)
            payload = ("cox", dgp, spec, gamma0, n, None)
        else:
            raise ValueError(f"unknown model {model!r}")

        totals, residuals = _level_replications(payload, reps, level_seed, workers)
        loglr_mean.append(totals.mean())
        loglr_var.append(totals.var())
        lan_med.append(float(np.median(residuals)))

        h = hellinger_sq(dgp, law, mc_draws, mix_seed(level_seed, 10_000_019))
        hell.append(h.estimate)
        hell_se.append(h.stderr)
        s = score_approx_err(esc_m, esc_lim, dgp, law, mc_draws,
                             mix_seed(level_seed, 10_000_033))
        serr.append(s.estimate)
        serr_se.append(s.stderr)
        sclip.append(s.clipped)

    j_m, j_lim = jm_convergence(
        dgp, model, m_grid,
        family=(family or ("bspline" if model == "plm" else "piecewise-constant")),
        degree=degree if model == "plm" and (family or "bspline") == "bspline" else 0,
    )

    k_max = max(m_grid)
    if model == "plm":
        spec = BasisSpec(family or "bspline", k_max,
                         degree=degree if (family or "bspline") == "bspline" else 0,
                         scaling="probability-orthonormal")
        bm = gram_and_orthonormalize(spec)
        xi = sup_norm(spec, bm.transform)
        gamma_b = coefficients_for_target(spec, dgp.b0, "l2-projection")
        fn_b = bm.function(gamma_b)
        a_n = math.sqrt(integrate(
            lambda z: (fn_b(z) - np.asarray(dgp.b0(z), dtype=float)) ** 2,
            0.0, 1.0, breakpoints=spec.breakpoints,
        ))
    else:
        xi = math.sqrt(k_max)
        a_n = 1.0 / k_max
    flags = rate_check(n, k_max, smoothness, xi, a_n)

    return DiagnosticsReport(
        model=model, n=n, reps=reps, m_grid=np.asarray(m_grid),
        loglr_mean=np.asarray(loglr_mean), loglr_var=np.asarray(loglr_var),
        lan_residual_quantiles=np.asarray(lan_med),
        hellinger_sq=np.asarray(hell), hellinger_se=np.asarray(hell_se),
        score_approx_err=np.asarray(serr), score_approx_se=np.asarray(serr_se),
        score_clip_counts=np.asarray(sclip, dtype=int),
        J_m_values=np.asarray(j_m), J_limit=float(j_lim), rate_flags=flags,
    )
