"""One-dimensional tilt submodels through the sieve nuisance.

Under a sieve model the exact least-favorable path through (theta, gamma)
tilts the nuisance by the regression of the theta-score on the nuisance
scores: gamma_t = gamma + i11^{-1} i10 (theta - t).  Everything here is
built from Fisher information blocks plus model-specific log-likelihoods;
the profile-likelihood ratio process and its quadratic approximation come
out of the same machinery.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import cox as _cox
from . import plm as _plm
from .basis import inner_products
from .errors import InvalidPathError, ShapeError, SingularInformationError
from .quadrature import integrate

DEFAULT_H_GRID = (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0)
_SLACK = 1e-10


@dataclass(frozen=True)
class FisherBlocks:
    """Information blocks of a sieve model at its true parameter.

    ``tilt`` solves i11 @ tilt = i10; J_m is the Schur complement
    i00 - i01 i11^{-1} i10, the efficient information for theta.
    """

    i00: float
    i01: np.ndarray
    i11: np.ndarray
    J_m: float
    tilt: np.ndarray

    @classmethod
    def from_blocks(cls, i00, i01, i11):
        i01 = np.asarray(i01, dtype=float)
        i11 = np.asarray(i11, dtype=float)
        if i11.shape != (i01.shape[0], i01.shape[0]):
            raise ShapeError("i11 must be square and aligned with i01")
        try:
            chol = np.linalg.cholesky(i11)
        except np.linalg.LinAlgError as exc:
            raise SingularInformationError("i11 is not positive definite") from exc
        tilt = np.linalg.solve(chol.T, np.linalg.solve(chol, i01))
        j_m = float(i00 - i01 @ tilt)
        if j_m <= 0:
            raise SingularInformationError("Schur complement J_m is not positive")
        return cls(i00=float(i00), i01=i01, i11=i11, J_m=j_m, tilt=tilt)

    @property
    def k(self):
        return self.i01.shape[0]


def gamma_sub(t, theta, gamma, blocks):
    """Tilted nuisance gamma + i11^{-1} i10 (theta - t); equals gamma at t = theta."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (blocks.k,):
        raise ShapeError("gamma must have length k")
    return gamma + blocks.tilt * (theta - t)


# ---------------------------------------------------------------------------
# Fisher blocks for the two models
# ---------------------------------------------------------------------------

def plm_fisher_blocks(basis, sigma, dgp=None, data=None):
    """Blocks of the sieve regression model, population or sample moments.

    Pass ``dgp`` for analytic moments by quadrature (diagnostics mode) or
    ``data`` for plug-in sample averages (data mode); exactly one of them.
    """
    if (dgp is None) == (data is None):
        raise ValueError("pass exactly one of dgp or data")
    inv_s2 = 1.0 / sigma**2
    if dgp is not None:
        ew2 = integrate(lambda z: np.asarray(dgp.b0(z), dtype=float) ** 2, 0, 1)
        ew2 += dgp.w_noise_sd**2
        i01 = inv_s2 * _plm.wbeta_moments_population(dgp, basis)
        gram = basis.gram
        if basis.spec.scaling == "probability-orthonormal":
            gram = basis.transform @ gram @ basis.transform.T
        i11 = inv_s2 * gram
        return FisherBlocks.from_blocks(inv_s2 * ew2, i01, i11)
    design = basis.design
    i00 = inv_s2 * float(np.mean(data.w**2))
    i01 = inv_s2 * design.T @ data.w / data.n
    i11 = inv_s2 * design.T @ design / data.n
    return FisherBlocks.from_blocks(i00, i01, i11)


def cox_fisher_blocks(spec, gamma0, theta0, dgp=None, data=None):
    """Blocks of the sieve hazard model from cell-aggregated risk moments."""
    if (dgp is None) == (data is None):
        raise ValueError("pass exactly one of dgp or data")
    c = _cox.cell_hazards(spec, gamma0)
    k = spec.k
    if dgp is not None:
        mom = _cox.sieve_cell_moments(dgp, spec, gamma0)
    else:
        mom = _sample_cell_moments(data, spec, theta0)
    i00 = float(np.sum(c * mom[2]))
    i01 = k * mom[1]
    i11 = np.diag(k**2 * mom[0] / c)
    return FisherBlocks.from_blocks(i00, i01, i11)


def _sample_cell_moments(data, spec, theta0):
    """Plug-in cell integrals of the sample at-risk moments, orders 0..2."""
    _, overlaps = _cox._cells_and_overlaps(spec, data.t)
    expw = np.exp(theta0 * data.w)
    rows = np.stack([expw, data.w * expw, data.w**2 * expw])
    return rows @ overlaps / data.n


# ---------------------------------------------------------------------------
# Bridging curves t -> log-likelihood along the tilted path
# ---------------------------------------------------------------------------

class CurvePoint(NamedTuple):
    value: np.ndarray
    first_deriv: np.ndarray
    second_deriv: np.ndarray


def _l_m_curve_plm(t, theta, gamma, data, blocks, basis, sigma):
    design = basis.evaluate(np.atleast_1d(np.asarray(data.z, dtype=float)))
    gamma_t = gamma_sub(t, theta, gamma, blocks)
    w = np.atleast_1d(np.asarray(data.w, dtype=float))
    y = np.atleast_1d(np.asarray(data.y, dtype=float))
    resid = y - w * t - design @ gamma_t
    wres = w - design @ blocks.tilt
    value = -0.5 * np.log(2 * np.pi * sigma**2) - 0.5 * resid**2 / sigma**2
    first = resid * wres / sigma**2
    second = -(wres**2) / sigma**2
    return CurvePoint(value, first, second)


def _l_m_curve_cox(t, theta, gamma, data, blocks, spec):
    gamma_t = gamma_sub(t, theta, gamma, blocks)
    c_t = spec.k * gamma_t
    if np.min(c_t) <= 0:
        raise InvalidPathError("tilted hazard non-positive on a cell")
    tv = np.atleast_1d(np.asarray(data.t, dtype=float))
    delta = np.atleast_1d(np.asarray(data.delta, dtype=float))
    w = np.atleast_1d(np.asarray(data.w, dtype=float))
    _, idx = _cox._cell_index(spec.k, tv)

    d_c = spec.k * blocks.tilt  # cell hazards of the tilt direction
    lam_t = _cox._sieve_cum_hazard(c_t, tv)
    lam_d = _cox._sieve_cum_hazard(d_c, tv)
    etw = np.exp(t * w)

    value = delta * (np.log(c_t[idx]) + t * w) - etw * lam_t
    first = delta * (w - d_c[idx] / c_t[idx]) - etw * (w * lam_t - lam_d)
    second = (
        -delta * (d_c[idx] / c_t[idx]) ** 2
        - etw * (w**2 * lam_t - 2 * w * lam_d)
    )
    return CurvePoint(value, first, second)


def l_m_curve(t, theta, gamma, sample, model, blocks, basis=None, spec=None,
              sigma=None):
    """Value and first two t-derivatives of the tilted log-likelihood.

    At (t, theta, gamma) = (theta0, theta0, gamma0) the first derivative is
    the efficient score of the sieve model, evaluated at the sample.
    Covariate-density and censoring factors, constant along the path, are
    omitted from the value.
    """
    gamma = np.asarray(gamma, dtype=float)
    if model == "plm":
        if basis is None or sigma is None:
            raise ValueError("plm curves need basis and sigma")
        return _l_m_curve_plm(t, theta, gamma, sample, blocks, basis, sigma)
    if model == "cox":
        if spec is None:
            raise ValueError("cox curves need the basis spec")
        return _l_m_curve_cox(t, theta, gamma, sample, blocks, spec)
    raise ValueError(f"unknown model {model!r}")


# ---------------------------------------------------------------------------
# Profile-likelihood ratio process and its quadratic approximation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpansionReport:
    h_grid: np.ndarray
    A_values: np.ndarray
    lan_prediction: np.ndarray
    residuals: np.ndarray
    sandwich_lower_ok: bool
    sandwich_upper_ok: bool
    concave_ok: bool
    sandwich_lower_slack: np.ndarray
    sandwich_upper_slack: np.ndarray

    def to_json_dict(self):
        return {
            "h_grid": list(map(float, self.h_grid)),
            "A_values": list(map(float, self.A_values)),
            "lan_prediction": list(map(float, self.lan_prediction)),
            "residuals": list(map(float, self.residuals)),
            "sandwich_lower_ok": self.sandwich_lower_ok,
            "sandwich_upper_ok": self.sandwich_upper_ok,
            "concave_ok": self.concave_ok,
        }

    def csv_rows(self):
        return [
            (float(h), float(a), float(p), float(r))
            for h, a, p, r in zip(self.h_grid, self.A_values,
                                  self.lan_prediction, self.residuals)
        ]


def second_divided_differences(x, y):
    """Second-order divided differences; nonpositive for concave samples."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    first = np.diff(y) / np.diff(x)
    return 2 * np.diff(first) / (x[2:] - x[:-2])


class _PlmProfile:
    def __init__(self, data, basis, sigma):
        self.data = data
        self.basis = basis
        self.sigma = sigma
        self.part = _plm.partial_out(data, basis)

    def loglik(self, theta):
        return _plm.profile_loglik_plm(theta, self.data, self.basis, self.sigma,
                                       part=self.part)

    def gamma_hat(self, theta):
        rhs = self.part.design.T @ (self.data.y - theta * self.data.w) / self.data.n
        return np.linalg.solve(self.part.chol.T, np.linalg.solve(self.part.chol, rhs))


class _CoxSieveProfile:
    """Closed-form profile over piecewise-constant hazards for fixed theta."""

    def __init__(self, data, spec):
        self.data = data
        self.spec = spec
        _, self.idx = _cox._cell_index(spec.k, data.t)
        _, self.overlaps = _cox._cells_and_overlaps(spec, data.t)
        ev = data.delta == 1
        self.deaths = np.bincount(self.idx[ev], minlength=spec.k).astype(float)
        self.w_event_sum = float(np.sum(data.w[ev]))

    def _exposures(self, theta):
        return self.overlaps.T @ np.exp(theta * self.data.w)

    def gamma_hat(self, theta):
        expo = self._exposures(theta)
        if np.any((expo <= 0) & (self.deaths > 0)):
            raise InvalidPathError("death in a cell with zero exposure")
        c_hat = np.divide(self.deaths, expo, out=np.zeros(self.spec.k),
                          where=expo > 0)
        return c_hat / self.spec.k

    def loglik(self, theta):
        expo = self._exposures(theta)
        d = self.deaths
        live = d > 0
        return float(
            np.sum(d[live] * np.log(d[live] / expo[live]))
            + theta * self.w_event_sum
            - np.sum(d)
        )


def sieve_profile(data, model, basis=None, spec=None, sigma=None):
    if model == "plm":
        return _PlmProfile(data, basis, sigma)
    if model == "cox":
        return _CoxSieveProfile(data, spec)
    raise ValueError(f"unknown model {model!r}")


def expansion_report(samples, basis, model, h_grid, blocks, effscore_values,
                     theta0, sigma=None):
    """Profile-likelihood ratio process versus its quadratic approximation.

    ``A_values[i]`` is the log profile-likelihood ratio at theta0 +
    h_i/sqrt(n); the prediction is h * (score sum)/sqrt(n) - h^2 J_m / 2
    from the supplied per-sample efficient scores and blocks.  The sandwich
    booleans certify the two definitional profile bounds at every h, and
    ``concave_ok`` checks second divided differences of A.
    """
    h_grid = np.asarray(sorted(h_grid), dtype=float)
    n = samples.n
    rn = np.sqrt(n)
    if model == "plm":
        prof = sieve_profile(samples, "plm", basis=basis, sigma=sigma)
        curve_kw = dict(basis=basis, sigma=sigma)
    else:
        prof = sieve_profile(samples, "cox", spec=basis.spec if hasattr(basis, "spec") else basis)
        curve_kw = dict(spec=prof.spec)

    base = prof.loglik(theta0)
    gamma0_hat = prof.gamma_hat(theta0)
    score_sum = float(np.sum(effscore_values))

    a_vals, lower_slack, upper_slack = [], [], []
    for h in h_grid:
        theta_h = theta0 + h / rn
        a_h = prof.loglik(theta_h) - base
        a_vals.append(a_h)
        lo = (
            np.mean(l_m_curve(theta_h, theta0, gamma0_hat, samples, model,
                              blocks, **curve_kw).value)
            - np.mean(l_m_curve(theta0, theta0, gamma0_hat, samples, model,
                                blocks, **curve_kw).value)
        )
        gamma_h_hat = prof.gamma_hat(theta_h)
        hi = (
            np.mean(l_m_curve(theta_h, theta_h, gamma_h_hat, samples, model,
                              blocks, **curve_kw).value)
            - np.mean(l_m_curve(theta0, theta_h, gamma_h_hat, samples, model,
                                blocks, **curve_kw).value)
        )
        lower_slack.append(a_h / n - lo)
        upper_slack.append(hi - a_h / n)

    a_vals = np.asarray(a_vals)
    prediction = h_grid * score_sum / rn - 0.5 * h_grid**2 * blocks.J_m
    lower_slack = np.asarray(lower_slack)
    upper_slack = np.asarray(upper_slack)

    full_h = np.concatenate([h_grid[h_grid < 0], [0.0], h_grid[h_grid > 0]])
    full_a = np.concatenate([a_vals[h_grid < 0], [0.0], a_vals[h_grid > 0]])
    concave = bool(np.all(second_divided_differences(full_h, full_a) <= _SLACK))

    return ExpansionReport(
        h_grid=h_grid,
        A_values=a_vals,
        lan_prediction=prediction,
        residuals=a_vals - prediction,
        sandwich_lower_ok=bool(np.all(lower_slack >= -_SLACK)),
        sandwich_upper_ok=bool(np.all(upper_slack >= -_SLACK)),
        concave_ok=concave,
        sandwich_lower_slack=lower_slack,
        sandwich_upper_slack=upper_slack,
    )


# ---------------------------------------------------------------------------
# Ready-made expansion inputs for the two models
# ---------------------------------------------------------------------------

def plm_expansion_inputs(data, basis, theta0, sigma, moments="sample", dgp=None):
    """Blocks plus per-sample efficient scores for the regression expansion.

    ``moments='sample'`` makes the quadratic approximation exact for the
    Gaussian profile; ``'population'`` uses quadrature moments of ``dgp``.
    """
    if moments == "sample":
        blocks = plm_fisher_blocks(basis, sigma, data=data)
        wb = _plm.wbeta_moments_sample(data, basis)
        prof = _PlmProfile(data, basis, sigma)
        gamma_ref = prof.gamma_hat(theta0)
    elif moments == "population":
        if dgp is None:
            raise ValueError("population moments need the dgp")
        blocks = plm_fisher_blocks(basis, sigma, dgp=dgp)
        wb = _plm.wbeta_moments_population(dgp, basis)
        gamma_ref = inner_products(basis.spec, dgp.eta0)
        gram = basis.gram
        if basis.spec.scaling == "probability-orthonormal":
            gamma_ref = basis.transform @ gamma_ref
        else:
            gamma_ref = np.linalg.solve(gram, gamma_ref)
    else:
        raise ValueError("moments must be 'sample' or 'population'")
    scores = _plm.efficient_score_plm_m(data, theta0, gamma_ref, basis, wb,
                                        sigma=sigma)
    return blocks, scores


def cox_expansion_inputs(data, spec, gamma0, theta0, moments="sample", dgp=None):
    """Blocks plus per-sample sieve efficient scores for the hazard expansion."""
    if moments == "sample":
        blocks = cox_fisher_blocks(spec, gamma0, theta0, data=data)
        ratios = _cox.interval_ratios_sample(data, spec, theta0)
    elif moments == "population":
        if dgp is None:
            raise ValueError("population moments need the dgp")
        blocks = cox_fisher_blocks(spec, gamma0, theta0, dgp=dgp)
        ratios = _cox.interval_ratios_population(dgp, spec, gamma0)
    else:
        raise ValueError("moments must be 'sample' or 'population'")
    scores = _cox.sieve_efficient_score_cox(data, spec, gamma0, theta0, ratios)
    return blocks, scores
