"""Partially linear Gaussian regression Y = eta(Z) + theta * W + eps.

Fitting at sieve level k is least squares: the nuisance coefficients are
profiled out in closed form, leaving the one-dimensional maximizer of the
partialled-out regression.  Population quantities (efficient score and
information) are computed by quadrature from the data-generating spec.
"""

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .basis import (
    BasisSpec,
    _cholesky_with_pivot_report,
    gram_and_orthonormalize,
    inner_products,
)
from .errors import (
    CollinearityError,
    DegenerateInformationError,
    ShapeError,
)
from .quadrature import integrate

_COLLINEARITY_RTOL = 1e-12

CSV_HEADER = "w,y,z"


@dataclass(frozen=True)
class PlmDgpSpec:
    """True law: theta0, nuisance eta0, conditional mean b0(z) = E[W | Z=z].

    Z is uniform on [0, 1]; W = b0(Z) + N(0, w_noise_sd^2); the regression
    noise is N(0, sigma^2) independent of (W, Z).  sigma = 0 is tolerated
    for noiseless simulation tests only.
    """

    theta0: float
    eta0: Callable[[np.ndarray], np.ndarray]
    b0: Callable[[np.ndarray], np.ndarray]
    sigma: float = 1.0
    w_noise_sd: float = 1.0
    z_law: str = "uniform"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.w_noise_sd <= 0:
            raise ValueError("w_noise_sd must be > 0 (otherwise J is singular)")
        if self.z_law != "uniform":
            raise ValueError("only the uniform Z law is implemented")


class PlmSample(NamedTuple):
    w: float
    y: float
    z: float


@dataclass(frozen=True)
class PlmData:
    """Column-aligned sample arrays (w_i, y_i, z_i)."""

    w: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        if not (self.w.shape == self.y.shape == self.z.shape):
            raise ShapeError("w, y, z must have identical shapes")

    @property
    def n(self):
        return self.w.shape[0]

    def row(self, i):
        return PlmSample(float(self.w[i]), float(self.y[i]), float(self.z[i]))

    def to_csv(self, path):
        arr = np.column_stack([self.w, self.y, self.z])
        np.savetxt(path, arr, delimiter=",", header=CSV_HEADER, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"expected header {CSV_HEADER!r}, got {header!r}")
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if arr.shape[1] != 3:
            raise ValueError("expected three columns w,y,z")
        return cls(w=arr[:, 0], y=arr[:, 1], z=arr[:, 2])


@dataclass(frozen=True)
class PlmFit:
    theta_hat: float
    gamma_hat: np.ndarray
    se: float
    J_m_hat: float
    profile_loglik_at_theta_hat: float
    sigma_used: float
    sigma_estimated: bool
    n: int
    k: int

    def to_json_dict(self):
        return {
            "theta_hat": self.theta_hat,
            "gamma_hat": list(map(float, self.gamma_hat)),
            "se": self.se,
            "J_m_hat": self.J_m_hat,
            "profile_loglik_at_theta_hat": self.profile_loglik_at_theta_hat,
            "sigma_used": self.sigma_used,
            "sigma_estimated": self.sigma_estimated,
            "n": self.n,
            "k": self.k,
        }


def default_k(n):
    """Default sieve dimension for cubic B-splines, k = ceil(n^(1/5))."""
    return max(4, math.ceil(n ** 0.2))


def simulate_plm(dgp, n, seed):
    """n i.i.d. draws under the generating law; deterministic given the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.uniform(size=n)
    w = np.asarray(dgp.b0(z), dtype=float) + dgp.w_noise_sd * rng.standard_normal(n)
    eps = dgp.sigma * rng.standard_normal(n) if dgp.sigma > 0 else np.zeros(n)
    y = np.asarray(dgp.eta0(z), dtype=float) + dgp.theta0 * w + eps
    return PlmData(w=w, y=y, z=z)


class Partialled(NamedTuple):
    """Residuals of W and Y after projecting onto the sieve columns."""

    w_res: np.ndarray
    y_res: np.ndarray
    design: np.ndarray
    bmat: np.ndarray
    chol: np.ndarray


def partial_out(data, basis):
    """Project W and Y off the sieve span spanned by the basis columns."""
    design = basis.design
    if design.shape[0] != data.n:
        raise ShapeError("basis evaluated on a different sample size than the data")
    if basis.z.size and not np.array_equal(basis.z, data.z):
        raise ShapeError("basis evaluation points do not match the data rows")
    n = data.n
    bmat = design.T @ design / n
    chol = _cholesky_with_pivot_report(bmat)

    def project(v):
        rhs = design.T @ v / n
        coef = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        return design @ coef

    w_res = data.w - project(data.w)
    y_res = data.y - project(data.y)
    return Partialled(w_res=w_res, y_res=y_res, design=design, bmat=bmat, chol=chol)


def _check_not_collinear(data, part):
    s_ww = float(np.dot(part.w_res, part.w_res))
    if s_ww < _COLLINEARITY_RTOL * float(np.dot(data.w, data.w)):
        raise CollinearityError(
            "W is numerically in the sieve span; efficient information degenerate"
        )
    return s_ww


def fit_plm(data, basis, sigma=None):
    """Closed-form sieve MLE of theta with the nuisance profiled out.

    If ``sigma`` is omitted the noise scale is estimated from the residual
    sum of squares with an (n - k - 1) denominator; theta_hat is unaffected.
    """
    part = partial_out(data, basis)
    s_ww = _check_not_collinear(data, part)
    n, k = data.n, basis.k
    if n <= k:
        raise ValueError("need n > k to fit")

    theta_hat = float(np.dot(part.w_res, part.y_res) / s_ww)
    rhs = part.design.T @ (data.y - theta_hat * data.w) / n
    gamma_hat = np.linalg.solve(part.chol.T, np.linalg.solve(part.chol, rhs))

    resid = part.y_res - theta_hat * part.w_res
    if sigma is None:
        rss = float(np.dot(resid, resid))
        sigma_used = math.sqrt(rss / (n - k - 1))
        sigma_estimated = True
    else:
        if sigma <= 0:
            raise ValueError("sigma must be > 0")
        sigma_used = float(sigma)
        sigma_estimated = False

    j_m_hat = s_ww / (n * sigma_used**2)
    se = 1.0 / math.sqrt(n * j_m_hat)
    pll = -float(np.dot(resid, resid)) / (2 * sigma_used**2)
    return PlmFit(
        theta_hat=theta_hat,
        gamma_hat=gamma_hat,
        se=se,
        J_m_hat=j_m_hat,
        profile_loglik_at_theta_hat=pll,
        sigma_used=sigma_used,
        sigma_estimated=sigma_estimated,
        n=n,
        k=k,
    )


def profile_loglik_plm(theta, data, basis, sigma, part=None):
    """Log profile likelihood, exactly quadratic and concave in theta."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if part is None:
        part = partial_out(data, basis)
        _check_not_collinear(data, part)
    resid = part.y_res - theta * part.w_res
    return -float(np.dot(resid, resid)) / (2 * sigma**2)


def efficient_score_plm_m(sample, theta, gamma, basis, wbeta_moments, sigma=1.0):
    """Sieve-level efficient score at one sample or at column data.

    ``wbeta_moments`` is E[W * beta(Z)] in the working basis: analytic under
    the generating law for diagnostics, or the sample average for data-only
    fits.  Callers record which one they passed.
    """
    gamma = np.asarray(gamma, dtype=float)
    wbeta_moments = np.asarray(wbeta_moments, dtype=float)
    if gamma.shape != (basis.k,) or wbeta_moments.shape != (basis.k,):
        raise ShapeError("gamma and wbeta_moments must have length k")
    if isinstance(sample, PlmSample):
        w, y = sample.w, sample.y
        row = basis.evaluate(np.array([sample.z]))[0]
        resid = y - float(row @ gamma) - theta * w
        return float((w - float(row @ wbeta_moments)) * resid / sigma**2)
    design = basis.evaluate(sample.z)
    resid = sample.y - design @ gamma - theta * sample.w
    return (sample.w - design @ wbeta_moments) * resid / sigma**2


def efficient_score_plm_limit(sample, dgp):
    """Semiparametric efficient score (the no-sieve limit) under the generating law."""
    w, y, z = (sample.w, sample.y, sample.z) if not isinstance(sample, PlmSample) else sample
    z_arr = np.asarray(z, dtype=float)
    resid = y - np.asarray(dgp.eta0(z_arr), dtype=float) - dgp.theta0 * w
    return (w - np.asarray(dgp.b0(z_arr), dtype=float)) * resid / dgp.sigma**2


def wbeta_moments_population(dgp, basis):
    """E[W * beta(Z)] = integral of b0 against each working basis function."""
    raw = inner_products(basis.spec, lambda z: np.asarray(dgp.b0(z), dtype=float))
    if basis.spec.scaling == "probability-orthonormal":
        return basis.transform @ raw
    return raw


def wbeta_moments_sample(data, basis):
    return basis.evaluate(data.z).T @ data.w / data.n


def efficient_info_plm(dgp, basis_spec: Optional[BasisSpec] = None):
    """Efficient information: the semiparametric limit, or at sieve level.

    Without a basis returns sigma^{-2} (E W^2 - ||b0||^2); with one returns
    sigma^{-2} (E W^2 - ||P_k b0||^2) where P_k projects onto the sieve span
    in L2 of the Z law.  Both by quadrature.
    """
    if dgp.sigma <= 0:
        raise ValueError("sigma must be > 0")
    b0_sq = integrate(lambda z: np.asarray(dgp.b0(z), dtype=float) ** 2, 0.0, 1.0)
    ew2 = b0_sq + dgp.w_noise_sd**2
    if basis_spec is None:
        j = (ew2 - b0_sq) / dgp.sigma**2
        if j <= 0:
            raise DegenerateInformationError("J <= 0")
        return j
    # projection norm is basis-scaling invariant; use the orthonormal span
    ospec = BasisSpec(basis_spec.family, basis_spec.k, basis_spec.degree,
                      "probability-orthonormal")
    bm = gram_and_orthonormalize(ospec)
    coef = wbeta_moments_population(dgp, bm)
    j_m = (ew2 - float(np.dot(coef, coef))) / dgp.sigma**2
    if j_m <= 0:
        raise DegenerateInformationError("J_m <= 0")
    return j_m
