"""Sieve bases on [0, 1]: piecewise-constant cells and clamped B-splines.

A basis is described by a :class:`BasisSpec`; evaluating it on data and
orthonormalizing against a measure produces a :class:`BasisMatrix`.  All
objects are immutable after construction and safe to share across threads.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DomainError, RankDeficiencyError
from .quadrature import grid_nodes_weights, integrate

FAMILIES = ("piecewise-constant", "bspline")
SCALINGS = ("cox-scale", "probability-orthonormal", "raw")
MEASURES = ("lebesgue", "uniform-Z", "empirical")

_GRAM_TOL = 1e-10
_RANK_RTOL = 1e-12


@dataclass(frozen=True)
class BasisSpec:
    """Sieve level: family, dimension ``k``, degree and scaling convention.

    The domain is fixed to [0, 1].  Piecewise-constant cells are the k
    half-open intervals [(j-1)/k, j/k), the last one closed at 1; B-spline
    knots are equally spaced and clamped at the endpoints.
    """

    family: str
    k: int
    degree: int = 0
    scaling: str = "raw"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.scaling not in SCALINGS:
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if self.family == "piecewise-constant" and self.degree != 0:
            raise ValueError("piecewise-constant basis has degree 0")
        if self.family == "bspline" and self.k < self.degree + 1:
            raise ValueError("bspline basis needs k >= degree + 1")
        if self.scaling == "cox-scale" and self.family != "piecewise-constant":
            raise ValueError("cox-scale applies to piecewise-constant bases only")

    @property
    def breakpoints(self):
        """Interior knots / cell edges, where basis functions are non-smooth."""
        if self.family == "piecewise-constant":
            return np.arange(1, self.k) / self.k
        nspan = self.k - self.degree
        return np.arange(1, nspan) / nspan

    def to_config(self):
        return {"family": self.family, "k": self.k,
                "degree": self.degree, "scaling": self.scaling}

    @classmethod
    def from_config(cls, cfg):
        return cls(family=cfg["family"], k=int(cfg["k"]),
                   degree=int(cfg.get("degree", 0)),
                   scaling=cfg.get("scaling", "raw"))


def _check_domain(z):
    z = np.asarray(z, dtype=float)
    if np.any(z < 0.0) or np.any(z > 1.0):
        raise DomainError("evaluation points must lie in [0, 1]")
    return z


def _pc_cells(z, k):
    # right endpoint z = 1 belongs to the last cell
    return np.minimum((z * k).astype(np.int64), k - 1)


def _bspline_knots(k, degree):
    inner = np.linspace(0.0, 1.0, k - degree + 1)
    return np.concatenate([np.zeros(degree), inner, np.ones(degree)])


def _bspline_design(k, degree, z):
    """(n, k) matrix of clamped uniform B-spline values, de Boor recursion."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    n = z.shape[0]
    t = _bspline_knots(k, degree)
    nspan = k - degree
    span = _pc_cells(z, nspan) + degree

    vals = np.zeros((n, degree + 1))
    vals[:, 0] = 1.0
    left = np.zeros((n, degree + 1))
    right = np.zeros((n, degree + 1))
    for j in range(1, degree + 1):
        left[:, j] = z - t[span + 1 - j]
        right[:, j] = t[span + j] - z
        saved = np.zeros(n)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = vals[:, r] / denom
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved

    out = np.zeros((n, k))
    cols = span[:, None] - degree + np.arange(degree + 1)[None, :]
    np.put_along_axis(out, cols, vals, axis=1)
    return out


def basis_design(spec, z):
    """(n, k) matrix of basis values at points ``z`` (family scaling applied)."""
    z = _check_domain(z)
    z = np.atleast_1d(z)
    if spec.family == "piecewise-constant":
        out = np.zeros((z.shape[0], spec.k))
        out[np.arange(z.shape[0]), _pc_cells(z, spec.k)] = (
            spec.k if spec.scaling == "cox-scale" else 1.0
        )
        return out
    return _bspline_design(spec.k, spec.degree, z)


def evaluate_basis(spec, z):
    """Basis vector (length k) at a single point ``z`` in [0, 1]."""
    z = float(z)
    return basis_design(spec, np.array([z]))[0]


def _gram_quadrature(spec):
    """Gram matrix against Lebesgue measure on [0, 1] (= uniform Z law)."""
    if spec.degree == 0:
        # disjoint cells: diagonal, exact
        scale = spec.k if spec.scaling == "cox-scale" else 1.0
        return np.eye(spec.k) * (scale**2 / spec.k)
    edges = np.concatenate([[0.0], spec.breakpoints, [1.0]])
    panels = 16
    prev = None
    while panels <= 2048:
        x, w = grid_nodes_weights(edges, panels)
        design = basis_design(spec, x)
        gram = design.T @ (w[:, None] * design)
        if prev is not None and np.max(np.abs(gram - prev)) <= _GRAM_TOL:
            return gram
        prev = gram
        panels *= 2
    return prev


def _cholesky_with_pivot_report(gram):
    """Cholesky factor of ``gram``; RankDeficiencyError names the bad column."""
    k = gram.shape[0]
    diag = np.diag(gram)
    floor = _RANK_RTOL * np.max(diag) if k else 0.0
    L = np.zeros_like(gram)
    for j in range(k):
        pivot = gram[j, j] - np.dot(L[j, :j], L[j, :j])
        if pivot <= floor:
            raise RankDeficiencyError(j)
        L[j, j] = np.sqrt(pivot)
        if j + 1 < k:
            L[j + 1 :, j] = (
                gram[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]
            ) / L[j, j]
    return L


@dataclass(frozen=True)
class BasisMatrix:
    """Basis evaluated on points, with its Gram matrix and orthonormalizer.

    ``values`` holds the family-scaled basis at the evaluation points;
    ``transform`` is lower-triangular with transform @ gram @ transform.T = I
    under probability-orthonormal scaling, identity
    otherwise.  ``design`` is the working design matrix (transform applied).
    """

    spec: BasisSpec
    z: np.ndarray
    values: np.ndarray
    gram: np.ndarray
    transform: np.ndarray
    measure: str

    @property
    def k(self):
        return self.spec.k

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def design(self):
        if self.spec.scaling == "probability-orthonormal":
            return self.values @ self.transform.T
        return self.values

    def evaluate(self, z):
        """Working-basis design matrix at new points ``z``."""
        vals = basis_design(self.spec, z)
        if self.spec.scaling == "probability-orthonormal":
            return vals @ self.transform.T
        return vals

    def function(self, gamma):
        """Vectorized z -> design(z) @ gamma, for coefficients in the working basis."""
        gamma = np.asarray(gamma, dtype=float)
        if self.spec.scaling == "probability-orthonormal":
            raw_coef = self.transform.T @ gamma
        else:
            raw_coef = gamma
        return lambda z: basis_design(self.spec, z) @ raw_coef


def gram_and_orthonormalize(spec, z_points=None, measure="lebesgue"):
    """Evaluate the basis, compute its Gram matrix, and orthonormalize.

    The Gram matrix is taken against Lebesgue measure (identically, the
    uniform Z law) by quadrature, or against the empirical measure of
    ``z_points``.  Orthonormalization is by the inverse Cholesky factor.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    if z_points is None:
        z_points = np.empty(0)
        if measure == "empirical":
            raise ValueError("empirical measure needs z_points")
    z_points = _check_domain(np.asarray(z_points, dtype=float))
    values = basis_design(spec, z_points) if z_points.size else np.zeros((0, spec.k))

    if measure == "empirical":
        gram = values.T @ values / values.shape[0]
    else:
        gram = _gram_quadrature(spec)

    chol = _cholesky_with_pivot_report(gram)
    if spec.scaling == "probability-orthonormal":
        transform = solve_triangular(chol, np.eye(spec.k), lower=True)
    else:
        transform = np.eye(spec.k)
    return BasisMatrix(spec=spec, z=z_points, values=values, gram=gram,
                       transform=transform, measure=measure)


def inner_products(spec, fn, measure="lebesgue", z_points=None):
    """Integrals of ``fn`` against each family-scaled basis function.

    Degree-0 cells are integrated one cell at a time (the integrand jumps at
    cell edges); continuous splines go through one shared quadrature grid.
    """
    if measure == "empirical":
        values = basis_design(spec, z_points)
        return values.T @ fn(z_points) / z_points.shape[0]
    edges = np.concatenate([[0.0], spec.breakpoints, [1.0]])
    if spec.degree == 0:
        scale = spec.k if spec.scaling == "cox-scale" else 1.0
        return np.array([
            scale * integrate(fn, lo, hi)
            for lo, hi in zip(edges[:-1], edges[1:])
        ])
    panels = 32
    prev = None
    while panels <= 4096:
        x, w = grid_nodes_weights(edges, panels)
        rhs = basis_design(spec, x).T @ (w * fn(x))
        if prev is not None and np.max(np.abs(rhs - prev)) <= _GRAM_TOL:
            return rhs
        prev = rhs
        panels *= 2
    return prev


def coefficients_for_target(spec, eta0, rule, measure="lebesgue", z_points=None):
    """Coefficient vector making the sieve approximate a target function.

    ``cox-left-endpoint`` (piecewise-constant, cox-scale only) samples the
    target at left cell endpoints and divides by k, so the sieve function
    is the left-endpoint step approximation.  ``l2-projection`` solves the
    Gram system for the L2(measure) projection; coefficients refer to the
    working basis (orthonormalized under probability-orthonormal scaling).
    """
    if rule == "cox-left-endpoint":
        if spec.family != "piecewise-constant" or spec.scaling != "cox-scale":
            raise ValueError("cox-left-endpoint needs a piecewise-constant cox-scale basis")
        j = np.arange(spec.k)
        return np.array([eta0(x) for x in j / spec.k]) / spec.k
    if rule != "l2-projection":
        raise ValueError(f"unknown rule {rule!r}")

    bm = gram_and_orthonormalize(spec, z_points=z_points, measure=measure)
    rhs = inner_products(spec, eta0, measure,
                         bm.z if measure == "empirical" else None)
    alpha = np.linalg.solve(bm.gram, rhs)
    if spec.scaling == "probability-orthonormal":
        # working coefficients: transform^{-T} alpha
        return solve_triangular(bm.transform.T, alpha, lower=False)
    return alpha


def sup_norm(spec, transform=None, grid_points=10_000):
    """sup over z of the Euclidean norm of the (working) basis vector.

    Analytic for probability-orthonormal piecewise-constant cells; grid
    search otherwise.
    """
    if spec.family == "piecewise-constant" and transform is not None:
        return float(np.max(np.abs(np.diag(transform))))
    if spec.family == "piecewise-constant":
        return float(spec.k if spec.scaling == "cox-scale" else 1.0)
    z = np.linspace(0.0, 1.0, grid_points)
    design = basis_design(spec, z)
    if transform is not None:
        design = design @ transform.T
    return float(np.max(np.linalg.norm(design, axis=1)))
