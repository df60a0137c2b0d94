"""Null GLM fitting, score vectors and the score covariance.

Only the two canonical families used by the test are supported:
gaussian with identity link and binomial with logit link.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy import special

from . import _irls
from .errors import (
    ConvergenceError,
    DegenerateGenotypeError,
    InputError,
    SeparationError,
)

MAX_ITER = 100
COEF_TOL = 1e-10
SEPARATION_ETA = 30.0
SHRINKAGE_LADDER = (0.0, 0.01, 0.05, 0.1, 0.2, 0.5)


@dataclass(frozen=True)
class GlmFamily:
    """An exponential family paired with its canonical link."""

    kind: str

    def __post_init__(self):
        if self.kind not in ("gaussian-identity", "binomial-logit"):
            raise InputError(f"unknown family {self.kind!r}")

    @classmethod
    def from_name(cls, name: str) -> "GlmFamily":
        aliases = {
            "gaussian": "gaussian-identity",
            "gaussian-identity": "gaussian-identity",
            "normal": "gaussian-identity",
            "binomial": "binomial-logit",
            "binomial-logit": "binomial-logit",
            "logistic": "binomial-logit",
            "logit": "binomial-logit",
        }
        try:
            return cls(aliases[str(name).lower()])
        except KeyError:
            raise InputError(f"unknown family {name!r}") from None

    @property
    def is_binomial(self) -> bool:
        return self.kind == "binomial-logit"

    @property
    def fixed_dispersion(self) -> bool:
        return self.is_binomial

    def link(self, mu):
        if self.is_binomial:
            return special.logit(mu)
        return np.asarray(mu, dtype=float)

    def inverse_link(self, eta):
        if self.is_binomial:
            return special.expit(eta)
        return np.asarray(eta, dtype=float)

    def mu_eta(self, mu):
        """Derivative d mu / d eta expressed through mu."""
        if self.is_binomial:
            return mu * (1.0 - mu)
        return np.ones_like(mu)

    def variance(self, mu):
        if self.is_binomial:
            return mu * (1.0 - mu)
        return np.ones_like(mu)

    def deviance(self, y, mu, axis=None):
        if self.is_binomial:
            mu = np.clip(mu, 1e-300, 1.0 - 1e-16)
            return -2.0 * np.sum(special.xlogy(y, mu) + special.xlog1py(1.0 - y, -mu), axis=axis)
        return np.sum((y - mu) ** 2, axis=axis)

    def __str__(self):
        return self.kind


GAUSSIAN = GlmFamily("gaussian-identity")
BINOMIAL = GlmFamily("binomial-logit")


@dataclass
class GenotypeMatrix:
    """n x J matrix of variant values, optionally standardized column-wise.

    ``constant`` flags zero-variance columns; those carry no information and
    are kept out of variant selection.
    """

    values: np.ndarray
    variant_ids: list
    standardized: bool = False
    column_means: Optional[np.ndarray] = None
    column_sds: Optional[np.ndarray] = None
    constant: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise InputError("genotype matrix must be two-dimensional")
        if self.variant_ids is None:
            self.variant_ids = [f"v{j + 1}" for j in range(self.values.shape[1])]
        self.variant_ids = [str(v) for v in self.variant_ids]
        if len(self.variant_ids) != self.values.shape[1]:
            raise InputError("variant_ids length does not match column count")
        if self.constant is None:
            self.constant = np.zeros(self.values.shape[1], dtype=bool)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def J(self) -> int:
        return self.values.shape[1]

    @property
    def usable(self) -> np.ndarray:
        """Indices of non-constant columns."""
        return np.flatnonzero(~self.constant)

    def rows(self, idx) -> "GenotypeMatrix":
        return GenotypeMatrix(self.values[idx], self.variant_ids, self.standardized,
                              self.column_means, self.column_sds, self.constant)

    def columns(self, idx) -> "GenotypeMatrix":
        idx = np.asarray(idx, dtype=int)
        pick = (lambda a: None if a is None else a[idx])
        return GenotypeMatrix(self.values[:, idx], [self.variant_ids[j] for j in idx],
                              self.standardized, pick(self.column_means),
                              pick(self.column_sds), self.constant[idx])


def standardize(raw, variant_ids: Optional[Sequence[str]] = None) -> GenotypeMatrix:
    """Center each column and scale it to unit sample variance (ddof=1).

    Constant columns are centered, flagged and left unscaled.
    """
    values = np.array(raw, dtype=float, copy=True)
    if values.ndim != 2:
        raise InputError("genotype matrix must be two-dimensional")
    n = values.shape[0]
    if n < 2:
        raise InputError("standardize needs at least two rows")
    if not np.all(np.isfinite(values)):
        raise InputError("genotype matrix contains missing or non-finite values")
    means = values.mean(axis=0)
    values -= means
    sds = values.std(axis=0, ddof=1)
    constant = sds <= 1e-12 * np.maximum(1.0, np.abs(means))
    if constant.all():
        raise DegenerateGenotypeError("degenerate genotype matrix")
    if constant.any():
        warnings.warn(f"{int(constant.sum())} constant genotype column(s) excluded",
                      stacklevel=2)
        values[:, constant] = 0.0
    scale = np.where(constant, 1.0, sds)
    values /= scale
    return GenotypeMatrix(values, variant_ids, True, means, np.where(constant, 0.0, sds),
                          constant)


@dataclass
class NullModelFit:
    family: GlmFamily
    beta_x: np.ndarray
    fitted_means: np.ndarray
    residuals: np.ndarray
    dispersion: float
    converged: bool
    iterations: int

    @property
    def n(self) -> int:
        return self.fitted_means.shape[0]

    @property
    def working_variance(self) -> np.ndarray:
        """a_i(phi) * nu(mu_i) for every observation."""
        return self.dispersion * self.family.variance(self.fitted_means)

    def transfer(self, y, X) -> "NullModelFit":
        """Carry coefficients and dispersion over to new observations.

        Used when nuisance parameters are estimated on the training half and
        treated as known on the testing half.
        """
        y = np.asarray(y, dtype=float)
        X = _as_design(X, y.shape[0])
        mu = self.family.inverse_link(X @ self.beta_x)
        return NullModelFit(self.family, self.beta_x, mu, y - mu, self.dispersion,
                            self.converged, 0)


def _as_design(X, n):
    if X is None:
        return np.ones((n, 1))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise InputError(f"covariate rows ({X.shape[0]}) do not match n ({n})")
    return X


def _check_response(y, family):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise InputError("response must be a vector")
    if not np.all(np.isfinite(y)):
        raise InputError("response contains missing or non-finite values")
    if family.is_binomial and not np.all((y == 0) | (y == 1)):
        raise InputError("binomial response must be coded 0/1")
    return y


def fit_null_glm(y, X=None, family: GlmFamily = GAUSSIAN, max_iter: int = MAX_ITER,
                 tol: float = COEF_TOL) -> NullModelFit:
    """Fit the covariate-only model by IRLS with step-halving.

    ``X`` should already include the intercept column; ``None`` means an
    intercept-only model.
    """
    y = _check_response(y, family)
    n = y.shape[0]
    X = _as_design(X, n)
    q = X.shape[1]
    if n <= q:
        raise InputError(f"need n > q (n={n}, q={q})")
    if np.linalg.matrix_rank(X) < q:
        raise InputError("covariate matrix is not of full column rank")

    if not family.is_binomial:
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        mu = X @ beta
        resid = y - mu
        phi = float(resid @ resid) / (n - q)
        return NullModelFit(family, beta, mu, resid, phi, True, 1)

    mu = (y + 0.5) / 2.0
    eta = family.link(mu)
    beta = np.linalg.lstsq(X, eta, rcond=None)[0]
    eta = X @ beta
    mu = family.inverse_link(eta)
    dev = family.deviance(y, mu)
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(eta)) > SEPARATION_ETA:
            raise SeparationError("separation detected", trace)
        d = family.mu_eta(mu)
        w = d * d / family.variance(mu)
        z = eta + (y - mu) / d
        sw = np.sqrt(w)
        new_beta = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)[0]
        step = new_beta - beta
        for _ in range(30):
            new_eta = X @ (beta + step)
            new_mu = family.inverse_link(new_eta)
            new_dev = family.deviance(y, new_mu)
            if np.isfinite(new_dev) and new_dev <= dev * (1 + 1e-12) + 1e-12:
                break
            step = step / 2.0
        change = float(np.max(np.abs(step)))
        beta, eta, mu, dev = beta + step, new_eta, new_mu, new_dev
        trace.append({"iteration": it, "deviance": float(dev), "max_change": change})
        if change < tol:
            converged = True
            break
    if not converged or not np.all((mu > 0) & (mu < 1)):
        if np.max(np.abs(eta)) > SEPARATION_ETA:
            raise SeparationError("separation detected", trace)
        raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations", trace)
    return NullModelFit(family, beta, mu, y - mu, 1.0, True, it)


@dataclass
class ScoreVector:
    s: np.ndarray
    n: int


def _values(G):
    return G.values if isinstance(G, GenotypeMatrix) else np.asarray(G, dtype=float)


def score_vector(fit: NullModelFit, G) -> ScoreVector:
    """S_j = n^-1 * sum_i (y_i - mu_i) g_ij."""
    g = _values(G)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[0] != fit.n:
        raise InputError(f"genotype rows ({g.shape[0]}) do not match fit ({fit.n})")
    return ScoreVector(g.T @ fit.residuals / fit.n, fit.n)


@dataclass(frozen=True)
class SigmaS:
    """Plug-in score covariance with diagonal shrinkage.

    The unshrunk estimate is held as a factor B (n x J2) with
    ``B.T @ B == n^-1 sum_i v_i G_i G_i^T`` so that rank-deficient cases
    (J2 >= n) never need the J2 x J2 matrix.
    """

    factor: np.ndarray
    shrinkage_delta: float
    min_eigenvalue_estimate: float

    @property
    def dim(self) -> int:
        return self.factor.shape[1]

    @cached_property
    def raw_diagonal(self) -> np.ndarray:
        return np.einsum("ij,ij->j", self.factor, self.factor)

    @cached_property
    def matrix(self) -> np.ndarray:
        m = self.factor.T @ self.factor
        m = 0.5 * (m + m.T)
        if self.shrinkage_delta > 0:
            m *= 1.0 - self.shrinkage_delta
            m[np.diag_indices_from(m)] += self.shrinkage_delta * self.raw_diagonal
        return m

    @property
    def low_rank(self) -> bool:
        """True when the spectrum is cheaper to get from the n x n dual."""
        return self.shrinkage_delta == 0.0 and self.factor.shape[0] < self.factor.shape[1]

    def quad(self, w) -> float:
        """w^T Sigma w without forming the matrix."""
        w = np.asarray(w, dtype=float)
        bw = self.factor @ w
        val = float(bw @ bw)
        if self.shrinkage_delta > 0:
            val = (1 - self.shrinkage_delta) * val + self.shrinkage_delta * float(
                self.raw_diagonal @ (w * w))
        return val


def estimate_score_covariance(fit: NullModelFit, G, delta: Optional[float] = None) -> SigmaS:
    """Moment estimate of the covariance of sqrt(n) S with diagonal shrinkage.

    With ``delta=None`` the smallest ladder value giving a smallest eigenvalue
    of at least 1e-8 * trace / J2 is used.  When J2 >= n the estimate is
    singular for every delta short of 1, so it is returned unshrunk: the
    plug-in is the conditional covariance of the score given the genotypes,
    and the weighted chi-square route only needs it to be PSD.
    """
    g = _values(G)
    if g.ndim == 1:
        g = g[:, None]
    n, J2 = g.shape
    if n != fit.n:
        raise InputError(f"genotype rows ({n}) do not match fit ({fit.n})")
    v = fit.working_variance
    B = g * np.sqrt(v / n)[:, None]
    if delta is not None:
        if not 0.0 <= delta <= 1.0:
            raise InputError("shrinkage delta must lie in [0, 1]")
        sigma = SigmaS(B, float(delta), np.nan)
        if J2 <= 2000 or not sigma.low_rank:
            lam = np.linalg.eigvalsh(sigma.matrix)
            sigma = SigmaS(B, float(delta), float(lam[0]))
        return sigma
    if J2 >= n:
        return SigmaS(B, 0.0, 0.0)
    raw = B.T @ B
    raw = 0.5 * (raw + raw.T)
    d = np.diag(raw).copy()
    floor = 1e-8 * float(d.sum()) / J2
    lam_min = np.nan
    for dl in SHRINKAGE_LADDER:
        m = (1 - dl) * raw
        m[np.diag_indices_from(m)] += dl * d
        lam_min = float(np.linalg.eigvalsh(m)[0])
        if lam_min >= floor:
            return SigmaS(B, dl, lam_min)
    return SigmaS(B, SHRINKAGE_LADDER[-1], lam_min)


@dataclass
class MarginalFits:
    """Per-variant single-variant GLM fits; missing entries are NaN."""

    beta: np.ndarray
    z: np.ndarray
    converged: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.converged is None:
            self.converged = np.isfinite(self.beta) & np.isfinite(self.z)


def marginal_fits(y, X, G, family: GlmFamily, max_iter: int = MAX_ITER,
                  tol: float = COEF_TOL, null_fit: Optional[NullModelFit] = None
                  ) -> MarginalFits:
    """Fit y ~ X + g_j separately for every column j, vectorized over j.

    Returns the coefficient on g_j and its Wald z statistic.  Columns that
    are collinear with X, fail to converge or separate come back as NaN.
    """
    y = _check_response(y, family)
    g = _values(G)
    if g.ndim == 1:
        g = g[:, None]
    n, J = g.shape
    X = _as_design(X, n)
    q = X.shape[1]
    if y.shape[0] != n:
        raise InputError("response and genotype rows differ")
    if n <= q + 1:
        raise InputError("too few observations for marginal fits")
    if null_fit is None:
        null_fit = fit_null_glm(y, X, family)

    if not family.is_binomial:
        return _marginal_ols(y, X, g, null_fit)

    gT = np.ascontiguousarray(g.T)
    beta, var, status = _irls.logit_marginal(y, np.ascontiguousarray(X), gT,
                                             np.asarray(null_fit.beta_x, dtype=float),
                                             int(max_iter), float(tol), SEPARATION_ETA)
    ok = status == 0
    with np.errstate(invalid="ignore"):
        z = np.where(ok, beta / np.sqrt(var), np.nan)
    return MarginalFits(np.where(ok, beta, np.nan), z, ok & np.isfinite(z))


def _marginal_ols(y, X, g, null_fit):
    n, q = X.shape
    # project X out of each column and of y; the slope is then a scalar ratio
    Q, _ = np.linalg.qr(X)
    g_res = g - Q @ (Q.T @ g)
    y_res = null_fit.residuals
    sxx = np.einsum("ij,ij->j", g_res, g_res)
    sgg = np.einsum("ij,ij->j", g, g)
    good = sxx > 1e-10 * np.maximum(sgg, 1e-300)
    safe = np.where(good, sxx, 1.0)
    beta = (g_res.T @ y_res) / safe
    rss = float(y_res @ y_res) - beta * beta * safe
    phi = np.maximum(rss, 0.0) / (n - q - 1)
    se = np.sqrt(phi / safe)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = beta / se
    beta = np.where(good, beta, np.nan)
    z = np.where(good, z, np.nan)
    return MarginalFits(beta, z, good & np.isfinite(z))


def marginal_fit(y, X, g_j, family: GlmFamily):
    """Single-variant fit; returns (beta_j, z_j), NaN when the fit fails."""
    res = marginal_fits(y, X, np.asarray(g_j, dtype=float).reshape(-1, 1), family)
    return float(res.beta[0]), float(res.z[0])
