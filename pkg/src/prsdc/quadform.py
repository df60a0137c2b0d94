"""Tail probabilities of weighted sums of independent chi-square(1) variables.

The null law of n S^T R S is sum_j lambda_j chi2_1 with lambda the eigenvalues
of R^{1/2} Sigma R^{1/2}.  Davies' inversion is the default route, Imhof's
integral the fallback, and the normal approximation and Monte Carlo estimate
are kept for diagnostics and testing.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, stats

from . import _davies
from .errors import InputError, NumericalError, QuadratureError
from .glm import SigmaS

P_FLOOR = 1e-300
EIGEN_TRUNCATION = 1e-12
DEFAULT_ACCURACY = 1e-9
DAVIES_TERM_LIMIT = 1_000_000


@dataclass(frozen=True)
class WeightMatrixR:
    """Diagonal weights r_j = |w_j|^(gamma-2), rescaled so that max r_j = 1.

    ``log_scale`` is the log of the factor divided out; the unnormalized
    weights are ``r * exp(log_scale)``.
    """

    r: np.ndarray
    gamma: int
    log_scale: float

    @property
    def normalization_constant(self) -> float:
        return math.exp(self.log_scale) if self.log_scale < 700 else math.inf

    @property
    def all_zero(self) -> bool:
        return not np.any(self.r > 0)

    @classmethod
    def from_weights(cls, w, gamma: int) -> "WeightMatrixR":
        gamma = check_gamma(gamma)
        w = np.asarray(w, dtype=float)
        if gamma == 2:
            return cls(np.ones_like(w), 2, 0.0)
        with np.errstate(divide="ignore"):
            logr = (gamma - 2) * np.log(np.abs(w))
        top = np.max(logr) if logr.size else -np.inf
        if not np.isfinite(top):
            return cls(np.zeros_like(w), gamma, 0.0)
        return cls(np.exp(logr - top), gamma, float(top))


def check_gamma(gamma) -> int:
    g = int(gamma)
    if g != gamma or g < 2 or g % 2:
        raise InputError(f"gamma must be an even integer >= 2, got {gamma!r}")
    return g


@dataclass(frozen=True)
class QuadFormDist:
    """Eigenvalues (descending, non-negative) defining the null law."""

    lambdas: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.sum(self.lambdas))

    @property
    def trace_sq(self) -> float:
        return float(np.sum(self.lambdas ** 2))

    @property
    def rho(self) -> np.ndarray:
        """Eigenvalues scaled by sqrt(sum lambda^2)."""
        return self.lambdas / math.sqrt(self.trace_sq)

    @classmethod
    def from_eigenvalues(cls, lam) -> "QuadFormDist":
        lam = np.sort(np.asarray(lam, dtype=float).ravel())[::-1]
        if lam.size and lam[0] > 0:
            lam = np.where(lam < EIGEN_TRUNCATION * lam[0], 0.0, lam)
        else:
            lam = np.zeros_like(lam)
        return cls(lam)

    def positive(self) -> np.ndarray:
        return self.lambdas[self.lambdas > 0]


def eigenvalues_weighted(sigma, R) -> QuadFormDist:
    """Spectrum of R^{1/2} Sigma R^{1/2}.

    ``sigma`` may be a :class:`SigmaS` or a plain PSD matrix; ``R`` a
    :class:`WeightMatrixR` or a vector of diagonal weights.  For a rank
    deficient SigmaS the nonzero spectrum comes from the n x n matrix
    B R B^T instead.
    """
    r = R.r if isinstance(R, WeightMatrixR) else np.asarray(R, dtype=float)
    if np.any(r < 0):
        raise InputError("weights must be non-negative")
    sr = np.sqrt(r)
    try:
        if isinstance(sigma, SigmaS):
            if sigma.dim != r.size:
                raise InputError("weight and covariance dimensions differ")
            if sigma.low_rank:
                keep = r > 0
                F = sigma.factor * sr if keep.all() else sigma.factor[:, keep] * sr[keep]
                lam = np.linalg.eigvalsh(F @ F.T)
            else:
                lam = np.linalg.eigvalsh(sr[:, None] * sigma.matrix * sr[None, :])
        else:
            m = np.asarray(sigma, dtype=float)
            if m.shape != (r.size, r.size):
                raise InputError("weight and covariance dimensions differ")
            lam = np.linalg.eigvalsh(sr[:, None] * m * sr[None, :])
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    return QuadFormDist.from_eigenvalues(lam)


@dataclass(frozen=True)
class TailProbability:
    p: float
    error_bound: float
    method: str
    fault: int = 0


def _clamp(p):
    return float(min(1.0, max(P_FLOOR, p)))


def _prepare(dist, q):
    lam = dist.positive() if isinstance(dist, QuadFormDist) else np.asarray(dist, float)
    lam = lam[lam > 0]
    if lam.size == 0:
        raise InputError("quadratic form needs at least one positive eigenvalue")
    # scale invariance: work with lambda_max = 1
    top = lam.max()
    return np.ascontiguousarray(lam / top), float(q) / top


def _easy_tail(lam, qs, accuracy, method):
    """Closed form for one eigenvalue; bound when q sits far below the mass.

    Q <= q forces every lambda_j chi2_j <= q, so P(Q <= q) is at most the
    product of the one-term CDFs.
    """
    if lam.size == 1:
        return TailProbability(_clamp(float(stats.chi2.sf(qs / lam[0], 1))), 0.0, method)
    log_cdf = float(np.sum(stats.chi2.logcdf(qs / lam, 1)))
    if log_cdf < math.log(accuracy):
        bound = math.exp(log_cdf)
        return TailProbability(_clamp(1.0 - 0.5 * bound), 0.5 * bound, method)
    return None


def davies_pvalue(dist, q: float, accuracy: float = DEFAULT_ACCURACY,
                  lim: int = DAVIES_TERM_LIMIT) -> TailProbability:
    """P(sum_j lambda_j chi2_1 > q) by Davies' method, Imhof on fault."""
    if not 0 < accuracy <= 1e-2:
        raise InputError("accuracy must lie in (0, 1e-2]")
    lam, qs = _prepare(dist, q)
    if qs <= 0:
        return TailProbability(1.0, 0.0, "davies")
    easy = _easy_tail(lam, qs, accuracy, "davies")
    if easy is not None:
        return easy
    cdf, fault, _, _ = _davies.qf(lam, qs, int(lim), float(accuracy))
    if fault in (1, 3, 4) or not np.isfinite(cdf):
        res = imhof_pvalue(lam, qs, accuracy)
        return TailProbability(res.p, res.error_bound, "imhof", int(fault))
    return TailProbability(_clamp(1.0 - cdf), float(accuracy), "davies", int(fault))


def _imhof_parts(lam, q):
    half_q = 0.5 * q

    def full(u):
        if u == 0.0:
            return 0.5 * (lam.sum() - q)
        theta = 0.5 * np.sum(np.arctan(lam * u)) - half_q * u
        logrho = 0.25 * np.sum(np.log1p((lam * u) ** 2))
        return math.sin(theta) * math.exp(-logrho) / u

    def amp_sin(u):
        phi = 0.5 * np.sum(np.arctan(lam * u))
        return math.sin(phi) * math.exp(-0.25 * np.sum(np.log1p((lam * u) ** 2))) / u

    def amp_cos(u):
        phi = 0.5 * np.sum(np.arctan(lam * u))
        return math.cos(phi) * math.exp(-0.25 * np.sum(np.log1p((lam * u) ** 2))) / u

    return full, amp_sin, amp_cos


def imhof_pvalue(dist, q: float, accuracy: float = DEFAULT_ACCURACY) -> TailProbability:
    """P(sum_j lambda_j chi2_1 > q) from Imhof's inversion integral.

    The integrand sin(phi(u) - q u / 2) / (u rho(u)) is split at a few
    oscillation periods; the head is integrated adaptively and the infinite
    tail as two Fourier integrals with smooth amplitudes, so no truncation
    point is needed.
    """
    if not 0 < accuracy <= 1e-2:
        raise InputError("accuracy must lie in (0, 1e-2]")
    lam, qs = _prepare(dist, q)
    if qs <= 0:
        return TailProbability(1.0, 0.0, "imhof")
    easy = _easy_tail(lam, qs, accuracy, "imhof")
    if easy is not None:
        return easy
    full, amp_sin, amp_cos = _imhof_parts(lam, qs)
    omega = 0.5 * qs
    split = 4.0 * math.pi / omega
    eps = accuracy * math.pi / 8.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            head, e0 = integrate.quad(full, 0.0, split, epsabs=eps, epsrel=0.0, limit=2000)
            t1, e1 = integrate.quad(amp_sin, split, np.inf, weight="cos", wvar=omega,
                                    epsabs=eps, limlst=200, limit=2000)
            t2, e2 = integrate.quad(amp_cos, split, np.inf, weight="sin", wvar=omega,
                                    epsabs=eps, limlst=200, limit=2000)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"Imhof quadrature did not converge: {exc}") from exc
    p = 0.5 + (head + t1 - t2) / math.pi
    return TailProbability(_clamp(p), (e0 + e1 + e2) / math.pi, "imhof")


def normal_approx_pvalue(dist: QuadFormDist, q: float) -> float:
    """Upper normal tail of (q - sum lambda) / sqrt(2 sum lambda^2).

    Diagnostic only: inaccurate for moderate numbers of eigenvalues.
    """
    lam = dist.lambdas if isinstance(dist, QuadFormDist) else np.asarray(dist, float)
    s2 = float(np.sum(lam ** 2))
    if s2 <= 0:
        raise InputError("normal approximation needs sum lambda^2 > 0")
    return float(stats.norm.sf((q - float(np.sum(lam))) / math.sqrt(2.0 * s2)))


def mc_quadform_pvalue(dist, q: float, n_draws: int = 10 ** 6, seed: Optional[int] = 0,
                       chunk: int = 2 ** 22):
    """Monte Carlo tail frequency of sum_j lambda_j z_j^2; returns (p, se)."""
    if n_draws < 10 ** 4:
        raise InputError("n_draws must be at least 1e4")
    lam = dist.lambdas if isinstance(dist, QuadFormDist) else np.asarray(dist, float)
    lam = lam[lam > 0]
    rng = np.random.default_rng(seed)
    rows = max(1, chunk // max(1, lam.size))
    hits = 0
    done = 0
    while done < n_draws:
        k = min(rows, n_draws - done)
        z = rng.standard_normal((k, lam.size))
        hits += int(np.count_nonzero((z * z) @ lam > q))
        done += k
    p = hits / n_draws
    return p, math.sqrt(p * (1 - p) / n_draws)
