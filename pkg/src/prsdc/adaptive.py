"""Per-split statistics and their Cauchy combinations.

Within a split the p-values of T_1 and of T_gamma for every gamma are
combined by the Cauchy method; across the m splits the per-split combined
p-values are combined again.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from .errors import InputError, PrsdcError
from .glm import (
    GenotypeMatrix,
    GlmFamily,
    NullModelFit,
    ScoreVector,
    SigmaS,
    estimate_score_covariance,
    fit_null_glm,
    score_vector,
    standardize,
)
from .quadform import (
    DEFAULT_ACCURACY,
    P_FLOOR,
    WeightMatrixR,
    check_gamma,
    davies_pvalue,
    eigenvalues_weighted,
)
from .splitting import ScreenSet, SplitPlan, repeated_splits, screen_and_weight

logger = logging.getLogger(__name__)

DEFAULT_GAMMAS = (2, 4, 6, 42)
ONE_MINUS = 1.0 - 1e-16  # rounds to the largest double below 1
SMALL_P = 1e-8


# ---------------------------------------------------------------------------
# Cauchy combination


def cauchy_transform(p) -> np.ndarray:
    """tan((0.5 - p) pi), evaluated as 1 / (p pi) for tiny p."""
    p = np.asarray(p, dtype=float)
    p = np.where(p >= 1.0, ONE_MINUS, p)
    with np.errstate(divide="ignore"):
        small = 1.0 / (p * math.pi)
    return np.where(p < SMALL_P, small, np.tan((0.5 - p) * math.pi))


def cauchy_pvalue(t: float) -> float:
    """Upper tail of the standard Cauchy at ``t``, clamped to (0, 1]."""
    t = float(t)
    if t > 1.0:
        p = math.atan(1.0 / t) / math.pi
    else:
        p = 0.5 - math.atan(t) / math.pi
    return min(1.0, max(P_FLOOR, p))


def cauchy_statistic(pvals) -> float:
    p = _check_pvalues(pvals)
    return float(np.mean(cauchy_transform(p)))


def cauchy_combine(pvals) -> float:
    """Combined p-value of the average Cauchy-transformed p-values."""
    return cauchy_pvalue(cauchy_statistic(pvals))


def _check_pvalues(pvals):
    p = np.asarray(list(pvals) if not isinstance(pvals, np.ndarray) else pvals, dtype=float)
    if p.size == 0:
        raise InputError("need at least one p-value")
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p > 1.0):
        raise InputError("p-values must lie in (0, 1]")
    return p


# ---------------------------------------------------------------------------
# Single-split statistics


def t1_from_parts(fit: NullModelFit, G_sel: np.ndarray, weights, sigma: SigmaS):
    """Score statistic of the risk-score model and its chi-square(1) p-value.

    Returns (t1, p1, zero_weights).  t1 is the raw score sum_i e_i G*_i; its
    null variance is estimated as n w^T Sigma w.
    """
    w = np.asarray(weights, dtype=float)
    if not np.any(w != 0):
        return 0.0, 1.0, True
    prs = G_sel @ w
    t1 = float(fit.residuals @ prs)
    var = fit.n * sigma.quad(w)
    if not var > 0 or t1 == 0.0:
        return t1, 1.0, False
    p1 = float(stats.chi2.sf(t1 * t1 / var, 1))
    return t1, max(P_FLOOR, p1), False


def t1_test(y_test, X_test, G_test, screen: ScreenSet, family: GlmFamily,
            delta: Optional[float] = None):
    """T_1 on the testing half for a screen computed on the training half.

    ``G_test`` has all variants as columns; ``screen.selected`` indexes it.
    """
    g = G_test.values if isinstance(G_test, GenotypeMatrix) else np.asarray(G_test, float)
    fit = fit_null_glm(y_test, X_test, family)
    G_sel = g[:, screen.selected]
    sigma = estimate_score_covariance(fit, G_sel, delta)
    t1, p1, _ = t1_from_parts(fit, G_sel, screen.weights, sigma)
    return t1, p1


def t_gamma_test(score: ScoreVector, sigma: SigmaS, screen: Union[ScreenSet, np.ndarray],
                 gamma: int, accuracy: float = DEFAULT_ACCURACY):
    """T_gamma = n sum_j r_j S_j^2 and its weighted chi-square p-value.

    Returns (statistic, p-value, method) where method is the tail routine
    that produced the p-value.
    """
    gamma = check_gamma(gamma)
    w = screen.weights if isinstance(screen, ScreenSet) else np.asarray(screen, float)
    R = WeightMatrixR.from_weights(w, gamma)
    s = score.s
    if R.all_zero:
        return 0.0, 1.0, "none"
    T = float(score.n * np.sum(R.r * s * s))
    if T <= 0.0:
        return 0.0, 1.0, "none"
    dist = eigenvalues_weighted(sigma, R)
    if dist.positive().size == 0:
        return T, 1.0, "none"
    tail = davies_pvalue(dist, T, accuracy)
    return T, tail.p, tail.method


@dataclass
class GammaStat:
    statistic: float
    p: float
    method: str


@dataclass
class SplitTestResult:
    gamma_stats: dict
    t1_stat: float
    p1: float
    p_c: float
    split_seed: int
    J2_effective: int
    flags: list = field(default_factory=list)

    @property
    def component_pvalues(self) -> list:
        return [self.p1] + [g.p for g in self.gamma_stats.values()]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gamma_stats"] = {str(k): asdict(v) for k, v in self.gamma_stats.items()}
        return d

    @classmethod
    def from_dict(cls, d) -> "SplitTestResult":
        gs = {int(k): GammaStat(**v) for k, v in d["gamma_stats"].items()}
        return cls(gs, d["t1_stat"], d["p1"], d["p_c"], d["split_seed"],
                   d["J2_effective"], list(d.get("flags", [])))


def tc_test(y_test, X_test, G_test, screen: ScreenSet, family: GlmFamily,
            gammas: Sequence[int] = DEFAULT_GAMMAS, split_seed: int = 0,
            null_fit: Optional[NullModelFit] = None, delta: Optional[float] = None,
            accuracy: float = DEFAULT_ACCURACY) -> SplitTestResult:
    """T_1 and every T_gamma on one testing half, Cauchy-combined.

    ``null_fit`` overrides the testing-half refit (nuisance parameters
    estimated elsewhere).
    """
    if not len(gammas):
        raise InputError("gamma set must be non-empty")
    gammas = [check_gamma(g) for g in gammas]
    g = G_test.values if isinstance(G_test, GenotypeMatrix) else np.asarray(G_test, float)
    fit = null_fit if null_fit is not None else fit_null_glm(y_test, X_test, family)
    G_sel = g[:, screen.selected]
    score = score_vector(fit, G_sel)
    sigma = estimate_score_covariance(fit, G_sel, delta)
    flags = []
    t1, p1, zero = t1_from_parts(fit, G_sel, screen.weights, sigma)
    if zero:
        flags.append("zero-weights")
    gamma_stats = {}
    for gm in gammas:
        T, p, method = t_gamma_test(score, sigma, screen, gm, accuracy)
        if method == "imhof":
            flags.append(f"imhof-fallback:{gm}")
        gamma_stats[gm] = GammaStat(T, p, method)
    p_c = cauchy_combine([p1] + [gs.p for gs in gamma_stats.values()])
    return SplitTestResult(gamma_stats, t1, p1, p_c, int(split_seed), screen.J2, flags)


# ---------------------------------------------------------------------------
# Repeated splitting


J2_RULES = ("min-J-ntest", "all")


@dataclass
class TestConfig:
    """Settings for the full double-Cauchy test.

    ``J2`` is an integer or one of the rules ``"min-J-ntest"`` (the default:
    as many variants as testing-half observations) and ``"all"``.
    ``screener`` is ``"marginal-z"`` or ``"external-ranking"`` (then
    ``ranking`` lists variant indices in priority order).  ``nuisance``
    selects where covariate effects and dispersion are estimated:
    ``"refit"`` on the testing half, ``"train"`` on the training half.
    ``stratify=None`` stratifies splits on the outcome for binomial data.
    """

    __test__ = False

    family: str = "binomial"
    gammas: tuple = DEFAULT_GAMMAS
    m: int = 10
    fraction: float = 0.5
    J2: Union[int, str] = "min-J-ntest"
    screener: str = "marginal-z"
    ranking: Optional[list] = None
    master_seed: int = 0
    stratify: Optional[bool] = None
    nuisance: str = "refit"
    delta: Optional[float] = None
    accuracy: float = DEFAULT_ACCURACY

    def __post_init__(self):
        self.gammas = tuple(check_gamma(g) for g in self.gammas)
        if not self.gammas:
            raise InputError("gamma set must be non-empty")
        GlmFamily.from_name(self.family)
        if self.m < 1:
            raise InputError("m must be at least 1")
        if not 0 < self.fraction < 1:
            raise InputError("fraction must lie in (0, 1)")
        if isinstance(self.J2, str):
            if self.J2 not in J2_RULES:
                raise InputError(f"unknown J2 rule {self.J2!r}")
        elif int(self.J2) < 1:
            raise InputError("J2 must be at least 1")
        if self.nuisance not in ("refit", "train"):
            raise InputError("nuisance must be 'refit' or 'train'")
        if self.screener == "external-ranking" and self.ranking is None:
            raise InputError("external-ranking screener needs a ranking")
        if self.ranking is not None:
            self.ranking = [int(i) for i in self.ranking]

    @property
    def glm_family(self) -> GlmFamily:
        return GlmFamily.from_name(self.family)

    def resolve_J2(self, J_usable: int, n_test: int) -> int:
        if self.J2 == "all":
            return J_usable
        if self.J2 == "min-J-ntest":
            return min(J_usable, n_test)
        return int(self.J2)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gammas"] = list(self.gammas)
        return d


@dataclass
class TestReport:
    __test__ = False

    per_split: list
    t_dc: float
    p_dc: float
    config: dict

    def to_dict(self) -> dict:
        return {"per_split": [s.to_dict() for s in self.per_split], "t_dc": self.t_dc,
                "p_dc": self.p_dc, "config": self.config}

    @classmethod
    def from_dict(cls, d) -> "TestReport":
        return cls([SplitTestResult.from_dict(s) for s in d["per_split"]], d["t_dc"],
                   d["p_dc"], d["config"])


def run_split(y, X, G: GenotypeMatrix, plan: SplitPlan, config: TestConfig,
              family: Optional[GlmFamily] = None) -> SplitTestResult:
    """Screen on the training half of ``plan`` and test on its testing half."""
    family = family or config.glm_family
    tr, te = plan.train_indices, plan.test_indices
    Xtr = None if X is None else X[tr]
    Xte = None if X is None else X[te]
    J2 = config.resolve_J2(G.usable.size, te.size)
    screen = screen_and_weight(y[tr], Xtr, G.rows(tr), family, J2, config.screener,
                               config.ranking)
    null_fit = None
    if config.nuisance == "train":
        null_fit = fit_null_glm(y[tr], Xtr, family).transfer(y[te], Xte)
    return tc_test(y[te], Xte, G.values[te], screen, family, config.gammas, plan.seed,
                   null_fit, config.delta, config.accuracy)


def _failed_split(plan: SplitPlan, exc: Exception, gammas) -> SplitTestResult:
    gs = {g: GammaStat(0.0, 1.0, "none") for g in gammas}
    return SplitTestResult(gs, 0.0, 1.0, 1.0, plan.seed, 0,
                           [f"failed: {type(exc).__name__}: {exc}"])


def prepare_genotypes(G) -> GenotypeMatrix:
    if isinstance(G, GenotypeMatrix):
        return G if G.standardized else standardize(G.values, G.variant_ids)
    return standardize(G)


def tdc_test(y, X, G, config: Optional[TestConfig] = None, **overrides) -> TestReport:
    """Double Cauchy combination test over ``config.m`` random splits.

    Splits that fail (screening or fitting errors) contribute p_c = 1 and are
    flagged in the report rather than dropped.
    """
    if config is None:
        config = TestConfig(**overrides)
    elif overrides:
        config = TestConfig(**{**config.to_dict(), **overrides})
    family = config.glm_family
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 20:
        raise InputError("tdc_test needs at least 20 observations")
    G = prepare_genotypes(G)
    if G.n != n:
        raise InputError(f"genotype rows ({G.n}) do not match phenotype length ({n})")
    if X is not None:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != n:
            raise InputError("covariate rows do not match phenotype length")
    stratify = family.is_binomial if config.stratify is None else config.stratify
    plans = repeated_splits(n, config.fraction, config.m, y if stratify else None,
                            config.master_seed)
    results = []
    for plan in plans:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                results.append(run_split(y, X, G, plan, config, family))
        except PrsdcError as exc:
            logger.warning("split with seed %d failed: %s", plan.seed, exc)
            results.append(_failed_split(plan, exc, config.gammas))
    return combine_splits(results, config)


def combine_splits(results: Sequence[SplitTestResult], config: TestConfig) -> TestReport:
    pcs = [r.p_c for r in results]
    t_dc = cauchy_statistic(pcs)
    return TestReport(list(results), t_dc, cauchy_pvalue(t_dc), config.to_dict())
