"""Simulated genotypes, effects and phenotypes, plus Monte Carlo SNR diagnostics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import seeding
from .errors import InputError
from .glm import GenotypeMatrix, GlmFamily

SCENARIOS = ("oracle", "all-variants", "screened")


@dataclass
class SimDesign:
    """Design-one simulation settings.

    ``sparsity`` is a count of nonzero effects (int) or a proportion of J
    (float below 1).  Odd counts put the extra signal on the positive side;
    ``sign_imbalance`` records that.
    """

    n_total: int = 200
    J: int = 10
    rho: float = 0.5
    sparsity: Union[int, float] = 0
    effect_size: float = 0.0
    family: str = "binomial"
    intercept: float = 1.0
    scenario: str = "screened"
    seed: int = 0

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise InputError("rho must lie in (-1, 1)")
        if self.n_total < 4 or self.J < 1:
            raise InputError("design needs n_total >= 4 and J >= 1")
        if self.scenario not in SCENARIOS:
            raise InputError(f"unknown scenario {self.scenario!r}")
        GlmFamily.from_name(self.family)
        if self.signal_count > self.J:
            raise InputError("more signals than variants")

    @property
    def signal_count(self) -> int:
        return signal_count(self.J, self.sparsity)

    @property
    def sign_imbalance(self) -> int:
        return self.signal_count % 2

    @property
    def glm_family(self) -> GlmFamily:
        return GlmFamily.from_name(self.family)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["signal_count"] = self.signal_count
        d["sign_imbalance"] = self.sign_imbalance
        return d

    @classmethod
    def from_dict(cls, d) -> "SimDesign":
        d = {k: v for k, v in d.items() if k not in ("signal_count", "sign_imbalance")}
        return cls(**d)


def signal_count(J: int, count_or_proportion) -> int:
    x = count_or_proportion
    if isinstance(x, (float, np.floating)) and 0 < x < 1:
        return int(math.floor(x * J + 0.5))
    k = int(x)
    if k != x or k < 0:
        raise InputError(f"invalid signal count {x!r}")
    return k


def gen_ar1_genotypes(n: int, J: int, rho: float, seed=0) -> GenotypeMatrix:
    """Rows drawn from N(0, Sigma) with Sigma_jk = rho^|j-k| via the AR(1) recursion."""
    if not -1.0 < rho < 1.0:
        raise InputError("rho must lie in (-1, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = rng.standard_normal((n, J))
    s = math.sqrt(1.0 - rho * rho)
    for j in range(1, J):
        x[:, j] *= s
        x[:, j] += rho * x[:, j - 1]
    return GenotypeMatrix(x, None, standardized=False)


def place_signals(J: int, count_or_proportion, effect_size: float, seed=0) -> np.ndarray:
    """Effect vector with uniformly placed nonzero entries, half of each sign."""
    k = signal_count(J, count_or_proportion)
    if k > J:
        raise InputError("more signals than variants")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    beta = np.zeros(J)
    if k == 0:
        return beta
    idx = rng.choice(J, size=k, replace=False)
    signs = np.array([1.0] * ((k + 1) // 2) + [-1.0] * (k // 2))
    beta[idx] = rng.permutation(signs) * effect_size
    return beta


def gen_phenotype(G, beta, family, intercept: float = 0.0, seed=0) -> np.ndarray:
    g = G.values if isinstance(G, GenotypeMatrix) else np.asarray(G, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if g.shape[1] != beta.shape[0]:
        raise InputError("genotype columns do not match effect vector length")
    family = family if isinstance(family, GlmFamily) else GlmFamily.from_name(family)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    eta = intercept + g @ beta
    if family.is_binomial:
        return (rng.random(eta.shape[0]) < family.inverse_link(eta)).astype(float)
    return eta + rng.standard_normal(eta.shape[0])


@dataclass
class SimData:
    G: GenotypeMatrix
    y: np.ndarray
    beta: np.ndarray
    support: np.ndarray


def simulate_dataset(design: SimDesign, *keys) -> SimData:
    """One dataset; randomness keyed by (design.seed, keys).

    ``support`` holds the signal positions even when the effect size is 0.
    """
    G = gen_ar1_genotypes(design.n_total, design.J, design.rho,
                          seeding.make_rng(design.seed, seeding.GENOTYPE, *keys))
    pattern = place_signals(design.J, design.sparsity, 1.0,
                            seeding.make_rng(design.seed, seeding.SIGNAL, *keys))
    beta = pattern * design.effect_size
    y = gen_phenotype(G, beta, design.glm_family, design.intercept,
                      seeding.make_rng(design.seed, seeding.PHENOTYPE, *keys))
    return SimData(G, y, beta, np.flatnonzero(pattern))


# ---------------------------------------------------------------------------
# Signal-to-noise diagnostics


@dataclass
class SnrEstimate:
    mu_n_beta: float
    sigma_n1: float
    snr_n: float
    mu_2n_beta: float
    sigma_2n1: float
    snr_2n: float
    mc_reps: int
    mc_se: dict = field(default_factory=dict)
    local_alternative_ratio: float = float("nan")
    centered: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _moments(G, h, v, idx, r):
    """Batch moments for one variant subset."""
    g = G[:, idx]
    n = g.shape[0]
    delta = (h @ g) / n
    h2 = h * h
    xi = (g.T * h2) @ g / n
    sig = (g.T * v) @ g / n
    gram = g.T @ g / n
    return delta, xi, sig, gram


def _snr_parts(delta, xi, sig, gram, r, n):
    rr = np.outer(r, r)
    tr_rxi = float(np.sum(r * np.diag(xi)))
    mu = tr_rxi + (n - 1) * float(np.sum(r * delta * delta))
    s0 = 2.0 * float(np.sum(rr * sig * sig))
    sxi = 2.0 * float(np.sum(rr * xi * xi))
    cross = 4.0 * float(np.sum(rr * sig * xi))
    sigma = math.sqrt(max(s0 + sxi + cross, 0.0))
    rd = r * delta
    tr_rg2 = float(np.sum(rr * gram * gram))
    lar = float(rd @ gram @ rd) / (tr_rg2 / n) if tr_rg2 > 0 else float("nan")
    return mu, sigma, (mu / sigma if sigma > 0 else 0.0), lar


def estimate_snr(design: SimDesign, n_eff: int, J2_set: Optional[Sequence[int]] = None,
                 R_weights=None, mc_reps: int = 10 ** 4, seed: int = 0,
                 beta=None, centered: bool = False, batches: int = 10) -> SnrEstimate:
    """Monte Carlo SNR of the split-sample weighted test and the full-sample test.

    Population moments are averaged over ``mc_reps`` fresh genotype draws.
    E(g_j g_k eps^2) uses the conditional variance of y given G.  With
    ``centered`` the mean function is measured from its value at beta = 0
    (relevant for non-identity links); otherwise it is used raw.
    ``mc_se`` holds batch-means standard errors.
    """
    if mc_reps < 10 ** 4:
        raise InputError("mc_reps must be at least 1e4")
    family = design.glm_family
    if beta is None:
        beta = place_signals(design.J, design.sparsity, design.effect_size,
                             seeding.make_rng(design.seed, seeding.SIGNAL))
    beta = np.asarray(beta, dtype=float)
    idx = np.arange(design.J) if J2_set is None else np.asarray(J2_set, dtype=int)
    r = np.ones(idx.size) if R_weights is None else np.asarray(R_weights, dtype=float)
    if r.size != idx.size:
        raise InputError("R_weights length must match J2_set")
    full = np.arange(design.J)
    n2 = design.n_total

    sizes = np.full(batches, mc_reps // batches)
    sizes[: mc_reps % batches] += 1
    parts = {"split": [], "full": []}
    for b, size in enumerate(sizes):
        rng = seeding.make_rng(seed, seeding.SNR, b)
        G = gen_ar1_genotypes(int(size), design.J, design.rho, rng).values
        lin = G @ beta
        mu_i = family.inverse_link(design.intercept + lin)
        if centered:
            h = family.inverse_link(design.intercept + lin) - family.inverse_link(
                np.full_like(lin, design.intercept))
        else:
            h = family.inverse_link(lin)
        v = family.variance(mu_i)
        parts["split"].append(_moments(G, h, v, idx, r))
        parts["full"].append(_moments(G, h, v, full, None))

    weights = sizes / sizes.sum()

    def pooled(key):
        return [sum(w * p[k] for w, p in zip(weights, parts[key])) for k in range(4)]

    mu_n, sg_n, snr_n, lar = _snr_parts(*pooled("split"), r, n_eff)
    ones = np.ones(design.J)
    mu_2n, sg_2n, snr_2n, _ = _snr_parts(*pooled("full"), ones, n2)
    per = {"split": [_snr_parts(*p, r, n_eff) for p in parts["split"]],
           "full": [_snr_parts(*p, ones, n2) for p in parts["full"]]}
    se = {}
    for key, names in (("split", ("mu_n_beta", "sigma_n1", "snr_n")),
                       ("full", ("mu_2n_beta", "sigma_2n1", "snr_2n"))):
        arr = np.array([x[:3] for x in per[key]])
        for k, name in enumerate(names):
            se[name] = float(arr[:, k].std(ddof=1) / math.sqrt(batches))
    return SnrEstimate(mu_n, sg_n, snr_n, mu_2n, sg_2n, snr_2n, int(mc_reps), se, lar,
                       centered)
