"""Reproducible sample splits and training-half screening."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import seeding
from .errors import InputError, NumericalError
from .glm import GenotypeMatrix, GlmFamily, marginal_fits

SCREEN_METHODS = ("marginal-z", "external-ranking")


@dataclass(frozen=True)
class SplitPlan:
    train_indices: np.ndarray
    test_indices: np.ndarray
    fraction: float
    seed: int
    stratified: bool

    @property
    def n_total(self) -> int:
        return self.train_indices.size + self.test_indices.size


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _allocate(sizes: np.ndarray, fraction: float, total: int) -> np.ndarray:
    """Per-stratum training counts summing to ``total`` (largest remainder)."""
    ideal = fraction * sizes
    counts = np.floor(ideal).astype(int)
    short = total - int(counts.sum())
    if short > 0:
        order = np.lexsort((np.arange(sizes.size), -(ideal - counts)))
        counts[order[:short]] += 1
    return np.minimum(counts, sizes)


def make_split_plan(n_total: int, fraction: float = 0.5,
                    strata_labels: Optional[Sequence] = None, seed: int = 0) -> SplitPlan:
    """Uniform random train/test partition of ``range(n_total)``.

    With ``strata_labels`` the training fraction is applied within each
    stratum while the overall training size stays round(fraction * n_total).
    """
    n_total = int(n_total)
    if not 0.0 < fraction < 1.0:
        raise InputError("fraction must lie strictly between 0 and 1")
    if n_total < 4:
        raise InputError("need at least 4 observations to split")
    n_train = _round_half_up(fraction * n_total)
    rng = np.random.default_rng(int(seed))
    if strata_labels is None:
        perm = rng.permutation(n_total)
        train = perm[:n_train]
    else:
        labels = np.asarray(strata_labels)
        if labels.shape[0] != n_total:
            raise InputError("strata_labels length does not match n_total")
        levels, inverse = np.unique(labels, return_inverse=True)
        sizes = np.bincount(inverse, minlength=levels.size)
        if np.any(sizes < 2):
            raise InputError("every stratum needs at least 2 observations")
        counts = _allocate(sizes, fraction, n_train)
        parts = []
        for k in range(levels.size):
            members = np.flatnonzero(inverse == k)
            parts.append(members[rng.permutation(members.size)[:counts[k]]])
        train = np.concatenate(parts)
    mask = np.zeros(n_total, dtype=bool)
    mask[train] = True
    return SplitPlan(np.flatnonzero(mask), np.flatnonzero(~mask), float(fraction),
                     int(seed), strata_labels is not None)


def split_seed(master_seed: int, index: int) -> int:
    return seeding.derive_seed(master_seed, seeding.SPLIT, index)


def repeated_splits(n_total: int, fraction: float, m: int,
                    strata_labels: Optional[Sequence] = None,
                    master_seed: int = 0) -> list:
    """``m`` independent plans; split ``s`` uses ``split_seed(master_seed, s)``."""
    if m < 1:
        raise InputError("m must be at least 1")
    return [make_split_plan(n_total, fraction, strata_labels, split_seed(master_seed, s))
            for s in range(m)]


@dataclass(frozen=True)
class ScreenSet:
    """Selected variant indices (into the full genotype matrix) and weights."""

    selected: np.ndarray
    weights: np.ndarray
    screen_stats: np.ndarray
    method: str

    @property
    def J2(self) -> int:
        return int(self.selected.size)


def screen_and_weight(y_train, X_train, G_train, family: GlmFamily, J2: int,
                      method: str = "marginal-z",
                      ranking: Optional[Sequence[int]] = None) -> ScreenSet:
    """Select up to ``J2`` variants on the training half and attach weights.

    ``marginal-z`` keeps the variants with the largest single-variant Wald
    |z| (ties go to the lower index).  ``external-ranking`` takes variants in
    the caller's order.  Either way the weight of a kept variant is its
    single-variant coefficient estimated on the training half.
    """
    if method not in SCREEN_METHODS:
        raise InputError(f"unknown screening method {method!r}")
    if J2 < 1:
        raise InputError("J2 must be at least 1")
    if not isinstance(G_train, GenotypeMatrix):
        G_train = GenotypeMatrix(np.asarray(G_train, dtype=float), None)
    usable = ~G_train.constant

    if method == "marginal-z":
        cols = np.flatnonzero(usable)
        fits = marginal_fits(y_train, X_train, G_train.values[:, cols], family)
        ok = fits.converged
        if not ok.any():
            raise NumericalError("all marginal fits failed")
        if (~ok).any():
            warnings.warn(f"{int((~ok).sum())} variant(s) excluded after failed marginal fits",
                          stacklevel=2)
        cols, beta, absz = cols[ok], fits.beta[ok], np.abs(fits.z[ok])
        order = np.lexsort((cols, -absz))[:J2]
        keep = np.sort(order)
        return ScreenSet(cols[keep], beta[keep], absz[keep], method)

    if ranking is None:
        raise InputError("external-ranking needs a ranking")
    ranking = np.asarray(ranking, dtype=int)
    if ranking.size and (ranking.min() < 0 or ranking.max() >= G_train.J):
        raise InputError("ranking index out of range")
    _, first = np.unique(ranking, return_index=True)
    ranking = ranking[np.sort(first)]
    ranking = ranking[usable[ranking]][:J2]
    if ranking.size == 0:
        raise NumericalError("external ranking selected no usable variant")
    fits = marginal_fits(y_train, X_train, G_train.values[:, ranking], family)
    ok = fits.converged
    if not ok.any():
        raise NumericalError("all marginal fits failed")
    if (~ok).any():
        warnings.warn(f"{int((~ok).sum())} ranked variant(s) dropped after failed fits",
                      stacklevel=2)
    return ScreenSet(ranking[ok], fits.beta[ok], np.abs(fits.z[ok]), method)
