"""Monte Carlo experiment drivers: size calibration, power, stability, SNR.

Every replicate is a pure task keyed by (master_seed, cell, replicate), so
tables are identical for any worker count.  Results are gathered in task
order by a single writer.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import seeding
from .adaptive import TestConfig, prepare_genotypes, tdc_test
from .errors import InputError
from .simulate import SimDesign, estimate_snr, simulate_dataset

logger = logging.getLogger(__name__)

MODES = ("test", "simulate", "calibrate", "power", "stability", "snr")
# Davies accuracy used inside Monte Carlo loops unless the config says otherwise
SIMULATION_ACCURACY = 1e-6


@dataclass
class ExperimentConfig:
    """Experiment settings, usually read from JSON.

    ``design`` and ``test`` are keyword dictionaries for :class:`SimDesign`
    and :class:`TestConfig`; ``grid`` carries mode-specific axes:

    * calibrate: ``rhos``, ``J_values`` (J2 = J for every cell)
    * power: ``effect_sizes``, ``sparsities``, ``scenarios``, ``screened_J2``
    * stability: ``repetitions`` (K) and ``single_split_m`` (default 1)
    * snr: ``n_eff``, ``mc_reps``, ``subset`` ("all" or "support"), ``gamma``,
      ``centered``
    """

    mode: str = "calibrate"
    design: dict = field(default_factory=dict)
    test: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    replicates: int = 10_000
    alpha_levels: list = field(default_factory=lambda: [0.05, 0.01, 0.001])
    master_seed: int = 0
    workers: int = 1
    output: Optional[str] = None
    format: str = "json"

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"unknown mode {self.mode!r}")
        if int(self.replicates) < 1:
            raise InputError("replicates must be at least 1")
        self.replicates = int(self.replicates)
        for a in self.alpha_levels:
            if not 0 < float(a) <= 1:
                raise InputError(f"alpha {a!r} outside (0, 1]")
        self.alpha_levels = [float(a) for a in self.alpha_levels]
        if int(self.workers) < 1:
            raise InputError("workers must be at least 1")
        if self.format not in ("json", "csv"):
            raise InputError("format must be json or csv")
        known = set(TestConfig.__dataclass_fields__)
        bad = set(self.test) - known
        if bad:
            raise InputError(f"unknown test settings: {sorted(bad)}")
        bad = set(self.design) - set(SimDesign.__dataclass_fields__)
        if bad:
            raise InputError(f"unknown design settings: {sorted(bad)}")

    def test_config(self, **overrides) -> TestConfig:
        kw = {"accuracy": SIMULATION_ACCURACY, **self.test, **overrides}
        return TestConfig(**kw)

    def sim_design(self, **overrides) -> SimDesign:
        kw = {**self.design, **overrides}
        kw.setdefault("seed", self.master_seed)
        return SimDesign(**kw)

    def to_dict(self) -> dict:
        return asdict(self)

    def echo(self) -> dict:
        """Config as stored with results; execution-only settings are left out
        so outputs do not depend on the worker count or destination."""
        d = self.to_dict()
        del d["workers"], d["output"]
        return d

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        d = {k: v for k, v in d.items() if k not in ("schema_version", "kind")}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def run_tasks(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """Map ``fn`` over ``tasks`` in order, optionally in worker processes."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def binomial_se(rate: float, reps: int) -> float:
    return math.sqrt(rate * (1.0 - rate) / reps)


# ---------------------------------------------------------------------------
# Type-I error


@dataclass
class RateCell:
    """Rejection count for one table cell; ``key`` names the cell."""

    key: dict
    alpha: float
    rejections: int
    replicates: int

    @property
    def rate(self) -> float:
        return self.rejections / self.replicates

    @property
    def se(self) -> float:
        return binomial_se(self.rate, self.replicates)


@dataclass
class RateTable:
    """SizeTable / PowerCurve: rejection frequencies with the config echo."""

    kind: str
    cells: list
    config: dict
    pvalues: dict = field(default_factory=dict)

    def find(self, alpha, **key) -> RateCell:
        for c in self.cells:
            if abs(c.alpha - alpha) < 1e-15 and all(c.key.get(k) == v for k, v in key.items()):
                return c
        raise KeyError((alpha, key))

    def rows(self):
        keys = list(self.cells[0].key) if self.cells else []
        header = keys + ["alpha", "rate", "se", "rejections", "replicates"]
        rows = [[c.key[k] for k in keys] + [c.alpha, c.rate, c.se, c.rejections,
                                             c.replicates] for c in self.cells]
        return header, rows

    def to_dict(self) -> dict:
        return {"cells": [{"key": c.key, "alpha": c.alpha, "rejections": c.rejections,
                           "replicates": c.replicates, "rate": c.rate, "se": c.se}
                          for c in self.cells],
                "config": self.config, "pvalues": self.pvalues}

    @classmethod
    def from_dict(cls, kind, d) -> "RateTable":
        cells = [RateCell(dict(c["key"]), c["alpha"], c["rejections"], c["replicates"])
                 for c in d["cells"]]
        return cls(kind, cells, d["config"], d.get("pvalues", {}))


def _size_task(args):
    cfg_dict, rho, J, rep = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    design = cfg.sim_design(rho=rho, J=J, sparsity=0, effect_size=0.0)
    data = simulate_dataset(design, int(rho * 1000), J, rep)
    seed = seeding.derive_seed(cfg.master_seed, seeding.REPLICATE, int(rho * 1000), J, rep)
    test = cfg.test_config(J2="all", master_seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return tdc_test(data.y, None, data.G, test).p_dc


def run_size_experiment(config: ExperimentConfig) -> RateTable:
    """Empirical size of the double Cauchy test under the null design.

    Cells are (rho, J) with J2 = J; the outcome follows the design's family
    with beta = 0.
    """
    rhos = config.grid.get("rhos", [0.2, 0.5, 0.8])
    Js = config.grid.get("J_values", [10, 50])
    cells, pvals = [], {}
    for rho in rhos:
        for J in Js:
            tasks = [(config.to_dict(), float(rho), int(J), r)
                     for r in range(config.replicates)]
            logger.info("size cell rho=%s J2=%s: %d replicates", rho, J, len(tasks))
            p = np.array(run_tasks(_size_task, tasks, config.workers))
            pvals[f"rho={rho},J2={J}"] = p
            for a in config.alpha_levels:
                cells.append(RateCell({"rho": float(rho), "J2": int(J)}, a,
                                      int(np.count_nonzero(p <= a)), p.size))
    return RateTable("size", cells, config.echo(), pvals)


def size_table_layout(table: RateTable):
    """Rows per rho, columns per (J2, alpha), rates in percent."""
    rhos = sorted({c.key["rho"] for c in table.cells})
    Js = sorted({c.key["J2"] for c in table.cells})
    alphas = sorted({c.alpha for c in table.cells}, reverse=True)
    header = ["rho"] + [f"J2={J} alpha={a:g}" for J in Js for a in alphas]
    rows = [[rho] + [100.0 * table.find(a, rho=rho, J2=J).rate for J in Js for a in alphas]
            for rho in rhos]
    return header, rows


# ---------------------------------------------------------------------------
# Power


def scenario_test_config(cfg: ExperimentConfig, scenario: str, support, seed: int
                         ) -> TestConfig:
    if scenario == "oracle":
        return cfg.test_config(screener="external-ranking", ranking=list(map(int, support)),
                               J2=max(1, len(support)), master_seed=seed)
    if scenario == "all-variants":
        return cfg.test_config(J2="all", screener="marginal-z", ranking=None,
                               master_seed=seed)
    if scenario == "screened":
        J2 = cfg.grid.get("screened_J2", cfg.test.get("J2", "min-J-ntest"))
        return cfg.test_config(J2=J2, screener="marginal-z", ranking=None, master_seed=seed)
    raise InputError(f"unknown scenario {scenario!r}")


def _power_task(args):
    cfg_dict, gi, sparsity, effect, rep, scenarios = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    design = cfg.sim_design(sparsity=sparsity, effect_size=effect)
    data = simulate_dataset(design, gi, rep)
    seed = seeding.derive_seed(cfg.master_seed, seeding.REPLICATE, gi, rep)
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for sc in scenarios:
            test = scenario_test_config(cfg, sc, data.support, seed)
            out[sc] = tdc_test(data.y, None, data.G, test).p_dc
    return out


def run_power_experiment(config: ExperimentConfig, scenarios=None) -> RateTable:
    """Rejection frequencies over an effect-size x sparsity grid.

    All scenarios are evaluated on the same simulated datasets and the same
    split seeds, so scenario contrasts are paired.
    """
    scenarios = list(scenarios or config.grid.get("scenarios", ["oracle", "all-variants"]))
    effects = config.grid.get("effect_sizes", [0.0])
    sparsities = config.grid.get("sparsities", [config.design.get("sparsity", 0.01)])
    cells, pvals = [], {}
    gi = 0
    for sp in sparsities:
        for eff in effects:
            tasks = [(config.to_dict(), gi, sp, float(eff), r, scenarios)
                     for r in range(config.replicates)]
            logger.info("power cell sparsity=%s effect=%s: %d replicates", sp, eff, len(tasks))
            res = run_tasks(_power_task, tasks, config.workers)
            for sc in scenarios:
                p = np.array([r[sc] for r in res])
                pvals[f"{sc},sparsity={sp},effect={eff}"] = p
                for a in config.alpha_levels:
                    cells.append(RateCell({"scenario": sc, "sparsity": sp,
                                           "effect_size": float(eff)}, a,
                                          int(np.count_nonzero(p <= a)), p.size))
            gi += 1
    return RateTable("power", cells, config.echo(), pvals)


# ---------------------------------------------------------------------------
# Stability


SUMMARY_FIELDS = ("Minimum", "1st Quantile", "Median", "Mean", "3rd Quantile", "Maximum")


def dispersion_summary(p) -> dict:
    p = np.asarray(p, dtype=float)
    q1, med, q3 = np.quantile(p, [0.25, 0.5, 0.75])
    return {"Minimum": float(p.min()), "1st Quantile": float(q1), "Median": float(med),
            "Mean": float(p.mean()), "3rd Quantile": float(q3), "Maximum": float(p.max()),
            "IQR": float(q3 - q1)}


@dataclass
class StabilityResult:
    p1: list
    p_dc: list
    summary: dict
    config: dict

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "StabilityResult":
        return cls(list(d["p1"]), list(d["p_dc"]), d["summary"], d["config"])


def _stability_task(args):
    cfg_dict, k = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    data = simulate_dataset(cfg.sim_design(), 0)
    G = prepare_genotypes(data.G)
    test = cfg.test_config()
    m1 = int(cfg.grid.get("single_split_m", 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        one_seed = seeding.derive_seed(cfg.master_seed, seeding.STABILITY, 1, k)
        p1 = tdc_test(data.y, None, G, test, m=m1, master_seed=one_seed).p_dc
        multi_seed = seeding.derive_seed(cfg.master_seed, seeding.STABILITY, 2, k)
        p_dc = tdc_test(data.y, None, G, test, master_seed=multi_seed).p_dc
    return p1, p_dc


def run_stability_experiment(config: ExperimentConfig) -> StabilityResult:
    """One fixed dataset, K fresh split sequences: one-split p1 versus m-split p_dc.

    p1 is the combined p-value of a single split (the m = 1 test).
    """
    K = int(config.grid.get("repetitions", 100))
    tasks = [(config.to_dict(), k) for k in range(K)]
    logger.info("stability: %d repetitions", K)
    res = run_tasks(_stability_task, tasks, config.workers)
    p1 = [r[0] for r in res]
    pdc = [r[1] for r in res]
    summary = {"p1": dispersion_summary(p1), "p_dc": dispersion_summary(pdc)}
    return StabilityResult(p1, pdc, summary, config.echo())


# ---------------------------------------------------------------------------
# SNR


def run_snr(config: ExperimentConfig):
    design = config.sim_design()
    g = config.grid
    beta_design = simulate_dataset(design, 0)
    beta = beta_design.beta
    subset = g.get("subset", "all")
    if subset == "support":
        idx = beta_design.support
    elif subset == "all":
        idx = np.arange(design.J)
    else:
        raise InputError(f"unknown subset {subset!r}")
    gamma = int(g.get("gamma", 2))
    w = beta[idx]
    if gamma == 2 or not np.any(w):
        r = np.ones(idx.size)
    else:
        r = np.abs(w) ** (gamma - 2)
        r = r / r.max()
    n_eff = int(g.get("n_eff", design.n_total // 2))
    return estimate_snr(design, n_eff, idx, r, int(g.get("mc_reps", 10 ** 4)),
                        config.master_seed, beta=beta, centered=bool(g.get("centered", False)))
