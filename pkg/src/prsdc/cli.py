"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 numerical failure.  Logs go to
standard error; data goes to --out (standard output when omitted).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .adaptive import TestConfig, tdc_test
from .errors import InputError, NumericalError, PrsdcError
from .experiments import (
    ExperimentConfig,
    run_power_experiment,
    run_size_experiment,
    run_snr,
    run_stability_experiment,
    size_table_layout,
)
from .glm import GenotypeMatrix
from .simulate import simulate_dataset

logger = logging.getLogger("prsdc")

EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--out", help="output path; '-' or omitted for stdout")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="prsdc", description="Adaptive split-sample PRS test")
    sub = p.add_subparsers(dest="command", required=True)
    t = sub.add_parser("test", parents=[common], help="run the test on CSV data")
    t.add_argument("--genotypes", required=True)
    t.add_argument("--phenotype", required=True)
    t.add_argument("--covariates")
    s = sub.add_parser("simulate", parents=[common], help="write a simulated dataset")
    s.add_argument("--replicate", type=int, default=0)
    for name, text in (("calibrate", "empirical size table"), ("power", "power curves"),
                       ("stability", "p-value dispersion study"),
                       ("snr", "Monte Carlo signal-to-noise diagnostics")):
        sub.add_parser(name, parents=[common], help=text)
    return p


def _load_config(args) -> ExperimentConfig:
    doc = io.read_json(args.config) if args.config else {}
    doc = {k: v for k, v in doc.items() if k not in ("schema_version", "kind")}
    doc.setdefault("mode", args.command)
    if doc["mode"] != args.command:
        logger.info("config mode %r replaced by subcommand %r", doc["mode"], args.command)
        doc["mode"] = args.command
    if args.seed is not None:
        doc["master_seed"] = args.seed
    if args.workers is not None:
        doc["workers"] = args.workers
    if args.out is not None:
        doc["output"] = args.out
    if args.format is not None:
        doc["format"] = args.format
    try:
        return ExperimentConfig.from_dict(doc)
    except TypeError as exc:
        raise InputError(f"bad config: {exc}") from None


def _cmd_test(args, cfg: ExperimentConfig):
    values, ids = io.read_genotypes(args.genotypes)
    y = io.read_phenotype(args.phenotype)
    X = io.read_covariates(args.covariates) if args.covariates else None
    if values.shape[0] != y.shape[0]:
        raise InputError(f"genotype rows ({values.shape[0]}) do not match phenotype "
                         f"length ({y.shape[0]})")
    test = TestConfig(**{**cfg.test, "master_seed": cfg.master_seed})
    report = tdc_test(y, X, GenotypeMatrix(values, ids, standardized=False), test)
    if cfg.format == "csv":
        header = ["split_seed", "p_c", "p1", "t1", "J2", "flags"] + [
            f"p_gamma_{g}" for g in test.gammas]
        rows = [[r.split_seed, r.p_c, r.p1, r.t1_stat, r.J2_effective, ";".join(r.flags)]
                + [r.gamma_stats[g].p for g in test.gammas] for r in report.per_split]
        rows.append(["combined", report.p_dc, "", report.t_dc, "", ""] + [""] * len(test.gammas))
        io.write_table(cfg.output, header, rows)
    else:
        io.write_json(cfg.output, "test_report", report.to_dict())


def _cmd_simulate(args, cfg: ExperimentConfig):
    design = cfg.sim_design()
    data = simulate_dataset(design, args.replicate)
    out = Path(cfg.output or "sim")
    out.mkdir(parents=True, exist_ok=True)
    ids = [f"v{j + 1}" for j in range(design.J)]
    io.write_genotypes(out / "genotypes.csv", data.G.values, ids)
    io.write_vector(out / "phenotype.csv", data.y, "y")
    io.write_json(out / "truth.json", "simulation",
                  {"design": design.to_dict(), "beta": data.beta,
                   "support": data.support, "replicate": args.replicate})
    logger.info("wrote %s", out)


def _write_rates(cfg, table, layout=None):
    if cfg.format == "csv":
        header, rows = layout(table) if layout else table.rows()
        io.write_table(cfg.output, header, rows)
    else:
        payload = table.to_dict()
        if layout:
            header, rows = layout(table)
            payload["layout"] = {"header": header, "rows": rows}
        io.write_json(cfg.output, table.kind, payload)


def _cmd_stability(cfg):
    res = run_stability_experiment(cfg)
    if cfg.format == "csv":
        header = ["statistic", "Minimum", "1st Quantile", "Median", "Mean", "3rd Quantile",
                  "Maximum", "IQR"]
        rows = [[k] + [v[h] for h in header[1:]] for k, v in res.summary.items()]
        io.write_table(cfg.output, header, rows)
    else:
        io.write_json(cfg.output, "stability", res.to_dict())


def _cmd_snr(cfg):
    est = run_snr(cfg)
    if cfg.format == "csv":
        d = est.to_dict()
        rows = [[k, v, d["mc_se"].get(k, "")] for k, v in d.items() if k != "mc_se"]
        io.write_table(cfg.output, ["quantity", "value", "mc_se"], rows)
    else:
        io.write_json(cfg.output, "snr", {"estimate": est.to_dict(), "config": cfg.echo()})


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        with np.errstate(all="ignore"):
            if args.command == "test":
                _cmd_test(args, cfg)
            elif args.command == "simulate":
                _cmd_simulate(args, cfg)
            elif args.command == "calibrate":
                _write_rates(cfg, run_size_experiment(cfg), size_table_layout)
            elif args.command == "power":
                _write_rates(cfg, run_power_experiment(cfg))
            elif args.command == "stability":
                _cmd_stability(cfg)
            else:
                _cmd_snr(cfg)
    except InputError as exc:
        print(f"prsdc: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"prsdc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PrsdcError as exc:
        print(f"prsdc: error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
