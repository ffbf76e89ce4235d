"""Command-line entry point: ``oempc <command> [--config F] [--seed S] [--out D]``.

Every command rebuilds what it needs from the config and seed, so commands
can run in any order. Outputs are CSV files with a single header row.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from oempc import kernels, plant
from oempc.harness import pipeline
from oempc.harness.config import ExperimentConfig, dump_config, load_config
from oempc.harness.experiments import (RUNLOG_COLUMNS, cross_validate,
                                       run_closedloop, run_ideal_estimation,
                                       run_online_learning)
from oempc.sstarget import equilibrium_curve, steady_cost_oracle

log = logging.getLogger("oempc")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    log.info("wrote %s", path)
    return path


def read_csv(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


# -- commands --------------------------------------------------------------------


def cmd_datagen(cfg: ExperimentConfig, seed: int, out: Path, args) -> int:
    data = pipeline.training_data(cfg, seed)
    data.to_csv(out / "dataset.csv")
    print(f"dataset: {len(data)} samples, spec {cfg.regressor}")
    return 0


def cmd_train(cfg, seed, out, args) -> int:
    model = pipeline.trained_oracle(cfg, seed)
    model.dataset.to_csv(out / "oracle_dataset.csv")
    print(f"oracle: {len(model.dataset)} samples (stride {cfg.oracle.stride}), "
          f"L = {model.L:.6g}, largest sampled quotient = {model.raw_quotient:.6g}, "
          f"conflicting pairs = {model.n_conflicts}")
    return 0


def cmd_validate(cfg, seed, out, args) -> int:
    model = pipeline.trained_oracle(cfg, seed)
    run = pipeline.validate(cfg, model, seed)
    write_csv(out / "validation.csv", ("t", "ell_true", "ell_pred", "residual"),
              zip(run.t, run.ell_true, run.ell_pred, run.residual))
    q = run.bound.residual_quantiles
    print(f"validation: mu = {run.bound.mu:.6g}, q50 = {q[50]:.6g}, "
          f"q90 = {q[90]:.6g}, q99 = {q[99]:.6g}")
    return 0


def cmd_ssopt(cfg, seed, out, args) -> int:
    t0 = time.perf_counter()
    tm = pipeline.model_target(cfg)
    t_model = time.perf_counter() - t0
    u, ell = equilibrium_curve(cfg.plant)
    write_csv(out / "equilibrium_curve.csv", ("u", "ell_ss"), zip(u, ell))
    print(f"model:  u_s = {tm.u_s:.6f}  ell_s = {tm.ell_s:.6f}  ({t_model:.2f} s)")
    if args.model_only:
        return 0
    model = pipeline.trained_oracle(cfg, seed)
    to = pipeline.oracle_target(cfg, model)
    grid = np.linspace(*pipeline.input_box(cfg), 201)
    vals = [steady_cost_oracle(model, float(v), support_radius=0.1) for v in grid]
    write_csv(out / "equilibrium_curve_oracle.csv", ("u", "ell_ss"),
              ((g, math.nan if v is None else v) for g, v in zip(grid, vals)))
    print(f"oracle: u_s = {to.u_s:.6f}  ell_s = {to.ell_s:.6f}")
    return 0


def cmd_compare_ideal(cfg, seed, out, args) -> int:
    target = pipeline.model_target(cfg)
    i = cfg.ideal
    report = run_ideal_estimation(i.n_trials, seed, cfg.plant, target, N=i.N,
                                  spec=cfg.regressor, L0=i.L0, max_draws=i.max_draws,
                                  solver=cfg.empc.solver(seed))
    write_csv(out / "ideal_estimation.csv",
              ("trial", "draws", "u0_model", "u0_oracle", "du0", "valid", "n_data",
               "L", "interp_err", "oracle_residual"),
              ((t.trial, t.draws, t.u0_model, t.u0_oracle, t.du0, t.valid, t.n_data,
                t.L, t.interp_err, t.oracle_residual) for t in report.trials))
    print(f"ideal estimation: {report.n_valid}/{len(report.trials)} valid, "
          f"max |du0| = {report.max_du0:.3g}")
    return 0


def cmd_run(cfg, seed, out, args) -> int:
    params = cfg.plant
    target = pipeline.model_target(cfg)
    ideal = pipeline.IdealFactory(pipeline.ideal_controller_config(cfg, target, seed),
                                  params)
    if args.capture:
        params = params.with_(noise_std_frac=0.0)
        ideal = pipeline.capture_ideal_factory(ideal.cfg, params)
        make = pipeline.CaptureFactory(params, target, cfg.empc.N, cfg.regressor,
                                       cfg.ideal.L0, cfg.empc.solver(seed))
    else:
        model = pipeline.trained_oracle(cfg, seed)
        to = pipeline.oracle_target(cfg, model)
        make = pipeline.OracleFactory(
            pipeline.oracle_controller_config(cfg, model, to, seed), model)
    ell_ref = target.ell_s
    results = run_closedloop(seed, params, make, None if args.no_ideal else ideal,
                             n_init=cfg.n_init, n_steps=cfg.n_steps,
                             spec=cfg.regressor, workers=cfg.workers)

    def rows():
        for r in results:
            for name, lg in (("oracle", r.log_oracle), ("ideal", r.log_ideal)):
                if lg is not None:
                    for row in lg.rows():
                        yield (r.run, name) + row

    write_csv(out / f"closedloop_{seed}.csv", ("run", "controller") + RUNLOG_COLUMNS,
              rows())
    write_csv(out / "phi_summary.csv",
              ("seed", "run", "phi_oracle", "phi_ideal", "rel_gap", "tail_deviation",
               "feasible_steps"),
              ((seed, r.run, r.phi_oracle, r.phi_ideal, r.rel_gap,
                r.tail_deviation(ell_ref), sum(r.log_oracle.feasible))
               for r in results))
    gaps = [r.rel_gap for r in results]
    msg = f"{len(results)} runs, median tail |l - l_s| = " \
          f"{np.median([r.tail_deviation(ell_ref) for r in results]):.4g}"
    if not args.no_ideal:
        msg += f", median relative gap = {np.median(gaps):.4g}"
    print(msg)
    return 0


def cmd_online(cfg, seed, out, args) -> int:
    model = pipeline.trained_oracle(cfg, seed)
    to = pipeline.oracle_target(cfg, model)
    ecfg = pipeline.oracle_controller_config(cfg, model, to, seed)
    icfg = pipeline.ideal_controller_config(cfg, pipeline.model_target(cfg), seed)
    res = run_online_learning(model, ecfg, cfg.plant, iterations=cfg.online.iterations,
                              window=cfg.window, seed=seed, update=cfg.online.update,
                              ideal_cfg=icfg)
    write_csv(out / "online_phi.csv", ("iteration", "phi", "phi_ideal", "dataset_size"),
              zip(range(len(res.phi)), res.phi, res.phi_ideal, res.dataset_sizes))
    phi = np.asarray(res.phi)
    print(f"online: first-5 mean phi = {phi[:5].mean():.6g}, "
          f"last-5 mean phi = {phi[-5:].mean():.6g}")
    return 0


def cmd_cv(cfg, seed, out, args) -> int:
    train = pipeline.measured_pair(cfg, pipeline.training_inputs(cfg, seed),
                                   [seed, pipeline.STREAM_TRAIN_NOISE])
    valid = pipeline.measured_pair(cfg, pipeline.validation_inputs(cfg, seed),
                                   [seed, pipeline.STREAM_VALID_NOISE])
    c = cfg.cv
    spec, L, entries = cross_validate(train, valid, c.n_a, c.n_b, c.L, stride=c.stride)
    write_csv(out / "cv.csv", ("n_a", "n_b", "L", "score"),
              ((e.n_a, e.n_b, e.L, e.score) for e in entries))
    best = next(e for e in entries if (e.n_a, e.n_b, e.L) == (spec.n_a, spec.n_b, L))
    print(f"selected n_a = {spec.n_a}, n_b = {spec.n_b}, L = {L:.6g} "
          f"(max validation residual {best.score:.6g})")
    return 0


COMMANDS = {
    "datagen": (cmd_datagen, "simulate the excitation run and write dataset.csv"),
    "train": (cmd_train, "fit the oracle and write its (subsampled) data"),
    "validate": (cmd_validate, "one-step validation on the held-out step sequence"),
    "ssopt": (cmd_ssopt, "optimal steady state of the plant and of the oracle"),
    "compare-ideal": (cmd_compare_ideal, "first-action comparison with captured data"),
    "run": (cmd_run, "closed loops of the oracle and ideal controllers"),
    "online": (cmd_online, "periodic disturbance with online data updates"),
    "cv": (cmd_cv, "grid search over memory horizons and L"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oempc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", type=Path, default=None, help="YAML config file")
        s.add_argument("--seed", type=int, default=None,
                       help="experiment seed (default: first of config seeds)")
        s.add_argument("--out", type=Path, default=None, help="output directory")
        if name == "ssopt":
            s.add_argument("--model-only", action="store_true",
                           help="skip the oracle equilibrium")
        if name == "run":
            s.add_argument("--capture", action="store_true",
                           help="nominal loop whose oracle is rebuilt from captured "
                                "solver predictions at every step")
            s.add_argument("--no-ideal", action="store_true",
                           help="skip the model-based reference controller")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        seed = cfg.seeds[0] if args.seed is None else args.seed
        out = Path(args.out if args.out is not None else cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config_used.yaml").write_text(dump_config(cfg))
        log.info("backend %s, seed %d", kernels.BACKEND, seed)
        return COMMANDS[args.command][0](cfg, seed, out, args)
    except (OSError, yaml.YAMLError, ValueError, RuntimeError,
            plant.PlantDomainError) as exc:
        print(f"oempc {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
