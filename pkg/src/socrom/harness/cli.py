"""Command line entry point: ``socrom <subcommand> ...``.

Subcommands that need the finite element stack import it on demand; ``fit``
and ``report`` work from files alone.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from ..io import read_csv, read_samples_csv, write_csv, write_triplets


def _load_config(args):
    from .config import ExperimentConfig, preset

    if args.config and args.preset:
        raise SystemExit("give either --config or --preset, not both")
    overrides = {}
    for item in args.set or []:
        key, _, value = item.partition("=")
        try:
            overrides[key] = json.loads(value)
        except json.JSONDecodeError:
            overrides[key] = value
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        return ExperimentConfig.from_dict({**data, **overrides})
    return preset(args.preset or "smoke", **overrides)


def _add_config_args(p):
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--preset", help="named configuration (experiment1, experiment2, "
                                    "experiment2-gmsfem, smoke)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a configuration field; VALUE is parsed as JSON when possible")


def cmd_run(args):
    from .experiment import run_experiment

    config = _load_config(args)
    out = args.out or os.path.join("runs", config.name)
    result = run_experiment(config, out)
    s_fit, s_rom = result.test.summary(), result.initial_test.summary()
    print(f"run '{config.name}' -> {out}")
    print(f"  stop: {result.fit_report.stop_reason} after {result.fit_report.n_iter} iterations")
    print(f"  test L2 error  initial {s_rom['l2_abs']:.6e}  fitted {s_fit['l2_abs']:.6e}")
    return 0


def cmd_fom_sweep(args):
    from .config import holdout_parameters, sample_parameters
    from .experiment import build_models
    from ..fom import sweep_outputs

    config = _load_config(args)
    _, _, data_sys, _ = build_models(config)
    if args.samples == "train":
        ts = sample_parameters(config.interval, config.train_count, config.sampling, config.seed)
    else:
        ts = holdout_parameters(config.interval, config.test_count)
    rows = [{"mu": mu, "y": y} for mu, y in sweep_outputs(data_sys, ts)]
    write_csv(args.out, rows, ["mu", "y"])
    print(f"wrote {len(rows)} samples to {args.out}")
    return 0


def cmd_pod(args):
    from .config import sample_parameters
    from .experiment import build_models
    from ..ddrom import save_ddrom
    from ..rom import collect_snapshots, pod_basis, project_rom

    config = _load_config(args)
    _, _, data_sys, _ = build_models(config)
    train = sample_parameters(config.interval, config.train_count, config.sampling, config.seed)
    snaps = collect_snapshots(data_sys, train)
    basis = pod_basis(snaps, config.N)
    os.makedirs(args.out, exist_ok=True)
    write_triplets(os.path.join(args.out, "V.txt"), basis.V)
    write_triplets(os.path.join(args.out, "W.txt"), basis.W)
    n = max(basis.sv_control.size, basis.sv_state.size)
    rows = [{"index": i,
             "control": float(basis.sv_control[i]) if i < basis.sv_control.size else "",
             "state_adjoint": float(basis.sv_state[i]) if i < basis.sv_state.size else ""}
            for i in range(n)]
    write_csv(os.path.join(args.out, "singular_values.csv"), rows,
              ["index", "control", "state_adjoint"])
    write_csv(os.path.join(args.out, "samples.csv"),
              [{"mu": float(m), "y": float(y)} for m, y in zip(snaps.samples, snaps.outputs)],
              ["mu", "y"])
    save_ddrom(project_rom(data_sys, basis).to_ddrom(), os.path.join(args.out, "initial_ddrom"))
    print(f"POD basis N={basis.N} and initial DDROM written to {args.out}")
    return 0


def cmd_gmsfem_basis(args):
    from .experiment import build_models
    from ..gmsfem import export_basis_csv

    config = _load_config(args)
    if config.coarse is None:
        raise SystemExit("gmsfem-basis needs a configuration with a coarse grid")
    _, _, _, basis = build_models(config)
    export_basis_csv(basis, args.out)
    print(f"{basis.M} multiscale basis functions written to {args.out}")
    return 0


def cmd_fit(args):
    from ..ddrom import DdromRegressor, load_ddrom, save_ddrom
    from .report import ErrorReport

    data = read_samples_csv(args.data)
    mus = np.array([m for m, _ in data])
    y = np.array([v for _, v in data])
    est = DdromRegressor(initial=load_ddrom(args.initial), maxit=args.maxit, tol=args.tol,
                         structured=not args.unstructured)
    est.fit(mus, y)
    os.makedirs(args.out, exist_ok=True)
    save_ddrom(est.matrices_, os.path.join(args.out, "ddrom"))
    write_csv(os.path.join(args.out, "fit_history.csv"), est.report_.rows(),
              ["iteration", "J", "grad_norm", "step", "line_search_evals", "rel_change"])
    report = ErrorReport(mus, y, est.predict(mus))
    report.write_csv(os.path.join(args.out, "errors_train.csv"))
    s = report.summary()
    print(f"stop: {est.report_.stop_reason} after {est.report_.n_iter} iterations; "
          f"training L2 error {s['l2_abs']:.6e}")
    return 0


def cmd_report(args):
    from .report import load_errors

    run = args.run
    lines = []
    for label, name in (("fitted DDROM (test)", "errors.csv"),
                        ("fitted DDROM (train)", "errors_train.csv"),
                        ("initial ROM (test)", "errors_rom.csv")):
        path = os.path.join(run, name)
        if os.path.exists(path):
            s = load_errors(path).summary()
            rel = "n/a" if s["l2_rel"] is None else f"{s['l2_rel']:.3e}"
            lines.append(f"{label:22s} n={s['count']:4d}  L2 abs {s['l2_abs']:.3e}  "
                         f"L2 rel {rel}  max abs {s['max_abs']:.3e}")
    hist = os.path.join(run, "fit_history.csv")
    if os.path.exists(hist):
        rows = read_csv(hist)
        lines.append(f"fit iterations: {len(rows) - 1}, final J {float(rows[-1]['J']):.6e}")
    manifest = os.path.join(run, "manifest.json")
    if os.path.exists(manifest):
        with open(manifest) as fh:
            m = json.load(fh)
        lines.append(f"stop reason: {m['fit']['stop_reason']}")
        for k, v in sorted(m.get("timings_seconds", {}).items()):
            lines.append(f"  {k:14s} {v:8.3f} s")
    if not lines:
        raise SystemExit(f"no reports found in {run}")
    print("\n".join(lines))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="socrom", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline from a configuration")
    _add_config_args(p)
    p.add_argument("--out", help="output directory (default runs/<name>)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fom-sweep", help="write (mu, y) samples of the data model")
    _add_config_args(p)
    p.add_argument("--samples", choices=("train", "test"), default="train")
    p.add_argument("--out", required=True, help="CSV file")
    p.set_defaults(func=cmd_fom_sweep)

    p = sub.add_parser("pod", help="POD basis, singular values and initial DDROM")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pod)

    p = sub.add_parser("gmsfem-basis", help="export the multiscale basis and eigenvalues")
    _add_config_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gmsfem_basis)

    p = sub.add_parser("fit", help="fit a DDROM to (mu, y) samples, non-intrusively")
    p.add_argument("--data", required=True, help="CSV with mu and y columns")
    p.add_argument("--initial", required=True, help="directory of an initial DDROM")
    p.add_argument("--out", required=True)
    p.add_argument("--maxit", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-16)
    p.add_argument("--unstructured", action="store_true",
                   help="optimize every DDROM matrix entry instead of the saddle blocks")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("run")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
