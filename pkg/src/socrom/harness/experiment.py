"""End-to-end pipeline: FOM data, POD initializer, DDROM fit, error reports."""

import contextlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .. import __version__
from ..ddrom import DdromRegressor, ddrom_solve, predict, save_ddrom
from ..ddrom.model import FEASIBILITY_CAP
from ..fem import make_high_contrast_field
from ..fom import solve_fom, sweep_outputs
from ..gmsfem import build_gmsfem_basis, coarse_optimality_system, frozen_coefficient
from ..io import write_csv, write_matrix_csv
from ..mesh import build_overlay, build_unit_square_mesh
from ..problems import build_control_problem, diffusion_terms, lift_state
from ..rom import collect_snapshots, pod_basis, project_rom
from .config import holdout_parameters, kappa1_pattern, sample_parameters
from .report import REL_GUARD, ErrorReport

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["iteration", "J", "grad_norm", "step", "line_search_evals", "rel_change"]


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and, if known, the parameter."""

    def __init__(self, stage, cause, mu=None):
        self.stage = stage
        self.mu = mu
        where = f" at mu={mu}" if mu is not None else ""
        super().__init__(f"stage '{stage}' failed{where}: {cause}")


@contextlib.contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc, getattr(exc, "mu", None)) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


@dataclass
class RunResult:
    test: ErrorReport
    train: ErrorReport
    initial_test: ErrorReport
    initial_train: ErrorReport
    matrices: object
    fit_report: object
    manifest: dict
    outdir: str


def dump_solution_fields(mesh, sol, path, label):
    """Write ``<label>_U.csv`` (vertex grid) and ``<label>_F.csv`` (cell grid).

    ``sol`` is a :class:`FomSolution` or an ``(F, U)`` pair; ``U`` may hold
    interior values only, in which case the zero boundary data is filled in.
    """
    F, U = (sol.F, sol.U) if hasattr(sol, "F") else sol
    U = np.asarray(U, dtype=float)
    if U.size != mesh.n_vertices:
        U = lift_state(mesh, U)
    written = []
    for name, grid in (("U", mesh.vertex_grid(U)), ("F", mesh.cell_grid(F))):
        target = os.path.join(path, f"{label}_{name}.csv")
        try:
            write_matrix_csv(target, grid)
        except OSError as exc:
            raise OSError(f"cannot write field file {target}: {exc}") from exc
        written.append(target)
    return written


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    return obj


def build_models(config, timings=None):
    """Fine system, data-generating system and (optional) GMsFEM basis."""
    timings = {} if timings is None else timings
    with _stage("assemble", timings):
        mesh = build_unit_square_mesh(*config.fine)
        kappa1 = make_high_contrast_field(config.contrast, kappa1_pattern(config))
        fine = build_control_problem(mesh, config.problem, beta=config.beta,
                                     kappa1=kappa1, output=config.output)
        fine.validate()
    basis = None
    data_sys = fine
    if config.coarse is not None:
        with _stage("gmsfem", timings):
            overlay = build_overlay(build_unit_square_mesh(*config.coarse), config.refinement)
            fields, thetas = diffusion_terms(config.problem, kappa1)
            kappa = frozen_coefficient(fields, thetas, config.reference_mu)
            basis = build_gmsfem_basis(overlay, kappa, config.modes)
            data_sys = coarse_optimality_system(fine, basis)
    return mesh, fine, data_sys, basis


def _decisions(config, fit_report):
    return {
        "kappa1_pattern": [list(r) for r in kappa1_pattern(config)],
        "kappa1_contrast": config.contrast,
        "kappa1_evaluation": "cell centroid (piecewise constant on fine cells)",
        "wolfe_c1": fit_report.c1,
        "wolfe_c2": fit_report.c2,
        "line_search_first_step": "J / |slope| on the first iteration, 1 afterwards",
        "bfgs_initial_inverse_hessian": "identity scaled by s'y / y'y before the first update",
        "masking_mode": "structured" if config.structured else "unstructured",
        "pod_weighting": "raw Euclidean snapshots, no mass-matrix weighting",
        "pod_sizes": "N control modes, 2N joint state/adjoint modes",
        "feasibility_cap": FEASIBILITY_CAP,
        "feasibility_measure": "(1 + sum |theta_a|) * ||A(mu)^-1||_F per sample",
        "stopping": "relative L2 change of DDROM outputs between iterates <= tol",
        "output_functional": config.output,
        "sampling": config.sampling,
        "test_grid": "midpoints of test_count + 1 equispaced points (half-step offset)",
        "relative_error_guard": REL_GUARD,
        "gmsfem_kappa_mu": config.reference_mu if config.coarse is not None else None,
        "gmsfem_control_space": "fine (not coarsened)" if config.coarse is not None else None,
        "field_snapshot_mu": config.reference_mu,
    }


def run_experiment(config, outdir):
    """Run the full pipeline and write reports to ``outdir``."""
    os.makedirs(outdir, exist_ok=True)
    timings = {}
    mesh, fine, data_sys, gbasis = build_models(config, timings)

    train = sample_parameters(config.interval, config.train_count, config.sampling, config.seed)
    test = holdout_parameters(config.interval, config.test_count)
    overlap = np.isin(np.round(test.samples, 12), np.round(train.samples, 12))
    if overlap.any():
        logger.warning("%d test parameters coincide with training samples", int(overlap.sum()))

    with _stage("snapshots", timings):
        snaps = collect_snapshots(data_sys, train)
        y_train = snaps.outputs
    with _stage("test_outputs", timings):
        y_test = np.array([y for _, y in sweep_outputs(data_sys, test)])
    with _stage("pod", timings):
        pbasis = pod_basis(snaps, config.N)
        rom = project_rom(data_sys, pbasis)
        initial = rom.to_ddrom()
    with _stage("fit", timings):
        est = DdromRegressor(initial=initial, maxit=config.maxit, tol=config.tol,
                             structured=config.structured)
        est.fit(train.samples, y_train, sample_weight=train.weights)
    with _stage("evaluate", timings):
        reports = {
            "test": ErrorReport(test.samples, y_test, est.predict(test.samples), test.weights),
            "train": ErrorReport(train.samples, y_train, est.predict(train.samples),
                                 train.weights),
            "initial_test": ErrorReport(test.samples, y_test, predict(initial, test.samples),
                                        test.weights),
            "initial_train": ErrorReport(train.samples, y_train,
                                         predict(initial, train.samples), train.weights),
        }

    with _stage("write", timings):
        reports["test"].write_csv(os.path.join(outdir, "errors.csv"))
        reports["train"].write_csv(os.path.join(outdir, "errors_train.csv"))
        reports["initial_test"].write_csv(os.path.join(outdir, "errors_rom.csv"))
        write_csv(os.path.join(outdir, "fit_history.csv"), est.report_.rows(), HISTORY_COLUMNS)
        with open(os.path.join(outdir, "fit_report.json"), "w") as fh:
            json.dump(_json_safe(est.report_.to_dict()), fh, indent=2, sort_keys=True)
        write_csv(os.path.join(outdir, "singular_values.csv"),
                  _singular_value_rows(pbasis), ["index", "control", "state_adjoint"])
        save_ddrom(est.matrices_, os.path.join(outdir, "ddrom"))
        save_ddrom(initial, os.path.join(outdir, "initial_ddrom"))

    if config.write_fields:
        with _stage("fields", timings):
            _write_fields(config, mesh, fine, data_sys, gbasis, rom, est.matrices_,
                          os.path.join(outdir, "fields"))

    for r in reports.values():
        r.timings = dict(timings)
    manifest = {
        "package_version": __version__,
        "config": config.to_dict(),
        "decisions": _decisions(config, est.report_),
        "dimensions": {
            "fine_cells": list(config.fine),
            "n_control": data_sys.n_control,
            "n_state": data_sys.n_state,
            "data_model": "gmsfem_coarse" if gbasis is not None else "fine_fom",
            "fine_state_dofs": fine.n_state,
            "gmsfem_basis_size": gbasis.M if gbasis is not None else None,
            "N": config.N,
            "reduced_size": initial.r,
            "reduced_blocks": list(initial.blocks),
            "ddrom_free_parameters": est.report_.n_params,
        },
        "pod_energy": pbasis.energy_fraction(),
        "fit": {k: v for k, v in est.report_.to_dict().items() if k != "iterations"},
        "errors": {k: r.summary() for k, r in reports.items()},
        "timings_seconds": timings,
        "artifacts": sorted(_listing(outdir)),
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(_json_safe(manifest), fh, indent=2, sort_keys=True)
    return RunResult(test=reports["test"], train=reports["train"],
                     initial_test=reports["initial_test"],
                     initial_train=reports["initial_train"], matrices=est.matrices_,
                     fit_report=est.report_, manifest=manifest, outdir=outdir)


def _singular_value_rows(pbasis):
    sc, ss = pbasis.sv_control, pbasis.sv_state
    n = max(sc.size, ss.size)
    return [{"index": i,
             "control": float(sc[i]) if i < sc.size else "",
             "state_adjoint": float(ss[i]) if i < ss.size else ""} for i in range(n)]


def _listing(outdir):
    out = []
    for root, _, files in os.walk(outdir):
        for f in files:
            out.append(os.path.relpath(os.path.join(root, f), outdir))
    out.append("manifest.json")
    return set(out)


def _write_fields(config, mesh, fine, data_sys, gbasis, rom, fitted, path):
    mu = config.reference_mu
    to_fine = (lambda u: u) if gbasis is None else gbasis.downscale
    dump_solution_fields(mesh, solve_fom(fine, mu), path, "reference")
    sol = solve_fom(data_sys, mu)
    dump_solution_fields(mesh, (sol.F, to_fine(sol.U)), path, "fom")
    for label, x in (("rom", rom.solve(mu)[0]), ("ddrom", ddrom_solve(fitted, mu)[0])):
        F, U, _ = rom.lift(x)
        dump_solution_fields(mesh, (F, to_fine(U)), path, label)
