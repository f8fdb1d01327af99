"""Command-line entry point: ``mctdh3mix run|validate|oracle <config>``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import checkpoint, densops, grid1d, initial, oracle, prop
from ._parallel import set_num_threads
from .config import (ConfigSyntaxError, ConfigValidationError, RunConfig, interaction_kind,
                     parse_config, validate)
from .densops import AXES, Mixture
from .eom import Model, SystemState, gram_schmidt
from .fock import SpeciesSpec

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_STIFF = 4
EXIT_NOT_CONVERGED = 5
EXIT_IO = 6

OUTPUT_ENV = "MCTDH3MIX_OUTPUT_DIR"

log = logging.getLogger("mctdh3mix")


# -- building the system from a configuration -------------------------------------

def build_model(cfg: RunConfig) -> Model:
    g = cfg.grid
    grid = grid1d.Grid(g.n_points, g.x_min, g.x_max, g.boundary.lower().replace("_", ""))
    specs, ops = [], {}
    for x in AXES:
        s = cfg.species.get(x)
        if s is None:
            continue
        specs.append(SpeciesSpec(s.statistics.lower(), s.particles, s.orbitals))
        trap = None
        if s.trap.lower() == "harmonic":
            trap = grid1d.HarmonicTrap(s.omega, s.center, s.shake_amplitude, s.shake_frequency, s.mass)
        ops[x] = grid1d.build_one_body(grid, trap, s.mass)
    interactions = [
        grid1d.InteractionSpec(i.species, interaction_kind(i), i.strength, i.sigma, i.ramp.lower(),
                               i.ramp_time, i.ramp_amplitude, i.ramp_frequency)
        for i in cfg.interactions]
    return Model(grid, Mixture(*specs), ops, interactions)


def _read_orbital_file(path: str, M: int, n: int) -> np.ndarray:
    """Text file with ``n`` rows and ``2M`` columns: Re, Im of each orbital."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape != (n, 2 * M):
        raise ValueError(f"{path}: expected {n} rows and {2 * M} columns, got {data.shape}")
    return (data[:, 0::2] + 1j * data[:, 1::2]).T


def initial_state(cfg: RunConfig, model: Model) -> SystemState:
    """Initial orbitals per species and a product of per-species coefficient vectors.

    ``single`` selects the first configuration, ``uniform`` an equal
    superposition and ``random`` complex Gaussian amplitudes drawn from the
    run seed (species in the order A, B, C).
    """
    grid, mix = model.grid, model.mixture
    rng = np.random.default_rng(cfg.run.seed)
    orbitals = {}
    factors = []
    for ax, x in enumerate(AXES):
        s = cfg.species.get(x)
        if s is None:
            factors.append(np.ones(1, dtype=complex))
            continue
        kind = s.initial_orbitals
        if kind.lower() == "harmonic":
            omega = s.omega if s.trap.lower() == "harmonic" else 1.0
            orbitals[x] = initial.hermite_functions(grid, s.orbitals, omega, s.initial_center, s.mass)
        elif kind.lower() == "eigen":
            orbitals[x] = initial.eigen_orbitals(model.one_body[x], s.orbitals)
        else:
            raw = _read_orbital_file(kind[len("file:"):], s.orbitals, grid.n_points)
            orbitals[x] = gram_schmidt(raw, grid.dx)
        n = mix.shape[ax]
        choice = s.initial_coefficients.lower()
        if choice == "single":
            v = np.zeros(n, dtype=complex)
            v[0] = 1.0
        elif choice == "uniform":
            v = np.ones(n, dtype=complex)
        else:
            v = rng.normal(size=n) + 1j * rng.normal(size=n)
        factors.append(v / np.linalg.norm(v))
    C = np.einsum("a,b,c->abc", *factors)
    return SystemState(0.0, C, orbitals)


def propagator_config(cfg: RunConfig) -> prop.PropagatorConfig:
    p = cfg.propagation
    return prop.PropagatorConfig(p.mode, p.t_end, p.output_interval, p.rel_tol, p.abs_tol,
                                 p.krylov_dim, p.max_step, p.initial_step, p.max_iterations,
                                 p.residual_tol)


# -- output --------------------------------------------------------------------------

def fmt(value: float) -> str:
    return f"{value:.17g}"


class CsvObserver:
    """Writes one row per output time and flushes, so partial runs keep their rows."""

    def __init__(self, path: Path, model: Model, append: bool = False):
        self.model = model
        mix = model.mixture
        header = ["t", "re_energy", "im_energy", "norm"]
        for x in mix.present:
            header += [f"occ_{x}_{i + 1}" for i in range(mix.spec(x).n_orbitals)]
        header += [f"x_{x}" for x in mix.present]
        exists = append and path.exists()
        self.handle = open(path, "a" if append else "w", newline="")
        self.writer = csv.writer(self.handle, lineterminator="\n")
        if not exists:
            self.writer.writerow(header)
            self.handle.flush()

    def __call__(self, rec: prop.Record, state: SystemState) -> None:
        row = [fmt(rec.t), fmt(rec.energy.real), fmt(rec.energy.imag), fmt(rec.norm)]
        for x in self.model.mixture.present:
            row += [fmt(v) for v in rec.occupations[x]]
        row += [fmt(rec.positions[x]) for x in self.model.mixture.present]
        self.writer.writerow(row)
        self.handle.flush()

    def close(self) -> None:
        self.handle.close()


def output_dir(cfg: RunConfig) -> Path:
    path = Path(os.environ.get(OUTPUT_ENV) or cfg.propagation.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def verify_oracle(model: Model, state: SystemState, seed: int = 0) -> float:
    """Max deviation between the kernels and the dense matrix on a random vector."""
    tables = model.tables(state)
    rng = np.random.default_rng(seed)
    shape = model.mixture.shape
    C = densops.normalize(rng.normal(size=shape) + 1j * rng.normal(size=shape))
    return float(np.max(np.abs(densops.apply_hamiltonian(model.mixture, tables, C)
                               - oracle.apply(model.mixture, tables, C))))


def _read_config(path: str) -> RunConfig:
    text = Path(path).read_text()
    cfg = parse_config(text)
    for message in validate(cfg):
        warnings.warn(message)
    return cfg


def _load(path: str) -> tuple[RunConfig | None, int]:
    try:
        return _read_config(path), EXIT_OK
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return None, EXIT_IO
    except ConfigSyntaxError as exc:
        print(f"syntax error: {exc}", file=sys.stderr)
        return None, EXIT_PARSE
    except ConfigValidationError as exc:
        print(str(exc), file=sys.stderr)
        return None, EXIT_VALIDATION


def _summary_occupations(records: list[prop.Record]) -> dict[str, list[float]]:
    if not records:
        return {}
    return {x: [float(v) for v in occ] for x, occ in records[-1].occupations.items()}


def run(cfg: RunConfig, checkpoint_path: str | None = None, restore_path: str | None = None,
        check_oracle: bool = False) -> int:
    started = time.perf_counter()
    model = build_model(cfg)
    pcfg = propagator_config(cfg)
    out = output_dir(cfg)
    summary: dict = {"mode": pcfg.mode.value, "species": list(model.mixture.present)}
    dt_next = frame_energy = None
    if restore_path:
        cp = checkpoint.load(restore_path)
        if cp.grid != model.grid or cp.mixture != model.mixture:
            raise checkpoint.CheckpointError("checkpoint does not match the configured system")
        state, dt_next, frame_energy = cp.state, cp.dt_next, cp.frame_energy
        summary["restored_from"] = {"path": str(restore_path), "t": state.t}
    else:
        state = initial_state(cfg, model)
    if check_oracle:
        try:
            deviation = verify_oracle(model, state, cfg.run.seed)
            summary["oracle_max_deviation"] = deviation
            print(f"oracle cross-check: max deviation {deviation:.3e}")
        except oracle.OracleCapacityError as exc:
            summary["oracle_max_deviation"] = None
            print(f"oracle cross-check skipped: {exc}")

    writer = CsvObserver(out / "trajectory.csv", model, append=bool(restore_path))

    def save_checkpoint(s: SystemState, dt: float, energy: float) -> None:
        if checkpoint_path:
            checkpoint.save(checkpoint_path, checkpoint.Checkpoint(model.grid, model.mixture, s, dt, energy))

    status = EXIT_OK
    try:
        if pcfg.mode is prop.Mode.IMAGINARY_TIME:
            writer(prop.observe(model, state), state)
            result = prop.relax(model, state, pcfg)
            rec = prop.observe(model, result.state)
            writer(rec, result.state)
            summary.update(energy=result.energy, iterations=result.iterations,
                           residual=result.residual, orbital_gradient=result.orbital_residual,
                           mu_hermiticity_defect=result.mu_defect,
                           occupations=_summary_occupations([rec]))
            save_checkpoint(result.state, 0.0, 0.0)
        else:
            result = prop.propagate(model, state, pcfg, [writer], dt_next=dt_next,
                                    frame_energy=frame_energy, on_checkpoint=save_checkpoint)
            summary.update(energy=result.records[-1].energy.real if result.records else None,
                           energy_imag=result.records[-1].energy.imag if result.records else None,
                           steps=result.steps, rejected_steps=result.rejected,
                           correction_events=result.events, t_final=result.state.t,
                           occupations=_summary_occupations(result.records))
    except prop.StiffnessError as exc:
        summary.update(error=str(exc), t_failed=exc.t)
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_STIFF
    except prop.ConvergenceError as exc:
        summary.update(error=str(exc), residual_history=[list(h) for h in exc.history[-20:]])
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_NOT_CONVERGED
    finally:
        writer.close()
    summary["status"] = status
    summary["wall_time_s"] = time.perf_counter() - started
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default) + "\n")
    return status


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"cannot serialize {type(value).__name__}")


def run_oracle(cfg: RunConfig) -> int:
    """Dense full-CI reference in the grid-point basis."""
    model = build_model(cfg)
    pcfg = propagator_config(cfg)
    n = model.grid.n_points
    prim = oracle.primitive_mixture(model.mixture, n)
    eye = {x: np.eye(n, dtype=complex) / math.sqrt(model.grid.dx) for x in model.mixture.present}
    tables = grid1d.compute_tables(model.grid, model.one_body, model.interactions, eye)
    out = output_dir(cfg)
    summary: dict = {"mode": pcfg.mode.value, "dimension": prim.size}
    try:
        if pcfg.mode is prop.Mode.IMAGINARY_TIME:
            energy, _ = oracle.exact_ground(prim, tables)
            summary["energy"] = energy
            print(f"exact ground-state energy: {energy:.12g}")
        else:
            if model.time_dependent:
                print("error: the dense reference supports time-independent Hamiltonians only",
                      file=sys.stderr)
                return EXIT_VALIDATION
            state = initial_state(cfg, model)
            psi0 = oracle.to_primitive(model.mixture, state.C, state.orbitals, model.grid.dx)
            times = [0.0] + pcfg.output_times()
            path = out / "oracle_autocorrelation.csv"
            with open(path, "w", newline="") as handle:
                w = csv.writer(handle, lineterminator="\n")
                w.writerow(["t", "re_autocorrelation", "im_autocorrelation", "abs_autocorrelation"])
                for t, psi in zip(times, oracle.exact_propagate(prim, tables, psi0, times)):
                    a = complex(np.vdot(psi0, psi))
                    w.writerow([fmt(t), fmt(a.real), fmt(a.imag), fmt(abs(a))])
            summary["autocorrelation_file"] = str(path)
            print(f"wrote {path}")
    except oracle.OracleCapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    (out / "oracle_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mctdh3mix", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log correction events")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="relax or propagate the configured system")
    p_run.add_argument("config")
    p_run.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    p_run.add_argument("--verify-oracle", action="store_true",
                       help="compare the kernels with the dense Hamiltonian before running")
    p_run.add_argument("--checkpoint", metavar="PATH", help="write checkpoints to PATH")
    p_run.add_argument("--restore", metavar="PATH", help="continue from a checkpoint")
    p_val = sub.add_parser("validate", help="check a configuration file")
    p_val.add_argument("config")
    p_orc = sub.add_parser("oracle", help="dense full-CI reference run")
    p_orc.add_argument("config")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg, status = _load(args.config)
    if cfg is None:
        return status
    if args.command == "validate":
        print(f"{args.config}: ok")
        return EXIT_OK
    try:
        with threadpool_limits(limits=1):
            if args.command == "oracle":
                return run_oracle(cfg)
            if args.threads is not None and args.threads < 1:
                print("error: --threads must be at least 1", file=sys.stderr)
                return EXIT_VALIDATION
            set_num_threads(args.threads)
            return run(cfg, args.checkpoint, args.restore, args.verify_oracle)
    except checkpoint.CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
