"""Time integration: adaptive real-time propagation, Lanczos propagation of the
coefficients with frozen orbitals, and imaginary-time relaxation."""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import densops, rdm
from .eom import Model, SystemState, gram_schmidt, hermiticity_defect, orthonormality_defect

log = logging.getLogger(__name__)

MIN_STEP = 1e-14
DRIFT_THRESHOLD = 1e-8
SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


class Mode(enum.Enum):
    REAL_TIME = "realtime"
    IMAGINARY_TIME = "imaginarytime"
    FIXED_ORBITAL_CI = "fixedorbitalci"


class StiffnessError(RuntimeError):
    def __init__(self, message: str, t: float, dt: float, trajectory: list | None = None):
        super().__init__(message)
        self.t = t
        self.dt = dt
        self.trajectory = trajectory or []


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, history: list):
        super().__init__(message)
        self.history = history


@dataclass
class PropagatorConfig:
    mode: Mode = Mode.REAL_TIME
    t_end: float = 1.0
    output_interval: float = 0.1
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    krylov_dim: int = 12
    max_step: float = math.inf
    initial_step: float = 1e-3
    max_iterations: int = 100000
    residual_tol: float = 1e-6

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = Mode(self.mode.lower().replace("_", "").replace("-", ""))
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.krylov_dim < 2:
            raise ValueError("the Krylov dimension must be at least 2")
        if not self.output_interval > 0 or not self.max_step > 0 or not self.initial_step > 0:
            raise ValueError("output interval and step sizes must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")

    def output_times(self, t0: float = 0.0) -> list[float]:
        count = int(math.floor((self.t_end - t0) / self.output_interval + 1e-9))
        times = [t0 + (i + 1) * self.output_interval for i in range(count)]
        if not times or times[-1] < self.t_end - 1e-12:
            times.append(self.t_end)
        return [t for t in times if t > t0 + 1e-15]


# -- embedded Runge-Kutta 5(4) ---------------------------------------------------

_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_E = _B - np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])

Rhs = Callable[[float, np.ndarray], np.ndarray]


@dataclass
class StepResult:
    y: np.ndarray
    error: float
    k_last: np.ndarray


def rk_step(rhs: Rhs, t: float, y: np.ndarray, dt: float, rel_tol: float, abs_tol: float,
            k1: np.ndarray | None = None) -> StepResult:
    """One Dormand-Prince step; ``error`` is the scaled max-norm error (accept if <= 1).

    ``k_last`` is the derivative at the new point and can be reused as
    ``k1`` of the next step.
    """
    ks = [rhs(t, y) if k1 is None else k1]
    # a step that overflows is rejected like any other inaccurate step
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, 7):
            yi = y + dt * sum(a * k for a, k in zip(_A[i], ks) if a != 0)
            if not np.all(np.isfinite(yi)):
                return StepResult(y, math.inf, ks[0])
            ks.append(rhs(t + _C[i] * dt, yi))
        y_new = y + dt * sum(b * k for b, k in zip(_B, ks) if b != 0)
        err = dt * sum(e * k for e, k in zip(_E, ks))
        scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        error = float(np.max(np.abs(err / scale)))
    if not math.isfinite(error):
        error = math.inf
    return StepResult(y_new, error, ks[-1])


def next_step(dt: float, error: float) -> float:
    factor = MAX_FACTOR if error == 0 else SAFETY * error ** -0.2
    return dt * min(MAX_FACTOR, max(MIN_FACTOR, factor))


# -- short iterative Lanczos -------------------------------------------------------

def sil_step(C: np.ndarray, apply_H: Callable[[np.ndarray], np.ndarray], dt: float,
             krylov_dim: int = 12, abs_tol: float = 1e-10) -> np.ndarray:
    """``exp(-i H dt) C`` in a Lanczos subspace of at most ``krylov_dim`` vectors."""
    norm = math.sqrt(float(np.sum(np.abs(C) ** 2)))
    if norm == 0:
        return np.zeros_like(C)
    basis = [C / norm]
    alpha: list[float] = []
    beta: list[float] = []
    coeffs = None
    for j in range(krylov_dim):
        w = apply_H(basis[j])
        alpha.append(float(np.sum(np.conj(basis[j]) * w).real))
        # full re-orthogonalization keeps the basis unitary to rounding
        for v in basis:
            w = w - np.sum(np.conj(v) * w) * v
        b = math.sqrt(float(np.sum(np.abs(w) ** 2)))
        T = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
        coeffs = scipy.linalg.expm(-1j * dt * T)[:, 0]
        if b < abs_tol or b * abs(coeffs[-1]) < abs_tol or j == krylov_dim - 1:
            break
        beta.append(b)
        basis.append(w / b)
    out = sum(c * v for c, v in zip(coeffs, basis))
    return out * norm


# -- observables -------------------------------------------------------------------

@dataclass
class Record:
    t: float
    energy: complex
    norm: float
    occupations: dict[str, np.ndarray]
    positions: dict[str, float]
    orthonormality: float


def observe(model: Model, state: SystemState, HC: np.ndarray | None = None) -> Record:
    mix, grid = model.mixture, model.grid
    if HC is None:
        HC = model.apply_hamiltonian(state)
    norm2 = float(np.sum(np.abs(state.C) ** 2))
    energy = densops.inner(state.C, HC) / norm2
    occupations, positions = {}, {}
    defect = 0.0
    for x in mix.present:
        phi = state.orbitals[x]
        r1 = rdm.rdm1(mix, state.C, x) / norm2
        occupations[x] = rdm.natural_occupations(r1)
        xmat = np.conj(phi) @ (grid.x * phi).T * grid.dx
        positions[x] = float(np.sum(r1 * xmat).real / mix.spec(x).n_particles)
        defect = max(defect, orthonormality_defect(phi, grid.dx))
    return Record(state.t, energy, math.sqrt(norm2), occupations, positions, defect)


Observer = Callable[[Record, SystemState], None]


@dataclass
class PropagationResult:
    state: SystemState
    records: list[Record]
    dt_next: float
    steps: int = 0
    rejected: int = 0
    events: list[str] = field(default_factory=list)
    frame_energy: float = 0.0


def _rhs(model: Model, imaginary: bool, shift: float = 0.0) -> Rhs:
    """Flat right-hand side; ``shift`` is subtracted from the Hamiltonian in the
    coefficient equation (a global phase frame)."""
    def f(t: float, y: np.ndarray) -> np.ndarray:
        state = model.unpack(y, t)
        dC, dphi, _, _ = model.evaluate(state, imaginary)
        if shift:
            dC = dC + 1j * shift * state.C
        return model.pack(SystemState(t, dC, dphi))
    return f


def _correct_drift(model: Model, state: SystemState, events: list[str]) -> bool:
    changed = False
    for x in model.mixture.present:
        defect = orthonormality_defect(state.orbitals[x], model.grid.dx)
        if defect > DRIFT_THRESHOLD:
            state.orbitals[x] = gram_schmidt(state.orbitals[x], model.grid.dx)
            message = f"t={state.t:.6g}: re-orthonormalized species {x} (defect {defect:.2e})"
            log.info(message)
            events.append(message)
            changed = True
    drift = abs(math.sqrt(float(np.sum(np.abs(state.C) ** 2))) - 1.0)
    if drift > DRIFT_THRESHOLD:
        state.C = densops.normalize(state.C)
        message = f"t={state.t:.6g}: renormalized coefficients (drift {drift:.2e})"
        log.info(message)
        events.append(message)
        changed = True
    return changed


def propagate(model: Model, state: SystemState, config: PropagatorConfig,
              observers: Sequence[Observer] = (), dt_next: float | None = None,
              frame_energy: float | None = None,
              on_checkpoint: Callable[[SystemState, float, float], None] | None = None
              ) -> PropagationResult:
    """Propagate to ``config.t_end`` calling observers at every output time.

    The initial state is reported too unless the run resumes from a
    checkpoint (``dt_next`` given).  Real-time integration runs in a frame
    rotating with ``frame_energy`` (default: the initial energy); the global
    phase ``exp(-i E t)`` is restored exactly on output, which removes the
    fastest trivial oscillation from the error budget of the integrator.

    ``on_checkpoint(state, dt_next, frame_energy)`` is called after every
    output time with everything needed to resume the run bit-for-bit.
    """
    if config.mode is Mode.IMAGINARY_TIME:
        raise ValueError("use relax() for imaginary-time propagation")
    state = state.copy()
    records: list[Record] = []

    def emit(s: SystemState) -> None:
        rec = observe(model, s)
        records.append(rec)
        for obs in observers:
            obs(rec, s)

    if dt_next is None:
        emit(state)
    if config.mode is Mode.FIXED_ORBITAL_CI:
        return _propagate_ci(model, state, config, emit, records)

    if frame_energy is None:
        frame_energy = float(model.energy(state).real)

    def to_lab(y: np.ndarray, t: float) -> SystemState:
        s = model.unpack(y, t).copy()
        s.C = s.C * np.exp(-1j * frame_energy * t)
        return s

    rhs = _rhs(model, imaginary=False, shift=frame_energy)
    frame = state.copy()
    frame.C = frame.C * np.exp(1j * frame_energy * state.t)
    y = model.pack(frame)
    t = state.t
    dt = min(config.initial_step if dt_next is None else dt_next, config.max_step)
    result = PropagationResult(state, records, dt, frame_energy=frame_energy)
    k1 = None
    for target in config.output_times(t):
        while t < target - 1e-14 * max(1.0, abs(target)):
            clipped = t + dt >= target - 1e-14 * max(1.0, abs(target))
            h = target - t if clipped else dt
            step = rk_step(rhs, t, y, h, config.rel_tol, config.abs_tol, k1)
            if step.error <= 1.0:
                t = target if clipped else t + h
                y = step.y
                k1 = step.k_last
                result.steps += 1
                proposal = next_step(h, step.error)
                # a clipped step does not shrink the controller's proposal
                dt = min(max(proposal, dt) if clipped else proposal, config.max_step)
                current = model.unpack(y, t)
                if _correct_drift(model, current, result.events):
                    y = model.pack(current)
                    k1 = None
            else:
                result.rejected += 1
                dt = next_step(h, step.error)
            if dt < MIN_STEP:
                raise StiffnessError(f"step size {dt:.3e} fell below {MIN_STEP:g} at t={t:.6g}",
                                     t, dt, records)
        emit(to_lab(y, t))
        if on_checkpoint is not None:
            on_checkpoint(to_lab(y, t), dt, frame_energy)
    result.state = to_lab(y, t)
    result.dt_next = dt
    return result


def _propagate_ci(model: Model, state: SystemState, config: PropagatorConfig, emit,
                  records: list[Record]) -> PropagationResult:
    t, C = state.t, state.C
    tables = model.tables(state)
    step_size = config.max_step if math.isfinite(config.max_step) else config.output_interval
    result = PropagationResult(state, records, step_size)
    for target in config.output_times(t):
        while t < target - 1e-14 * max(1.0, abs(target)):
            h = min(step_size, target - t)
            if model.time_dependent:
                tables = model.tables(SystemState(t + 0.5 * h, C, state.orbitals))
            C = sil_step(C, lambda v: densops.apply_hamiltonian(model.mixture, tables, v), h,
                         config.krylov_dim, config.abs_tol)
            t = target if h == target - t else t + h
            result.steps += 1
        emit(SystemState(t, C, state.orbitals))
    result.state = SystemState(t, C, {k: v.copy() for k, v in state.orbitals.items()})
    return result


# -- imaginary-time relaxation -------------------------------------------------------

@dataclass
class RelaxResult:
    state: SystemState
    energy: float
    iterations: int
    residual: float
    orbital_residual: float
    mu_defect: float
    history: list[tuple[float, float, float]]


def _diagnostics(model: Model, state: SystemState):
    """Derivative vector, energy, coefficient residual and orbital gradient norm."""
    dC, dphi, HC, _ = model.evaluate(state, imaginary=True)
    energy = densops.inner(state.C, HC).real
    residual = math.sqrt(float(np.sum(np.abs(HC - energy * state.C) ** 2)))
    orbital = 0.0
    for x in model.mixture.present:
        r1 = rdm.rdm1(model.mixture, state.C, x)
        g = r1 @ dphi[x]        # occupation-weighted projected gradient
        orbital = max(orbital, math.sqrt(float(np.sum(np.abs(g) ** 2)) * model.grid.dx))
    return model.pack(SystemState(state.t, dC, dphi)), energy, residual, orbital


def relax(model: Model, state: SystemState, config: PropagatorConfig) -> RelaxResult:
    """Imaginary-time relaxation to the lowest stationary state.

    Converged when the energy change per step is at most ``abs_tol`` and the
    coefficient residual ``||HC - E C||``, the occupation-weighted orbital
    gradient and the non-Hermiticity of the Lagrange multipliers are all at
    most ``residual_tol``.
    """
    state = state.copy()
    state.C = densops.normalize(state.C)
    for x in model.mixture.present:
        state.orbitals[x] = gram_schmidt(state.orbitals[x], model.grid.dx)
    rhs = _rhs(model, imaginary=True)
    tau = 0.0
    y = model.pack(state)
    k1, energy, residual, orbital = _diagnostics(model, state)
    history = [(energy, residual, orbital)]
    dt = min(config.initial_step, config.max_step)
    for iteration in range(1, config.max_iterations + 1):
        step = rk_step(rhs, tau, y, dt, config.rel_tol, config.abs_tol, k1)
        if step.error > 1.0:
            dt = next_step(dt, step.error)
            if dt < MIN_STEP:
                raise StiffnessError(f"step size {dt:.3e} fell below {MIN_STEP:g}", tau, dt)
            continue
        tau += dt
        dt = min(next_step(dt, step.error), config.max_step)
        current = model.unpack(step.y, tau)
        current.C = densops.normalize(current.C)
        for x in model.mixture.present:
            current.orbitals[x] = gram_schmidt(current.orbitals[x], model.grid.dx)
        y = model.pack(current)
        k1, new_energy, residual, orbital = _diagnostics(model, current)
        history.append((new_energy, residual, orbital))
        change = abs(new_energy - energy)
        energy = new_energy
        if change <= config.abs_tol and residual <= config.residual_tol and orbital <= config.residual_tol:
            final = model.unpack(y, 0.0).copy()
            mu = model.lagrange_multipliers(final)
            defect = max(hermiticity_defect(m) for m in mu.values())
            if defect <= config.residual_tol:
                return RelaxResult(final, energy, iteration, residual, orbital, defect, history)
    raise ConvergenceError(
        f"relaxation did not converge in {config.max_iterations} iterations "
        f"(residual {residual:.2e}, orbital gradient {orbital:.2e})", history)
