"""Lindblad propagation on a uniform time grid.

The generator is held as a Hamiltonian plus (rate, jump operator) pairs.
Two independent evaluation routes are provided and cross-validated in the
test suite:

* a vectorized superoperator (column-stacking convention) whose matrix
  exponential is computed once per (generator, step) and then applied
  repeatedly; when the Hamiltonian and every jump operator share a common
  block structure, the exponential is taken block-by-block on the invariant
  sectors, which is algebraically identical and much cheaper;
* a classic fixed-step fourth-order Runge-Kutta integrator acting on the
  operator form of the equation of motion, kept as an independent oracle.

Recorded states are lightly repaired each step (re-Hermitized, and trace
renormalized only when the drift is within the repair tolerance); positivity
is never enforced here.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from .linalg import SubsystemLayout, dag, expm, is_hermitian, partial_trace

TRACE_REPAIR_TOL = 1e-9
TRACE_ABORT_TOL = 1e-6
HERM_ABORT_TOL = 1e-6
EIG_ABORT_TOL = -1e-5


class PropagationError(RuntimeError):
    """State invariants broke down beyond repair during propagation."""


@dataclass(frozen=True)
class LindbladGenerator:
    """Hamiltonian plus weighted jump operators on one Hilbert space."""

    h: np.ndarray
    jumps: list  # (rate, operator) pairs
    dim: int = 0

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        object.__setattr__(self, "h", h)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("Hamiltonian must be square")
        dim = h.shape[0]
        object.__setattr__(self, "dim", dim)
        if not is_hermitian(h):
            raise ValueError("Hamiltonian is not Hermitian")
        cleaned = []
        for rate, op in self.jumps:
            if rate < 0:
                raise ValueError("jump rates must be non-negative")
            op = np.asarray(op, dtype=complex)
            if op.shape != (dim, dim):
                raise ValueError("jump operator dimension mismatch")
            cleaned.append((float(rate), op))
        object.__setattr__(self, "jumps", cleaned)

    @classmethod
    def from_system(cls, ops) -> "LindbladGenerator":
        return cls(h=ops.hamiltonian, jumps=list(ops.jumps), dim=ops.hamiltonian.shape[0])

    def norm_bound(self) -> float:
        """Cheap upper bound on the superoperator spectral norm."""
        bound = 2.0 * np.linalg.norm(self.h, 2)
        for rate, op in self.jumps:
            bound += 2.0 * rate * np.linalg.norm(op, 2) ** 2
        return float(bound)


def _liouvillian_block(h_row, h_col, jumps_row_col) -> np.ndarray:
    """Generator of d/dt rho_block for one (row sector, column sector) pair.

    With column stacking, vec(A X B) = (B^T kron A) vec(X); the row-sector
    restriction acts from the left, the column-sector one from the right.
    """
    nr, nc = h_row.shape[0], h_col.shape[0]
    ir = np.eye(nr, dtype=complex)
    ic = np.eye(nc, dtype=complex)
    l = -1j * (np.kron(ic, h_row) - np.kron(h_col.T, ir))
    for rate, j_row, j_col in jumps_row_col:
        k_row = dag(j_row) @ j_row
        k_col = dag(j_col) @ j_col
        l += rate * (
            np.kron(j_col.conj(), j_row)
            - 0.5 * np.kron(ic, k_row)
            - 0.5 * np.kron(k_col.T, ir)
        )
    return l


def build_liouvillian(gen: LindbladGenerator) -> np.ndarray:
    """Dense superoperator L with vec(rho') = L vec(rho), column stacking."""
    jumps = [(rate, op, op) for rate, op in gen.jumps]
    return _liouvillian_block(gen.h, gen.h, jumps)


def step_propagator(l: np.ndarray, dt: float) -> np.ndarray:
    """exp(L dt), for repeated application on a uniform grid."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return expm(l * dt)


def find_invariant_sectors(gen: LindbladGenerator) -> list[np.ndarray]:
    """Basis partition into sectors preserved by H and every jump operator.

    Two basis indices belong to the same sector when any operator connects
    them; the returned index arrays are sorted and cover the whole space.
    A single sector means no usable block structure.
    """
    pattern = gen.h != 0
    for _, op in gen.jumps:
        pattern = pattern | (op != 0)
    pattern = pattern | pattern.T
    graph = scipy.sparse.csr_matrix(pattern)
    n_comp, labels = scipy.sparse.csgraph.connected_components(graph, directed=False)
    return [np.nonzero(labels == c)[0] for c in range(n_comp)]


class _BlockStepper:
    """Applies exp(L dt) blockwise over invariant sector pairs."""

    def __init__(self, gen: LindbladGenerator, dt: float, sectors: list[np.ndarray]):
        self.dim = gen.dim
        self.blocks = []
        h_sub = [gen.h[np.ix_(s, s)] for s in sectors]
        j_sub = [[(rate, op[np.ix_(s, s)]) for rate, op in gen.jumps] for s in sectors]
        for a, rows in enumerate(sectors):
            for b, cols in enumerate(sectors):
                jumps_rc = [
                    (rate_r, jr, j_sub[b][k][1])
                    for k, (rate_r, jr) in enumerate(j_sub[a])
                ]
                l_ab = _liouvillian_block(h_sub[a], h_sub[b], jumps_rc)
                self.blocks.append((rows, cols, step_propagator(l_ab, dt)))
        self._active = list(range(len(self.blocks)))

    def restrict_to_nonzero(self, rho: np.ndarray) -> None:
        """Skip blocks that start exactly zero; they stay zero under the flow."""
        self._active = [
            i
            for i, (rows, cols, _) in enumerate(self.blocks)
            if np.any(rho[np.ix_(rows, cols)] != 0)
        ]

    def step(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho)
        for i in self._active:
            rows, cols, prop = self.blocks[i]
            block = rho[np.ix_(rows, cols)]
            moved = prop @ block.reshape(-1, order="F")
            out[np.ix_(rows, cols)] = moved.reshape(block.shape, order="F")
        return out


def _make_stepper(gen: LindbladGenerator, dt: float, method: str) -> _BlockStepper:
    if method not in ("auto", "dense", "sector"):
        raise ValueError(f"unknown propagation method {method!r}")
    if method == "dense":
        sectors = [np.arange(gen.dim)]
    else:
        sectors = find_invariant_sectors(gen)
        if method == "auto" and len(sectors) == 1:
            sectors = [np.arange(gen.dim)]
    return _BlockStepper(gen, dt, sectors)


@dataclass
class Trajectory:
    """Uniformly sampled propagation record."""

    t_grid: np.ndarray
    step: float
    expectations: dict = field(default_factory=dict)
    marginals: np.ndarray | None = None
    states: np.ndarray | None = None
    final_state: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return len(self.t_grid)


def _validate_initial_state(rho0: np.ndarray, dim: int) -> np.ndarray:
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (dim, dim):
        raise ValueError(f"initial state shape {rho0.shape} != generator dim {dim}")
    if abs(np.trace(rho0).real - 1.0) > 1e-9 or not is_hermitian(rho0, atol=1e-9):
        raise ValueError("initial state must be Hermitian with unit trace")
    return rho0.copy()


def _grid_steps(t_end: float, dt: float) -> int:
    if dt <= 0 or t_end <= 0:
        raise ValueError("t_end and dt must be positive")
    n = int(round(t_end / dt))
    if n < 1 or abs(n * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError(f"dt={dt} does not divide t_end={t_end} within rounding")
    return n


class _Recorder:
    """Per-step observable contraction and state hygiene bookkeeping."""

    def __init__(self, n_rec, record, marginal_keep, layout, keep_states, dim):
        self.record = record or {}
        self.expect = {name: np.empty(n_rec) for name in self.record}
        self.marginal_keep = marginal_keep
        self.layout = layout
        if marginal_keep is not None:
            if layout is None:
                raise ValueError("marginal recording requires a layout")
            kd = int(np.prod([layout.dims[k] for k in marginal_keep]))
            self.marginals = np.empty((n_rec, kd, kd), dtype=complex)
        else:
            self.marginals = None
        self.states = np.empty((n_rec, dim, dim), dtype=complex) if keep_states else None
        self.max_trace_drift = 0.0
        self.max_herm_dev = 0.0
        self.min_eigenvalue = np.inf
        self.eig_checks = 0

    def take(self, i: int, rho: np.ndarray) -> None:
        for name, op in self.record.items():
            self.expect[name][i] = np.einsum("ij,ji->", op, rho).real
        if self.marginals is not None:
            self.marginals[i] = partial_trace(rho, self.marginal_keep, self.layout)
        if self.states is not None:
            self.states[i] = rho

    def check_eigs(self, rho: np.ndarray, t: float) -> None:
        w_min = float(np.min(np.linalg.eigvalsh(0.5 * (rho + dag(rho)))))
        self.min_eigenvalue = min(self.min_eigenvalue, w_min)
        self.eig_checks += 1
        if w_min < EIG_ABORT_TOL:
            raise PropagationError(
                f"negative population {w_min:.3e} at t={t:.6g} exceeds abort tolerance"
            )

    def hygiene(self, rho: np.ndarray, t: float) -> np.ndarray:
        herm_dev = float(np.max(np.abs(rho - dag(rho))))
        self.max_herm_dev = max(self.max_herm_dev, herm_dev)
        if herm_dev > HERM_ABORT_TOL:
            raise PropagationError(
                f"Hermiticity deviation {herm_dev:.3e} at t={t:.6g} exceeds abort tolerance"
            )
        rho = 0.5 * (rho + dag(rho))
        drift = abs(np.trace(rho).real - 1.0)
        self.max_trace_drift = max(self.max_trace_drift, drift)
        if drift > TRACE_ABORT_TOL:
            raise PropagationError(
                f"trace drift {drift:.3e} at t={t:.6g} exceeds abort tolerance"
            )
        if drift <= TRACE_REPAIR_TOL:
            rho = rho / np.trace(rho).real
        return rho

    def stats(self) -> dict:
        return {
            "max_trace_drift": self.max_trace_drift,
            "max_herm_dev": self.max_herm_dev,
            "min_eigenvalue": None if np.isinf(self.min_eigenvalue) else self.min_eigenvalue,
            "eig_checks": self.eig_checks,
        }


def propagate(
    gen: LindbladGenerator,
    rho0: np.ndarray,
    t_end: float,
    dt: float,
    record: dict | None = None,
    marginal_keep=None,
    layout: SubsystemLayout | None = None,
    keep_states: bool = False,
    method: str = "auto",
    check_stride: int = 100,
) -> Trajectory:
    """Propagate on the grid 0, dt, ..., t_end with a precomputed step map.

    ``record`` maps names to Hermitian operators whose expectation values are
    contracted on the fly; ``marginal_keep`` (with ``layout``) additionally
    records the reduced state on the kept sites at every grid point. Full
    states are retained only on request (memory grows with the grid).
    """
    rho = _validate_initial_state(rho0, gen.dim)
    n_steps = _grid_steps(t_end, dt)
    stepper = _make_stepper(gen, dt, method)
    stepper.restrict_to_nonzero(rho)

    rec = _Recorder(n_steps + 1, record, marginal_keep, layout, keep_states, gen.dim)
    t_grid = dt * np.arange(n_steps + 1)
    for i in range(n_steps + 1):
        rec.take(i, rho)
        if check_stride and i % check_stride == 0:
            rec.check_eigs(rho, t_grid[i])
        if i < n_steps:
            rho = stepper.step(rho)
            rho = rec.hygiene(rho, t_grid[i + 1])
    rec.check_eigs(rho, t_grid[-1])

    return Trajectory(
        t_grid=t_grid,
        step=dt,
        expectations=rec.expect,
        marginals=rec.marginals,
        states=rec.states,
        final_state=rho,
        stats=rec.stats(),
    )


def _lindblad_rhs(h: np.ndarray, jumps_pre: list, rho: np.ndarray) -> np.ndarray:
    out = -1j * (h @ rho - rho @ h)
    for rate, op, op_dag, op_sq in jumps_pre:
        out += rate * (op @ rho @ op_dag - 0.5 * (op_sq @ rho + rho @ op_sq))
    return out


def rk4_reference(
    gen: LindbladGenerator,
    rho0: np.ndarray,
    t_end: float,
    dt: float,
    record: dict | None = None,
    marginal_keep=None,
    layout: SubsystemLayout | None = None,
    keep_states: bool = False,
    record_every: int = 1,
) -> Trajectory:
    """Fixed-step RK4 integration of the operator-form equation of motion.

    Independent of the vectorized-superoperator route; intended for
    cross-checks and small instances. ``record_every`` thins the recording
    grid to every k-th integration step.
    """
    rho = _validate_initial_state(rho0, gen.dim)
    n_steps = _grid_steps(t_end, dt)
    if record_every < 1 or n_steps % record_every != 0:
        raise ValueError("record_every must divide the number of steps")
    if gen.norm_bound() * dt > 0.1:
        warnings.warn(
            "RK4 step looks too coarse for this generator (||L|| dt > 0.1)",
            RuntimeWarning,
        )
    jumps_pre = [(rate, op, dag(op), dag(op) @ op) for rate, op in gen.jumps]

    n_rec = n_steps // record_every + 1
    rec = _Recorder(n_rec, record, marginal_keep, layout, keep_states, gen.dim)
    t_grid = (dt * record_every) * np.arange(n_rec)
    rec.take(0, rho)
    rec.check_eigs(rho, 0.0)
    for i in range(1, n_steps + 1):
        k1 = _lindblad_rhs(gen.h, jumps_pre, rho)
        k2 = _lindblad_rhs(gen.h, jumps_pre, rho + 0.5 * dt * k1)
        k3 = _lindblad_rhs(gen.h, jumps_pre, rho + 0.5 * dt * k2)
        k4 = _lindblad_rhs(gen.h, jumps_pre, rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = rec.hygiene(rho, i * dt)
        if i % record_every == 0:
            rec.take(i // record_every, rho)
    rec.check_eigs(rho, t_end)

    return Trajectory(
        t_grid=t_grid,
        step=dt * record_every,
        expectations=rec.expect,
        marginals=rec.marginals,
        states=rec.states,
        final_state=rho,
        stats=rec.stats(),
    )
