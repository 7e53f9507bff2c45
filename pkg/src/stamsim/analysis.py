"""Observables and experiment post-processing.

Entanglement entropy, the analytic coherent-rotation trajectory, robustness
scans over miscalibrated control parameters, and truncation-convergence
audits.  Scans are deterministic: identical inputs produce byte-identical
CSV output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fock
from .evolution import run_sequence
from .fock import FockSpace, fidelity
from .stam import (build_amplified_sequence, build_hybrid_sequence,
                   hybrid_initial_state)


def binary_entropy(p):
    """H2(p) = -p log2 p - (1-p) log2 (1-p), with 0 log 0 := 0."""
    p = float(p)
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def entanglement_entropy(psi):
    """von Neumann entropy (bits) of the qubit partition of a pure state."""
    return fock.partial_trace_qubit(psi).entropy_bits()


def boson_partition_entropy(psi):
    """Entropy (bits) computed from the boson side via the singular values.

    For a pure bipartite state this must equal the qubit-partition entropy;
    kept separate as an independent cross-check route.
    """
    if psi.qubit_levels != 2:
        raise ValueError("state has no qubit factor")
    block = psi.amplitudes.reshape(2, psi.space.dim)
    weights = np.linalg.svd(block, compute_uv=False) ** 2
    weights = weights[weights > 0]
    return float(-np.sum(weights * np.log2(weights)))


def coherent_trajectory_analytic(theta_prev, lam_k, epsilon, omega_c, t):
    """<a>(t) during one first-order pulse: rotation about lam_k at rate w_c.

    Returns Phi(t)*epsilon with Phi(t) = (theta_prev - lam_k) e^{-i w_c t} + lam_k.
    """
    phi = (theta_prev - lam_k) * np.exp(-1j * omega_c * t) + lam_k
    return phi * complex(epsilon)


@dataclass
class ScanResult:
    """Grid-scan fidelities with per-cell truncation-convergence flags."""

    columns: tuple
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, *values):
        if len(values) != len(self.columns):
            raise ValueError("row length does not match columns")
        fid = dict(zip(self.columns, values))["fidelity"]
        if not 0.0 <= fid <= 1.0:
            raise ValueError(f"fidelity {fid!r} outside [0, 1]")
        self.rows.append(tuple(values))

    def column(self, name):
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def cell(self, **key):
        idx = [self.columns.index(k) for k in key]
        for row in self.rows:
            if all(row[i] == v for i, v in zip(idx, key.values())):
                return dict(zip(self.columns, row))
        raise KeyError(f"no cell matching {key}")

    def to_csv(self):
        lines = [",".join(self.columns)]
        for row in self.rows:
            parts = []
            for v in row:
                if isinstance(v, bool):
                    parts.append("true" if v else "false")
                elif isinstance(v, (int, np.integer)):
                    parts.append(str(int(v)))
                else:
                    parts.append(repr(float(v)))
            lines.append(",".join(parts))
        return "\n".join(lines) + "\n"


def _hybrid_scan_dim(theta, margin=1.25):
    a = abs(theta) * margin
    return max(48, int(a * a + 8 * a) + 16)


def _hybrid_cell_fidelity(dim, theta, n_pulses, omega_c, delta_lambda, delta_omega):
    space = FockSpace(dim, omega_c)
    seq = build_hybrid_sequence(space, theta, n_pulses, omega_c,
                                delta_lambda=delta_lambda, delta_omega=delta_omega)
    out = run_sequence(seq, hybrid_initial_state(space))
    return fidelity(out, seq.final_target)


def robustness_scan_boson(theta, omega_c, n_list, delta_lambda_grid,
                          delta_omega_grid, dim=None, audit=True, audit_tol=1e-6):
    """Hybrid-protocol fidelity under static miscalibration of lambda_k and w_c.

    Every lambda_k is scaled by (1 + delta_lambda) and the Hamiltonian
    frequency by (1 + delta_omega) while the pulse clock keeps the ideal t_p;
    fidelity is always taken against the ideal target.  Each cell optionally
    reruns at doubled dimension to set its converged flag.
    """
    if dim is None:
        dim = _hybrid_scan_dim(theta)
    result = ScanResult(("delta_lambda", "delta_omega", "n_pulses", "fidelity",
                         "converged"),
                        metadata={"theta": theta, "omega_c": omega_c, "dim": dim})
    for dl in delta_lambda_grid:
        for dw in delta_omega_grid:
            for n in n_list:
                f = _hybrid_cell_fidelity(dim, theta, n, omega_c, dl, dw)
                converged = True
                if audit:
                    f2 = _hybrid_cell_fidelity(2 * dim, theta, n, omega_c, dl, dw)
                    converged = abs(f - f2) < audit_tol
                result.append(float(dl), float(dw), int(n), f, converged)
    return result


def _amplified_cell_fidelity(dim, lam, n_pulses, omega_c, omega_rabi, delta,
                             coupling_during_flip):
    space = FockSpace(dim, omega_c)
    seq = build_amplified_sequence(space, lam, n_pulses, omega_c, omega_rabi,
                                   amp_error=delta,
                                   coupling_during_flip=coupling_during_flip)
    out = run_sequence(seq, hybrid_initial_state(space))
    return fidelity(out, seq.final_target)


def robustness_scan_qubit(lam, n_list, delta_grid, omega_rabi, omega_c, dim=None,
                          coupling_during_flip=True, audit=True, audit_tol=1e-6):
    """Amplified-cat fidelity vs static qubit-drive amplitude error delta.

    Each (n, delta) cell targets the cat with Theta = 2*n*lam.  One error
    axis only, so the CSV schema is (delta, n_pulses, fidelity, converged).
    """
    if dim is None:
        dim = _hybrid_scan_dim(2 * max(n_list) * abs(lam))
    result = ScanResult(("delta", "n_pulses", "fidelity", "converged"),
                        metadata={"lam": lam, "omega_c": omega_c,
                                  "omega_rabi": omega_rabi, "dim": dim,
                                  "coupling_during_flip": coupling_during_flip})
    for delta in delta_grid:
        for n in n_list:
            f = _amplified_cell_fidelity(dim, lam, n, omega_c, omega_rabi, delta,
                                         coupling_during_flip)
            converged = True
            if audit:
                f2 = _amplified_cell_fidelity(2 * dim, lam, n, omega_c, omega_rabi,
                                              delta, coupling_during_flip)
                converged = abs(f - f2) < audit_tol
            result.append(float(delta), int(n), f, converged)
    return result


@dataclass(frozen=True)
class AuditReport:
    dim: int
    dim_doubled: int
    fidelity: float
    fidelity_doubled: float
    passed: bool

    @property
    def delta(self):
        return abs(self.fidelity - self.fidelity_doubled)


def convergence_audit(run_fidelity, dim, tol=1e-6):
    """Rerun an experiment at doubled truncation and compare final fidelities.

    ``run_fidelity`` maps a dimension to the run's final fidelity.  Report
    only; callers decide whether a failed audit is fatal.
    """
    f1 = run_fidelity(int(dim))
    f2 = run_fidelity(2 * int(dim))
    return AuditReport(int(dim), 2 * int(dim), float(f1), float(f2),
                       abs(f1 - f2) < tol)


def resolve_dim_by_audit(run_fidelity, start_dim, tol=1e-6, max_dim=1 << 14):
    """Double the truncation until the final fidelity stops moving.

    Returns (dim, AuditReport) for the first dimension whose doubling changes
    the fidelity by less than tol; raises TruncationError past max_dim.
    """
    dim = int(start_dim)
    cache = {}

    def run(d):
        if d not in cache:
            cache[d] = run_fidelity(d)
        return cache[d]

    while dim <= max_dim:
        report = convergence_audit(run, dim, tol=tol)
        if report.passed:
            return dim, report
        dim *= 2
    raise fock.TruncationError(f"no convergence up to dim={max_dim}")
