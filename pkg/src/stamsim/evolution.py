"""Time evolution engines.

Constant-Hamiltonian propagation with trace recording, the scheduled sweep
used as the slow-control baseline, pulse-sequence execution and the
three-segment composite realization of a single pulse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fock
from .fock import TruncationError, expm_action, expm_action_sampled, fidelity
from .hamiltonians import free_hamiltonian, squeeze_generator


class StepConvergenceError(RuntimeError):
    """Halving the integration step kept changing the result."""


@dataclass(frozen=True)
class Schedule:
    """Sweep profile lambda(t) = a*exp(-b*(t/t_total - 1)^2) - c."""

    a: float
    b: float
    c: float
    t_total: float

    def __post_init__(self):
        if self.t_total <= 0:
            raise ValueError("t_total must be > 0")
        lam0, lam_end = self.value(0.0), self.value(self.t_total)
        if abs(lam0) > 0.01 * abs(lam_end):
            raise ValueError(
                f"schedule does not start near zero: lambda(0)={lam0!r}, "
                f"lambda(T)={lam_end!r}"
            )
        grid = self.value(np.linspace(0.0, self.t_total, 10_000))
        steps = np.diff(grid)
        if not (np.all(steps >= 0) or np.all(steps <= 0)):
            raise ValueError("schedule is not monotonic on [0, T]")

    def value(self, t):
        return self.a * np.exp(-self.b * (t / self.t_total - 1.0) ** 2) - self.c

    @property
    def theta(self):
        """End value lambda(T) = a - c."""
        return self.a - self.c


@dataclass
class Segment:
    """One constant-Hamiltonian piece of a pulse sequence."""

    hamiltonian: object
    duration: float
    checkpoint: bool = False
    label: str = ""
    target: object = None  # expected state after this segment (canonical initial state)


@dataclass
class PulseSequence:
    segments: list
    final_target: object = None
    metadata: dict = field(default_factory=dict)

    @property
    def total_time(self):
        return float(sum(seg.duration for seg in self.segments))


class TraceRecord:
    """Columns of (t, fidelity_target, fidelity_instantaneous, entropy, <a>, norm)."""

    def __init__(self):
        self.t = []
        self.fidelity_target = []
        self.fidelity_instantaneous = []
        self.entropy_bits = []
        self.a_expect = []
        self.norm = []

    def append(self, t, f_target, f_inst, entropy, a_expect, norm):
        if self.t and t <= self.t[-1]:
            raise ValueError(f"trace times must increase: {t!r} after {self.t[-1]!r}")
        self.t.append(float(t))
        self.fidelity_target.append(float(f_target))
        self.fidelity_instantaneous.append(float(f_inst))
        self.entropy_bits.append(float(entropy))
        self.a_expect.append(complex(a_expect))
        self.norm.append(float(norm))

    def __len__(self):
        return len(self.t)

    def to_csv(self):
        lines = ["t_us,fidelity_target,fidelity_instantaneous,entropy,re_a,im_a,norm"]
        for i in range(len(self.t)):
            a = self.a_expect[i]
            lines.append(
                f"{self.t[i] * 1e6!r},{self.fidelity_target[i]!r},"
                f"{self.fidelity_instantaneous[i]!r},{self.entropy_bits[i]!r},"
                f"{a.real!r},{a.imag!r},{self.norm[i]!r}"
            )
        return "\n".join(lines) + "\n"


class TraceRecorder:
    """Collects trace rows and checkpoint fidelities during a run.

    ``final_target`` feeds the fidelity_target column.  The instantaneous
    column uses whatever target the engine supplies for the current segment
    or sample (next checkpoint during sequences, the moving adiabatic target
    during sweeps); it falls back to the final target.
    """

    def __init__(self, final_target=None, samples_per_segment=200):
        self.final_target = final_target
        self.samples_per_segment = int(samples_per_segment)
        self.record = TraceRecord()
        self.checkpoints = []  # (index, time, fidelity vs checkpoint target)

    def emit(self, t, psi, instantaneous_target=None):
        f_tgt = fidelity(psi, self.final_target) if self.final_target is not None else 0.0
        inst = instantaneous_target if instantaneous_target is not None else self.final_target
        f_inst = fidelity(psi, inst) if inst is not None else 0.0
        entropy = 0.0
        if psi.qubit_levels == 2:
            entropy = fock.partial_trace_qubit(psi).entropy_bits()
        self.record.append(t, f_tgt, f_inst, entropy, psi.expect_a(), psi.norm())

    def mark_checkpoint(self, index, t, psi, target):
        self.checkpoints.append((index, t, fidelity(psi, target)))


def propagate_const(hamiltonian, t, psi, recorder=None, samples=None, t_offset=0.0,
                    instantaneous_target=None, method="auto"):
    """Apply exp(-i*H*t); with a recorder, also emit evenly spaced trace samples."""
    if t < 0:
        raise ValueError("segment duration must be >= 0")
    if recorder is None:
        return expm_action(hamiltonian, t, psi, method=method)
    if len(recorder.record) == 0:
        recorder.emit(t_offset, psi, instantaneous_target)
    n_s = recorder.samples_per_segment if samples is None else int(samples)
    if t == 0 or n_s < 1:
        out = expm_action(hamiltonian, t, psi, method=method)
        if t > 0:
            recorder.emit(t_offset + t, out, instantaneous_target)
        return out
    times = np.linspace(t / n_s, t, n_s)
    out, states = expm_action_sampled(hamiltonian, t, psi, times, method=method)
    for tau, state in zip(times, states):
        recorder.emit(t_offset + tau, state, instantaneous_target)
    return out


def run_sequence(seq, psi, recorder=None, method="auto"):
    """Apply the segments of a PulseSequence in order.

    Checkpoint fidelities are taken against each checkpoint segment's target
    state; the same target feeds the instantaneous-fidelity column while the
    segment runs.
    """
    t0 = 0.0
    for index, seg in enumerate(seq.segments):
        psi = propagate_const(
            seg.hamiltonian, seg.duration, psi, recorder=recorder, t_offset=t0,
            instantaneous_target=seg.target, method=method,
        )
        t0 += seg.duration
        if seg.checkpoint and recorder is not None and seg.target is not None:
            recorder.mark_checkpoint(index, t0, psi, seg.target)
    return psi


def propagate_schedule(build_hamiltonian, schedule, psi, steps, recorder=None,
                       instantaneous_target_fn=None, method="auto"):
    """Integrate a scheduled sweep with piecewise-constant midpoint Hamiltonians.

    Each slice [t_i, t_i+dt] evolves under H(lambda(t_i + dt/2)), which keeps
    the integration unconditionally norm-preserving.  ``instantaneous_target_fn``
    maps lambda to the moving target state for the trace.
    """
    steps = int(steps)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    dt = schedule.t_total / steps
    if recorder is not None and len(recorder.record) == 0:
        inst = instantaneous_target_fn(schedule.value(0.0)) if instantaneous_target_fn else None
        recorder.emit(0.0, psi, inst)
    emit_every = max(1, steps // (recorder.samples_per_segment if recorder else steps))
    for i in range(steps):
        lam_mid = schedule.value((i + 0.5) * dt)
        h = build_hamiltonian(lam_mid)
        psi = expm_action(h, dt, psi, method=method)
        if recorder is not None and ((i + 1) % emit_every == 0 or i == steps - 1):
            t = (i + 1) * dt
            inst = instantaneous_target_fn(schedule.value(t)) if instantaneous_target_fn else None
            recorder.emit(t, psi, inst)
    return psi


def propagate_schedule_adaptive(build_hamiltonian, schedule, psi, target,
                                start_steps=256, max_steps=1 << 20, tol=1e-6,
                                method="auto"):
    """Double the slice count until the final fidelity moves by less than tol.

    Returns (final_state, steps_used, last_delta).
    """
    steps = int(start_steps)
    prev = None
    while steps <= max_steps:
        out = propagate_schedule(build_hamiltonian, schedule, psi, steps, method=method)
        f = fidelity(out, target)
        if prev is not None and abs(f - prev[1]) < tol:
            return out, steps, abs(f - prev[1])
        prev = (out, f)
        steps *= 2
    raise StepConvergenceError(
        f"fidelity not converged at {max_steps} slices (last delta vs half step unknown)"
    )


def composite_pulse(space, spec, lam_k, leakage_tol=1e-8):
    """Three-segment realization of one pulse: squeeze in, free rotation, squeeze out.

    Segments apply exp(+iG lam_k), exp(-i w n t_p), exp(-iG lam_k) in that
    order, the outer generators carrying their strength as lam_k*G over unit
    duration.  Refuses when exp(-iG lam_k)|0> leaks into the top quarter of
    the truncated space.
    """
    g = squeeze_generator(space, spec)
    probe = expm_action(g, abs(lam_k), fock.fock_state(space, 0))
    top = space.dim - space.dim // 4
    tail = float(np.sum(np.abs(probe.amplitudes[top:]) ** 2))
    if tail > leakage_tol:
        raise TruncationError(
            f"composite generator leaks {tail:.3e} past level {top}; "
            f"larger dim needed for lam={lam_k!r}"
        )
    t_p = math.pi / (spec.order * space.omega_c)
    label = f"composite(lam={lam_k:g})"
    return [
        Segment((-lam_k) * g, 1.0, label=label + " in"),
        Segment(free_hamiltonian(space), t_p, label=label + " free"),
        Segment(lam_k * g, 1.0, label=label + " out"),
    ]
