"""Jump-sampled adiabatic control: plans, sequences, and error diagnostics.

The protocol applies the parameterized Hamiltonian at N equally spaced
parameter points lambda_k = Theta(2k-1)/(2N), each for t_p = pi/(J w_c).
Every pulse flips the sign of the common non-adiabatic phase factor, so the
accumulated error integral cancels exactly at the checkpoints Theta_k = k
Theta / N and the evolution lands on the adiabatic target there.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import fock
from .evolution import PulseSequence, Segment, composite_pulse
from .fock import (StateVector, TruncationError, coherent_state, expm_action,
                   expm_dense, fock_state, tensor_qubit)
from .hamiltonians import (HybridSpec, MultiSqueezeSpec, displacement_hamiltonian,
                           free_hamiltonian, hybrid_coupling, hybrid_hamiltonian,
                           level_bipartition, parameterized_hamiltonian,
                           qubit_control_hamiltonian, squeeze_generator,
                           squeeze_hamiltonian)

QUBIT_PLUS = (1 / math.sqrt(2), 1 / math.sqrt(2))    # (c_g, c_e) for |+>
QUBIT_MINUS = (-1 / math.sqrt(2), 1 / math.sqrt(2))  # (c_g, c_e) for |->


@dataclass(frozen=True)
class StamPlan:
    """Sampling plan: orders, pulse parameters and checkpoint bookkeeping."""

    order: int
    strength: complex
    theta: float
    n_pulses: int
    omega_c: float

    @property
    def spec(self):
        return MultiSqueezeSpec(self.order, self.strength)

    @property
    def t_p(self):
        return math.pi / (self.order * self.omega_c)

    @property
    def lambdas(self):
        k = np.arange(1, self.n_pulses + 1)
        return self.theta * (2 * k - 1) / (2 * self.n_pulses)

    @property
    def checkpoints(self):
        return np.arange(self.n_pulses + 1) * self.theta / self.n_pulses

    @property
    def total_time(self):
        return self.n_pulses * self.t_p

    def to_json(self):
        return json.dumps(
            {
                "J": self.order,
                "epsilon_re": self.strength.real,
                "epsilon_im": self.strength.imag,
                "theta": self.theta,
                "n_pulses": self.n_pulses,
                "omega_c": self.omega_c,
                "lambdas": list(self.lambdas),
                "t_p": self.t_p,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        plan = cls(
            order=int(doc["J"]),
            strength=complex(doc["epsilon_re"], doc["epsilon_im"]),
            theta=float(doc["theta"]),
            n_pulses=int(doc["n_pulses"]),
            omega_c=float(doc["omega_c"]),
        )
        if not np.allclose(doc["lambdas"], plan.lambdas, rtol=0, atol=0):
            raise ValueError("plan document lambdas do not match the sampling rule")
        return plan


def make_plan(order, strength, theta, n_pulses, omega_c):
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    return StamPlan(int(order), complex(strength), float(theta), int(n_pulses),
                    float(omega_c))


def checkpoint_sign_integrals(n_pulses):
    """Exact sign-profile integrals int_0^{Theta_k} F dlambda, in units of Theta.

    F = (-1)^k on [lambda_k, lambda_{k+1}); working in units of Theta/(2N)
    every piece has integer length, so the sums are exact rationals.  All of
    them must vanish.
    """
    n = int(n_pulses)
    out = []
    for j in range(1, n + 1):
        total = 1  # [0, lambda_1): length 1 unit, sign +1
        for i in range(1, j):
            total += (-1) ** i * 2
        total += (-1) ** j  # half piece [lambda_j, Theta_j]
        out.append(Fraction(total, 2 * n))
    return out


def sign_profile(plan, lam):
    """F(lambda) = (-1)^k for lambda in [lambda_k, lambda_{k+1}), sign-agnostic in Theta."""
    if plan.theta == 0:
        return 1
    s = lam / plan.theta
    if not -1e-12 <= s <= 1 + 1e-12:
        raise ValueError("lambda outside the sweep range")
    n = plan.n_pulses
    k = int(np.searchsorted((2 * np.arange(1, n + 1) - 1) / (2 * n), s, side="right"))
    return (-1) ** k


def target_state(space, spec, lam, initial=None, method="auto"):
    """|n_J(lambda)> = exp(-i G_J lambda)|n>, default n = 0."""
    if initial is None:
        initial = fock_state(space, 0)
    return expm_action(squeeze_generator(space, spec), lam, initial, method=method)


def cat_state(space, alpha):
    """(|alpha>|+> - |-alpha>|->)/sqrt(2) on qubit (x) Fock."""
    plus = tensor_qubit(QUBIT_PLUS, coherent_state(space, alpha))
    minus = tensor_qubit(QUBIT_MINUS, coherent_state(space, -alpha))
    return StateVector(space, (plus.amplitudes - minus.amplitudes) / math.sqrt(2),
                       qubit_levels=2)


def pulse_hamiltonian(space, spec, lam, padding=None):
    """H_J(lambda): closed banded forms for J = 1, 2, padded conjugation beyond."""
    if spec.order == 1:
        return displacement_hamiltonian(space, spec.strength, lam)
    if spec.order == 2:
        return squeeze_hamiltonian(space, spec.strength, lam)
    return parameterized_hamiltonian(space, spec, lam, padding=padding)


def squeezed_vacuum_amplitudes(dim, z):
    """Truncated squeezed-vacuum amplitudes for S(z)|0> and the truncation loss.

    exp(-i G_2 theta)|0> corresponds to z = -2 theta eps.  Amplitudes sit on
    even levels only: c_{2m} = (-e^{i arg z} tanh r)^m sqrt((2m)!)/(2^m m!
    sqrt(cosh r)), evaluated in log space.
    """
    from scipy.special import gammaln

    z = complex(z)
    amps = np.zeros(dim, dtype=complex)
    r = abs(z)
    if r == 0:
        amps[0] = 1.0
        return amps, 0.0
    m = np.arange((dim + 1) // 2)
    logs = (0.5 * gammaln(2 * m + 1) - m * math.log(2.0) - gammaln(m + 1)
            + m * math.log(math.tanh(r)) - 0.5 * math.log(math.cosh(r)))
    amps[0::2] = np.exp(logs) * (-np.exp(1j * cmath.phase(z))) ** m
    leakage = 1.0 - float(np.sum(np.abs(amps) ** 2))
    return amps, max(leakage, 0.0)


def target_leakage(space, spec, theta):
    """Truncation weight missing from |0_J(theta)> at this dimension.

    Exact closed forms for J = 1 (Poisson tail) and J = 2 (squeezed-vacuum
    tail); higher orders probe convergence by rebuilding the target at
    doubled dimension.
    """
    if theta == 0:
        return 0.0
    if spec.order == 1:
        return fock.coherent_amplitudes(space.dim, theta * spec.strength)[1]
    if spec.order == 2:
        return squeezed_vacuum_amplitudes(space.dim, -2 * theta * spec.strength)[1]
    t1 = target_state(space, spec, theta)
    big = fock.FockSpace(2 * space.dim, space.omega_c)
    t2 = target_state(big, spec, theta)
    overlap = abs(np.vdot(t1.amplitudes, t2.amplitudes[: space.dim])) ** 2
    return max(1.0 - overlap, 0.0)


def build_boson_sequence(space, plan, use_composite=False, with_targets=True,
                         leakage_tol=1e-6, padding=None):
    """The pulse train P_N ... P_1 for a bosonic plan, with checkpoint targets.

    Checkpoint targets |0_J(Theta_k)> are built incrementally with the shared
    generator, so large squeezed targets cost one short generator step per
    checkpoint.  Raises TruncationError when the final target does not fit.
    """
    spec = plan.spec
    leak = target_leakage(space, spec, plan.theta)
    if leak > leakage_tol:
        raise TruncationError(
            f"target state loses {leak:.3e} to truncation at dim={space.dim}; "
            f"increase the truncation"
        )
    if leak > 1e-10:
        warnings.warn(f"target truncation leakage {leak:.3e}", stacklevel=2)
    gen = squeeze_generator(space, spec)
    targets = []
    if with_targets:
        tgt = fock_state(space, 0)
        step = plan.theta / plan.n_pulses
        for _ in range(plan.n_pulses):
            tgt = expm_action(gen, step, tgt)
            targets.append(tgt)
    segments = []
    for k, lam in enumerate(plan.lambdas, start=1):
        tgt = targets[k - 1] if with_targets else None
        if use_composite:
            pieces = composite_pulse(space, spec, lam)
            pieces[-1].checkpoint = True
            pieces[-1].target = tgt
            for piece in pieces:
                piece.label = f"pulse {k} " + piece.label
            segments.extend(pieces)
        else:
            segments.append(
                Segment(pulse_hamiltonian(space, spec, lam, padding=padding), plan.t_p,
                        checkpoint=True, label=f"pulse {k} (lam={lam:g})", target=tgt)
            )
    return PulseSequence(segments, final_target=targets[-1] if with_targets else None,
                         metadata={"plan": plan, "use_composite": use_composite})


def build_hybrid_sequence(space, theta, n_pulses, omega_c, delta_lambda=0.0,
                          delta_omega=0.0):
    """Qubit (x) boson pulse train preparing (|Theta>|+> - |-Theta>|->)/sqrt(2).

    From |0>|g>, each pulse applies the coupled Hamiltonian for t_p = pi/w_c;
    the k-th checkpoint state is the cat at Theta_k.  ``delta_lambda`` and
    ``delta_omega`` perturb the Hamiltonian parameters while durations and
    targets stay on the ideal plan.
    """
    plan = make_plan(1, 1.0, theta, n_pulses, omega_c)
    segments = []
    for k, lam in enumerate(plan.lambdas, start=1):
        hspec = HybridSpec(lam=(1.0 + delta_lambda) * lam,
                           omega_c=(1.0 + delta_omega) * omega_c)
        theta_k = plan.checkpoints[k]
        segments.append(
            Segment(hybrid_hamiltonian(space, hspec), plan.t_p, checkpoint=True,
                    label=f"pulse {k} (lam={lam:g})",
                    target=cat_state(space, theta_k))
        )
    return PulseSequence(segments, final_target=cat_state(space, theta),
                         metadata={"plan": plan, "delta_lambda": delta_lambda,
                                   "delta_omega": delta_omega})


def hybrid_initial_state(space):
    """|0>|g>, the canonical starting point of the hybrid protocols."""
    return tensor_qubit((1.0, 0.0), fock_state(space, 0))


def build_amplified_sequence(space, lam, n_pulses, omega_c, omega_rabi,
                             amp_error=0.0, coupling_during_flip=True):
    """Amplified cat preparation: fixed-lambda pulses with qubit pi flips between.

    The lab coupling keeps one sign; each pi pulse swaps |+> and |->, so the
    conditional rotation centers alternate and the cat amplitude grows to
    Theta = 2 N lambda.  Flip segments last pi/Omega and contain the qubit
    drive (-1)^k (1+delta) Omega/2 sigma_z, plus the boson-qubit coupling when
    ``coupling_during_flip`` (the flip is described in the boson's rotating
    frame, so the free oscillator term does not act during it); with the
    coupling off the flip is an exact swap, which doubles as the idealized
    instantaneous-flip mode.
    """
    if omega_rabi < 10 * omega_c:
        warnings.warn("omega_rabi should be >> omega_c for clean pi flips",
                      stacklevel=2)
    t_p = math.pi / omega_c
    t_flip = math.pi / omega_rabi
    segments = []
    for k in range(1, n_pulses + 1):
        hspec = HybridSpec(lam=lam, omega_c=omega_c, sign=1,
                           omega_rabi=omega_rabi, amp_error=amp_error)
        segments.append(
            Segment(hybrid_hamiltonian(space, hspec), t_p, checkpoint=True,
                    label=f"pulse {k}", target=cat_state(space, 2 * k * lam))
        )
        if k < n_pulses:
            flip_h = qubit_control_hamiltonian(space, hspec, k)
            if coupling_during_flip:
                flip_h = flip_h + hybrid_coupling(space, hspec)
            segments.append(Segment(flip_h, t_flip, label=f"flip {k}"))
    return PulseSequence(
        segments,
        final_target=cat_state(space, 2 * n_pulses * lam),
        metadata={"lam": lam, "n_pulses": n_pulses, "omega_c": omega_c,
                  "omega_rabi": omega_rabi, "amp_error": amp_error,
                  "coupling_during_flip": coupling_during_flip,
                  "theta": 2 * n_pulses * lam},
    )


def adiabatic_decomposition(u, spec, space, lam, t_elapsed, interior=None):
    """Split a dense evolution U into U_adia * U_err and gauge the error.

    U_adia(lambda, t) = exp(-iG lambda) diag(exp(-i n w_c t)); the returned
    distance is ||(U_err - 1)|| restricted to the interior columns, whose
    images stay clear of the truncation boundary (default dim // 16).
    """
    dim = space.dim
    if dim > 512:
        raise ValueError("decomposition diagnostics are dense; use dim <= 512")
    if interior is None:
        interior = max(dim // 16, 1)
    g = squeeze_generator(space, spec).to_dense()
    phases = np.exp(-1j * np.arange(dim) * space.omega_c * t_elapsed)
    u_adia = expm_dense(-1j * lam * g) * phases[None, :]
    u_err = u_adia.conj().T @ u
    dist = float(np.linalg.norm((u_err - np.eye(dim))[:, :interior], 2))
    return u_adia, u_err, dist


def nonadiabatic_generator(space, spec, t_elapsed):
    """W(t) = sum_{n != m} e^{i(phi_n - phi_m)} g_{n,m} |n><m| with phi_n = n w_c t.

    Returns (W, common_sign); the sign is the shared value of the phase
    factors on coupled pairs when t is an integer multiple of t_p, else None.
    """
    g = squeeze_generator(space, spec).to_dense()
    phases = np.exp(1j * np.arange(space.dim) * space.omega_c * t_elapsed)
    w = phases[:, None] * g * np.conj(phases)[None, :]
    t_p = math.pi / (spec.order * space.omega_c)
    ratio = t_elapsed / t_p
    common = None
    if abs(ratio - round(ratio)) < 1e-9:
        common = 1 if round(ratio) % 2 == 0 else -1
    return w, common


@dataclass(frozen=True)
class PhaseLedger:
    """Per-level dynamic phases and the bipartition used by the sign argument."""

    dim: int
    order: int
    omega_c: float

    @property
    def labels(self):
        return level_bipartition(self.order, self.dim)

    def phases(self, t):
        return np.arange(self.dim) * self.omega_c * t

    def group_phase_spread(self, t):
        """Within each residue chain, spread of e^{i phi} inside the B and R
        groups and the B/R ratio; returns (max spread, set of ratios)."""
        values = np.exp(1j * self.phases(t))
        labels = self.labels
        spread = 0.0
        ratios = []
        for r in range(self.order):
            idx = np.arange(r, self.dim, self.order)
            b = [values[i] for i in idx if labels[i] == "B"]
            rr = [values[i] for i in idx if labels[i] == "R"]
            for group in (b, rr):
                if group:
                    spread = max(spread, float(np.max(np.abs(np.array(group) - group[0]))))
            if b and rr:
                ratios.append(complex(rr[0] / b[0]))
        return spread, ratios
