"""Hamiltonian and coupling constructors.

Free oscillator H = omega_c a^dag a, the order-J squeeze generator
G = i(eps (a^dag)^J - eps* a^J), the parameterized family
H_J(lambda) = exp(-i G lambda) H exp(i G lambda) (closed banded forms for
J = 1, 2; padded dense conjugation for general J), and the hybrid
qubit (x) boson Hamiltonians.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .fock import BandedOperator, FockSpace, expm_dense


class PaddingError(ValueError):
    """Padded conjugation leaked significant coupling into the cropped levels."""


@dataclass(frozen=True)
class MultiSqueezeSpec:
    """Order J >= 1 and complex strength of the multi-squeeze generator."""

    order: int
    strength: complex

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")

    @property
    def magnitude(self):
        """r in the polar form strength = r exp(i theta)."""
        return abs(self.strength)

    @property
    def angle(self):
        return cmath.phase(self.strength)


@dataclass(frozen=True)
class HybridSpec:
    """Qubit (x) boson control parameters.

    ``sign`` is the coupling sign of (a^dag + a) sigma_x (flipped by qubit pi
    pulses in the toggling-frame picture), ``omega_rabi`` the qubit Rabi
    angular frequency and ``amp_error`` the relative qubit amplitude error.
    """

    lam: float
    omega_c: float
    sign: int = 1
    omega_rabi: float = 0.0
    amp_error: float = 0.0

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")


def free_hamiltonian(space):
    """Diagonal oscillator Hamiltonian with E_n = n omega_c."""
    diag = space.omega_c * np.arange(space.dim, dtype=float)
    return BandedOperator.hermitian_from_upper(space, {0: diag.astype(complex)})


def _ladder_factor(n, j):
    """sqrt((n+j)! / n!) via log-gamma; overflow-safe for any level."""
    return math.exp(0.5 * (gammaln(n + j + 1) - gammaln(n + 1)))


def coupling_element(n, m, spec):
    """<n| G_J |m>: i*eps*sqrt((n)! / m!) on the upper chain, conjugate below, else 0."""
    if n < 0 or m < 0:
        raise ValueError("levels must be non-negative")
    if n - m == spec.order:
        return 1j * spec.strength * _ladder_factor(m, spec.order)
    if m - n == spec.order:
        return np.conj(1j * spec.strength * _ladder_factor(n, spec.order))
    return 0.0 + 0.0j


def squeeze_generator(space, spec):
    """G_J = i[eps (a^dag)^J - eps* a^J]; Hermitian, bandwidth exactly J, zero diagonal."""
    j = spec.order
    if j >= space.dim:
        raise ValueError(f"order {j} does not fit in dim {space.dim}")
    # upper diagonal holds <n|G|n+J> = conj(g_{n+J,n}); same scalar path as
    # coupling_element so the two agree bit for bit
    upper = np.array([np.conj(1j * spec.strength * _ladder_factor(n, j))
                      for n in range(space.dim - j)])
    return BandedOperator.hermitian_from_upper(space, {j: upper})


def level_bipartition(j, dim):
    """Two-coloring of the coupling graph: 'B'/'R' per level.

    Within each residue class n mod J the chain n, n+J, n+2J, ... alternates
    colors, starting at 'B', so every coupled pair gets opposite labels.
    """
    if j < 1:
        raise ValueError("order must be >= 1")
    return ["B" if (n // j) % 2 == 0 else "R" for n in range(dim)]


def displacement_hamiltonian(space, epsilon, lam):
    """H_1(lambda) = w a^dag a - lambda w (eps a^dag + eps* a) + w |lambda eps|^2.

    The constant term is kept so the ground energy is exactly zero and the
    diagonal-form dynamic phases are n*omega_c*t with no per-lambda offset.
    """
    w = space.omega_c
    eps = complex(epsilon)
    diag = w * (np.arange(space.dim) + abs(lam * eps) ** 2)
    off = -lam * w * np.conj(eps) * np.sqrt(np.arange(1, space.dim))
    return BandedOperator.hermitian_from_upper(
        space, {0: diag.astype(complex), 1: off.astype(complex)}
    )


def squeeze_hamiltonian(space, epsilon, lam):
    """H_2(lambda) = w[a^dag a cosh^2(2 lam r) + a a^dag sinh^2(2 lam r)
    - (a^2 e^{-i theta} + h.c.) sinh(2 lam r) cosh(2 lam r)], eps = r e^{i theta}."""
    w = space.omega_c
    r = abs(epsilon)
    theta = cmath.phase(complex(epsilon)) if epsilon != 0 else 0.0
    ch, sh = math.cosh(2 * lam * r), math.sinh(2 * lam * r)
    n = np.arange(space.dim)
    diag = w * (n * ch * ch + (n + 1) * sh * sh)
    m = np.arange(space.dim - 2)
    off2 = -w * sh * ch * cmath.exp(-1j * theta) * np.sqrt((m + 1) * (m + 2))
    return BandedOperator.hermitian_from_upper(
        space, {0: diag.astype(complex), 2: off2.astype(complex)}
    )


def _conjugated_block(space, spec, lam, pad):
    big = space.dim + pad
    if big > 4096:
        raise ValueError(f"padded dimension {big} too large for dense conjugation")
    big_space = FockSpace(big, space.omega_c)
    g = squeeze_generator(big_space, spec).to_dense()
    u = expm_dense(-1j * lam * g)
    h_big = u @ np.diag(space.omega_c * np.arange(big, dtype=complex)) @ u.conj().T
    kept = h_big[: space.dim, : space.dim]
    return (kept + kept.conj().T) / 2, h_big


def parameterized_hamiltonian(space, spec, lam, padding=None, contamination_tol=1e-9,
                              min_trusted=None, keep_tol=1e-13):
    """H_J(lambda) by dense conjugation in an enlarged space, cropped to dim.

    The conjugation exp(-i G lam) diag(n w) exp(i G lam) is evaluated with
    ``padding`` extra levels so truncation artifacts stay away from the low
    block.  Contamination is gauged by re-evaluating with doubled padding
    (couplings spilled into the discarded levels are partly physical for
    J >= 3, so spill magnitude alone is no error measure): the largest
    leading block that stays put within ``contamination_tol`` is reported as
    info["trusted_levels"], and a PaddingError is raised when it is smaller
    than ``min_trusted`` (default dim // 4).
    """
    dim = space.dim
    if padding is None:
        padding = max(4 * spec.order, dim // 4)
    if min_trusted is None:
        min_trusted = dim // 4
    kept, h_big = _conjugated_block(space, spec, lam, padding)
    kept_ref, _ = _conjugated_block(space, spec, lam, 2 * padding)
    scale = max(float(np.max(np.abs(kept_ref))), 1e-300)
    drift = np.abs(kept - kept_ref) / scale
    trusted = dim
    while trusted > 0 and np.max(drift[:trusted, :trusted]) > contamination_tol:
        trusted -= max(1, dim // 64)
    if trusted < min_trusted:
        raise PaddingError(
            f"only the leading {trusted} of {dim} levels are padding-stable at "
            f"{contamination_tol:.1e}; increase padding ({padding}) or reduce |lambda|"
        )

    diags = {}
    for d in range(dim):
        vals = np.diagonal(kept, offset=d)
        if np.max(np.abs(vals)) > keep_tol * scale:
            diags[d] = np.asarray(vals)
    return BandedOperator.hermitian_from_upper(
        space, diags,
        info={
            "contamination": float(np.max(drift[:trusted, :trusted])) if trusted else 0.0,
            "trusted_levels": trusted,
            "padding": padding,
            "cropped_coupling_max": float(np.max(np.abs(h_big[:dim, dim:]))),
        },
    )


def hybrid_hamiltonian(space, hspec):
    """w a^dag a (x) I - sign * lam * w (a^dag + a) (x) sigma_x on qubit (x) Fock.

    The frequency comes from hspec.omega_c (not the space) so that scans can
    perturb the Hamiltonian while pulse durations stay on the ideal clock.
    """
    dim = space.dim
    w = hspec.omega_c
    c = -hspec.sign * hspec.lam * w
    diag = np.tile(w * np.arange(dim, dtype=float), 2).astype(complex)
    # (q=0,n) -> (q=1,n+1): offset dim+1 carries c*sqrt(n+1)
    up_far = np.zeros(dim - 1, dtype=complex)
    up_far[:] = c * np.sqrt(np.arange(1, dim))
    # (q=0,n) -> (q=1,n-1): offset dim-1 carries c*sqrt(n), zero at n=0 and in the e-block
    up_near = np.zeros(dim + 1, dtype=complex)
    up_near[1:dim] = c * np.sqrt(np.arange(1, dim))
    return BandedOperator.hermitian_from_upper(
        space, {0: diag, dim + 1: up_far, dim - 1: up_near}, qubit_levels=2
    )


def hybrid_coupling(space, hspec):
    """Only the interaction term -sign * lam * w (a^dag + a) sigma_x (no free part)."""
    full = hybrid_hamiltonian(space, hspec)
    diags = {d: full.diagonal(d) for d in full.offsets if d != 0}
    return BandedOperator(space, diags, qubit_levels=2, hermitian=True)


def qubit_control_hamiltonian(space, hspec, k):
    """(-1)^k (1 + delta) (Omega/2) sigma_z (x) I for the k-th qubit pi pulse."""
    if hspec.omega_rabi <= 0:
        raise ValueError("omega_rabi must be > 0 for qubit control")
    amp = (-1) ** k * (1.0 + hspec.amp_error) * hspec.omega_rabi / 2.0
    diag = np.concatenate([-amp * np.ones(space.dim), amp * np.ones(space.dim)])
    return BandedOperator.hermitian_from_upper(
        space, {0: diag.astype(complex)}, qubit_levels=2
    )
