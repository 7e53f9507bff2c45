"""Truncated-Fock-space linear algebra.

Single bosonic mode truncated to ``dim`` levels, optionally tensored with a
qubit.  Product-space indexing is fixed as ``index = q*dim + n`` with
``q = 0`` for the qubit ground state |g> and ``q = 1`` for |e>; this
convention is bit-exact in the text serialization format.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import gammaln

DENSE_DIM_LIMIT = 4096


class TruncationError(ValueError):
    """Requested object does not fit in the truncated space."""


class PropagationError(RuntimeError):
    """Krylov propagation failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class FockSpace:
    """Truncated Fock space: levels 0..dim-1, mode angular frequency omega_c [rad/s]."""

    dim: int
    omega_c: float

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.omega_c <= 0:
            raise ValueError(f"omega_c must be > 0, got {self.omega_c}")


def make_space(dim, omega_c):
    """Create a FockSpace handle; all operators and states bind to it."""
    return FockSpace(int(dim), float(omega_c))


class BandedOperator:
    """Complex operator stored by diagonals.

    ``diagonals[d]`` holds the entries ``M[i, i+d]`` (d >= 0) or
    ``M[i-d, i] = M[i+|d|, i]`` (d < 0), each of length ``size - |d|``.
    Hermitian operators are built from their upper diagonals so that
    ``M[m, n] == conj(M[n, m])`` holds exactly.
    """

    def __init__(self, space, diagonals, qubit_levels=1, hermitian=False, info=None):
        self.space = space
        self.qubit_levels = int(qubit_levels)
        self.size = self.qubit_levels * space.dim
        self._diags = {}
        for d, vals in diagonals.items():
            d = int(d)
            vals = np.asarray(vals, dtype=complex)
            if vals.shape != (self.size - abs(d),):
                raise ValueError(f"diagonal {d}: expected length {self.size - abs(d)}")
            if abs(d) > self.size - 1:
                raise ValueError(f"offset {d} outside a {self.size}-dimensional space")
            self._diags[d] = vals
        self.hermitian = bool(hermitian)
        self.info = dict(info) if info else {}
        self._items = sorted(self._diags.items())

    @classmethod
    def hermitian_from_upper(cls, space, upper, qubit_levels=1, info=None):
        """Build an exactly Hermitian operator from diagonals with offset >= 0."""
        diags = {}
        for d, vals in upper.items():
            if d < 0:
                raise ValueError("upper diagonals only")
            vals = np.asarray(vals, dtype=complex)
            if d == 0:
                diags[0] = vals.real.astype(complex)
            else:
                diags[d] = vals
                diags[-d] = np.conj(vals)
        return cls(space, diags, qubit_levels=qubit_levels, hermitian=True, info=info)

    @property
    def bandwidth(self):
        return max((abs(d) for d in self._diags), default=0)

    @property
    def offsets(self):
        return tuple(d for d, _ in self._items)

    def diagonal(self, d=0):
        vals = self._diags.get(int(d))
        if vals is None:
            return np.zeros(self.size - abs(int(d)), dtype=complex)
        return vals.copy()

    def matvec(self, v):
        out = np.zeros(self.size, dtype=complex)
        for d, vals in self._items:
            if d >= 0:
                out[: self.size - d] += vals * v[d:]
            else:
                out[-d:] += vals * v[: self.size + d]
        return out

    def to_dense(self):
        m = np.zeros((self.size, self.size), dtype=complex)
        for d, vals in self._items:
            if d >= 0:
                m[np.arange(self.size - d), np.arange(d, self.size)] = vals
            else:
                m[np.arange(-d, self.size), np.arange(self.size + d)] = vals
        return m

    def norm_scale(self):
        """Cheap upper bound on the spectral norm (max Gershgorin row sum)."""
        rows = np.zeros(self.size)
        for d, vals in self._items:
            if d >= 0:
                rows[: self.size - d] += np.abs(vals)
            else:
                rows[-d:] += np.abs(vals)
        return float(rows.max()) if self.size else 0.0

    def __add__(self, other):
        if not isinstance(other, BandedOperator):
            return NotImplemented
        if other.space is not self.space or other.qubit_levels != self.qubit_levels:
            raise ValueError("operators live on different spaces")
        diags = {d: v.copy() for d, v in self._diags.items()}
        for d, v in other._diags.items():
            diags[d] = diags[d] + v if d in diags else v.copy()
        return BandedOperator(
            self.space, diags, self.qubit_levels,
            hermitian=self.hermitian and other.hermitian,
        )

    def __mul__(self, scalar):
        s = complex(scalar)
        herm = self.hermitian and s.imag == 0.0
        return BandedOperator(
            self.space,
            {d: s * v for d, v in self._diags.items()},
            self.qubit_levels,
            hermitian=herm,
        )

    __rmul__ = __mul__


class StateVector:
    """Unit-norm state over the Fock basis or the qubit (x) Fock product basis."""

    def __init__(self, space, amplitudes, qubit_levels=1, _check=True):
        self.space = space
        self.qubit_levels = int(qubit_levels)
        amps = np.array(amplitudes, dtype=complex)
        if amps.shape != (self.qubit_levels * space.dim,):
            raise ValueError(
                f"expected {self.qubit_levels * space.dim} amplitudes, got {amps.shape}"
            )
        if _check:
            nrm = np.linalg.norm(amps)
            if abs(nrm - 1.0) > 1e-8:
                raise ValueError(f"state not normalized: |psi| = {nrm!r}")
        amps.flags.writeable = False
        self.amplitudes = amps

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def with_amplitudes(self, amps, _check=True):
        return StateVector(self.space, amps, self.qubit_levels, _check=_check)

    def expect_a(self):
        """<a> for the bosonic mode (summed over qubit branches)."""
        dim = self.space.dim
        psi = self.amplitudes.reshape(self.qubit_levels, dim)
        weights = np.sqrt(np.arange(1, dim))
        return complex(np.sum(np.conj(psi[:, :-1]) * weights * psi[:, 1:]))


def fock_state(space, n, qubit_levels=1, qubit_index=0):
    if not 0 <= n < space.dim:
        raise ValueError(f"Fock level {n} outside 0..{space.dim - 1}")
    amps = np.zeros(qubit_levels * space.dim, dtype=complex)
    amps[qubit_index * space.dim + n] = 1.0
    return StateVector(space, amps, qubit_levels)


def coherent_amplitudes(dim, alpha):
    """Truncated coherent-state amplitudes and the weight lost to truncation.

    Amplitudes follow c_n = exp(-|alpha|^2/2) alpha^n / sqrt(n!), evaluated in
    log space so large |alpha| does not overflow.
    """
    alpha = complex(alpha)
    n = np.arange(dim)
    if alpha == 0:
        amps = np.zeros(dim, dtype=complex)
        amps[0] = 1.0
        return amps, 0.0
    log_mag = -abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    amps = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    leakage = 1.0 - float(np.sum(np.abs(amps) ** 2))
    return amps, max(leakage, 0.0)


def coherent_state(space, alpha):
    """Normalized truncated coherent state |alpha>.

    Requires the analytic adequacy margin dim > |alpha|^2 + 6|alpha|; warns if
    the truncation leakage exceeds 1e-10 and refuses above 1e-4.
    """
    a = abs(alpha)
    if space.dim <= a * a + 6 * a:
        raise TruncationError(
            f"dim={space.dim} too small for |alpha|={a:.3g} "
            f"(need dim > |alpha|^2 + 6|alpha| = {a * a + 6 * a:.1f})"
        )
    amps, leakage = coherent_amplitudes(space.dim, alpha)
    if leakage > 1e-4:
        raise TruncationError(f"coherent-state truncation leakage {leakage:.3e} > 1e-4")
    if leakage > 1e-10:
        warnings.warn(f"coherent-state truncation leakage {leakage:.3e}", stacklevel=2)
    state = StateVector(space, amps / np.linalg.norm(amps), _check=False)
    state.leakage = leakage
    return state


def ladder_ops(space):
    """Annihilation, creation and number operators (a, a_dag, n_op)."""
    root = np.sqrt(np.arange(1, space.dim, dtype=float)).astype(complex)
    a = BandedOperator(space, {1: root})
    a_dag = BandedOperator(space, {-1: root})
    n_op = BandedOperator(
        space, {0: np.arange(space.dim, dtype=float).astype(complex)}, hermitian=True
    )
    return a, a_dag, n_op


def inner(psi, phi):
    """<psi|phi> for states on the same space."""
    if psi.space is not phi.space and psi.space != phi.space:
        raise ValueError("states live on different spaces")
    if psi.qubit_levels != phi.qubit_levels:
        raise ValueError("states have different qubit factors")
    return complex(np.vdot(psi.amplitudes, phi.amplitudes))


def fidelity(psi, phi):
    """|<psi|phi>|^2, clipped to [0, 1]."""
    return float(min(abs(inner(psi, phi)) ** 2, 1.0))


def tensor_qubit(qubit_amps, boson):
    """Product state (c_g |g> + c_e |e>) (x) |boson> in the q*dim + n layout."""
    if boson.qubit_levels != 1:
        raise ValueError("boson factor must be a pure bosonic state")
    c = np.asarray(qubit_amps, dtype=complex)
    if c.shape != (2,):
        raise ValueError("qubit_amps must be a pair (c_g, c_e)")
    if abs(np.linalg.norm(c) - 1.0) > 1e-10:
        raise ValueError("qubit amplitudes not normalized")
    amps = np.concatenate([c[0] * boson.amplitudes, c[1] * boson.amplitudes])
    return StateVector(boson.space, amps, qubit_levels=2)


class DensityMatrix2:
    """2x2 reduced density matrix (Hermitian, unit trace)."""

    def __init__(self, entries):
        m = np.asarray(entries, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError("expected a 2x2 matrix")
        if np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise ValueError("density matrix not Hermitian")
        if abs(m.trace().real - 1.0) > 1e-10:
            raise ValueError(f"trace {m.trace().real!r} != 1")
        evals = np.linalg.eigvalsh(m)
        if evals[0] < -1e-10 or evals[-1] > 1 + 1e-10:
            raise ValueError(f"eigenvalues {evals} outside [0, 1]")
        self.entries = m
        self._evals = evals

    def eigenvalues(self):
        return self._evals.copy()

    def entropy_bits(self):
        """von Neumann entropy -sum(p log2 p), with 0 log 0 := 0."""
        p = np.clip(self._evals, 0.0, 1.0)
        p = p[p > 0]
        return float(-np.sum(p * np.log2(p)))


def partial_trace_qubit(psi):
    """Reduced qubit density matrix of a qubit (x) Fock pure state."""
    if psi.qubit_levels != 2:
        raise ValueError("state has no qubit factor")
    block = psi.amplitudes.reshape(2, psi.space.dim)
    rho = block @ block.conj().T
    rho = (rho + rho.conj().T) / 2
    rho /= rho.trace().real
    return DensityMatrix2(rho)


def expm_dense(matrix):
    """Dense matrix exponential (scaling and squaring); oracle for operator tests."""
    m = np.asarray(matrix, dtype=complex)
    if m.shape[0] > DENSE_DIM_LIMIT:
        raise ValueError(f"dense exponential limited to dim <= {DENSE_DIM_LIMIT}")
    return scipy.linalg.expm(m)


SPECTRAL_SIZE_CUTOFF = 1536


def _pick_method(op, method):
    from . import krylov

    if method != "auto":
        return method
    if (op.size >= SPECTRAL_SIZE_CUTOFF and op.hermitian
            and krylov.chain_offset(op.offsets) is not None):
        return "spectral"
    return "krylov"


def expm_action(op, t, psi, tol=1e-11, m_max=64, method="auto"):
    """Apply exp(-i*op*t) to a state.

    ``krylov`` is a Lanczos approximation with adaptive subspace size and step
    splitting; ``spectral`` is the exact chain eigendecomposition available
    for single-offset banded operators (picked automatically at large
    dimension, where truncation-tail weight on extreme eigenvalues starves
    the Krylov iteration); ``dense`` is the scaling-and-squaring oracle.
    """
    from . import krylov

    method = _pick_method(op, method)
    if method == "dense":
        u = expm_dense(-1j * t * op.to_dense())
        return psi.with_amplitudes(u @ psi.amplitudes, _check=False)
    if method == "spectral":
        out = krylov.spectral_chain_expm(op, t, psi.amplitudes)
    elif method == "krylov":
        if not op.hermitian:
            raise ValueError("Krylov propagation requires a Hermitian operator")
        out = krylov.lanczos_expm(op.matvec, psi.amplitudes, t,
                                  scale=op.norm_scale(), tol=tol, m_max=m_max)
    else:
        raise ValueError(f"unknown method {method!r}")
    return psi.with_amplitudes(out, _check=False)


def expm_action_sampled(op, t, psi, sample_times, tol=1e-11, m_max=64, method="auto"):
    """Like expm_action, also returning states at the requested intermediate times."""
    from . import krylov

    method = _pick_method(op, method)
    if method == "spectral":
        out, samples = krylov.spectral_chain_expm(op, t, psi.amplitudes,
                                                  sample_times=sample_times)
    else:
        out, samples = krylov.lanczos_expm(
            op.matvec, psi.amplitudes, t, scale=op.norm_scale(),
            tol=tol, m_max=m_max, sample_times=sample_times,
        )
    return (
        psi.with_amplitudes(out, _check=False),
        [psi.with_amplitudes(s, _check=False) for s in samples],
    )


# --- text serialization (golden-file friendly) ------------------------------

def state_to_text(psi):
    lines = [f"fockstate dim={psi.space.dim} qubit_levels={psi.qubit_levels}"]
    for i, c in enumerate(psi.amplitudes):
        lines.append(f"{i} {float(c.real)!r} {float(c.imag)!r}")
    return "\n".join(lines) + "\n"


def state_from_text(text, space):
    lines = text.strip().splitlines()
    head = lines[0].split()
    if head[0] != "fockstate":
        raise ValueError("not a fockstate document")
    fields = dict(part.split("=") for part in head[1:])
    dim, qubit_levels = int(fields["dim"]), int(fields["qubit_levels"])
    if dim != space.dim:
        raise ValueError(f"dimension mismatch: file {dim}, space {space.dim}")
    amps = np.zeros(qubit_levels * dim, dtype=complex)
    for line in lines[1:]:
        idx, re, im = line.split()
        amps[int(idx)] = float(re) + 1j * float(im)
    return StateVector(space, amps, qubit_levels)


def operator_to_text(op):
    """Triplet format ``row col re im``, one line per stored entry, row-major."""
    entries = []
    for d, vals in op._items:
        for i, v in enumerate(vals):
            r, c = (i, i + d) if d >= 0 else (i - d, i)
            entries.append((r, c, v))
    entries.sort(key=lambda e: (e[0], e[1]))
    return "".join(f"{r} {c} {float(v.real)!r} {float(v.imag)!r}\n" for r, c, v in entries)
