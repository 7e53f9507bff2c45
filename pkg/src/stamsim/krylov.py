"""Lanczos (Krylov-subspace) action of the matrix exponential.

Computes exp(-i*A*t) v for Hermitian A given only a matvec, with adaptive
subspace size and step splitting.  The Lanczos basis is fully
reorthogonalized, so the small projected problem stays an honest symmetric
tridiagonal matrix even when the operator spectrum spans many decades.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .fock import PropagationError

_CHECK_EVERY = 4
_MAX_SUBSTEPS = 500_000


class _Factorization:
    """One Lanczos factorization: evaluates the propagated vector at any tau."""

    def __init__(self, basis, alphas, betas, beta0, sign):
        self.basis = basis          # (m, n) orthonormal rows
        self.beta0 = beta0
        self.sign = sign
        if len(alphas) == 1:
            self.evals = np.array(alphas)
            self.evecs = np.ones((1, 1))
        else:
            self.evals, self.evecs = eigh_tridiagonal(alphas, betas)
        self.w0 = self.evecs[0, :]

    def small_solution(self, tau):
        phases = np.exp(-1j * self.sign * tau * self.evals)
        return self.evecs @ (phases * self.w0)

    def state(self, tau):
        return self.beta0 * (self.basis.T @ self.small_solution(tau))


def _error_estimate(fac, beta_res, tau, prev_u):
    u = fac.small_solution(tau)
    res = beta_res * min(abs(tau), 1.0) * abs(u[-1])
    if prev_u is None:
        return u, np.inf
    diff = np.linalg.norm(u - np.pad(prev_u, (0, u.size - prev_u.size)))
    return u, fac.beta0 * max(diff, 0.1 * res)


def _build_substep(matvec, v, dt, sign, tol, m_max):
    """Grow a Lanczos basis until exp(-i*sign*dt*T) e1 is converged.

    Returns (factorization, accepted_dt).  If even m_max vectors cannot
    resolve dt, the largest power-of-two fraction of dt that converges is
    accepted instead; returns None if not even dt/2**40 converges.
    """
    n = v.size
    beta0 = np.linalg.norm(v)
    basis = np.empty((m_max + 1, n), dtype=complex)
    basis[0] = v / beta0
    alphas, betas = [], []
    prev_u = None
    fac = None

    for j in range(m_max):
        w = matvec(basis[j])
        alpha = float(np.real(np.vdot(basis[j], w)))
        w = w - alpha * basis[j]
        if j > 0:
            w = w - betas[j - 1] * basis[j - 1]
        # full reorthogonalization ("twice is enough" on heavy cancellation)
        for _ in range(2):
            proj = np.conj(basis[: j + 1]) @ w
            w = w - basis[: j + 1].T @ proj
            if np.linalg.norm(proj) <= 1e-8 * np.linalg.norm(w):
                break
        beta = float(np.linalg.norm(w))
        alphas.append(alpha)

        ref = max(max(np.abs(alphas)), max(betas, default=0.0), 1e-300)
        invariant = beta <= 1e-13 * ref
        m = j + 1
        if invariant or m % _CHECK_EVERY == 0 or m == m_max:
            fac = _Factorization(basis[:m].copy() if m == m_max else basis[:m],
                                 np.array(alphas), np.array(betas), beta0, sign)
            if invariant:
                return fac, dt
            u, err = _error_estimate(fac, beta, dt, prev_u)
            if err <= tol * beta0:
                return fac, dt
            prev_u = u
        if m < m_max:
            betas.append(beta)
            basis[m] = w / beta

    # basis exhausted: shrink the step until the estimate passes
    beta_res = beta
    trial = dt
    for _ in range(40):
        trial /= 2
        prev = fac.small_solution(0.618 * trial)  # off-grid comparison point
        u = fac.small_solution(trial)
        res = beta_res * min(trial, 1.0) * abs(u[-1])
        # reuse the residual-based estimate only; the basis is fixed now
        if fac.beta0 * res <= tol * fac.beta0:
            return fac, trial
    return None


def lanczos_expm(matvec, v, t, scale=None, tol=1e-11, m_max=64, sample_times=None):
    """exp(-i*matvec*t) applied to v, optionally with intermediate samples.

    sample_times must lie between 0 and t (inclusive, same sign as t) in
    ascending magnitude; the corresponding states are returned alongside the
    final vector.
    """
    v = np.asarray(v, dtype=complex)
    want_samples = sample_times is not None
    progress_pts = []
    if want_samples:
        st = np.asarray(sample_times, dtype=float)
        if st.size and (np.any(np.diff(np.abs(st)) < 0) or np.any(st * np.sign(t or 1) < -1e-300)):
            raise ValueError("sample_times must match the sign of t, ascending")
        if st.size and np.max(np.abs(st)) > abs(t) * (1 + 1e-9):
            raise ValueError("sample_times exceed the propagation time")
        progress_pts = list(np.abs(st))
    samples = []

    if t == 0:
        out = v.copy()
        if want_samples:
            return out, [v.copy() for _ in progress_pts]
        return out

    sign = 1.0 if t > 0 else -1.0
    total = abs(t)
    tiny = 1e-12 * total
    cursor = 0
    while cursor < len(progress_pts) and progress_pts[cursor] <= tiny:
        samples.append(v.copy())
        cursor += 1

    cur = v.copy()
    s0 = 0.0
    dt_try = total
    for _ in range(_MAX_SUBSTEPS):
        dt_try = min(dt_try, total - s0)
        built = _build_substep(matvec, cur, dt_try, sign, tol, m_max)
        if built is None:
            raise PropagationError(
                f"Krylov propagation stalled at t={sign * s0!r} "
                f"(subspace {m_max} exhausted)",
                residual=tol,
            )
        fac, accepted = built
        s1 = s0 + accepted
        while cursor < len(progress_pts) and progress_pts[cursor] <= s1 + tiny:
            samples.append(fac.state(progress_pts[cursor] - s0))
            cursor += 1
        cur = fac.state(accepted)
        s0 = s1
        if s0 >= total - tiny:
            break
        # grow after full-step convergence, hold after a forced shrink
        dt_try = accepted * (2.0 if accepted >= dt_try * 0.999 else 1.0)
    else:
        raise PropagationError("Krylov propagation exceeded the substep budget",
                               residual=None)

    while cursor < len(progress_pts):  # samples squeezed against the endpoint
        samples.append(cur.copy())
        cursor += 1
    if want_samples:
        return cur, samples
    return cur


def chain_offset(offsets):
    """Coupling offset J when the nonzero offsets are exactly {+J, -J} (0 if diagonal)."""
    nz = sorted(d for d in offsets if d != 0)
    if not nz:
        return 0
    if len(nz) == 2 and nz[0] == -nz[1]:
        return nz[1]
    return None


def spectral_chain_expm(op, t, v, sample_times=None):
    """Exact exp(-i*op*t) v for a Hermitian operator coupling only levels i, i+J.

    Such an operator splits into J independent tridiagonal chains (one per
    residue class); a diagonal gauge turns each into a real symmetric
    tridiagonal problem solved exactly by eigh_tridiagonal.  Chains carrying
    no amplitude are skipped.
    """
    j = chain_offset(op.offsets)
    if j is None or not op.hermitian:
        raise ValueError("operator is not a single-offset Hermitian chain")
    n = op.size
    v = np.asarray(v, dtype=complex)
    d0 = op.diagonal(0).real
    up = op.diagonal(j) if j else np.zeros(0, dtype=complex)
    times = [t] if sample_times is None else list(sample_times) + [t]
    outs = [np.zeros(n, dtype=complex) for _ in times]

    for r in range(max(j, 1)):
        idx = np.arange(r, n, j) if j else np.arange(n)
        sub = v[idx]
        if not np.any(sub):
            continue
        d = d0[idx]
        if len(idx) == 1:
            for out, tau in zip(outs, times):
                out[idx] = np.exp(-1j * tau * d) * sub
            continue
        e = up[idx[:-1]]
        # gauge away the coupling phases: chi_{k+1} = chi_k - arg(e_k)
        chi = np.zeros(len(idx))
        chi[1:] = -np.cumsum(np.where(np.abs(e) > 0, np.angle(e), 0.0))
        phase = np.exp(1j * chi)
        sub_g = np.conj(phase) * sub
        evals, q = eigh_tridiagonal(d, np.abs(e))
        coeff = q.T @ sub_g
        for out, tau in zip(outs, times):
            out[idx] = phase * (q @ (np.exp(-1j * tau * evals) * coeff))

    if sample_times is None:
        return outs[0]
    return outs[-1], outs[:-1]
