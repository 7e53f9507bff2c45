import math

import numpy as np
import pytest

from stamsim.fock import (BandedOperator, DensityMatrix2, FockSpace,
                          PropagationError, TruncationError, coherent_amplitudes,
                          coherent_state, expm_action, expm_action_sampled,
                          expm_dense, fidelity, fock_state, inner, ladder_ops,
                          make_space, operator_to_text, partial_trace_qubit,
                          state_from_text, state_to_text, tensor_qubit)

OMEGA = 2 * np.pi * 1e6


def random_banded(space, bandwidth, rng, qubit_levels=1):
    n = qubit_levels * space.dim
    upper = {0: rng.normal(size=n).astype(complex)}
    for d in range(1, bandwidth + 1):
        upper[d] = rng.normal(size=n - d) + 1j * rng.normal(size=n - d)
    return BandedOperator.hermitian_from_upper(space, upper, qubit_levels=qubit_levels)


def random_state(space, rng, qubit_levels=1):
    v = rng.normal(size=qubit_levels * space.dim) + 1j * rng.normal(size=qubit_levels * space.dim)
    v /= np.linalg.norm(v)
    return fock_state(space, 0, qubit_levels=qubit_levels).with_amplitudes(v, _check=False)


class TestSpace:
    def test_minimal_space(self):
        sp = make_space(2, 1.0)
        assert sp.dim == 2 and sp.omega_c == 1.0

    def test_production_space(self):
        sp = make_space(700, OMEGA)
        assert sp.dim == 700

    def test_rejects_dim_one(self):
        with pytest.raises(ValueError):
            make_space(1, 1.0)

    def test_rejects_nonpositive_frequency(self):
        with pytest.raises(ValueError):
            make_space(4, 0.0)


class TestLadder:
    def test_matrix_elements_dim3(self):
        sp = make_space(3, 1.0)
        a, a_dag, n_op = ladder_ops(sp)
        m = a.to_dense()
        assert m[0, 1] == 1.0
        assert m[1, 2] == pytest.approx(math.sqrt(2))
        assert np.count_nonzero(m) == 2
        assert np.allclose(a_dag.to_dense(), m.conj().T)

    def test_number_operator_on_vacuum(self):
        sp = make_space(4, 1.0)
        _, _, n_op = ladder_ops(sp)
        assert np.all(n_op.matvec(fock_state(sp, 0).amplitudes) == 0)

    def test_top_level_truncation_asymmetry(self):
        # a^dag a equals the number operator exactly in the truncated space,
        # while a a^dag loses its top entry (a^dag annihilates the top level):
        # at dim=4, (a^dag a)[3,3] = 3 but (a a^dag)[3,3] = 0, not the
        # infinite-space value 4.
        sp = make_space(4, 1.0)
        a, a_dag, n_op = ladder_ops(sp)
        ada = a_dag.to_dense() @ a.to_dense()
        aad = a.to_dense() @ a_dag.to_dense()
        assert np.allclose(ada, n_op.to_dense())
        assert ada[3, 3] == pytest.approx(3.0)
        assert np.allclose(np.diag(aad)[:3], [1.0, 2.0, 3.0])
        assert aad[3, 3] == 0.0


class TestFockState:
    def test_vacuum(self):
        sp = make_space(5, 1.0)
        psi = fock_state(sp, 0)
        assert psi.amplitudes[0] == 1.0

    def test_top_level_allowed(self):
        sp = make_space(5, 1.0)
        assert fock_state(sp, 4).amplitudes[4] == 1.0

    def test_out_of_range(self):
        sp = make_space(5, 1.0)
        with pytest.raises(ValueError):
            fock_state(sp, 5)


class TestCoherent:
    def test_alpha_zero_is_vacuum(self):
        sp = make_space(8, 1.0)
        psi = coherent_state(sp, 0.0)
        assert fidelity(psi, fock_state(sp, 0)) == 1.0

    def test_large_alpha_leakage_bound(self):
        sp = make_space(700, OMEGA)
        psi = coherent_state(sp, 20.0)
        assert psi.leakage < 1e-10

    def test_opposite_phase_overlap(self):
        # |<alpha|-alpha>| = exp(-2|alpha|^2); at alpha=2 this is exp(-8).
        sp = make_space(64, 1.0)
        val = abs(inner(coherent_state(sp, 2.0), coherent_state(sp, -2.0)))
        assert val == pytest.approx(math.exp(-8), rel=1e-10)

    def test_overlap_by_amplitude_sum(self):
        # independent route: sum the closed-form amplitude products directly
        amps_p, _ = coherent_amplitudes(64, 2.0)
        amps_m, _ = coherent_amplitudes(64, -2.0)
        assert np.vdot(amps_p, amps_m) == pytest.approx(math.exp(-8), rel=1e-9)

    def test_adequacy_precondition(self):
        sp = make_space(16, 1.0)
        with pytest.raises(TruncationError):
            coherent_state(sp, 3.5)  # 3.5^2 + 6*3.5 = 33.25 > 16

    def test_overlap_law_grid(self):
        sp = make_space(64, 1.0)
        rng = np.random.default_rng(11)
        for _ in range(12):
            al = rng.uniform(-3, 3) + 1j * rng.uniform(-3, 3)
            be = rng.uniform(-3, 3) + 1j * rng.uniform(-3, 3)
            al *= 3 / max(3, abs(al))
            be *= 3 / max(3, abs(be))
            f = fidelity(coherent_state(sp, al), coherent_state(sp, be))
            assert f == pytest.approx(math.exp(-abs(al - be) ** 2), abs=1e-10)


class TestInnerFidelity:
    def test_self_fidelity(self):
        sp = make_space(16, 1.0)
        rng = np.random.default_rng(3)
        psi = random_state(sp, rng)
        assert fidelity(psi, psi) == pytest.approx(1.0, abs=1e-14)

    def test_orthogonal_fock_states(self):
        sp = make_space(4, 1.0)
        assert fidelity(fock_state(sp, 0), fock_state(sp, 1)) == 0.0

    def test_coherent_pair(self):
        # |<2|-2>|^2 = exp(-16) ~ 1.125e-7
        sp = make_space(64, 1.0)
        f = fidelity(coherent_state(sp, 2.0), coherent_state(sp, -2.0))
        assert f == pytest.approx(math.exp(-16), rel=1e-8)
        assert f == pytest.approx(1.125e-7, rel=1e-3)

    def test_space_mismatch(self):
        with pytest.raises(ValueError):
            inner(fock_state(make_space(4, 1.0), 0), fock_state(make_space(5, 1.0), 0))


class TestExpmAction:
    def test_zero_time(self):
        sp = make_space(32, OMEGA)
        psi = coherent_state(sp, 1.5)
        out = expm_action(random_banded(sp, 2, np.random.default_rng(0)), 0.0, psi)
        assert np.array_equal(out.amplitudes, psi.amplitudes)

    def test_full_revolution_is_identity(self):
        sp = make_space(48, OMEGA)
        _, _, n_op = ladder_ops(sp)
        h = OMEGA * n_op
        psi = coherent_state(sp, 2.0)
        out = expm_action(h, 2 * np.pi / OMEGA, psi)
        assert np.linalg.norm(out.amplitudes - psi.amplitudes) < 1e-9

    def test_half_revolution_flips_sign(self):
        # exp(-i w n t) at t = pi/w multiplies amplitudes by (-1)^n
        sp = make_space(64, OMEGA)
        _, _, n_op = ladder_ops(sp)
        psi = coherent_state(sp, 2.0)
        out = expm_action(OMEGA * n_op, np.pi / OMEGA, psi)
        expected = psi.amplitudes * (-1.0) ** np.arange(sp.dim)
        assert np.linalg.norm(out.amplitudes - expected) < 1e-10

    def test_krylov_matches_dense_random_set(self):
        rng = np.random.default_rng(42)
        for dim, bw, qubits in ((64, 1, 1), (129, 3, 1), (256, 2, 1), (100, 1, 2)):
            sp = make_space(dim, 1.0)
            h = random_banded(sp, bw, rng, qubit_levels=qubits)
            psi = random_state(sp, rng, qubit_levels=qubits)
            t = rng.uniform(0.5, 3.0)
            k = expm_action(h, t, psi, method="krylov")
            d = expm_action(h, t, psi, method="dense")
            assert np.linalg.norm(k.amplitudes - d.amplitudes) < 1e-8

    def test_spectral_matches_dense(self):
        rng = np.random.default_rng(9)
        sp = make_space(300, 1.0)
        upper = {
            0: rng.normal(size=300).astype(complex),
            2: rng.normal(size=298) + 1j * rng.normal(size=298),
        }
        h = BandedOperator.hermitian_from_upper(sp, upper)
        psi = random_state(sp, rng)
        s = expm_action(h, 1.7, psi, method="spectral")
        d = expm_action(h, 1.7, psi, method="dense")
        assert np.linalg.norm(s.amplitudes - d.amplitudes) < 1e-10

    def test_negative_time_inverts(self):
        sp = make_space(64, 1.0)
        rng = np.random.default_rng(5)
        h = random_banded(sp, 1, rng)
        psi = random_state(sp, rng)
        back = expm_action(h, -1.2, expm_action(h, 1.2, psi))
        assert np.linalg.norm(back.amplitudes - psi.amplitudes) < 1e-9

    def test_norm_preservation(self):
        sp = make_space(128, OMEGA)
        rng = np.random.default_rng(8)
        h = random_banded(sp, 2, rng)
        out = expm_action(h, 3.3, random_state(sp, rng))
        assert abs(out.norm() - 1.0) < 1e-9

    def test_sampled_states_consistent(self):
        sp = make_space(64, 1.0)
        rng = np.random.default_rng(13)
        h = random_banded(sp, 1, rng)
        psi = random_state(sp, rng)
        times = [0.3, 0.7, 1.0]
        out, states = expm_action_sampled(h, 1.0, psi, times)
        for t, state in zip(times, states):
            direct = expm_action(h, t, psi)
            assert np.linalg.norm(state.amplitudes - direct.amplitudes) < 1e-9
        assert np.linalg.norm(out.amplitudes - states[-1].amplitudes) < 1e-12


class TestExpmDense:
    def test_zero_matrix(self):
        assert np.allclose(expm_dense(np.zeros((5, 5))), np.eye(5))

    def test_half_period_diagonal(self):
        sp = make_space(16, OMEGA)
        _, _, n_op = ladder_ops(sp)
        u = expm_dense(-1j * (np.pi / OMEGA) * (OMEGA * n_op.to_dense()))
        assert np.allclose(np.diag(u), (-1.0) ** np.arange(16), atol=1e-12)

    def test_unitarity_random(self):
        rng = np.random.default_rng(21)
        m = rng.normal(size=(256, 256)) + 1j * rng.normal(size=(256, 256))
        h = (m + m.conj().T) / 2
        u = expm_dense(-1j * 0.37 * h)
        assert np.linalg.norm(u @ u.conj().T - np.eye(256)) < 1e-10

    def test_dimension_guard(self):
        with pytest.raises(ValueError):
            expm_dense(np.zeros((5000, 5000)))


class TestQubitProduct:
    def test_index_convention(self):
        sp = make_space(6, 1.0)
        psi = tensor_qubit((1.0, 0.0), fock_state(sp, 0))  # |g>|0>
        assert psi.amplitudes[0] == 1.0
        psi_e = tensor_qubit((0.0, 1.0), fock_state(sp, 2))  # |e>|2>
        assert psi_e.amplitudes[sp.dim + 2] == 1.0

    def test_projection_recovers_boson(self):
        sp = make_space(32, 1.0)
        boson = coherent_state(sp, 1.2)
        plus = (1 / math.sqrt(2), 1 / math.sqrt(2))
        psi = tensor_qubit(plus, boson)
        block = psi.amplitudes.reshape(2, sp.dim)
        proj = (block[0] + block[1]) / math.sqrt(2)  # <+|psi>
        assert np.linalg.norm(proj - boson.amplitudes) < 1e-12

    def test_product_state_entropy_zero(self):
        sp = make_space(24, 1.0)
        psi = tensor_qubit((0.6, 0.8), coherent_state(sp, 1.0))
        assert partial_trace_qubit(psi).entropy_bits() == pytest.approx(0.0, abs=1e-12)

    def test_unnormalized_qubit_rejected(self):
        sp = make_space(4, 1.0)
        with pytest.raises(ValueError):
            tensor_qubit((1.0, 1.0), fock_state(sp, 0))


class TestPartialTrace:
    def test_product_is_rank_one(self):
        sp = make_space(16, 1.0)
        rho = partial_trace_qubit(tensor_qubit((0.6, 0.8j), coherent_state(sp, 0.5)))
        evals = rho.eigenvalues()
        assert evals[0] == pytest.approx(0.0, abs=1e-12)
        assert evals[1] == pytest.approx(1.0, abs=1e-12)

    def test_cat_state_eigenvalues(self):
        # (|a>|+> - |-a>|->)/sqrt2 with a=2: eigenvalues (1 +- e^{-8})/2
        from stamsim.stam import cat_state
        sp = make_space(64, 1.0)
        evals = partial_trace_qubit(cat_state(sp, 2.0)).eigenvalues()
        x = math.exp(-8)
        assert evals[0] == pytest.approx((1 - x) / 2, abs=1e-9)
        assert evals[1] == pytest.approx((1 + x) / 2, abs=1e-9)

    def test_orthogonal_branches_maximal(self):
        sp = make_space(8, 1.0)
        plus = tensor_qubit((1 / math.sqrt(2), 1 / math.sqrt(2)), fock_state(sp, 0))
        minus = tensor_qubit((-1 / math.sqrt(2), 1 / math.sqrt(2)), fock_state(sp, 1))
        psi = plus.with_amplitudes((plus.amplitudes - minus.amplitudes) / math.sqrt(2))
        evals = partial_trace_qubit(psi).eigenvalues()
        assert np.allclose(evals, [0.5, 0.5], atol=1e-12)

    def test_boson_only_rejected(self):
        sp = make_space(8, 1.0)
        with pytest.raises(ValueError):
            partial_trace_qubit(fock_state(sp, 0))


class TestDensityMatrix2:
    def test_trace_enforced(self):
        with pytest.raises(ValueError):
            DensityMatrix2(np.diag([0.7, 0.7]))

    def test_entropy_of_mixed(self):
        rho = DensityMatrix2(np.diag([0.5, 0.5]))
        assert rho.entropy_bits() == pytest.approx(1.0)


class TestSerialization:
    def test_state_round_trip_bit_exact(self):
        sp = make_space(12, 1.0)
        rng = np.random.default_rng(17)
        psi = random_state(sp, rng, qubit_levels=2)
        text = state_to_text(psi)
        back = state_from_text(text, sp)
        assert np.array_equal(back.amplitudes, psi.amplitudes)
        assert back.qubit_levels == 2

    def test_state_header(self):
        sp = make_space(3, 1.0)
        text = state_to_text(fock_state(sp, 1))
        lines = text.splitlines()
        assert lines[0] == "fockstate dim=3 qubit_levels=1"
        assert lines[2] == "1 1.0 0.0"

    def test_operator_triplets(self):
        sp = make_space(3, 1.0)
        a, _, _ = ladder_ops(sp)
        text = operator_to_text(a)
        assert text.splitlines()[0] == "0 1 1.0 0.0"
        assert f"1 2 {math.sqrt(2)!r} 0.0" in text

    def test_dim_mismatch_rejected(self):
        sp = make_space(3, 1.0)
        text = state_to_text(fock_state(sp, 0))
        with pytest.raises(ValueError):
            state_from_text(text, make_space(4, 1.0))


class TestBandedOperator:
    def test_hermitian_exact_by_construction(self):
        sp = make_space(32, 1.0)
        rng = np.random.default_rng(1)
        h = random_banded(sp, 3, rng)
        m = h.to_dense()
        assert np.max(np.abs(m - m.conj().T)) == 0.0

    def test_matvec_matches_dense(self):
        sp = make_space(20, 1.0)
        rng = np.random.default_rng(2)
        h = random_banded(sp, 4, rng)
        v = rng.normal(size=20) + 1j * rng.normal(size=20)
        assert np.allclose(h.matvec(v), h.to_dense() @ v)

    def test_addition_and_scaling(self):
        sp = make_space(16, 1.0)
        rng = np.random.default_rng(4)
        h1, h2 = random_banded(sp, 1, rng), random_banded(sp, 2, rng)
        combo = h1 + 2.0 * h2
        assert combo.hermitian
        assert np.allclose(combo.to_dense(), h1.to_dense() + 2 * h2.to_dense())

    def test_bandwidth(self):
        sp = make_space(16, 1.0)
        h = random_banded(sp, 3, np.random.default_rng(6))
        assert h.bandwidth == 3
