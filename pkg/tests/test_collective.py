import numpy as np
import pytest

from qfilt import collective as col
from qfilt.operators import SIGMA_MINUS, SIGMA_PLUS, SIGMA_Z

PAULI_HALF = {"+": SIGMA_PLUS, "-": SIGMA_MINUS, "z": SIGMA_Z / 2.0}


def embed_single(op2, qubit, N):
    return np.kron(np.kron(np.eye(2 ** qubit), op2), np.eye(2 ** (N - qubit - 1)))


def random_collective(N, seed):
    rng = np.random.default_rng(seed)
    rho = col.CollectiveDensity.zeros(N)
    total = 0.0
    for tj in rho.blocks:
        d = tj + 1
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        b = a @ a.conj().T
        rho.blocks[tj] = b
        total += col.irrep_degeneracy(tj / 2.0, N) * np.trace(b).real
    for tj in rho.blocks:
        rho.blocks[tj] = rho.blocks[tj] / total
    return rho


def full_space_channel_rhs(channel, full, N):
    s1 = (channel.s_I * np.eye(2) + channel.s_plus * SIGMA_PLUS
          + channel.s_minus * SIGMA_MINUS + channel.s_z * SIGMA_Z)
    out = np.zeros_like(full)
    for n in range(N):
        s = embed_single(s1, n, N)
        sd = s.conj().T
        out += s @ full @ sd - 0.5 * (sd @ s @ full + full @ sd @ s)
    return out


class TestCounting:
    @pytest.mark.parametrize("N", range(1, 21))
    def test_dimension_sum(self, N):
        total = sum(col.irrep_degeneracy(tj / 2.0, N) * (tj + 1)
                    for tj in range(N + 1))
        assert total == 2 ** N

    @pytest.mark.parametrize("N", [2, 3, 5, 8, 13])
    def test_alpha_is_cumulative_multiplicity(self, N):
        for tj in range(N % 2, N + 1, 2):
            expect = sum(col.irrep_degeneracy(t / 2.0, N)
                         for t in range(tj, N + 1, 2))
            assert col.alpha_cumulative(tj / 2.0, N) == expect

    def test_small_n_values(self):
        assert col.irrep_degeneracy(1.0, 2) == 1
        assert col.irrep_degeneracy(0.0, 2) == 1
        assert col.irrep_degeneracy(0.5, 3) == 2
        assert col.irrep_degeneracy(1.5, 3) == 1

    def test_top_alpha_is_one(self):
        for N in (1, 2, 5, 10, 17):
            assert col.alpha_cumulative(N / 2.0, N) == 1

    def test_out_of_range_is_zero(self):
        assert col.irrep_degeneracy(-0.5, 4) == 0
        assert col.irrep_degeneracy(3.0, 4) == 0
        assert col.irrep_degeneracy(0.5, 4) == 0  # parity mismatch
        assert col.alpha_cumulative(6.0, 10) == 0

    def test_collective_dim(self):
        assert col.collective_dim(2) == 4
        assert col.collective_dim(3) == 6
        assert col.collective_dim(100) == 2601
        for N in range(1, 12):
            expect = sum(tj + 1 for tj in range(N % 2, N + 1, 2))
            assert col.collective_dim(N) == expect


class TestGTensor:
    def test_single_spin_reduction(self):
        # N = 1: only the same-J term survives and reproduces the single-spin
        # matrix elements
        for q, r in (("+", "-"), ("z", "z"), ("-", "+"), ("+", "z")):
            for M in (0.5, -0.5):
                for Mp in (0.5, -0.5):
                    terms = col.g_tensor_apply(q, r, 0.5, M, Mp, 1)
                    got = np.zeros((2, 2), dtype=complex)
                    for (Jo, Mo, Mpo, cf) in terms:
                        assert Jo == 0.5
                        got[int(round(0.5 - Mo)), int(round(0.5 - Mpo))] += cf
                    E = np.zeros((2, 2), dtype=complex)
                    E[int(round(0.5 - M)), int(round(0.5 - Mp))] = 1.0
                    expect = PAULI_HALF[q] @ E @ PAULI_HALF[r].conj().T
                    assert np.max(np.abs(got - expect)) < 1e-12

    def test_stretched_z_element_has_no_lower_block(self):
        # B_z vanishes at M = J, so q = r = z on the stretched element stays
        # in the same block (plus a possible J+1 term)
        terms = col.g_tensor_apply("z", "z", 1.0, 1.0, 1.0, 4)
        assert all(round(2 * t[0]) != 0 for t in terms if t[0] < 1.0)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            col.g_tensor_apply("x", "z", 1.0, 0.0, 0.0, 4)
        with pytest.raises(ValueError):
            col.g_tensor_apply("z", "z", 1.0, 2.0, 0.0, 4)
        with pytest.raises(ValueError):
            col.g_tensor_apply("z", "z", 0.5, 0.5, 0.5, 4)  # parity mismatch

    @pytest.mark.parametrize("N", [1, 2, 3])
    def test_against_full_space_oracle(self, N):
        # brute force: apply sum_n sigma_q . sigma_r^dag to the embedded
        # element (normalized as 1/d sum over degenerate copies) and
        # re-project; the coefficients follow the identity's normalization
        rng = np.random.default_rng(N)
        sectors = col.irrep_embeddings(N)
        for _ in range(12):
            tjs = [tj for tj in sectors if col.irrep_degeneracy(tj / 2.0, N) > 0]
            tj = int(rng.choice(tjs))
            J = tj / 2.0
            M = J - rng.integers(0, tj + 1)
            Mp = J - rng.integers(0, tj + 1)
            q, r = rng.choice(["+", "-", "z"], 2)
            E = np.zeros((tj + 1, tj + 1), dtype=complex)
            E[int(round(J - M)), int(round(J - Mp))] = 1.0
            d = col.irrep_degeneracy(J, N)
            full = sum(V @ E @ V.conj().T for V in sectors[tj]) / d
            out = np.zeros_like(full)
            for n in range(N):
                sq = embed_single(PAULI_HALF[q], n, N)
                sr = embed_single(PAULI_HALF[r], n, N)
                out += sq @ full @ sr.conj().T
            got = col.CollectiveDensity.zeros(N)
            for (Jo, Mo, Mpo, cf) in col.g_tensor_apply(q, r, J, M, Mp, N):
                tjo = int(round(2 * Jo))
                got.blocks[tjo][int(round(Jo - Mo)), int(round(Jo - Mpo))] += cf
            # re-project the oracle output in the 1/d-normalized convention
            for tjo, vlist in sectors.items():
                proj = sum(V.conj().T @ out @ V for V in vlist)
                assert np.max(np.abs(proj - got.blocks[tjo])) < 1e-12


class TestSymmetricLindblad:
    def test_identity_channel_is_null(self):
        rho = random_collective(4, 0)
        out = col.symmetric_lindblad_apply(col.SpinChannel(s_I=1.0), rho)
        worst = max(np.max(np.abs(b)) for b in out.blocks.values())
        assert worst < 1e-13

    @pytest.mark.parametrize("N", [1, 2, 3, 4])
    def test_matches_full_space_oracle(self, N):
        rng = np.random.default_rng(N + 10)
        for trial in range(6):
            ch = col.SpinChannel(
                s_I=complex(rng.normal(), rng.normal()),
                s_plus=complex(rng.normal(), rng.normal()),
                s_minus=complex(rng.normal(), rng.normal()),
                s_z=complex(rng.normal(), rng.normal()))
            rho = random_collective(N, 100 * N + trial)
            got = col.symmetric_lindblad_apply(ch, rho)
            full = col.embed_collective(rho)
            oracle = col.project_collective(full_space_channel_rhs(ch, full, N), N)
            for tj in got.blocks:
                assert np.max(np.abs(got.blocks[tj] - oracle.blocks[tj])) < 1e-12

    def test_triplet_sigma_z_against_brute_force(self):
        # N = 2 coherent state in the triplet block under a sigma_z channel
        rho = col.coherent_top(2)
        ch = col.SpinChannel(s_z=1.0)
        got = col.symmetric_lindblad_apply(ch, rho)
        full = col.embed_collective(rho)
        oracle = col.project_collective(full_space_channel_rhs(ch, full, 2), 2)
        for tj in got.blocks:
            assert np.max(np.abs(got.blocks[tj] - oracle.blocks[tj])) < 1e-12

    def test_traceless_and_hermitian(self):
        rho = random_collective(5, 3)
        ch = col.SpinChannel(s_plus=0.3 + 0.1j, s_minus=1.0, s_z=0.2j)
        out = col.symmetric_lindblad_apply(ch, rho)
        assert abs(out.physical_trace()) < 1e-10
        for b in out.blocks.values():
            assert np.max(np.abs(b - b.conj().T)) < 1e-10

    def test_decay_leaks_from_top_block(self):
        for N in (2, 4, 6):
            rho = col.coherent_top(N)
            out = col.symmetric_lindblad_apply(col.SpinChannel(s_minus=1.0), rho)
            leak = col.irrep_degeneracy(N / 2.0 - 1.0, N) * np.trace(
                out.blocks[N - 2]).real
            assert leak > 0.0

    def test_collective_decay_confined_to_top(self):
        rho = col.coherent_top(4)
        ch = col.CollectiveChannel(word_coeffs=((1.0, "-"),))
        out = col.collective_lindblad_apply(ch, rho)
        for tj, b in out.blocks.items():
            if tj != 4:
                assert np.max(np.abs(b)) < 1e-14


class TestMasterStep:
    def test_collective_hamiltonian_keeps_populations(self):
        rho = random_collective(4, 7)
        pops = {tj: np.diag(b).real.copy() for tj, b in rho.blocks.items()}
        out = rho
        for _ in range(50):
            out = col.collective_master_step([(1.0, "z")], [], out, 1e-2)
        for tj, b in out.blocks.items():
            assert np.max(np.abs(np.diag(b).real - pops[tj])) < 1e-12

    @pytest.mark.parametrize("N", [2, 3, 4])
    def test_evolution_matches_full_space(self, N):
        # the module's central check: block evolution equals the projected
        # full-space master equation over t = 1/Gamma
        from scipy.integrate import solve_ivp
        ch = col.SpinChannel(s_minus=1.0, s_z=0.3, rate=1.0)
        rho = random_collective(N, 20 + N)
        full0 = col.embed_collective(rho)

        def rhs(_, y):
            full = y.reshape(full0.shape)
            return full_space_channel_rhs(ch, full, N).ravel()

        sol = solve_ivp(rhs, (0.0, 1.0), full0.ravel(), rtol=1e-10, atol=1e-12)
        oracle = col.project_collective(sol.y[:, -1].reshape(full0.shape), N)
        state = rho
        dt = 1e-3
        for _ in range(1000):
            state = col.collective_master_step(None, [ch], state, dt)
        for tj in state.blocks:
            assert np.max(np.abs(state.blocks[tj] - oracle.blocks[tj])) < 1e-8

    def test_no_cross_block_coherence_in_full_space(self):
        # the oracle's own projected coherences between different J vanish:
        # symmetric channels never couple irrep blocks coherently
        N = 3
        ch = col.SpinChannel(s_minus=1.0)
        rho = random_collective(N, 31)
        full = col.embed_collective(rho)
        sectors = col.irrep_embeddings(N)
        out = full_space_channel_rhs(ch, full, N)
        v_top = sectors[3][0]
        for v_low in sectors[1]:
            cross = v_top.conj().T @ out @ v_low
            assert np.max(np.abs(cross)) < 1e-12

    def test_trace_conserved(self):
        rho = random_collective(5, 8)
        ch = col.SpinChannel(s_plus=0.4, s_minus=1.0, s_z=0.1)
        state = rho
        for _ in range(100):
            state = col.collective_master_step([(0.3, "+-")], [ch], state, 1e-3)
        assert abs(state.physical_trace() - 1.0) < 1e-9

    def test_collective_decay_keeps_top_population(self):
        rho = col.coherent_top(4)
        ch = col.CollectiveChannel(word_coeffs=((1.0, "-"),), rate=1.0)
        state = rho
        for _ in range(200):
            state = col.collective_master_step(None, [ch], state, 1e-3)
        assert abs(col.irrep_population(state, 2.0) - 1.0) < 1e-9


class TestStatesAndObservables:
    def test_cat_state_normalized(self):
        rho = col.cat_state(6)
        assert abs(rho.physical_trace() - 1.0) < 1e-12
        assert abs(col.fidelity_with(rho, col.cat_state(6)) - 1.0) < 1e-12

    def test_coherent_squeezing_reference(self):
        for N in (2, 8, 20):
            assert abs(col.squeezing_xi2(col.coherent_top(N)) - 1.0) < 1e-10

    def test_xi2_undefined_at_zero_polarization(self):
        rho = col.cat_state(4)  # <Jz> = 0
        with pytest.raises(ZeroDivisionError):
            col.squeezing_xi2(rho)

    def test_irrep_population_conservation(self):
        rho = random_collective(5, 9)
        ch = col.SpinChannel(s_minus=1.0)
        state = rho
        js = [tj / 2.0 for tj in state.blocks]
        for _ in range(100):
            state = col.collective_master_step(None, [ch], state, 1e-3)
        pops = [col.irrep_population(state, J) for J in js]
        assert abs(sum(pops) - 1.0) < 1e-8
        assert all(p > -1e-9 for p in pops)

    def test_top_population_decreases_under_local_decay(self):
        N = 4
        state = col.coherent_top(N)
        p0 = col.irrep_population(state, N / 2.0)
        state = col.collective_master_step(None, [col.SpinChannel(s_minus=1.0)],
                                           state, 1e-3)
        assert col.irrep_population(state, N / 2.0) < p0

    def test_cat_dephasing_direction(self):
        # superposition-state dephasing: the collective J_z channel is the
        # faster one for N > 4 (coherence rate N^2/2 versus 2N per unit
        # rate; they cross exactly at N = 4), so the symmetric-local channel
        # preserves cat fidelity longer.  Verified against the full-space
        # oracle at small N by TestMasterStep.
        N, gamma = 10, 1.0
        ref = col.cat_state(N)
        local = col.cat_state(N)
        coll = col.cat_state(N)
        ch_local = col.SpinChannel(s_z=1.0, rate=gamma)
        # collective analog of sum_n sigma_z^(n) is 2 Jz
        ch_coll = col.CollectiveChannel(word_coeffs=((2.0, "z"),), rate=gamma)
        dt = 1e-3
        fids = []
        for i in range(200):
            local = col.collective_master_step(None, [ch_local], local, dt)
            coll = col.collective_master_step(None, [ch_coll], coll, dt)
            fids.append((col.fidelity_with(local, ref), col.fidelity_with(coll, ref)))
        fids = np.array(fids)
        assert np.all(fids[:, 0] > fids[:, 1] - 1e-12)
        assert fids[-1, 0] > fids[-1, 1]
        # analytic coherence rates: local 2N, collective (2 Jz) -> 2 N^2
        t = dt * len(fids)
        f_local_exact = 0.5 + 0.5 * np.exp(-2.0 * N * gamma * t)
        f_coll_exact = 0.5 + 0.5 * np.exp(-2.0 * N * N * gamma * t)
        assert abs(fids[-1, 0] - f_local_exact) < 1e-3
        assert abs(fids[-1, 1] - f_coll_exact) < 1e-3


class TestEmbeddings:
    @pytest.mark.parametrize("N", [2, 3, 4, 5])
    def test_isometries(self, N):
        sectors = col.irrep_embeddings(N)
        for tj, vlist in sectors.items():
            assert len(vlist) == col.irrep_degeneracy(tj / 2.0, N)
            for V in vlist:
                assert np.max(np.abs(V.conj().T @ V - np.eye(tj + 1))) < 1e-12

    def test_embed_project_roundtrip(self):
        rho = random_collective(4, 40)
        back = col.project_collective(col.embed_collective(rho), 4)
        for tj in rho.blocks:
            assert np.max(np.abs(back.blocks[tj] - rho.blocks[tj])) < 1e-12

    def test_embedding_trace(self):
        rho = random_collective(3, 41)
        full = col.embed_collective(rho)
        assert abs(np.trace(full).real - 1.0) < 1e-12
