import numpy as np
import pytest

from conftest import amplitude_damping

from turlab.channels import kraus_from_unitary
from turlab.errors import ContractError, DegenerateChannel
from turlab.gates import SIGMA_X, SIGMA_Z
from turlab.harness import ExperimentConfig, generate_trial
from turlab.linalg import SubsystemLayout, dag
from turlab.protocol import (
    PARTS,
    _ancilla_pullback,
    _bound_pieces,
    approx_bound_quantities,
    correlator_bound,
    exact_correlator,
    nested_expectation,
    nested_run,
    protocol_correlator,
    protocol_state,
    sample_shots,
    separable_tur_protocol_check,
)
from turlab.random_ops import random_channel, random_density
from turlab.tur import purify

SE = SubsystemLayout((2, 2), ("S", "E"))
IDENTITY_CH = kraus_from_unitary(np.eye(4, dtype=complex), SE)
KET1 = np.diag([0.0, 1.0]).astype(complex)


def family_setup(seed, i, gamma_lo=0.0, gamma_hi=0.75):
    cfg = ExperimentConfig(seed=seed, n_trials=1, shots=0, gamma_range=(gamma_lo, gamma_hi), variants=("exact",))
    return generate_trial(cfg, i)


class TestExactCorrelator:
    def test_identity_channel_equal_observables(self, rng):
        rho = random_density(2, rng)
        c = exact_correlator(rho, IDENTITY_CH, SIGMA_Z, SIGMA_Z)
        assert abs(c - 1.0) <= 1e-12  # A(T) B = sz^2 = I

    def test_amplitude_damping_closed_form(self):
        # A(T) = diag(1, 2*gamma - 1), so C = <1| A(T) sz |1> = 1 - 2*gamma = 0
        c = exact_correlator(KET1, amplitude_damping(0.5), SIGMA_Z, SIGMA_Z)
        assert abs(c) <= 1e-12

    def test_non_unitary_observable_rejected(self, rng):
        with pytest.raises(ContractError):
            exact_correlator(random_density(2, rng), IDENTITY_CH, np.diag([1.0, 0.5]).astype(complex), SIGMA_Z)


class TestProtocolCorrelator:
    def test_identity_channel_equal_observables_real(self, rng):
        c = protocol_correlator(random_density(2, rng), IDENTITY_CH, SIGMA_X, SIGMA_X)
        assert abs(c.imag) <= 1e-10
        assert abs(c.real) <= 1.0 + 1e-10

    def test_matches_exact_on_family(self):
        for i in range(30):
            s = family_setup(11, i)
            c_direct = exact_correlator(s.rho, s.channel, s.a_op, s.b_op)
            c_proto = protocol_correlator(s.rho, s.channel, s.a_op, s.b_op)
            assert abs(c_direct - c_proto) <= 1e-10

    def test_matches_exact_on_random_qubit_channels(self, rng):
        paulis = [SIGMA_X, np.array([[0, -1j], [1j, 0]]), SIGMA_Z]
        for _ in range(10):
            ch = random_channel(2, 2, rng)
            rho = random_density(2, rng)
            a = paulis[rng.integers(3)]
            b = paulis[rng.integers(3)]
            assert abs(exact_correlator(rho, ch, a, b) - protocol_correlator(rho, ch, a, b)) <= 1e-10

    def test_identity_b_gives_one_point_function(self, rng):
        from turlab.channels import heisenberg
        ch = random_channel(2, 2, rng)
        rho = random_density(2, rng)
        c = protocol_correlator(rho, ch, SIGMA_Z, np.eye(2, dtype=complex))
        want = np.trace(rho @ heisenberg(ch, SIGMA_Z))
        assert abs(c - want) <= 1e-10

    def test_stage_traces(self, rng):
        s = family_setup(5, 0)
        for stage in ("prepared", "after_UB", "after_channel", "after_UA", "premeasure"):
            st = protocol_state(s.rho, s.channel, s.a_op, s.b_op, stage=stage)
            assert abs(np.trace(st.matrix).real - 1.0) <= 1e-10
            assert st.stage == stage


class TestCorrelatorBound:
    def test_identity_channel_zero_width(self, rng):
        rho = random_density(2, rng)
        report = correlator_bound(rho, IDENTITY_CH, SIGMA_X, SIGMA_Z)
        assert abs(report.xi_b) <= 1e-10
        assert abs(report.upper - report.lower) <= 1e-9
        assert abs(report.correlator_real - report.q_ab) <= 1e-9
        assert report.holds

    def test_amplitude_damping_containment(self):
        # all terms in closed form: rho_B = |1><1|, p0 = 1 - gamma, Xi_B = gamma/(1-gamma)
        report = correlator_bound(KET1, amplitude_damping(0.5), SIGMA_Z, SIGMA_Z)
        assert abs(report.correlator_real) <= 1e-12
        assert abs(report.xi_b - 1.0) <= 1e-10
        assert report.lower - 1e-9 <= report.correlator_real <= report.upper + 1e-9

    @pytest.mark.parametrize("part", PARTS)
    def test_family_exact_always_contained(self, part):
        for i in range(25):
            s = family_setup(23, i)
            report = correlator_bound(s.rho, s.channel, s.a_op, s.b_op, variant="exact", part=part)
            assert report.holds

    def test_q_matches_general_baseline(self, rng):
        # the protocol's Q_{A,B} is the general no-cost baseline of the embedded observable
        from turlab.gates import I2
        from turlab.channels import KrausChannel
        for i in range(5):
            s = family_setup(31, i, gamma_lo=0.1)
            report = correlator_bound(s.rho, s.channel, s.a_op, s.b_op)
            sigma_pb, _, _, _ = _bound_pieces(s.rho, s.channel, s.b_op)
            lifted = KrausChannel(
                tuple(np.kron(I2, v) for v in s.channel.operators),
                no_jump_index=s.channel.no_jump_index,
            )
            from turlab.tur import q_baseline_general
            g_emb = np.kron(
                np.kron(np.eye(8), _ancilla_pullback(s.a_op, "real")), np.eye(2)
            )
            q_gen = q_baseline_general(g_emb, purify(sigma_pb), lifted)
            assert abs(report.q_ab - q_gen) <= 1e-9

    def test_width_capped_by_sqrt_xi(self):
        s = family_setup(7, 3)
        report = correlator_bound(s.rho, s.channel, s.a_op, s.b_op)
        assert abs((report.upper - report.lower) - 2.0 * np.sqrt(max(report.xi_b, 0.0))) <= 1e-12


class TestApproxBoundQuantities:
    def test_identity_channel(self, rng):
        rho = random_density(2, rng)
        xi_a, q_a = approx_bound_quantities(rho, IDENTITY_CH, SIGMA_X, SIGMA_Z)
        exact = correlator_bound(rho, IDENTITY_CH, SIGMA_X, SIGMA_Z)
        assert abs(xi_a) <= 1e-12
        assert abs(q_a - exact.q_ab) <= 1e-10

    def test_gap_shrinks_with_interaction(self):
        def xi_gap(gamma, i):
            s = family_setup(41, i, gamma_lo=gamma, gamma_hi=gamma)
            exact = correlator_bound(s.rho, s.channel, s.a_op, s.b_op)
            xi_a, _ = approx_bound_quantities(s.rho, s.channel, s.a_op, s.b_op)
            return abs(xi_a - exact.xi_b)

        small = np.median([xi_gap(0.1, i) for i in range(10)])
        large = np.median([xi_gap(0.5, i) for i in range(10)])
        assert small < large

    def test_p0_factor_converges_faster_than_p0_squared(self):
        # arbitration of the second-term factor: the p0-linear reading tracks the
        # exact Q at the Neumann truncation rate, the p0^2 reading only first order
        gaps_p0, gaps_p0sq = [], []
        for i in range(10):
            s = family_setup(43, i, gamma_lo=0.05, gamma_hi=0.15)
            exact = correlator_bound(s.rho, s.channel, s.a_op, s.b_op)
            _, q1 = approx_bound_quantities(s.rho, s.channel, s.a_op, s.b_op, second_order_factor="p0")
            _, q2 = approx_bound_quantities(s.rho, s.channel, s.a_op, s.b_op, second_order_factor="p0_squared")
            gaps_p0.append(abs(q1 - exact.q_ab))
            gaps_p0sq.append(abs(q2 - exact.q_ab))
        assert np.median(gaps_p0) < np.median(gaps_p0sq)


class TestNestedExpectation:
    def test_identity_channel_reduces_to_plain_expectation(self, rng):
        from turlab.protocol import _entry_state
        rho = random_density(2, rng)
        value = nested_expectation(rho, IDENTITY_CH, SIGMA_X, SIGMA_Z)
        sigma_pb = _entry_state(rho, SIGMA_Z)
        want = np.trace(sigma_pb @ _ancilla_pullback(SIGMA_X, "real")).real
        assert abs(value - want) <= 1e-10

    def test_matches_direct_matrix_oracle(self):
        for i in range(10):
            s = family_setup(53, i, gamma_lo=0.1)
            value = nested_expectation(s.rho, s.channel, s.a_op, s.b_op)
            _, _, _, rho_v0 = _bound_pieces(s.rho, s.channel, s.b_op)
            g_p = _ancilla_pullback(s.a_op, "real")
            ww = np.kron(np.eye(2), s.channel.v0 @ dag(s.channel.v0))
            direct = np.trace(rho_v0 @ g_p @ ww).real
            assert abs(value - direct) <= 1e-9

    def test_postselection_chain_rule(self):
        s = family_setup(59, 2, gamma_lo=0.2)
        run = nested_run(s.rho, s.channel, s.a_op, s.b_op)
        # joint success rate from an independent two-projector evaluation
        from turlab.channels import ensure_dilation
        from turlab.gates import controlled
        from turlab.linalg import embed_operator, outer, basis_vector
        from turlab.protocol import _entry_state
        ch = ensure_dilation(s.channel)
        dil = ch.dilation
        dims = (2, 2, 4, 2, 2)
        plus = (basis_vector(2, 0) + basis_vector(2, 1)) / np.sqrt(2)
        env = outer(basis_vector(2, 0))
        sigma = np.kron(np.kron(outer(plus), _entry_state(s.rho, s.b_op)), np.kron(env, env))
        for op, pos in (
            (dil.unitary, (2, 3)),
            (controlled(_ancilla_pullback(s.a_op, "real")), (0, 1, 2)),
            (dag(dil.unitary), (2, 4)),
        ):
            full = embed_operator(op, dims, pos)
            sigma = full @ sigma @ dag(full)
        proj = embed_operator(env, dims, (3,)) @ embed_operator(env, dims, (4,))
        joint = np.trace(sigma @ proj).real
        assert abs(run.p_first * run.p_second - joint) <= 1e-10


class TestSeparableTurProtocolCheck:
    def test_identity_channel_degenerate(self, rng):
        report = separable_tur_protocol_check(random_density(2, rng), IDENTITY_CH, SIGMA_X, SIGMA_Z)
        assert report.degenerate and report.holds

    @pytest.mark.parametrize("part", PARTS)
    def test_family_holds(self, part):
        for i in range(20):
            s = family_setup(61, i)
            report = separable_tur_protocol_check(s.rho, s.channel, s.a_op, s.b_op, part=part)
            assert report.holds

    def test_variance_is_one_minus_mean_squared(self):
        s = family_setup(67, 1)
        report = separable_tur_protocol_check(s.rho, s.channel, s.a_op, s.b_op)
        assert abs(report.variance - (1.0 - report.mean**2)) <= 1e-12


class TestSampleShots:
    def test_deterministic_state_single_outcome(self):
        rho = np.diag([0.0, 1.0]).astype(complex)
        st = protocol_state(rho, IDENTITY_CH, SIGMA_Z, SIGMA_Z, stage="premeasure")
        res = sample_shots(st, 500, seed=(1, 2))
        assert sum(res.counts.values()) == 500

    def test_uniform_qubit_three_sigma(self):
        # |+> on S' after readout rotation: P(0) = 0.5; 10^6 shots, 3 sigma band
        rho = np.diag([1.0, 0.0]).astype(complex)
        st = protocol_state(rho, IDENTITY_CH, SIGMA_Z, SIGMA_X, stage="premeasure")
        res = sample_shots(st, 10**6, seed=7)
        layout = st.layout
        from turlab.protocol import key_digits
        n0 = sum(c for k, c in res.counts.items() if key_digits(k, layout)[0] == 0)
        p_hat = n0 / res.shots
        half = layout.dim // 2
        p_exact = float(np.sum(np.diag(st.matrix).real[:half]))  # S' is the slowest factor
        assert abs(p_exact - 0.5) <= 1e-10
        sigma = np.sqrt(p_exact * (1 - p_exact) / res.shots)
        assert abs(p_hat - p_exact) <= 3 * sigma + 1e-12

    def test_fixed_seed_bit_identical(self):
        s = family_setup(71, 0)
        st = protocol_state(s.rho, s.channel, s.a_op, s.b_op, stage="premeasure")
        r1 = sample_shots(st, 1000, seed=(3, 4, 5))
        r2 = sample_shots(st, 1000, seed=(3, 4, 5))
        assert r1.counts == r2.counts

    def test_requires_premeasure_stage(self, rng):
        st = protocol_state(random_density(2, rng), IDENTITY_CH, SIGMA_X, SIGMA_Z, stage="after_UA")
        with pytest.raises(ContractError):
            sample_shots(st, 10, seed=0)

    def test_counts_sum_to_shots(self):
        s = family_setup(73, 1)
        st = protocol_state(s.rho, s.channel, s.a_op, s.b_op, stage="premeasure")
        res = sample_shots(st, 1234, seed=9)
        assert sum(res.counts.values()) == 1234


class TestSamplingConvergence:
    def test_error_shrinks_with_shots(self):
        from turlab.harness import estimate_main_circuit
        s = family_setup(79, 0, gamma_lo=0.3, gamma_hi=0.6)
        st = protocol_state(s.rho, s.channel, s.a_op, s.b_op, stage="premeasure")
        c_exact = exact_correlator(s.rho, s.channel, s.a_op, s.b_op).real

        def errs(shots, reps):
            out = []
            for r in range(reps):
                res = sample_shots(st, shots, seed=(101, shots, r))
                c_hat, _, _ = estimate_main_circuit(res, st.layout)
                out.append(abs(c_hat - c_exact))
            return np.median(out)

        e_small, e_large = errs(10**3, 15), errs(10**5, 15)
        assert e_large < 0.5 * e_small  # O(1/sqrt(shots)) gives ~0.1x


class TestDegenerateChannelPaths:
    def test_nested_degenerate_postselection(self):
        # full decay: V0 = |0><0| is singular -> zero no-jump weight on |1>
        ch = amplitude_damping(1.0)
        rho = np.diag([0.0, 1.0]).astype(complex)
        with pytest.raises((DegenerateChannel, ContractError)):
            nested_expectation(rho, ch, SIGMA_Z, SIGMA_Z)
