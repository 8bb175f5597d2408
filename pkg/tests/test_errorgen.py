import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from xtalkgst import errorgen, superop

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}


def pauli(label):
    out = np.eye(1)
    for ch in label:
        out = np.kron(out, PAULI[ch])
    return out


def unitary_ptm(u):
    d = u.shape[0]
    n = int(np.log2(d))
    labels = superop.pauli_labels(n)
    ps = [pauli(lab) for lab in labels]
    return np.array([[np.trace(pa @ u @ pb @ u.conj().T).real / d for pb in ps] for pa in ps])


seeds = st.integers(min_value=0, max_value=2**31 - 1)


class TestGenerators:
    def test_hamiltonian_antisymmetric(self):
        for p in errorgen.nontrivial_paulis(2):
            h = errorgen.hamiltonian_generator(p)
            np.testing.assert_allclose(h, -h.T, atol=1e-14)

    def test_stochastic_diagonal(self):
        for p in errorgen.nontrivial_paulis(2):
            s = errorgen.stochastic_generator(p)
            np.testing.assert_allclose(s, np.diag(np.diag(s)), atol=1e-14)
            assert s[0, 0] == 0

    def test_bases_mutually_orthogonal(self):
        for n in (1, 2):
            labels = errorgen.nontrivial_paulis(n)
            hs = np.array([errorgen.hamiltonian_generator(p, n).ravel() for p in labels])
            ss = np.array([errorgen.stochastic_generator(p, n).ravel() for p in labels])
            assert np.max(np.abs(hs @ ss.T)) < 1e-12
            gram_h = hs @ hs.T
            assert np.max(np.abs(gram_h - np.diag(np.diag(gram_h)))) < 1e-12
            # Stochastic generators overlap each other but span a full-rank block.
            assert np.linalg.matrix_rank(ss) == len(labels)

    def test_hamiltonian_matches_unitary(self):
        # exp(h * H_P) is the PTM of exp(-i h P)
        for p in ("X", "ZZ", "XY"):
            u = scipy.linalg.expm(-1j * 0.3 * pauli(p))
            np.testing.assert_allclose(
                superop.expm(0.3 * errorgen.hamiltonian_generator(p)), unitary_ptm(u), atol=1e-12
            )

    def test_stochastic_matches_pauli_channel(self):
        s = 0.02
        g = superop.expm(s * errorgen.stochastic_generator("X"))
        # Pauli channel with flip probability (1 - exp(-2s)) / 2
        p = (1 - np.exp(-2 * s)) / 2
        expected = (1 - p) * np.eye(4) + p * unitary_ptm(X)
        np.testing.assert_allclose(g, expected, atol=1e-12)

    @pytest.mark.parametrize("bad", ["", "II", "XA", "I"])
    def test_bad_labels(self, bad):
        with pytest.raises(ValueError):
            errorgen.hamiltonian_generator(bad, max(len(bad), 1))


class TestTargets:
    def test_xpi2_is_quarter_turn(self):
        u = scipy.linalg.expm(-1j * np.pi / 4 * X)
        np.testing.assert_allclose(errorgen.target_gate("Gxpi2"), unitary_ptm(u), atol=1e-12)

    def test_layer_target_is_tensor(self):
        g = errorgen.target_gate(("Gxpi2", "Gypi2"))
        expected = superop.tensor(errorgen.target_gate("Gxpi2"), errorgen.target_gate("Gypi2"))
        np.testing.assert_allclose(g, expected, atol=1e-12)

    def test_string_layer_label(self):
        np.testing.assert_allclose(
            errorgen.target_gate("Gi:Gxpi2"), errorgen.target_gate(("Gi", "Gxpi2")), atol=1e-15
        )

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            errorgen.target_gate("Gzpi2")


class TestBuildDecompose:
    def test_ideal_gate_has_zero_error(self):
        ham, sto, res = errorgen.decompose_gate(errorgen.target_gate("Gypi2"), "Gypi2")
        np.testing.assert_allclose(ham.as_array(), 0, atol=1e-12)
        np.testing.assert_allclose(sto.as_array(), 0, atol=1e-12)
        assert res < 1e-12

    def test_overrotation_oracle(self):
        # A 10 mrad Hamiltonian coefficient is a 20 mrad extra angle about X.
        g = errorgen.build_gate("Gxpi2", dh=(0.010, 0, 0))
        u = scipy.linalg.expm(-1j * (np.pi / 4 + 0.010) * X)
        np.testing.assert_allclose(g, unitary_ptm(u), atol=1e-12)
        ham, _, _ = errorgen.decompose_gate(g, "Gxpi2")
        assert ham["X"] == pytest.approx(0.010, abs=1e-10)

    @given(seeds)
    @settings(max_examples=25, deadline=None)
    def test_round_trip_one_qubit(self, seed):
        rng = np.random.default_rng(seed)
        dh = rng.uniform(-1, 1, 3)
        dh *= rng.uniform(0, 0.05) / np.linalg.norm(dh)
        s = rng.uniform(0, 1e-2, 3)
        target = ("Gi", "Gxpi2", "Gypi2")[seed % 3]
        g = errorgen.build_gate(target, dh, s)
        assert superop.is_cptp(g, tol=1e-9)
        ham, sto, res = errorgen.decompose_gate(g, target)
        assert np.max(np.abs(ham.as_array() - dh)) < 1e-6
        assert np.max(np.abs(sto.as_array() - s)) < 1e-6
        assert res < 1e-9

    @given(seeds)
    @settings(max_examples=10, deadline=None)
    def test_round_trip_two_qubit(self, seed):
        rng = np.random.default_rng(seed)
        dh = rng.uniform(-1, 1, 15)
        dh *= rng.uniform(0, 0.05) / np.linalg.norm(dh)
        s = rng.uniform(0, 1e-2, 15)
        layer = (("Gi", "Gxpi2", "Gypi2")[seed % 3], ("Gi", "Gxpi2", "Gypi2")[(seed // 3) % 3])
        g = errorgen.build_gate(layer, dh, s)
        assert superop.is_cptp(g, tol=1e-9)
        ham, sto, _ = errorgen.decompose_gate(g, layer)
        assert np.max(np.abs(ham.as_array() - dh)) < 1e-6
        assert np.max(np.abs(sto.as_array() - s)) < 1e-6

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            errorgen.build_gate("Gi", s=(-1e-3, 0, 0))

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            errorgen.build_gate("Gi", dh=(0.0, 0.0))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            errorgen.decompose_gate(np.eye(16), "Gi")

    def test_non_pauli_part_goes_to_residual(self):
        # Amplitude damping is not a Pauli-stochastic channel.
        gamma = 0.02
        g = np.eye(4)
        g[1, 1] = g[2, 2] = np.sqrt(1 - gamma)
        g[3, 3] = 1 - gamma
        g[3, 0] = gamma
        _, _, res = errorgen.decompose_gate(g, "Gi")
        assert res > 1e-3


class TestZZ:
    def test_zz_oracle_noiseless(self):
        eps = 1e-2
        u = scipy.linalg.expm(-1j * (eps / 2) * pauli("ZZ"))
        est = errorgen.zz_coefficient(unitary_ptm(u))
        assert abs(est - eps) / eps <= 0.02
        assert est == pytest.approx(eps, rel=1e-9)

    def test_zz_with_depolarizing_background(self):
        eps = 1e-2
        g = errorgen.build_gate(("Gi", "Gi"), dh=_vec2({"ZZ": eps / 2}), s=_vec2({"XI": 1e-3, "IZ": 1e-3}))
        assert errorgen.zz_coefficient(g) == pytest.approx(eps, rel=1e-9)


def _vec2(terms):
    return np.array([terms.get(p, 0.0) for p in errorgen.nontrivial_paulis(2)])


class TestGaugeInvariants:
    def test_commuting_error_rate(self):
        assert errorgen.commuting_error_rate(errorgen.HamiltonianCoeffs((0, 0, 0)), "Gxpi2") == 0
        g = errorgen.build_gate("Gxpi2", dh=(5e-3, 0, 0))
        ham, _, _ = errorgen.decompose_gate(g, "Gxpi2")
        assert errorgen.commuting_error_rate(ham, "Gxpi2") == pytest.approx(5.0, abs=1e-8)
        assert errorgen.commuting_error_rate(errorgen.HamiltonianCoeffs((0, 2e-3, 0)), "Gypi2") == pytest.approx(2.0)
        np.testing.assert_allclose(
            errorgen.commuting_error_rate(errorgen.HamiltonianCoeffs((1e-3, 2e-3, 3e-3)), "Gi"), [1, 2, 3]
        )

    def test_commuting_error_rate_unknown(self):
        with pytest.raises(ValueError):
            errorgen.commuting_error_rate(errorgen.HamiltonianCoeffs((0, 0, 0)), "Gcnot")

    def test_context_variation_table_example(self):
        a = errorgen.HamiltonianCoeffs((0, 0, 3.0e-3))
        b = errorgen.HamiltonianCoeffs((0, 0, -10.2e-3))
        np.testing.assert_allclose(errorgen.context_variation(a, b), [0, 0, 13.2], atol=1e-9)

    def test_context_variation_trivial(self):
        a = errorgen.HamiltonianCoeffs((1e-3, -2e-3, 4e-3))
        b = errorgen.HamiltonianCoeffs((-3e-3, 5e-3, 0.5e-3))
        np.testing.assert_allclose(errorgen.context_variation(a, a), 0)
        np.testing.assert_allclose(errorgen.context_variation(a, b), -errorgen.context_variation(b, a))

    @given(seeds)
    @settings(max_examples=15, deadline=None)
    def test_context_variation_invariant_under_commuting_gauge(self, seed):
        # A gauge rotation about the gate's own axis leaves the commuting (X)
        # component of the difference unchanged and only rotates Y/Z.
        rng = np.random.default_rng(seed)
        dh_a, dh_b = rng.uniform(-0.02, 0.02, (2, 3))
        s = rng.uniform(0, 5e-3, 3)
        s[1] = s[2]  # X-axis symmetric dephasing so the gauge keeps it Pauli-diagonal
        ga = errorgen.build_gate("Gxpi2", dh_a, s)
        gb = errorgen.build_gate("Gxpi2", dh_b, s)
        ref = errorgen.context_variation(
            errorgen.decompose_gate(ga, "Gxpi2")[0], errorgen.decompose_gate(gb, "Gxpi2")[0]
        )
        v = unitary_ptm(scipy.linalg.expm(-1j * rng.uniform(-np.pi, np.pi) * X))
        vi = v.T
        got = errorgen.context_variation(
            errorgen.decompose_gate(v @ ga @ vi, "Gxpi2")[0], errorgen.decompose_gate(v @ gb @ vi, "Gxpi2")[0]
        )
        assert got[0] == pytest.approx(ref[0], abs=1e-8 * 1e3)
        assert np.linalg.norm(got[1:]) == pytest.approx(np.linalg.norm(ref[1:]), abs=1e-8 * 1e3)

    @given(seeds)
    @settings(max_examples=15, deadline=None)
    def test_context_variation_norm_invariant_under_any_unitary_gauge(self, seed):
        # A generic gauge unitary rotates the difference vector without changing its length.
        rng = np.random.default_rng(seed)
        dh_a, dh_b = rng.uniform(-0.02, 0.02, (2, 3))
        ga = errorgen.build_gate("Gi", dh_a)
        gb = errorgen.build_gate("Gi", dh_b)
        z = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        q, _ = np.linalg.qr(z)
        v = unitary_ptm(q)
        ref = errorgen.context_variation(errorgen.HamiltonianCoeffs(tuple(dh_a)), errorgen.HamiltonianCoeffs(tuple(dh_b)))
        got = errorgen.context_variation(
            errorgen.decompose_gate(v @ ga @ v.T, "Gi")[0], errorgen.decompose_gate(v @ gb @ v.T, "Gi")[0]
        )
        assert np.linalg.norm(got) == pytest.approx(np.linalg.norm(ref), abs=1e-8 * 1e3)


class TestReport:
    def test_to_dict_units(self):
        rep = errorgen.GateErrorReport(
            "Gxpi2", "Gi", errorgen.HamiltonianCoeffs((1e-3, 0, 0)), errorgen.StochasticCoeffs((1e-4, 0, 0))
        )
        d = rep.to_dict()
        assert d["hamiltonian_mrad"]["X"]["value"] == pytest.approx(1.0)
        assert d["hamiltonian_mrad"]["X"]["halfwidth"] is None
        assert d["stochastic"]["X"]["value"] == pytest.approx(1e-4)
