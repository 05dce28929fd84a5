"""State constructors, truncation rules and the JSON spec layer."""

import json
import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import gammaln

from polqdist.states import (
    HARD_N_MAX_CAP,
    PolarizationState,
    StateSpec,
    TruncationCapError,
    build_state,
    make_coherent_pair,
    make_kerr,
    make_squeezed_pair,
    make_tmsv,
    mean_excitation,
    squeezed_fock_amplitude,
    squeezed_fock_amplitudes,
    state_from_blocks,
    suggest_truncation,
)

# <k|S(xi)D(alpha)|0> frozen from dense exponentials of the defining
# operators (dim 200), pinning sign and branch conventions
SQUEEZED_REFERENCE = {
    (2.0, 0.3, 0): 0.0739182438134288 + 0.0j,
    (2.0, 0.3, 1): 0.14142451046114723 + 0.0j,
    (2.0, 0.3, 3): 0.2618044921542126 + 0.0j,
    (2.0, 0.3, 6): 0.33594949530427737 + 0.0j,
    (1.0 + 0.5j, 0.2 - 0.6j, 0): 0.5701894023740557 - 0.16868365947390018j,
    (1.0 + 0.5j, 0.2 - 0.6j, 1): 0.542388956229447 + 0.09646608184719568j,
    (1.0 + 0.5j, 0.2 - 0.6j, 3): 0.26731709615178945 - 0.15949960700198607j,
    (1.0 + 0.5j, 0.2 - 0.6j, 6): 0.006411236875021514 - 0.16044664071024164j,
    (0.0, 0.7, 0): 0.8925835871182454 + 0.0j,
    (0.0, 0.7, 1): 0.0 + 0.0j,
    (0.0, 0.7, 6): 0.11014830311129592 + 0.0j,
}


def dense_squeezed_oracle(alpha, xi, dim=140):
    a = np.diag(np.sqrt(np.arange(1.0, dim)), 1)
    ad = a.conj().T
    disp = expm(alpha * ad - np.conj(alpha) * a)
    sq = expm(0.5 * (xi * ad @ ad - np.conj(xi) * a @ a))
    vac = np.zeros(dim)
    vac[0] = 1.0
    return sq @ (disp @ vac)


@pytest.mark.parametrize("key", sorted(SQUEEZED_REFERENCE, key=str))
def test_squeezed_amplitudes_frozen_values(key):
    alpha, xi, k = key
    assert squeezed_fock_amplitude(alpha, xi, k) == pytest.approx(
        SQUEEZED_REFERENCE[key], abs=1e-13
    )


@pytest.mark.parametrize(
    "alpha,xi",
    [(1.3, 0.0), (0.0, 0.4), (2.0, 0.3), (1.0 + 0.5j, 0.2 - 0.6j), (2.5j, 0.8j)],
)
def test_squeezed_amplitudes_against_dense_oracle(alpha, xi):
    got = squeezed_fock_amplitudes(complex(alpha), complex(xi), 60)
    ref = dense_squeezed_oracle(complex(alpha), complex(xi))[:61]
    assert np.max(np.abs(got - ref)) < 1e-12


def test_squeezed_zero_xi_is_exactly_coherent():
    alpha = 1.7 - 0.4j
    k = np.arange(41)
    coherent = np.exp(-abs(alpha) ** 2 / 2) * alpha ** k / np.exp(
        0.5 * gammaln(k + 1.0)
    )
    got = squeezed_fock_amplitudes(alpha, 0.0, 40)
    assert np.max(np.abs(got - coherent)) < 1e-14
    # and the branch is continuous across the cutoff
    near = squeezed_fock_amplitudes(alpha, 1e-9, 40)
    assert np.max(np.abs(got - near)) < 1e-7


def test_coherent_pair_is_the_two_mode_product():
    r, phi_rel, n_max = 1.7, 0.9, 24
    st = make_coherent_pair(r, phi_rel, n_max)
    a = r / math.sqrt(2.0)
    for n in (0, 1, 5, 24):
        for k in range(n + 1):
            want = (
                math.exp(-r * r / 2.0)
                * a ** n
                / math.sqrt(math.factorial(n - k) * math.factorial(k))
                * np.exp(1j * k * phi_rel)
            )
            assert st.coeffs[n][k] == pytest.approx(want, abs=1e-15)


def test_coherent_pair_deficit_is_the_poisson_tail():
    st = make_coherent_pair(2.0, 0.0, 10)
    # P(X > 10) for X ~ Poisson(4)
    tail = 1.0 - sum(math.exp(-4.0) * 4.0 ** j / math.factorial(j) for j in range(11))
    assert st.declared_norm_deficit == pytest.approx(tail, rel=1e-10)
    assert abs((1.0 - st.retained_mass) - tail) < 1e-12


def test_mean_excitation_matches_family_formulas():
    assert mean_excitation(make_coherent_pair(2.0, 0.3, 60)) == pytest.approx(4.0)
    assert mean_excitation(make_tmsv(0.5, 80)) == pytest.approx(
        2.0 * math.sinh(0.5) ** 2
    )
    assert mean_excitation(make_kerr(1.0, 1.5, 0.7, 60)) == pytest.approx(1.0 + 2.25)


def test_tmsv_structure():
    st = make_tmsv(0.6 * np.exp(0.4j), 21)
    t = math.tanh(0.6)
    mu = math.cosh(0.6)
    for n, block in enumerate(st.coeffs):
        for k in range(n + 1):
            if n % 2 == 0 and k == n // 2:
                want = (1.0 / mu) * (-np.exp(0.4j) * t) ** k
                assert block[k] == pytest.approx(want, abs=1e-14)
            else:
                assert block[k] == 0.0
    # geometric tail: declared deficit covers the dropped pairs exactly
    assert st.declared_norm_deficit == pytest.approx(t ** 22, rel=1e-12)


def test_kerr_phases_and_tau_zero_limit():
    a_h, a_v, tau = 0.9, 1.1, 0.37
    st = make_kerr(a_h, a_v, tau, 18)
    base = make_coherent_pair(math.sqrt(a_h**2 + a_v**2), 0.0, 18)
    for n in range(19):
        k = np.arange(n + 1)
        # moduli follow the two-mode Poisson profile of the amplitudes
        lg = gammaln(np.arange(n + 2, dtype=np.float64) + 1.0)
        mags = np.exp(
            -(a_h**2 + a_v**2) / 2.0
            + (n - k) * math.log(a_h)
            + k * math.log(a_v)
            - 0.5 * (lg[n - k] + lg[k])
        )
        np.testing.assert_allclose(np.abs(st.coeffs[n]), mags, atol=1e-15)
        phases = np.angle(st.coeffs[n][mags > 1e-300])
        want = (tau * (n - k) * k)[mags > 1e-300]
        assert np.max(np.abs(np.exp(1j * phases) - np.exp(1j * want))) < 1e-12
    flat = make_kerr(1.2, 1.2, 0.0, 16)
    ref = make_coherent_pair(1.2 * math.sqrt(2.0), 0.0, 16)
    for b1, b2 in zip(flat.coeffs, ref.coeffs):
        assert np.max(np.abs(b1 - b2)) < 1e-14


def test_squeezed_pair_zero_xi_equals_coherent_pair():
    r, phi_rel = 1.3, 0.8
    a = r / math.sqrt(2.0)
    st = make_squeezed_pair(a, 0.0, a * np.exp(1j * phi_rel), 0.0, 30)
    ref = make_coherent_pair(r, phi_rel, 30)
    for b1, b2 in zip(st.coeffs, ref.coeffs):
        assert np.max(np.abs(b1 - b2)) < 1e-14


def test_state_validation():
    with pytest.raises(ValueError):
        state_from_blocks([[1.0, 0.0]])  # block 0 must have length 1
    with pytest.raises(ValueError):
        state_from_blocks([[1.0], [np.nan, 0.0]])
    with pytest.raises(ValueError):
        PolarizationState(0, ([1.0],), declared_norm_deficit=-0.1)
    with pytest.raises(ValueError):
        # half the mass is missing but the declared bound says none is
        state_from_blocks([[0.5], [0.5, 0.0]], declared_norm_deficit=0.0)
    with pytest.raises(ValueError):
        # more mass present than a normalized state allows
        state_from_blocks([[1.0], [1.0, 0.0]], declared_norm_deficit=0.1)
    # an over-declared bound is fine: the deficit is only an upper limit
    state_from_blocks([[0.5], [0.5, 0.0]], declared_norm_deficit=0.9)


def test_state_is_immutable_and_digested():
    st = make_coherent_pair(1.0, 0.0, 8)
    with pytest.raises(ValueError):
        st.coeffs[3][0] = 1.0
    again = make_coherent_pair(1.0, 0.0, 8)
    assert st.digest == again.digest
    assert st.digest != make_coherent_pair(1.0, 0.1, 8).digest
    assert st.flat.shape == (sum(range(1, 10)),)


def test_spec_json_round_trip():
    spec = StateSpec(
        "SqueezedPair",
        {"alpha_h": 2.0, "xi_h": [0.1, -0.2], "alpha_v": 0.5, "xi_v": 0.0},
        epsilon=1e-8,
    )
    back = StateSpec.from_json(spec.to_json())
    assert back == spec
    explicit = StateSpec.from_json(
        '{"family": "CoherentPair", "params": {"r": 1, "phi_rel": 0},'
        ' "truncation": {"n_max": 7}}'
    )
    assert explicit.n_max == 7 and explicit.epsilon is None


@pytest.mark.parametrize(
    "text",
    [
        "not json",
        "[1, 2]",
        '{"family": "Nope", "params": {}, "truncation": {"n_max": 3}}',
        '{"family": "CoherentPair", "params": {"r": 1, "phi_rel": 0}}',
        '{"family": "CoherentPair", "params": {"r": 1, "phi_rel": 0},'
        ' "truncation": {"n_max": 3, "epsilon": 1e-9}}',
        '{"family": "CoherentPair", "params": {"r": 1, "phi_rel": 0},'
        ' "truncation": {"n_max": 2.5}}',
        '{"family": "CoherentPair", "params": 3, "truncation": {"n_max": 3}}',
    ],
)
def test_spec_rejects_malformed_documents(text):
    with pytest.raises(ValueError):
        StateSpec.from_json(text)


def test_build_state_families_and_params():
    st = build_state(
        StateSpec("CoherentPair", {"r": 1.5, "phi_rel": 0.2}, n_max=12)
    )
    assert st.n_max == 12
    with pytest.raises(ValueError):
        build_state(StateSpec("CoherentPair", {"r": 1.5}, n_max=4))
    with pytest.raises(ValueError):
        build_state(
            StateSpec("CoherentPair", {"r": "big", "phi_rel": 0.0}, n_max=4)
        )
    # complex parameters arrive as [re, im] pairs
    st = build_state(
        StateSpec(
            "SqueezedPair",
            {"alpha_h": [1.0, 0.5], "xi_h": 0.2, "alpha_v": 0.0, "xi_v": 0.0},
            n_max=20,
        )
    )
    assert st.coeffs[1][0] != 0.0


def test_build_state_epsilon_rule_meets_the_tolerance():
    for spec in [
        StateSpec("CoherentPair", {"r": 2.0, "phi_rel": 0.0}, epsilon=1e-9),
        StateSpec("TwoModeSqueezedVacuum", {"xi": 0.7}, epsilon=1e-9),
        StateSpec(
            "SqueezedPair",
            {"alpha_h": 2.0, "xi_h": 0.4, "alpha_v": 1.0, "xi_v": [0.0, 0.3]},
            epsilon=1e-9,
        ),
        StateSpec(
            "KerrEvolved",
            {"alpha_h": 1.4, "alpha_v": 1.4, "tau": 1.0},
            epsilon=1e-9,
        ),
    ]:
        st = build_state(spec)
        assert st.n_max == suggest_truncation(spec, 1e-9)
        assert 1.0 - st.retained_mass <= 1e-9 + 1e-14, spec.family


def test_suggest_truncation_tightens_with_epsilon():
    spec = StateSpec("CoherentPair", {"r": 2.0, "phi_rel": 0.0}, epsilon=1e-4)
    loose = suggest_truncation(spec, 1e-4)
    tight = suggest_truncation(spec, 1e-12)
    assert loose < tight
    assert suggest_truncation(
        StateSpec("TwoModeSqueezedVacuum", {"xi": 0.5}, epsilon=1e-8), 1e-8
    ) % 2 == 0


def test_truncation_cap_is_enforced():
    with pytest.raises(TruncationCapError):
        suggest_truncation(
            StateSpec("TwoModeSqueezedVacuum", {"xi": 5.0}, epsilon=1e-10), 1e-10
        )
    with pytest.raises(TruncationCapError):
        build_state(StateSpec("CoherentPair", {"r": 30.0, "phi_rel": 0.0}, epsilon=1e-10))
    assert HARD_N_MAX_CAP == 512


def test_raw_family_round_trip():
    doc = {
        "family": "Raw",
        "params": {"coeffs": [[[0.6, 0.0]], [[0.0, 0.0], [0.8, 0.0]]]},
        "truncation": {},
    }
    st = build_state(StateSpec.from_json(json.dumps(doc)))
    assert st.n_max == 1
    assert st.coeffs[0][0] == pytest.approx(0.6)
    assert st.coeffs[1][1] == pytest.approx(0.8)
    assert st.retained_mass == pytest.approx(1.0)
    with pytest.raises(ValueError):
        build_state(StateSpec("Raw", {"coeffs": [[1.0, 2.0]]}))
