import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forster.detection import (
    DetectionChain,
    TruncationWarning,
    detection_mix,
    extract_params,
    fine_structure_mix,
    interaction_histogram,
    observed_signals,
    poisson_weight,
)
from forster.montecarlo import Spectrum

GRID = np.linspace(-3, 3, 13)
PAPER = DetectionChain(n_bar=1.05, T=0.65, p32=0.52, i_max=5)


def spec(values, stderr=None):
    values = np.broadcast_to(np.asarray(values, dtype=float), GRID.shape)
    return Spectrum(GRID, values, np.zeros_like(GRID) if stderr is None else stderr)


def ideal_rho(rng):
    return {k: spec(rng.uniform(0, 0.25, GRID.shape)) for k in range(2, 6)}


def brute_histogram(n_bar, T, p32, i_max, N):
    """Enumerate every excited number i and every per-atom fine-structure assignment."""
    lam = n_bar * (1 - T)
    weights = {"none": 0.0, **{k: 0.0 for k in range(2, i_max + 1)}}
    for i in range(N, i_max + 1):
        p_i = math.exp(-lam) * lam ** (i - N) / math.factorial(i - N)
        for assignment in itertools.product((True, False), repeat=i):
            k = sum(assignment)
            p = p_i * p32**k * (1 - p32) ** (i - k)
            weights["none" if k < 2 else k] += p
    return weights


def test_fine_structure_identity_when_all_interact(rng):
    rho = ideal_rho(rng)
    np.testing.assert_allclose(fine_structure_mix(rho, 2, 1.0).values, rho[2].values)


def test_fine_structure_two_atoms():
    rho = {2: spec(0.2)}
    np.testing.assert_allclose(fine_structure_mix(rho, 2, 0.52).values, 0.2704 * 0.2)


def test_fine_structure_no_interacting_atoms(rng):
    for i in range(1, 6):
        np.testing.assert_array_equal(fine_structure_mix(ideal_rho(rng), i, 0.0).values, 0.0)


def test_fine_structure_reports_truncation():
    rho = {2: spec(0.1), 3: spec(0.1)}
    out = fine_structure_mix(rho, 4, 0.5, i_max=3)
    assert out.meta["truncation_mass"] == pytest.approx(math.comb(4, 4) / 16)


def test_fine_structure_grid_mismatch():
    other = Spectrum(GRID + 0.1, np.zeros_like(GRID), np.zeros_like(GRID))
    with pytest.raises(ValueError, match="grid"):
        fine_structure_mix({2: spec(0.1), 3: other}, 3, 0.5)


def test_fine_structure_accepts_sequence(rng):
    rho = ideal_rho(rng)
    a = fine_structure_mix([rho[k] for k in range(2, 6)], 5, 0.52)
    b = fine_structure_mix(rho, 5, 0.52)
    np.testing.assert_array_equal(a.values, b.values)


def test_poisson_weights_at_paper_values():
    lam = PAPER.lam
    assert lam == pytest.approx(0.3675)
    got = [poisson_weight(i - 1, lam) for i in range(1, 5)]
    np.testing.assert_allclose(got, [0.6924, 0.2545, 0.0468, 0.0057], atol=1e-4)
    assert got[0] == pytest.approx(math.exp(-0.3675), rel=1e-14)


@pytest.mark.parametrize("closure", ["saturate", "truncate"])
def test_perfect_detector(rng, closure):
    chain = DetectionChain(n_bar=1.05, T=1.0, rho_bg=0.02, tail_closure=closure)
    rt = {i: spec(rng.uniform(0, 0.2, GRID.shape)) for i in range(2, 6)}
    for N in range(2, 6):
        np.testing.assert_allclose(detection_mix(rt, chain, N).values, 0.02 + rt[N].values)
    np.testing.assert_allclose(detection_mix(rt, chain, 1).values, 0.02)


def test_zero_spectra_give_background():
    rt = {i: spec(0.0) for i in range(2, 6)}
    out = detection_mix(rt, DetectionChain(rho_bg=0.013), 1)
    np.testing.assert_allclose(out.values, 0.013)


def test_tail_metric_small_for_low_n():
    rt = {i: spec(0.1) for i in range(2, 6)}
    for N in (1, 2):
        assert detection_mix(rt, PAPER, N).meta["tail_mass"] < 1e-3


def test_truncation_warns_and_saturation_closes():
    rt = {i: spec(0.1) for i in range(2, 6)}
    truncate = DetectionChain(tail_closure="truncate")
    with pytest.warns(TruncationWarning):
        cut = detection_mix(rt, truncate, 5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        full = detection_mix(rt, PAPER, 5)
    # constant input: the saturating closure recovers the infinite Poisson sum exactly
    np.testing.assert_allclose(full.values, PAPER.rho_bg + 0.1)
    np.testing.assert_allclose(cut.values, PAPER.rho_bg + 0.1 * math.exp(-PAPER.lam))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 10), st.integers(1, 5), st.sampled_from(["saturate", "truncate"]), st.integers(0, 2**32 - 1))
def test_detection_mix_is_linear(c, N, closure, seed):
    rng = np.random.default_rng(seed)
    chain = DetectionChain(tail_closure=closure, rho_bg=0.01)
    rt = {i: spec(rng.uniform(0, 0.2, GRID.shape)) for i in range(2, 6)}
    scaled = {i: spec(c * s.values) for i, s in rt.items()}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        base = detection_mix(rt, chain, N).values - chain.rho_bg
        out = detection_mix(scaled, chain, N).values - chain.rho_bg
    np.testing.assert_allclose(out, c * base, rtol=1e-12, atol=1e-15)


def test_detection_mix_needs_inputs():
    with pytest.raises(ValueError, match="missing"):
        detection_mix({2: spec(0.1)}, PAPER, 1)
    with pytest.raises(ValueError):
        detection_mix({i: spec(0.1) for i in range(2, 6)}, PAPER, 0)


def test_stderr_propagates():
    rt = {i: spec(0.1, np.full(GRID.shape, 0.01)) for i in range(2, 6)}
    out = detection_mix(rt, DetectionChain(T=1.0), 3)
    np.testing.assert_allclose(out.stderr, 0.01)


def test_histogram_paper_chain_two_atom_dominance():
    h = interaction_histogram(PAPER, 1)
    assert h.weights[2] == pytest.approx(0.0688 + 0.0182 + 0.0023, abs=2e-4)
    assert h.weights[3] == pytest.approx(0.0066 + 0.0016, abs=2e-4)
    assert h.resonant_share(2) >= 0.85


def test_histogram_perfect_detector():
    h = interaction_histogram(DetectionChain(T=1.0, p32=1.0), 3)
    assert h.weights[3] == 1.0
    assert all(w == 0 for k, w in h.weights.items() if k != 3)


def test_histogram_single_binomial():
    h = interaction_histogram(DetectionChain(n_bar=0.0, p32=0.5), 2)
    assert h.weights[2] == pytest.approx(0.25)
    assert h.weights["none"] == pytest.approx(0.75)


@pytest.mark.parametrize("N", range(1, 6))
@pytest.mark.parametrize("params", [(1.05, 0.65, 0.52, 5), (2.0, 0.3, 0.7, 7), (0.4, 0.9, 0.2, 4)])
def test_histogram_matches_brute_force_and_normalises(N, params):
    n_bar, T, p32, i_max = params
    if N > i_max:
        return
    chain = DetectionChain(n_bar=n_bar, T=T, p32=p32, i_max=i_max)
    h = interaction_histogram(chain, N)
    ref = brute_histogram(n_bar, T, p32, i_max, N)
    for key in ref:
        assert abs(h.weights[key] - ref[key]) < 1e-12
    assert all(w >= 0 for w in h.weights.values())
    assert abs(sum(h.weights.values()) + h.tail_mass - 1) < 1e-9


def test_dilution_increases_with_p32(rng):
    rho = {k: spec(v) for k, v in zip(range(2, 6), (0.16, 0.20, 0.23, 0.245))}
    for i in range(2, 6):
        prev = -1.0
        for p in np.linspace(0, 1, 21):
            val = fine_structure_mix(rho, i, p).values[6]
            assert val >= prev
            prev = val


def test_observed_signals_covers_all_n(rng):
    out = observed_signals(ideal_rho(rng), PAPER)
    assert sorted(out) == [1, 2, 3, 4, 5]


def test_extract_params_paper_values():
    n_bar, T = extract_params(0.27, 0.65)
    assert n_bar == pytest.approx(1.0199, abs=1e-4)
    assert T == pytest.approx(0.637, abs=1e-3)
    assert abs(n_bar - 1.05) <= 0.04 and abs(T - 0.65) <= 0.05


def test_extract_params_limits():
    n_bar, T = extract_params(0.0, 0.65)
    assert n_bar == 0.65 and T == 1.0
    n_bar, T = extract_params(1e-12, 0.65)
    assert T == pytest.approx(1.0)
    n_bar, T = extract_params(0.5, 0.5)
    assert n_bar == pytest.approx(1.5) and T == pytest.approx(1 / 3)


@pytest.mark.parametrize("alpha,nt", [(1.0, 0.65), (1.5, 0.65), (-0.1, 0.65), (0.3, 0.0)])
def test_extract_params_rejects(alpha, nt):
    with pytest.raises(ValueError):
        extract_params(alpha, nt)


@pytest.mark.parametrize(
    "kwargs", [{"T": 0.0}, {"T": 1.2}, {"p32": 1.5}, {"i_max": 1}, {"n_bar": -1.0}, {"tail_closure": "x"}]
)
def test_chain_validation(kwargs):
    with pytest.raises(ValueError):
        DetectionChain(**kwargs)
