import math

import numpy as np
import pytest

from data_storage import read_json
from exceptions import NonConvergentTailError, SchemaError, ValidationError
from profile_decomp import (RESULT_SCHEMA, SEQUENCE_SCHEMA, LatticeSequence, _tail_profile, decompose,
                            lattice_norm, sup_norm, synthesize, translate, translate_sequence)

X1 = {(0, 0): [1.0], (1, 0): [0.5]}
X2 = {(0, 0): [0.8], (0, 1): [0.4]}
X3 = {(0, 0): [0.6], (1, 0): [0.3]}


def _load(fixtures_dir, name):
    return LatticeSequence.from_dict(read_json(fixtures_dir / name, SEQUENCE_SCHEMA))


def _same_entry(a, b, tol=1e-12):
    return set(a) == set(b) and all(np.allclose(a[j], b[j], atol=tol) for j in a)


def test_translation_moves_every_site():
    moved = translate({(0, 0): np.array([1.0])}, (2, -3))
    assert list(moved) == [(2, -3)]
    assert lattice_norm({(0, 0): np.array([3.0]), (1, 1): np.array([4.0])}) == pytest.approx(5.0)
    assert sup_norm({}) == 0.0


def test_two_profiles(fixtures_dir):
    seq = _load(fixtures_dir, "two_profile_sequence.json")
    result = decompose(seq, eps_cc=0.05)
    assert result.m == 2
    assert result.converged
    assert _same_entry(result.profiles[0], {j: np.array(v) for j, v in X1.items()})
    assert _same_entry(result.profiles[1], {j: np.array(v) for j, v in X2.items()})
    assert result.tracks[0] == [(n, 0) for n in range(1, 11)]
    assert result.tracks[1] == [(-n, n) for n in range(1, 11)]
    assert result.norm_gap < 1e-12
    assert result.min_track_distance == pytest.approx(math.hypot(20, 10))
    assert result.residual_sup <= 0.05


def test_tail_profile_is_the_mean_of_a_settled_tail():
    tail = [{(0, 0): np.array([1.0]), (1, 0): np.array([0.5])} for _ in range(5)]
    profile = _tail_profile(tail, 1)
    assert set(profile) == {(0, 0), (1, 0)}
    for j, v in profile.items():
        assert np.array_equal(v, np.mean([e[j] for e in tail], axis=0))


def test_tail_profile_drops_passing_mass():
    tail = [{(0, 0): np.array([1.0])} for _ in range(5)]
    tail[2] = {(0, 0): np.array([1.0]), (3, 0): np.array([0.9])}
    profile = _tail_profile(tail, 1)
    assert list(profile) == [(0, 0)]
    assert profile[(0, 0)][0] == 1.0


def test_three_profiles_in_decreasing_size(fixtures_dir):
    seq = _load(fixtures_dir, "three_profile_sequence.json")
    result = decompose(seq, eps_cc=0.05)
    assert result.m == 3
    norms = [lattice_norm(p) for p in result.profiles]
    assert norms == sorted(norms, reverse=True)
    assert result.tracks[2][-1] == (0, -12)
    assert result.norm_gap < 1e-12


def test_single_profile(fixtures_dir):
    result = decompose(_load(fixtures_dir, "single_profile_sequence.json"), eps_cc=0.05)
    assert result.m == 1
    assert result.min_track_distance == math.inf
    assert result.summary()["min_track_distance"] is None


def test_decomposition_is_translation_covariant(fixtures_dir):
    seq = _load(fixtures_dir, "two_profile_sequence.json")
    base = decompose(seq, eps_cc=0.05)
    shifted = decompose(translate_sequence(seq, (3, -2)), eps_cc=0.05)
    assert shifted.m == base.m
    for a, b in zip(base.profiles, shifted.profiles):
        assert _same_entry(a, b)
    for a, b in zip(base.tracks, shifted.tracks):
        assert b == [(w0 + 3, w1 - 2) for w0, w1 in a]


def test_synthesized_noisy_sequence(fixtures_dir):
    seq = synthesize([X1, X2], [(1, 0), (-1, 1)], noise_amp=1e-4, seed=7, N=16)
    assert seq.N == 16 and seq.d == 1
    result = decompose(seq, eps_cc=0.05)
    assert result.m == 2
    assert result.profiles[0][(0, 0)][0] == pytest.approx(1.0, abs=1e-3)
    assert result.residual_sup <= 0.05


def test_synthesize_matches_fixture(fixtures_dir):
    seq = synthesize([X1, X2], [(1, 0), (-1, 1)], N=10)
    stored = _load(fixtures_dir, "two_profile_sequence.json")
    for a, b in zip(seq.entries, stored.entries):
        assert _same_entry(a, b)


def test_vector_valued_profiles():
    profile = {(0, 0): [1.0, -0.5], (0, 1): [0.2, 0.1]}
    seq = synthesize([profile], [(2, 1)], N=8)
    result = decompose(seq, eps_cc=0.01)
    assert result.m == 1
    assert np.allclose(result.profiles[0][(0, 0)], [1.0, -0.5])


def test_non_cauchy_tail(fixtures_dir):
    seq = _load(fixtures_dir, "oscillating_sequence.json")
    with pytest.raises(NonConvergentTailError) as info:
        decompose(seq, eps_cc=0.05)
    assert info.value.result is not None
    assert not info.value.result.converged
    partial = decompose(seq, eps_cc=0.05, strict=False)
    assert partial.m == 0 and partial.notes


def test_input_validation(fixtures_dir):
    with pytest.raises(ValidationError):
        decompose(_load(fixtures_dir, "empty_sequence.json"), eps_cc=0.05)
    with pytest.raises(ValidationError):
        decompose(_load(fixtures_dir, "single_profile_sequence.json"), eps_cc=0.0)
    with pytest.raises(ValidationError):
        LatticeSequence([{(0, 0): [1.0, 2.0]}], d=1)
    with pytest.raises(ValidationError):
        LatticeSequence([{(0, 0): [float("nan")]}], d=1)
    with pytest.raises(SchemaError):
        LatticeSequence.from_dict({"schema": "decomposition/1.0", "d": 1, "entries": []})


def test_result_document(fixtures_dir):
    result = decompose(_load(fixtures_dir, "two_profile_sequence.json"), eps_cc=0.05)
    doc = result.to_dict()
    assert doc["schema"] == RESULT_SCHEMA
    assert doc["summary"]["m"] == 2
    assert doc["summary"]["tail_start"] == 6
    frame = result.tracks_frame()
    assert list(frame.columns) == ["profile", "n", "w0", "w1"]
    assert len(frame) == 20
    assert frame.iloc[0].tolist() == [1, 1, 1, 0]
