#!/usr/bin/env python3
"""
Tests for the planted dataset generator
"""

import numpy as np
import pytest

from src.errors import InputError, SchemaError
from src.ingest import build_point_sequences
from src.preprocess import to_bis
from src.synth import (
    DEFAULT_MODES,
    PLANTED_SUBJECT,
    ModeSpec,
    default_modes,
    false_negative_rate,
    generate,
    habit_grid,
    random_modes,
    read_labels,
    run_loss_rate,
    to_sensor_records,
    write_labels,
)


def test_mode_validation():
    with pytest.raises(ValueError):
        ModeSpec(10, 10)
    with pytest.raises(ValueError):
        ModeSpec(10, 20, sigma_units=-1)
    with pytest.raises(ValueError):
        ModeSpec(10, 20, weight=0)


def test_mode_from_dict_uses_fallback_sigma():
    mode = ModeSpec.from_dict({"mean_start": 4, "mean_end": 9}, sigma_units=2.0)
    assert mode == ModeSpec(4.0, 9.0, 2.0, 1.0)
    assert ModeSpec.from_dict(mode.to_dict()) == mode


def test_default_modes_rescale():
    assert default_modes() == list(DEFAULT_MODES)
    half = default_modes(96)
    assert (half[0].mean_start, half[0].mean_end) == (32, 68)


def test_generation_is_deterministic():
    a = generate(DEFAULT_MODES, 50, seed=11)
    b = generate(DEFAULT_MODES, 50, seed=11)
    c = generate(DEFAULT_MODES, 50, seed=12)
    assert np.array_equal(a.bits(), b.bits())
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.bits(), c.bits())


def test_prefix_is_stable_across_sizes():
    small = generate(DEFAULT_MODES, 10, seed=5)
    large = generate(DEFAULT_MODES, 40, seed=5)
    assert np.array_equal(small.bits(), large.bits()[:10])


def test_sequences_carry_subject_day_and_lambda():
    data = generate(DEFAULT_MODES, 3, lam=450, seed=0)
    assert [s.subject_id for s in data.sequences] == [PLANTED_SUBJECT] * 3
    days = [s.day for s in data.sequences]
    assert (days[1] - days[0]).days == 1
    assert all(len(s) == 192 and s.lam == 450 for s in data.sequences)
    assert data.n_modes == 4


def test_noiseless_modes_are_exact():
    modes = [ModeSpec(10, 20, sigma_units=0)]
    data = generate(modes, 5, false_neg_p=0.0, length=32)
    expected = np.zeros(32, dtype=np.uint8)
    expected[10:20] = 1
    assert all(np.array_equal(row, expected) for row in data.bits())


def test_false_negative_rate_matches_probability():
    data = generate(DEFAULT_MODES, 400, false_neg_p=0.2, seed=1)
    assert false_negative_rate(data) == pytest.approx(0.2, abs=0.02)
    assert run_loss_rate(data) <= 0.005


def test_bits_never_exceed_the_planted_mask():
    data = generate(DEFAULT_MODES, 100, seed=2)
    assert np.all(data.bits() <= data.clean)


def test_weights_skew_label_frequencies():
    modes = [ModeSpec(10, 20, weight=9.0), ModeSpec(40, 50, weight=1.0)]
    data = generate(modes, 500, length=64, seed=4)
    assert np.mean(data.labels == 0) == pytest.approx(0.9, abs=0.05)


def test_generate_argument_checks():
    with pytest.raises(ValueError):
        generate(DEFAULT_MODES, 0)
    with pytest.raises(ValueError):
        generate([], 5)
    with pytest.raises(ValueError):
        generate(DEFAULT_MODES, 5, false_neg_p=1.0)


def test_labels_round_trip(tmp_path):
    path = tmp_path / "labels.csv"
    write_labels([2, 0, 1], path)
    assert path.read_text().splitlines()[0] == "index,mode_id"
    assert read_labels(path).tolist() == [2, 0, 1]


def test_labels_schema(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("row,label\n0,1\n")
    with pytest.raises(SchemaError):
        read_labels(path)
    path.write_text("index,mode_id\n1,0\n")
    with pytest.raises(SchemaError):
        read_labels(path)
    with pytest.raises(InputError):
        read_labels(tmp_path / "missing.csv")


def test_raw_emission_round_trips_through_preprocessing():
    modes = [ModeSpec(10, 30, sigma_units=0)]
    data = generate(modes, 4, false_neg_p=0.0, lam=450, seed=0)
    sequences = build_point_sequences(to_sensor_records(data.sequences))
    recovered = [to_bis(ps, 900, 450) for ps in sequences.values()]
    assert len(recovered) == 4
    for original, bis in zip(data.sequences, recovered):
        assert bis.day == original.day
        assert np.array_equal(bis.bits, original.bits)


def test_habit_grid_keeps_habits_apart():
    grid = habit_grid()
    assert len(grid) == 66
    for start, end in grid:
        assert start % 12 == 0 and end % 12 == 0
        assert 12 <= start and end <= 180 and end - start >= 48


def test_random_modes_are_distinct_and_seeded():
    modes = random_modes(50, seed=0)
    assert len({(m.mean_start, m.mean_end) for m in modes}) == 50
    assert all(m.weight == 1.0 and m.sigma_units == 4 / 3 for m in modes)
    assert modes == random_modes(50, seed=0)
    with pytest.raises(ValueError):
        random_modes(67)
    with pytest.raises(ValueError):
        random_modes(0)
