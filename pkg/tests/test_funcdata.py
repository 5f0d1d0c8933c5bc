import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmaxanova.funcdata import (
    FunctionalDataError,
    FunctionalSample,
    Grid,
    load_sample,
    read_sample_text,
    sample_stats,
    sample_to_text,
    save_sample,
)

from conftest import random_sample


def test_load_csv_basic(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("group,0.25,0.5,0.75\na,1,2,3\na,2,3,4\nb,0,0,1\nb,1,1,1\n")
    s = load_sample(p)
    assert s.k == 2
    assert s.M == 3
    assert s.labels == ("a", "b")
    np.testing.assert_array_equal(s.grid.points, [0.25, 0.5, 0.75])


def test_group_order_is_first_appearance():
    s = read_sample_text("group,0,1\nz,1,2\na,1,2\nz,3,4\na,0,0\n")
    assert s.labels == ("z", "a")
    np.testing.assert_array_equal(s.curves[0], [[1, 2], [3, 4]])


@pytest.mark.parametrize(
    "text, msg",
    [
        ("group,0,1\na,1,2\na,3,4\n", "need at least 2 groups"),
        ("group,0,1\na,1,2\na,3,4\nb,1,2\n", "at least 2 curves"),
        ("group,0,1\na,1,2\na,3\nb,1,2\nb,2,2\n", "ragged"),
        ("group,0,1\na,1,x\na,3,4\nb,1,2\nb,2,2\n", "non-numeric"),
        ("group,1,0\na,1,2\na,3,4\nb,1,2\nb,2,2\n", "increasing"),
        ("group,0,0\na,1,2\na,3,4\nb,1,2\nb,2,2\n", "increasing"),
        ("grp,0,1\na,1,2\na,3,4\nb,1,2\nb,2,2\n", "group"),
    ],
)
def test_load_errors(text, msg):
    with pytest.raises(FunctionalDataError, match=msg):
        read_sample_text(text)


def test_nonfinite_rejected():
    with pytest.raises(FunctionalDataError, match="non-finite"):
        FunctionalSample(Grid([0, 1]), ("a", "b"), ([[1, np.nan], [1, 2]], [[1, 2], [3, 4]]))


def test_grid_properties():
    g = Grid([0.0, 0.1, 0.5, 1.0])
    assert g.a == 0.0 and g.b == 1.0 and g.M == 4
    assert g.mesh == pytest.approx(0.5)
    with pytest.raises(FunctionalDataError):
        Grid([1.0])


def test_sample_is_immutable(small_sample):
    with pytest.raises(ValueError):
        small_sample.curves[0][0, 0] = 1.0


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_round_trip_random(tmp_path, fmt, rng):
    for trial in range(5):
        s = random_sample(rng, sizes=tuple(rng.integers(2, 6, size=rng.integers(2, 5))),
                          M=int(rng.integers(2, 20)), nonuniform=bool(trial % 2))
        p = tmp_path / f"s{trial}.{fmt}"
        save_sample(s, p)
        back = load_sample(p)
        assert back.labels == s.labels
        assert back.grid == s.grid
        for a, b in zip(back.curves, s.curves):
            np.testing.assert_array_equal(a, b)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e300, 1e300, allow_nan=False, allow_infinity=False), min_size=8, max_size=8))
def test_csv_round_trip_is_bit_exact(values):
    s = FunctionalSample(Grid([0.0, 1.0]), ("a", "b"),
                         (np.reshape(values[:4], (2, 2)), np.reshape(values[4:], (2, 2))))
    back = read_sample_text(sample_to_text(s, "csv"), "csv")
    for a, b in zip(back.curves, s.curves):
        assert a.tobytes() == b.tobytes()


def test_json_layout(small_sample):
    doc = json.loads(sample_to_text(small_sample, "json"))
    assert set(doc) == {"grid", "groups"}
    assert [g["label"] for g in doc["groups"]] == list(small_sample.labels)


def test_sample_stats_hand_example():
    s = FunctionalSample(Grid([0, 1]), ("1", "2"), ([[1, 1], [3, 3]], [[2, 2], [6, 6]]))
    st_ = sample_stats(s)
    np.testing.assert_array_equal(st_.group_means, [[2, 2], [4, 4]])
    np.testing.assert_array_equal(st_.grand_mean, [3, 3])


def test_sample_stats_identical_curves():
    c = np.array([0.3, -1.0, 2.5])
    s = FunctionalSample(Grid([0, 1, 2]), ("a", "b"), (np.tile(c, (3, 1)), np.tile(c, (2, 1))))
    st_ = sample_stats(s)
    np.testing.assert_allclose(st_.group_means, np.tile(c, (2, 1)))
    np.testing.assert_allclose(st_.grand_mean, c)


def test_sample_stats_shift(small_sample, rng):
    c = rng.standard_normal(small_sample.M)
    base = sample_stats(small_sample)
    moved = sample_stats(small_sample.map_curves(lambda y: y + c))
    np.testing.assert_allclose(moved.group_means, base.group_means + c, atol=1e-12)
    np.testing.assert_allclose(moved.grand_mean, base.grand_mean + c, atol=1e-12)


def test_weighted_mean_identity(rng):
    for _ in range(20):
        s = random_sample(rng, sizes=tuple(rng.integers(2, 9, size=3)), M=7)
        st_ = sample_stats(s)
        w = np.array(s.sizes) / s.n
        np.testing.assert_allclose(w @ st_.group_means, st_.grand_mean, rtol=1e-12, atol=1e-12)
