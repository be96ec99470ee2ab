import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quickcpd.datagen import GeneratorSpec, generate, generate_multi_change, generate_single_change, sample_change_points


def test_default_sizes_and_fractions():
    out = generate(GeneratorSpec(length=16))
    tr, te = out["train"], out["test"]
    assert (len(tr), len(te)) == (700, 300)
    assert sum(l.is_change for l in tr.labels) == 342
    assert sum(l.is_change for l in te.labels) == 158
    assert tr.dim == 1 and tr.sequences[0].length == 16


def test_zero_fraction_gives_no_changes():
    ds = generate_single_change(GeneratorSpec(length=8), "x", 20, 0.0, np.random.default_rng(0))
    assert not any(l.is_change for l in ds.labels)


def test_theta_range_and_dim():
    ds = generate(GeneratorSpec(dim=3, length=10, n_train=200, n_test=1))["train"]
    thetas = [l.theta for l in ds.labels if l.is_change]
    assert min(thetas) >= 1 and max(thetas) <= 9
    assert ds.dim == 3


def test_seed_determinism_and_independent_substreams():
    a = generate(GeneratorSpec(length=8, n_train=20, n_test=10, seed=3))
    b = generate(GeneratorSpec(length=8, n_train=20, n_test=10, seed=3))
    c = generate(GeneratorSpec(length=8, n_train=50, n_test=10, seed=3))
    assert np.array_equal(a["train"].stacked(), b["train"].stacked())
    # resizing train leaves test untouched
    assert np.array_equal(a["test"].stacked(), c["test"].stacked())
    assert a["test"].labels == c["test"].labels


def test_mean_shift_is_visible_around_change():
    spec = GeneratorSpec(length=64, n_train=400, n_test=1, change_fraction_train=1.0, seed=1)
    ds = generate(spec)["train"]
    lo = spec.post_mean_range[0]
    checked = 0
    failures = 0
    for seq in ds:
        th = seq.label.theta
        if th < 10 or th > 54:
            continue
        diff = seq.observations[th : th + 10].mean() - seq.observations[th - 10 : th].mean()
        checked += 1
        failures += diff < (lo - spec.pre_mean) / 2
    # per-sequence failure needs a 1.6 sigma miss of a mean of 20 unit normals: p < 1e-6
    assert checked > 100 and failures == 0


def test_multi_change_zero_changes_is_stationary():
    spec = GeneratorSpec(length=30, multi=True, n_changes_range=(0, 0))
    ds = generate_multi_change(spec, "x", 5, np.random.default_rng(0))
    for seq in ds:
        assert seq.multi_label.change_points == ()
        assert not seq.label.is_change


def test_multi_change_max_count_fits():
    cps = sample_change_points(np.random.default_rng(0), 128, 9)
    bounds = (0,) + cps + (128,)
    assert len(cps) == 9
    assert all(b - a >= 2 for a, b in zip(bounds, bounds[1:]))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), length=st.integers(2, 40), data=st.data())
def test_change_points_sorted_with_gap(seed, length, data):
    k = data.draw(st.integers(0, length // 2 - 1))
    cps = sample_change_points(np.random.default_rng(seed), length, k)
    bounds = (0,) + cps + (length,)
    assert len(cps) == k
    assert all(b - a >= 2 for a, b in zip(bounds, bounds[1:]))


def test_multi_change_labels_and_alternating_means():
    spec = GeneratorSpec(length=60, multi=True, n_changes_range=(2, 4), variance=1e-6,
                         n_train=30, n_test=5)
    ds = generate(spec)["train"]
    for seq in ds:
        cps = seq.multi_label.change_points
        assert seq.label.theta == cps[0]
        bounds = (0,) + cps + (60,)
        means = [seq.observations[a:b].mean() for a, b in zip(bounds, bounds[1:])]
        assert all(abs(means[j] - 1.0) < 1e-2 for j in range(0, len(means), 2))
        assert all(means[j] > 1.5 for j in range(1, len(means), 2))


@pytest.mark.parametrize("bad,field", [
    (dict(post_mean_range=(1.0, 5.0)), "post_mean_range"),
    (dict(post_mean_range=(5.0, 3.0)), "post_mean_range"),
    (dict(variance=0.0), "variance"),
    (dict(change_fraction_train=1.5), "change_fraction_train"),
    (dict(multi=True, length=10, n_changes_range=(0, 9)), "n_changes_range"),
])
def test_validation_names_the_field(bad, field):
    with pytest.raises(ValueError, match=field):
        GeneratorSpec(**bad)
