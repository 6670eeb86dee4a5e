import numpy as np
import pytest

from flocwatch import simulator as sim
from flocwatch.datamodel import DoClass
from flocwatch.dataset import split
from flocwatch.protocol import ChecksumMismatch, parse_frame


def frames_of(scenario):
    (lines,) = sim.generate(scenario).values()
    return [parse_frame(x) for x in lines]


def centroid_accuracy(ds, seed=0):
    """Fit class means on a train split, score nearest-mean on the rest."""
    train, test = split(ds, 0.8, seed)
    X, y = train.features, train.y
    mu, sd = X.mean(axis=0), X.std(axis=0)
    Z = (X - mu) / sd
    centroids = np.stack([Z[y == c].mean(axis=0) for c in range(4)])
    Zt = (test.features - mu) / sd
    pred = np.argmin(((Zt[:, None, :] - centroids[None]) ** 2).sum(axis=2), axis=1)
    return float((pred == test.y).mean())


def test_normal_stays_in_bands():
    frames = frames_of(sim.Scenario("normal", duration=1000, seed=3))
    assert len(frames) == 1000
    temps = [f.sample.temp for f in frames]
    phs = [f.sample.ph for f in frames]
    assert 27 <= min(temps) and max(temps) <= 31
    assert 6.6 <= min(phs) and max(phs) <= 7.4
    assert len(set(temps)) > 5  # it actually moves


def test_timestamps_and_seq():
    frames = frames_of(sim.Scenario("normal", rate=4, duration=3, start_time=100))
    assert [f.seq for f in frames] == list(range(1, 13))
    assert [f.timestamp for f in frames] == [100] * 4 + [101] * 4 + [102] * 4


def test_full_corruption_always_fails_checksum():
    lines = sim.generate(sim.Scenario("normal", duration=500, corrupt_prob=1.0, seed=9))["SIM-00"]
    for line in lines:
        with pytest.raises(ChecksumMismatch):
            parse_frame(line)


def test_corruption_does_not_shift_readings():
    clean = sim.generate(sim.Scenario("normal", duration=50, seed=4))["SIM-00"]
    dirty = sim.generate(sim.Scenario("normal", duration=50, seed=4, corrupt_prob=0.3))["SIM-00"]
    changed = [a != b for a, b in zip(clean, dirty)]
    assert 0 < sum(changed) < 50
    assert all(len(a) == len(b) for a, b in zip(clean, dirty))


def test_same_seed_same_stream():
    sc = sim.Scenario("ph_drift", devices=3, duration=200, corrupt_prob=0.1, seed=5)
    assert sim.generate(sc) == sim.generate(sc)
    other = sim.generate(sim.Scenario("ph_drift", devices=3, duration=200, corrupt_prob=0.1, seed=6))
    assert other != sim.generate(sc)


def test_devices_independent():
    out = sim.generate(sim.Scenario("normal", devices=3, duration=20, seed=1))
    assert sorted(out) == ["SIM-00", "SIM-01", "SIM-02"]
    assert out["SIM-00"] != out["SIM-01"]


def test_ph_drift_ramp():
    frames = frames_of(sim.Scenario("ph_drift", duration=100, seed=2))
    for i, f in enumerate(frames):
        assert f.sample.ph == round(7.0 + 0.02 * i, 1)


def test_do_crash_monotone_and_reaches_shallow():
    frames = frames_of(sim.Scenario("do_crash", duration=120))
    feats = np.array([f.sample.features() for f in frames])
    d = np.diff(feats, axis=0)
    assert np.all(d[:, 0] >= 0) and np.all(d[:, 1] <= 0) and np.all(d[:, 2] >= 0) and np.all(d[:, 3] >= 0)
    assert sim.in_shallow_region(frames[-1].sample)
    assert not sim.in_shallow_region(frames[0].sample)


@pytest.mark.parametrize("n", [8, 10, 2000])
def test_gen_labeled_balanced(n):
    ds = sim.gen_labeled(n, seed=1)
    counts = [ds.labels.count(c) for c in DoClass]
    assert max(counts) - min(counts) <= 1 and sum(counts) == n


def test_gen_labeled_do_in_bins():
    ds = sim.gen_labeled(400, seed=2)
    for s, c in zip(ds.samples, ds.labels):
        lo, hi = sim.CLUSTER_DO_RANGES[c]
        assert lo <= s.do_mg_l < hi


def test_gen_labeled_deterministic():
    assert sim.gen_labeled(100, 3).samples == sim.gen_labeled(100, 3).samples
    assert sim.gen_labeled(100, 3).samples != sim.gen_labeled(100, 4).samples


def test_gen_labeled_separable():
    assert centroid_accuracy(sim.gen_labeled(2000, seed=0)) >= 0.99


def test_centroid_class_of_centers():
    for c in DoClass:
        assert sim.centroid_class(sim.CLUSTER_CENTERS[c]) == c


def test_bad_scenarios():
    with pytest.raises(ValueError):
        sim.Scenario("flood")
    with pytest.raises(ValueError):
        sim.Scenario(rate=0)
    with pytest.raises(ValueError):
        sim.Scenario(corrupt_prob=1.5)
    with pytest.raises(ValueError):
        sim.parse_target("localhost")
