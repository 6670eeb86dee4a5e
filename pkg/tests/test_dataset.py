import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flocwatch.datamodel import DoClass, InvariantViolation, WaterSample
from flocwatch.dataset import (
    ConstantFeature,
    DegenerateSplit,
    EmptyFile,
    LabeledDataset,
    MissingColumn,
    NonFinite,
    RowParse,
    apply_norm,
    bin_do,
    fisher_yates,
    fit_norm,
    load_csv,
    split,
)

from .conftest import TABLE3


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_table3_rows(table3):
    assert len(table3) == 24
    first = table3.samples[0]
    assert (first.temp, first.do_mg_l, first.ph, first.tds, first.floc) == (29.5, 6.3, 6.9, 1.7, 10.0)


def test_table3_class_mix(table3):
    # DO spans 5.1-7.3 mg/L, so only the two upper classes occur
    assert set(table3.labels) == {DoClass.AVERAGE, DoClass.HIGH}
    assert table3.labels.count(DoClass.HIGH) == 6


def test_headerless(tmp_path):
    ds = load_csv(write(tmp_path, "29.5,6.3,6.9,1.7,10\n"), header=False)
    assert ds.samples[0] == WaterSample(29.5, 6.9, 1.7, 10.0, 6.3)


def test_header_any_order(tmp_path):
    ds = load_csv(write(tmp_path, "do,temp,ph,tds,floc\n6.3,29.5,6.9,1.7,10\n"))
    assert ds.samples[0] == WaterSample(29.5, 6.9, 1.7, 10.0, 6.3)


def test_row_parse(tmp_path):
    with pytest.raises(RowParse) as exc:
        load_csv(write(tmp_path, "temp,do,ph,tds,floc\n29.5,abc,6.9,1.7,10\n"))
    assert exc.value.lineno == 2 and exc.value.field == "do"


def test_missing_column(tmp_path):
    with pytest.raises(MissingColumn):
        load_csv(write(tmp_path, "temp,ph,tds,floc\n29.5,6.9,1.7,10\n"))


def test_empty_file(tmp_path):
    with pytest.raises(EmptyFile):
        load_csv(write(tmp_path, ""))
    with pytest.raises(EmptyFile):
        load_csv(write(tmp_path, "temp,do,ph,tds,floc\n"))


def test_negative_do(tmp_path):
    with pytest.raises(InvariantViolation):
        load_csv(write(tmp_path, "temp,do,ph,tds,floc\n29.5,-1,6.9,1.7,10\n"))


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_csv("nope/missing.csv")


@pytest.mark.parametrize("do, cls", [(6.3, 2), (7.3, 3), (3.0, 1), (0.0, 0), (2.999, 0), (5.0, 2), (7.0, 3)])
def test_bin_do(do, cls):
    assert bin_do(do) == cls


def test_bin_do_custom_edges():
    assert bin_do(4.0, (1.0, 2.0, 3.0)) == DoClass.HIGH


def test_bin_do_nonfinite():
    with pytest.raises(NonFinite):
        bin_do(float("nan"))


def ds_from(rows):
    return LabeledDataset.from_samples([WaterSample(t, p, d, f, do) for t, p, d, f, do in rows])


def test_fit_norm_two_points():
    ds = ds_from([(1, 7, 1, 10, 6), (3, 8, 2, 20, 6)])
    stats = fit_norm(ds)
    assert stats.mean[0] == 2 and stats.std[0] == 1
    assert apply_norm(stats, WaterSample(3, 7, 1, 10))[0] == 1.0


def test_apply_norm_at_mean(table3):
    stats = fit_norm(table3)
    z = apply_norm(stats, stats.mean)
    assert np.array_equal(z, np.zeros(4))


def test_constant_feature():
    with pytest.raises(ConstantFeature) as exc:
        fit_norm(ds_from([(1, 7, 1, 10, 6), (3, 8, 2, 10, 6)]))
    assert exc.value.feature == "floc"


def test_norm_moments(table3):
    stats = fit_norm(table3)
    Z = apply_norm(stats, table3.features)
    assert np.allclose(Z.mean(axis=0), 0, atol=1e-9)
    assert np.allclose(Z.std(axis=0), 1, atol=1e-9)


def test_split_sizes(table3):
    train, test = split(table3, 0.8, seed=7)
    assert (len(train), len(test)) == (19, 5)


def test_split_deterministic(table3):
    a = split(table3, 0.8, seed=3)
    b = split(table3, 0.8, seed=3)
    assert a[0].samples == b[0].samples and a[1].samples == b[1].samples
    assert fisher_yates(24, 3) == fisher_yates(24, 3)
    assert fisher_yates(24, 3) != fisher_yates(24, 4)


def test_split_degenerate():
    one = ds_from([(1, 7, 1, 10, 6)])
    with pytest.raises(DegenerateSplit):
        split(one, 0.8, seed=0)
    two = ds_from([(1, 7, 1, 10, 6), (2, 7, 1, 10, 6)])
    with pytest.raises(DegenerateSplit):
        split(two, 0.4, seed=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.floats(0.05, 0.95), st.integers(0, 2**32))
def test_split_partitions(n, fraction, seed):
    ds = LabeledDataset.from_samples([WaterSample(20 + i * 0.1, 7, 1, 10, (i % 9) * 1.0) for i in range(n)])
    try:
        train, test = split(ds, fraction, seed)
    except DegenerateSplit:
        return
    assert len(train) == int(n * fraction + 1e-9)
    together = sorted(train.samples + test.samples, key=lambda s: s.temp)
    assert together == list(ds.samples)
    assert not set(train.samples) & set(test.samples)
    for part in (train, test):
        assert all(bin_do(s.do_mg_l) == c for s, c in zip(part.samples, part.labels))


def test_permutation_is_uniformish():
    counts = np.zeros((4, 4))
    for seed in range(4000):
        perm = fisher_yates(4, seed)
        counts[range(4), perm] += 1
    assert np.all(np.abs(counts / 4000 - 0.25) < 0.04)
