import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tstbench.core import make_stream
from tstbench.dataio import (
    bootstrap_draw,
    destandardize,
    load_dataset,
    make_dataset,
    save_dataset,
    split_half,
    standardize,
)
from tstbench.errors import ConstantFeature, NarrowFeatureWarning, NonFiniteValue, ParseError, TooFewPoints

finite = st.floats(-1e12, 1e12, allow_nan=False, allow_infinity=False)


def test_csv_roundtrip_3x2(tmp_path):
    ds = make_dataset(np.array([[0.1, -2.5], [1 / 3, 1e-17], [7.0, np.pi]]), ["a", "b"])
    save_dataset(ds, tmp_path / "d.csv")
    back = load_dataset(tmp_path / "d.csv")
    assert np.array_equal(back.matrix, ds.matrix)
    assert back.feature_names == ("a", "b")


@settings(max_examples=30)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 4)), elements=finite))
def test_roundtrips_exact(tmp_path_factory, matrix):
    tmp = tmp_path_factory.mktemp("rt")
    ds = make_dataset(matrix)
    for name in ("d.csv", "d.raw"):
        save_dataset(ds, tmp / name)
        back = load_dataset(tmp / name)
        assert np.array_equal(back.matrix, matrix)
        assert back.content_hash == ds.content_hash


def test_raw_header_layout(tmp_path):
    ds = make_dataset(np.arange(6.0).reshape(3, 2))
    save_dataset(ds, tmp_path / "d.raw")
    blob = (tmp_path / "d.raw").read_bytes()
    assert blob[:4] == b"TSB1"
    assert struct.unpack("<II", blob[4:12]) == (3, 2)
    assert len(blob) == 12 + 8 * 6


def test_raw_bad_magic(tmp_path):
    p = tmp_path / "bad.raw"
    p.write_bytes(b"XXXX" + struct.pack("<II", 1, 1) + struct.pack("<d", 1.0))
    with pytest.raises(ParseError):
        load_dataset(p)


def test_raw_truncated(tmp_path):
    p = tmp_path / "short.raw"
    p.write_bytes(b"TSB1" + struct.pack("<II", 2, 2) + struct.pack("<d", 1.0))
    with pytest.raises(ParseError):
        load_dataset(p)


def test_csv_parse_error_location(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n3,oops\n")
    with pytest.raises(ParseError) as info:
        load_dataset(p)
    assert info.value.row == 3 and info.value.column == 2


def test_csv_non_finite(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,nan\n")
    with pytest.raises(NonFiniteValue):
        load_dataset(p)


def test_narrow_feature_warning(tmp_path):
    x = np.zeros((1000, 2))
    x[:, 0] = np.random.default_rng(0).standard_normal(1000)
    x[:, 1] = 100.0
    x[0, 1] += 1e-6
    save_dataset(make_dataset(x), tmp_path / "d.raw")
    with pytest.warns(NarrowFeatureWarning):
        load_dataset(tmp_path / "d.raw")


def test_no_warning_on_ordinary_data(tmp_path, rng, recwarn):
    save_dataset(make_dataset(rng.standard_normal((200, 3)) + 50), tmp_path / "d.raw")
    load_dataset(tmp_path / "d.raw")
    assert not [w for w in recwarn if issubclass(w.category, NarrowFeatureWarning)]


def test_standardize_properties(rng):
    ds = make_dataset(rng.standard_normal((500, 3)) * [1, 10, 0.1] + [5, -3, 0])
    z, scale = standardize(ds)
    assert np.all(np.abs(z.matrix.mean(axis=0)) < 1e-12)
    assert np.allclose(z.matrix.std(axis=0), 1.0, atol=1e-12)
    assert np.allclose(destandardize(z.matrix, scale), ds.matrix, rtol=1e-12, atol=1e-12)
    zz, _ = standardize(z)
    assert np.allclose(zz.matrix, z.matrix, atol=1e-12)


def test_standardize_constant_feature():
    ds = make_dataset(np.column_stack([np.arange(5.0), np.ones(5)]))
    with pytest.raises(ConstantFeature):
        standardize(ds)


def test_split_half_sizes(stream):
    a, b = split_half(np.arange(4.0)[:, None], stream)
    assert len(a) == 2 and len(b) == 2
    assert set(a[:, 0]).isdisjoint(b[:, 0])
    a, b = split_half(np.arange(5.0)[:, None], stream)
    assert (len(a), len(b)) == (2, 3)


@given(st.integers(2, 100), st.integers(0, 2**31))
def test_split_half_multiset(n, seed):
    x = np.random.default_rng(seed).integers(0, 5, size=(n, 2)).astype(float)
    a, b = split_half(x, make_stream(seed, "split"))
    both = np.vstack([a, b])
    assert np.array_equal(np.unique(both, axis=0, return_counts=True)[1], np.unique(x, axis=0, return_counts=True)[1])


def test_split_half_too_small(stream):
    with pytest.raises(TooFewPoints):
        split_half(np.zeros((1, 2)), stream)


def test_bootstrap_without_replacement_is_permutation(stream):
    half = np.arange(50.0)[:, None]
    out = bootstrap_draw(half, 50, stream, with_replacement=False)
    assert sorted(out[:, 0]) == list(range(50))
    with pytest.raises(TooFewPoints):
        bootstrap_draw(half, 51, stream, with_replacement=False)


def test_bootstrap_with_replacement_duplicates(stream):
    half = np.arange(1000.0)[:, None]
    out = bootstrap_draw(half, 10_000, stream)
    assert out.shape == (10_000, 1)
    assert len(np.unique(out)) < 10_000


def test_bootstrap_duplicate_fraction(stream):
    rows = 100_000
    out = bootstrap_draw(np.arange(float(rows))[:, None], rows, stream)
    # fraction of draws that repeat an earlier draw: 1 - distinct/rows -> 1/e
    distinct = len(np.unique(out))
    dup_rows = 1.0 - (rows - distinct) / rows
    assert dup_rows == pytest.approx(1 - 1 / np.e, abs=0.02)
