import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import ADULT_CSV, COMPAS_CSV, write_csv
from uncfair.synthgen import builtin_scenario, generate_scenario, make_rng
from uncfair.tabular import (ADULT_SCHEMA, COMPAS_SCHEMA, UNASSIGNED, DataError, Schema,
                             TabularDataset, apply_standardizer, categories_of,
                             fit_standardizer, load_csv, resolve_schema,
                             schema_from_mapping, select_binary_groups, stratified_split)

TOY = schema_from_mapping({"label": "y", "positive": "1", "continuous": "a",
                           "categorical": "c"}, name="toy")


def _toy(**kw):
    n = len(kw["y"])
    return TabularDataset(features=np.asarray(kw.get("X", np.zeros((n, 1))), dtype=float),
                          labels=np.asarray(kw["y"]), groups=np.asarray(kw["g"]),
                          feature_names=tuple(f"x{j}" for j in range(np.shape(kw.get("X", np.zeros((n, 1))))[1])),
                          continuous=kw.get("continuous"))


def test_missing_row_dropped(tmp_path):
    p = write_csv(tmp_path / "t.csv", ["a", "c", "y"],
                  [[1.0, "u", 1], [2.0, "?", 0], [3.0, "v", 0]])
    ds = load_csv(p, TOY)
    assert ds.n == 2
    assert ds.feature_names == ("a", "c=u", "c=v")
    np.testing.assert_array_equal(ds.features, [[1, 1, 0], [3, 0, 1]])
    np.testing.assert_array_equal(ds.labels, [1, 0])
    assert np.all(ds.groups == UNASSIGNED)


def test_empty_string_is_missing(tmp_path):
    p = write_csv(tmp_path / "t.csv", ["a", "c", "y"], [[1.0, "", 1], [2.0, "u", 0]])
    assert load_csv(p, TOY).n == 1


@pytest.mark.parametrize("header,rows,match", [
    (["a", "y"], [[1, 1]], "unknown column 'c'"),
    (["a", "c", "y"], [[1, "?", 1]], "no rows left"),
])
def test_load_errors(tmp_path, header, rows, match):
    p = write_csv(tmp_path / "t.csv", header, rows)
    with pytest.raises(DataError, match=match):
        load_csv(p, TOY)


def test_missing_file_named(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_csv(tmp_path / "nope.csv", TOY)


def test_unmapped_level_when_aligning(tmp_path):
    train = load_csv(write_csv(tmp_path / "a.csv", ["a", "c", "y"], [[1, "u", 1], [2, "v", 0]]), TOY)
    test_p = write_csv(tmp_path / "b.csv", ["a", "c", "y"], [[1, "w", 1]])
    with pytest.raises(DataError, match="unmapped level 'w'"):
        load_csv(test_p, TOY, categories=categories_of(train))
    ok = load_csv(write_csv(tmp_path / "c.csv", ["a", "c", "y"], [[5, "v", 1]]), TOY,
                  categories=categories_of(train))
    assert ok.feature_names == train.feature_names


def test_filters_and_group_column(compas_like):
    ds = load_csv(compas_like, COMPAS_SCHEMA, group_column="race")
    assert not any(n.startswith("race=") for n in ds.feature_names)
    assert set(ds.group_raw) <= {"African-American", "Caucasian", "Hispanic"}
    raw = np.genfromtxt(compas_like, delimiter=",", names=True, dtype=None, encoding=None)
    assert ds.n == int(np.sum(np.abs(raw["days_b_screening_arrest"]) <= 30))


def test_select_binary_groups(compas_like):
    ds = load_csv(compas_like, COMPAS_SCHEMA, group_column="race")
    bw = select_binary_groups(ds, ["African-American"], ["Caucasian"])
    assert set(bw.groups) == {0, 1}
    assert np.all(bw.group_raw[bw.groups == 0] == "African-American")
    assert bw.n == int(np.sum(ds.group_raw != "Hispanic"))
    everything = select_binary_groups(ds, ["African-American"], ["Caucasian", "Hispanic"])
    assert everything.n == ds.n


def test_select_by_numeric_comparison(tmp_path):
    p = write_csv(tmp_path / "t.csv", ["a", "c", "age", "y"],
                  [[1, "u", age, age % 2] for age in (19, 24, 25, 30, 45, 46, 60)])
    ds = load_csv(p, TOY, group_column="age")
    sel = select_binary_groups(ds, ["<25"], [">45"])
    assert sorted(sel.group_raw.tolist()) == ["19", "24", "46", "60"]
    np.testing.assert_array_equal(sel.groups, [0, 0, 1, 1])


@pytest.mark.parametrize("g0,g1,match", [
    (["x"], ["x"], "overlap"),
    ([], ["x"], "non-empty"),
    (["African-American"], ["Martian"], "empty group"),
])
def test_select_errors(compas_like, g0, g1, match):
    ds = load_csv(compas_like, COMPAS_SCHEMA, group_column="race")
    with pytest.raises(DataError, match=match):
        select_binary_groups(ds, g0, g1)


def test_standardizer_hand_values():
    ds = _toy(X=[[1.0], [2.0], [3.0]], y=[0, 1, 0], g=[0, 1, 1], continuous=(True,))
    std = fit_standardizer(ds)
    assert std.mean[0] == 2.0
    np.testing.assert_allclose(apply_standardizer(std, ds).features[:, 0],
                               [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)
    at_mean = _toy(X=[[2.0]], y=[1], g=[0], continuous=(True,))
    assert apply_standardizer(std, at_mean).features[0, 0] == 0.0


def test_standardizer_drops_constant_and_keeps_onehot(caplog):
    X = np.array([[1.0, 5.0, 1.0], [2.0, 5.0, 0.0], [4.0, 5.0, 1.0]])
    ds = _toy(X=X, y=[0, 1, 0], g=[0, 1, 1], continuous=(True, True, False))
    std = fit_standardizer(ds)
    out = apply_standardizer(std, ds)
    assert std.dropped == ("x1",)
    assert "zero-variance" in caplog.text
    assert out.feature_names == ("x0", "x2")
    np.testing.assert_array_equal(out.features[:, 1], X[:, 2])


def test_standardizer_uses_train_moments_only():
    train = _toy(X=[[0.0], [2.0]], y=[0, 1], g=[0, 1], continuous=(True,))
    std = fit_standardizer(train)
    test = _toy(X=[[100.0], [102.0]], y=[0, 1], g=[0, 1], continuous=(True,))
    np.testing.assert_allclose(apply_standardizer(std, test).features[:, 0], [99.0, 101.0])


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(3, 40), st.integers(1, 4)),
                  elements=st.floats(-1e3, 1e3)))
def test_standardized_train_is_centred(X):
    ds = _toy(X=X, y=np.arange(len(X)) % 2, g=np.arange(len(X)) // 2 % 2,
              continuous=(True,) * X.shape[1])
    std = fit_standardizer(ds)
    Z = apply_standardizer(std, ds).features
    if Z.shape[1]:
        np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-9)
        sd = Z.std(axis=0)
        big = X[:, std.keep].std(axis=0) > 1e-6
        np.testing.assert_allclose(sd[big], 1.0, atol=1e-6)


def test_csv_round_trip(tmp_path):
    train, _ = generate_scenario(builtin_scenario("sd3", seed=2))
    p = tmp_path / "sd3.csv"
    train.to_csv(p)
    assert p.read_text().splitlines()[0] == "x0,x1,y,g"
    back = TabularDataset.from_csv(p)
    np.testing.assert_allclose(back.features, train.features, rtol=1e-8)
    np.testing.assert_array_equal(back.labels, train.labels)
    np.testing.assert_array_equal(back.groups, train.groups)


def test_invariants_enforced():
    with pytest.raises(DataError):
        _toy(y=[0, 2], g=[0, 1])
    with pytest.raises(DataError):
        _toy(y=[0, 1], g=[0, 3])


def test_schema_file(tmp_path):
    p = tmp_path / "s.ini"
    p.write_text("[schema]\nlabel = y\npositive = yes\ncontinuous = a\ncategorical = c\n"
                 "missing = NA, <empty>\nfilters = a >= 0; c != z\n")
    schema = resolve_schema(str(p))
    assert schema.missing == ("NA", "")
    data = write_csv(tmp_path / "d.csv", ["a", "c", "y"],
                     [[1, "u", "yes"], [-1, "u", "no"], [2, "z", "no"], [3, "NA", "no"], [4, "v", "no"]])
    ds = load_csv(data, schema)
    assert ds.n == 2
    np.testing.assert_array_equal(ds.labels, [1, 0])


def test_builtin_schemas():
    assert resolve_schema("compas") is COMPAS_SCHEMA
    assert COMPAS_SCHEMA.label.name == "two_year_recid"
    assert ADULT_SCHEMA.label.positive == (">50K", ">50K.")
    with pytest.raises(DataError):
        Schema(())


def test_headerless_adult_file(tmp_path):
    row = ["39", "State-gov", "77516", "Bachelors", "13", "Never-married", "Adm-clerical",
           "Not-in-family", "White", "Male", "2174", "0", "40", "United-States", "<=50K"]
    row2 = list(row)
    row2[8], row2[14] = "Black", ">50K"
    row3 = list(row)
    row3[1] = "?"
    p = tmp_path / "adult.data"
    p.write_text("\n".join(", ".join(r) for r in (row, row2, row3)) + "\n")
    ds = load_csv(p, ADULT_SCHEMA, group_column="race")
    assert ds.n == 2
    np.testing.assert_array_equal(ds.labels, [0, 1])
    assert ds.group_raw.tolist() == ["White", "Black"]


def test_stratified_split_cells():
    ds = _toy(y=[0, 1] * 10, g=[0] * 10 + [1] * 10)
    train, test = stratified_split(ds, 0.2, make_rng(0))
    assert test.n == 4 and train.n == 16
    assert sorted(zip(test.groups.tolist(), test.labels.tolist())) == [(0, 0), (0, 1), (1, 0), (1, 1)]


@pytest.mark.skipif(not COMPAS_CSV, reason="set UNCFAIR_COMPAS_CSV to the ProPublica file")
def test_compas_counts():
    ds = load_csv(COMPAS_CSV, COMPAS_SCHEMA, group_column="race")
    assert ds.n == 6172
    bw = select_binary_groups(ds, ["African-American"], ["Caucasian"])
    assert bw.group_counts() == {0: 3175, 1: 2103}


@pytest.mark.skipif(not ADULT_CSV, reason="set UNCFAIR_ADULT_CSV to adult.data")
def test_adult_race_counts():
    ds = load_csv(ADULT_CSV, ADULT_SCHEMA, group_column="race")
    bw = select_binary_groups(ds, ["Black"], ["White"])
    assert bw.group_counts() == {0: 2817, 1: 25933}
