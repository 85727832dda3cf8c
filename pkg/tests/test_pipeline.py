import hashlib

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oculolipid.cohort import MergedCohort
from oculolipid.errors import ConstantInput, InvalidSpec
from oculolipid.morphometry import FEATURE_NAMES
from oculolipid.pipeline import (
    AssociationNetwork,
    PlantedEffectSpec,
    build_manifest,
    build_network,
    default_lipid_names,
    fmt,
    lipid_retina_sweep,
    profile_demographics,
    read_associations,
    significant_counts,
    simulate_cohort,
    top_associations,
    write_associations,
)
from oculolipid.stats import AdjustedResultSet, CorrelationResult


def result_set(rows, q=0.05):
    """rows: (fundus, lipid, r, p_adjusted)."""
    res = [CorrelationResult(f, l, ("age", "sex"), r, pa, r - 0.05, r + 0.05, 500, 496) for f, l, r, pa in rows]
    padj = np.array([t[3] for t in rows], dtype=float)
    return AdjustedResultSet(res, padj, padj < q, q)


def csv_bytes(rs, path):
    write_associations(rs, path)
    return path.read_bytes()


# --- demographic profile ----------------------------------------------------


def test_profile_recovers_age_effect():
    spec = PlantedEffectSpec(n=7000, n_lipids=2, age_effects={"artery_average_width": -0.22}, sex_effects={})
    cohort = simulate_cohort(spec, seed=5)
    prof = profile_demographics(cohort)
    i = prof.features.index("artery_average_width")
    assert prof.age_results[i].r == pytest.approx(-0.22, abs=0.03)
    assert prof.age_results[i].covariate_names == ("sex",)
    assert "artery_average_width" in prof.retained
    # features without an age effect are not retained
    assert prof.retained == ["artery_average_width"]
    assert prof.features == list(FEATURE_NAMES)
    assert prof.key_features == ["artery_average_width"]


def test_independent_feature_rarely_retained():
    hits = 0
    for seed in range(20):
        cohort = simulate_cohort(PlantedEffectSpec(n=800, n_lipids=1, age_effects={}, sex_effects={}), seed)
        hits += bool(profile_demographics(cohort).retained)
    assert hits <= 2


def test_profile_constant_feature_names_it():
    cohort = simulate_cohort(PlantedEffectSpec(n=200, n_lipids=1), seed=1)
    cohort.frame["vein_fractal_dimension"] = 1.4
    with pytest.raises(ConstantInput) as info:
        profile_demographics(cohort)
    assert "vein_fractal_dimension" in str(info.value)


def test_profile_table_has_every_feature_once():
    cohort = simulate_cohort(PlantedEffectSpec(n=300, n_lipids=1), seed=2)
    t = profile_demographics(cohort).table()
    assert t["feature"].tolist() == list(FEATURE_NAMES)
    assert {"r_age", "CI_lower", "CI_upper", "P-adjusted", "male_mean", "female_sd"} <= set(t.columns)


# --- sweep ------------------------------------------------------------------


@pytest.fixture(scope="module")
def wide_cohort():
    return simulate_cohort(PlantedEffectSpec(n=120, n_lipids=187), seed=3)


def test_sweep_counts(wide_cohort):
    rs = lipid_retina_sweep(wide_cohort)
    assert len(rs) == 18 * 187 == 3366
    assert not rs.skipped
    keys = [(r.x_name, r.y_name) for r in rs.results]
    assert keys == sorted(keys)
    assert all(r.covariate_names == ("age", "sex") and r.df == 120 - 4 for r in rs.results)


def test_sweep_is_deterministic_and_job_count_free(wide_cohort, tmp_path):
    a = lipid_retina_sweep(wide_cohort, jobs=1)
    b = lipid_retina_sweep(wide_cohort, jobs=4)
    assert csv_bytes(a, tmp_path / "a.csv") == csv_bytes(b, tmp_path / "b.csv")


def test_fast_and_pairwise_paths_agree():
    cohort = simulate_cohort(PlantedEffectSpec(n=150, n_lipids=8), seed=4)
    fast = lipid_retina_sweep(cohort)
    holey = cohort.frame.copy()
    holey.loc[0, "artery_average_width"] = np.nan
    slow = lipid_retina_sweep(MergedCohort(holey, cohort.fundus_features, cohort.lipid_features, {}))
    by_key = {(r.x_name, r.y_name): r for r in slow.results}
    for r in fast.results:
        s = by_key[(r.x_name, r.y_name)]
        if r.x_name == "artery_average_width":
            assert s.n_used == 149
        else:
            assert s.n_used == 150
            assert s.r == pytest.approx(r.r, abs=1e-12)
            assert s.p == pytest.approx(r.p, rel=1e-9)


def test_degenerate_pairs_are_skipped_not_fatal():
    cohort = simulate_cohort(PlantedEffectSpec(n=100, n_lipids=4), seed=6)
    frame = cohort.frame.copy()
    flat = cohort.lipid_features[0]
    frame[flat] = 2.0
    sparse = cohort.lipid_features[1]
    frame.loc[5:, sparse] = np.nan
    rs = lipid_retina_sweep(MergedCohort(frame, cohort.fundus_features, cohort.lipid_features, {}))
    assert len(rs) == 18 * 2
    assert len(rs.skipped) == 36
    reasons = {l: why for _, l, why in rs.skipped}
    assert flat in reasons[flat] and "ConstantInput" in reasons[flat]
    assert "InsufficientSamples" in reasons[sparse]


def test_retained_subset_is_row_subset(wide_cohort):
    full = lipid_retina_sweep(wide_cohort)
    sub_names = ["artery_vessel_density", "vein_vessel_density", "artery_average_width"]
    sub = lipid_retina_sweep(wide_cohort, fundus_features=sub_names)
    index = {(r.x_name, r.y_name): r for r in full.results}
    for r in sub.results:
        assert index[(r.x_name, r.y_name)] == r


def test_planted_pairs_recovered_with_sign():
    lipids = default_lipid_names(40)
    planted = tuple(("artery_average_width", l, 0.12 * (-1) ** i) for i, l in enumerate(lipids[:30]))
    cohort = simulate_cohort(PlantedEffectSpec(n=6000, lipid_features=tuple(lipids), planted=planted), seed=11)
    rs = lipid_retina_sweep(cohort)
    sig = {(r.x_name, r.y_name): r.r for r, _ in rs.significant_results()}
    hits = sum(1 for f, l, r in planted if (f, l) in sig and np.sign(sig[(f, l)]) == np.sign(r))
    assert hits >= 25


def test_associations_csv_round_trip(tmp_path, wide_cohort):
    rs = lipid_retina_sweep(wide_cohort, lipid_features=wide_cohort.lipid_features[:5])
    write_associations(rs, tmp_path / "a.csv")
    back = read_associations(tmp_path / "a.csv")
    write_associations(back, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert pd.read_csv(tmp_path / "a.csv").columns.tolist()[:3] == ["fundus_feature", "lipid_feature", "r"]


# --- network ----------------------------------------------------------------


def test_empty_network():
    net = build_network(result_set([("a", "tag_1:0", 0.1, 0.5)]))
    assert len(net) == 0 and net.fundus_nodes == [] and net.lipid_nodes == []


def test_six_links_make_a_node_five_do_not():
    six = [("artery_average_width", f"tag_{i}:0", -0.1, 0.01) for i in range(6)]
    five = [("vein_vessel_density", f"pc_{i}:0", 0.1, 0.01) for i in range(5)]
    net = build_network(result_set(six + five))
    assert net.fundus_nodes == [("artery_average_width", 6)]
    assert len(net.lipid_nodes) == 6 and len(net) == 6
    assert all(e["sign"] == -1 for e in net.edges)
    assert {s for _, s, _ in net.lipid_nodes} == {"tag"}


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 15), st.floats(-0.5, 0.5), st.floats(0, 0.2)),
                max_size=60, unique_by=lambda t: (t[0], t[1])))
def test_network_invariants(rows):
    rows = [(f"f{a}", f"pc_{b}:0", r, p) for a, b, r, p in rows]
    rs = result_set(rows)
    net = build_network(rs)
    kept = {n for n, _ in net.fundus_nodes}
    sig_kept = [t for t in rows if t[3] < 0.05 and t[0] in kept]
    assert sum(d for _, d in net.fundus_nodes) == len(net) == len(sig_kept)
    assert sum(d for _, _, d in net.lipid_nodes) == len(net)
    for e in net.edges:
        assert e["p_adjusted"] < 0.05
        assert e["sign"] == (-1 if e["r"] < 0 else 1)
    assert all(d > 5 for _, d in net.fundus_nodes)
    assert AssociationNetwork.from_json(net.to_json()) == net


# --- rankings ---------------------------------------------------------------


def test_top_associations_rank_and_ties():
    rows = [("a", "l1", 0.10, 0.01), ("b", "cer_d18:0/c16:0", 0.15, 0.01), ("a", "l2", -0.10, 0.01),
            ("a", "l0", 0.10, 0.01), ("c", "l9", 0.5, 0.2)]
    top = top_associations(result_set(rows), k=20)
    names = [(r.x_name, r.y_name) for r, _ in top]
    assert names[0] == ("b", "cer_d18:0/c16:0")
    assert names[1:] == [("a", "l0"), ("a", "l1"), ("a", "l2")]
    assert len(top_associations(result_set(rows), k=2)) == 2


def test_significant_counts_order_and_sum():
    rows = [("b", "x", 0.1, 0.01), ("b", "y", 0.1, 0.01), ("a", "x", 0.1, 0.01), ("c", "x", 0.1, 0.9)]
    counts = significant_counts(result_set(rows), ["a", "b", "c", "d"])
    assert counts == [("b", 2), ("a", 1), ("c", 0), ("d", 0)]


# --- simulation -------------------------------------------------------------


def test_simulate_invalid_spec():
    with pytest.raises(InvalidSpec):
        simulate_cohort(PlantedEffectSpec(n=0), seed=1)
    with pytest.raises(InvalidSpec):
        simulate_cohort(PlantedEffectSpec(planted=(("nope", "tag_30:0", 0.1),)), seed=1)
    with pytest.raises(InvalidSpec):
        simulate_cohort(PlantedEffectSpec(planted=(("vessel_density", "tag_30:0", 0.8),
                                                   ("average_width", "tag_30:0", 0.7))), seed=1)


def test_simulate_same_seed_same_bytes():
    spec = PlantedEffectSpec(n=300, missing_rate=0.05)
    digest = lambda c: hashlib.sha256(c.frame.to_csv(index=False).encode()).hexdigest()  # noqa: E731
    assert digest(simulate_cohort(spec, 9)) == digest(simulate_cohort(spec, 9))
    assert digest(simulate_cohort(spec, 9)) != digest(simulate_cohort(spec, 10))


def test_simulate_planted_correlation():
    lip = default_lipid_names(3)
    spec = PlantedEffectSpec(n=2000, lipid_features=tuple(lip), planted=(("vein_vessel_density", lip[1], 0.3),))
    cohort = simulate_cohort(spec, seed=21)
    rs = lipid_retina_sweep(cohort, fundus_features=["vein_vessel_density"])
    r = {res.y_name: res.r for res in rs.results}
    assert r[lip[1]] == pytest.approx(0.3, abs=0.05)


def test_manifest_digests(tmp_path):
    (tmp_path / "in.csv").write_text("a\n1\n")
    (tmp_path / "out.csv").write_text("b\n2\n")
    m = build_manifest({"fundus": tmp_path / "in.csv"}, {"q": 0.05}, {"n_tests": 1}, {"out": tmp_path / "out.csv"})
    assert m["inputs"]["fundus"]["file"] == "in.csv"
    assert m["outputs"]["out"] == hashlib.sha256(b"b\n2\n").hexdigest()


def test_manifest_timestamp_pinned(monkeypatch, tmp_path):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    assert build_manifest({}, {}, {}, {})["timestamp"] == "1970-01-01T00:00:00Z"


def test_fmt():
    assert fmt(None) == "NA" and fmt(float("nan")) == "NA"
    assert fmt(12) == "12" and fmt(0.123456789) == "0.123457"
