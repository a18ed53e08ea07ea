"""Ingestion tests: statics parsing, snapshot hashing, context building."""

from datetime import date as Date

import numpy as np
import pytest

from vacsim.data_io import (
    DataError,
    RegionStatic,
    build_contexts,
    load_snapshot,
    read_statics_csv,
    snapshot_from_texts,
)
from vacsim.fixtures import (
    FIXTURE_START,
    fixture_series_csv,
    fixture_snapshot,
    fixture_statics_csv,
    true_params,
    write_fixture,
)

SERIES = (
    "date,region,confirmed,recovered,deaths\n"
    "2020-12-01,alpha,1000,500,10\n"
    "2020-12-02,alpha,1100,550,11\n"
    "2020-12-01,beta,2000,900,40\n"
    "2020-12-02,beta,2100,950,42\n"
)
STATICS = (
    "region,population,hospital_beds,icu_beds,ventilators,age_over_50\n"
    "alpha,500000,2000,150,80,120000\n"
    "beta,800000,3000,220,110,260000\n"
)


class TestRegionStatic:
    def test_negative_count_rejected(self):
        with pytest.raises(DataError, match="icu_beds must be >= 0"):
            RegionStatic("r", 1000.0, 10.0, -1.0, 5.0, 100.0)

    def test_population_must_be_positive(self):
        with pytest.raises(DataError, match="population must be positive"):
            RegionStatic("r", 0.0, 10.0, 1.0, 5.0, 0.0)

    def test_age_group_cannot_exceed_population(self):
        with pytest.raises(DataError, match="age_over_50 exceeds population"):
            RegionStatic("r", 1000.0, 10.0, 1.0, 5.0, 1001.0)


class TestReadStaticsCsv:
    def test_happy_path(self):
        statics = read_statics_csv(STATICS)
        assert sorted(statics) == ["alpha", "beta"]
        assert statics["alpha"].population == 500000.0
        assert statics["beta"].age_over_50 == 260000.0

    def test_empty_file(self):
        with pytest.raises(DataError, match="statics file is empty"):
            read_statics_csv("")

    def test_header_only(self):
        with pytest.raises(DataError, match="no rows"):
            read_statics_csv(STATICS.splitlines()[0] + "\n")

    def test_wrong_header(self):
        with pytest.raises(DataError, match="statics header must be"):
            read_statics_csv("region,population\nalpha,10\n")

    def test_short_row_reports_location(self):
        text = STATICS + "gamma,100\n"
        with pytest.raises(DataError, match="statics row 4: expected 6 columns"):
            read_statics_csv(text)

    def test_duplicate_region_reports_location(self):
        text = STATICS + "alpha,500000,2000,150,80,120000\n"
        with pytest.raises(DataError, match="statics row 4: duplicate region alpha"):
            read_statics_csv(text)

    def test_non_numeric_cell_reports_location(self):
        text = STATICS.replace("3000", "many")
        with pytest.raises(DataError, match="statics row 3"):
            read_statics_csv(text)

    def test_invalid_values_report_location(self):
        text = STATICS.replace("alpha,500000", "alpha,-5")
        with pytest.raises(DataError, match="statics row 2"):
            read_statics_csv(text)


class TestSnapshot:
    def test_regions_sorted(self):
        snap = snapshot_from_texts(SERIES, STATICS)
        assert snap.regions == ["alpha", "beta"]

    def test_hash_stable_across_parses(self):
        first = snapshot_from_texts(SERIES, STATICS)
        second = snapshot_from_texts(SERIES, STATICS)
        assert first.content_hash == second.content_hash
        assert len(first.content_hash) == 64

    def test_hash_sensitive_to_series_cell(self):
        base = snapshot_from_texts(SERIES, STATICS)
        tweaked = snapshot_from_texts(SERIES.replace("1100", "1101"), STATICS)
        assert base.content_hash != tweaked.content_hash

    def test_hash_sensitive_to_statics_cell(self):
        base = snapshot_from_texts(SERIES, STATICS)
        tweaked = snapshot_from_texts(SERIES, STATICS.replace("2000", "2001"))
        assert base.content_hash != tweaked.content_hash

    def test_decreasing_cumulative_rejected(self):
        bad = SERIES.replace("2020-12-02,alpha,1100", "2020-12-02,alpha,900")
        with pytest.raises(DataError, match="series file: .*confirmed decreases"):
            snapshot_from_texts(bad, STATICS)

    def test_region_missing_from_statics(self):
        extra = SERIES + "2020-12-01,gamma,10,1,0\n"
        with pytest.raises(DataError, match="regions missing from statics: gamma"):
            snapshot_from_texts(extra, STATICS)

    def test_region_missing_from_series(self):
        extra = STATICS + "gamma,100000,500,40,20,30000\n"
        with pytest.raises(DataError, match="regions missing from series: gamma"):
            snapshot_from_texts(SERIES, extra)

    def test_load_snapshot_reads_files(self, tmp_path):
        series_path = tmp_path / "series.csv"
        statics_path = tmp_path / "statics.csv"
        series_path.write_text(SERIES, encoding="utf-8")
        statics_path.write_text(STATICS, encoding="utf-8")
        from_files = load_snapshot(series_path, statics_path)
        from_texts = snapshot_from_texts(SERIES, STATICS)
        assert from_files.content_hash == from_texts.content_hash
        assert from_files.regions == from_texts.regions

    def test_bundled_fixture_parses_with_stable_hash(self, tmp_path):
        snap = fixture_snapshot()
        assert len(snap.regions) == 5
        series_path, statics_path = write_fixture(tmp_path)
        reloaded = load_snapshot(series_path, statics_path)
        assert reloaded.content_hash == snap.content_hash

    def test_fixture_texts_match_snapshot(self):
        snap = snapshot_from_texts(fixture_series_csv(), fixture_statics_csv())
        assert snap.content_hash == fixture_snapshot().content_hash


class TestBuildContexts:
    def fixture_inputs(self):
        return fixture_snapshot(), true_params()

    def test_window_shape(self):
        snap, params = self.fixture_inputs()
        window = (Date(2020, 12, 1), Date(2020, 12, 26))
        days = build_contexts(snap, params, window)
        assert len(days) == 26
        assert all(len(day) == 5 for day in days)
        assert days[0][0].date == Date(2020, 12, 1)
        assert days[-1][0].date == Date(2020, 12, 26)

    def test_rows_follow_sorted_region_order(self):
        snap, params = self.fixture_inputs()
        days = build_contexts(snap, params, (Date(2020, 12, 1), Date(2020, 12, 2)))
        for day in days:
            assert [c.region for c in day] == snap.regions

    def test_susceptible_is_population_minus_cases(self):
        snap, params = self.fixture_inputs()
        days = build_contexts(snap, params, (Date(2020, 12, 1), Date(2020, 12, 10)))
        for day in days:
            for c in day:
                want = max(c.population - c.total_predicted_cases, 0.0)
                assert c.susceptible == want

    def test_features_finite(self):
        snap, params = self.fixture_inputs()
        days = build_contexts(snap, params, (Date(2020, 12, 1), Date(2020, 12, 5)))
        for day in days:
            for c in day:
                assert np.isfinite(c.features()).all()

    def test_deterministic(self):
        snap, params = self.fixture_inputs()
        window = (Date(2020, 12, 1), Date(2020, 12, 3))
        first = build_contexts(snap, params, window)
        second = build_contexts(snap, params, window)
        for day_a, day_b in zip(first, second):
            for a, b in zip(day_a, day_b):
                assert a == b

    def test_single_day_window(self):
        snap, params = self.fixture_inputs()
        days = build_contexts(snap, params, (Date(2020, 12, 31), Date(2020, 12, 31)))
        assert len(days) == 1
        assert [c.region for c in days[0]] == snap.regions

    def test_reversed_window_rejected(self):
        snap, params = self.fixture_inputs()
        with pytest.raises(DataError, match="precedes start"):
            build_contexts(snap, params, (Date(2020, 12, 5), Date(2020, 12, 1)))

    def test_window_before_observations_rejected(self):
        snap, params = self.fixture_inputs()
        early = FIXTURE_START.replace(month=9)
        with pytest.raises(DataError, match="before first observed day"):
            build_contexts(snap, params, (early, Date(2020, 12, 1)))

    def test_missing_params_rejected(self):
        snap, params = self.fixture_inputs()
        incomplete = {r: p for r, p in params.items() if r != snap.regions[0]}
        with pytest.raises(DataError, match=f"no fitted parameters for: {snap.regions[0]}"):
            build_contexts(snap, incomplete, (Date(2020, 12, 1), Date(2020, 12, 2)))
