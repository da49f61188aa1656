import datetime as dt
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynmaps.core import Trajectory
from dynmaps.ingest import (
    SYNTH_EPOCH,
    DatasetConfig,
    ParseError,
    RegionConfigError,
    TooShortError,
    day_of,
    filter_edinburgh,
    generate_synthetic,
    load_regions,
    parse,
    resample,
    split_by_day,
    write_generic,
)

DATA = Path(__file__).resolve().parent.parent / "data"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParse:
    def test_atc_millimetres(self, tmp_path):
        p = write(tmp_path, "a.csv", "100.0,7,1500,-2500,1700,900,0.1,0.2\n101.0,7,2500,-2500,1700,900,0.1,0.2\n")
        (tr,) = parse(p, DatasetConfig("atc", unit_scale=0.001)).trajectories
        assert tr.x.tolist() == [1.5, 2.5] and tr.y.tolist() == [-2.5, -2.5]

    def test_interleaved_ids(self, tmp_path):
        p = write(tmp_path, "a.csv", "3,b,0,0\n1,a,0,0\n2,b,1,0\n2,a,1,0\n1,b,5,5\n")
        a, b = parse(p).trajectories
        assert (a.person_id, a.t.tolist()) == ("a", [1.0, 2.0])
        assert (b.person_id, b.t.tolist(), b.x.tolist()) == ("b", [1.0, 2.0, 3.0], [5.0, 1.0, 0.0])

    def test_non_numeric_row_skipped(self, tmp_path):
        p = write(tmp_path, "a.csv", "0,a,0,0\n1,a,oops,0\n2,a,2,0\n")
        res = parse(p)
        assert res.n_skipped == 1
        assert len(res.trajectories[0]) == 2

    def test_duplicate_timestamp_keeps_first(self, tmp_path):
        p = write(tmp_path, "a.csv", "0,a,0,0\n0,a,9,9\n1,a,1,0\n")
        res = parse(p)
        assert res.n_skipped == 1 and res.trajectories[0].x.tolist() == [0.0, 1.0]

    def test_no_valid_rows(self, tmp_path):
        with pytest.raises(ParseError):
            parse(write(tmp_path, "a.csv", "x,y\nfoo,bar\n"))

    def test_unreadable(self, tmp_path):
        with pytest.raises(ParseError):
            parse(tmp_path / "missing.csv")

    def test_edinburgh_tracks(self, tmp_path):
        p = write(tmp_path, "e.txt", "TRACK.R3=[[10 20 0];[30 20 9];[50 20 18]];\nTRACK.R4=[[0 0 4]];\n")
        cfg = DatasetConfig("edinburgh", unit_scale=0.5, frame_rate=9.0, time_origin=1000.0)
        r3, r4 = parse(p, cfg).trajectories
        assert r3.person_id == "R3"
        assert r3.x.tolist() == [5.0, 15.0, 25.0] and r3.y.tolist() == [10.0] * 3
        assert r3.t.tolist() == [1000.0, 1001.0, 1002.0]
        assert r4.t.tolist() == [1000.0 + 4 / 9]

    def test_example_files_parse(self):
        atc = parse(DATA / "example_atc.csv", DatasetConfig("atc", unit_scale=0.001))
        assert atc.n_skipped == 0 and [len(t) for t in atc.trajectories] == [7, 5]
        ed = parse(DATA / "example_edinburgh.txt", DatasetConfig("edinburgh", unit_scale=0.025))
        assert [t.person_id for t in ed.trajectories] == ["R1", "R2"]

    def test_bad_config(self):
        with pytest.raises(ValueError):
            DatasetConfig("atc", unit_scale=0.0)
        with pytest.raises(ValueError):
            DatasetConfig("pcd")


class TestGenericRoundTrip:
    def test_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        trajs = [
            Trajectory(f"p{i}", np.cumsum(rng.uniform(0.1, 2, 20)) + 1.7e9, rng.normal(0, 50, 20), rng.normal(0, 50, 20))
            for i in range(5)
        ]
        write_generic(trajs, tmp_path / "g.csv")
        assert parse(tmp_path / "g.csv").trajectories == trajs

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6, allow_subnormal=False), min_size=1, max_size=15))
    def test_any_floats(self, tmp_path_factory, xs):
        trajs = [Trajectory("z", np.arange(len(xs), dtype=float) * 0.1, xs, xs[::-1])]
        p = tmp_path_factory.mktemp("rt") / "g.csv"
        write_generic(trajs, p)
        assert parse(p).trajectories == trajs


class TestResample:
    def test_ten_hz_to_one_hz(self):
        t = np.arange(0, 10.01, 0.1)
        tr = resample(Trajectory("a", t, 1.0 * t, np.zeros_like(t)), 1.0)
        assert tr.t.tolist() == pytest.approx(list(range(11)))
        np.testing.assert_allclose(tr.speed, 1.0, atol=1e-9)
        np.testing.assert_allclose(tr.heading, 0.0, atol=1e-12)

    def test_stationary(self):
        tr = resample(Trajectory("a", np.arange(0, 5, 0.5), np.full(10, 3.0), np.full(10, 4.0)))
        assert np.all(tr.speed == 0) and np.all(tr.heading == 0)

    def test_stop_keeps_heading(self):
        tr = resample(Trajectory("a", [0, 1, 2, 3], [0, 0, 0, 0], [0, 1, 1, 1]))
        assert tr.speed.tolist() == [1, 1, 0, 0]
        np.testing.assert_allclose(tr.heading, math.pi / 2)

    def test_arc_chords(self):
        # three samples on a unit circle, 90 degrees apart, 1 s apart
        tr = resample(Trajectory("a", [0, 1, 2], [1, 0, -1], [0, 1, 0]))
        np.testing.assert_allclose(tr.speed, math.sqrt(2), atol=1e-12)
        np.testing.assert_allclose(tr.heading, [3 * math.pi / 4, 3 * math.pi / 4, -3 * math.pi / 4], atol=1e-12)

    def test_too_short(self):
        with pytest.raises(TooShortError):
            resample(Trajectory("a", [0.0], [0.0], [0.0]))
        with pytest.raises(TooShortError):
            resample(Trajectory("a", [0.0, 0.5], [0.0, 1.0], [0.0, 0.0]))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(0.05, 1.0), st.floats(-2, 2), st.floats(-2, 2)), min_size=3, max_size=40))
    def test_endpoints_preserved(self, steps):
        t = np.concatenate([[0.0], np.cumsum([s[0] for s in steps])])
        x = np.concatenate([[0.0], np.cumsum([s[1] for s in steps])])
        y = np.concatenate([[0.0], np.cumsum([s[2] for s in steps])])
        if t[-1] < 1.0:
            return
        src = Trajectory("h", t, x, y)
        tr = resample(src, 1.0)
        assert (tr.x[0], tr.y[0]) == (x[0], y[0])
        vmax = float(np.max(np.hypot(np.diff(x), np.diff(y)) / np.diff(t)))
        assert math.hypot(tr.x[-1] - x[-1], tr.y[-1] - y[-1]) <= vmax * 1.0 + 1e-9
        np.testing.assert_allclose(np.diff(tr.t), 1.0)


def square(x0, y0, x1, y1):
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


REGIONS = {"marginal": [square(0, 0, 2, 10), square(8, 0, 10, 10)], "lift": [square(0, 0, 2, 2)]}
CFG = DatasetConfig("edinburgh", regions=REGIONS, min_points=30)


def line_track(pid, p0, p1, n=40):
    return Trajectory(pid, np.arange(float(n)), np.linspace(p0[0], p1[0], n), np.linspace(p0[1], p1[1], n))


class TestEdinburghFilter:
    def test_rules(self):
        good = line_track("good", (1, 5), (9, 5))
        short = line_track("short", (1, 5), (9, 5), n=29)
        mid = line_track("mid", (5, 5), (9, 5))
        lift = line_track("lift", (0.5, 0.5), (1.5, 1.5))
        kept, counts = filter_edinburgh([good, short, mid, lift], CFG)
        assert [t.person_id for t in kept] == ["good"]
        assert counts == {"outside_marginal": 1, "too_short": 1, "lift": 1}

    def test_thirty_points_kept(self):
        kept, _ = filter_edinburgh([line_track("ok", (1, 5), (9, 5), n=30)], CFG)
        assert len(kept) == 1

    def test_one_end_in_lift_kept(self):
        kept, _ = filter_edinburgh([line_track("ok", (1, 1), (9, 5))], CFG)
        assert len(kept) == 1

    def test_idempotent(self):
        trajs = generate_synthetic("corridor", {"n": 30, "length": 10}, seed=0)
        trajs = [Trajectory(t.person_id, t.t, t.x, t.y + 5) for t in trajs]
        once, _ = filter_edinburgh(trajs, DatasetConfig("edinburgh", regions=REGIONS, min_points=5))
        twice, _ = filter_edinburgh(once, DatasetConfig("edinburgh", regions=REGIONS, min_points=5))
        assert once == twice

    def test_missing_regions(self):
        with pytest.raises(RegionConfigError):
            filter_edinburgh([], DatasetConfig("edinburgh"))


class TestRegionFile:
    def test_example_file(self):
        regions = load_regions(DATA / "edinburgh_regions.txt")
        assert len(regions["marginal"]) == 4 and len(regions["lift"]) == 1
        assert regions["lift"][0][0] == (12.0, 9.0)

    def test_bad_lines(self, tmp_path):
        with pytest.raises(RegionConfigError):
            load_regions(write(tmp_path, "r.txt", "marginal 0 0, 1 0, 1 1\n"))
        with pytest.raises(RegionConfigError):
            load_regions(write(tmp_path, "r.txt", "lift: 0 0, 1 0\n"))
        with pytest.raises(RegionConfigError):
            load_regions(write(tmp_path, "r.txt", "lift: 0 0, 1 x, 1 1\n"))


def on_day(pid, day, hour=12.0, n=5):
    t0 = SYNTH_EPOCH + day * 86400 + hour * 3600
    return Trajectory(pid, t0 + np.arange(float(n)), np.arange(float(n)), np.zeros(n))


D0 = dt.date(2024, 1, 1)


class TestSplitByDay:
    def test_ten_days_one_train(self):
        trajs = [on_day(f"{d}-{i}", d) for d in range(10) for i in range(3)]
        train, test = split_by_day(trajs, [D0])
        assert len(train) == 3 and len(test) == 27
        assert len({day_of(t.t[0]) for t in test}) == 9

    def test_single_day_gives_empty_test(self):
        trajs = [on_day("a", 0), on_day("b", 0)]
        with pytest.warns(UserWarning, match="empty"):
            train, test = split_by_day(trajs, ["2024-01-01"])
        assert len(train) == 2 and test == []

    def test_missing_day_warns(self):
        with pytest.warns(UserWarning, match="not present"):
            train, _ = split_by_day([on_day("a", 0), on_day("b", 1)], [dt.date(2030, 1, 1)])
        assert train == []

    def test_midnight_crossing_uses_first_sample(self):
        tr = on_day("late", 0, hour=23.99, n=120)
        assert day_of(tr.t[-1]) != day_of(tr.t[0])
        train, test = split_by_day([tr, on_day("x", 1)], [D0])
        assert [t.person_id for t in train] == ["late"]

    def test_utc_offset(self):
        tr = on_day("a", 0, hour=23.0)
        assert day_of(tr.t[0], utc_offset=3600 * 2) == dt.date(2024, 1, 2)

    def test_partition(self):
        trajs = [on_day(f"{d}-{i}", d) for d in range(5) for i in range(2)]
        train, test = split_by_day(trajs, [D0, D0 + dt.timedelta(1)], [D0 + dt.timedelta(3)])
        ids_train = {t.person_id for t in train}
        ids_test = {t.person_id for t in test}
        assert not ids_train & ids_test
        assert len(train) + len(test) + 4 == len(trajs)

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            split_by_day([], [D0], [D0])


class TestSynthetic:
    def test_corridor_headings(self):
        trajs = generate_synthetic("corridor", {"n": 100, "noise": 0.05}, seed=0)
        assert len(trajs) == 100
        worst = max(float(np.max(np.abs(t.heading))) for t in trajs)
        assert worst < 0.15

    def test_deterministic(self):
        for scenario in ("corridor", "bend", "bimodal", "time_varying"):
            assert generate_synthetic(scenario, {"n": 10}, seed=3) == generate_synthetic(scenario, {"n": 10}, seed=3)
        assert generate_synthetic("bend", {"n": 5}, seed=1) != generate_synthetic("bend", {"n": 5}, seed=2)

    def test_time_varying_morning_east_afternoon_west(self):
        trajs = generate_synthetic("time_varying", {"n": 200, "days": 4, "period": 43200.0}, seed=5)
        days = {day_of(t.t[0]) for t in trajs}
        assert len(days) == 4
        for tr in trajs:
            hour = ((tr.t[0] - SYNTH_EPOCH) % 86400) / 3600
            assert (tr.x[-1] > 10) == (hour < 12)
            assert (tr.x[-1] < -10) == (hour >= 12)

    def test_bend_turns_north(self):
        for tr in generate_synthetic("bend", {"n": 20}, seed=0):
            assert abs(tr.heading[0]) < 0.3
            assert abs(tr.heading[-1] - math.pi / 2) < 0.3

    def test_bimodal_split(self):
        trajs = generate_synthetic("bimodal", {"n": 1000}, seed=0)
        left = sum(t.y[-1] > 0 for t in trajs)
        assert 760 <= left <= 840

    def test_unknown(self):
        with pytest.raises(ValueError):
            generate_synthetic("spiral")
        with pytest.raises(ValueError):
            generate_synthetic("corridor", {"wiggle": 1})
