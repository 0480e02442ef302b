import numpy as np
import pytest

from presage.dataset import (
    CsvSchema,
    DataError,
    FeatureSelectionError,
    Instance,
    InstanceStore,
    NormalizerError,
    ParseError,
    SchemaError,
    StoreFormatError,
    UnitSeries,
    WindowGeometry,
    apply_normalizer,
    denormalize_instance,
    fit_normalizer,
    forecast_pairs,
    load_instances,
    load_units,
    make_windows,
    save_instances,
    select_features,
)


def toy_unit(length, features=2, unit_id="u1", seed=0):
    rng = np.random.default_rng(seed)
    return UnitSeries(
        unit_id=unit_id,
        cycles=np.arange(1, length + 1),
        readings=rng.normal(size=(length, features)),
    )


class TestLoadUnits:
    def test_two_unit_toy_csv(self, tmp_path):
        path = tmp_path / "toy.csv"
        path.write_text(
            "unit,cycle,a,b\n"
            "1,1,0.1,1.0\n1,2,0.2,2.0\n1,3,0.3,3.0\n"
            "2,1,9.1,1.5\n2,2,9.2,2.5\n2,3,9.3,3.5\n"
        )
        units = load_units(path)
        assert [u.unit_id for u in units] == ["1", "2"]
        assert all(len(u.cycles) == 3 for u in units)
        np.testing.assert_allclose(units[0].readings[:, 0], [0.1, 0.2, 0.3])

    def test_shuffled_rows_match_sorted_file(self, tmp_path):
        # oracle: write the same rows sorted and compare parse results
        header = "unit,cycle,a\n"
        rows = ["1,3,0.3", "2,1,1.1", "1,1,0.1", "2,2,1.2", "1,2,0.2"]
        (tmp_path / "shuffled.csv").write_text(header + "\n".join(rows) + "\n")
        (tmp_path / "sorted.csv").write_text(header + "\n".join(sorted(rows)) + "\n")
        a = load_units(tmp_path / "shuffled.csv")
        b = load_units(tmp_path / "sorted.csv")
        assert [u.unit_id for u in a] == [u.unit_id for u in b]
        for ua, ub in zip(a, b):
            np.testing.assert_array_equal(ua.readings, ub.readings)

    def test_missing_column_named_in_error(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("unit,cycle,a\n1,1,0.5\n")
        with pytest.raises(SchemaError, match="sensor_9"):
            load_units(path, CsvSchema(sensors=["sensor_9"]))

    def test_non_numeric_cell_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("unit,cycle,a\n1,1,0.5\n1,2,oops\n")
        with pytest.raises(ParseError) as err:
            load_units(path)
        assert err.value.lines == [3]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DataError):
            load_units(path)

    def test_whitespace_delimited_headerless(self, tmp_path):
        path = tmp_path / "plain.txt"
        path.write_text("1 1 0.5 2.0\n1 2 0.6 2.1\n")
        units = load_units(path, CsvSchema(unit=0, cycle=1, sensors=[2, 3]))
        assert len(units) == 1
        np.testing.assert_allclose(units[0].readings, [[0.5, 2.0], [0.6, 2.1]])

    def test_gapped_cycles_rejected(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text("unit,cycle,a\n1,1,0.5\n1,3,0.6\n")
        with pytest.raises(DataError, match="cycles"):
            load_units(path)


class TestSelectFeatures:
    def test_constant_column_dropped(self):
        rng = np.random.default_rng(1)
        readings = rng.normal(size=(30, 3))
        readings[:, 1] = 4.2
        unit = UnitSeries("u", np.arange(1, 31), readings)
        reduced, retained = select_features([unit], 1e-8)
        assert retained == [0, 2]
        assert reduced[0].readings.shape == (30, 2)

    def test_zero_threshold_keeps_everything(self):
        unit = toy_unit(20, features=4)
        _, retained = select_features([unit], 0.0)
        assert retained == [0, 1, 2, 3]

    def test_thirty_two_to_fourteen(self):
        # constructed to mirror a 32-column set with 18 planted constants
        rng = np.random.default_rng(5)
        varying = sorted(rng.choice(32, size=14, replace=False).tolist())
        readings = np.tile(rng.normal(size=32), (60, 1))
        readings[:, varying] += rng.normal(size=(60, 14))
        unit = UnitSeries("u", np.arange(1, 61), readings)
        _, retained = select_features([unit], 1e-8)
        assert retained == varying

    def test_idempotent(self):
        units = [toy_unit(25, features=5, seed=3)]
        units[0].readings[:, 2] = 0.0
        once, retained = select_features(units, 1e-8)
        twice, retained2 = select_features(once, 1e-8)
        assert retained2 == list(range(len(retained)))
        np.testing.assert_array_equal(once[0].readings, twice[0].readings)

    def test_all_dropped_is_an_error(self):
        unit = UnitSeries("u", np.arange(1, 4), np.ones((3, 2)))
        with pytest.raises(FeatureSelectionError):
            select_features([unit], 1e-8)


class TestMakeWindows:
    def test_52_cycle_unit_hand_enumeration(self):
        # hand enumeration: offsets 0,1,2 -> ends 50,51,52 -> RUL 2,1,0
        unit = toy_unit(52)
        geo = WindowGeometry(N=50, J=2, Z=5)
        windows = make_windows(unit, geo, stride=1)
        assert [w.rul_target for w in windows] == [2.0, 1.0, 0.0]
        assert [w.end_cycle for w in windows] == [50, 51, 52]
        np.testing.assert_array_equal(windows[0].values, unit.readings[0:50].T)

    def test_too_short_unit_yields_empty(self):
        assert make_windows(toy_unit(49), WindowGeometry(50, 2, 5)) == []

    def test_stride_two_on_54_cycles(self):
        # hand enumeration: offsets 0,2,4 -> ends 50,52,54
        windows = make_windows(toy_unit(54), WindowGeometry(50, 2, 5), stride=2)
        assert [w.end_cycle for w in windows] == [50, 52, 54]

    def test_window_count_closed_form(self):
        geo = WindowGeometry(N=10, J=2, Z=3)
        for length in (10, 17, 23, 40):
            for stride in (1, 2, 3):
                unit = toy_unit(length, seed=length)
                count = len(make_windows(unit, geo, stride))
                assert count == (length - 10) // stride + 1

    def test_final_window_rul_zero(self):
        windows = make_windows(toy_unit(61), WindowGeometry(50, 2, 5))
        assert windows[-1].rul_target == 0.0

    def test_rul_cap(self):
        windows = make_windows(toy_unit(60), WindowGeometry(50, 2, 5), rul_cap=5.0)
        assert windows[0].rul_target == 5.0
        assert windows[-1].rul_target == 0.0


class TestForecastPairs:
    def test_pairs_require_z_successors(self):
        geo = WindowGeometry(N=10, J=2, Z=3)
        unit = toy_unit(13)
        pairs = forecast_pairs(unit, geo)
        assert len(pairs) == 1  # only the first window has 3 future cycles
        inst, target = pairs[0]
        assert inst.end_cycle == 10
        np.testing.assert_array_equal(target, unit.readings[10:13])

    def test_target_is_true_continuation(self):
        geo = WindowGeometry(N=10, J=2, Z=3)
        unit = toy_unit(20)
        for inst, target in forecast_pairs(unit, geo):
            np.testing.assert_array_equal(target, unit.readings[inst.end_cycle : inst.end_cycle + 3])


class TestNormalizer:
    def geometry(self):
        return WindowGeometry(N=10, J=2, Z=3)

    def test_round_trip(self):
        windows = make_windows(toy_unit(30), self.geometry())
        norm = fit_normalizer(windows)
        back = denormalize_instance(apply_normalizer(windows[0], norm), norm)
        np.testing.assert_allclose(back.values, windows[0].values, atol=1e-9)

    def test_rul_scale_is_max_training_rul(self):
        windows = make_windows(toy_unit(30), self.geometry())
        windows[0] = Instance(windows[0].values, 312.0, "u1", 10)
        assert fit_normalizer(windows).rul_scale == 312.0

    def test_training_set_zero_mean(self):
        windows = make_windows(toy_unit(40, seed=9), self.geometry())
        norm = fit_normalizer(windows)
        pooled = np.concatenate([apply_normalizer(w, norm).values for w in windows], axis=1)
        np.testing.assert_allclose(pooled.mean(axis=1), 0.0, atol=1e-9)
        np.testing.assert_allclose(pooled.std(axis=1), 1.0, atol=1e-9)

    def test_zero_variance_feature_rejected(self):
        windows = make_windows(toy_unit(15), self.geometry())
        for w in windows:
            w.values[1, :] = 3.3
        with pytest.raises(NormalizerError):
            fit_normalizer(windows)


class TestInstanceStore:
    def test_round_trip(self, tmp_path):
        geo = WindowGeometry(N=10, J=2, Z=3)
        windows = make_windows(toy_unit(25, seed=2), geo)
        norm = fit_normalizer(windows)
        store = InstanceStore(windows, norm, [0, 1], geo)
        save_instances(tmp_path / "store", store)
        loaded = load_instances(tmp_path / "store")
        assert loaded.geometry == geo
        assert loaded.retained_indices == [0, 1]
        assert loaded.normalizer.rul_scale == norm.rul_scale
        assert len(loaded.instances) == len(windows)
        for a, b in zip(loaded.instances, windows):
            np.testing.assert_array_equal(a.values, b.values)
            assert (a.rul_target, a.unit_id, a.end_cycle) == (b.rul_target, b.unit_id, b.end_cycle)

    def test_truncated_record_rejected(self, tmp_path):
        geo = WindowGeometry(N=10, J=2, Z=3)
        windows = make_windows(toy_unit(12), geo)
        store = InstanceStore(windows, fit_normalizer(windows), [0, 1], geo)
        save_instances(tmp_path / "store", store)
        victim = tmp_path / "store" / "000000.prsg"
        victim.write_bytes(victim.read_bytes()[:40])
        with pytest.raises(StoreFormatError):
            load_instances(tmp_path / "store")

    def test_missing_sidecar(self, tmp_path):
        (tmp_path / "store").mkdir()
        with pytest.raises(StoreFormatError):
            load_instances(tmp_path / "store")
