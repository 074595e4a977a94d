import numpy as np
import pytest

from lockout import (
    NetworkSpec,
    PathLog,
    PathPoint,
    export_log,
    feature_importance,
    load_log,
    select_min_validation,
    select_sparsest_within,
)


def make_log(entries):
    """entries: list of (val_loss, nonzero_count) tuples."""
    log = PathLog()
    for i, (val, nnz) in enumerate(entries):
        log.append(PathPoint(iteration=i, phase="descending", t=1.0 - 0.01 * i,
                             train_loss=val, val_loss=val, nonzero_count=nnz))
    return log


class TestSelection:
    def test_min_validation_simple(self):
        log = make_log([(1.0, 5), (0.5, 4), (0.8, 3)])
        assert select_min_validation(log) == 1

    def test_min_validation_tie_prefers_sparser(self):
        log = make_log([(0.5, 5), (0.5, 2), (0.9, 1)])
        assert select_min_validation(log) == 1

    def test_min_validation_tie_prefers_latest(self):
        log = make_log([(0.5, 3), (0.7, 4), (0.5, 3)])
        assert select_min_validation(log) == 2

    def test_skips_unevaluated_points(self):
        log = make_log([(1.0, 5), (np.nan, 4), (0.8, 3)])
        assert select_min_validation(log) == 2

    def test_all_nan_rejected(self):
        log = make_log([(np.nan, 5), (np.nan, 4)])
        with pytest.raises(ValueError):
            select_min_validation(log)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            select_min_validation(PathLog())

    def test_sparsest_within_plateau(self):
        # losses 1.00 / 1.01 / 1.02 with counts 50 / 20 / 5: a 2% band
        # around the minimum admits the first two, and the sparser one wins
        log = make_log([(1.00, 50), (1.01, 20), (1.02, 5)])
        assert select_sparsest_within(log, 0.015) == 1
        assert select_sparsest_within(log, 0.02) == 2
        assert select_sparsest_within(log, 0.0) == 0

    def test_sparsest_negative_tolerance(self):
        log = make_log([(1.0, 3)])
        with pytest.raises(ValueError):
            select_sparsest_within(log, -0.1)

    def test_iterations_strictly_increasing(self):
        log = PathLog()
        log.append(PathPoint(0, "descending", 1.0, 1.0, 1.0, 3))
        with pytest.raises(ValueError):
            log.append(PathPoint(0, "descending", 0.9, 1.0, 1.0, 3))


class TestFeatureImportance:
    def test_single_node(self):
        spec = NetworkSpec((3, 1), ("linear",), biases=(False,))
        got = feature_importance(spec, np.array([0.5, -0.75, 1.0]),
                                 mode="single_node")
        assert got == pytest.approx([0.5, 0.75, 1.0])

    def test_single_node_requires_one_node(self):
        spec = NetworkSpec((2, 2, 1), ("relu", "linear"), biases=(False, False))
        with pytest.raises(ValueError):
            feature_importance(spec, np.zeros(spec.n_params),
                               mode="single_node")

    def test_multi_node_scaled_to_unit_max(self):
        spec = NetworkSpec((2, 2, 1), ("relu", "linear"), biases=(False, False))
        values = np.zeros(spec.n_params)
        values[spec.weight_index(0, 0, 0)] = 1.0
        values[spec.weight_index(0, 1, 0)] = -1.0
        values[spec.weight_index(0, 0, 1)] = 0.5
        got = feature_importance(spec, values)
        assert got == pytest.approx([1.0, 0.25])

    def test_multi_node_all_zero(self):
        spec = NetworkSpec((3, 2, 1), ("relu", "linear"), biases=(False, False))
        got = feature_importance(spec, np.zeros(spec.n_params))
        assert np.all(got == 0.0)

    def test_unknown_mode(self):
        spec = NetworkSpec((2, 1), ("linear",), biases=(False,))
        with pytest.raises(ValueError):
            feature_importance(spec, np.zeros(2), mode="nope")


class TestExport:
    def sample_log(self):
        log = PathLog(config={"penalty": "l1"}, total_crossings=2)
        log.append(PathPoint(0, "reaching_path", 2.5, 1.25, 1.5, 4,
                             snapshot=np.array([1.0, 0.0, -0.5, 0.25])))
        log.append(PathPoint(3, "descending", 2.4, 1.2, np.nan, 3))
        log.annotations["val_min_index"] = 0
        return log

    def test_csv_header_and_rows(self, tmp_path):
        path = tmp_path / "log.csv"
        export_log(self.sample_log(), path, format="csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,phase,t,train_loss,val_loss,nonzero_count"
        assert lines[1] == "0,reaching_path,2.5,1.25,1.5,4"
        assert lines[2] == "3,descending,2.4,1.2,,3"

    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "log.json"
        orig = self.sample_log()
        export_log(orig, path, format="json")
        back = load_log(path)
        assert back.config == orig.config
        assert back.total_crossings == 2
        assert back.annotations == {"val_min_index": 0}
        assert len(back) == 2
        assert back.points[0].t == orig.points[0].t
        assert np.array_equal(back.points[0].snapshot, orig.points[0].snapshot)
        assert back.points[1].snapshot is None
        assert np.isnan(back.points[1].val_loss)

    def test_json_floats_lossless(self, tmp_path):
        log = PathLog()
        log.append(PathPoint(0, "descending", 1.0 / 3.0, np.pi, 2.0 / 7.0, 1))
        path = tmp_path / "log.json"
        export_log(log, path, format="json")
        back = load_log(path)
        assert back.points[0].t == 1.0 / 3.0
        assert back.points[0].train_loss == np.pi
        assert back.points[0].val_loss == 2.0 / 7.0

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            export_log(self.sample_log(), tmp_path / "x", format="xml")
