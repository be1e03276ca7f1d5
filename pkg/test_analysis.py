import numpy as np
import pytest

from analysis import (
    berrut_report,
    complexity_counts,
    convergence_slope,
    error_series,
    format_mse_table,
    measured_eval_multiplies,
    mse,
    mse_table,
    relative_frobenius_error,
    sample_nodes,
    sin_experiment,
    theorem1_check,
    write_mse_table,
)
from errors import BriError, DegreeError, ShapeMismatchError

TABLE_NS = (10, 15, 20, 25)


class TestMetrics:
    def test_mse(self):
        assert mse([1.0, 2.0], [1.0, 4.0]) == 2.0
        assert mse(np.ones((2, 2)), np.ones((2, 2))) == 0.0

    def test_mse_shapes(self):
        with pytest.raises(ShapeMismatchError):
            mse([1.0], [1.0, 2.0])
        with pytest.raises(ShapeMismatchError):
            mse([], [])

    def test_relative_frobenius(self):
        truth = [np.eye(2), np.eye(2)]
        assert relative_frobenius_error(truth, truth) == 0.0
        assert relative_frobenius_error([2 * np.eye(2)] * 2, truth) == pytest.approx(1.0)

    def test_sample_nodes(self):
        np.testing.assert_allclose(sample_nodes(3, (-8.0, 8.0)), [-8.0, 0.0, 8.0])
        cheb = sample_nodes(5, (-1.0, 1.0), "chebyshev2")
        np.testing.assert_allclose(cheb, -np.cos(np.arange(5) * np.pi / 4), atol=1e-15)
        with pytest.raises(BriError):
            sample_nodes(5, (-1.0, 1.0), "random")


class TestSinExperiment:
    def test_bands(self):
        assert sin_experiment(20, 2).mse <= 1e-4
        assert sin_experiment(25, 5).mse <= 1e-6

    def test_blending_beats_berrut(self):
        for n in (15, 20, 25):
            mses = [sin_experiment(n, d).mse for d in range(0, 10)]
            assert min(mses[1:]) < mses[0]

    @pytest.mark.parametrize("d", [0, 1])
    def test_non_increasing_in_n(self, d):
        mses = [sin_experiment(n, d).mse for n in TABLE_NS]
        assert all(b <= a for a, b in zip(mses, mses[1:]))

    def test_berrut_matches_degree_zero(self):
        for n in (10, 25):
            assert berrut_report(n).mse == pytest.approx(sin_experiment(n, 0).mse, rel=1e-8)

    @pytest.mark.parametrize("scheme", ["equispaced", "chebyshev2"])
    def test_report_fields(self, scheme):
        report = sin_experiment(15, 3, node_scheme=scheme)
        assert (report.n, report.d, report.node_scheme, report.grid) == (15, 3, scheme, 2000)
        assert report.mse >= 0.0 and report.max_abs >= 0.0

    def test_invalid_arguments(self):
        with pytest.raises(DegreeError):
            sin_experiment(5, 5)
        with pytest.raises(BriError):
            sin_experiment(10, 2, grid=50)


class TestErrorSeries:
    def test_best_degree_gains_an_order(self):
        series = error_series(n=8)
        assert [r.d for r in series] == list(range(9))
        assert all(r.n == 8 for r in series)
        assert min(r.max_abs for r in series) <= series[0].max_abs / 10

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_convergence_order(self, d):
        assert convergence_slope(d) <= -(d + 1) + 0.5

    @pytest.mark.parametrize("d,n_points", [(1, 20), (2, 20), (3, 40)])
    def test_theorem1_holds(self, d, n_points):
        empirical, bound = theorem1_check(d, n_points)
        assert empirical <= bound


class TestComplexity:
    def test_desk_counts(self):
        counts = complexity_counts(m=9, d=2, s=100, t=100, N=20, k=17)
        assert counts.encode_per_worker == 240_000
        assert counts.encode_total == 4_800_000
        assert counts.decode_master == 480_000
        assert counts.master_to_worker == 10_000
        assert counts.worker_to_master == 170_000

    def test_invalid(self):
        with pytest.raises(DegreeError):
            complexity_counts(m=2, d=3, s=1, t=1, N=4, k=4)
        with pytest.raises(BriError):
            complexity_counts(m=2, d=1, s=0, t=1, N=4, k=4)

    @pytest.mark.parametrize("m,d", [(9, 0), (9, 2), (5, 5), (12, 3)])
    def test_measured_within_factor_two(self, m, d):
        predicted = complexity_counts(m, d, 4, 3, N=20, k=m + 1).encode_per_worker
        measured = measured_eval_multiplies(m, d, 4, 3)
        assert predicted <= measured <= 2 * predicted


class TestTables:
    def test_csv_layout(self, tmp_path):
        reports = mse_table((10, 15), (0, 1))
        path = write_mse_table(reports, tmp_path / "mse_table.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "n,d,mse,max_abs,node_scheme"
        assert len(lines) == 5
        assert lines[1].startswith("10,0,")

    def test_pivot_layout(self):
        text = format_mse_table(mse_table((10, 15), (0, 1, 2)))
        header, *rows = text.splitlines()
        assert "10" in header and "15" in header
        assert len(rows) >= 3
