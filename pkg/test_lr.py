import math

import numpy as np
import pytest

from errors import BriError, DatasetError, InsufficientResultsError, UnsupportedRegimeError
from lr import (
    CodedRegression,
    LrConfig,
    centralized_gd,
    compare_training_times,
    derivative_norms,
    load_dataset_csv,
    loss,
    lr_iteration,
    lr_setup,
    power_iteration_lmax,
    synthetic_regression,
    theorem2_bound,
    theorem2_sweep,
    training_thresholds,
    write_training_log,
)


@pytest.fixture(scope="module")
def problem():
    A, y, _ = synthetic_regression(rows=2000, cols=12, parts=10, seed=3)
    return A, y


def small_problem(rows=40, cols=3, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((rows, cols))
    return A, A @ rng.standard_normal(cols) + 0.1 * rng.standard_normal(rows)


class TestSetup:
    def test_share_count(self):
        A, y, w_true = synthetic_regression()
        assert A.shape == (4096, 16) and y.shape == (4096,) and w_true.shape == (16,)
        shares, nodes, state = lr_setup(A, y, LrConfig(parts=10, N=20))
        assert len(shares) == 20 and nodes.zs.size == 20
        assert all(s.block.shape == (410, 16) for s in shares)
        np.testing.assert_array_equal(state.w, np.zeros(16))

    def test_single_part_shares_equal_data(self):
        A, y = small_problem()
        shares, _, _ = lr_setup(A, y, LrConfig(parts=1, N=5, learning_rate=0.01))
        for share in shares:
            np.testing.assert_allclose(share.block, A, rtol=1e-13, atol=1e-13)

    def test_default_learning_rate(self):
        A, y = small_problem()
        _, _, state = lr_setup(A, y, LrConfig(parts=4, N=8))
        lmax = np.linalg.eigvalsh(A.T @ A).max()
        assert state.eta >= 1.0 / lmax * (1 - 1e-12)
        assert state.eta == pytest.approx(1.0 / lmax, rel=0.05)

    def test_zero_matrix_needs_learning_rate(self):
        with pytest.raises(BriError):
            lr_setup(np.zeros((8, 2)), np.ones(8), LrConfig(parts=2, N=4))

    def test_config_validation(self):
        with pytest.raises(BriError):
            LrConfig(learning_rate=-1.0)
        with pytest.raises(BriError):
            LrConfig(S=21, N=20)
        with pytest.raises(BriError):
            LrConfig(gradient_mode="exact")

    def test_power_iteration(self):
        A = np.diag([10.0, 1.0, 1.0, 1.0])
        assert power_iteration_lmax(A) == pytest.approx(100.0, rel=1e-6)


class TestIteration:
    def test_exact_regime(self):
        A, y = small_problem()
        config = LrConfig(parts=2, d=2, N=8, S=3, learning_rate=0.005)
        shares, nodes, state = lr_setup(A, y, config)
        for it in range(5):
            state = lr_iteration(state, shares, nodes, config, {it, it + 1, it + 2}, A, y)
            assert state.grad_errors[-1] < 1e-3
        assert state.iteration == 5 and len(state.loss_history) == 5

    def test_coded_aty_in_exact_regime(self):
        A, y = small_problem()
        config = LrConfig(parts=2, d=2, N=8, S=3, learning_rate=0.005, coded_aty=True)
        _, _, state = lr_setup(A, y, config)
        np.testing.assert_allclose(state.aty, A.T @ y, rtol=1e-6, atol=1e-8)

    def test_zero_learning_rate_keeps_loss(self):
        A, y = small_problem()
        config = LrConfig(parts=4, N=8, learning_rate=0.0)
        shares, nodes, state = lr_setup(A, y, config)
        for _ in range(3):
            state = lr_iteration(state, shares, nodes, config, {0}, A, y)
        assert state.loss_history == (loss(A, y, np.zeros(3)),) * 3

    def test_everyone_straggles(self):
        A, y = small_problem()
        config = LrConfig(parts=2, N=4, S=4, learning_rate=0.01)
        shares, nodes, state = lr_setup(A, y, config)
        with pytest.raises(InsufficientResultsError):
            lr_iteration(state, shares, nodes, config, range(4), A, y)


class TestTraining:
    def test_oracle_matches_centralized(self, problem):
        A, y = problem
        config = LrConfig(parts=10, N=20, learning_rate=1e-4, iterations=30, gradient_mode="oracle")
        state, _ = CodedRegression(A, y, config).train()
        w, history = centralized_gd(A, y, 1e-4, 30)
        assert state.loss_history == history
        np.testing.assert_array_equal(state.w, w)

    def test_centralized_is_monotone(self, problem):
        A, y = problem
        _, history = centralized_gd(A, y, 0.5 / power_iteration_lmax(A), 50)
        assert all(b <= a for a, b in zip(history, history[1:]))

    @pytest.mark.parametrize("S", [3, 9])
    def test_bri_tracks_centralized(self, problem, S):
        A, y = problem
        config = LrConfig(parts=10, d=2, N=20, S=S, iterations=100)
        trainer = CodedRegression(A, y, config)
        state, log = trainer.train()
        _, history = centralized_gd(A, y, trainer.initial.eta, 100)
        assert abs(state.loss_history[-1] - history[-1]) / history[-1] < 0.05
        assert log[-1]["k_used"] == 20 - S
        assert state.loss_history[-1] < state.loss_history[0]

    def test_log_times_accumulate(self, problem):
        A, y = problem
        _, log = CodedRegression(A, y, LrConfig(iterations=10)).train()
        times = [row["wall_or_virtual_time_s"] for row in log]
        assert all(b > a for a, b in zip(times, times[1:]))
        assert [row["iteration"] for row in log] == list(range(1, 11))

    def test_training_log_csv(self, problem, tmp_path):
        A, y = problem
        _, log = CodedRegression(A, y, LrConfig(iterations=3)).train()
        path = write_training_log(log, tmp_path / "training_log.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,loss,grad_error_rel,k_used,wall_or_virtual_time_s"
        assert len(lines) == 4

    def test_bri_trains_fastest(self, problem):
        A, y = problem
        rows = compare_training_times(A, y, LrConfig(parts=10, N=20, S=3, iterations=30))
        times = {row["scheme"]: row["total_time_s"] for row in rows}
        assert list(times) == ["uncoded", "LCC", "EP", "MatDot", "BRI"]
        assert all(times["BRI"] < t for s, t in times.items() if s != "BRI")
        losses = {row["scheme"]: row["final_loss"] for row in rows}
        assert losses["LCC"] == losses["EP"] == losses["uncoded"]

    def test_bri_fastest_on_desk_data(self):
        A, y, _ = synthetic_regression(rows=4096, cols=16)
        bri = {}
        for S in (3, 9):
            rows = compare_training_times(A, y, LrConfig(parts=10, N=20, S=S, iterations=100))
            times = {row["scheme"]: row["total_time_s"] for row in rows}
            assert all(times["BRI"] < t for s, t in times.items() if s != "BRI")
            bri[S] = times["BRI"]
        assert abs(bri[9] - bri[3]) / bri[3] < 0.2

    def test_thresholds_use_gradient_degree(self):
        config = LrConfig(parts=4, N=12)
        resolved = training_thresholds(("LCC", "MatDot", "EP", "uncoded", "BRI"), config)
        assert resolved["LCC"].minimum == 2 * 3 + 1
        assert resolved["MatDot"].minimum == 7
        assert resolved["EP"].minimum == 12
        assert resolved["uncoded"].minimum == 12
        assert resolved["BRI"].flexible

    def test_bacc_is_not_a_training_scheme(self, problem):
        A, y = problem
        with pytest.raises(BriError):
            compare_training_times(A, y, LrConfig(iterations=2), schemes=("BACC",))


class TestStragglerBound:
    def test_bound_examples(self):
        assert theorem2_bound(20, 3, 1, 1.0, 1.0) == pytest.approx(0.0954915, rel=1e-6)
        even = math.sin(5 * math.pi / 40) ** 2 * 1.5
        assert theorem2_bound(20, 4, 1, 1.0, 1.0) == pytest.approx(even, rel=1e-12)

    def test_bound_grows_with_s(self):
        bounds = [theorem2_bound(20, S, 2, 1.0, 1.0) for S in (3, 5, 7)]
        assert bounds == sorted(bounds)

    def test_regime_checks(self):
        with pytest.raises(UnsupportedRegimeError):
            theorem2_bound(20, 18, 1, 1.0, 1.0)
        with pytest.raises(UnsupportedRegimeError):
            theorem2_bound(20, 3, 0, 1.0, 1.0)

    def test_derivative_norms(self):
        xs = np.linspace(-1.0, 1.0, 2001)
        norms = derivative_norms(np.sin(3 * xs), xs, (1, 2))
        assert norms[1] == pytest.approx(3.0, rel=1e-3)
        assert norms[2] == pytest.approx(9.0, rel=1e-2)

    def test_sweep_has_no_violations(self):
        rows = theorem2_sweep(draws=100)
        assert len(rows) == 9
        for row in rows:
            assert row["violations"] == 0
            assert row["max_error"] <= row["bound"]


class TestDataset:
    def test_loads(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("1,2,3\n4,5,6\n", encoding="utf-8")
        X, y = load_dataset_csv(path)
        np.testing.assert_array_equal(X, [[1.0, 2.0], [4.0, 5.0]])
        np.testing.assert_array_equal(y, [3.0, 6.0])

    @pytest.mark.parametrize("text,line", [
        ("1,2,3\n4,x,6\n", 2),
        ("1,2,3\n4,5,6\n7,8\n", 3),
        ("1,2\n3,4,5\n", 2),
        ("", 1),
    ])
    def test_errors_carry_line(self, tmp_path, text, line):
        path = tmp_path / "bad.csv"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(DatasetError) as info:
            load_dataset_csv(path)
        assert info.value.line == line
