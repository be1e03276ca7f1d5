import numpy as np
import pytest

from codec import CodecConfig, encode, make_nodes
from errors import BriError, ShapeMismatchError
from tasks import TaskSpec, apply_task, partition_rows, run_workers


class TestApplyTask:
    def test_gram_identity(self):
        np.testing.assert_array_equal(apply_task(TaskSpec("gram"), np.eye(2)), np.eye(2))

    def test_gram_example(self):
        X = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(apply_task(TaskSpec(), X), [[10.0, 14.0], [14.0, 20.0]])

    def test_matvec(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((7, 3))
        w = rng.standard_normal(3)
        got = apply_task(TaskSpec("matvec"), X, w)
        assert got.shape == (3, 1)
        np.testing.assert_allclose(got[:, 0], X.T @ X @ w, rtol=1e-12)

    def test_poly_horner(self):
        X = np.array([[2.0, 1.0], [0.0, 3.0]])
        got = apply_task(TaskSpec("poly", (1.0, -2.0, 0.5)), X)
        want = np.eye(2) - 2.0 * X + 0.5 * X @ X
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_degrees(self):
        assert TaskSpec("gram").degree == 2
        assert TaskSpec("matvec").degree == 2
        assert TaskSpec("poly", (1.0, 0.0, 0.0, 4.0, 0.0)).degree == 3

    def test_poly_needs_degree(self):
        with pytest.raises(BriError):
            TaskSpec("poly", (5.0,))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            TaskSpec("cube")

    def test_shape_errors(self):
        with pytest.raises(ShapeMismatchError):
            apply_task(TaskSpec("matvec"), np.eye(3))
        with pytest.raises(ShapeMismatchError):
            apply_task(TaskSpec("matvec"), np.eye(3), np.ones(2))
        with pytest.raises(ShapeMismatchError):
            apply_task(TaskSpec("gram"), np.eye(3), np.ones(3))
        with pytest.raises(ShapeMismatchError):
            apply_task(TaskSpec("poly", (0.0, 1.0)), np.ones((2, 3)))
        with pytest.raises(ShapeMismatchError):
            apply_task(TaskSpec("gram"), np.ones(3))


class TestPartitionRows:
    def test_even_split(self):
        blocks = partition_rows(np.arange(12.0).reshape(6, 2), 3)
        assert [b.shape for b in blocks] == [(2, 2)] * 3
        np.testing.assert_array_equal(np.vstack(blocks), np.arange(12.0).reshape(6, 2))

    def test_padding(self):
        blocks = partition_rows(np.ones((5, 2)), 2)
        assert [b.shape for b in blocks] == [(3, 2), (3, 2)]
        np.testing.assert_array_equal(blocks[1][-1], [0.0, 0.0])
        assert blocks[1][:2].sum() == 4.0

    def test_more_parts_than_rows(self):
        with pytest.warns(UserWarning):
            blocks = partition_rows(np.ones((2, 3)), 4)
        assert len(blocks) == 4
        assert blocks[2].sum() == 0.0 and blocks[3].sum() == 0.0

    def test_gram_is_additive(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((23, 4))
        total = sum(b.T @ b for b in partition_rows(A, 5))
        np.testing.assert_allclose(total, A.T @ A, rtol=1e-12)

    def test_invalid_parts(self):
        with pytest.raises(BriError):
            partition_rows(np.ones((4, 2)), 0)


class TestRunWorkers:
    def test_results_carry_ids_and_times(self):
        nodes = make_nodes(CodecConfig(m=1, N=4))
        shares = encode([np.eye(2), 2 * np.eye(2)], nodes, 1)
        results = run_workers(shares, TaskSpec(), arrival_times={2: 1.5})
        assert [r.worker_id for r in results] == [0, 1, 2, 3]
        assert [r.arrival_time for r in results] == [0.0, 0.0, 1.5, 0.0]
        for share, result in zip(shares, results):
            assert result.z == share.z
            np.testing.assert_allclose(result.block, share.block.T @ share.block)
