import time

import numpy as np

from analysis import sin_experiment
from codec import CodecConfig, gram_pipeline, lcc_decode, lcc_encode, make_nodes
from config import DEFAULT_PARTS, DEFAULT_WORKERS
from lr import CodedRegression, LrConfig, synthetic_regression
from sim import DelayModel, SimScenario, Simulator, relative_improvement
from tasks import TaskSpec, run_workers


def test_interpolation():
    """Sin interpolation error at the desk setting"""
    print("Testing FH interpolation...")
    report = sin_experiment(20, 2)

    if report.mse <= 1e-4:
        print("✓ Interpolation working")
        print(f"  n=20, d=2 MSE: {report.mse:.3e}")
        return True
    else:
        print(f"✗ Interpolation MSE too large: {report.mse:.3e}")
        return False


def test_bri_codec():
    """Encode, square and decode a smooth family of blocks"""
    print("Testing BRI codec...")
    config = CodecConfig(m=DEFAULT_PARTS - 1, N=DEFAULT_WORKERS)
    nodes = make_nodes(config)
    rng = np.random.default_rng(0)
    B, C = rng.standard_normal((8, 6)), rng.standard_normal((8, 6))
    blocks = [B + np.cos(a) * C for a in nodes.alphas]

    decoded, _ = gram_pipeline(blocks, config, returned=range(DEFAULT_WORKERS - 3))
    truth = np.array([X.T @ X for X in blocks])
    err = np.linalg.norm(np.array(decoded) - truth) / np.linalg.norm(truth)

    if np.isfinite(err) and err < 0.05:
        print("✓ BRI codec working")
        print(f"  Relative error with 3 stragglers: {err:.3e}")
        return True
    else:
        print(f"✗ BRI codec error: {err:.3e}")
        return False


def test_lcc_codec():
    """LCC recovers X^T X exactly at its threshold"""
    print("Testing LCC baseline...")
    nodes = make_nodes(CodecConfig(m=2, N=8))
    rng = np.random.default_rng(1)
    blocks = [rng.standard_normal((4, 4)) for _ in range(3)]
    results = run_workers(lcc_encode(blocks, nodes), TaskSpec())
    decoded = lcc_decode(results[:5], nodes, f_degree=2)
    err = max(np.abs(got - X.T @ X).max() for got, X in zip(decoded, blocks))

    if err < 1e-6:
        print("✓ LCC working")
        return True
    else:
        print(f"✗ LCC error: {err:.3e}")
        return False


def test_simulation():
    """Small straggler simulation"""
    print("Testing straggler simulation...")
    scenario = SimScenario(
        N=DEFAULT_WORKERS, m=DEFAULT_PARTS - 1, trials=10, block_shape=(10, 10),
        delay=DelayModel(base=1.0, straggler_count=3, extra_params=(0.5, 1.5)),
        thresholds={"EP": DEFAULT_WORKERS})

    start = time.time()
    records = Simulator(scenario).run()
    gain = relative_improvement(records, "BRI", "EP", 0.8)

    if gain > 0:
        print("✓ Simulation working")
        print(f"  BRI vs EP at CDF=0.8: {gain:+.1%} ({time.time() - start:.2f}s)")
        return True
    else:
        print(f"✗ BRI did not beat EP: {gain:+.1%}")
        return False


def test_full_workflow():
    """Coded regression end to end"""
    print("Testing full workflow...")
    A, y, _ = synthetic_regression(rows=1000, cols=8)
    state, log = CodedRegression(A, y, LrConfig(iterations=20)).train()

    if state.loss_history[-1] < state.loss_history[0]:
        print("✓ Training completed")
        print(f"  Loss {state.loss_history[0]:.4g} -> {state.loss_history[-1]:.4g}, "
              f"virtual time {log[-1]['wall_or_virtual_time_s']:.4g}s")
        return True
    else:
        print("✗ Loss did not decrease")
        return False


def run_all_tests():
    """Run all tests"""
    print("=== BRI Coded Computing Smoke Tests ===\n")

    tests = [
        test_interpolation,
        test_bri_codec,
        test_lcc_codec,
        test_simulation,
        test_full_workflow
    ]

    results = []
    for test in tests:
        try:
            result = test()
            results.append(result)
        except Exception as e:
            print(f"✗ Test failed with exception: {e}")
            results.append(False)
        print()

    print("=== Test Summary ===")
    print(f"Passed: {sum(results)}/{len(results)}")

    if all(results):
        print("🎉 All tests passed! System ready for experiments.")
    else:
        print("⚠️  Some tests failed. Check configuration.")


if __name__ == "__main__":
    run_all_tests()
