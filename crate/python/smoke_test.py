"""Smoke test for the pushadapt Python bindings.

Build and install first, e.g.
    cd crates/py && maturin build --release -o dist && pip install dist/*.whl
then run `python python/smoke_test.py`.
"""

import json
import math
import os
import tempfile

import pushadapt as pa


def check(cond, msg):
    if not cond:
        raise AssertionError(msg)


def main():
    gt = pa.PhysParams.ground_truth()
    check(gt.to_list() == [1.0, 0.005, 1e-4, 1.0], f"ground truth {gt}")
    wrong = pa.PhysParams(2.0, 0.005, 1e-4, 1.0)
    check(wrong.relative_errors(gt)[0] == 1.0, "relative error")

    check(pa.World(gt).state()["object"] == (0.0, 0.0, 0.0), "initial object pose")
    slide = pa.World(gt, pusher=(-1.0, 0.0))
    for _ in range(3):
        s = slide.step(0.0, 0.0)
    check(s["object_velocity"] == (0.0, 0.0, 0.0), "object at rest stays at rest")

    traj = pa.plan_min_snap((0.0, 0.0), [(0.1, 0.0, 0.2, 0.0), (0.2, 0.05, 0.0, 0.0)], 0.3)
    end = traj.sample(traj.total_duration)
    check(math.dist(end["position"], (0.2, 0.05)) < 1e-9, f"keypoint residual {end}")
    check(traj.snap_cost() > 0.0 and traj.segment_count == 2, "snap cost")

    cfg = "[planner]\npopulation = 16\niterations = 2\n[adapt]\npopulation = 10\n"
    ep = pa.run_episode((0.10, 0.0, 0.0), gt, seed=1, config=cfg)
    print(f"episode: success={ep['success']} t={ep['terminal_time']:.3f} s plans={ep['plan_calls']}")
    check(ep["success"], "ground-truth push should succeed")
    buf = ep["buffer"]
    check(len(buf) == 1 and buf.total_steps() == len(ep["times"]) - 1, "buffer size")
    check(pa.replay_cost(gt, buf, config=cfg) <= 1e-10, "self replay")
    check(pa.replay_cost(wrong, buf, config=cfg) > 0.0, "wrong params mismatch")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "buffer.json")
        buf.save(path)
        again = pa.ReplayBuffer.load(path)
        check(pa.replay_cost(gt, again, config=cfg) == pa.replay_cost(gt, buf, config=cfg), "buffer round trip")

    best, cost = pa.optimize_params(buf, config=cfg, seed=0)
    print(f"optimized: {best} cost {cost:.3e}")
    check(math.isfinite(cost), "optimizer cost")

    line = [(0.001 * k, 0.0) for k in range(101)]
    check(abs(pa.trajectory_length(line) - 0.1) < 1e-12, "length")
    check(max(abs(v - 1.0) for v in pa.gaussian_smooth([1.0] * 10, 2.0)) < 1e-12, "smoothing")

    tiny = "runs = 1\nepisodes = 1\neval_tasks = 0\nvalidation_rollouts = 1\n" + cfg
    records = [json.loads(r) for r in pa.run_experiment(tiny)]
    check([r["episode"] for r in records] == [0, 1], "experiment records")
    check("sliding" in pa.default_config("realtime"), "default config")
    print("smoke test passed")


if __name__ == "__main__":
    main()
