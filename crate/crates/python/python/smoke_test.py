"""Smoke test for the sparse_slam extension module.

Run after `maturin develop` (or `pip install .`) in crates/python:

    python python/smoke_test.py
"""

import math

import sparse_slam as ss


def test_pose_algebra():
    a = ss.Pose2(1.0, 2.0, 0.5)
    b = ss.Pose2(-0.3, 0.7, -1.2)
    back = a.compose(b).compose(b.inverse())
    assert all(math.isclose(u, v, abs_tol=1e-12) for u, v in zip(back.as_tuple(), a.as_tuple()))
    d = a.between(a.compose(b))
    assert all(math.isclose(u, v, abs_tol=1e-12) for u, v in zip(d.as_tuple(), b.as_tuple()))
    x, y = ss.Pose2(0.0, 0.0, math.pi / 2).transform_point(1.0, 0.0)
    assert math.isclose(x, 0.0, abs_tol=1e-12) and math.isclose(y, 1.0)


def test_config_rejects_bad_values():
    cfg = ss.Config(beams=11, kernel="k5")
    assert cfg.beams == 11 and cfg.kernel == "k5"
    try:
        cfg.set("beams", "many")
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")


def test_synthetic_run_beats_dead_reckoning():
    cfg = ss.Config(format="synthetic", deterministic=True, seed=1)
    log = ss.Log.load(cfg)
    result = ss.run(cfg, log)
    assert result.scans == len(log)
    assert len(result.trajectory) == len(log)
    relations = log.random_relations(500, 1)
    slam = ss.evaluate(result.trajectory, relations)
    dr = ss.evaluate(log.dead_reckoning(), relations)
    assert slam[0] < dr[0], (slam, dr)
    truth = ss.evaluate(log.ground_truth(), relations)
    assert truth[0] < 1e-9
    assert result.map_pgm().startswith(b"P5")


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"ok {name}")
