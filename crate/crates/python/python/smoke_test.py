"""Smoke test for the reconsim Python extension.

Build and run:
    maturin develop -m crates/python/Cargo.toml && python crates/python/python/smoke_test.py
or copy target/release/libreconsim_py.so to reconsim_py.so on PYTHONPATH.
"""

import tempfile
from pathlib import Path

import reconsim_py as rs


def main():
    actions = rs.enumerate_actions(5, 2, 5)
    assert len(actions) == 26, len(actions)
    assert actions[0] == "00011" and actions[-1] == "11111"

    assert rs.quality_score(200.0, 400.0) == 0.5
    assert rs.latency_score(0.5, 1.0) == 0.5
    assert abs(rs.camera_reward(200.0, 0.5) - 0.5) < 1e-12
    assert rs.server_reward(1.5, 3.0) == 0.5
    assert rs.is_reliable(400.0, 3.0, 1.0)
    assert not rs.is_reliable(399.0, 1.0, 0.5)

    cfg = rs.Config.camera_comparison().with_seed(3)
    cfg.n_frames = 400
    cams, srvs = rs.generate_traces(cfg)
    assert len(cams) == 400 and len(cams[0]) == 5
    assert len(srvs) == 400 and len(srvs[0]) == 4

    ep = rs.run_episode(cfg)
    assert ep.frames == 400
    assert ep.reliable_frames == sum(ep.reliable)
    assert sum(ep.server_histogram().values()) == 400
    assert rs.run_episode(cfg).frame_log_csv() == ep.frame_log_csv()

    cfg.server_policy = "round_robin"
    cfg.camera_policy = "random"
    ep = rs.run_episode(cfg)
    assert ep.servers[:8] == [0, 1, 2, 3, 0, 1, 2, 3]

    try:
        rs.Config("bogus = 1")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown key accepted")

    with tempfile.TemporaryDirectory() as d:
        ep.write(d)
        assert (Path(d) / "frames.csv").exists()
        table = rs.compare(cfg, "server", Path(d) / "cmp")
        assert table.count("\n") == 2 + 4

    print("smoke test passed:", ep)


if __name__ == "__main__":
    main()
