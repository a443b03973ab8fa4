import json
import os

import pytest

from tokenbridge.cli import main
from tokenbridge.container import FixtureSpec, build_fixture

DATA = os.path.join(os.path.dirname(__file__), "data")
TRACE = os.path.join(DATA, "fixture_trace.jsonl.zst")


@pytest.fixture
def mp4(tmp_path):
    p = tmp_path / "clip.mp4"
    p.write_bytes(build_fixture(FixtureSpec(frame_count=100, timescale=30,
                                            sync_samples=(1, 31, 61, 91))))
    return str(p)


def run_cli(args, capsys):
    rc = main(args)
    out = capsys.readouterr().out
    return rc, json.loads(out)


def test_probe_command(mp4, capsys):
    rc, doc = run_cli(["probe", "--video", mp4], capsys)
    assert rc == 0
    assert doc["frame_count"] == 100
    assert doc["keyframe_indices"] == [0, 30, 60, 90]


def test_sample_command(mp4, capsys):
    rc, doc = run_cli(["sample", "--video", mp4, "--n-min", "2", "--n-max", "3"], capsys)
    assert rc == 0
    assert doc["source"] == "KeyframeSubsample"
    assert doc["count"] == 3
    assert doc["indices"] == [0, 60, 90]


def test_sample_command_writes_out_file(mp4, tmp_path, capsys):
    out = tmp_path / "sample.json"
    rc = main(["sample", "--video", mp4, "--out", str(out)])
    assert rc == 0
    # 100 frames at 30 fps with sparse keyframes: 1 FPS fixed-rate fallback
    doc = json.loads(out.read_text())
    assert doc["source"] == "FixedRateFallback"
    assert doc["indices"] == [0, 30, 60, 90]


def test_calibrate_command(capsys):
    rc, doc = run_cli(["calibrate", "--trace", TRACE, "--role", "small"], capsys)
    assert rc == 0
    assert doc["T"] > 1.0  # fixture was generated overconfident
    assert doc["ece_after"] <= doc["ece_before"]
    assert len(doc["bins"]) == 10


@pytest.mark.filterwarnings("ignore::tokenbridge.bandit.ActionMissing")
def test_train_extractor_command(tmp_path, capsys):
    model = tmp_path / "model.tbx"
    rc = main(["train-extractor", "--profiling", TRACE, "--out", str(model),
               "--config", str(_cfg_file(tmp_path))])
    assert rc == 0
    blob = model.read_bytes()
    assert blob[:4] == b"TBX1"
    from tokenbridge.bandit import load_bundle
    extractor, pcas, state = load_bundle(blob)
    assert len(pcas) == 2
    assert state.action_set == (2, 4, 8)


def _cfg_file(tmp_path):
    p = tmp_path / "tb.conf"
    p.write_text("n_min = 4\nn_max = 12\nextractor_epochs = 10\nseed = 7\n")
    return p


def test_bench_pipeline_command(capsys):
    rc, doc = run_cli(["bench", "pipeline", "--stage-times", "8,4,6", "--batches", "3"],
                      capsys)
    assert rc == 0
    assert doc["makespan_ms"] < doc["sequential_estimate_ms"]
    assert len(doc["starts_ms"]) == 3


def test_simulate_payload_arithmetic(capsys):
    rc, doc = run_cli(["simulate", "--payload-bytes", str(1 << 20), "--direction", "up",
                       "--network", "59,119,9"], capsys)
    assert rc == 0
    assert doc["delay_ms"] == pytest.approx(146.7, abs=0.1)


def test_invalid_config_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.conf"
    bad.write_text("tau_route = 1.5\n")
    with pytest.raises(SystemExit):
        main(["sample", "--video", "x.mp4", "--config", str(bad)])


@pytest.mark.filterwarnings("ignore::tokenbridge.bandit.ActionMissing")
@pytest.mark.filterwarnings("ignore::tokenbridge.calibration.CalibrationDataTooSmall")
def test_run_device_against_live_edge(tmp_path, capsys):
    from tokenbridge.backends import SyntheticProfile
    from tokenbridge.core import SystemConfig
    from tokenbridge.harness import CostModel, SyntheticEnv
    from tokenbridge.transport import EdgeServer

    cfg_file = tmp_path / "tb.conf"
    cfg_file.write_text("extractor_epochs = 10\nseed = 0\n")
    cfg = SystemConfig(extractor_epochs=10, seed=0)
    env = SyntheticEnv(SyntheticProfile(gamma=1.0, actions=cfg.actions), cfg,
                       CostModel(), seed=0)
    server = EdgeServer(env.edge_backend(), temperature=1.0).start()
    try:
        out = tmp_path / "device.json"
        rc = main(["run-device", "--host", server.address[0],
                   "--port", str(server.address[1]), "--queries", "60",
                   "--config", str(cfg_file), "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["n"] == 42  # 60 queries, 3:7 split
        assert doc["accuracy"] is not None
    finally:
        server.stop()
