import numpy as np
import pytest

from tokenbridge.backends import (
    MissingRecord,
    Role,
    SyntheticProfile,
    TraceBackend,
    synthetic_answer,
    trace_answer,
    validate_trace_record,
    write_trace,
)
from tokenbridge.calibration import constrained_softmax, ece
from tokenbridge.core import Query


def test_determinism_per_seed():
    p = SyntheticProfile()
    a = p.response("q1", Role.SMALL, None, seed=3)
    b = p.response("q1", Role.SMALL, None, seed=3)
    assert a.logits == b.logits
    c = p.response("q1", Role.SMALL, None, seed=4)
    assert a.logits != c.logits
    d1 = p.response("q1", Role.LARGE, 8, seed=3)
    d2 = p.response("q1", Role.LARGE, 8, seed=3)
    assert d1.logits == d2.logits


def test_calibrated_by_construction():
    p = SyntheticProfile(gamma=1.0)
    preds = []
    for i in range(10000):
        r = p.response(f"c{i}", Role.SMALL, None, seed=0)
        d = constrained_softmax(r.logits, 1.0)
        preds.append((d.confidence, d.argmax() == r.ground_truth_index))
    assert ece(preds).ece < 0.02


def test_correct_flag_matches_argmax():
    p = SyntheticProfile()
    for i in range(500):
        r = p.response(f"m{i}", Role.LARGE, 16, seed=2)
        assert r.correct == (int(np.argmax(r.logits.values)) == r.ground_truth_index)


def test_inverted_u_peaks_at_sixteen():
    p = SyntheticProfile(peak_density=16, density_curve="inverted_u")
    accs = {}
    for a in p.actions:
        accs[a] = np.mean([p.response(f"u{i}", Role.LARGE, a, 7).correct
                           for i in range(4000)])
    best = max(accs, key=accs.get)
    assert best in (8, 16, 32)  # peak at 16 within one neighboring level
    assert accs[2] < accs[16] and accs[32] < 0.99


def test_monotone_curve_increases():
    p = SyntheticProfile(density_curve="monotone", curve_drop=0.06)
    accs = [np.mean([p.response(f"m{i}", Role.LARGE, a, 7).correct for i in range(2500)])
            for a in p.actions]
    assert accs[-1] > accs[0]


def test_always_correct_profile_routes_everything_local():
    from tokenbridge.router import route
    p = SyntheticProfile(small_acc=(1.0, 1.0), beta_concentration=400.0, gamma=1.0)
    accepted = 0
    correct = 0
    n = 800
    for i in range(n):
        r = p.response(f"f{i}", Role.SMALL, None, seed=1)
        correct += r.correct
        d = constrained_softmax(r.logits, 1.0)
        accepted += route(d, 0.6).accepted
    assert correct / n >= 0.995
    assert accepted / n > 0.95


def test_agreement_tracks_target():
    p = SyntheticProfile(agreement_target=0.70)
    agree = 0
    n = 10000
    for i in range(n):
        s = p.response(f"a{i}", Role.SMALL, None, seed=9)
        l = p.response(f"a{i}", Role.LARGE, 16, seed=9)
        agree += int(np.argmax(s.logits.values)) == int(np.argmax(l.logits.values))
    assert abs(agree / n - 0.70) <= 0.03


def test_identical_seed_identical_episode_stream():
    p = SyntheticProfile(agreement_target=None)
    stream1 = [p.response(f"e{i}", Role.LARGE, 4, seed=5).logits.values for i in range(50)]
    stream2 = [p.response(f"e{i}", Role.LARGE, 4, seed=5).logits.values for i in range(50)]
    assert stream1 == stream2


def test_synthetic_answer_wrapper():
    p = SyntheticProfile()
    q = Query("qq", "v", "?", ("A", "B", "C", "D"))
    r = synthetic_answer(p, q, Role.SMALL, None, seed=0)
    assert len(r.logits.values) == 4
    assert r.h_txt is not None and r.h_txt.shape == (p.embed_dim,)


def test_tokens_complexity_tracks_hidden_state():
    from tokenbridge.context import spectral_entropy_norm
    p = SyntheticProfile()
    lows, highs = [], []
    for i in range(60):
        qid = f"t{i}"
        psi = p.hidden(qid, 0)["psi"]
        score = spectral_entropy_norm(p.raw_tokens(qid, 0, n_frames=4).rows())
        if psi < 0.3:
            lows.append(score)
        elif psi > 0.7:
            highs.append(score)
    assert lows and highs
    assert np.mean(highs) > np.mean(lows)


# -- trace format -------------------------------------------------------------------

def _records():
    return [
        {"qid": "q1", "role": "small", "density": None, "options": ["A", "B"],
         "gt": "A", "logits": [2.0, 0.1], "h_txt": [0.1, 0.2],
         "h_vis": [[1.0, 0.0], [0.0, 1.0]], "n_frames": 2, "t_ms": 12.5},
        {"qid": "q1", "role": "large", "density": 8, "options": ["A", "B"],
         "gt": "A", "logits": [0.4, 0.6], "h_txt": [], "h_vis": [],
         "n_frames": 2, "t_ms": 80.0},
    ]


def test_trace_round_trip(tmp_path):
    path = tmp_path / "t.jsonl"
    write_trace(str(path), _records())
    first = path.read_text().splitlines()[0]
    assert "schema" in first
    tb = TraceBackend(str(path))
    r = tb.answer("q1", Role.SMALL, None)
    assert r.logits.values == (2.0, 0.1)
    assert r.ground_truth_index == 0
    assert r.h_vis.shape == (2, 2)
    big = tb.answer("q1", Role.LARGE, 8)
    assert big.sim_ms == 80.0
    assert big.correct is False


def test_trace_zst_round_trip(tmp_path):
    path = tmp_path / "t.jsonl.zst"
    write_trace(str(path), _records())
    assert path.read_bytes()[:4] == b"\x28\xb5\x2f\xfd"  # zstd frame magic
    tb = TraceBackend(str(path))
    assert tb.answer("q1", Role.LARGE, 8).logits.values == (0.4, 0.6)


def test_missing_record(tmp_path):
    path = tmp_path / "t.jsonl"
    write_trace(str(path), _records())
    tb = TraceBackend(str(path))
    with pytest.raises(MissingRecord):
        trace_answer(tb, "q1", Role.LARGE, 32)
    with pytest.raises(MissingRecord):
        trace_answer(tb, "q404", Role.SMALL, None)


def test_validate_trace_record():
    good = _records()[0]
    assert validate_trace_record(good) == []
    assert validate_trace_record({k: v for k, v in good.items() if k != "logits"})
    bad = dict(good, role="medium")
    assert validate_trace_record(bad)
    bad = dict(good, logits=[1.0])
    assert validate_trace_record(bad)


def test_trace_densities_and_query_ids(tmp_path):
    path = tmp_path / "t.jsonl"
    write_trace(str(path), _records())
    tb = TraceBackend(str(path))
    assert tb.densities() == (8,)
    assert tb.query_ids() == ["q1"]
