"""Smoke test for the leadae Python module.

Build and install first:  pip install --no-build-isolation ./crates/py
"""

import json
import math
import os
import tempfile

import leadae


def score_with_three_onsets(chord=True):
    chords = [{"type": "chord", "beat": 0, "position": 0, "root": 0, "quality": "maj"}]
    doc = {
        "resolution": 12,
        "events": (chords if chord else [])
        + [
            {"type": "note", "beat": b, "position": 0, "pitch": p, "duration": 12, "instrument": 0}
            for b, p in [(0, 60), (0, 64), (0, 67), (1, 62), (2, 64), (2, 59)]
        ],
    }
    return leadae.Score.from_json(json.dumps(doc))


def main():
    score = score_with_three_onsets()
    assert score.note_count == 6 and score.chord_count == 1
    assert leadae.Score.from_json(score.to_json()) == score
    plain = score_with_three_onsets(chord=False)
    assert leadae.Score.from_midi(plain.to_midi()) == plain

    lead = leadae.skyline(score, k=1)
    assert lead.densities() == (50.0, 100.0)
    assert lead.satisfies(k=1)
    assert [p for _, _, p, _, _ in lead.materialize().notes()] == [67, 62, 64]

    probs = leadae.soft_topk([3.0, 1.0, 2.0, -1.0], 2, temperature=0.01)
    assert math.isclose(sum(probs), 2.0, abs_tol=1e-9)
    assert probs[0] > 0.99 and probs[2] > 0.99

    assert leadae.mute(score, score) == 100.0
    report = json.loads(leadae.metrics_report(score, lead.materialize(), lead))
    assert "note_density" in report

    try:
        leadae.skyline(score, rho=1.5)
    except leadae.LeadAeError as e:
        assert str(e).startswith("config")
    else:
        raise AssertionError("rho > 1 must be rejected")

    pairs = leadae.synthetic_corpus(n_pieces=4, seed=1, beats=2)
    pieces = [p for p, _ in pairs]
    model = leadae.LeadAe(layers=1, d_model=16, heads=2, seed=0)
    model, log = model.train(pieces[:3], pieces[3:], epochs=1, rho=0.1)
    assert log
    reduced = model.reduce(pieces[0], rho=0.1)
    assert reduced.satisfies(rho=0.1)
    rebuilt = model.reconstruct(reduced, top_k=1, max_events=16)
    assert len(rebuilt) <= 16
    assert math.isfinite(model.nll(reduced, pieces[0]))

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.ckpt")
        model.save(path)
        again = leadae.LeadAe.load(path)
        # Checkpoints store f32 weights.
        for a, b in zip(again.scores(pieces[0]), model.scores(pieces[0])):
            assert abs(a - b) < 1e-3

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
