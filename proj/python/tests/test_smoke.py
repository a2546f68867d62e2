import math

import pytest

import medex


def test_f1_from_published_pairs():
    assert abs(medex.f1_from_pr(0.897, 0.879) - 0.888) <= 0.0005
    assert abs(medex.f1_from_pr(0.894, 0.878) - 0.886) <= 0.0005
    assert medex.f1_from_pr(0.0, 0.5) == 0.0
    with pytest.raises(ValueError):
        medex.f1_from_pr(1.5, 0.2)


def test_bio_round_trip_and_repair():
    scheme = medex.TagScheme.disease_default()
    spans = [(0, 1, 0), (3, 3, 2)]
    tags = medex.spans_to_tags(spans, 5, scheme)
    assert medex.tags_to_spans(tags, scheme) == spans
    i_specific = scheme.tag_index("I-Specific")
    assert medex.tags_to_spans([0, i_specific], scheme, repair=True) == [(1, 1, 0)]
    with pytest.raises(ValueError):
        medex.tags_to_spans([0, i_specific], scheme)


def test_crf_matches_brute_force():
    e = [[0.1, -0.3, 0.7], [1.2, 0.0, -0.5], [0.3, 0.3, 0.9]]
    t = [[0.2, -0.1, 0.0], [0.5, 0.4, -0.2], [-0.3, 0.1, 0.6]]
    start, stop = [0.0, 0.2, -0.1], [0.1, 0.0, 0.3]
    log_z, best, best_score = medex.crf_brute_force(e, t, start, stop)
    assert abs(medex.crf_log_partition(e, t, start, stop) - log_z) < 1e-10
    tags, score = medex.crf_viterbi(e, t, start, stop)
    assert tags == best
    assert abs(score - best_score) < 1e-10


def test_entity_prf_hand_count():
    report = medex.entity_prf([[(1, 2, 0)]], [[(1, 2, 0), (4, 4, 0)]], ["A"])
    assert report["micro"]["precision"] == 0.5
    assert report["micro"]["recall"] == 1.0
    assert math.isclose(report["micro"]["f1"], 2.0 / 3.0)


def test_corpus_generation_is_deterministic():
    a = medex.generate_synthetic_corpus(50, 7)
    b = medex.generate_synthetic_corpus(50, 7)
    assert len(a) == 50
    assert a.to_conll() == b.to_conll()
    splits = [set(a.indices(s)) for s in (medex.Split.train, medex.Split.validation, medex.Split.test)]
    assert sum(len(s) for s in splits) == 50
    assert not (splits[0] & splits[1]) and not (splits[0] & splits[2])


def test_train_evaluate_predict_round_trip(tmp_path):
    corpus = medex.generate_synthetic_corpus(60, 3)
    cfg = medex.EncoderConfig()
    cfg.d_model, cfg.d_ff, cfg.layers = 16, 32, 1
    init = medex.new_model(corpus, cfg, seed=1)

    pre_cfg = medex.PretrainConfig()
    pre_cfg.steps = 5
    pretrained, pre_losses = medex.pretrain(corpus, init, pre_cfg)
    assert len(pre_losses) == 5

    train_cfg = medex.TrainConfig()
    train_cfg.steps = 20
    train_cfg.head = "span"
    tuned, losses = medex.train(corpus, pretrained, train_cfg)
    assert len(losses) == 20 and all(math.isfinite(x) for x in losses)
    assert tuned.head == "span"

    report = medex.evaluate(tuned, corpus, medex.Split.test)
    assert 0.0 <= report["entities"]["micro"]["f1"] <= 1.0

    path = tmp_path / "model.json"
    tuned.save(path)
    loaded = medex.load_checkpoint(path)
    assert loaded.to_json() == tuned.to_json()
    out = medex.predict(loaded, ["lung", "cancer", "was", "treated", "with", "aspirin", "."])
    assert len(out["tags"]) == 7


def test_k_shot_support_is_nested():
    corpus = medex.generate_synthetic_corpus(200, 5)
    small, _, _ = medex.sample_k_shot(corpus, 2, 11)
    large, coverage, feasible = medex.sample_k_shot(corpus, 5, 11)
    assert large[: len(small)] == small
    assert feasible and min(coverage) >= 5
    assert set(large) <= set(corpus.indices(medex.Split.train))
