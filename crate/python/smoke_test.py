"""Smoke test for the Python bindings.

Build and install first:
    pip install --no-build-isolation ./crates/python
then run:
    python python/smoke_test.py
"""

import saleval


def small_config():
    cfg = saleval.Config.from_toml(
        """
seed = 5
samples = 20
batch_size = 20
methods = ["random", "vanilla_gradient", "keyword_oracle"]
ks = [1, 2, 3]

[corpus]
samples = 200
words_per_sample = [12, 20]
filler_vocab = 60

[model]
embedding_dim = 16
layers = 2
heads = 2
ffn_dim = 32
max_len = 32
"""
    )
    cfg.validate()
    return cfg


def main():
    assert saleval.majority_outcome([1, 1, 2], 1) == 1
    assert saleval.majority_outcome([1, 2], 1) == 0
    assert saleval.majority_outcome([0, 0, 1], 1) == 0

    report = saleval.score_table(
        ["random", "lime"], [5, 10], [[0.5, 0.6], [0.7, 0.8]]
    )
    assert len(report["w"]) == 2
    assert report["s"][1] > report["s"][0]

    cfg = small_config()
    corpus = saleval.generate_corpus(cfg)
    assert len(corpus) == 200
    model, train_report = saleval.train(cfg, corpus)
    assert isinstance(train_report, dict)

    sample = next(s for s in corpus if len(s) > 5)
    predicted, probs = model.predict(sample)
    assert 1 <= predicted <= model.num_classes
    assert abs(sum(probs) - 1.0) < 1e-9

    scores = saleval.explain(model, sample, "integrated_gradient", ig_steps=20)
    assert len(scores) == len(sample)
    top = saleval.top_k(sample, scores, 3)
    assert len(top) == 3

    oracle = saleval.keyword_oracle(cfg, sample)
    assert len(oracle) == len(sample)

    restored = saleval.Classifier.from_json(model.to_json())
    assert restored.predict(sample) == (predicted, probs)

    out = saleval.run_experiment(cfg)
    assert out["tasks"] == 20 * 3 * 3
    assert set(out["scores"]) >= {"w", "s", "score_ranks"}
    print("smoke test ok:", out["tasks"], "tasks,", out["annotations"], "annotations")


if __name__ == "__main__":
    main()
