"""Smoke test for the capgap extension module.

Build and install first:  maturin develop --release  (from crates/python)
"""

import math
import os
import tempfile

import capgap


def main():
    assert capgap.tokenize("A red-brick Wall!") == ["a", "red", "brick", "wall"]

    tf = capgap.TfIdf.fit(["red cat", "blue cat", "red red dog"], ngram_min=1, ngram_max=1)
    assert tf.idf("cat") == math.log(4 / 3) + 1
    weights = tf.transform("red cat")
    assert abs(sum(w * w for w in weights.values()) - 1) < 1e-12

    corpus = capgap.CaptionCorpus.fingerprint(n_images=300, seed=1)
    assert corpus.labels == ["alpha", "beta", "gamma"]
    assert corpus.class_counts() == [900, 900, 900]
    split = corpus.grouped_split(train_frac=0.8, seed=2)
    assert split.n_train == 240 and split.n_test == 60

    clf = capgap.TextClassifier.fit(corpus, split, seed=3)
    base = clf.evaluate(corpus, split)["overall_accuracy"]
    letters = clf.evaluate(corpus, split, transform="shuffle-letters")["overall_accuracy"]
    assert base > 0.9 and letters < 0.5, (base, letters)
    first = corpus.records()[0]
    assert clf.predict(first["text"]) in corpus.labels

    assert capgap.count_colors("a dark red and crimson scarf") == (0, 2)
    assert capgap.composition_flags("in the foreground")["spatial_layers"]

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "emb.jsonl")
        capgap.write_gaussian_embeddings(path, 200, separation=5.0, seed=4)
        emb_split_path = os.path.join(d, "split.json")
        ids = capgap.CaptionCorpus.from_records(
            [
                {
                    "caption_id": f"g{k}-{i:05}",
                    "image_id": f"g{k}-{i:05}",
                    "prompt_tier": "detailed",
                    "source_label": f"class{k}",
                    "text": "x",
                }
                for k in range(3)
                for i in range(200)
            ]
        )
        ids.grouped_split(0.8, 5).save(emb_split_path)
        report = capgap.probe_embeddings(path, capgap.Split.load(emb_split_path))
        assert report["metrics"]["overall_accuracy"] > 0.97, report["metrics"]

    err = capgap.grad_check([[0.1, -0.2], [0.3, 0.0]], [0.0, 0.1], [[1.0, 2.0], [-1.0, 0.5]], [0, 1], 0.01, 0.1)
    assert err < 1e-4, err
    assert capgap.reference_values()["match"]["total"] == 53.01
    print(f"ok: baseline {base:.3f}, shuffle-letters {letters:.3f}")


if __name__ == "__main__":
    main()
