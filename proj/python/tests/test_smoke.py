import os
import pathlib

import pytest

import semparse

DATA = pathlib.Path(os.environ.get("SEMPARSE_DATA_DIR", pathlib.Path(__file__).parents[2] / "data"))


def tiny_config(tmp_path, decoder="seq2seq"):
    rows = (DATA / "jobs" / "sample.tsv").read_text().splitlines()[:8]
    train = tmp_path / "tiny.tsv"
    train.write_text("\n".join(rows) + "\n")
    return {
        "decoder": decoder,
        "embed_dim": 24,
        "hidden_dim": 24,
        "dropout_rate": 0.0,
        "learning_rate": 0.02,
        "batch_size": 4,
        "max_epochs": 150,
        "patience": 150,
        "dev_fraction": 0.0,
        "input_min_count": 1,
        "lf_format": "prolog",
        "train_path": str(train),
        "lexicon_path": str(DATA / "jobs" / "lexicon.tsv"),
    }


def test_metrics():
    assert semparse.balanced_f1("(a (b c) (f g))", "(a (b c) (d e))") == pytest.approx(0.5)
    assert semparse.balanced_f1("(a b)", "(a b)") == 1.0
    assert semparse.exact_match("( A B )", "(A B)")
    assert not semparse.exact_match("(A B)", "(A C)")
    assert semparse.exact_match("answer(J, job(J))", "answer(J,job(J))", "prolog")
    assert semparse.normalize_lf("( A  B )") == "(A B)"


def test_load_dataset():
    pairs = semparse.load_dataset(str(DATA / "geo" / "sample.tsv"))
    assert len(pairs) > 50
    assert all(isinstance(u, str) and lf.startswith("(") for u, lf in pairs)
    with pytest.raises(semparse.DataError):
        semparse.load_dataset("/nonexistent.tsv")


def test_bad_config():
    with pytest.raises(semparse.ConfigError):
        semparse.train({"hidden_dim": -1})


@pytest.mark.parametrize("decoder", ["seq2seq", "seq2tree"])
def test_train_predict_evaluate(tmp_path, decoder):
    config = tiny_config(tmp_path, decoder)
    parser, report = semparse.train(config)
    assert parser.decoder == decoder
    assert parser.attention
    assert len(report["epochs"]) >= 1

    pairs = semparse.load_dataset(config["train_path"])
    result = parser.evaluate(pairs)
    assert result["total"] == len(pairs)
    assert result["accuracy"] == 1.0

    prediction = parser.predict(pairs[0][0])
    assert prediction["logical_form"] == pairs[0][1]
    for row in prediction["attention"]:
        assert sum(row) == pytest.approx(1.0)

    path = tmp_path / "model.ckpt"
    parser.save(str(path))
    reloaded = semparse.Parser.load(str(path))
    assert reloaded.checkpoint_bytes == parser.checkpoint_bytes
    assert reloaded.predict(pairs[1][0])["logical_form"] == pairs[1][1]

    again, _ = semparse.train(config)
    assert again.checkpoint_bytes == parser.checkpoint_bytes
