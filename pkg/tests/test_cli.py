import csv
import hashlib
import json
import logging
import struct

import numpy as np
import pytest

from attacksig.cli import main
from attacksig.corpus import Waveform, write_wav

from conftest import five_attacker_config


def _sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def _run_pipeline(root, seed=0, jobs=1):
    """Every stage on a 5-attacker corpus of 10 utterances each; returns artifact paths."""
    root.mkdir(parents=True, exist_ok=True)
    cfg = root / "config.json"
    cfg.write_text(json.dumps({"synth": five_attacker_config(n=10).to_dict(), "mel": {"n_mels": 16}}))
    c, s = str(cfg), str(seed)
    a = {k: str(root / v) for k, v in dict(
        manifest="corpus/manifest.jsonl", features="features.csv", feat_report="feat_report.csv",
        ckpt="emb.aemb", log="train_log.csv", emb="emb.jsonl", clusters="clusters.csv", proj="proj",
        clf="clf.aclf", rep="clf_report", pred="pred.csv", grad="grad.json").items()}
    steps = [
        ["synth-corpus", "--config", c, "--seed", s, "--out", str(root / "corpus")],
        ["extract-features", "--manifest", a["manifest"], "--out", a["features"], "--jobs", str(jobs), "--seed", s],
        ["eval-features", "--features", a["features"], "--out", a["feat_report"], "--seed", s],
        ["train-embedder", "--config", c, "--manifest", a["manifest"], "--out", a["ckpt"], "--seed", s,
         "--split", "in-domain:0.9", "--steps", "20", "--hidden", "8", "--d-e", "4", "--log", a["log"]],
        ["embed", "--manifest", a["manifest"], "--checkpoint", a["ckpt"], "--out", a["emb"], "--jobs", str(jobs),
         "--seed", s],
        ["eval-clusters", "--embeddings", a["emb"], "--split", "in-domain:0.8", "--out", a["clusters"], "--seed", s],
        ["project", "--embeddings", a["emb"], "--out", a["proj"], "--seed", s],
        ["train-classifier", "--embeddings", a["emb"], "--split", "in-domain:0.9", "--out", a["clf"],
         "--report", a["rep"], "--epochs", "5", "--seed", s],
        ["classify", "--embeddings", a["emb"], "--checkpoint", a["clf"], "--out", a["pred"], "--seed", s],
        ["grad-check", "--out", a["grad"], "--max-entries", "200", "--seed", s],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    return a


def artifact_files(a):
    files = [a[k] for k in ("manifest", "features", "feat_report", "ckpt", "log", "emb", "clusters", "clf", "pred",
                            "grad")]
    return files + [a["proj"] + ".csv", a["proj"] + ".svg", a["rep"] + ".csv", a["rep"] + ".json"]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("pipeline")
    return _run_pipeline(base / "one"), _run_pipeline(base / "two", jobs=2)


class TestPipeline:
    def test_byte_identical_reruns(self, runs):
        a, b = runs
        for fa, fb in zip(artifact_files(a), artifact_files(b)):
            assert _sha(fa) == _sha(fb), fa

    def test_feature_rows(self, runs):
        rows = open(runs[0]["features"]).read().splitlines()
        manifest = [json.loads(line)["utterance_id"] for line in open(runs[0]["manifest"])]
        assert len(rows) == 51
        assert [r.split(",")[0] for r in rows[1:]] == manifest

    def test_feature_report_shape(self, runs):
        rows = list(csv.reader(open(runs[0]["feat_report"])))
        assert len(rows) == 18 and rows[-1][0] == "AVERAGE"
        assert float(dict(rows[1:])["jitter"]) < 1.0

    def test_embeddings_unit(self, runs):
        for line in open(runs[0]["emb"]):
            v = np.array(json.loads(line)["vector"])
            assert abs(np.linalg.norm(v) - 1.0) < 1e-6

    def test_grad_report(self, runs):
        rep = json.load(open(runs[0]["grad"]))
        assert rep["passed"] and rep["max_rel_error"] < 1e-4


class TestErrors:
    def test_bad_config_field(self, tmp_path, capsys):
        synth = five_attacker_config(n=2).to_dict()
        synth["attackers"][1]["jitter"] = 0.9
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"synth": synth}))
        assert main(["synth-corpus", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "jitter" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"trainnig": {}}))
        assert main(["synth-corpus", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "trainnig" in capsys.readouterr().err

    def test_missing_config_path(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"manifest": str(tmp_path / "nope.jsonl")}))
        assert main(["extract-features", "--config", str(cfg), "--out", str(tmp_path / "f.csv")]) == 2

    def test_default_corpus(self, tmp_path):
        assert main(["synth-corpus", "--out", str(tmp_path), "--utterances", "2"]) == 0
        labels = sorted({json.loads(line)["label"] for line in open(tmp_path / "manifest.jsonl")})
        assert labels == ["A0", "A01", "A02", "A03", "A04", "A05", "A06", "A07"]

    def test_partial_failure_and_degraded(self, tmp_path):
        write_wav(Waveform(np.zeros(8000), 16000), tmp_path / "silent.wav")
        rows = [{"utterance_id": "silent", "path": "silent.wav", "label": "A0"},
                {"utterance_id": "gone", "path": "gone.wav", "label": "A0"}]
        (tmp_path / "m.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows))
        out = tmp_path / "f.csv"
        assert main(["extract-features", "--manifest", str(tmp_path / "m.jsonl"), "--out", str(out)]) == 1
        table = list(csv.DictReader(open(out)))
        assert [r["utterance_id"] for r in table] == ["silent"] and table[0]["degraded"] == "true"

    def test_eval_features_missing_labels(self, tmp_path, runs):
        lines = open(runs[0]["features"]).read().splitlines()
        first = lines[1].split(",")
        first[1] = ""
        (tmp_path / "f.csv").write_text("\n".join([lines[0], ",".join(first)] + lines[2:]) + "\n")
        assert main(["eval-features", "--features", str(tmp_path / "f.csv"), "--out", str(tmp_path / "r.csv")]) == 2

    def test_checkpoint_version_mismatch(self, tmp_path, runs, capsys):
        raw = bytearray(open(runs[0]["ckpt"], "rb").read())
        raw[4:8] = struct.pack("<I", 7)
        (tmp_path / "bad.aemb").write_bytes(bytes(raw))
        code = main(["embed", "--manifest", runs[0]["manifest"], "--checkpoint", str(tmp_path / "bad.aemb"),
                     "--out", str(tmp_path / "e.jsonl")])
        err = capsys.readouterr().err
        assert code == 2 and "expected 1" in err and "found 7" in err

    def test_grad_check_threshold(self, tmp_path):
        assert main(["grad-check", "--max-entries", "200", "--tolerance", "1e-15", "--out", str(tmp_path / "g.json")]) == 1

    def test_out_of_domain_training_log(self, tmp_path, runs, caplog):
        with caplog.at_level(logging.INFO, logger="attacksig"):
            code = main(["train-embedder", "--manifest", runs[0]["manifest"], "--split", "out-of-domain:A02,A04",
                         "--steps", "2", "--hidden", "4", "--d-e", "3", "--n-classes", "2", "--out",
                         str(tmp_path / "e.aemb")])
        assert code == 0
        line = next(r.getMessage() for r in caplog.records if r.getMessage().startswith("training labels"))
        assert "A02" not in line and "A04" not in line and "A01" in line

    def test_out_of_domain_classifier(self, tmp_path, runs):
        rep = tmp_path / "r"
        assert main(["train-classifier", "--embeddings", runs[0]["emb"], "--split", "out-of-domain:A02,A04",
                     "--epochs", "2", "--out", str(tmp_path / "c.aclf"), "--report", str(rep)]) == 0
        assert json.load(open(f"{rep}.json"))["labels"] == ["A02", "A04"]

    def test_unknown_held_out_label(self, tmp_path, runs):
        assert main(["eval-clusters", "--embeddings", runs[0]["emb"], "--split", "out-of-domain:A12",
                     "--out", str(tmp_path / "c.csv")]) == 2
