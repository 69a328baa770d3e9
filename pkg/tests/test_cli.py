"""CLI pipeline tests: each stage end to end on a small synthetic log."""

import json

import numpy as np
import pytest

from freqrec.cli import main
from freqrec.config import DEFAULTS, fingerprint, load_config
from freqrec.errors import InputError
from freqrec.model.embeddings import load_external


def run(argv):
    return main(argv)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Full pipeline artifacts shared by the stage tests."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg = {
        "synth": {"users": 60, "items": 40, "mean_length": 12, "rho": 0.5, "seed": 1},
        "model": {"d_id": 16, "d_text": 8, "d_model": 32, "mlp_hidden": 64},
        "backbone": {"layers": 2},
        "pretrain": {"epochs": 2},
        "training": {"epochs": 2, "n_negatives": 16},
        "eval": {"n_candidates": 20},
        "analysis": {"theorem_trials": 50},
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    paths = {
        "root": root, "config": str(cfg_path),
        "data": str(root / "log.tsv"),
        "graph": str(root / "graph.tsv"),
        "id": str(root / "id.emb"), "text": str(root / "text.emb"),
        "id_filtered": str(root / "id_filtered.emb"),
        "ckpt": str(root / "model.ckpt"),
    }
    base = ["--config", paths["config"]]
    assert run(base + ["synth", "--out", paths["data"]]) == 0
    assert run(base + ["build-graph", "--data", paths["data"],
                       "--out", paths["graph"]]) == 0
    assert run(base + ["pretrain", "--data", paths["data"],
                       "--out-id", paths["id"], "--out-text", paths["text"]]) == 0
    assert run(base + ["glpf", "--graph", paths["graph"],
                       "--embeddings", paths["id"], "--out", paths["id_filtered"]]) == 0
    assert run(base + ["train", "--data", paths["data"], "--id", paths["id_filtered"],
                       "--text", paths["text"], "--out", paths["ckpt"]]) == 0
    return paths


class TestStages:
    def test_synth_deterministic(self, tmp_path, workdir):
        a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
        flags = ["synth", "--users", "200", "--rho", "0.5", "--seed", "1"]
        assert run(flags + ["--out", str(a)]) == 0
        assert run(flags + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_glpf_alpha_zero_identity(self, tmp_path, workdir):
        out = tmp_path / "id0.emb"
        base = ["--config", workdir["config"]]
        assert run(base + ["glpf", "--alpha", "0", "--graph", workdir["graph"],
                           "--embeddings", workdir["id"], "--out", str(out)]) == 0
        original = load_external(workdir["id"])
        filtered = load_external(str(out))
        np.testing.assert_array_equal(filtered.rows, original.rows)

    def test_evaluate_and_baselines(self, tmp_path, workdir, capsys):
        out = tmp_path / "metrics.json"
        per_user = tmp_path / "per_user.csv"
        code = run(["--config", workdir["config"],
                    "evaluate", "--data", workdir["data"], "--id", workdir["id_filtered"],
                    "--text", workdir["text"], "--checkpoint", workdir["ckpt"],
                    "--graph", workdir["graph"],
                    "--out", str(out), "--per-user", str(per_user),
                    "--with-baselines"])
        assert code == 0
        payload = json.loads(out.read_text())
        assert 0.0 <= payload["metrics"]["ndcg"] <= 1.0
        assert "random" in payload["baselines"]
        assert payload["config"]["model"]["d_id"] == 16
        assert per_user.read_text().startswith("user,rank,ndcg,recall")

    def test_evaluate_rejects_fingerprint_mismatch(self, tmp_path, workdir):
        out = tmp_path / "m.json"
        args = ["--config", workdir["config"], "--set", "eval.seed=99",
                "evaluate", "--data", workdir["data"], "--id", workdir["id_filtered"],
                "--text", workdir["text"], "--checkpoint", workdir["ckpt"],
                "--out", str(out)]
        assert run(args) == 1          # fingerprint changed by the override
        assert not out.exists()        # no partial output
        assert run(args + ["--force"]) == 0

    def test_analyze_both_modes(self, tmp_path, workdir):
        out = tmp_path / "analysis.json"
        prefix = str(tmp_path / "profile")
        code = run(["--config", workdir["config"],
                    "analyze", "--data", workdir["data"], "--id", workdir["id_filtered"],
                    "--text", workdir["text"], "--graph", workdir["graph"],
                    "--tfm", "both", "--out-prefix", prefix, "--out", str(out)])
        assert code == 0
        payload = json.loads(out.read_text())
        assert set(payload["modes"]) == {"on", "off"}
        for mode in ("on", "off"):
            csv_path = payload["modes"][mode]["profile_csv"]
            assert payload["fingerprint"] in csv_path
            with open(csv_path) as fh:
                assert fh.readline().strip() == "layer,band,energy,share"

    def test_theorem_probe(self, tmp_path, workdir):
        out = tmp_path / "thm.json"
        code = run(["--config", workdir["config"],
                    "theorem-probe", "--family", "ring", "--out", str(out)])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["violations_rayleigh"] == 0
        assert payload["trials"] == 50

    def test_sweep_cutoff(self, tmp_path, workdir):
        out = tmp_path / "sweep.csv"
        code = run(["--config", workdir["config"], "--set", "training.epochs=1",
                    "sweep", "--param", "cutoff", "--values", "0.3,1.0",
                    "--data", workdir["data"], "--id", workdir["id_filtered"],
                    "--text", workdir["text"], "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "cutoff,ndcg,recall"
        assert len(lines) == 3

    def test_pretrain_rerun_byte_identical(self, tmp_path, workdir):
        base = ["--config", workdir["config"]]
        outs = []
        for tag in ("x", "y"):
            id_out = tmp_path / f"id_{tag}.emb"
            text_out = tmp_path / f"text_{tag}.emb"
            assert run(base + ["pretrain", "--data", workdir["data"],
                               "--out-id", str(id_out),
                               "--out-text", str(text_out)]) == 0
            outs.append((id_out.read_bytes(), text_out.read_bytes()))
        assert outs[0] == outs[1]

    def test_ingest_roundtrip(self, tmp_path, workdir):
        out = tmp_path / "canonical.tsv"
        summary = tmp_path / "summary.json"
        code = run(["--config", workdir["config"],
                    "ingest", "--input", workdir["data"], "--out", str(out),
                    "--summary", str(summary)])
        assert code == 0
        payload = json.loads(summary.read_text())
        assert payload["n_users"] > 0
        assert payload["config"]["dataset"]["min_interactions"] == 5
        # canonical rerun is byte-stable
        out2 = tmp_path / "canonical2.tsv"
        run(["--config", workdir["config"],
             "ingest", "--input", str(out), "--out", str(out2)])
        assert out.read_bytes() == out2.read_bytes()


class TestErrors:
    def test_unknown_flag_exits_1(self, workdir):
        assert run(["synth", "--nope", "x"]) == 1

    def test_unknown_config_key(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"tfm": {"cutof": 0.2}}')
        assert run(["--config", str(bad), "synth", "--out", str(tmp_path / "x.tsv")]) == 1

    def test_missing_input_file(self, tmp_path):
        assert run(["ingest", "--input", str(tmp_path / "absent.tsv")]) == 1

    def test_bad_rho_override(self, tmp_path):
        assert run(["--set", "synth.rho=1.0",
                    "synth", "--out", str(tmp_path / "x.tsv")]) == 1


class TestConfig:
    def test_defaults_complete_and_fingerprint_stable(self):
        cfg = load_config()
        assert cfg == DEFAULTS
        assert fingerprint(cfg) == fingerprint(load_config())

    def test_workers_do_not_change_fingerprint(self):
        a = load_config()
        b = load_config(overrides={"workers": "8"})
        assert fingerprint(a) == fingerprint(b)

    def test_semantic_override_changes_fingerprint(self):
        a = load_config()
        b = load_config(overrides={"glpf.alpha": "0.7"})
        assert fingerprint(a) != fingerprint(b)

    def test_type_coercion(self):
        cfg = load_config(overrides={"tfm.enabled": "off", "training.lr": "5e-4",
                                     "backbone.layers": "2"})
        assert cfg["tfm"]["enabled"] is False
        assert cfg["training"]["lr"] == 5e-4
        assert cfg["backbone"]["layers"] == 2

    def test_unknown_override_rejected(self):
        with pytest.raises(InputError):
            load_config(overrides={"tfm.cutof": "0.2"})
