import json

import numpy as np
import pytest

from saltkit import SyntheticSpec, generate_instance, read_embedding, salt_transfer
from saltkit.cli import main


@pytest.fixture(scope="module")
def instance_dir(tmp_path_factory):
    spec = SyntheticSpec(
        vt_size=90, vs_size=120, h_s=10, h_t=8, aux_dim=6,
        overlap_ratio=0.5, noise_std=0.02, seed=17,
    )
    inst = generate_instance(spec)
    root = tmp_path_factory.mktemp("cli")
    paths = inst.write(root / "inst")
    return inst, paths, root


def run_config(paths, root, **extra):
    cfg = {
        "source_embedding": paths["source_embedding"],
        "source_vocab": paths["source_vocab"],
        "target_embedding": paths["target_embedding"],
        "target_vocab": paths["target_vocab"],
        "aux_vectors": paths["aux_vectors"],
        "output_embedding": str(root / "out.emb"),
        "method": "salt",
        "seed": 17,
        **extra,
    }
    cfg_path = root / "run.json"
    cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
    return cfg_path, cfg


class TestTransferCommand:
    def test_happy_path_writes_output_and_report(self, instance_dir):
        inst, paths, root = instance_dir
        cfg_path, cfg = run_config(paths, root, report_json=str(root / "report.json"))
        assert main(["transfer", "--config", str(cfg_path)]) == 0
        report = json.loads((root / "report.json").read_text())
        assert report["method"] == "salt"
        assert report["copied"] + report["solved"] + report["fallback"] == 90
        out = read_embedding(cfg["output_embedding"])
        assert out.shape == (90, 10)

    def test_cli_matches_api_bitwise(self, instance_dir):
        inst, paths, root = instance_dir
        cfg_path, cfg = run_config(paths, root)
        assert main(["transfer", "--config", str(cfg_path)]) == 0
        api_out, _ = salt_transfer(
            inst.source_embedding, inst.source_vocab,
            inst.target_embedding, inst.target_vocab, inst.aux,
        )
        assert np.array_equal(read_embedding(cfg["output_embedding"]), api_out)

    def test_flag_overrides_config(self, instance_dir, capsys):
        inst, paths, root = instance_dir
        cfg_path, _ = run_config(paths, root, output_embedding=str(root / "mv.emb"))
        assert main(["transfer", "--config", str(cfg_path), "--method", "multivariate"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["method"] == "multivariate"
        assert report["solved"] == 0

    def test_seed_flag_changes_sampled_rows(self, instance_dir):
        inst, paths, root = instance_dir
        out_a = root / "seed_a.emb"
        out_b = root / "seed_b.emb"
        for out, seed in ((out_a, "1"), (out_b, "2")):
            cfg_path, _ = run_config(paths, root, method="multivariate", output_embedding=str(out))
            assert main(["transfer", "--config", str(cfg_path), "--seed", seed]) == 0
        assert out_a.read_bytes() != out_b.read_bytes()

    def test_tied_head_output(self, instance_dir):
        inst, paths, root = instance_dir
        cfg_path, cfg = run_config(
            paths, root, output_head=str(root / "head.emb"),
            output_embedding=str(root / "out2.emb"),
        )
        assert main(["transfer", "--config", str(cfg_path)]) == 0
        head = read_embedding(root / "head.emb")
        out = read_embedding(root / "out2.emb")
        assert np.array_equal(head, out.T)

    def test_missing_input_path_exits_2(self, instance_dir, caplog):
        inst, paths, root = instance_dir
        cfg_path, _ = run_config(paths, root, source_embedding=str(root / "nope.emb"))
        assert main(["transfer", "--config", str(cfg_path)]) == 2
        assert any("nope.emb" in r.message for r in caplog.records)

    def test_unknown_config_key_exits_2(self, instance_dir):
        inst, paths, root = instance_dir
        cfg_path, _ = run_config(paths, root, bogus_key=1)
        assert main(["transfer", "--config", str(cfg_path)]) == 2

    def test_missing_output_dir_exits_2_and_writes_nothing(self, instance_dir):
        inst, paths, root = instance_dir
        target = root / "no_such_dir" / "out.emb"
        cfg_path, _ = run_config(paths, root, output_embedding=str(target))
        assert main(["transfer", "--config", str(cfg_path)]) == 2
        assert not target.exists()

    def test_untied_head_requires_head_source(self, instance_dir):
        inst, paths, root = instance_dir
        cfg_path, _ = run_config(
            paths, root, tied_head=False, output_head=str(root / "h.emb")
        )
        assert main(["transfer", "--config", str(cfg_path)]) == 2


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_no_subcommand(self, capsys):
        assert main([]) == 1

    def test_bad_flag(self, instance_dir):
        assert main(["transfer", "--this-flag-does-not-exist"]) == 1

    def test_help_exits_zero(self):
        assert main(["--help"]) == 0


class TestOverlapCommand:
    def test_reports_coverage(self, instance_dir, capsys):
        inst, paths, root = instance_dir
        code = main(
            ["overlap", "--source-vocab", paths["source_vocab"],
             "--target-vocab", paths["target_vocab"]]
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["shared"] == inst.shared_target_ids.size
        assert report["coverage"] == pytest.approx(inst.shared_target_ids.size / 90)
        assert set(report) == {"coverage", "shared", "nonshared", "collisions"}


class TestValidateCommand:
    def test_runs_all_methods(self, tmp_path, capsys):
        spec = dict(
            vt_size=60, vs_size=80, h_s=8, h_t=8, aux_dim=6,
            overlap_ratio=0.5, noise_std=0.0, seed=2,
        )
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec), encoding="utf-8")
        assert main(["validate", "--spec", str(spec_path)]) == 0
        result = json.loads(capsys.readouterr().out)
        assert set(result["methods"]) == {"salt", "focus", "multivariate"}
        assert result["methods"]["salt"]["max_rel_error"] < 1e-4

    def test_unknown_spec_key_exits_2(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps({"vt_size": 10, "oops": 1}), encoding="utf-8")
        assert main(["validate", "--spec", str(spec_path)]) == 2


class TestStatsCommand:
    def test_footprint_with_streams(self, instance_dir, capsys):
        from saltkit import write_id_stream

        inst, paths, root = instance_dir
        write_id_stream([[0] * 40 for _ in range(10)], root / "b.ids")
        write_id_stream([[0] * 30 for _ in range(10)], root / "a.ids")
        code = main(
            ["stats", "--before", paths["source_embedding"],
             "--after", paths["target_embedding"],
             "--ids-before", str(root / "b.ids"), "--ids-after", str(root / "a.ids")]
        )
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["params_before"] == 120 * 10
        assert report["params_after"] == 90 * 8
        assert report["length_reduction_pct"] == 25.0

    def test_one_sided_streams_rejected(self, instance_dir):
        inst, paths, root = instance_dir
        code = main(
            ["stats", "--before", paths["source_embedding"],
             "--after", paths["target_embedding"], "--ids-before", str(root / "b.ids")]
        )
        assert code == 2
