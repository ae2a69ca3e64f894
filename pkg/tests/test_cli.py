import json
from pathlib import Path

import pytest

from drivestyle import cli, pipeline
from drivestyle.instructions import parse_response
from drivestyle.metrics import kce

TINY = {
    "corpus": [{"kind": "straight", "seed": 0}, {"kind": "lane-obstacle", "seed": 3}],
    "styles": ["Comfort", "Sporty"],
    "emit": {"render": False},
}
STAGES = ("gen", "plan", "filter", "emit")


def write_config(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def run_stages(cfg_path, out, *extra):
    for stage in STAGES:
        assert cli.main(["--config", cfg_path, "--out", str(out), *extra, stage]) == 0


def tree_bytes(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg_path = write_config(base / "tiny.json", TINY)
    run_stages(cfg_path, base / "out")
    return cfg_path, base / "out"


def test_usage_errors_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--bogus", "gen"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 1
    bad = write_config(tmp_path / "bad.json", {"corpus": [{"kind": "spiral"}]})
    assert cli.main(["--config", bad, "gen"]) == 1
    unknown = write_config(tmp_path / "unk.json", {"colour": "red"})
    assert cli.main(["--config", unknown, "gen"]) == 1
    assert cli.main(["--config", str(tmp_path / "nope.json"), "gen"]) == 1
    (tmp_path / "broken.json").write_text("{")
    assert cli.main(["--config", str(tmp_path / "broken.json"), "gen"]) == 1


def test_missing_stage_exits_2(tmp_path, capsys):
    assert cli.main(["--out", str(tmp_path / "empty"), "plan"]) == 2
    assert "gen" in capsys.readouterr().err


def test_missing_predictions_exit_2(tiny_run, tmp_path):
    cfg_path, out = tiny_run
    assert cli.main(["--config", cfg_path, "--out", str(out), "evaluate", "--predictions", str(tmp_path / "x.json")]) == 2


def test_outputs_carry_config_hash_and_seed(tiny_run):
    cfg_path, out = tiny_run
    h = pipeline.load_config(cfg_path).config_hash()
    for rel in ("corpus/manifest.json", "plan/summary.json", "filter/report.json", "emit/ground_truth.json"):
        doc = json.loads((out / rel).read_text())
        assert doc["config_hash"] == h and doc["seed"] == 0
    man = json.loads((out / "emit" / "bev.json.manifest.json").read_text())
    assert man["config_hash"] == h


def test_config_hash_ignores_output_dir():
    a = pipeline.load_config(None, output_dir="a")
    b = pipeline.load_config(None, output_dir="b")
    c = pipeline.load_config(None, seed=3)
    assert a.config_hash() == b.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 16


def test_evaluate_ground_truth_against_itself(tiny_run):
    cfg_path, out = tiny_run
    gt = out / "emit" / "ground_truth.json"
    assert cli.main(["--config", cfg_path, "--out", str(out), "evaluate", "--predictions", str(gt)]) == 0
    rep = json.loads((out / "evaluate" / "report.json").read_text())
    assert rep["ade"] == 0.0 and rep["fde"] == 0.0 and rep["generation_rate"] == 1.0
    csv_head = (out / "evaluate" / "report.csv").read_text().splitlines()[0]
    assert csv_head.endswith("config_hash,seed")


def test_consistent_ground_truth_scores_one(tiny_run, tmp_path):
    cfg_path, out = tiny_run
    gt = json.loads((out / "emit" / "ground_truth.json").read_text())["responses"]
    # responses whose own 2 Hz states are kinematically consistent (steady segments)
    steady = {k: v for k, v in gt.items() if kce(parse_response(v)[2][:, 1:6], 0.5) == 0.0}
    assert steady
    (tmp_path / "gt.json").write_text(json.dumps({"responses": steady}))
    cfg = pipeline.load_config(cfg_path, output_dir=str(tmp_path / "ev"))
    rep = pipeline.cmd_evaluate(cfg, tmp_path / "gt.json", tmp_path / "gt.json")
    assert rep.s_final == 1.0


def test_garbage_predictions_count_as_not_generated(tiny_run, tmp_path):
    cfg_path, out = tiny_run
    gt = json.loads((out / "emit" / "ground_truth.json").read_text())["responses"]
    ids = sorted(gt)
    rows = [{"id": ids[0], "response": "not json"}, {"id": ids[1], "response": gt[ids[1]]}]
    pred = tmp_path / "p.jsonl"
    pred.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    cfg = pipeline.load_config(cfg_path, output_dir=str(tmp_path / "ev"))
    rep = pipeline.cmd_evaluate(cfg, pred, out / "emit" / "ground_truth.json")
    assert rep.n_generated == 1 and rep.n_total == len(ids)


def test_emitted_records_parse(tiny_run):
    _, out = tiny_run
    data = json.loads((out / "emit" / "bev.json").read_text())
    assert data
    for rec in data[:20]:
        h, dt, arr = parse_response(rec["conversations"][1]["value"])
        assert dt == 0.5 and len(arr) == 7


def test_plot_empty_and_real_reports(tiny_run, tmp_path):
    cfg_path, out = tiny_run
    empty = tmp_path / "empty.json"
    empty.write_text("{}")
    assert cli.main(["--out", str(tmp_path / "p"), "plot", str(empty)]) == 0
    svgs = sorted((tmp_path / "p" / "plots").glob("*.svg"))
    assert any("no data" in p.read_text() for p in svgs)
    assert cli.main(["--config", cfg_path, "--out", str(out), "plot"]) == 0
    assert (out / "plots" / "report-features.svg").exists()


def test_rerun_is_byte_identical(tiny_run, tmp_path):
    cfg_path, out = tiny_run
    run_stages(cfg_path, tmp_path / "again")
    ref = {k: v for k, v in tree_bytes(out).items() if k.split("/")[0] in ("corpus", "plan", "filter", "emit")}
    assert tree_bytes(tmp_path / "again") == ref


def test_workers_do_not_change_plan(tiny_run, tmp_path):
    cfg_path, out = tiny_run
    dest = tmp_path / "w2"
    assert cli.main(["--config", cfg_path, "--out", str(dest), "gen"]) == 0
    assert cli.main(["--config", cfg_path, "--out", str(dest), "--workers", "2", "plan"]) == 0
    ref = {k: v for k, v in tree_bytes(out).items() if k.startswith("plan/")}
    assert {k: v for k, v in tree_bytes(dest).items() if k.startswith("plan/")} == ref


def test_planner_failure_is_logged_not_fatal(tmp_path, caplog):
    doc = {**TINY, "corpus": [{"kind": "lane-obstacle", "seed": 3}], "sampler": {"limits": {"a_max": 1e-3, "kappa_max": 1e-4}}}
    cfg_path = write_config(tmp_path / "c.json", doc)
    out = tmp_path / "out"
    assert cli.main(["--config", cfg_path, "--out", str(out), "gen"]) == 0
    assert cli.main(["--config", cfg_path, "--out", str(out), "plan"]) == 0
    summary = json.loads((out / "plan" / "summary.json").read_text())
    assert summary["failures"] and summary["failures"][0]["counts"]
    assert any("planner failure" in r.message for r in caplog.records)


def test_seed_changes_corpus(tmp_path):
    cfg_path = write_config(tmp_path / "c.json", TINY)
    assert cli.main(["--config", cfg_path, "--out", str(tmp_path / "a"), "gen"]) == 0
    assert cli.main(["--config", cfg_path, "--out", str(tmp_path / "b"), "--seed", "1", "gen"]) == 0
    assert tree_bytes(tmp_path / "a") != tree_bytes(tmp_path / "b")


def test_losses_subcommand(capsys):
    assert cli.main(["losses", "--cases", "3"]) == 0
    worst = json.loads(capsys.readouterr().out)
    assert max(worst.values()) < 1e-5
