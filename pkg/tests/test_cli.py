"""Command-line interface: happy paths, exit codes and run manifests."""

import hashlib
import json
from pathlib import Path

import pytest

from chainbt import default_spec_text
from chainbt.cli import main

SPEC = default_spec_text()


@pytest.fixture()
def spec_file(tmp_path):
    p = tmp_path / "actions.bt"
    p.write_text(SPEC)
    return p


@pytest.fixture()
def compiled_dir(tmp_path, spec_file):
    out = tmp_path / "compiled"
    assert main(["compile", str(spec_file), "--out", str(out)]) == 0
    return out


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["--version"])
    assert ei.value.code == 0


def test_compile_writes_artifacts_and_manifest(compiled_dir, spec_file, capsys):
    for name in ("tree.json", "acc.json", "spec.json", "tree.dot", "manifest.json"):
        assert (compiled_dir / name).is_file()
    manifest = json.loads((compiled_dir / "manifest.json").read_text())
    assert manifest["command"] == "compile"
    want = hashlib.sha256(spec_file.read_bytes()).hexdigest()
    assert manifest["inputs"]["spec"]["sha256"] == want


def test_compile_prints_constraint_summary(tmp_path, spec_file, capsys):
    assert main(["compile", str(spec_file), "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "Chase cow: Safe from fire, Safe from hostiles, Has sword" in out


def test_compile_missing_file_is_usage_error(tmp_path, capsys):
    assert main(["compile", str(tmp_path / "nope.bt")]) == 2


def test_compile_syntax_error_is_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.bt"
    bad.write_text("this is not a spec\n")
    assert main(["compile", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_compile_cycle_is_compile_error(tmp_path, capsys):
    cyc = tmp_path / "cyc.bt"
    cyc.write_text('goal "A"\n'
                   'action "MakeA" { pre: ["B"]; post: "A" }\n'
                   'action "MakeB" { pre: ["A"]; post: "B" }\n')
    assert main(["compile", str(cyc), "--out", str(tmp_path / "o")]) == 3


def test_train_requires_compiled_artifacts(tmp_path, capsys):
    assert main(["train", "--tree-dir", str(tmp_path), "--action", "Chase cow",
                 "--preset", "standard", "--steps", "10"]) == 2


def test_train_unknown_preset_is_config_error(compiled_dir, capsys):
    assert main(["train", "--tree-dir", str(compiled_dir), "--action", "Chase cow",
                 "--preset", "bogus", "--steps", "10"]) == 4


def test_train_scripted_action_is_config_error(compiled_dir, capsys):
    assert main(["train", "--tree-dir", str(compiled_dir), "--action", "Eat",
                 "--preset", "standard", "--steps", "10"]) == 4


def test_train_eval_report_pipeline(compiled_dir, tmp_path, capsys):
    train_dir = tmp_path / "train"
    rc = main(["train", "--tree-dir", str(compiled_dir), "--action", "Chase cow",
               "--preset", "nr_ee", "--steps", "2000", "--seed", "1",
               "--out", str(train_dir)])
    assert rc == 0
    qtable = train_dir / "qtable_chase_cow.json"
    csv_log = train_dir / "training_chase_cow.csv"
    assert qtable.is_file() and csv_log.is_file()
    assert csv_log.read_text().splitlines()[0].startswith("episode,")
    manifest = json.loads((train_dir / "manifest.json").read_text())
    assert manifest["params"]["preset"] == "nr_ee"
    assert manifest["params"]["scenario"] == 2  # default mapping for Chase cow

    eval_dir = tmp_path / "eval"
    rc = main(["eval", "--tree-dir", str(compiled_dir), "--scenario", "2",
               "--episodes", "10", "--seed", "2", "--preset-label", "nr_ee",
               "--policy", f"Chase cow={qtable}", "--out", str(eval_dir)])
    assert rc == 0
    report = json.loads((eval_dir / "report.json").read_text())
    assert report["episodes"] == 10
    assert report["preset_label"] == "nr_ee"

    rc = main(["report", str(eval_dir / "report.json"), "--format", "csv",
               "--out", str(tmp_path / "table.csv")])
    assert rc == 0
    table = (tmp_path / "table.csv").read_text()
    assert table.splitlines()[0].startswith("configuration,")
    assert "nr_ee" in table


def test_eval_scripted_defaults_and_trace_dump(compiled_dir, tmp_path, capsys):
    out = tmp_path / "ev"
    rc = main(["eval", "--tree-dir", str(compiled_dir), "--scenario", "1",
               "--episodes", "5", "--trace-dump", "--out", str(out)])
    assert rc == 0
    lines = (out / "traces.jsonl").read_text().strip().splitlines()
    assert any('"mission": 0' in ln for ln in lines)


def test_eval_bad_policy_argument(compiled_dir, tmp_path, capsys):
    assert main(["eval", "--tree-dir", str(compiled_dir), "--scenario", "1",
                 "--episodes", "2", "--policy", "no-equals-sign",
                 "--out", str(tmp_path / "o")]) == 2


def test_eval_wrong_action_qtable_is_compat_error(compiled_dir, tmp_path, capsys):
    train_dir = tmp_path / "t"
    assert main(["train", "--tree-dir", str(compiled_dir), "--action",
                 "Defeat hostile", "--preset", "standard", "--steps", "500",
                 "--out", str(train_dir)]) == 0
    qt = train_dir / "qtable_defeat_hostile.json"
    assert main(["eval", "--tree-dir", str(compiled_dir), "--scenario", "2",
                 "--episodes", "2", "--policy", f"Chase cow={qt}",
                 "--out", str(tmp_path / "o")]) == 5


def test_eval_corrupt_qtable_is_compat_error(compiled_dir, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["eval", "--tree-dir", str(compiled_dir), "--scenario", "2",
                 "--episodes", "2", "--policy", f"Chase cow={bad}",
                 "--out", str(tmp_path / "o")]) == 5


def test_report_renders_markdown_with_ranking(compiled_dir, tmp_path, capsys):
    outs = []
    for label, seed in (("standard", 3), ("nr_ee", 3)):
        out = tmp_path / f"ev_{label}"
        assert main(["eval", "--tree-dir", str(compiled_dir), "--scenario", "1",
                     "--episodes", "4", "--seed", str(seed),
                     "--preset-label", label, "--out", str(out)]) == 0
        outs.append(str(out / "report.json"))
    assert main(["report", *outs]) == 0
    text = capsys.readouterr().out
    assert "ranking by violations:" in text
