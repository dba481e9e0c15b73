import json

import pytest

from lexpipe.cli import build_parser, main


def run(capsys, *argv) -> tuple[int, str]:
    rc = main([str(a) for a in argv])
    return rc, capsys.readouterr().out


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(root), "--n", "10"]) == 0
    return root


def test_synth_writes_config(fixture_dir):
    config = json.loads((fixture_dir / "config.json").read_text())
    assert config["stub"] is True and config["out_dir"] == "run"
    assert len(list((fixture_dir / "texts").glob("*.txt"))) == 10


def test_corpus_build(fixture_dir, tmp_path, capsys):
    out = tmp_path / "records.jsonl"
    rc, stdout = run(capsys, "corpus", "build", "--in", fixture_dir / "texts", "--meta", fixture_dir / "meta.jsonl",
                     "--out", out)
    summary = json.loads(stdout)
    assert rc == 0
    assert summary["kept"] == len(out.read_text(encoding="utf-8").splitlines())
    assert summary["kept"] + sum(summary["dropped"].values()) == 10


def test_augment_run(fixture_dir, tmp_path, capsys):
    rc, stdout = run(capsys, "--stub", "augment", "run", "--laws", fixture_dir / "laws.jsonl", "--num-qa", 2,
                     "--out", tmp_path / "qa.jsonl", "--catalog-out", tmp_path / "cat.jsonl")
    assert rc == 0 and json.loads(stdout)["qa_pairs"] == 6
    assert (tmp_path / "cat.jsonl").exists()


def test_train_sft_and_resume(tmp_path, capsys):
    data = tmp_path / "qa.jsonl"
    data.write_text("".join(json.dumps({"input": q, "output": a}, ensure_ascii=False) + "\n"
                            for q, a in [("问一", "答一"), ("问二", "答二")]), encoding="utf-8")
    ck = tmp_path / "p.json"
    rc, stdout = run(capsys, "train", "sft", "--data", data, "--steps", 30, "--lr", 1.0, "--out", ck,
                     "--log", tmp_path / "log.csv", "--plot", tmp_path / "log.png")
    first = json.loads(stdout)
    assert rc == 0 and first["final_loss"] < first["initial_loss"]
    assert (tmp_path / "log.png").exists()
    rc, stdout = run(capsys, "train", "sft", "--data", data, "--steps", 5, "--init", ck, "--out", tmp_path / "q.json")
    assert json.loads(stdout)["initial_loss"] <= first["final_loss"] + 1e-12


def test_train_grpo(tmp_path, capsys):
    rc, stdout = run(capsys, "train", "grpo", "--updates", 5, "--out", tmp_path / "g.json",
                     "--log", tmp_path / "g.csv", "--seed", 1)
    out = json.loads(stdout)
    assert rc == 0 and 0.0 <= out["format_valid_mass"] <= 1.0
    assert len((tmp_path / "g.csv").read_text().splitlines()) == 6


def test_retrieve_match(tmp_path, capsys):
    doc = tmp_path / "d.txt"
    doc.write_text("犯罪以后自动投案，如实供述自己的罪行。", encoding="utf-8")
    rc, stdout = run(capsys, "retrieve", "match", "--doc", doc, "--stub", "--topk", 2)
    out = json.loads(stdout)
    assert rc == 0 and len(out["matches"]) == 2


def test_retrieve_eval(tmp_path, capsys):
    from lexpipe.elements import default_catalog

    cat = default_catalog()
    data = tmp_path / "d.jsonl"
    data.write_text("".join(json.dumps({"id": f"d{i}", "text": e.description, "elements": [e.name]},
                                       ensure_ascii=False) + "\n" for i, e in enumerate(cat)), encoding="utf-8")
    rc, stdout = run(capsys, "retrieve", "eval", "--data", data, "--out", tmp_path / "o.csv",
                     "--plot", tmp_path / "o.png", "--stub")
    assert rc == 0 and json.loads(stdout)["original"] == 1.0
    assert (tmp_path / "o.png").exists()


def test_eval(fixture_dir, tmp_path, capsys):
    rec = tmp_path / "records.jsonl"
    main(["corpus", "build", "--in", str(fixture_dir / "texts"), "--meta", str(fixture_dir / "meta.jsonl"),
          "--out", str(rec)])
    capsys.readouterr()
    rc, stdout = run(capsys, "--stub", "eval", "--records", rec, "--meta", fixture_dir / "meta.jsonl",
                     "--out", tmp_path / "ev")
    assert rc == 0 and stdout.startswith("group,accuracy")
    assert stdout.splitlines()[-1].startswith("Average,")


def test_pipeline_missing_config(tmp_path, capsys):
    rc = main(["pipeline", "run", "--config", str(tmp_path / "absent.json")])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_global_flags_after_subcommand():
    args = build_parser().parse_args(["retrieve", "match", "--doc", "x", "--seed", "4", "--stub"])
    assert args.seed == 4 and args.stub is True
    args = build_parser().parse_args(["--seed", "5", "retrieve", "match", "--doc", "x"])
    assert args.seed == 5 and args.stub is False


def test_subcommand_required():
    with pytest.raises(SystemExit):
        main(["train"])
