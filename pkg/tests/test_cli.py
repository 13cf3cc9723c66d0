import json

import pytest

from botsscl.cli import build_id, main

SMALL = [
    "--set", "synthetic.embedding_dim=8",
    "--set", "synthetic.n_per_class=120",
    "--set", "train.epochs=5",
    "--set", "train.batch_size=64",
    "--set", "train.d=4",
    "--set", "train.out_dim=8",
]


def _read(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--out", str(out), *SMALL]) == 0
    return out


def test_gradcheck_defaults(tmp_path):
    assert main(["gradcheck", "--out", str(tmp_path)]) == 0
    rep = _read(tmp_path / "gradcheck_report.json")
    assert rep["passed"] and rep["max_relative_error"] <= 1e-5
    assert set(rep["losses"]) == {"self", "sup", "sup_mod"}


def test_train_then_eval(trained):
    assert (trained / "checkpoint.json").exists()
    assert main(["eval", "--out", str(trained), *SMALL]) == 0
    rep = _read(trained / "eval_report.json")
    assert "f1" in rep["metrics"]["macro"]
    assert rep["config"]["train"]["epochs"] == 5
    assert rep["config"]["synthetic"]["embedding_dim"] == 8
    assert rep["build"] == build_id()


def test_export_embeddings(trained):
    assert main(["export-embeddings", "--out", str(trained), *SMALL]) == 0
    lines = (trained / "embeddings.csv").read_text().splitlines()
    assert lines[0] == "id,h_0,h_1,h_2,h_3,label" and len(lines) == 241


def test_attack(trained):
    args = ["attack", "--out", str(trained), *SMALL, "--set", "attack.n_each=10", "--normalized"]
    assert main(args) == 0
    rep = _read(trained / "attack_report.json")
    att = rep["attack"]
    assert att["initial_samples"] == 20 and att["audit"]["other_access"] == 0
    assert att["success_rate"] == att["successes"] / 20
    first = (trained / "attack_report.json").read_bytes()
    assert main(args) == 0
    assert (trained / "attack_report.json").read_bytes() == first


def test_normalized_eval_byte_identical(trained):
    args = ["eval", "--out", str(trained), *SMALL, "--normalized"]
    assert main(args) == 0
    first = (trained / "eval_report.json").read_bytes()
    assert main(args) == 0
    assert (trained / "eval_report.json").read_bytes() == first
    assert "created_unix" not in _read(trained / "eval_report.json")


def test_sweep_corruption_rate(tmp_path):
    assert main(["sweep", "--axis", "corruption_rate", "--out", str(tmp_path), *SMALL,
                 "--set", "train.epochs=2"]) == 0
    rep = _read(tmp_path / "sweep_report.json")
    assert [p["value"] for p in rep["points"]] == [0.4, 0.5, 0.6, 0.7, 0.8]
    reports = sorted(tmp_path.glob("sweep/*/eval_report.json"))
    assert len(reports) == 5
    assert all("f1" in _read(r)["metrics"]["macro"] for r in reports)


def test_sweep_loss_axis(tmp_path):
    assert main(["sweep", "--axis", "loss", "--out", str(tmp_path), *SMALL,
                 "--set", "train.epochs=1", "--set", 'sweep.loss=["self", "sup_mod"]']) == 0
    assert len(_read(tmp_path / "sweep_report.json")["points"]) == 2


def test_lobo(tmp_path):
    assert main(["lobo", "--out", str(tmp_path), *SMALL, "--set", "train.epochs=2"]) == 0
    rep = _read(tmp_path / "lobo_report.json")
    assert set(rep["macro_f1"]) == {"within_a", "a_to_b", "within_b", "b_to_a"}


def test_gen_data_then_train_from_file(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path), *SMALL]) == 0
    data = tmp_path / "data.csv"
    assert data.exists() and (tmp_path / "data_target.csv.schema.json").exists()
    out = tmp_path / "fromfile"
    assert main(["train", "--out", str(out), *SMALL, "--set", f'paths.data="{data}"']) == 0


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_unknown_command(capsys):
    assert main(["dance"]) == 2
    assert _error(capsys)["error"] == "ConfigurationError"


def test_invalid_config_field_path(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path), "--set", "train.temperature=0"]) == 2
    err = _error(capsys)
    assert err["field"] == "train.temperature" and err["exit_code"] == 2


def test_missing_checkpoint(tmp_path, capsys):
    assert main(["eval", "--out", str(tmp_path / "empty"), *SMALL]) == 2
    assert _error(capsys)["field"] == "paths.checkpoint"


def test_sweep_needs_axis(tmp_path, capsys):
    assert main(["sweep", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--axis", "dropout", "--out", str(tmp_path)]) == 2


def test_empty_sweep_list(tmp_path, capsys):
    assert main(["sweep", "--axis", "epochs", "--out", str(tmp_path), "--set", "sweep.epochs=[]"]) == 2
    assert _error(capsys)["field"] == "sweep.epochs"


def test_schema_mismatch_between_checkpoint_and_data(trained, capsys):
    assert main(["eval", "--out", str(trained), *SMALL, "--set", "synthetic.embedding_dim=9"]) == 2
