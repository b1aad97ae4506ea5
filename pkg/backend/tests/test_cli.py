import json

import pytest

from plom.exceptions import EXIT_INPUT_ERROR, EXIT_NUMERICAL_ERROR, EXIT_OK
from plom.main import main

SMALL_RUN = [
    "--set", "isde.n_mc=8",
    "--set", "isde.n_instants=2",
    "--set", "plom.n_mch=2",
    "--set", "plom.m0=3",
]  # fmt: skip


@pytest.fixture
def dataset(tmp_path):
    path = tmp_path / "data.csv"
    args = ["gen", str(path), "--kind", "multiconnected-manifold", "--nu", "3", "--n-d", "40", "--seed", "1"]
    assert main(args) == EXIT_OK
    return path


def _tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_gen_writes_a_normalized_csv(dataset):
    lines = dataset.read_text().splitlines()
    assert lines[0].startswith("x1,x2")
    assert len(lines) == 1 + 3


def test_metrics_of_a_file_with_itself(dataset, tmp_path):
    out = tmp_path / "metrics"
    assert main(["metrics", str(dataset), str(dataset), "--output", str(out)]) == EXIT_OK
    report = json.loads((out / "metrics.json").read_text())
    assert report["kl"] == pytest.approx(0.0, abs=1e-12)


def test_missing_input_is_an_input_error(tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--input", str(tmp_path / "absent.csv"), "--output", str(out)])
    assert code == EXIT_INPUT_ERROR
    record = json.loads((out / "error.json").read_text())
    assert record["kind"] == "input-error"
    assert record["stage"] == "input"
    assert record["exit_code"] == EXIT_INPUT_ERROR


def test_undecodable_input_leaves_an_error_record(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_bytes(b"1.0,2.0\n\xff\xfe,3.0\n")
    out = tmp_path / "out"
    assert main(["run", "--input", str(bad), "--output", str(out)]) == EXIT_INPUT_ERROR
    record = json.loads((out / "error.json").read_text())
    assert record["kind"] == "input-error"
    assert record["stage"] == "input"


def test_unexpected_exception_leaves_an_error_record(dataset, tmp_path, monkeypatch):
    def broken(ts):
        raise RuntimeError("boom")

    monkeypatch.setattr("plom.services.gkde.build_model", broken)
    out = tmp_path / "out"
    assert main(["run", "--input", str(dataset), "--output", str(out), *SMALL_RUN]) == EXIT_NUMERICAL_ERROR
    record = json.loads((out / "error.json").read_text())
    assert record["kind"] == "internal-error"
    assert record["exit_code"] == EXIT_NUMERICAL_ERROR
    assert "RuntimeError: boom" in record["message"]


def test_invalid_config_value_names_the_field(dataset, tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--input", str(dataset), "--output", str(out), "--set", "isde.kappa=0.5"])
    assert code == EXIT_INPUT_ERROR
    assert "isde.kappa" in json.loads((out / "error.json").read_text())["message"]


def test_config_file_and_overrides(dataset, tmp_path):
    config = tmp_path / "run.ini"
    config.write_text(
        f"[input]\npath = {dataset}\n\n[isde]\nn_mc = 8\nn_instants = 2\n\n[plom]\nn_mch = 2\nm0 = 3\n\n[run]\nseed = 7\n"
    )
    out = tmp_path / "out"
    assert main(["run", str(config), "--output", str(out)]) == EXIT_OK

    payload = json.loads((out / "run.json").read_text())
    assert payload["provenance"]["seed"] == 7
    assert payload["config"]["isde"]["n_mc"] == 8
    assert len(payload["selection"]["records"]) == 2
    assert set(payload["regimes"]) == {"baseline", "rodb", "rotb"}
    for name in ("instants", "angles", "convergence", "dmaps_eigenvalues", "transient_eigenvalues"):
        assert (out / "curves" / f"{name}.csv").is_file()
    for name in ("baseline", "rodb", "rotb"):
        assert (out / "learned" / f"{name}.bin").is_file()


def test_unknown_config_section(tmp_path):
    config = tmp_path / "run.ini"
    config.write_text("[inputs]\npath = x.csv\n")
    assert main(["run", str(config), "--output", str(tmp_path / "out")]) == EXIT_INPUT_ERROR


def test_runs_are_byte_identical(dataset, tmp_path):
    trees = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", "--input", str(dataset), "--output", str(out), *SMALL_RUN]) == EXIT_OK
        trees.append(_tree(out))
    assert trees[0] == trees[1]


def test_thread_count_does_not_change_results(dataset, tmp_path, thread_cap):
    trees = []
    for threads in ("1", "3"):
        out = tmp_path / threads
        assert main(["--threads", threads, "run", "--input", str(dataset), "--output", str(out), *SMALL_RUN]) == 0
        trees.append({k: v for k, v in _tree(out).items() if k != "run.json"})
    assert trees[0] == trees[1]


def test_bases_subcommand(dataset, tmp_path):
    out = tmp_path / "bases"
    args = ["bases", "--input", str(dataset), "--output", str(out), "--n", "2", "--n-mc", "8", "--sweep", "100"]
    assert main(args) == EXIT_OK
    report = json.loads((out / "bases.json").read_text())
    assert [entry["n"] for entry in report["angles"]] == [1, 2]
    assert len(report["kappa_sweep"]) == 1
    assert (out / "curves" / "kappa_sweep.csv").is_file()


def test_plom_subcommand_with_a_basis_file(dataset, tmp_path):
    first = tmp_path / "first"
    assert main(["bases", "--input", str(dataset), "--output", str(first), "--n", "1", "--n-mc", "8"]) == EXIT_OK

    out = tmp_path / "sampled"
    basis = first / "bases" / "transient_0001.bin"
    args = ["plom", "--input", str(dataset), "--output", str(out), "--basis", str(basis), "--n-mch", "2", "--m0", "3"]
    assert main(args) == EXIT_OK
    report = json.loads((out / "plom.json").read_text())
    assert report["basis"] == "file"
    assert report["n_ar"] == 2 * 40


def test_reference_subcommand(tmp_path):
    out = tmp_path / "reference"
    args = ["reference", "--nd", "60", "--n-instants", "3", "--output", str(out)]
    assert main(args) == EXIT_OK
    report = json.loads((out / "reference.json").read_text())
    assert report["n_d"] == 60
    assert (out / "curves" / "reference_rates.csv").is_file()
