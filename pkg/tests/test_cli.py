import json

import pytest

from blidext.cli import OUTPUT_ENV, SCHEMA_VERSION, main


def run(tmp_path, command, config=None, *extra):
    args = [command, "--output", str(tmp_path / "out"), "--quiet", *extra]
    if config is not None:
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        args += ["--config", str(path)]
    return main(args)


def report(tmp_path):
    return json.loads((tmp_path / "out" / "report.json").read_text())


def test_certify_c0_passes(tmp_path):
    cfg = {"space": {"kind": "SupOnT"}, "budgets": {"certify": 60}, "nodes": 128}
    assert run(tmp_path, "certify-blid", cfg) == 0
    rep = report(tmp_path)
    assert rep["schema_version"] == SCHEMA_VERSION
    base = rep["results"]["certify"]["constructions"][0]
    assert base["construction"] == "PointwiseC0" and base["empirical_bound"] <= 2.0
    assert (tmp_path / "out" / "certify.csv").exists()


def test_abs_diffcheck_is_an_intended_failure(tmp_path):
    cfg = {"diffcheck": {"maps": ["abs"], "spaces": ["C0"]}, "budgets": {"directions": 4}, "nodes": 64}
    assert run(tmp_path, "diffcheck", cfg) == 2
    rep = report(tmp_path)
    assert rep["verdict"] == "fail"
    assert rep["verdicts"]["diffcheck:abs@C0"] == "fail"


def test_abs_as_control_passes(tmp_path):
    cfg = {"diffcheck": {"maps": ["square"], "controls": ["abs"], "spaces": ["C0"]},
           "budgets": {"directions": 4}, "nodes": 64}
    assert run(tmp_path, "diffcheck", cfg) == 0


def test_missing_matrix_is_a_configuration_error(tmp_path, capsys):
    assert run(tmp_path, "linearize", {"f_name": "square"}) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "'matrix'" in err[0]
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize(
    "cfg,field",
    [
        ({"space": {"kind": "Sobolev"}}, "space.kind"),
        ({"extend": {"maps": ["cube"]}}, "extend.maps"),
        ({"budgets": {"fuzz": 0}}, "budgets.fuzz"),
        ({"colour": "red"}, "colour"),
    ],
)
def test_bad_fields_are_named(tmp_path, capsys, cfg, field):
    assert run(tmp_path, "extend-demo", cfg) == 1
    assert field in capsys.readouterr().err


def test_unknown_command(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_invalid_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    assert main(["certify-blid", "--config", str(path), "--output", str(tmp_path)]) == 1
    assert "invalid JSON" in capsys.readouterr().err


def test_seed_flag_overrides_config(tmp_path):
    cfg = {"seed": 3, "space": {"kind": "Euclidean", "n": 2}, "budgets": {"certify": 20}}
    assert run(tmp_path, "certify-blid", cfg, "--seed", "11") == 0
    rep = report(tmp_path)
    assert rep["seed"] == 11
    assert all(c["seed"] >= 11 for c in rep["results"]["certify"]["constructions"])


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"space": {"kind": "Euclidean", "n": 1}, "budgets": {"certify": 10}}))
    assert main(["certify-blid", "--config", str(cfg), "--quiet"]) == 0
    assert (tmp_path / "env" / "report.json").exists()


def test_linearize_small_problem_is_deterministic(tmp_path):
    cfg = {"linearize": {"matrix": [[2.0, 0.0], [0.0, 0.5]], "f_name": "quadratic_swap", "grid_n": 61,
                         "samples": 60, "name": "saddle"}}
    codes, bodies = [], []
    for i in range(2):
        d = tmp_path / f"r{i}"
        d.mkdir()
        codes.append(run(d, "linearize", cfg, "--seed", "42"))
        body = report(d)
        assert "timestamp" in body.pop("metadata")
        bodies.append(json.dumps(body, sort_keys=True))
        assert (d / "out" / "conjugacy_saddle.csv").exists()
    assert codes[0] == codes[1]
    assert bodies[0] == bodies[1]
    sections = json.loads(bodies[0])["results"]["linearize"]["problems"][0]
    assert sections["conjugacy"]["converged"]
    assert sections["beta_fit"]["beta_hat"] > 0
