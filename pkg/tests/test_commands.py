from __future__ import annotations

import csv

import pytest
import ujson
from pydantic import ValidationError

from commands import compare as compare_command
from commands import lln as lln_command
from commands.__main__ import main
from commands.cost import run_cost
from commands.diffusion import run_diffusion
from commands.fclt import run_fclt
from commands.lln import run_lln
from commands.profile import run_profile
from commands.simulate import run_simulate
from src.cli_utils import EXIT_OK, EXIT_SINGULAR, EXIT_TOLERANCE, EXIT_USAGE
from src.config import Settings, get_settings
from src.lln import SingularityError
from src.schemas import LlnConfig, RunConfig, parse_dist_flag, parse_grid


@pytest.fixture(autouse=True)
def isolated_output(monkeypatch, tmp_path):
    monkeypatch.setenv("NETDIFF_OUT", str(tmp_path / "default"))
    get_settings.cache_clear()  # type: ignore[attr-defined]
    yield
    get_settings.cache_clear()  # type: ignore[attr-defined]


def _rows(path):
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


def test_distribution_flags():
    assert parse_dist_flag("poisson:5") == {"kind": "poisson", "lam": "5"}
    assert parse_dist_flag("negbin:2,0.75") == {"kind": "negative_binomial", "r": "2", "p": "0.75"}
    assert parse_dist_flag("table:1=0.7,4=0.2,45=0.1")["table"] == {"1": "0.7", "4": "0.2", "45": "0.1"}
    with pytest.raises(ValueError):
        parse_dist_flag("zipf:2")
    assert parse_grid("0:1:3") == [0.0, 0.5, 1.0]
    assert parse_grid("0.1,0.2") == [0.1, 0.2]


def test_run_config_validation():
    config = RunConfig(dist="regular:3")
    assert config.dist.build().mean == 3.0
    assert config.dist.descriptor() == {"kind": "regular", "r": 3}
    for bad in ({"n": 0}, {"alpha_s": 0.0}, {"mode": "simple"}, {"h": 5.0, "T": 1.0}, {"colour": "red"}):
        with pytest.raises(ValidationError):
            RunConfig(dist="poisson:5", **bad)
    with pytest.raises(ValidationError):
        RunConfig(dist={"kind": "negative_binomial", "r": 2})


def test_lln_command_writes_constant_path_without_infection(tmp_path):
    result = run_lln({"dist": "poisson:5", "beta": 0.0, "alpha_s": 0.9, "T": 1.0, "out": str(tmp_path)})
    assert result["files"] == ["lln.csv", "lln.json"]
    rows = _rows(tmp_path / "lln.csv")
    assert rows[0] == ["t", "xS", "xSI", "xSS", "theta", "infected_fraction"]
    assert {row[1] for row in rows[1:]} == {rows[1][1]}
    assert float(rows[1][1]) == pytest.approx(0.9)

    saved = ujson.loads((tmp_path / "lln.json").read_text())
    assert LlnConfig(**saved["config"]).resolved() == saved["config"]
    assert "out" not in saved["config"]


def test_simulate_is_deterministic_across_threads(tmp_path):
    payload = {"dist": "poisson:5", "n": 200, "beta": 0.5, "T": 1.0, "seed": 7, "replicas": 2}
    run_simulate({**payload, "out": str(tmp_path / "a"), "threads": 1})
    run_simulate({**payload, "out": str(tmp_path / "b"), "threads": 2})
    for name in ("replica_0000.csv", "replica_0000.json", "replica_0001.csv", "replica_0001.json"):
        first = (tmp_path / "a" / "simulate" / name).read_bytes()
        second = (tmp_path / "b" / "simulate" / name).read_bytes()
        assert first == second
    header = _rows(tmp_path / "a" / "simulate" / "replica_0000.csv")[0]
    assert header == ["t", "node", "dXS", "dXSI", "dXSS"]


def test_fclt_command_outputs(tmp_path):
    run_fclt({"dist": "poisson:5", "T": 1.0, "ellipse_times": "0:1:3", "out": str(tmp_path)})
    ellipses = _rows(tmp_path / "ellipses.csv")
    assert ellipses[0] == ["t", "cx", "cy", "a", "b", "angle_rad"]
    assert len(ellipses) == 4
    fclt_rows = _rows(tmp_path / "fclt.csv")
    assert len(fclt_rows[0]) == 19
    saved = ujson.loads((tmp_path / "fclt.json").read_text())
    assert saved["jump_correlation"]["rho"][0] == pytest.approx(-0.8018, abs=1e-4)


def test_profile_command_outputs(tmp_path):
    result = run_profile(
        {"dist": "poisson:6", "alpha_s": 0.9, "T": 2.0, "betas": "0:2:5", "time_points": 11, "threads": 1,
         "out": str(tmp_path)}
    )
    assert set(result["files"]) == {"profile.csv", "profile.gp", "profile.json"}
    rows = _rows(tmp_path / "profile.csv")
    assert len(rows) == 6
    assert len(rows[0]) == 12
    saved = ujson.loads((tmp_path / "profile.json").read_text())
    assert saved["giant_component"]["fraction"] > 0.99
    assert isinstance(saved["monotone"], bool)


def test_cost_and_diffusion_commands(tmp_path):
    result = run_cost({"dist": "poisson:5", "n": 200, "T": 1.0, "out": str(tmp_path)})
    assert result["files"] == ["cost_gaussian.json"]
    assert ujson.loads((tmp_path / "cost_gaussian.json").read_text())["params"]["c"] == pytest.approx(1 / 200)

    run_diffusion(
        {"dist": "poisson:5", "n": 200, "T": 0.5, "seed": 2, "replicas": 2, "output_points": 11,
         "threads": 1, "out": str(tmp_path)}
    )
    rows = _rows(tmp_path / "diffusion.csv")
    assert rows[0] == ["source", "path", "t", "XS", "XSI", "XSS"]
    sources = {row[0] for row in rows[1:]}
    assert sources == {"diffusion", "gillespie"}


def test_exit_codes_for_bad_configs(capsys, tmp_path):
    handler = lln_command.handler()
    assert handler.execute({"dist": "poisson:5", "n": 0, "out": str(tmp_path)}) == EXIT_USAGE
    assert "n: " in capsys.readouterr().err
    assert handler.execute({"dist": "zipf:2", "out": str(tmp_path)}) == EXIT_USAGE

    simulate_code = main(["simulate", "--dist", "poisson:5", "--out", str(tmp_path)])
    assert simulate_code == EXIT_USAGE
    assert "seed" in capsys.readouterr().err


def test_unknown_flag_exits_with_usage_status():
    with pytest.raises(SystemExit) as excinfo:
        main(["lln", "--bogus"])
    assert excinfo.value.code == EXIT_USAGE


def test_singularity_exit_code(monkeypatch, tmp_path):
    def singular(*args, **kwargs):
        raise SingularityError("x_S vanished")

    monkeypatch.setattr(lln_command, "solve_lln", singular)
    assert lln_command.handler().execute({"dist": "poisson:5", "out": str(tmp_path)}) == EXIT_SINGULAR


def test_tolerance_failure_exit_code(monkeypatch):
    monkeypatch.setattr(compare_command, "run_compare", lambda payload: {"command": "compare", "passed": False})
    assert compare_command.handler().execute({}) == EXIT_TOLERANCE


def test_cli_with_config_file(tmp_path, capsys):
    config_file = tmp_path / "run.json"
    config_file.write_text(ujson.dumps({"dist": "regular:3", "alpha_s": 0.5, "beta": 0.0, "T": 2.0}))
    out = tmp_path / "out"
    code = main(["lln", "--config", str(config_file), "--T", "1.0", "--out", str(out)])
    assert code == EXIT_OK
    printed = ujson.loads(capsys.readouterr().out)
    assert printed["command"] == "lln"
    saved = ujson.loads((out / "lln.json").read_text())
    assert saved["config"]["T"] == 1.0
    assert saved["config"]["alpha_s"] == 0.5
    assert saved["final_state"][:3] == pytest.approx([0.5, 0.75, 0.75])


def test_default_output_directory_comes_from_environment(tmp_path):
    run_lln({"dist": "regular:3", "beta": 0.0, "T": 1.0})
    assert (tmp_path / "default" / "lln.json").exists()


def test_simulate_exports_the_simulated_graph(tmp_path):
    result = run_simulate(
        {"dist": "regular:3", "n": 40, "beta": 1.0, "T": 0.5, "seed": 3, "mode": "multigraph",
         "export_graph": True, "threads": 1, "out": str(tmp_path)}
    )
    assert "simulate/replica_0000_edges.csv" in result["files"]
    rows = _rows(tmp_path / "simulate" / "replica_0000_edges.csv")
    assert rows[0] == ["u", "v"]
    assert len(rows) == 61
    saved = ujson.loads((tmp_path / "simulate" / "replica_0000.json").read_text())
    assert saved["trajectory"]["graph"]["edge_count"] == 60


def test_settings_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("NETDIFF_THREADS", "3")
    monkeypatch.setenv("LOG_LEVEL", "debug")
    settings = Settings()
    assert settings.default_threads == 3
    assert settings.log_level == "DEBUG"
    assert settings.output_dir == tmp_path / "default"
    monkeypatch.setenv("NETDIFF_THREADS", "0")
    with pytest.raises(ValidationError):
        Settings()
    monkeypatch.setenv("NETDIFF_THREADS", "")
    monkeypatch.setenv("LOG_LEVEL", "loud")
    with pytest.raises(ValidationError):
        Settings()
