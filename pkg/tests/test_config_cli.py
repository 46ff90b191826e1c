import json
from pathlib import Path

import pytest
import yaml

from frd import cli, config

GOLDEN = Path(__file__).parent / "golden"


def write_config(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def test_defaults_validate():
    cfg = config.load()
    assert cfg["geometry"] == {"L": 3, "N": 2, "d": 2, "m": 1}
    assert cfg.index_set().order == 1


@pytest.mark.parametrize("doc,key", [
    ({"geometry": {"L": 4}}, "geometry.L"),
    ({"geometry": {"N": 0}}, "geometry.N"),
    ({"geometry": {"m": 1.5}}, "geometry.m"),
    ({"geometry": {"colour": 1}}, "geometry.colour"),
    ({"decomposition": {"kind": "final", "n": 2, "n_tilde": 2}}, "decomposition.n_tilde"),
    ({"decomposition": {"K": -1.0}}, "decomposition.K"),
    ({"decomposition": {"quadrature": "simpson"}}, "decomposition.quadrature"),
    ({"generator": {"kind": "random", "omega0": 1.0, "Omega0": 1.0}}, "generator.Omega0"),
    ({"generator": {"omega0": 1.5, "Omega0": 2.0}}, "generator.omega0"),
    ({"multi_indices": [[0, 0]]}, "multi_indices"),
    ({"renorm": {"k": 2}}, "renorm.k"),
    ({"sweep": {"N": [3]}}, "sweep.N"),
    ({"tolerances": {"identity": 0}}, "tolerances.identity"),
    ({"tolerances": {"bogus": 1.0}}, "tolerances.bogus"),
])
def test_validation_names_the_key(doc, key):
    with pytest.raises(config.ConfigError) as err:
        config.validate(doc)
    assert str(err.value).startswith(key + ":")


def test_tolerance_scaling_leaves_sigma_limits():
    cfg = config.load().scaled_tolerances(10.0)
    assert cfg.tolerances["identity"] == pytest.approx(1e-9)
    assert cfg.tolerances["residual_sigmas"] == 5.0


def test_with_N_revalidates():
    cfg = config.validate({"renorm": {"k": 1}, "geometry": {"N": 3}})
    assert cfg.with_N(2)["geometry"]["N"] == 2
    with pytest.raises(config.ConfigError):
        cfg.with_N(1)


def test_decompose_writes_scales_and_matches_golden(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["decompose", "--out", str(out)]) == cli.EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == ["decomposition.json", "report.csv", "report.json", "scale_1.json",
                     "scale_2.json", "scale_3.json", "summary.json"]
    assert (out / "decomposition.json").read_bytes() == (GOLDEN / "decomposition_default.json").read_bytes()
    header = (out / "report.csv").read_text().splitlines()[0]
    assert header == "suite,k,j,quantity,measured,bound,ratio,pass"
    summary = json.loads((out / "summary.json").read_text())
    assert [s["k"] for s in summary["scales"]] == [1, 2, 3]


def test_decompose_is_deterministic_across_workers(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["decompose", "--out", str(a)])
    cli.main(["decompose", "--out", str(b), "--workers", "3"])
    for name in ("decomposition.json", "report.json", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_bad_config_exit_code(tmp_path, capsys):
    path = write_config(tmp_path, {"geometry": {"L": 2}})
    assert cli.main(["decompose", "--config", path, "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert "geometry.L" in capsys.readouterr().err
    assert cli.main(["decompose", "--config", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG
    assert cli.main(["decompose", "--tol-scale", "0", "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_construction_failure_exit_code(tmp_path):
    path = write_config(tmp_path, {"decomposition": {"kind": "final", "K": 1e-12}})
    out = tmp_path / "o"
    assert cli.main(["decompose", "--config", path, "--out", str(out)]) == cli.EXIT_BUILD
    rep = json.loads((out / "report.json").read_text())
    assert rep["ok"] is False and rep["rows"][0]["suite"] == "construction"


def test_failed_check_exit_code(tmp_path):
    path = write_config(tmp_path, {"tolerances": {"range": 1e-30}})
    assert cli.main(["decompose", "--config", path, "--out", str(tmp_path / "o")]) == cli.EXIT_FAIL


def test_verify_defaults(tmp_path):
    out = tmp_path / "v"
    assert cli.main(["verify", "--out", str(out)]) == cli.EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    suites = {r["suite"] for r in rep["rows"]}
    assert {"identity", "range", "psd", "tail", "symbol", "tail_independence",
            "derivative_consistency", "akm_fourier_upper"} <= suites


def test_sample_seeds(tmp_path):
    path = write_config(tmp_path, {"sample": {"scale": 1, "count": 2000, "export": True}})
    a, b, c = (tmp_path / n for n in "abc")
    assert cli.main(["sample", "--config", path, "--out", str(a), "--seed", "5"]) == cli.EXIT_OK
    cli.main(["sample", "--config", path, "--out", str(b), "--seed", "5", "--workers", "2"])
    cli.main(["sample", "--config", path, "--out", str(c), "--seed", "6"])
    assert (a / "samples.txt").read_bytes() == (b / "samples.txt").read_bytes()
    assert (a / "samples.txt").read_bytes() != (c / "samples.txt").read_bytes()
    assert len(json.loads((a / "residuals.json").read_text())) == 20


def test_renorm_command(tmp_path):
    path = write_config(tmp_path, {"geometry": {"N": 3}, "renorm": {"count": 2000, "mc_count": 20000}})
    out = tmp_path / "r"
    code = cli.main(["renorm", "--config", path, "--out", str(out)])
    rep = json.loads((out / "report.json").read_text())
    failed = [r for r in rep["rows"] if not r["pass"]]
    assert code == (cli.EXIT_OK if not failed else cli.EXIT_FAIL)
    toy = [r for r in rep["rows"] if r["suite"] == "hs_toy"][0]
    assert toy["pass"]
    assert all(r["pass"] for r in rep["rows"] if r["suite"] in ("coarse_routes", "localization"))


def test_sweep_command(tmp_path):
    path = write_config(tmp_path, {"sweep": {"N": [2, 3]}, "renorm": {"mc_count": 2000}})
    out = tmp_path / "s"
    code = cli.main(["sweep", "--config", path, "--out", str(out)])
    rep = json.loads((out / "report.json").read_text())
    assert code == (cli.EXIT_OK if rep["ok"] else cli.EXIT_FAIL)
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "N,hs_top,identity,range"
    assert len(lines) == 3
    assert "hs_ratio" in rep["fitted"]
