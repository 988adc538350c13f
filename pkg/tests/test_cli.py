import csv
import hashlib
import json
import math

import pytest

from stabdev import cli
from stabdev.config import ConfigError, ExperimentConfig
from stabdev.io import csv_text, format_value, json_text


def run(tmp_path, *args, config=None, name="cfg.ini"):
    argv = list(args)
    if config is not None:
        p = tmp_path / name
        p.write_text(config)
        argv += ["--config", str(p)]
    out = tmp_path / "out"
    return cli.main(argv + ["--out", str(out)]), out


def read_json(path):
    return json.loads(path.read_text())


# --- io -------------------------------------------------------------------------


def test_csv_format_is_fixed():
    text = csv_text(["a", "b", "c"], [[0.1, "x,y", True], {"a": math.inf, "b": None, "c": 3}])
    assert text == 'a,b,c\n0.10000000000000001,"x,y",true\ninf,,3\n'
    assert format_value(math.nan) == "nan"
    assert float(format_value(1 / 3)) == 1 / 3


def test_json_sorted_and_nonfinite_as_strings():
    assert json_text({"b": math.inf, "a": 1}) == '{\n  "a": 1,\n  "b": "inf"\n}\n'


# --- config ---------------------------------------------------------------------


def test_config_canonical_ignores_order_and_whitespace():
    a = ExperimentConfig.from_text("[experiment]\nlam = 5\nn=10\n[window]\nd = 2\n")
    b = ExperimentConfig.from_text("[window]\n d=2\n\n[experiment]\nn = 10\nlam=5\n")
    assert a.canonical() == b.canonical() == "experiment.lam=5\nexperiment.n=10\nwindow.d=2\n"
    assert a.digest() == hashlib.sha256(a.canonical().encode()).hexdigest()


@pytest.mark.parametrize(
    "text,field",
    [
        ("[experiment]\nlams = 10, -5\n", "[experiment] lams"),
        ("[experiment]\nbogus = 1\n", "[experiment] bogus"),
        ("[nowhere]\nx = 1\n", "[nowhere]"),
        ("[window]\nsides = 0\n", "[window] sides"),
        ("[functional]\nfamily = spline\n", "[functional] family"),
    ],
)
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as exc:
        cfg = ExperimentConfig.from_text(text)
        cfg.get_floats("experiment", "lams", positive=True)
        cfg.window()
        cfg.spec()
    assert exc.value.field == field
    assert field in str(exc.value)


def test_config_builds_domain_objects():
    cfg = ExperimentConfig.from_text(
        "[functional]\nfamily = knn_edge\nk = 2\ns = 0.5\ndirection = undirected\n"
        "[window]\nd = 2\ntopology = box\nsides = 2, 1\n"
        "[intensity]\nkind = product\naxis1 = 0:0.5 2:0.5\naxis2 = 0:0 1:2\n"
        "[test_function]\nkind = box\nlo = 0, 0\nhi = 1, 1\n"
    )
    spec = cfg.spec()
    assert spec.family == "knn_edge" and spec.params["k"] == 2 and spec.params["direction"] == "undirected"
    assert cfg.window().sides == (2.0, 1.0)
    assert cfg.density(10.0).kind == "product"
    assert cfg.test_function().kind == "box"


# --- commands --------------------------------------------------------------------


def test_help_documents_flags_and_env(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.build_parser().parse_args(["simulate", "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for flag in ("--config", "--seed", "--threads", "--out", cli.OUT_ENV):
        assert flag in out


def test_top_level_help_lists_commands(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.build_parser().parse_args(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert "99% intervals" in out and "mdp-check" in out
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["tail", "--help"])
    assert "99% intervals" in capsys.readouterr().out


def test_all_subcommands_exist():
    sub = next(a for a in cli.build_parser()._actions if a.dest == "cmd")
    assert set(sub.choices) == {
        "simulate", "cumulants", "variance", "stab", "paircorr", "tail", "ratio",
        "rss-check", "mdp-check", "bounds-eval", "rate-eval",
    }


def test_cumulants_of_degenerate_constant_config(tmp_path):
    code, out = run(tmp_path, "cumulants", config="[functional]\nfamily = constant\nc = 0\n[experiment]\nlam = 20\nn = 200\n")
    assert code == 0
    rows = {r["order"]: r["estimate"] for r in read_json(out / "cumulants.json")["summary"]["cumulants"]}
    assert rows[2] == rows[3] == rows[4] == 0.0


def test_negative_lam_is_config_error(tmp_path, capsys):
    code, _ = run(tmp_path, "simulate", config="[experiment]\nlam = -3\n")
    assert code == 1
    assert "[experiment] lam" in capsys.readouterr().err


def test_unknown_family_and_flag_exit_1(tmp_path, capsys):
    code, _ = run(tmp_path, "simulate", config="[functional]\nfamily = blob\n")
    assert code == 1 and "[functional] family" in capsys.readouterr().err
    assert cli.main(["simulate", "--no-such-flag"]) == 1
    assert cli.main(["frobnicate"]) == 1
    assert cli.main(["simulate", "--seed", "-1"]) == 1
    assert cli.main(["simulate", "--seed", str(2**64)]) == 1


def test_rss_check_default_passes(tmp_path):
    code, out = run(tmp_path, "rss-check")
    assert code == 0
    with open(out / "rss-check.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and {r["status"] for r in rows} == {"pass"}
    v = read_json(out / "rss-check.json")
    assert v["pass"] is True and v["rows"] == len(rows)
    assert set(v) >= {"experiment", "pass", "rows", "seed", "config_digest"}


def test_verdict_failure_exit_2(tmp_path):
    code, out = run(tmp_path, "mdp-check")
    assert code == 2
    assert read_json(out / "mdp-check.json")["pass"] is False


def test_digest_matches_independent_hash(tmp_path):
    code, out = run(tmp_path, "simulate", "--seed", "17", config="[experiment]\nn = 20\nlam = 30\n")
    assert code == 0
    canon = (out / "simulate.config.txt").read_bytes()
    v = read_json(out / "simulate.json")
    assert v["config_digest"] == hashlib.sha256(canon).hexdigest()
    assert v["seed"] == 17 and b"experiment.seed=17\n" in canon
    lines = canon.decode().splitlines()
    assert lines == sorted(lines)
    # shuffled input, same content -> same digest
    code, out2 = run(tmp_path, "simulate", "--seed", "17", config="[experiment]\nlam=30\n\nn=20\n", name="b.ini")
    assert read_json(out2 / "simulate.json")["config_digest"] == v["config_digest"]


def test_wall_time_in_sidecar_only(tmp_path):
    _, out = run(tmp_path, "simulate", config="[experiment]\nn = 10\n")
    assert "wall_time_s" in read_json(out / "simulate.timing.json")
    assert "wall_time_s" not in (out / "simulate.json").read_text()


def test_env_var_sets_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    cfg = tmp_path / "c.ini"
    cfg.write_text("[experiment]\nn = 5\n")
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    assert (tmp_path / "envout" / "simulate.csv").exists()


SMALL = {
    "simulate": "[functional]\nfamily = knn_edge\nk = 1\ns = 0.5642\n[experiment]\nlam = 200\nn = 60\n",
    "stab": "[functional]\nfamily = knn_edge\nk = 1\ns = 0.5642\n[experiment]\nlam = 300\nn = 120\nprobe_r0 = 0.0005\n",
    "paircorr": "[functional]\nfamily = knn_edge\nk = 1\ns = 0.5642\n[experiment]\nlam = 200\nn = 60\nseparations = 0.02, 0.1\n",
    "tail": "[experiment]\nlam = 40\nn = 300\nthresholds = 0, 5, 10\n",
}


@pytest.mark.parametrize("cmd", sorted(SMALL))
def test_outputs_byte_identical_across_threads(tmp_path, cmd):
    outs = []
    for threads in ("1", "8"):
        d = tmp_path / f"t{threads}"
        d.mkdir()
        code, out = run(d, cmd, "--threads", threads, "--seed", "99", config=SMALL[cmd])
        assert code == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if "timing" not in p.name})
    assert outs[0] == outs[1]


def test_bounds_eval(tmp_path):
    code, out = run(tmp_path, "bounds-eval", "--what", "delta-gamma", "--gamma", "0", "--Delta", "100")
    assert code == 0
    assert read_json(out / "bounds-eval.json")["summary"]["Delta_gamma"] == pytest.approx(3.9284, abs=5e-5)
    code, out = run(tmp_path, "bounds-eval", "--what", "br", "--y", "2", "--H", "1", "--Delta", "1")
    assert read_json(out / "bounds-eval.json")["summary"]["bound"] == pytest.approx(math.exp(-0.5))
    code, out = run(tmp_path, "bounds-eval", "--what", "rss", "--y", "5", "--Delta", "100")
    assert code == 1


def test_rate_eval(tmp_path):
    code, out = run(tmp_path, "rate-eval", "--t", "2", "--Q", "1")
    assert code == 0 and read_json(out / "rate-eval.json")["summary"]["rate"] == 2.0
    code, out = run(tmp_path, "rate-eval", "--t", "1", "--Q", "0")
    assert read_json(out / "rate-eval.json")["summary"]["rate"] == "inf"
    rho = tmp_path / "rho.csv"
    rho.write_text("rho,reference,weight\n1,1,0.5\n2,0.5,0.5\n")
    code, out = run(tmp_path, "rate-eval", "--rho-csv", str(rho))
    assert code == 0 and read_json(out / "rate-eval.json")["summary"]["rate"] == pytest.approx(0.75)
    assert run(tmp_path, "rate-eval")[0] == 1
