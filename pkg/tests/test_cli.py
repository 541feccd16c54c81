import json

import numpy as np
import pytest

from bgformula.cli import main
from bgformula.config import config_from_dict, flatten, load_config, with_overrides
from bgformula.errors import ConfigError

FAST = ["--n-iter", "120", "--n-burn", "40", "--set", "bart.num_trees=10", "--set", "mcmc.thin=4",
        "--K", "300", "--R", "5"]


# -- configuration --------------------------------------------------------------------

def test_defaults_and_profiles():
    cfg = load_config()
    assert (cfg.mcmc.n_iter, cfg.mcmc.n_burn) == (15000, 10000)
    assert cfg.estimate.specs == ("bs", "cov", "cov-bs") and cfg.estimate.censoring_at == "treated"
    long = load_config(text="[mcmc]\nprofile = long\n")
    assert (long.mcmc.n_iter, long.mcmc.n_burn) == (25000, 15000)


def test_ini_and_overrides():
    cfg = load_config(text="[data]\nsource = toy\nT = 2\np_a = 0.2, 0.3, 0.4, 0.5\n"
                           "[estimate]\nregimes = always; static:0,1\nspecs = cov, parametric\n",
                      overrides={"montecarlo.K": "77"})
    assert cfg.data.T == 2 and cfg.data.p_a == (0.2, 0.3, 0.4, 0.5)
    assert [r.name for r in cfg.regime_objects()] == ["always", "static-01"]
    assert cfg.spec_objects()[1] == "parametric" and cfg.montecarlo.K == 77
    assert with_overrides(cfg, montecarlo={"K": 5}).montecarlo.K == 5


def test_dict_round_trip():
    cfg = load_config(text="[data]\nsource = mixed\nquad = 0.25\n[bart]\nleaf_scale = 1.5\n")
    again = config_from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert flatten({"estimate": {"regimes": ["a", "b"]}}) == {"estimate.regimes": "a;b"}


@pytest.mark.parametrize("text", [
    "[data]\nsource = nowhere\n", "[nope]\nx = 1\n", "[data]\nn = many\n",
    "[estimate]\nspecs = magic\n", "[estimate]\nregimes = sometimes\n", "[mcmc]\nprofile = short\n",
    "[estimate]\nregimes = natural\n[data]\nsource = toy\nT = 2\n", "[data]\nbogus = 1\n",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        load_config(text=text)


# -- command line -----------------------------------------------------------------------

def test_simulate_writes_csv_schema_and_manifest(tmp_path, capsys):
    dest = tmp_path / "d.csv"
    assert main(["simulate", "--dgp", "toy", "--T", "2", "--n", "50", "-o", str(dest)]) == 0
    assert dest.exists() and dest.with_suffix(".schema.ini").exists()
    manifest = json.loads(dest.with_suffix(".manifest.json").read_text())
    assert manifest["config"]["data"]["n"] == 50 and "numpy" in manifest["versions"]
    assert "subjects=50" in capsys.readouterr().out


def test_estimate_replay_and_report(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    args = ["estimate", "--dgp", "toy", "--T", "2", "--n", "300", "--regimes", "always;never",
            "--specs", "cov,parametric", *FAST]
    assert main(args + ["--out", str(a)]) == 0
    assert main(["estimate", "--manifest", str(a / "manifest.json"), "--out", str(b)]) == 0
    for name in ("summary.csv", "draws_BART-Cov_always.csv", "draws_Parametric_never.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    capsys.readouterr()
    assert main(["report", str(a / "draws_BART-Cov_always.csv"), str(a / "draws_BART-Cov_never.csv"),
                 str(a / "draws_Parametric_always.csv"), str(a / "draws_Parametric_never.csv"),
                 "-o", str(tmp_path / "r.csv")]) == 0
    lines = (a / "summary.csv").read_text().splitlines()
    assert sorted((tmp_path / "r.csv").read_text().splitlines()) == sorted(lines)


def test_estimate_from_csv(tmp_path):
    dest = tmp_path / "d.csv"
    main(["simulate", "--dgp", "mixed", "--T", "2", "--n", "200", "-o", str(dest)])
    out = tmp_path / "o"
    out.mkdir()
    rc = main(["estimate", "--data", str(dest), "--schema", str(dest.with_suffix(".schema.ini")),
               "--T", "2", "--regimes", "always;threshold:L2:0.5", "--specs", "bs", *FAST,
               "--out", str(out)])
    assert rc == 0 and (out / "draws_BART-BS_L2_0.5.csv").exists()


def test_oracle_command(tmp_path, capsys):
    assert main(["oracle", "--dgp", "toy", "--T", "2", "--n", "2000", "--regimes", "always;never",
                 "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "regime,t_star,plugin_risk" and len(out) == 1 + 4 + 2
    assert (tmp_path / "oracle.csv").exists()


def test_exit_codes(tmp_path):
    bad_csv = tmp_path / "bad.csv"
    bad_csv.write_text("id,t,a,c_next,y_next,L\np,0,0,0,0,0\np,2,0,0,1,0\n")
    schema = tmp_path / "s.ini"
    schema.write_text("[L]\ntype = binary\n")
    small = tmp_path / "small.csv"
    small.write_text("id,t,a,c_next,y_next,L\np,0,0,0,1,0\nq,0,1,0,0,1\n")
    out = tmp_path / "o"
    out.mkdir()
    common = ["--T", "1", "--schema", str(schema), "--out", str(out)]
    # I/O: output directory missing
    assert main(["estimate", "--dgp", "toy", "--T", "2", "--out", str(tmp_path / "missing")]) == 1
    # the toy DGP has at most three periods
    assert main(["estimate", "--dgp", "toy", "--out", str(out)]) == 2
    assert main(["estimate", "--config", str(tmp_path / "none.ini"), "--out", str(out)]) == 2
    assert main(["estimate", "--specs", "magic", "--out", str(out)]) == 2
    assert main(["benchmark", "--data", str(small), *common]) == 2
    # data validation: gap in the periods
    assert main(["estimate", "--data", str(bad_csv), "--T", "3", "--schema", str(schema),
                 "--out", str(out)]) == 3
    # numerical: two subjects cannot support a logistic fit
    assert main(["estimate", "--data", str(small), "--specs", "parametric", "--regimes", "always",
                 *common]) == 4


def test_four_monotone_initiation_regimes(tmp_path, capsys):
    regimes = "static:1,1,1,1;static:0,1,1,1;static:0,0,1,1;static:0,0,0,1"
    assert main(["estimate", "--dgp", "mixed", "--T", "4", "--n", "400", "--regimes", regimes,
                 "--specs", "cov", *FAST, "--out", str(tmp_path)]) == 0
    rows = [r.split(",") for r in (tmp_path / "summary.csv").read_text().splitlines()[1:]]
    assert len(rows) == 4 * 4
    for reg in {r[0] for r in rows}:
        mean = [float(r[3]) for r in rows if r[0] == reg]
        assert len(mean) == 4 and all(np.diff(mean) >= 0)


def test_natural_course_with_all_estimators(tmp_path):
    assert main(["estimate", "--dgp", "sim51", "--T", "2", "--n", "300", "--regimes", "natural",
                 "--specs", "bs,cov,cov-bs,parametric", *FAST, "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "summary.csv").read_text().splitlines()[1:]
    assert sorted({r.split(",")[1] for r in rows}) == ["BART-BS", "BART-Cov", "BART-Cov-BS",
                                                       "Parametric"]
    assert len(rows) == 4 * 2


def test_parametric_only_benchmark(tmp_path):
    truth = tmp_path / "truth.json"
    truth.write_text(json.dumps({"risk": [0.2, 0.3, 0.4, 0.45, 0.5]}))
    assert main(["benchmark", "--dgp", "sim51", "--n", "300", "--specs", "parametric",
                 "--regimes", "natural", "--n-reps", "2", "--K", "300", "--truth", str(truth),
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "benchmark.csv").read_text().splitlines()
    assert len(lines) == 2 + 5 and all(r.startswith("Parametric,natural,") for r in lines[2:])
