import csv
import io
import json
from fractions import Fraction

import pytest

from exactdecision.cli import main
from exactdecision.combinatorics import InvariantError
from exactdecision.criteria import ConfigError
from exactdecision.records import RunConfig, TrialRecord, sepsis_trial
from exactdecision.report import render_decimal

SEPSIS = TrialRecord(28, 14, 12, 2, 5, 9, "sepsis")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def exact(cell):
    return Fraction(cell["value_num"], cell["value_den"])


# -- records and config ------------------------------------------------------------


def test_trial_record_round_trips():
    assert TrialRecord.from_json(SEPSIS.to_json()) == SEPSIS
    assert TrialRecord.from_csv(SEPSIS.to_csv()) == SEPSIS
    bare = TrialRecord(2, 1, 1, 0, 1, 0)
    assert TrialRecord.from_csv(bare.to_csv()) == bare


def test_bundled_sepsis_record():
    t = sepsis_trial()
    assert (t.n, t.m, t.x_I1, t.x_I0, t.x_C1, t.x_C0) == (28, 14, 12, 2, 5, 9)


def test_margin_violation_names_the_arm():
    with pytest.raises(InvariantError, match="intervention"):
        TrialRecord(28, 14, 12, 3, 5, 9).validate()
    with pytest.raises(InvariantError, match="control"):
        TrialRecord(28, 14, 12, 2, 5, 8).validate()


@pytest.mark.parametrize(
    "field,value",
    [("efficacy_weight", "0"), ("unsafe_weight", "abc"), ("m_policy", "third"), ("digits", -1), ("format", "xml"), ("workers", 0), ("deterministic", False)],
)
def test_config_errors_name_the_field(field, value):
    with pytest.raises(ConfigError) as info:
        RunConfig(**{field: value}).validate()
    assert info.value.field == field


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"digits": 5, "format": "csv"}))
    assert RunConfig.from_file(cfg).digits == 5
    code, out, _ = run(capsys, "decide", "--sepsis", "--rule", "es", "--config", str(cfg), "--format", "json")
    assert code == 0
    assert json.loads(out)["action_probability"]["value_decimal"] == "1.00000"
    cfg.write_text(json.dumps({"seed": 3}))
    code, _, err = run(capsys, "analyze", "--sepsis", "--config", str(cfg))
    assert code == 2 and "seed" in err


def test_render_decimal_half_even():
    assert render_decimal(Fraction(1, 8), 2) == "0.12"
    assert render_decimal(Fraction(3, 8), 2) == "0.38"
    assert render_decimal(Fraction(-5, 1000), 2) == "0.00"
    assert render_decimal(Fraction(637, 4140), 3) == "0.154"
    assert render_decimal(Fraction(-1, 3), 4) == "-0.3333"
    assert render_decimal(Fraction(5, 2), 0) == "2"


# -- analyze / decide ---------------------------------------------------------------


def test_analyze_sepsis_json(capsys):
    code, out, _ = run(capsys, "analyze", "--sepsis")
    assert code == 0
    doc = json.loads(out)
    assert doc["strata_candidates"] == 4495
    assert doc["positive_support"] == 1260
    assert [row["theta"] for row in doc["mle"]] == [[0, 21, 7, 0]]
    assert exact(doc["mle"][0]["likelihood"]) == Fraction(637, 4140)
    assert len(doc["top_likelihoods"]) == 5
    assert exact(doc["fisher_p"]) == Fraction(4, 437)
    assert {k: exact(v) for k, v in doc["rules"].items()} == {
        "ml": 1, "bayes": 1, "es": 1, "frechet": 1, "coinflip": Fraction(1, 2)
    }
    assert doc["posterior_means"]["efficacious"]["value_decimal"] == "14.969"


def test_analyze_two_person_flags_and_csv(capsys):
    code, out, _ = run(capsys, "analyze", "--n", "2", "--m", "1", "--xi1", "1", "--xi0", "0", "--xc1", "1", "--xc0", "0", "--top", "2")
    assert code == 0
    doc = json.loads(out)
    assert doc["mle"][0]["theta"] == [2, 0, 0, 0]
    assert exact(doc["rules"]["bayes"]) == 0
    assert exact(doc["rules"]["frechet"]) == Fraction(1, 2)
    code, out, _ = run(capsys, "analyze", "--sepsis", "--format", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert len(rows) > 5


def test_analyze_from_trial_file(tmp_path, capsys):
    path = tmp_path / "t.csv"
    path.write_text(SEPSIS.to_csv())
    code, out, _ = run(capsys, "analyze", "--trial", str(path))
    assert code == 0 and json.loads(out)["trial"]["label"] == "sepsis"


def test_analyze_reports_missing_and_bad_input(capsys):
    code, _, err = run(capsys, "analyze", "--n", "4")
    assert code == 2 and "--m" in err
    code, _, err = run(capsys, "analyze", "--n", "4", "--m", "2", "--xi1", "2", "--xi0", "1", "--xc1", "0", "--xc0", "2")
    assert code == 2 and "intervention" in err
    code, _, err = run(capsys, "analyze", "--trial", "/nonexistent/trial.json")
    assert code == 3 and "/nonexistent/trial.json" in err


def test_decide_frechet_explains_threshold(capsys):
    code, out, _ = run(capsys, "decide", "--sepsis", "--rule", "frechet")
    assert code == 0
    doc = json.loads(out)
    why = doc["explanation"]
    assert exact(doc["action_probability"]) == 1
    assert exact(why["effect"]) == Fraction(1, 2)
    assert exact(why["threshold"]) == Fraction(1, 14)
    assert [exact(c) for c in why["unsafe_share_interval"]] == [0, Fraction(1, 7)]


def test_decide_other_rules(capsys):
    code, out, _ = run(capsys, "decide", "--sepsis", "--rule", "ml")
    assert code == 0 and json.loads(out)["explanation"]["mle"][0]["theta"] == [0, 21, 7, 0]
    code, out, _ = run(capsys, "decide", "--sepsis", "--rule", "coinflip", "--format", "csv")
    assert code == 0 and "0.500" in out
    code, _, err = run(capsys, "decide", "--sepsis", "--rule", "minimax")
    assert code == 2 and "valid rules: ml, bayes, es, frechet, coinflip" in err


def test_decide_point_prior_and_weights(capsys):
    code, out, _ = run(capsys, "decide", "--sepsis", "--rule", "bayes", "--prior", "point", "--prior-point", "28", "0", "0", "0")
    # the point mass on "everyone lives" cannot produce any deaths, so the posterior is undefined
    doc = json.loads(out)
    assert code == 0 and exact(doc["action_probability"]) == Fraction(1, 2)
    assert doc["explanation"]["posterior_means"] is None
    code, out, _ = run(capsys, "analyze", "--sepsis", "--prior", "point", "--prior-point", "28", "0", "0", "0")
    assert code == 0 and json.loads(out)["posterior_means"] is None
    code, out, _ = run(capsys, "decide", "--sepsis", "--rule", "frechet", "--efficacy-weight", "1", "--unsafe-weight", "3")
    assert code == 0 and exact(json.loads(out)["action_probability"]) in (0, Fraction(1, 2), 1)


def test_prior_file(tmp_path, capsys):
    path = tmp_path / "prior.json"
    path.write_text(json.dumps([{"theta": [1, 1, 0, 0], "mass": "1/2"}, {"theta": [0, 2, 0, 0], "mass": "1/2"}]))
    code, out, _ = run(capsys, "decide", "--n", "2", "--m", "1", "--xi1", "1", "--xi0", "0", "--xc1", "0", "--xc0", "1",
                       "--rule", "bayes", "--prior", "file", "--prior-file", str(path))
    assert code == 0 and exact(json.loads(out)["action_probability"]) == 1
    path.write_text(json.dumps([{"theta": [1, 1, 0, 0], "mass": "1/3"}]))
    code, _, err = run(capsys, "analyze", "--n", "2", "--m", "1", "--xi1", "1", "--xi0", "0", "--xc1", "0", "--xc0", "1",
                       "--prior", "file", "--prior-file", str(path))
    assert code == 2 and "prior" in err


# -- sweep ----------------------------------------------------------------------------


def test_sweep_smallest_design(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", "--n-min", "2", "--n-max", "2", "--out", str(tmp_path))
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(
        f"{c}.csv" for c in ("maximin", "maximin_normalized", "bayes", "ml")
    )
    with open(tmp_path / "maximin.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["n", "m", "rule", "value_decimal", "value_num", "value_den"]
    assert [r["rule"] for r in rows] == ["ml", "bayes", "es", "frechet", "coinflip"]
    assert rows[-1]["value_num"] == "0"


def test_sweep_json_subset_and_svg(tmp_path, capsys):
    svg = tmp_path / "svg"
    code, _, _ = run(capsys, "sweep", "--n-min", "2", "--n-max", "6", "--criteria", "bayes,ml",
                     "--format", "json", "--out", str(tmp_path / "o"), "--svg", str(svg))
    assert code == 0
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["bayes.json", "ml.json"]
    doc = json.loads((tmp_path / "o" / "bayes.json").read_text())
    assert doc["criterion"] == "bayes"
    assert {row["n"] for row in doc["rows"]} == {2, 4, 6}
    charts = sorted(p.name for p in svg.iterdir())
    assert charts == ["bayes.svg", "ml.svg"]
    text = (svg / "bayes.svg").read_text()
    assert text.startswith("<svg") and "coin" not in text.lower()
    code, _, _ = run(capsys, "sweep", "--n-min", "2", "--n-max", "4", "--criteria", "maximin",
                     "--out", str(tmp_path / "o2"), "--svg", str(svg), "--svg-coinflip")
    assert code == 0 and "coin" in (svg / "maximin.svg").read_text().lower()


def test_sweep_odd_n_needs_floor_policy(tmp_path, capsys):
    code, _, err = run(capsys, "sweep", "--n-min", "3", "--n-max", "5", "--no-even-only", "--out", str(tmp_path))
    assert code == 2 and "m_policy" in err
    code, _, _ = run(capsys, "sweep", "--n-min", "3", "--n-max", "5", "--no-even-only", "--m-policy", "floor",
                     "--out", str(tmp_path))
    assert code == 0
    with open(tmp_path / "ml.csv", newline="") as fh:
        assert [(r["n"], r["m"]) for r in csv.DictReader(fh)][::5] == [("3", "1"), ("4", "2"), ("5", "2")]


def test_sweep_rejects_bad_ranges(tmp_path, capsys):
    code, _, err = run(capsys, "sweep", "--n-min", "3", "--n-max", "3", "--out", str(tmp_path))
    assert code == 2 and "n_range" in err
    code, _, err = run(capsys, "sweep", "--n-min", "2", "--n-max", "4", "--criteria", "regret", "--out", str(tmp_path))
    assert code == 2 and "criteria" in err


def test_sweep_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "sweep", "--n-min", "2", "--n-max", "2", "--out", str(blocker / "sub"))
    assert code == 3 and str(blocker) in err


def test_sweep_deterministic_across_workers(tmp_path, capsys):
    outs = []
    for w in (1, 3):
        out = tmp_path / f"w{w}"
        assert run(capsys, "sweep", "--n-min", "2", "--n-max", "12", "--workers", str(w), "--out", str(out))[0] == 0
        outs.append({p.name: p.read_bytes() for p in out.iterdir()})
    assert outs[0] == outs[1]


# -- verify ---------------------------------------------------------------------------


def test_verify_passes(capsys):
    code, out, _ = run(capsys, "verify", "--max-n", "8")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 4 and all(line.startswith("PASS") for line in lines)


def test_verify_catches_injected_fault(capsys):
    code, out, _ = run(capsys, "verify", "--max-n", "6", "--inject-sum-from-one")
    assert code == 1
    assert any(line.startswith("FAIL") and "n=2" in line for line in out.splitlines())


def test_undefined_posterior_in_csv(capsys):
    args = ("--sepsis", "--prior", "point", "--prior-point", "28", "0", "0", "0", "--format", "csv")
    code, out, _ = run(capsys, "analyze", *args)
    assert code == 0 and "posterior_mean" not in out
    code, out, _ = run(capsys, "decide", "--rule", "bayes", *args)
    assert code == 0 and "indifferent" in out
