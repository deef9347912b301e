"""End-to-end tests for the `mad` command line."""

from __future__ import annotations

import json
import os

import jsonschema
import pytest

from mad.cli import build_parser, main
from mad.report import REPORT_SCHEMA
from mad.solver import DEFAULT_MODEL_CAP

from test_frontend import BANK_FUNCTIONALITIES, BANK_SQL


SPLIT = {"AccountService": ["Account"], "WalletService": ["Wallet"]}
MONO = {"Mono": ["Account", "Wallet"]}


@pytest.fixture
def bank_inputs(tmp_path):
    schema = tmp_path / "schema.sql"
    schema.write_text(BANK_SQL)
    functionalities = tmp_path / "functionalities.json"
    functionalities.write_text(json.dumps(BANK_FUNCTIONALITIES))
    decomposition = tmp_path / "decomposition.json"
    decomposition.write_text(json.dumps(SPLIT))
    return {
        "schema": str(schema),
        "functionalities": str(functionalities),
        "decomposition": str(decomposition),
        "dir": tmp_path,
    }


def input_args(inputs):
    return [
        "--schema", inputs["schema"],
        "--functionalities", inputs["functionalities"],
        "--decomposition", inputs["decomposition"],
    ]


def analyze_args(inputs, out_dir, solver, *extra):
    return (["analyze"] + input_args(inputs)
            + ["--solver", solver, "-o", str(out_dir)] + list(extra))


def load_report(out_dir):
    with open(os.path.join(str(out_dir), "report.json"), encoding="utf-8") as fh:
        report = json.load(fh)
    jsonschema.validate(report, REPORT_SCHEMA)
    return report


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def test_parser_defaults(bank_inputs):
    args = build_parser().parse_args(
        analyze_args(bank_inputs, "out", "z3"))
    assert args.command == "analyze"
    assert args.mcl == 4
    assert args.threads is None
    assert not args.no_divide_and_conquer
    assert args.model_cap == DEFAULT_MODEL_CAP
    assert args.format == "both"
    assert args.dump_smt is None

    oracle = build_parser().parse_args(["oracle"] + input_args(bank_inputs))
    assert oracle.command == "oracle"
    assert oracle.instances == 2
    assert oracle.rows == 1
    assert oracle.subset is None
    assert oracle.bound is None


# ---------------------------------------------------------------------------
# analyze: error paths (no solver needed)
# ---------------------------------------------------------------------------

def test_analyze_missing_input_file(bank_inputs, tmp_path, capsys):
    argv = analyze_args(bank_inputs, tmp_path / "out", "z3")
    argv[argv.index("--schema") + 1] = str(tmp_path / "nope.sql")
    assert main(argv) == 1
    err = capsys.readouterr().err
    assert err.startswith("mad: error:")
    assert "nope.sql" in err
    assert not (tmp_path / "out" / "report.json").exists()


def test_analyze_unparsable_input(bank_inputs, tmp_path, capsys):
    (bank_inputs["dir"] / "bad.json").write_text("{not json")
    argv = analyze_args(bank_inputs, tmp_path / "out", "z3")
    argv[argv.index("--decomposition") + 1] = str(bank_inputs["dir"] / "bad.json")
    assert main(argv) == 1
    assert "mad: error:" in capsys.readouterr().err


def test_analyze_rejects_bad_mcl(bank_inputs, tmp_path, capsys):
    argv = analyze_args(bank_inputs, tmp_path / "out", "z3", "--mcl", "2")
    assert main(argv) == 1
    assert "at least 3" in capsys.readouterr().err


def test_analyze_rejects_missing_solver(bank_inputs, tmp_path, capsys):
    argv = analyze_args(bank_inputs, tmp_path / "out",
                        str(tmp_path / "no-such-solver"))
    assert main(argv) == 1
    assert "solver" in capsys.readouterr().err.lower()


# ---------------------------------------------------------------------------
# analyze: full runs
# ---------------------------------------------------------------------------

def test_analyze_bank_split(bank_inputs, tmp_path, solver_path, capsys):
    out = tmp_path / "out"
    code = main(analyze_args(bank_inputs, out, solver_path, "--emit-chop",
                             "--dump-smt", str(tmp_path / "smt")))
    assert code == 0

    report = load_report(out)
    assert report["status"] == "complete"
    assert report["totals"]["core"] >= 1
    assert report["totals"]["by_type"]["ReadSkew"] >= 1
    subsets = sorted(tuple(c["subset"]) for c in report["combinations"])
    assert subsets == [("Total",), ("Total", "Transfer"), ("Transfer",)]
    assert all(c["status"] == "complete" for c in report["combinations"])

    # the read-skew core spans both functionalities and both entities
    cores = [a for a in report["anomalies"] if a["kind"] == "core"]
    assert any(a["functionalities"] == ["Total", "Transfer"]
               and a["entities"] == ["Account", "Wallet"] for a in cores)

    # table artifacts (default --format both)
    text = (out / "report.txt").read_text()
    assert "#CA" in text and "ET(s)" in text
    assert capsys.readouterr().out == text

    # chop.json names every sub-transaction
    chop_doc = json.loads((out / "chop.json").read_text())
    names = {s["name"] for s in chop_doc["sub_transactions"]}
    assert names == {"Total_0", "Total_1", "Transfer_0", "Transfer_1"}

    # every subset's ground problem was dumped
    dumped = sorted(os.listdir(tmp_path / "smt"))
    assert dumped == ["comb_Total.smt2", "comb_Total_Transfer.smt2",
                      "comb_Transfer.smt2"]


def test_analyze_mono_finds_nothing(bank_inputs, tmp_path, solver_path):
    mono = bank_inputs["dir"] / "mono.json"
    mono.write_text(json.dumps(MONO))
    argv = analyze_args(bank_inputs, tmp_path / "out", solver_path,
                        "--format", "json")
    argv[argv.index("--decomposition") + 1] = str(mono)
    assert main(argv) == 0
    report = load_report(tmp_path / "out")
    assert report["totals"]["total"] == 0
    assert report["anomalies"] == []


def test_analyze_format_json_writes_no_tables(bank_inputs, tmp_path,
                                              solver_path, capsys):
    out = tmp_path / "out"
    code = main(analyze_args(bank_inputs, out, solver_path,
                             "--format", "json", "--mcl", "3"))
    assert code == 0
    assert (out / "report.json").exists()
    assert not (out / "report.txt").exists()
    assert not (out / "chop.json").exists()
    assert capsys.readouterr().out == ""


def test_analyze_partial_exit_code(bank_inputs, tmp_path, solver_path, capsys):
    out = tmp_path / "out"
    code = main(analyze_args(bank_inputs, out, solver_path,
                             "--global-timeout", "0.0001", "--format", "json"))
    assert code == 2
    report = load_report(out)
    assert report["status"] == "partial"
    assert report["warnings"]
    assert all(c["status"] in ("skipped", "timeout")
               for c in report["combinations"])


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def oracle_args(inputs, *extra):
    return ["oracle"] + input_args(inputs) + list(extra)


def read_verdict(capsys):
    return json.loads(capsys.readouterr().out)


def test_oracle_bank_split_is_anomalous(bank_inputs, capsys):
    assert main(oracle_args(bank_inputs)) == 0
    verdict = read_verdict(capsys)
    assert verdict["anomalous"] is True
    assert verdict["partial"] is False
    assert verdict["subset"] == ["Total", "Transfer"]
    assert verdict["schedules_checked"] >= 1
    assert verdict["domain"] == {"rows_per_table": 1,
                                 "instances_per_functionality": 2}


def test_oracle_single_functionality_is_clean(bank_inputs, capsys):
    assert main(oracle_args(bank_inputs, "--subset", "Total")) == 0
    verdict = read_verdict(capsys)
    assert verdict["anomalous"] is False
    assert verdict["partial"] is False


def test_oracle_mono_is_clean(bank_inputs, capsys):
    mono = bank_inputs["dir"] / "mono.json"
    mono.write_text(json.dumps(MONO))
    argv = oracle_args(bank_inputs)
    argv[argv.index("--decomposition") + 1] = str(mono)
    assert main(argv) == 0
    assert read_verdict(capsys)["anomalous"] is False


def test_oracle_bound_reports_partial(bank_inputs, capsys):
    mono = bank_inputs["dir"] / "mono.json"
    mono.write_text(json.dumps(MONO))
    argv = oracle_args(bank_inputs, "--bound", "1")
    argv[argv.index("--decomposition") + 1] = str(mono)
    assert main(argv) == 2
    verdict = read_verdict(capsys)
    assert verdict["partial"] is True
    assert verdict["anomalous"] is False
    assert verdict["schedules_checked"] == 1


def test_oracle_unknown_subset(bank_inputs, capsys):
    assert main(oracle_args(bank_inputs, "--subset", "Nope")) == 1
    err = capsys.readouterr().err
    assert "unknown functionality" in err
    assert "Total" in err
