"""
End-to-end tests of the beamchain command line
"""
import json
import os

import pytest

from app import build_parser, format_error, main
from utils.errors import ParseError, SingularShift
from utils.report_builder import VERDICTS, derive_verdict

SCENARIOS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "scenarios")


def scenario(name):
    return os.path.join(SCENARIOS, f"{name}.json")


def read_report(out_dir):
    with open(os.path.join(out_dir, "report.json"), encoding="utf-8") as handle:
        return json.load(handle)


def run_cli(command, name, out_dir, *extra):
    return main([command, "--config", scenario(name), "--out", str(out_dir), "--cells", "16", *extra])


def test_parser_knows_every_subcommand():
    parser = build_parser()
    for command in ("check", "spectrum", "sweep", "simulate", "full"):
        args = parser.parse_args([command, "--config", "x.json"])
        assert args.command == command
        assert args.cells is None and not args.lenient


def test_check_reports_jump_violation(tmp_path):
    assert run_cli("check", "monotonicity_violation", tmp_path) == 1
    report = read_report(tmp_path)
    junction = report["hypotheses"]["monotonicity"]["junctions"][0]
    assert junction["junction"] == 1
    assert junction["violations"] == ["rho(l^1-) = 2 > rho(l^1+) = 1"]
    assert report["verdict"] == "hypotheses-violated"
    assert report["spectral"] is None


def test_check_passes_on_damped_pair(tmp_path):
    assert run_cli("check", "chen87_m2", tmp_path) == 0
    hypotheses = read_report(tmp_path)["hypotheses"]
    assert hypotheses["hypotheses_hold"]
    assert hypotheses["dissipation"]["family"] == "exponential-automatic"
    assert hypotheses["theorem_conditions"]["static_feedback_result_applies"]


def test_every_scenario_checks(tmp_path):
    for name in sorted(os.listdir(SCENARIOS)):
        out = os.path.join(str(tmp_path), name[:-5])
        code = main(["check", "--config", os.path.join(SCENARIOS, name), "--out", out])
        assert code in (0, 1)
        assert read_report(out)["verdict"] in VERDICTS


def test_full_certifies_damped_pair(tmp_path):
    assert run_cli("full", "chen87_m2", tmp_path) == 0
    report = read_report(tmp_path)
    assert report["verdict"] == "exp-stable-certified-numerically"
    assert report["spectral"]["abscissa"] < 0.0
    assert report["spectral"]["kernel_dim"] == 0
    assert report["spectral"]["sweep"]["has_sentinel"] is False
    assert report["dynamic"]["eta"] < 0.0
    for name in ("spectrum.csv", "sweep.csv", "energy.csv"):
        assert os.path.exists(os.path.join(str(tmp_path), name))


def test_full_on_conservative_chain_is_marginal(tmp_path):
    assert run_cli("full", "chen87_m2_conservative", tmp_path) == 1
    report = read_report(tmp_path)
    assert abs(report["spectral"]["abscissa"]) <= 1e-6
    assert report["spectral"]["sweep"]["has_sentinel"] is True
    assert report["dynamic"]["decaying"] is False
    assert report["verdict"] != "exp-stable-certified-numerically"


def test_full_reports_rigid_mode(tmp_path):
    assert run_cli("full", "rigid_mode", tmp_path) == 1
    report = read_report(tmp_path)
    assert report["verdict"] == "rigid-mode"
    assert report["spectral"]["kernel_dim"] == 1
    assert report["dynamic"]["projected"] is True
    assert report["dynamic"]["removed_kernel_weight"] > 0.0
    assert report["dynamic"]["eta"] < 0.0


def test_every_scenario_agrees_on_stability(tmp_path):
    verdicts = {}
    for name in sorted(n[:-5] for n in os.listdir(SCENARIOS) if n.endswith(".json")):
        out = os.path.join(str(tmp_path), name)
        assert run_cli("full", name, out) in (0, 1)
        report = read_report(out)
        spectral, dynamic = report["spectral"], report["dynamic"]
        stable = spectral["abscissa"] < -1e-6
        finite = not spectral["sweep"]["has_sentinel"] and spectral["sweep"]["sup_estimate"] != "inf"
        decaying = dynamic["eta"] < -1e-6
        if spectral["kernel_dim"] > 0:
            assert not stable and not finite, name
            assert dynamic["projected"] and decaying, name
            verdicts[name] = "rigid"
        else:
            assert stable == finite == decaying, name
            verdicts[name] = "stable" if stable else "marginal"

    assert verdicts["chen87_m2"] == "stable"
    assert verdicts["inhomog_m3"] == "stable"
    assert verdicts["chen87_m2_conservative"] == "marginal"
    assert verdicts["clamped_free_uniform"] == "marginal"
    assert verdicts["rigid_mode"] == "rigid"


def test_verdict_is_reproducible_from_report(tmp_path):
    run_cli("full", "chen87_m2", tmp_path)
    report = read_report(tmp_path)
    assert derive_verdict(report) == report["verdict"]

    report["spectral"]["sweep"]["has_sentinel"] = True
    assert derive_verdict(report) == "asymptotic-only"
    report["spectral"]["kernel_dim"] = 1
    assert derive_verdict(report) == "rigid-mode"


def test_spectrum_only_writes_spectrum(tmp_path):
    assert run_cli("spectrum", "inhomog_m3", tmp_path, "--export-matrices") == 0
    files = set(os.listdir(str(tmp_path)))
    assert {"report.json", "spectrum.csv", "A_h.mtx", "M_h.mtx"} <= files
    assert "sweep.csv" not in files and "energy.csv" not in files


def test_flags_override_analysis_block(tmp_path):
    run_cli("check", "chen87_m2", tmp_path, "--beta-max", "50")
    defaults = read_report(tmp_path)["defaults"]
    assert defaults["cells"] == 16
    assert defaults["beta_max"] == 50.0
    assert defaults["samples"] == 256


def test_missing_config_exits_3(tmp_path):
    assert main(["check", "--config", os.path.join(str(tmp_path), "absent.json"), "--out", str(tmp_path)]) == 3


def test_bad_json_exits_3(tmp_path):
    path = os.path.join(str(tmp_path), "broken.json")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("{ not json")
    assert main(["check", "--config", path, "--out", str(tmp_path)]) == 3


def test_too_few_cells_exits_2(tmp_path):
    assert run_cli("check", "chen87_m2", tmp_path, "--cells", "4") == 2


def test_unknown_field_needs_lenient(tmp_path):
    with open(scenario("chen87_m2"), encoding="utf-8") as handle:
        doc = json.load(handle)
    doc["analysis"]["colour"] = "red"
    path = os.path.join(str(tmp_path), "extra.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle)

    assert main(["check", "--config", path, "--out", str(tmp_path)]) == 3
    assert main(["check", "--config", path, "--out", str(tmp_path), "--lenient"]) == 0


def test_format_error():
    result = format_error(ParseError("Expecting value", 1, 1))
    assert result["success"] is False
    assert result["error_type"] == "ParseError"
    assert "line 1, column 1" in result["error"]
    assert format_error(SingularShift("pivot"))["error"].startswith("🔢")


if __name__ == "__main__":
    import tempfile

    tests = [value for name, value in sorted(globals().items()) if name.startswith("test_") and callable(value)]
    for test in tests:
        try:
            if test.__code__.co_argcount:
                with tempfile.TemporaryDirectory() as tmp:
                    test(tmp)
            else:
                test()
            print(f"✅ {test.__name__}")
        except Exception as e:
            print(f"❌ {test.__name__}: {e}")
