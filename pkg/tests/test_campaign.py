import json
import os

import numpy as np
import pytest

from photonfi import cli, nn
from photonfi.campaign import (
    CSV_COLUMNS,
    CampaignConfig,
    CampaignReport,
    Scenario,
    TrialRow,
    VariantSpec,
    emit_csv,
    emit_summary,
    five_number,
    load_config,
    recovery_metrics,
    run_campaign,
)
from photonfi.errors import ConfigError
from photonfi.model_io import write_archive
from tests import conftest
from tests.conftest import random_model

SMALL_ACCEL_TOML = """
[accelerator]
conv_units = 4
conv_banks = 5
conv_width = 7
fc_units = 3
fc_banks = 8
fc_width = 20
"""


@pytest.fixture(scope="module")
def tiny_setup(tmp_path_factory):
    """A variant archive + campaign config against the committed dataset."""
    root = tmp_path_factory.mktemp("campaign")
    model = random_model(np.random.default_rng(0))
    model.variant = "original"
    archive = root / "original.slwa"
    write_archive(str(archive), model)

    config = root / "campaign.toml"
    config.write_text(f"""
master_seed = 99
trials = 10
subsample = 30
out_dir = "out"

[dataset]
images = "{conftest.TEST_IMAGES}"
labels = "{conftest.TEST_LABELS}"

[[variants]]
tag = "original"
archive = "original.slwa"

[scenarios]
kinds = ["actuation", "hotspot"]
scopes = ["CONV", "FC", "BOTH"]
fractions = [0.01, 0.05, 0.1]
{SMALL_ACCEL_TOML}
""")
    return root, str(config)


def test_load_and_validate(tiny_setup):
    _, config = tiny_setup
    cfg = load_config(config)
    # nine scenarios per attack kind: 3 scopes x 3 fractions
    assert len(cfg.scenarios) == 18
    assert sum(s.kind == "actuation" for s in cfg.scenarios) == 9
    assert cfg.trials == 10
    assert cfg.accelerator.conv.units == 4
    assert len(cfg.config_hash) == 16


def test_validate_missing_archive(tiny_setup, tmp_path):
    root, config = tiny_setup
    bad = tmp_path / "bad.toml"
    bad.write_text(open(config).read().replace("original.slwa", "missing.slwa"))
    with pytest.raises(ConfigError):
        load_config(str(bad))


def test_validate_requires_scenarios(tiny_setup, tmp_path):
    _, config = tiny_setup
    text = open(config).read().replace('fractions = [0.01, 0.05, 0.1]', 'fractions = []')
    bad = tmp_path / "bad2.toml"
    bad.write_text(text)
    with pytest.raises(ConfigError):
        load_config(str(bad))


@pytest.fixture(scope="module")
def tiny_report(tiny_setup):
    root, config = tiny_setup
    cfg = load_config(config)
    report = run_campaign(cfg)
    return cfg, report


def test_campaign_row_count(tiny_report):
    cfg, report = tiny_report
    assert len(report.rows) == 1 * 18 * 10  # variants x scenarios x trials
    with open(os.path.join(cfg.out_dir, "rows.csv")) as f:
        lines = f.read().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 180


def test_one_kind_nine_scenarios_gives_90_rows(tiny_setup, tmp_path):
    _, config = tiny_setup
    cfg = load_config(config)
    cfg.scenarios = [s for s in cfg.scenarios if s.kind == "actuation"]
    assert len(cfg.scenarios) == 9
    cfg.trials = 10
    cfg.out_dir = str(tmp_path / "ninety")
    report = run_campaign(cfg)
    assert len(report.rows) == 90


def test_campaign_determinism(tiny_report, tmp_path):
    cfg, _ = tiny_report
    first = open(os.path.join(cfg.out_dir, "rows.csv"), "rb").read()
    rerun_cfg = load_config(os.path.join(os.path.dirname(cfg.out_dir), "campaign.toml"))
    rerun_cfg.out_dir = str(tmp_path / "rerun")
    run_campaign(rerun_cfg)
    second = open(os.path.join(rerun_cfg.out_dir, "rows.csv"), "rb").read()
    assert first == second


def test_campaign_resume_reuses_rows(tiny_setup, tmp_path):
    root, config = tiny_setup
    cfg = load_config(config)
    cfg.out_dir = str(tmp_path / "resume")
    cfg.scenarios = cfg.scenarios[:2]
    os.makedirs(cfg.out_dir)
    # pre-seed a complete group with sentinel accuracies: must be reused as-is
    s0 = cfg.scenarios[0]
    sentinel = [TrialRow(variant="original", kind=s0.kind, scope=s0.scope,
                         fraction=s0.fraction, trial=t, seed=t, accuracy=0.123456,
                         corrupted_slots=7) for t in range(cfg.trials)]
    from photonfi.campaign import _write_rows_csv

    _write_rows_csv(sentinel, os.path.join(cfg.out_dir, "rows.csv"), cfg.config_hash)
    report = run_campaign(cfg)
    reused = report.rows_for("original", s0)
    assert all(r.accuracy == 0.123456 for r in reused)
    fresh = report.rows_for("original", cfg.scenarios[1])
    assert not all(r.accuracy == 0.123456 for r in fresh)


def test_campaign_resume_rejects_other_config(tiny_setup, tmp_path):
    """Rows produced under different settings must not be resumed."""
    root, config = tiny_setup
    cfg = load_config(config)
    cfg.out_dir = str(tmp_path / "resume2")
    cfg.scenarios = cfg.scenarios[:1]
    os.makedirs(cfg.out_dir)
    s0 = cfg.scenarios[0]
    sentinel = [TrialRow(variant="original", kind=s0.kind, scope=s0.scope,
                         fraction=s0.fraction, trial=t, seed=t, accuracy=0.123456,
                         corrupted_slots=7) for t in range(cfg.trials)]
    from photonfi.campaign import _write_rows_csv

    _write_rows_csv(sentinel, os.path.join(cfg.out_dir, "rows.csv"), "someoldhash")
    report = run_campaign(cfg)
    assert not any(r.accuracy == 0.123456 for r in report.rows)


def test_report_roundtrip_and_stats(tiny_report, tmp_path):
    _, report = tiny_report
    path = str(tmp_path / "report.json")
    report.save(path)
    loaded = CampaignReport.load(path)
    assert [r.accuracy for r in loaded.rows] == [r.accuracy for r in report.rows]

    s = report.scenarios[0]
    stats = loaded.scenario_stats("original", s)
    accs = [r.accuracy for r in report.rows_for("original", s)]
    assert stats["median"] == np.median(accs)
    assert stats["min"] == min(accs) and stats["max"] == max(accs)
    assert stats == five_number(accs)


def test_emit_summary_contents(tiny_report):
    _, report = tiny_report
    text = emit_summary(report)
    assert "config_hash" in text and "prng: numpy PCG64" in text
    assert "baseline[original]" in text
    assert "median" in text
    assert "actuation/CONV/0.01" in text


def test_emit_csv_standalone(tiny_report, tmp_path):
    _, report = tiny_report
    path = emit_csv(report, str(tmp_path / "emit"))
    with open(path) as f:
        assert f.readline().strip() == ",".join(CSV_COLUMNS)


def _constant_report(medians, baseline=0.98, variant="m", scenarios=None):
    scenarios = scenarios or [Scenario("hotspot", "BOTH", 0.05)]
    rows = []
    for s, m in zip(scenarios, medians):
        rows += [TrialRow(variant=variant, kind=s.kind, scope=s.scope,
                          fraction=s.fraction, trial=t, seed=t, accuracy=m,
                          corrupted_slots=0) for t in range(3)]
    return CampaignReport(config_hash="x", prng="p", master_seed=0, trials=3,
                          eval_size=100, scenarios=scenarios, variants=[variant],
                          baselines={variant: baseline}, manifest_accuracy={},
                          rows=rows)


def test_recovery_formula():
    original = _constant_report([0.91])
    robust = _constant_report([0.96], variant="r")
    rows = recovery_metrics(original, robust)
    assert rows[0].drop_original == pytest.approx(7.0)
    assert rows[0].drop_robust == pytest.approx(2.0)
    assert rows[0].recovery_points == pytest.approx(5.0)


def test_recovery_identity_is_zero():
    original = _constant_report([0.91])
    rows = recovery_metrics(original, original)
    assert rows[0].recovery_points == pytest.approx(0.0)


def test_recovery_scenario_mismatch():
    a = _constant_report([0.91])
    b = _constant_report([0.91, 0.92],
                         scenarios=[Scenario("hotspot", "BOTH", 0.05),
                                    Scenario("hotspot", "BOTH", 0.1)])
    with pytest.raises(ConfigError):
        recovery_metrics(a, b)


# --- CLI ----------------------------------------------------------------------


def test_cli_validate_and_run(tiny_setup, tmp_path, capsys):
    _, config = tiny_setup
    assert cli.main(["validate", "--config", config]) == 0
    out = str(tmp_path / "cli-run")
    rc = cli.main(["run", "--config", config, "--trials", "2", "--subsample", "20",
                   "--out", out])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "report.json"))
    assert os.path.exists(os.path.join(out, "summary.txt"))
    captured = capsys.readouterr().out
    assert "campaign summary" in captured


def test_cli_validate_bad_config(tmp_path):
    bad = tmp_path / "nope.toml"
    bad.write_text("not toml ][")
    assert cli.main(["validate", "--config", str(bad)]) == 1


def test_cli_compare_and_emit(tiny_report, tmp_path):
    _, report = tiny_report
    a = str(tmp_path / "a.json")
    b = str(tmp_path / "b.json")
    report.save(a)
    report.save(b)
    out_csv = str(tmp_path / "recovery.csv")
    assert cli.main(["compare", "--original", a, "--robust", b, "--out", out_csv]) == 0
    with open(out_csv) as f:
        header = f.readline().strip().split(",")
    assert header[:3] == ["kind", "scope", "fraction"]

    emit_dir = str(tmp_path / "emitted")
    assert cli.main(["emit", "--report", a, "--out", emit_dir]) == 0
    assert os.path.exists(os.path.join(emit_dir, "rows.csv"))


def test_cli_missing_report_is_runtime_error(tmp_path):
    assert cli.main(["emit", "--report", str(tmp_path / "no.json"),
                     "--out", str(tmp_path)]) == 2
