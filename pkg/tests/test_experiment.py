from __future__ import annotations

import dataclasses
import json
import os

import numpy as np
import pytest

from cleanuplab.bots import run_bot_episode
from cleanuplab.env.config import preset
from cleanuplab.errors import ConfigurationError
from cleanuplab.experiment import (
    AnalysisOptions,
    analyze_directory,
    build_report,
    episode_metrics,
    load_config,
    write_manifest,
    write_report,
)
from cleanuplab.records import read_record


def _write_config(tmp_path, payload):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(payload))
    return str(path)


def test_load_agent_preset_values(tmp_path):
    cfg = load_config(_write_config(tmp_path, {"env": {"preset": "agent-paper"}}))
    assert cfg.env.pr_apple == 0.03
    assert cfg.env.pr_pollution == 0.5
    assert cfg.env.h_abundance == 0.0
    assert cfg.env.h_depletion == 0.32
    assert cfg.env.episode_length == 1000
    assert cfg.env.ticket_cost == 1 and cfg.env.ticket_penalty == 50


def test_load_human_preset_values(tmp_path):
    cfg = load_config(_write_config(tmp_path, {"env": {"preset": "human-paper"}}))
    assert cfg.env.pr_apple == 0.067
    assert cfg.env.pr_pollution == 0.6
    assert cfg.env.h_abundance == 0.3
    assert cfg.env.h_depletion == 0.6
    assert cfg.env.episode_length == 2000
    assert cfg.env.ticket_cost == 4 and cfg.env.ticket_penalty == 40


def test_invalid_thresholds_rejected(tmp_path):
    path = _write_config(
        tmp_path,
        {"env": {"preset": "custom", "params": {
            "pr_apple": 0.03, "pr_pollution": 0.5,
            "h_abundance": 0.7, "h_depletion": 0.32, "episode_length": 100}}},
    )
    with pytest.raises(ConfigurationError, match="h_abundance"):
        load_config(path)


def test_unknown_field_rejected(tmp_path):
    path = _write_config(tmp_path, {"env": {"preset": "agent-paper"}, "bogus": 1})
    with pytest.raises(ConfigurationError, match="bogus"):
        load_config(path)
    path = _write_config(
        tmp_path, {"env": {"preset": "agent-paper", "overrides": {"no_such": 2}}}
    )
    with pytest.raises(ConfigurationError, match="no_such"):
        load_config(path)


def test_missing_file_rejected():
    with pytest.raises(ConfigurationError, match="exist"):
        load_config("/nonexistent/exp.json")


def test_config_serialize_parse_round_trip(tmp_path):
    cfg = load_config(
        _write_config(
            tmp_path,
            {"env": {"preset": "human-paper", "overrides": {"episode_length": 321}},
             "seed": 5, "population": {"population_size": 10}},
        )
    )
    path = tmp_path / "round.json"
    path.write_text(cfg.to_json())
    reloaded = load_config(str(path))
    assert reloaded.env == cfg.env
    assert reloaded.master_seed == cfg.master_seed
    assert reloaded.population == cfg.population
    assert reloaded.conditions == cfg.conditions
    assert reloaded.digest() != ""  # digests are over resolved params
    assert dataclasses.asdict(reloaded.env) == dataclasses.asdict(cfg.env)


def test_manifest_round_trip(tmp_path):
    cfg = load_config(_write_config(tmp_path, {"env": {"preset": "agent-paper"}, "seed": 7}))
    path = write_manifest(cfg, str(tmp_path), {"logs": "x"})
    data = json.loads(open(path).read())
    assert data["master_seed"] == 7
    assert data["config_digest"] == cfg.digest()


@pytest.fixture(scope="module")
def bot_records(grid_module):
    cfg = dataclasses.replace(preset("human-paper"), episode_length=500)
    records = []
    k = 0
    for condition in ("identifiable", "anonymous"):
        for g in range(2):
            for e in range(2):
                rec = run_bot_episode(
                    cfg, grid_module, seed=100 + k,
                    cooperators=[True, True, True, False, False],
                    condition=condition, group_id=f"g{g}", episode_index=e,
                )
                rec = dataclasses.replace(
                    rec, task_order="first" if (g + (condition == "anonymous")) % 2 == 0 else "second"
                )
                records.append(rec)
                k += 1
    return records


@pytest.fixture(scope="module")
def grid_module():
    from cleanuplab.env.grid import builtin_map

    return builtin_map()


def test_episode_metrics_fields(bot_records):
    row = episode_metrics(bot_records[0])
    assert row["collective_return"] >= 0
    assert row["contribution_level"] > 0
    assert 0 <= row["consistency"] <= 1
    assert row["territoriality"] is None or 0 < row["territoriality"] <= 1


def test_build_report_sections(bot_records):
    report = build_report(bot_records, AnalysisOptions(mediation_resamples=200))
    assert len(report["episodes"]) == len(bot_records)
    metrics_seen = {c["metric"] for c in report["comparisons"]}
    assert {"contribution_level", "collective_return"} <= metrics_seen
    assert report["mediations"]


def test_report_rejects_mixed_presets(bot_records, grid_module):
    cfg = dataclasses.replace(preset("agent-paper"), episode_length=150)
    other = run_bot_episode(cfg, grid_module, seed=5, cooperators=[True] * 5)
    with pytest.raises(ConfigurationError, match="mixed"):
        build_report(list(bot_records) + [other])


def test_report_empty_condition_skips(bot_records):
    only_ident = [r for r in bot_records if r.condition == "identifiable"]
    report = build_report(only_ident, AnalysisOptions(mediation_resamples=100))
    for comp in report["comparisons"]:
        assert comp.get("skipped")


def test_write_report_artifacts(bot_records, tmp_path):
    report = build_report(bot_records, AnalysisOptions(mediation_resamples=100))
    paths = write_report(report, bot_records, str(tmp_path))
    for key in ("report", "summary", "contribution_timeline", "territory_map"):
        assert os.path.exists(paths[key])
    lines = open(paths["report"]).read().splitlines()
    kinds = {json.loads(ln)["kind"] for ln in lines}
    assert {"episode", "comparison"} <= kinds


def test_analyze_directory_deterministic(bot_records, tmp_path):
    logs = tmp_path / "logs"
    logs.mkdir()
    for i, rec in enumerate(bot_records):
        rec.write(str(logs / f"ep{i:03d}.jsonl"))
    out1 = tmp_path / "out1"
    out2 = tmp_path / "out2"
    r1 = analyze_directory(str(logs), str(out1), AnalysisOptions(mediation_resamples=100))
    r2 = analyze_directory(str(logs), str(out2), AnalysisOptions(mediation_resamples=100))
    assert open(out1 / "report.jsonl").read() == open(out2 / "report.jsonl").read()


def test_record_write_read_m_through_dir(bot_records, tmp_path):
    rec = bot_records[0]
    path = tmp_path / "one.jsonl"
    rec.write(str(path))
    loaded = read_record(str(path))
    assert loaded.task_order == rec.task_order
    assert np.array_equal(loaded.q, rec.q)
