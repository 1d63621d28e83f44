"""Experiment configuration, run manifests, and the analysis report driver."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

import cleanuplab
from cleanuplab.env.config import EnvConfig, preset, preset_names
from cleanuplab.errors import ConfigurationError
from cleanuplab.metrics import (
    classify_episodes,
    collective_return,
    consistency_for_record,
    contribution_level,
    dilemma_conditions,
    dilemma_regressions_from_records,
    presence_sets,
    river_entry_sequence,
    schelling_table,
    territoriality,
    turn_taking_score,
)
from cleanuplab.records import EpisodeRecord, read_records_dir
from cleanuplab.stats import (
    LongObservation,
    mediation,
    ols_regression,
    rm_anova_oneway,
    rm_anova_twoway,
)
from cleanuplab.training.orchestrate import PopulationConfig

CONDITIONS = ("identifiable", "anonymous")


@dataclass(frozen=True)
class AnalysisOptions:
    consistency_bins: int = 10
    dilemma: bool = False
    mediation_resamples: int = 10_000
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig
    env_preset: str
    conditions: tuple[str, ...]
    master_seed: int
    population: PopulationConfig
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    map_name: str = "default"

    def digest(self) -> str:
        payload = json.dumps(
            {
                "env": dataclasses.asdict(self.env),
                "preset": self.env_preset,
                "conditions": list(self.conditions),
                "seed": self.master_seed,
                "population": dataclasses.asdict(self.population),
                "map": self.map_name,
            },
            sort_keys=True,
        ).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def to_json(self) -> str:
        """Config-file text that ``load_config`` parses back identically."""
        return json.dumps(
            {
                "env": {"preset": "custom", "params": dataclasses.asdict(self.env)},
                "conditions": list(self.conditions),
                "seed": self.master_seed,
                "population": dataclasses.asdict(self.population),
                "analysis": dataclasses.asdict(self.analysis),
                "map": self.map_name,
            },
            indent=2,
            sort_keys=True,
        )


def _build_section(cls, data: dict, where: str):
    allowed = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in allowed:
            raise ConfigurationError(f"{where}: unknown field {key!r}")
    return cls(**data)


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate an experiment config file (JSON)."""
    if not os.path.exists(path):
        raise ConfigurationError(f"config file {path} does not exist")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from None

    known_top = {"env", "conditions", "seed", "population", "analysis", "map"}
    for key in raw:
        if key not in known_top:
            raise ConfigurationError(f"unknown top-level field {key!r}")

    env_section = raw.get("env", {"preset": "agent-paper"})
    preset_name = env_section.get("preset", "custom")
    if preset_name == "custom":
        env = _build_section(EnvConfig, env_section.get("params", {}), "env.params")
    else:
        if preset_name not in preset_names():
            raise ConfigurationError(f"env.preset: unknown preset {preset_name!r}")
        env = preset(preset_name)
        overrides = env_section.get("overrides", {})
        allowed = {f.name for f in dataclasses.fields(EnvConfig)}
        for key in overrides:
            if key not in allowed:
                raise ConfigurationError(f"env.overrides: unknown field {key!r}")
        env = dataclasses.replace(env, **overrides)
    env.validate()

    conditions = tuple(raw.get("conditions", list(CONDITIONS)))
    for c in conditions:
        if c not in CONDITIONS:
            raise ConfigurationError(f"conditions: unknown condition {c!r}")

    population = _build_section(
        PopulationConfig, raw.get("population", {}), "population"
    )
    population.validate()
    analysis = _build_section(AnalysisOptions, raw.get("analysis", {}), "analysis")

    return ExperimentConfig(
        env=env,
        env_preset=preset_name,
        conditions=conditions,
        master_seed=int(raw.get("seed", 0)),
        population=population,
        analysis=analysis,
        map_name=raw.get("map", "default"),
    )


def write_manifest(config: ExperimentConfig, out_dir: str, artifacts: dict[str, str]) -> str:
    manifest = {
        "build_version": cleanuplab.__version__,
        "schema": cleanuplab.SCHEMA_VERSION,
        "config_digest": config.digest(),
        "env_digest": config.env.digest(),
        "master_seed": config.master_seed,
        "conditions": list(config.conditions),
        "artifacts": artifacts,
    }
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "run_manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


# ---------------------------------------------------------------------------
# Report generation


def episode_metrics(record: EpisodeRecord, bins: int = 10) -> dict:
    grid = record.grid()
    terr = territoriality(record, grid)
    entries = river_entry_sequence(record, grid)
    tts = turn_taking_score(entries)
    cons = consistency_for_record(record, bins=bins)
    return {
        "kind": "episode",
        "group": record.group_id,
        "condition": record.condition,
        "episode": record.episode_index,
        "task_order": record.task_order,
        "collective_return": collective_return(record),
        "contribution_level": contribution_level(record),
        "territoriality": None if terr is None else terr.normalized,
        "territoriality_degenerate": bool(terr.degenerate) if terr is not None else None,
        "turn_taking": None if tts is None else float(tts),
        "river_entries": len(entries),
        "consistency": float(cons.score),
        "consistency_degenerate": bool(cons.degenerate),
        "intrinsic_total": None
        if record.rewards_i is None
        else float(record.rewards_i.sum()),
    }


METRIC_KEYS = (
    "contribution_level",
    "collective_return",
    "territoriality",
    "turn_taking",
    "consistency",
)


def _condition_comparisons(rows: list[dict]) -> list[dict]:
    """Repeated-measures comparisons per metric; two-way when task orders exist."""
    out = []
    have_orders = all(r.get("task_order") for r in rows)
    for key in METRIC_KEYS:
        data = [
            LongObservation(
                group_id=r["group"],
                condition=r["condition"],
                value=float(r[key]),
                task=r.get("task_order"),
                episode=r["episode"],
            )
            for r in rows
            if r.get(key) is not None
        ]
        conditions = {d.condition for d in data}
        if len(conditions) < 2:
            out.append({"kind": "comparison", "metric": key, "skipped": "one condition"})
            continue
        try:
            if have_orders:
                results = rm_anova_twoway(data, name=f"rm2:{key}")
                entry = {
                    "kind": "comparison",
                    "metric": key,
                    "model": "two-way",
                    "condition": results["condition"].to_dict(),
                    "task": results["task"].to_dict(),
                    "interaction": results["interaction"].to_dict(),
                }
            else:
                res = rm_anova_oneway(data, name=f"rm1:{key}")
                entry = {
                    "kind": "comparison",
                    "metric": key,
                    "model": "one-way",
                    "condition": res.to_dict(),
                }
            means = {
                c: float(np.mean([d.value for d in data if d.condition == c]))
                for c in sorted(conditions)
            }
            entry["means"] = means
            out.append(entry)
        except Exception as exc:  # degenerate layouts are reported, not fatal
            out.append({"kind": "comparison", "metric": key, "skipped": str(exc)})
    return out


def _group_means(rows: list[dict], key: str) -> tuple[list[float], list[float], list[str]]:
    """Per-(group, condition) means of a metric, aligned with condition codes."""
    cells: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        if r.get(key) is None:
            continue
        cells.setdefault((r["group"], r["condition"]), []).append(float(r[key]))
    ys, xs, groups = [], [], []
    for (g, c), vals in sorted(cells.items()):
        ys.append(float(np.mean(vals)))
        xs.append(1.0 if c == "identifiable" else 0.0)
        groups.append(g)
    return ys, xs, groups


def build_report(records: list[EpisodeRecord], options: AnalysisOptions | None = None) -> dict:
    """Per-episode metrics, group aggregates, condition comparisons, and the
    turn-taking/consistency regressions and mediation."""
    options = options or AnalysisOptions()
    if not records:
        raise ConfigurationError("no records to analyze")
    digests = {r.config_digest for r in records}
    if len(digests) > 1:
        raise ConfigurationError(f"mixed incompatible parameter presets: {sorted(digests)}")

    rows = [episode_metrics(r, bins=options.consistency_bins) for r in records]
    comparisons = _condition_comparisons(rows)

    regressions = []
    mediations = []
    # Group-averaged regressions of collective return on each temporal metric.
    for key in ("turn_taking", "consistency"):
        per_group: dict[tuple[str, str], list[tuple[float, float]]] = {}
        for r in rows:
            if r.get(key) is None or r.get("collective_return") is None:
                continue
            per_group.setdefault((r["group"], r["condition"]), []).append(
                (float(r[key]), float(r["collective_return"]))
            )
        if len(per_group) >= 3:
            xs = [float(np.mean([p[0] for p in pts])) for pts in per_group.values()]
            ys = [float(np.mean([p[1] for p in pts])) for pts in per_group.values()]
            try:
                res = ols_regression(ys, xs, name=f"return~{key}")
                regressions.append({"kind": "regression", "metric": key, **res.to_dict()})
            except Exception as exc:
                regressions.append({"kind": "regression", "metric": key, "skipped": str(exc)})

    # Mediation: identifiability -> turn taking -> collective return.
    med_rows = [r for r in rows if r.get("turn_taking") is not None]
    if med_rows and len({r["condition"] for r in med_rows}) == 2:
        x = [1.0 if r["condition"] == "identifiable" else 0.0 for r in med_rows]
        m = [float(r["turn_taking"]) for r in med_rows]
        y = [float(r["collective_return"]) for r in med_rows]
        try:
            med = mediation(
                x, m, y, resamples=options.mediation_resamples, seed=options.seed
            )
            mediations.append({"kind": "mediation", "mediator": "turn_taking", **med.to_dict()})
        except Exception as exc:
            mediations.append({"kind": "mediation", "mediator": "turn_taking", "skipped": str(exc)})

    report: dict = {
        "episodes": rows,
        "comparisons": comparisons,
        "regressions": regressions,
        "mediations": mediations,
    }

    if options.dilemma:
        episodes, threshold = classify_episodes(records)
        table = schelling_table(episodes)
        conds = dilemma_conditions(table)
        regs = dilemma_regressions_from_records(records)
        report["dilemma"] = {
            "jenks_threshold": threshold,
            "schelling": table.rows(),
            "conditions": {
                "p1": conds.p1,
                "p2": conds.p2,
                "p3a": conds.p3a,
                "p3b": conds.p3b,
                "p3": conds.p3,
                "p_overall": conds.p_overall,
                "untestable": list(conds.untestable),
            },
            "individual_slope": regs.individual.to_dict(),
            "group_slope": regs.group.to_dict(),
        }
    return report


def write_report(report: dict, records: list[EpisodeRecord], out_dir: str) -> dict[str, str]:
    """Emit line-delimited metric records, a summary table, and plot CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    jsonl = os.path.join(out_dir, "report.jsonl")
    with open(jsonl, "w", encoding="utf-8") as fh:
        for row in report["episodes"]:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
        for section in ("comparisons", "regressions", "mediations"):
            for row in report[section]:
                fh.write(json.dumps(row, separators=(",", ":")) + "\n")
        if "dilemma" in report:
            fh.write(json.dumps({"kind": "dilemma", **report["dilemma"]}) + "\n")
    paths["report"] = jsonl

    summary = os.path.join(out_dir, "summary.txt")
    with open(summary, "w", encoding="utf-8") as fh:
        fh.write(f"episodes analyzed: {len(report['episodes'])}\n")
        for comp in report["comparisons"]:
            if comp.get("skipped"):
                fh.write(f"{comp['metric']}: skipped ({comp['skipped']})\n")
                continue
            means = comp.get("means", {})
            mean_txt = ", ".join(f"{k}={v:.3f}" for k, v in means.items())
            cond = comp["condition"]
            fh.write(
                f"{comp['metric']}: F({cond['df'][0]:.0f}, {cond['df'][1]:.0f}) = "
                f"{cond['statistic']}, p = {cond['p_value']}  [{mean_txt}]\n"
            )
        for reg in report["regressions"]:
            if not reg.get("skipped"):
                fh.write(
                    f"return ~ {reg['metric']}: slope {reg['estimate']} "
                    f"(p = {reg['p_value']})\n"
                )
    paths["summary"] = summary

    # Plot-data CSVs
    timeline = os.path.join(out_dir, "contribution_timeline.csv")
    with open(timeline, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "condition", "episode", "bin", "contributions"])
        from cleanuplab.metrics import bin_contributions

        for rec in records:
            bins = bin_contributions(rec.q.sum(axis=1), 10)
            for b, v in enumerate(bins):
                writer.writerow([rec.group_id, rec.condition, rec.episode_index, b, int(v)])
    paths["contribution_timeline"] = timeline

    territory = os.path.join(out_dir, "territory_map.csv")
    with open(territory, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "condition", "episode", "row", "col", "member", "visited"])
        for rec in records:
            grid = rec.grid()
            for (r, c), members in sorted(presence_sets(rec, grid).items()):
                for m in sorted(members):
                    writer.writerow([rec.group_id, rec.condition, rec.episode_index, r, c, m, 1])
    paths["territory_map"] = territory

    if "dilemma" in report:
        schelling = os.path.join(out_dir, "schelling.csv")
        with open(schelling, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cooperators", "coop_mean", "coop_n", "defect_mean", "defect_n"])
            for row in report["dilemma"]["schelling"]:
                writer.writerow(
                    [
                        row["cooperators"],
                        row["coop_mean"],
                        row["coop_n"],
                        row["defect_mean"],
                        row["defect_n"],
                    ]
                )
        paths["schelling"] = schelling
    return paths


def analyze_directory(logs_dir: str, out_dir: str, options: AnalysisOptions | None = None) -> dict:
    records = list(read_records_dir(logs_dir))
    report = build_report(records, options)
    paths = write_report(report, records, out_dir)
    report["paths"] = paths
    return report
