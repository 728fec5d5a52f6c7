"""Attack-campaign orchestration: sweeps, aggregation, reports, recovery.

A campaign evaluates every model variant under every scenario of a
(kind x scope x fraction) matrix, with a fixed number of independent trials
per scenario.  Trials are pinned by the master seed alone — the same config
always reproduces byte-identical rows — and the attack a trial applies does
not depend on the variant, so variants face identical fault states.

Row files are rewritten after each completed (variant, scenario) group, so
an aborted run keeps its finished groups and a rerun picks up where it
stopped.  The JSON report is self-contained: trial rows, recomputable
box-whisker statistics, fault-free baselines, the PRNG identity, and the
config hash.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import faults, model_io, nn
from .accelerator import (
    Accelerator,
    AcceleratorConfig,
    BlockConfig,
    FaultedAccelerator,
    Floorplan,
    MappingPlan,
    build_accelerator,
    map_model,
)
from .errors import ConfigError
from .photonics import ThermoOpticParams

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 fallback
    import tomli as tomllib

log = logging.getLogger(__name__)

CSV_COLUMNS = ("variant", "kind", "scope", "fraction", "trial", "seed",
               "accuracy", "corrupted_slots")


@dataclass(frozen=True)
class Scenario:
    kind: str
    scope: str
    fraction: float

    @property
    def key(self) -> str:
        return f"{self.kind}/{self.scope}/{self.fraction:g}"


@dataclass(frozen=True)
class VariantSpec:
    tag: str
    archive: str


@dataclass
class CampaignConfig:
    variants: list
    dataset_images: str
    dataset_labels: str
    scenarios: list
    trials: int = 10
    master_seed: int = 0
    subsample: int = 0  # 0 = full test set; otherwise the first N images
    heater_power_mw: float = 25.0
    out_dir: str = "runs/campaign"
    accelerator: AcceleratorConfig = field(default_factory=AcceleratorConfig)

    def validate(self) -> None:
        if not self.variants:
            raise ConfigError("campaign needs at least one model variant")
        if not self.scenarios:
            raise ConfigError("campaign needs at least one scenario")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.subsample < 0:
            raise ConfigError("subsample must be >= 0")
        tags = [v.tag for v in self.variants]
        if len(set(tags)) != len(tags):
            raise ConfigError(f"variant tags must be unique, got {tags}")
        for v in self.variants:
            if not os.path.exists(v.archive):
                raise ConfigError(f"variant {v.tag!r}: archive {v.archive} does not exist")
        for path in (self.dataset_images, self.dataset_labels):
            if not os.path.exists(path):
                raise ConfigError(f"dataset file {path} does not exist")
        for s in self.scenarios:
            faults.AttackSpec(kind=s.kind, scope=s.scope, fraction=s.fraction,
                              heater_power_mw=self.heater_power_mw)

    def canonical(self) -> dict:
        return {
            "variants": [asdict(v) for v in self.variants],
            "dataset": {"images": self.dataset_images, "labels": self.dataset_labels},
            "scenarios": [asdict(s) for s in self.scenarios],
            "trials": self.trials,
            "master_seed": self.master_seed,
            "subsample": self.subsample,
            "heater_power_mw": self.heater_power_mw,
            "accelerator": _accel_to_dict(self.accelerator),
        }

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _accel_to_dict(cfg: AcceleratorConfig) -> dict:
    return {
        "conv": asdict(cfg.conv), "fc": asdict(cfg.fc),
        "base_wavelength_nm": cfg.base_wavelength_nm,
        "channel_spacing_nm": cfg.channel_spacing_nm,
        "floorplan": asdict(cfg.floorplan),
        "thermo": asdict(cfg.thermo),
        "kappa_k_per_mw": cfg.kappa_k_per_mw,
        "sigma_t_um": cfg.sigma_t_um,
        "off_resonance_value": cfg.off_resonance_value,
    }


def _accel_from_table(t: dict) -> AcceleratorConfig:
    kw = {}
    if "conv_units" in t or "conv_banks" in t or "conv_width" in t:
        kw["conv"] = BlockConfig(units=t.get("conv_units", 100),
                                 banks=t.get("conv_banks", 20),
                                 width=t.get("conv_width", 20))
    if "fc_units" in t or "fc_banks" in t or "fc_width" in t:
        kw["fc"] = BlockConfig(units=t.get("fc_units", 60),
                               banks=t.get("fc_banks", 150),
                               width=t.get("fc_width", 150))
    for name in ("base_wavelength_nm", "channel_spacing_nm", "kappa_k_per_mw",
                 "sigma_t_um", "off_resonance_value"):
        if name in t:
            kw[name] = t[name]
    if "floorplan" in t:
        kw["floorplan"] = Floorplan(**t["floorplan"])
    if "thermo" in t:
        kw["thermo"] = ThermoOpticParams(**t["thermo"])
    return AcceleratorConfig(**kw)


def load_config(path: str) -> CampaignConfig:
    """Parse and validate a TOML campaign config (schema in the README)."""
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        variants = [VariantSpec(tag=v["tag"], archive=resolve(v["archive"]))
                    for v in doc["variants"]]
        dataset = doc["dataset"]
        sc = doc["scenarios"]
        scenarios = [Scenario(kind=k, scope=s, fraction=float(f))
                     for k in sc["kinds"] for s in sc["scopes"] for f in sc["fractions"]]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: missing or malformed section: {exc}") from None
    cfg = CampaignConfig(
        variants=variants,
        dataset_images=resolve(dataset["images"]),
        dataset_labels=resolve(dataset["labels"]),
        scenarios=scenarios,
        trials=doc.get("trials", 10),
        master_seed=doc.get("master_seed", 0),
        subsample=doc.get("subsample", 0),
        heater_power_mw=doc.get("heater_power_mw", 25.0),
        out_dir=resolve(doc.get("out_dir", "runs/campaign")),
        accelerator=_accel_from_table(doc.get("accelerator", {})),
    )
    cfg.validate()
    return cfg


# --- report ----------------------------------------------------------------------


@dataclass
class TrialRow:
    variant: str
    kind: str
    scope: str
    fraction: float
    trial: int
    seed: int
    accuracy: float
    corrupted_slots: int
    targets: int = 0
    target_digest: str = ""

    def csv_values(self) -> list[str]:
        return [self.variant, self.kind, self.scope, f"{self.fraction:g}",
                str(self.trial), str(self.seed), f"{self.accuracy:.6f}",
                str(self.corrupted_slots)]


def five_number(values) -> dict:
    q = np.percentile(np.asarray(values, dtype=np.float64), [0, 25, 50, 75, 100])
    return {"min": q[0], "q1": q[1], "median": q[2], "q3": q[3], "max": q[4]}


@dataclass
class CampaignReport:
    config_hash: str
    prng: str
    master_seed: int
    trials: int
    eval_size: int
    scenarios: list
    variants: list
    baselines: dict
    manifest_accuracy: dict
    rows: list

    def rows_for(self, variant: str, scenario: Scenario) -> list:
        return [r for r in self.rows
                if r.variant == variant and r.kind == scenario.kind
                and r.scope == scenario.scope and r.fraction == scenario.fraction]

    def scenario_stats(self, variant: str, scenario: Scenario) -> dict:
        rows = self.rows_for(variant, scenario)
        if not rows:
            raise ConfigError(f"no rows for {variant} / {scenario.key}")
        return five_number([r.accuracy for r in rows])

    def median_accuracy(self, variant: str, scenario: Scenario) -> float:
        return self.scenario_stats(variant, scenario)["median"]

    def to_json(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "prng": self.prng,
            "master_seed": self.master_seed,
            "trials": self.trials,
            "eval_size": self.eval_size,
            "scenarios": [asdict(s) for s in self.scenarios],
            "variants": self.variants,
            "baselines": self.baselines,
            "manifest_accuracy": self.manifest_accuracy,
            "stats": {v: {s.key: self.scenario_stats(v, s) for s in self.scenarios}
                      for v in self.variants},
            "rows": [asdict(r) for r in self.rows],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CampaignReport":
        return cls(
            config_hash=doc["config_hash"], prng=doc["prng"],
            master_seed=doc["master_seed"], trials=doc["trials"],
            eval_size=doc["eval_size"],
            scenarios=[Scenario(**s) for s in doc["scenarios"]],
            variants=list(doc["variants"]), baselines=dict(doc["baselines"]),
            manifest_accuracy=dict(doc.get("manifest_accuracy", {})),
            rows=[TrialRow(**r) for r in doc["rows"]],
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path: str) -> "CampaignReport":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))


# --- execution -------------------------------------------------------------------


def _load_variant(acc: Accelerator, vspec: VariantSpec):
    model, manifest = model_io.read_archive(vspec.archive)
    model.variant = vspec.tag or model.variant
    plan = map_model(model, acc)
    return model, manifest, plan


def _existing_rows(path: str, config_hash: str) -> list:
    """Rows from an earlier run of the *same* config, else nothing.

    The sidecar hash file guards against silently resuming rows that were
    produced under different settings.
    """
    meta_path = path + ".meta.json"
    if not (os.path.exists(path) and os.path.exists(meta_path)):
        return []
    with open(meta_path, encoding="utf-8") as f:
        if json.load(f).get("config_hash") != config_hash:
            log.warning("existing rows in %s were produced by a different config; "
                        "recomputing from scratch", os.path.dirname(path))
            return []
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for rec in csv.DictReader(f):
            rows.append(TrialRow(
                variant=rec["variant"], kind=rec["kind"], scope=rec["scope"],
                fraction=float(rec["fraction"]), trial=int(rec["trial"]),
                seed=int(rec["seed"]), accuracy=float(rec["accuracy"]),
                corrupted_slots=int(rec["corrupted_slots"])))
    return rows


def _write_rows_csv(rows: list, path: str, config_hash: Optional[str] = None) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow(r.csv_values())
    os.replace(tmp, path)
    if config_hash is not None:
        with open(path + ".meta.json", "w", encoding="utf-8") as f:
            json.dump({"config_hash": config_hash}, f)


def run_campaign(cfg: CampaignConfig, resume: bool = True) -> CampaignReport:
    """Run every variant x scenario x trial cell and aggregate the report.

    Deterministic given the config: per-trial attack streams derive from the
    master seed and the scenario coordinates only, so every variant sees the
    same sequence of fault states.
    """
    cfg.validate()
    os.makedirs(cfg.out_dir, exist_ok=True)
    rows_path = os.path.join(cfg.out_dir, "rows.csv")

    images, labels = model_io.load_idx(cfg.dataset_images, cfg.dataset_labels)
    if cfg.subsample:
        images, labels = images[:cfg.subsample], labels[:cfg.subsample]
    acc = build_accelerator(cfg.accelerator)

    done: dict[tuple[str, str], list] = {}
    if resume:
        for r in _existing_rows(rows_path, cfg.config_hash):
            done.setdefault((r.variant, Scenario(r.kind, r.scope, r.fraction).key), []).append(r)
        done = {k: v for k, v in done.items() if len(v) == cfg.trials}
        if done:
            log.info("resuming: %d completed (variant, scenario) groups", len(done))

    rows: list[TrialRow] = []
    baselines: dict[str, float] = {}
    manifest_acc: dict[str, float] = {}
    for vspec in cfg.variants:
        model, manifest, plan = _load_variant(acc, vspec)
        healthy = FaultedAccelerator.healthy(acc)
        baselines[vspec.tag] = nn.evaluate_accuracy(
            model, images, labels, plan, healthy).accuracy
        if "test_accuracy" in manifest:
            manifest_acc[vspec.tag] = manifest["test_accuracy"]
        for scenario in cfg.scenarios:
            key = (vspec.tag, scenario.key)
            if key in done:
                rows.extend(done[key])
                continue
            spec = faults.AttackSpec(kind=scenario.kind, scope=scenario.scope,
                                     fraction=scenario.fraction, seed=cfg.master_seed,
                                     trial_count=cfg.trials,
                                     heater_power_mw=cfg.heater_power_mw)
            group = []
            for trial in range(cfg.trials):
                facc, count, digest = faults.materialize(spec, acc, trial)
                result = nn.evaluate_accuracy(model, images, labels, plan, facc)
                group.append(TrialRow(
                    variant=vspec.tag, kind=scenario.kind, scope=scenario.scope,
                    fraction=scenario.fraction, trial=trial,
                    seed=faults.trial_seed(spec, trial),
                    accuracy=result.accuracy,
                    corrupted_slots=faults.corrupted_slot_count(facc, plan),
                    targets=count, target_digest=digest))
            rows.extend(group)
            _write_rows_csv(rows, rows_path, cfg.config_hash)
            log.info("%s %s done (median %.4f)", vspec.tag, scenario.key,
                     float(np.median([r.accuracy for r in group])))

    _write_rows_csv(rows, rows_path, cfg.config_hash)
    report = CampaignReport(
        config_hash=cfg.config_hash, prng=faults.PRNG_IDENTITY,
        master_seed=cfg.master_seed, trials=cfg.trials, eval_size=len(images),
        scenarios=list(cfg.scenarios), variants=[v.tag for v in cfg.variants],
        baselines=baselines, manifest_accuracy=manifest_acc, rows=rows)
    report.save(os.path.join(cfg.out_dir, "report.json"))
    with open(os.path.join(cfg.out_dir, "summary.txt"), "w", encoding="utf-8") as f:
        f.write(emit_summary(report))
    return report


# --- emission and comparison -------------------------------------------------------


def emit_csv(report: CampaignReport, out_dir: str) -> str:
    """Write the trial rows CSV; returns its path."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "rows.csv")
    _write_rows_csv(report.rows, path)
    return path


def emit_summary(report: CampaignReport) -> str:
    """Structured text: metadata header plus per-scenario five-number summaries."""
    buf = io.StringIO()
    buf.write("campaign summary\n")
    buf.write(f"config_hash: {report.config_hash}\n")
    buf.write(f"prng: {report.prng}\n")
    buf.write(f"master_seed: {report.master_seed}\n")
    buf.write(f"trials_per_scenario: {report.trials}\n")
    buf.write(f"eval_images: {report.eval_size}\n")
    for tag in report.variants:
        base = report.baselines.get(tag, float("nan"))
        rec = report.manifest_accuracy.get(tag)
        extra = f" (manifest {rec:.4f})" if rec is not None else ""
        buf.write(f"baseline[{tag}]: {base:.6f}{extra}\n")
    buf.write("\n")
    header = f"{'variant':<12} {'scenario':<24} {'min':>8} {'q1':>8} {'median':>8} {'q3':>8} {'max':>8}\n"
    buf.write(header)
    for tag in report.variants:
        for s in report.scenarios:
            st = report.scenario_stats(tag, s)
            buf.write(f"{tag:<12} {s.key:<24} {st['min']:>8.4f} {st['q1']:>8.4f} "
                      f"{st['median']:>8.4f} {st['q3']:>8.4f} {st['max']:>8.4f}\n")
    return buf.getvalue()


@dataclass
class RecoveryRow:
    scenario: Scenario
    baseline: float
    median_original: float
    median_robust: float
    drop_original: float
    drop_robust: float
    recovery_points: float


def recovery_metrics(original: CampaignReport, robust: CampaignReport,
                     original_variant: Optional[str] = None,
                     robust_variant: Optional[str] = None) -> list:
    """Per-scenario recovery of a robust variant against the original model.

    Both drops are measured from the original model's fault-free baseline,
    in accuracy percentage points; recovery = drop_original - drop_robust.
    A robust variant that beats the original baseline shows as a negative
    robust drop (recovery exceeding the original drop).
    """
    if [asdict(s) for s in original.scenarios] != [asdict(s) for s in robust.scenarios]:
        raise ConfigError("reports cover different scenario matrices")
    o_tag = original_variant or original.variants[0]
    r_tag = robust_variant or robust.variants[-1]
    baseline = original.baselines[o_tag]
    out = []
    for s in original.scenarios:
        mo = original.median_accuracy(o_tag, s)
        mr = robust.median_accuracy(r_tag, s)
        drop_o = (baseline - mo) * 100.0
        drop_r = (baseline - mr) * 100.0
        out.append(RecoveryRow(scenario=s, baseline=baseline,
                               median_original=mo, median_robust=mr,
                               drop_original=drop_o, drop_robust=drop_r,
                               recovery_points=drop_o - drop_r))
    return out


def recovery_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["kind", "scope", "fraction", "baseline", "median_original",
                "median_robust", "drop_original_pts", "drop_robust_pts",
                "recovery_pts"])
    for r in rows:
        s = r.scenario
        w.writerow([s.kind, s.scope, f"{s.fraction:g}", f"{r.baseline:.6f}",
                    f"{r.median_original:.6f}", f"{r.median_robust:.6f}",
                    f"{r.drop_original:.4f}", f"{r.drop_robust:.4f}",
                    f"{r.recovery_points:.4f}"])
    return buf.getvalue()
