"""On-disk pipeline stages: gen -> plan -> filter -> emit -> evaluate -> plot."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .costs import BUILTIN_PROFILES, STYLE_NAMES, StyleProfile
from .instructions import (
    atomic_write,
    build_bev_sample,
    build_fpv_sample,
    load_dataset,
    parse_response,
    render_bev,
    serialize_dataset,
    VQASample,
)
from .metrics import MODES, build_report
from .planner import PlannerFailure, PlanningInstance, plan_scenario
from .sampler import FeasibilityLimits, FrenetState, SamplerConfig
from .scenario import SCENARIO_KINDS, TrajState, Trajectory, generate_synthetic_scenario, load_scenario, serialize_scenario
from .style_filter import filter_instances

log = logging.getLogger("drivestyle")


class ConfigError(ValueError):
    """Bad configuration or usage (exit code 1)."""


class DataError(RuntimeError):
    """Missing or malformed input artifacts (exit code 2)."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _default_specs():
    return [{"kind": k, "seed": j} for k in SCENARIO_KINDS for j in range(5)]


@dataclass
class PipelineConfig:
    seed: int = 0
    corpus: list = field(default_factory=_default_specs)
    styles: list = field(default_factory=lambda: list(STYLE_NAMES))
    profiles: dict = field(default_factory=dict)  # name -> six weights, overriding or adding styles
    sampler: dict = field(default_factory=dict)
    replan_dt: float = 0.5
    filter: dict = field(default_factory=lambda: {"support_fraction": 0.75, "threshold": 80.0})
    emit: dict = field(default_factory=lambda: {"domains": ["BEV", "FPV"], "horizon": 3.0, "jsonl": False, "render": True})
    evaluate: dict = field(default_factory=lambda: {"mode": "per_sample_mean", "success_ade": 1.0, "miss_fde": 2.0})
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        base = cls()
        for key in ("filter", "emit", "evaluate"):
            if key in doc:
                if not isinstance(doc[key], dict):
                    raise ConfigError(f"{key}: expected object")
                doc = {**doc, key: {**getattr(base, key), **doc[key]}}
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def validate(self):
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        for i, spec in enumerate(self.corpus):
            if not isinstance(spec, dict) or spec.get("kind") not in SCENARIO_KINDS:
                raise ConfigError(f"corpus[{i}]: invalid spec {spec!r}; kind must be one of {SCENARIO_KINDS}")
            if not isinstance(spec.get("seed", 0), int):
                raise ConfigError(f"corpus[{i}]: seed must be an integer")
        for name in self.styles:
            if name not in BUILTIN_PROFILES and name not in self.profiles:
                raise ConfigError(f"unknown style {name!r}")
        for name, w in self.profiles.items():
            if not isinstance(w, (list, tuple)) or len(w) != 6:
                raise ConfigError(f"profiles.{name}: expected 6 weights")
            try:
                StyleProfile(name, w[:4], w[4:])
            except ValueError as exc:
                raise ConfigError(f"profiles.{name}: {exc}") from None
        thr = self.filter.get("threshold", 80.0)
        if not 0 < float(thr) < 100:
            raise ConfigError("filter.threshold must lie in (0, 100)")
        sf = float(self.filter.get("support_fraction", 0.75))
        if not 0.5 < sf <= 1.0:
            raise ConfigError("filter.support_fraction must lie in (0.5, 1]")
        if self.emit.get("horizon") not in (3.0, 5.0, 3, 5):
            raise ConfigError("emit.horizon must be 3 or 5")
        bad = [d for d in self.emit.get("domains", []) if d not in ("BEV", "FPV")]
        if bad:
            raise ConfigError(f"emit.domains: unknown {bad}")
        if self.evaluate.get("mode") not in MODES:
            raise ConfigError(f"evaluate.mode must be one of {MODES}")
        if not self.replan_dt > 0:
            raise ConfigError("replan_dt must be positive")
        try:
            self.sampler_config(10.0)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"sampler: {exc}") from None

    def profile(self, name):
        if name in self.profiles:
            w = self.profiles[name]
            return StyleProfile(name, w[:4], w[4:])
        return BUILTIN_PROFILES[name]

    def sampler_config(self, v_ref):
        s = dict(self.sampler)
        limits = FeasibilityLimits(**s.pop("limits", {}))
        speed_factors = s.pop("speed_factors", None)
        overrides = {"limits": limits}
        if speed_factors is not None:
            overrides["target_speeds"] = tuple(v_ref * f for f in speed_factors)
        for key in ("lateral_offsets", "horizons", "dt", "output_horizon"):
            if key in s:
                overrides[key] = tuple(s.pop(key)) if key in ("lateral_offsets", "horizons") else s.pop(key)
        if s:
            raise ValueError(f"unknown sampler keys {sorted(s)}")
        return SamplerConfig.default(v_ref, **overrides)

    def to_dict(self):
        return asdict(self)

    def config_hash(self):
        doc = self.to_dict()
        doc.pop("output_dir")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def scenario_seed(self, spec):
        # the global seed shifts every spec seed so corpora differ per run seed
        return int(spec.get("seed", 0)) + 1000 * self.seed


def load_config(path=None, **overrides):
    doc = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path}: invalid JSON ({exc})") from None
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _stamp(cfg):
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed}


def _write_json(path, doc):
    atomic_write(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _read_json(path, stage):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"missing {path}; run the `{stage}` stage first") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON ({exc})") from None


def _map(fn, items, workers):
    if workers and workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _state_dict(st: TrajState):
    return st.as_dict()


def instance_to_dict(inst: PlanningInstance):
    return {
        "scenario_id": inst.scenario_id,
        "style": inst.style,
        "step": inst.step,
        "time": inst.time,
        "ego": _state_dict(inst.ego),
        "ego_frenet": list(inst.ego_frenet),
        "history": [_state_dict(s) for s in inst.history],
        "dt": inst.trajectory.dt,
        "trajectory": inst.trajectory.data.tolist(),
        "cost": inst.cost,
    }


def instance_from_dict(doc):
    return PlanningInstance(
        doc["scenario_id"],
        doc["style"],
        int(doc["step"]),
        float(doc["time"]),
        TrajState(**doc["ego"]),
        FrenetState(*doc["ego_frenet"]),
        tuple(TrajState(**s) for s in doc["history"]),
        Trajectory(doc["dt"], np.asarray(doc["trajectory"], dtype=float)),
        float(doc["cost"]),
    )


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _out(cfg, *parts):
    return Path(cfg.output_dir, *parts)


def cmd_gen(cfg: PipelineConfig):
    """Write the synthetic scenario corpus and its manifest."""
    entries = []
    for spec in cfg.corpus:
        sc = generate_synthetic_scenario(spec["kind"], cfg.scenario_seed(spec))
        sc = replace(sc, meta={**sc.meta, **_stamp(cfg)})
        name = f"{sc.id}.json"
        atomic_write(_out(cfg, "corpus", name), serialize_scenario(sc) + "\n")
        entries.append({"id": sc.id, "file": name, "kind": spec["kind"], "obstacles": len(sc.obstacles), "duration": sc.duration})
    manifest = {**_stamp(cfg), "count": len(entries), "scenarios": entries}
    _write_json(_out(cfg, "corpus", "manifest.json"), manifest)
    return manifest


def _load_corpus(cfg):
    man = _read_json(_out(cfg, "corpus", "manifest.json"), "gen")
    scenarios = []
    for entry in man["scenarios"]:
        path = _out(cfg, "corpus", entry["file"])
        try:
            scenarios.append(load_scenario(path.read_text()))
        except FileNotFoundError:
            raise DataError(f"missing scenario file {path}; rerun `gen`") from None
    return scenarios


def _plan_job(job):
    text, styles, cfg_dict = job
    cfg = PipelineConfig.from_dict({k: v for k, v in cfg_dict.items()})
    sc = load_scenario(text)
    sampler = cfg.sampler_config(sc.desired_speed)
    results = {}
    for name in styles:
        try:
            inst = plan_scenario(sc, cfg.profile(name), cfg.replan_dt, sampler)
            results[name] = {"instances": [instance_to_dict(i) for i in inst]}
        except PlannerFailure as exc:
            results[name] = {"failure": {"step": exc.step, "counts": exc.counts, "message": str(exc)}}
    return sc.id, results


def cmd_plan(cfg: PipelineConfig, workers=1):
    """Plan every scenario under every configured style; failures are logged, not fatal."""
    scenarios = _load_corpus(cfg)
    jobs = [(serialize_scenario(sc), list(cfg.styles), cfg.to_dict()) for sc in scenarios]
    results = _map(_plan_job, jobs, workers)
    counts = {name: 0 for name in cfg.styles}
    failures = []
    streams = []
    for sc_id, per_style in results:
        for name in cfg.styles:
            res = per_style[name]
            if "failure" in res:
                failures.append({"scenario": sc_id, "style": name, **res["failure"]})
                log.warning("planner failure: %s / %s: %s", sc_id, name, res["failure"]["message"])
                continue
            rel = f"{sc_id}/{name}.json"
            _write_json(_out(cfg, "plan", rel), {**_stamp(cfg), "instances": res["instances"]})
            counts[name] += len(res["instances"])
            streams.append({"scenario": sc_id, "style": name, "file": rel, "count": len(res["instances"])})
    summary = {**_stamp(cfg), "per_style_instances": counts, "streams": streams, "failures": failures}
    _write_json(_out(cfg, "plan", "summary.json"), summary)
    return summary


def _load_instances(cfg):
    summary = _read_json(_out(cfg, "plan", "summary.json"), "plan")
    out = []
    for stream in summary["streams"]:
        doc = _read_json(_out(cfg, "plan", stream["file"]), "plan")
        out.extend(instance_from_dict(d) for d in doc["instances"])
    return out


def cmd_filter(cfg: PipelineConfig):
    """Stage-2 conformance filtering with the ordinal corpus checks embedded in the report."""
    instances = _load_instances(cfg)
    pairs = [(inst.style, inst.trajectory) for inst in instances]
    res = filter_instances(
        pairs,
        seed=cfg.seed,
        support_fraction=cfg.filter.get("support_fraction"),
        threshold=float(cfg.filter.get("threshold", 80.0)),
    )
    retained = [
        {"scenario": instances[i].scenario_id, "style": style, "step": instances[i].step, "score": score}
        for i, style, score in res.retained
    ]
    summaries = corpus_mod.summarize_corpus([pairs[i] for i, _, _ in res.retained], styles=cfg.styles)
    verdicts = corpus_mod.check_style_orderings(summaries)
    report = {
        **_stamp(cfg),
        **res.report,
        "summaries": [s.to_dict() for s in summaries],
        "orderings": [asdict(v) for v in verdicts],
    }
    _write_json(_out(cfg, "filter", "report.json"), report)
    _write_json(_out(cfg, "filter", "retained.json"), {**_stamp(cfg), "retained": retained})
    return report


def _emit_job(job):
    sc_text, inst_docs, cfg_dict = job
    cfg = PipelineConfig.from_dict(cfg_dict)
    sc = load_scenario(sc_text)
    horizon = float(cfg.emit.get("horizon", 3.0))
    stamp = _stamp(cfg)
    samples, images = [], []
    for doc in inst_docs:
        inst = instance_from_dict(doc)
        if "BEV" in cfg.emit.get("domains", []):
            s = build_bev_sample(inst, sc, horizon)
            samples.append(s.to_record() | {"_style": s.style, "_domain": s.domain, "_horizon": s.horizon})
            if cfg.emit.get("render", True):
                svg = render_bev(sc, inst.ego)
                svg = svg.replace("\n", f"\n<!-- config_hash={stamp['config_hash']} seed={stamp['seed']} -->\n", 1)
                images.append((s.image, svg))
        if "FPV" in cfg.emit.get("domains", []):
            ref = f"fpv/{inst.scenario_id}/{inst.style}/{inst.step:04d}.png"
            s = build_fpv_sample(inst, sc, ref, horizon)
            samples.append(s.to_record() | {"_style": s.style, "_domain": s.domain, "_horizon": s.horizon})
    return samples, images


def cmd_emit(cfg: PipelineConfig, workers=1):
    """Build BEV/FPV instruction samples for retained instances, plus a ground-truth file for evaluation."""
    kept = _read_json(_out(cfg, "filter", "retained.json"), "filter")["retained"]
    keys = {(r["scenario"], r["style"], r["step"]) for r in kept}
    summary = _read_json(_out(cfg, "plan", "summary.json"), "plan")
    scenarios = {sc.id: sc for sc in _load_corpus(cfg)}
    by_scenario = {}
    for stream in summary["streams"]:
        doc = _read_json(_out(cfg, "plan", stream["file"]), "plan")
        sel = [d for d in doc["instances"] if (d["scenario_id"], d["style"], d["step"]) in keys]
        by_scenario.setdefault(stream["scenario"], []).extend(sel)
    jobs = [(serialize_scenario(scenarios[sid]), docs, cfg.to_dict()) for sid, docs in by_scenario.items() if docs]
    results = _map(_emit_job, jobs, workers)
    by_domain = {}
    for samples, images in results:
        for rec in samples:
            vqa = VQASample(rec["id"], rec["image"], tuple(rec["conversations"]), rec["_domain"], rec["_style"], rec["_horizon"])
            by_domain.setdefault(vqa.domain, []).append(vqa)
        for rel, svg in images:
            atomic_write(_out(cfg, "emit", rel), svg)
    jsonl = bool(cfg.emit.get("jsonl", False))
    manifests = {}
    ground_truth = {}
    for domain in cfg.emit.get("domains", []):
        samples = by_domain.get(domain, [])
        name = f"{domain.lower()}.{'jsonl' if jsonl else 'json'}"
        manifests[domain] = serialize_dataset(samples, _out(cfg, "emit", name), jsonl=jsonl, extra=_stamp(cfg))
        for s in samples:
            ground_truth[s.id] = s.conversations[1]["value"]
    _write_json(_out(cfg, "emit", "ground_truth.json"), {**_stamp(cfg), "responses": ground_truth})
    return manifests


def _style_of(sample_id):
    parts = sample_id.split("__")
    return parts[1] if len(parts) == 5 else "unknown"


def _load_predictions(path):
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise DataError(f"predictions file not found: {path}") from None
    try:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            # not a single document: one {id, response} object per line
            doc = [json.loads(line) for line in text.splitlines() if line.strip()]
        if isinstance(doc, list):
            rows = doc
        else:
            if "responses" in doc and isinstance(doc["responses"], dict):
                doc = doc["responses"]
            rows = [{"id": k, "response": v} for k, v in doc.items() if k not in ("config_hash", "seed")]
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed predictions ({exc})") from None
    out = {}
    for row in rows:
        resp = row.get("response", row.get("prediction"))
        out[str(row["id"])] = resp if isinstance(resp, str) or resp is None else json.dumps(resp)
    return out


def _track(arr):
    return arr[:, 1:6]


def cmd_evaluate(cfg: PipelineConfig, predictions, ground_truth=None, label="model"):
    """Score predictions against emitted ground truth; unparseable or absent predictions count as not generated."""
    gt_path = ground_truth or _out(cfg, "emit", "ground_truth.json")
    gt_doc = _read_json(gt_path, "emit")
    gt = gt_doc.get("responses", gt_doc)
    preds = _load_predictions(predictions)
    pairs = []
    for sid in sorted(k for k in gt if k not in ("config_hash", "seed")):
        _, dt, g = parse_response(gt[sid])
        text = preds.get(sid)
        generated = False
        p = None
        if text:
            try:
                _, _, p = parse_response(text)
                generated = len(p) == len(g)
            except (ValueError, KeyError, TypeError, json.JSONDecodeError):
                generated = False
        pairs.append((_track(p) if generated else None, _track(g), _style_of(sid), generated))
    mode = cfg.evaluate.get("mode", "per_sample_mean")
    report = build_report(
        pairs,
        mode=mode,
        dt=0.5,
        success_ade=float(cfg.evaluate.get("success_ade", 1.0)),
        miss_fde=float(cfg.evaluate.get("miss_fde", 2.0)),
    )
    stamp = _stamp(cfg)
    atomic_write(_out(cfg, "evaluate", "report.json"), report.to_json(extra={**stamp, "label": label}) + "\n")
    csv_text = report.to_csv(label)
    lines = csv_text.splitlines()
    lines[0] += ",config_hash,seed"
    lines[1:] = [ln + f",{stamp['config_hash']},{stamp['seed']}" for ln in lines[1:]]
    atomic_write(_out(cfg, "evaluate", "report.csv"), "\n".join(lines) + "\n")
    return report


def cmd_plot(cfg: PipelineConfig, reports=None):
    """Static SVG charts from filter/metrics reports plus a hybrid-loss slice."""
    from . import plots

    if not reports:
        reports = [p for p in (_out(cfg, "filter", "report.json"), _out(cfg, "evaluate", "report.json")) if p.exists()]
    written = []
    stamp = _stamp(cfg)
    for path in reports:
        path = Path(path)
        doc = _read_json(path, "filter/evaluate")
        if "s_final" in doc:
            written.append(plots.score_bars(doc, _out(cfg, "plots", f"{path.stem}-scores.svg"), stamp))
        elif "styles" in doc or doc == {}:
            written.append(plots.feature_bars(doc, _out(cfg, "plots", f"{path.stem}-features.svg"), stamp))
        else:
            raise DataError(f"{path}: not a filter or metrics report")
    written.append(plots.hybrid_slice(_out(cfg, "plots", "hybrid-loss-slice.svg"), stamp))
    return [str(p) for p in written]


