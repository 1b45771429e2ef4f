"""Command-line pipeline: gen-topologies, simulate, extract, train, finetune,
eval, report.

Every stage reads one config file, derives its randomness from the master
seed through the documented fan-out rule, and writes deterministic
artifacts, so a full pipeline rerun with the same master seed is
byte-identical and the worker count never changes outputs.

Exit codes: 0 success, 1 usage/config error, 2 infeasible topology
generation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import features, grid, metrics, powerflow, report, simulator, topogen
from .config import (STAGE_EXTRACT, STAGE_FINETUNE, STAGE_GEN, STAGE_SIMULATE,
                     STAGE_TRAIN, ConfigError, ExperimentConfig, load_config,
                     save_config)
from .model import load_checkpoint, save_checkpoint
from .textio import Section, render_sections, write_sections
from .train import (ArrayDataset, TrainConfig, TrainingDivergedError, finetune,
                    history_table, predict, stack_samples, train_scl, train_sl)

log = logging.getLogger("tslab")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3


def config_hash(cfg: ExperimentConfig) -> str:
    from .config import _SECTION_FIELDS
    from .textio import fmt

    sections = []
    for sec_name, names in _SECTION_FIELDS.items():
        sec = Section(sec_name)
        for name in names:
            value = getattr(cfg, name)
            if name == "windows":
                value = " ".join(f"{w:g}" for w in value)
            sec.kv[name] = fmt(value)
        sections.append(sec)
    return hashlib.sha256(render_sections(sections).encode()).hexdigest()[:16]


def _provenance_section(cfg: ExperimentConfig, stage: str) -> Section:
    sec = Section("provenance")
    sec.kv = {"stage": stage, "config_hash": config_hash(cfg),
              "master_seed": str(cfg.master_seed)}
    return sec


# ---------------------------------------------------------------------------
# gen-topologies
# ---------------------------------------------------------------------------

def cmd_gen_topologies(cfg: ExperimentConfig) -> int:
    base, _ = cfg.load_base_case()
    cfg.topologies_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for k in range(cfg.topology_count):
        seed = cfg.stage_seed(STAGE_GEN, k)
        try:
            if cfg.kind == "swap4":
                spec = topogen.generate_swap_topology(base, seed)
            else:
                spec = topogen.generate_removal_topology(base, cfg.remove_m, seed)
        except topogen.GenerationExhaustedError as exc:
            log.error("topology %d (seed %d): %s", k, seed, exc)
            return EXIT_INFEASIBLE
        path = cfg.topologies_dir / f"{spec.topology_id}.topo"
        topogen.save_topology(spec, base, path)
        rows.append([k, spec.topology_id, path.name, seed, spec.kind])
        log.info("topology %d -> %s", k, spec.topology_id)
    manifest = Section("topologies")
    manifest.rows = rows
    write_sections(cfg.topologies_dir / "manifest.txt",
                   [_provenance_section(cfg, "gen-topologies"), manifest])
    return EXIT_OK


def load_topologies(cfg: ExperimentConfig):
    from .textio import read_sections

    manifest = read_sections(cfg.topologies_dir / "manifest.txt")
    out = []
    for row in manifest["topologies"].rows:
        spec, case = topogen.load_topology(cfg.topologies_dir / row[2])
        out.append((int(row[0]), spec, case))
    return out


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig) -> int:
    _, transformer_keys = cfg.load_base_case()
    topologies = load_topologies(cfg)
    jobs = []
    for k, spec, case in topologies:
        scen_seed = cfg.stage_seed(STAGE_SIMULATE, k)
        scenarios = simulator.sample_scenarios(
            spec, case, cfg.scenarios_per_topology, (cfg.load_low, cfg.load_high),
            scen_seed, transformer_keys)
        jobs += [(case, s) for s in scenarios]
    summary = simulator.run_campaign(jobs, cfg.records_dir, cfg.effective_workers())

    sec = Section("campaign")
    ratio = summary.stable / summary.unstable if summary.unstable else float("inf")
    sec.kv = {
        "total": str(summary.total), "succeeded": str(summary.succeeded),
        "failed": str(summary.failed), "stable": str(summary.stable),
        "unstable": str(summary.unstable),
        "stable_unstable_ratio": f"{ratio:.4f}",
    }
    fails = Section("failures")
    fails.rows = [f"{t}/{s} {msg}" for t, s, msg in sorted(summary.failures)]
    write_sections(cfg.records_dir / "campaign.txt",
                   [_provenance_section(cfg, "simulate"), sec, fails])
    log.info("campaign: %d/%d succeeded, stable:unstable = %d:%d",
             summary.succeeded, summary.total, summary.stable, summary.unstable)
    return EXIT_OK if summary.success_rate >= 0.95 else EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------

def cmd_extract(cfg: ExperimentConfig) -> int:
    topologies = load_topologies(cfg)
    store = simulator.RecordStore(cfg.records_dir)
    missing = []
    refs_by_key: dict = {}
    per_topo_records: dict = {}
    matrices_by_topo: dict = {}
    for _, spec, case in topologies:
        paths = sorted((cfg.records_dir / spec.topology_id).glob("*.rec"))
        if not paths:
            missing.append(spec.topology_id)
            continue
        sol = powerflow.solve(case)
        if not sol.converged:
            log.error("extract: base power flow failed for %s", spec.topology_id)
            return EXIT_NUMERICAL
        matrices_by_topo[spec.topology_id] = grid.build_laplacian(case, sol.vmag)
        per_topo_records[spec.topology_id] = paths
    if missing:
        log.error("extract: no trajectory records for topologies: %s", ", ".join(missing))
        return EXIT_USAGE

    refs = []
    for topo_id, paths in sorted(per_topo_records.items()):
        mats = matrices_by_topo[topo_id]
        for rec_path in paths:
            rec = simulator.load_record(rec_path)
            for window in cfg.windows:
                gedf = features.extract_window(rec, mats, window)
                raw = features.extract_raw(rec, window)
                for sample in (gedf, raw):
                    out = features.sample_path(cfg.dataset_dir(window), sample.variant,
                                               topo_id, rec.scenario_id)
                    features.save_sample(sample, out)
            refs.append(features.SampleRef(
                topology_id=topo_id, scenario_id=rec.scenario_id,
                path=f"samples/gedf/{topo_id}/{rec.scenario_id}.rec",
                label=rec.label))

    # one scenario partition shared by every window and variant
    split = features.make_splits(
        refs, (cfg.train_fraction, cfg.val_fraction),
        rng_seed=cfg.stage_seed(STAGE_EXTRACT), t2_topologies=cfg.t2_topologies)
    raw_split = features.DatasetSplit(
        train=[_reref(r, "raw") for r in split.train],
        validation=[_reref(r, "raw") for r in split.validation],
        t1=[_reref(r, "raw") for r in split.t1],
        t2=[_reref(r, "raw") for r in split.t2],
        topology_partition=split.topology_partition)
    for window in cfg.windows:
        ds_dir = cfg.dataset_dir(window)
        features.write_manifest(split, ds_dir / "manifest-gedf.txt")
        features.write_manifest(raw_split, ds_dir / "manifest-raw.txt")
        log.info("extract: window %.2f -> %d scenarios", window, len(refs))
    return EXIT_OK


def _reref(ref: features.SampleRef, variant: str) -> features.SampleRef:
    return features.SampleRef(
        topology_id=ref.topology_id, scenario_id=ref.scenario_id,
        path=ref.path.replace("/gedf/", f"/{variant}/"), label=ref.label)


def load_dataset(cfg: ExperimentConfig, window: float, variant: str) -> dict:
    """Split name -> ArrayDataset from the manifest of one (window, variant)."""
    ds_dir = cfg.dataset_dir(window)
    manifest = features.read_manifest(ds_dir / f"manifest-{variant}.txt", root=ds_dir)
    out = {}
    for name, paths in manifest.items():
        samples = [features.load_sample(p) for p in paths]
        out[name] = stack_samples(samples) if samples else ArrayDataset(
            x=np.zeros((0, 1, 1)), y=np.zeros(0, dtype=int))
    return out


# ---------------------------------------------------------------------------
# train / finetune
# ---------------------------------------------------------------------------

def checkpoint_path(cfg: ExperimentConfig, variant: str, method: str, window: float) -> Path:
    return cfg.checkpoints_dir / f"{variant}-{method}-w{window:.2f}-s{cfg.master_seed}.ckpt"


def cmd_train(cfg: ExperimentConfig, variant: str, method: str, window: float) -> int:
    data = load_dataset(cfg, window, variant)
    tc = TrainConfig(
        temperature=cfg.temperature, learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size, epochs=cfg.epochs,
        seed=cfg.stage_seed(STAGE_TRAIN),
        stage="scl_encoder" if method == "scl" else "sl_baseline")
    try:
        if method == "scl":
            enc, clf, history = train_scl(data["train"], data["validation"], tc)
        else:
            enc, clf, history = train_sl(data["train"], data["validation"], tc)
    except TrainingDivergedError as exc:
        log.error("training diverged: %s", exc)
        return EXIT_NUMERICAL
    path = checkpoint_path(cfg, variant, method, window)
    save_checkpoint(path, {"encoder": enc, "classifier": clf}, {
        "stage": "train", "variant": variant, "method": method,
        "window": f"{window:.2f}", "seed": str(tc.seed),
        "master_seed": str(cfg.master_seed), "config_hash": config_hash(cfg),
    })
    (path.with_suffix(".history.txt")).write_text(history_table(history))
    log.info("train: %s", path.name)
    return EXIT_OK


def cmd_finetune(cfg: ExperimentConfig, window: float, encoder_path,
                 variant: str = "gedf") -> int:
    try:
        parts, meta = load_checkpoint(encoder_path)
    except (OSError, ValueError) as exc:
        log.error("cannot load encoder checkpoint: %s", exc)
        return EXIT_USAGE
    if "encoder" not in parts:
        log.error("checkpoint %s has no encoder part", encoder_path)
        return EXIT_USAGE
    if meta.get("variant", variant) != variant:
        log.error("checkpoint variant %r does not match requested %r",
                  meta.get("variant"), variant)
        return EXIT_USAGE

    data = load_dataset(cfg, window, variant)
    ds_dir = cfg.dataset_dir(window)
    manifest = features.read_manifest(ds_dir / f"manifest-{variant}.txt", root=ds_dir)
    all_samples = [features.load_sample(p) for name in ("train", "validation", "t1", "t2")
                   for p in manifest[name]]
    refs = [features.SampleRef(s.topology_id, s.scenario_id, "", s.label)
            for s in all_samples]
    seed = cfg.stage_seed(STAGE_FINETUNE)
    subset_refs, rest_refs = features.finetune_subset(refs, 0.2, seed)
    keyset = {(r.topology_id, r.scenario_id) for r in subset_refs}
    subset = stack_samples([s for s in all_samples if (s.topology_id, s.scenario_id) in keyset])
    rest = stack_samples([s for s in all_samples if (s.topology_id, s.scenario_id) not in keyset])

    tc = TrainConfig(temperature=cfg.temperature, learning_rate=cfg.learning_rate,
                     batch_size=cfg.batch_size, epochs=cfg.epochs, seed=seed,
                     stage="finetune")
    try:
        clf, history = finetune(parts["encoder"], subset, rest, tc)
    except TrainingDivergedError as exc:
        log.error("fine-tuning diverged: %s", exc)
        return EXIT_NUMERICAL

    path = cfg.checkpoints_dir / f"finetune-{variant}-w{window:.2f}-s{cfg.master_seed}.ckpt"
    save_checkpoint(path, {"encoder": parts["encoder"], "classifier": clf}, {
        "stage": "finetune", "variant": variant, "method": "scl",
        "window": f"{window:.2f}", "seed": str(seed),
        "master_seed": str(cfg.master_seed), "config_hash": config_hash(cfg),
        "pretrained_from": str(encoder_path),
        "finetune_count": str(len(subset)), "eval_count": str(len(rest)),
    })
    path.with_suffix(".history.txt").write_text(history_table(history))

    pred, scores = predict(parts["encoder"], clf, rest.x)
    rep = metrics.attach_auc(
        metrics.confusion_metrics(pred, rest.y, split=f"d{cfg.remove_m}",
                                  variant=variant, method="finetune",
                                  seed=cfg.master_seed),
        scores, rest.y)
    report.write_metrics_csv([(rep, window)],
                             cfg.reports_dir / f"finetune-w{window:.2f}-s{cfg.master_seed}.csv")
    log.info("finetune: %s (%d fit / %d eval)", path.name, len(subset), len(rest))
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval / report
# ---------------------------------------------------------------------------

def cmd_eval(cfg: ExperimentConfig, window: float | None = None) -> int:
    windows = [window] if window else list(cfg.windows)
    rows = []
    for w in windows:
        for variant in ("gedf", "raw"):
            for method in ("scl", "sl"):
                path = checkpoint_path(cfg, variant, method, w)
                if not path.exists():
                    continue
                parts, meta = load_checkpoint(path)
                if meta.get("config_hash") not in (None, config_hash(cfg)):
                    log.error("checkpoint %s was produced by a different config", path.name)
                    return EXIT_USAGE
                data = load_dataset(cfg, w, variant)
                for split in ("t1", "t2"):
                    ds = data[split]
                    if len(ds) == 0:
                        continue
                    pred, scores = predict(parts["encoder"], parts["classifier"], ds.x)
                    rep = metrics.attach_auc(
                        metrics.confusion_metrics(pred, ds.y, split=split, variant=variant,
                                                  method=method, seed=cfg.master_seed),
                        scores, ds.y)
                    rows.append((rep, w))
                    _write_scores(cfg, w, variant, method, split, ds, scores)
    if not rows:
        log.error("eval: no matching checkpoints under %s", cfg.checkpoints_dir)
        return EXIT_USAGE
    report.write_metrics_csv(rows, cfg.reports_dir / f"metrics-s{cfg.master_seed}.csv")
    text = [render_sections([_provenance_section(cfg, "eval")])]
    for w in windows:
        group = [r for r, ww in rows if ww == w]
        if group:
            text.append(report.metrics_table(group, w))
    (cfg.reports_dir / f"metrics-s{cfg.master_seed}.txt").write_text("\n".join(text))
    log.info("eval: wrote %d metric rows", len(rows))
    return EXIT_OK


def _write_scores(cfg, window, variant, method, split, ds, scores) -> None:
    path = cfg.reports_dir / "scores" / \
        f"{variant}-{method}-w{window:.2f}-s{cfg.master_seed}-{split}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["label,score"]
    lines += [f"{y},{s:.12g}" for y, s in zip(ds.y, scores)]
    path.write_text("\n".join(lines) + "\n")


def cmd_report(cfg: ExperimentConfig) -> int:
    rows = []
    for path in sorted(cfg.reports_dir.glob("metrics-s*.csv")):
        rows += report.read_metrics_csv(path)
    if not rows:
        log.error("report: no metrics files under %s", cfg.reports_dir)
        return EXIT_USAGE

    by_window: dict = {}
    for rep, w in rows:
        by_window.setdefault(w, []).append(rep)
    text = [render_sections([_provenance_section(cfg, "report")])]
    for w in sorted(by_window):
        text.append(report.metrics_table(report.average_reports(by_window[w]), w))
    (cfg.reports_dir / "summary.txt").write_text("\n".join(text))
    report.write_metrics_csv(rows, cfg.reports_dir / "summary.csv")

    figures = cfg.reports_dir / "figures"
    for path in sorted(cfg.reports_dir.glob("scores/*-t2.csv"))[:6]:
        name = path.stem
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size:
            report.roc_figure({name: (data[:, 1], data[:, 0].astype(int))},
                              figures / f"roc-{name}.png")
    trend_rows = [(w, r.method, r.split, r.acc)
                  for w, reps in by_window.items()
                  for r in report.average_reports(reps)
                  if r.variant == "gedf" and r.acc is not None]
    if len({w for w, *_ in trend_rows}) > 1:
        report.window_trend_figure(trend_rows, figures / "window-trend.png")

    hist = {}
    for path in sorted(cfg.checkpoints_dir.glob("*.history.txt"))[:6]:
        hist[path.stem.replace(".history", "")] = _parse_history(path)
    if hist:
        report.history_figure(hist, figures / "history.png")

    stable = unstable = None
    for rec_path in simulator.RecordStore(cfg.records_dir).list_records():
        rec = simulator.load_record(rec_path)
        if rec.label == 1 and stable is None:
            stable = rec
        elif rec.label == 0 and unstable is None:
            unstable = rec
        if stable is not None and unstable is not None:
            break
    panels = {k: v for k, v in (("stable", stable), ("unstable", unstable)) if v is not None}
    if panels:
        report.trajectory_figure(panels, figures / "trajectories.png")
        window = cfg.windows[0]
        heat = {}
        for name, rec in panels.items():
            p = features.sample_path(cfg.dataset_dir(window), "gedf",
                                     rec.topology_id, rec.scenario_id)
            if p.exists():
                heat[name] = features.load_sample(p)
        if heat:
            report.heatmap_figure(heat, figures / "gedf-heatmaps.png")
    log.info("report: summary + figures under %s", cfg.reports_dir)
    return EXIT_OK


def _parse_history(path):
    from .train import HistoryRow

    rows = []
    for line in path.read_text().splitlines()[1:]:
        f = line.split()
        if len(f) >= 5:
            acc = float("nan") if f[4] == "-" else float(f[4])
            rows.append(HistoryRow(f[0], int(f[1]), float(f[2]), float(f[3]), acc))
    return rows


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tslab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="experiment config file")
        sp.add_argument("--seed", type=int, default=None, help="override master seed")
        sp.add_argument("--workers", type=int, default=None, help="override worker count")

    common(sub.add_parser("gen-topologies", help="generate altered topologies"))
    common(sub.add_parser("simulate", help="run the fault campaign"))
    common(sub.add_parser("extract", help="extract GEDF/raw datasets and splits"))

    tr = sub.add_parser("train", help="train a model")
    common(tr)
    tr.add_argument("--variant", choices=("gedf", "raw"), default="gedf")
    tr.add_argument("--method", choices=("scl", "sl"), default="scl")
    tr.add_argument("--window", type=float, choices=WINDOW_CHOICES, default=0.05)

    ft = sub.add_parser("finetune", help="fine-tune the classifier on a frozen encoder")
    common(ft)
    ft.add_argument("--encoder", required=True, help="pretrained checkpoint path")
    ft.add_argument("--variant", choices=("gedf", "raw"), default="gedf")
    ft.add_argument("--window", type=float, choices=WINDOW_CHOICES, default=0.05)

    ev = sub.add_parser("eval", help="evaluate checkpoints on T1/T2")
    common(ev)
    ev.add_argument("--window", type=float, choices=WINDOW_CHOICES, default=None)

    common(sub.add_parser("report", help="write summary tables and figures"))
    return p


WINDOW_CHOICES = (0.05, 0.10, 0.15, 0.20)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.master_seed = args.seed
        if args.workers is not None:
            cfg.workers = args.workers
        cfg.validate()
    except (ConfigError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "gen-topologies":
            return cmd_gen_topologies(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "extract":
            return cmd_extract(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.variant, args.method, args.window)
        if args.command == "finetune":
            return cmd_finetune(cfg, args.window, args.encoder, args.variant)
        if args.command == "eval":
            return cmd_eval(cfg, args.window)
        if args.command == "report":
            return cmd_report(cfg)
    except topogen.GenerationExhaustedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (grid.NumericalError, TrainingDivergedError, simulator.ScenarioInvalidError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
