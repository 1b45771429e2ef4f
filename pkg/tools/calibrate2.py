"""Dry run of acceptance criteria 6/7: build the 40x50 study, train the full
grid of models over 3 seeds via a 2-process farm, report every trend check."""

import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from tslab import cli, config
from tslab.train import TrainConfig, predict, train_scl, train_sl

ROOT = Path("/root/scratch/desk2")
SEEDS = (1, 2, 3)


def build():
    cfg = config.ExperimentConfig(
        output_root=str(ROOT / "n1"), case="ieee39", kind="swap4",
        topology_count=40, scenarios_per_topology=50, load_low=0.8, load_high=1.2,
        windows=(0.05, 0.10, 0.15, 0.20), t2_topologies=3, master_seed=1, workers=2)
    cfg.validate()
    if not (cfg.dataset_dir(0.05) / "manifest-gedf.txt").exists():
        t0 = time.time()
        assert cli.cmd_gen_topologies(cfg) == 0
        assert cli.cmd_simulate(cfg) == 0
        assert cli.cmd_extract(cfg) == 0
        print(f"[n1 40x50] built in {time.time()-t0:.0f}s", flush=True)
    return cfg


def run_job(job):
    key, root, window, variant, method, seed, epochs, augment = job
    cfg = config.ExperimentConfig(output_root=root, windows=(window,), t2_topologies=3)
    data = cli.load_dataset(cfg, window, variant)
    tc = TrainConfig(batch_size=64, epochs=epochs, seed=seed)
    fn = train_scl if method == "scl" else train_sl
    t0 = time.time()
    enc, clf, _ = fn(data["train"], data["validation"], tc, augment_views=augment)
    el = time.time() - t0
    out = {}
    for split in ("t1", "t2"):
        pred, _ = predict(enc, clf, data[split].x)
        out[split] = float(np.mean(pred == data[split].y))
    return key, out, el


def main():
    cfg = build()
    jobs = []
    for seed in SEEDS:
        for variant in ("gedf", "raw"):
            for method in ("scl", "sl"):
                jobs.append(((variant, method, 0.05, seed, "aug"),
                             cfg.output_root, 0.05, variant, method, seed, 25, True))
        jobs.append((("gedf", "scl", 0.05, seed, "noaug"),
                     cfg.output_root, 0.05, "gedf", "scl", seed, 25, False))
        for window in (0.10, 0.15, 0.20):
            jobs.append((("gedf", "scl", window, seed, "aug"),
                         cfg.output_root, window, "gedf", "scl", seed, 15, True))

    t0 = time.time()
    results = {}
    with ProcessPoolExecutor(max_workers=2) as pool:
        for key, accs, el in pool.map(run_job, jobs, chunksize=1):
            results[key] = accs
            print(f"{key}: T1={accs['t1']:.3f} T2={accs['t2']:.3f} ({el:.0f}s)", flush=True)
    print(f"total training wall: {(time.time()-t0)/60:.1f} min", flush=True)

    print("\n--- criterion 6 ---")
    for seed in SEEDS:
        g = results[("gedf", "scl", 0.05, seed, "aug")]
        print(f"seed {seed}: gedf-scl T1={g['t1']:.3f} (>=0.85: {g['t1']>=0.85}) "
              f"T2={g['t2']:.3f} (>=0.80: {g['t2']>=0.80})")
    b = sum(results[("gedf", "scl", 0.05, s, "aug")]["t2"] >=
            results[("raw", "scl", 0.05, s, "aug")]["t2"] for s in SEEDS)
    c = sum(results[("gedf", "scl", 0.05, s, "aug")]["t2"] >=
            results[("gedf", "sl", 0.05, s, "aug")]["t2"] for s in SEEDS)
    print(f"gedf>=raw (scl,T2): {b}/3 ; scl>=sl (gedf,T2): {c}/3")
    b2 = sum(results[("gedf", "sl", 0.05, s, "aug")]["t2"] >=
             results[("raw", "sl", 0.05, s, "aug")]["t2"] for s in SEEDS)
    print(f"gedf>=raw (sl,T2): {b2}/3")

    print("\n--- criterion 7 (T1 across windows, scl-gedf) ---")
    for seed in SEEDS:
        chain = [results[("gedf", "scl", w, seed, "aug")]["t1"] if w != 0.05
                 else results[("gedf", "scl", 0.05, seed, "aug")]["t1"]
                 for w in (0.05, 0.10, 0.15, 0.20)]
        mono = all(chain[i] <= chain[i + 1] + 1e-12 for i in range(3))
        print(f"seed {seed}: {['%.3f' % c for c in chain]} monotone={mono} "
              f"endpoint_up={chain[-1] >= chain[0]}")

    print("\n--- aug-gap (|T1-T2| with vs without augmentation) ---")
    for seed in SEEDS:
        a = results[("gedf", "scl", 0.05, seed, "aug")]
        n = results[("gedf", "scl", 0.05, seed, "noaug")]
        print(f"seed {seed}: gap aug={abs(a['t1']-a['t2']):.3f} "
              f"noaug={abs(n['t1']-n['t2']):.3f} reduced={abs(a['t1']-a['t2']) <= abs(n['t1']-n['t2'])}")


if __name__ == "__main__":
    main()
