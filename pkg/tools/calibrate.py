"""One-off calibration of the desk-scale study (timings, accuracies)."""

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from tslab import cli, config
from tslab.train import TrainConfig, predict, train_scl, train_sl

ROOT = Path("/root/scratch/desk")


def build(name, **kw):
    cfg = config.ExperimentConfig(output_root=str(ROOT / name), workers=2, **kw)
    cfg.validate()
    if (cfg.dataset_dir(cfg.windows[0]) / "manifest-gedf.txt").exists():
        print(f"[{name}] cached", flush=True)
        return cfg
    t0 = time.time()
    assert cli.cmd_gen_topologies(cfg) == 0
    t1 = time.time()
    assert cli.cmd_simulate(cfg) == 0
    t2 = time.time()
    assert cli.cmd_extract(cfg) == 0
    t3 = time.time()
    print(f"[{name}] gen {t1-t0:.0f}s  sim {t2-t1:.0f}s  extract {t3-t2:.0f}s", flush=True)
    return cfg


def main():
    t_start = time.time()
    cfg = build("n1", case="ieee39", kind="swap4", topology_count=10,
                scenarios_per_topology=50, load_low=0.8, load_high=1.2,
                windows=(0.05, 0.10, 0.15, 0.20), master_seed=1)
    for m, topos, scen in ((1, 6, 30), (2, 6, 30), (3, 5, 24)):
        build(f"d{m}", case="ieee39", kind="remove_m", remove_m=m,
              topology_count=topos, scenarios_per_topology=scen,
              load_low=0.5, load_high=1.5, windows=(0.05,), master_seed=1,
              train_fraction=0.6, val_fraction=0.1)
    print(f"total data gen: {time.time()-t_start:.0f}s", flush=True)

    data = cli.load_dataset(cfg, 0.05, "gedf")
    tr, va, t1, t2 = data["train"], data["validation"], data["t1"], data["t2"]
    print(f"n1 sizes: train={len(tr)} val={len(va)} t1={len(t1)} t2={len(t2)}")
    print(f"label means: train={tr.y.mean():.3f} t1={t1.y.mean():.3f} t2={t2.y.mean():.3f}", flush=True)

    for epochs in (10, 20):
        for seed in (101, 102, 103):
            tc = TrainConfig(batch_size=64, epochs=epochs, seed=seed)
            t0 = time.time()
            enc, clf, hist = train_scl(tr, va, tc)
            el = time.time() - t0
            p1, _ = predict(enc, clf, t1.x)
            p2, _ = predict(enc, clf, t2.x)
            a1, a2 = np.mean(p1 == t1.y), np.mean(p2 == t2.y)
            print(f"scl gedf e{epochs} seed{seed}: T1={a1:.3f} T2={a2:.3f} ({el:.0f}s)", flush=True)

    # raw + sl single comparison at 20 epochs
    rdata = cli.load_dataset(cfg, 0.05, "raw")
    for name, fn, d in (("sl gedf", train_sl, data), ("scl raw", train_scl, rdata),
                        ("sl raw", train_sl, rdata)):
        tc = TrainConfig(batch_size=64, epochs=20, seed=101)
        enc, clf, _ = fn(d["train"], d["validation"], tc)
        p1, _ = predict(enc, clf, d["t1"].x)
        p2, _ = predict(enc, clf, d["t2"].x)
        print(f"{name} e20 seed101: T1={np.mean(p1 == d['t1'].y):.3f} "
              f"T2={np.mean(p2 == d['t2'].y):.3f}", flush=True)


if __name__ == "__main__":
    main()
