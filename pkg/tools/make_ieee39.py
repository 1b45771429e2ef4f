"""Regenerate src/tslab/data/ieee39.case from the standard New England tables.

Static network: the widely circulated 39-bus line/transformer table (46
branches, series reactance only, resistance and charging dropped for the
lossless model) and the classic load/generation schedules.  Machine
constants are the classic 10-machine values (H in seconds, x'd in p.u. on
100 MVA); M = 2H/omega_s at 50 Hz system frequency.
"""

import hashlib
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from tslab import grid

# from-bus, to-bus, series reactance x (p.u., 100 MVA)
BRANCHES = [
    (1, 2, 0.0411), (1, 39, 0.0250), (2, 3, 0.0151), (2, 25, 0.0086),
    (3, 4, 0.0213), (3, 18, 0.0133), (4, 5, 0.0128), (4, 14, 0.0129),
    (5, 6, 0.0026), (5, 8, 0.0112), (6, 7, 0.0092), (6, 11, 0.0082),
    (7, 8, 0.0046), (8, 9, 0.0363), (9, 39, 0.0250), (10, 11, 0.0043),
    (10, 13, 0.0043), (13, 14, 0.0101), (14, 15, 0.0217), (15, 16, 0.0094),
    (16, 17, 0.0089), (16, 19, 0.0195), (16, 21, 0.0135), (16, 24, 0.0059),
    (17, 18, 0.0082), (17, 27, 0.0173), (21, 22, 0.0140), (22, 23, 0.0096),
    (23, 24, 0.0350), (25, 26, 0.0323), (26, 27, 0.0147), (26, 28, 0.0474),
    (26, 29, 0.0625), (28, 29, 0.0151),
    # transformers
    (12, 11, 0.0435), (12, 13, 0.0435), (6, 31, 0.0250), (10, 32, 0.0200),
    (19, 33, 0.0142), (20, 34, 0.0180), (22, 35, 0.0143), (23, 36, 0.0272),
    (25, 37, 0.0232), (2, 30, 0.0181), (29, 38, 0.0156), (19, 20, 0.0138),
]

# bus -> (P load, Q load) in MW / MVAr
LOADS = {
    3: (322.0, 2.4), 4: (500.0, 184.0), 7: (233.8, 84.0), 8: (522.0, 176.0),
    12: (7.5, 88.0), 15: (320.0, 153.0), 16: (329.0, 32.3), 18: (158.0, 30.0),
    20: (628.0, 103.0), 21: (274.0, 115.0), 23: (247.5, 84.6), 24: (308.6, -92.0),
    25: (224.0, 47.2), 26: (139.0, 17.0), 27: (281.0, 75.5), 28: (206.0, 27.6),
    29: (283.5, 26.9), 31: (9.2, 4.6), 39: (1104.0, 250.0),
}

# bus -> voltage setpoint (p.u.); bus 31 is the slack
GEN_VSET = {
    30: 1.0475, 31: 0.9820, 32: 0.9831, 33: 0.9972, 34: 1.0123,
    35: 1.0493, 36: 1.0635, 37: 1.0278, 38: 1.0265, 39: 1.0300,
}

# bus -> scheduled P (MW); the slack (31) is filled with the lossless balance
GEN_P_MW = {
    30: 250.0, 32: 650.0, 33: 632.0, 34: 508.0, 35: 650.0,
    36: 560.0, 37: 540.0, 38: 830.0, 39: 1000.0,
}

# bus -> (H seconds, x'd p.u.); classic 10-machine constants on 100 MVA.
# Damping is zero in the classic deck.
MACHINES = {
    30: (42.0, 0.0310), 31: (30.3, 0.0697), 32: (35.8, 0.0531),
    33: (28.6, 0.0436), 34: (26.0, 0.1320), 35: (34.8, 0.0500),
    36: (26.4, 0.0490), 37: (24.3, 0.0570), 38: (34.5, 0.0570),
    39: (500.0, 0.0060),
}

FREQ_HZ = 50.0
BASE_MVA = 100.0


def build() -> grid.GridCase:
    import math

    omega_s = 2.0 * math.pi * FREQ_HZ
    total_load = sum(p for p, _ in LOADS.values()) / BASE_MVA
    total_sched = sum(GEN_P_MW.values()) / BASE_MVA
    slack_pm = total_load - total_sched  # lossless balance

    buses = []
    for i in range(1, 40):
        p, q = LOADS.get(i, (0.0, 0.0))
        if i == 31:
            btype = "slack"
        elif i in GEN_VSET:
            btype = "PV"
        else:
            btype = "PQ"
        buses.append(grid.Bus(id=i, type=btype, vset=GEN_VSET.get(i, 1.0),
                              pload=p / BASE_MVA, qload=q / BASE_MVA))

    branches = [grid.Branch(f, t, x) for f, t, x in BRANCHES]

    gens = []
    for bus in sorted(MACHINES):
        h, xdp = MACHINES[bus]
        pm = GEN_P_MW.get(bus, slack_pm * BASE_MVA) / BASE_MVA
        gens.append(grid.Generator(bus=bus, m=2.0 * h / omega_s, d=0.0,
                                   xd_prime=xdp, pm=pm))

    return grid.validate(grid.GridCase(
        id="ieee39", buses=tuple(buses), branches=tuple(branches),
        generators=tuple(gens), base_mva=BASE_MVA, frequency_hz=FREQ_HZ))


def main() -> None:
    out = Path(__file__).resolve().parents[1] / "src" / "tslab" / "data" / "ieee39.case"
    out.parent.mkdir(parents=True, exist_ok=True)
    grid.save_case(build(), out)
    digest = hashlib.sha256(out.read_bytes()).hexdigest()
    print(f"wrote {out}")
    print(f"sha256 {digest}")


if __name__ == "__main__":
    main()
