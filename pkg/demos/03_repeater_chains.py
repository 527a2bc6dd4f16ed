"""Repeater chains on the event engine: first generation (heralded links, swapping,
optional distillation) and second generation (encoded [[7,1,3]] hops).

Run: python3 demos/03_repeater_chains.py
"""
import math

import numpy as np

from spinphoton.network import (
    LinkTiming,
    MemoryModel,
    Topology,
    WernerSource,
    expected_max_geometric,
    gen1_repeater,
    gen2_repeater,
    link_efficiency,
    logical_error_rate,
)

rng = np.random.default_rng(3)
timing = LinkTiming(pump_cycle_ns=2_000.0)

chain = Topology.linear_chain(4, fibre_km=5.0, registers=8)
eta = link_efficiency(chain.links[0], chain.constants)
print(f"4-link chain, 5 km per link: link efficiency {eta:.3f}")

source = WernerSource(p_success=0.2, fidelity=0.97)
# Plain recurrence only catches bit-flip-type errors, so phase errors pile up over
# repeated rounds; the DEJMPS basis rotation alternates which error type is caught.
for rounds, dejmps in ((0, False), (1, False), (1, True)):
    name = "none" if rounds == 0 else ("DEJMPS" if dejmps else "BBPSSW")
    for memory, label in ((MemoryModel(0.0, math.inf), "ideal memory"), (MemoryModel(1e-4, 1.1), "noisy memory")):
        runs = [gen1_repeater(chain, rounds, None, rng, source=source, timing=timing, memory=memory,
                              placement="before_swap", dejmps=dejmps) for _ in range(200)]
        f = np.mean([r.end_to_end_fidelity for r in runs])
        t = np.mean([r.wall_time_ns for r in runs]) / 1e3
        print(f"  gen-1, distillation {name:6s}, {label:12s}: F={f:.4f}  time={t:8.1f} us")

print("\nsecond generation, one hop of seven parallel physical pairs")
hop = Topology.linear_chain(1, registers=7)
for p in (0.01, 0.05, 0.1):
    par = np.mean([gen2_repeater(hop, (7, 1, 3), None, np.random.default_rng(s), source=WernerSource(p),
                                 timing=timing).wall_time_ns for s in range(300)])
    ser = np.mean([gen2_repeater(hop, (7, 1, 3), None, np.random.default_rng(s), source=WernerSource(p),
                                 timing=timing, schedule="serial").wall_time_ns for s in range(300)])
    print(f"  p={p:.2f}: parallel {par / 2e3:7.1f} attempts (expect {expected_max_geometric(p, 7):7.1f}),"
          f" serial {ser / 2e3:7.1f}")
for pp in (1e-3, 1e-2, 5e-2):
    print(f"  physical error {pp:g} -> logical error {logical_error_rate(pp):.3e}")
