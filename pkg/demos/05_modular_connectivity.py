"""Transversal CNOT depth between modules, swap-chain cost inside a module, and code overhead.

Run: python3 demos/05_modular_connectivity.py
"""
from spinphoton.protocols import format_table, overhead_compare, swap_chain_fidelity, transversal_depth

reports = [transversal_depth(7, c, conn, 0.999) for conn in ("all_to_all", "planar") for c in (1, 2, 4, 7)]
print(format_table(reports))

print("\nswap-chain CNOT fidelity at gate fidelity 0.99")
for d in range(0, 7):
    print(f"  distance {d}: {swap_chain_fidelity(d, 0.99):.4f}")

print("\nphysical qubits per logical qubit")
for n, k in ((1000, 100), (1000, 200), (3, 1)):
    r = overhead_compare(3000, n, k)
    print(f"  surface 3000 vs block [[{n},{k}]]: {r.qldpc_per_logical:g} per logical, saving x{r.ratio:g}")
