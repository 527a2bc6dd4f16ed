"""Bell-diagonal pairs: swapping, recurrence distillation and the teleported CNOT.

Run: python3 demos/01_bell_pairs_and_distillation.py
"""
import numpy as np

from spinphoton.entanglement import (
    BellDiagonalPair,
    bbpssw_closed_form,
    circuit_gate_fidelity,
    swap_entanglement,
    teleported_cnot_fidelity,
    werner_swap_fidelity,
)

# Two Werner links meeting at node "m"; swapping composes their Pauli errors.
ab = BellDiagonalPair.werner(0.95, endpoints=(("a", 0), ("m", 0)))
bc = BellDiagonalPair.werner(0.95, endpoints=(("m", 0), ("c", 0)))
ac = swap_entanglement(ab, bc)
print(f"swap of two F=0.95 links -> F={ac.fidelity:.6f} (closed form {werner_swap_fidelity(0.95, 0.95):.6f})")

# One recurrence step on equal Werner inputs raises fidelity above 1/2.
print("\n  F_in    P_success  F_out")
for f in (0.6, 0.7, 0.8, 0.9, 0.95):
    w = BellDiagonalPair.werner(f).coeffs
    p, out = bbpssw_closed_form(w, w)
    print(f"  {f:.2f}    {p:.4f}     {out[0]:.4f}")

# Gate teleportation: the closed form agrees with a full density-matrix run.
print("\npair F   closed form   4-qubit circuit")
for f in (1.0, 0.95, 0.9, 0.8):
    c = BellDiagonalPair.werner(f).coeffs
    print(f"  {f:.2f}   {teleported_cnot_fidelity(c):.10f}  {circuit_gate_fidelity(c)[0]:.10f}")

rng = np.random.default_rng(0)
c = rng.dirichlet([6, 1, 1, 1])
print(f"\nrandom pair {np.round(c, 3)}: gate fidelity {teleported_cnot_fidelity(c):.6f}")
