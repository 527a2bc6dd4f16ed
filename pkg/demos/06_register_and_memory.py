"""Density-matrix register basics: channels, measurement and memory decay of a stored pair.

Run: python3 demos/06_register_and_memory.py
"""
import numpy as np

from spinphoton import qstate
from spinphoton.entanglement import BellDiagonalPair
from spinphoton.network import MemoryModel
from spinphoton.qstate import GateSpec, NoiseChannel

rho = qstate.new_basis_state(2, "00")
rho = qstate.apply_gate(rho, GateSpec("H", (0,)))
rho = qstate.apply_gate(rho, GateSpec("CNOT", (0, 1)))
print(f"Bell preparation fidelity: {qstate.fidelity(rho, qstate.bell_state('phi+')):.12f}")

for kind in ("dephasing", "depolarizing", "amplitude_damping"):
    noisy = qstate.apply_channel(rho, NoiseChannel(kind, 0.1, target=1))
    print(f"  {kind:18s} p=0.1 on one half -> F={qstate.fidelity(noisy, qstate.bell_state('phi+')):.4f}")

rng = np.random.default_rng(5)
counts = [qstate.measure_qubit(rho, 0, "Z", rng)[0] for _ in range(2000)]
print(f"Z outcomes on one half: {np.mean(counts):.3f} (expect 0.5)")

memory = MemoryModel(per_attempt_dephasing=1e-4, t2_nuclear_s=1.1)
pair = BellDiagonalPair.werner(0.98).coeffs
print("\nstored pair while other links keep trying")
for attempts, wait_ns in ((0, 0), (100, 2e5), (1_000, 2e6), (10_000, 2e7)):
    print(f"  {attempts:6d} attempts, {wait_ns / 1e6:5.1f} ms: F={memory.decay(pair, attempts, wait_ns)[0]:.4f}")
