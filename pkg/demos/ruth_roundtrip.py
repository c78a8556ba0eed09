"""Integrate flat split data to a representation on the pair groupoid, then differentiate back."""

import numpy as np

from vbob import differentiate_ruth, integrate_flat_split, load_builtin, ruth_axiom_residuals, vb_groupoid_from_ruth

V = load_builtin("pair-ruth-gauge").split
R = integrate_flat_split(V)
rep = ruth_axiom_residuals(R)
print("axiom residuals:", {k: f"{v:.1e}" for k, v in rep.corrected.items()})

VG, laws = vb_groupoid_from_ruth(R)
print(f"associativity {laws.associativity:.1e}, source {laws.source_residual:.1e}, target {laws.target_residual:.1e}")

x = np.array([[0.1, -0.3], [0.5, 0.2]])
d = differentiate_ruth(VG.rep, x)
print("connection error:", np.max(np.abs(d.conn_e - V.conn_e.evaluate(x))))
print("omega recovered:", np.max(np.abs(d.omega)))
