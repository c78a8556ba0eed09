"""Period of the round sphere in the trivial-connection model, and the verdict it forces."""

import numpy as np

from vbob import load_builtin, period
from vbob.obstruction import MonodromyEvidence, kernel_intersection_check, verdict

model = load_builtin("sphere-trivial")
P = model.pullbacks()["gen"]

for N in (41, 81, 201):
    res = period(P, N)
    print(f"N={N:4d}  period={res.matrix[0, 0]:.12f}  estimate={res.error_estimate:.1e}")
print(f"4 pi       = {4 * np.pi:.12f}")

# the period has no A-part, so it lives in the kernel of the projection
res = period(P)
ev = MonodromyEvidence.from_period(res, [1.0], rank_a=2)
print("kernel check:", kernel_intersection_check(ev).status)
print("decision:", verdict([res], evidence=ev).decision)
