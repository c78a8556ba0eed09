"""Symplectic areas of the leaves of the rescaled su(2)* structure and their variation."""

import numpy as np

from vbob import load_builtin
from vbob.modelfile import leaf_sphere
from vbob.poisson import area_scan

m = load_builtin("su2-star")
rows = area_scan(m.poissons["E"], lambda r, e: leaf_sphere(m, r, e), [0.5, 1.0, 2.0], [0.0, 1.0], N=201)

print(f"{'r':>4} {'e':>5} {'area':>12} {'closed form':>12} {'dA/dr':>9} {'dA/de':>9}")
for row in rows:
    exact = 4 * np.pi * row.r / (1 + row.e ** 2 / 2)
    print(f"{row.r:4.1f} {row.e:5.1f} {row.area:12.8f} {exact:12.8f} {row.dA_dr:9.5f} {row.dA_de:9.5f}")

# the gradient at (r, e) is the monodromy generator of T*E over that leaf
g = m.generators["mon"]
print("asserted generator at (x, y, z, e) = (0, 0, 1, 1):", g.v_a, g.v_c)
