"""
Expansion under subdivision
===========================

Subdividing every edge is a quasi-isometry with explicit constants.  The
p=1 expansion constant of the subdivided graphs stays above the bound
transferred from the originals.
"""

import networkx as nx

from warpedcone.qi import qi_invariance_check, subdivide, transfer_bound
from warpedcone.spectra import eta_p1_bruteforce

h, params = subdivide(nx.complete_graph(3), 1)
print(f"K3 subdivided: {h.shape[0]} vertices, QI constants C={params.C} A={params.A} B={params.B}")

family = [nx.complete_graph(n) for n in range(3, 7)]
rep = qi_invariance_check(family, k=1, eta_fn=eta_p1_bruteforce)
print(f"exhaustive eta_G = {rep.eta_G.round(4)}")
print(f"exhaustive eta_H = {rep.eta_H.round(4)}")
print(f"transferred bound {rep.bound:.3e}, violations: {len(rep.violations)}")

for eta_g in (0.1, 1.0, 10.0):
    print(f"bound for eta_G = {eta_g:5.1f}: {transfer_bound(eta_g, rep.params):.3e}")
