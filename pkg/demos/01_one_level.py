"""
One level of the discretized warped cone
========================================

Build a 1/t-separated net on the 2-torus, estimate Voronoi cell measures,
and assemble the graph G(t) for the SL2(Z) action generated by the two
elementary matrices.
"""

import numpy as np

from warpedcone import build_graph, build_net, estimate_cell_measures, sl2z_action
from warpedcone.net import default_radii, verify_ahlfors
from warpedcone.warpgraph import degree_report

action = sl2z_action()
t = 12

# The net: greedy random points, then exact hole filling, so every point of
# the torus is within 1/t of some net point.
net = build_net(action.space, t, seed=0)
print(f"#Z = {net.n}, min separation {net.min_separation():.4f} >= 1/t = {1 / t:.4f}")
print(f"covering radius {net.achieved_density:.4f}")

# Cell measures by Monte Carlo, 200 samples per cell.
mu = estimate_cell_measures(net, 200 * net.n, seed=0)
print(f"cell measures in [{mu.min():.5f}, {mu.max():.5f}], mean {mu.mean():.5f}")

# The graph: type-1 edges witness the action, type-2 edges the geometry.
g = build_graph(net, action, 200, seed=0)
deg = g.degrees()
print(f"degrees: min {deg.min()}, mean {deg.mean():.1f}, max {deg.max()}")

# Ahlfors regularity fixes the degree bound.
ahl = verify_ahlfors(action.space, 64, default_radii(action.space), 200_000, seed=0)
rep = degree_report(g, ahl, action)
print(f"Ahlfors m = {ahl.m:.3f}, C = {ahl.C:.3f}, K = {ahl.K:.3f}")
print(f"degree bound {rep.bound_total:.0f}, violated: {rep.violation}")
print("type-1 max degree per generator:", np.asarray(rep.max_type1))
