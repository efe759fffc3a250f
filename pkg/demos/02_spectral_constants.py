"""
Spectral constants of one level
===============================

Compare the graph expansion constants eta(p, 1) with the action gap
kappa_hat and check the forward inequality eta(2,1) >= kappa / (#S K^3).
"""

import warnings

from warpedcone import build_graph, build_net, estimate_cell_measures, sl2z_action
from warpedcone.net import default_radii, verify_ahlfors
from warpedcone.spectra import RowMassWarning, gap_margin, spectral_report

action = sl2z_action()
ahl = verify_ahlfors(action.space, 64, default_radii(action.space), 200_000, seed=0)

for t in (8, 16):
    net = build_net(action.space, t, seed=t)
    estimate_cell_measures(net, 200 * net.n, seed=t)
    g = build_graph(net, action, 200, seed=t)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RowMassWarning)
        rep = spectral_report(g, ahl, p_list=(1, 2, 4), restarts=4, seed=t)
    m = gap_margin(rep)
    print(f"t = {t}: #Z = {rep.n_vertices}")
    print(f"  lambda2 = {rep.lambda2:.4f}, eta(2,1) = {rep.eta_value(2):.4f} (= lambda2 / 2)")
    print(f"  eta(1,1) = {rep.eta_value(1):.4f}, eta(4,1) = {rep.eta_value(4):.4f}")
    print(f"  kappa_hat = {rep.kappa_hat:.4f}, Markov norm = {rep.markov_norm:.4f}")
    print(f"  forward bound {m.strict_bound:.2e}, margin {m.strict_margin:.4f}")
