"""Finite graph models of warped cones and their expansion constants."""
from .harness import ExperimentConfig, FamilyVerdict, emit_plots, run_family
from .net import AhlforsEstimate, Net, assign_cell, build_net, estimate_cell_measures, verify_ahlfors
from .qi import QIParams, subdivide, transfer_bound
from .spaces import Action, FlatTorus, apply, lipschitz_estimate, rotation_action, sl2z_action
from .spectra import (SpectralReport, estimate_eta, eta, kappa_hat, lambda2, markov_norm,
                      pairwise_form_ratio, spectral_report)
from .warpgraph import WarpedGraph, build_graph, warped_distance

__version__ = "0.1.0"

__all__ = [
    "Action", "AhlforsEstimate", "ExperimentConfig", "FamilyVerdict", "FlatTorus", "Net",
    "QIParams", "SpectralReport", "WarpedGraph", "apply", "assign_cell", "build_graph",
    "build_net", "emit_plots", "estimate_cell_measures", "estimate_eta", "eta", "kappa_hat",
    "lambda2", "lipschitz_estimate", "markov_norm", "pairwise_form_ratio", "rotation_action",
    "run_family", "sl2z_action", "spectral_report", "subdivide", "transfer_bound",
    "verify_ahlfors", "warped_distance",
]
