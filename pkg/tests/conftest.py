import sys
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from warpedcone.net import build_net, default_radii, estimate_cell_measures, verify_ahlfors  # noqa: E402
from warpedcone.spaces import FlatTorus, sl2z_action  # noqa: E402
from warpedcone.warpgraph import build_graph  # noqa: E402


def sl2z_level(t, seed=5, n_per_cell=200, variant="full"):
    act = sl2z_action()
    net = build_net(act.space, t, seed)
    estimate_cell_measures(net, 200 * net.n, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = build_graph(net, act, n_per_cell, seed, variant=variant)
    return net, g


@pytest.fixture(scope="session")
def sl2z_t8():
    return sl2z_level(8)


@pytest.fixture(scope="session")
def t2_ahlfors():
    space = FlatTorus(2)
    return verify_ahlfors(space, 64, default_radii(space), 200_000, seed=11)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
