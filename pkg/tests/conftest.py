import sys

import numpy as np
import pytest

from recmatch.instance import Instance, Recommendation


def random_instance(rng, nd, ns, theta, homogeneous=False, p_range=(0.0, 1.0), u_range=(0.0, 10.0)):
    u = rng.uniform(*u_range, size=(nd, ns))
    if homogeneous:
        p = np.full((nd, ns), rng.uniform(*p_range))
    else:
        p = rng.uniform(*p_range, size=(nd, ns))
    return Instance(nd, ns, theta, u, p)


def random_rec(rng, instance, fill=0.7):
    """Random feasible recommendation: shuffle supplies and deal them out."""
    nd, ns, theta = instance.num_demands, instance.num_supplies, instance.theta
    lists = [[] for _ in range(nd)]
    for j in rng.permutation(ns):
        if rng.random() > fill:
            continue
        open_ = [i for i in range(nd) if len(lists[i]) < theta]
        if open_:
            lists[open_[rng.integers(len(open_))]].append(int(j))
    return Recommendation(tuple(tuple(r) for r in lists))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
