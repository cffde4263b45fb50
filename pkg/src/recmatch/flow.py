"""Min-cost flow by successive shortest paths, and max-weight b-matching on top.

The network is small (a few thousand arcs at most) so a plain
adjacency-list implementation with Dijkstra on reduced costs is enough.
Arcs are scanned in insertion order and ties in Dijkstra are broken by node
index, which makes the returned solution reproducible.
"""

from __future__ import annotations

import heapq
import math
from typing import Sequence

import numpy as np

EPS = 1e-9


class MinCostFlow:
    """Residual network with node potentials.

    Costs may be negative on arcs leaving the source side as long as the
    graph is a DAG initially; :meth:`init_potentials` handles that with a
    Bellman-Ford pass.
    """

    def __init__(self, n: int):
        self.n = n
        self.graph: list[list[int]] = [[] for _ in range(n)]
        # parallel arc arrays; arc e and e ^ 1 are a forward/backward pair
        self.to: list[int] = []
        self.cap: list[int] = []
        self.cost: list[float] = []

    def add_edge(self, u: int, v: int, cap: int, cost: float) -> int:
        e = len(self.to)
        self.to += [v, u]
        self.cap += [cap, 0]
        self.cost += [cost, -cost]
        self.graph[u].append(e)
        self.graph[v].append(e + 1)
        return e

    def flow_on(self, e: int) -> int:
        return self.cap[e ^ 1]

    def init_potentials(self, s: int) -> list[float]:
        pot = [math.inf] * self.n
        pot[s] = 0.0
        for _ in range(self.n - 1):
            changed = False
            for u in range(self.n):
                if pot[u] == math.inf:
                    continue
                for e in self.graph[u]:
                    if self.cap[e] > 0 and pot[u] + self.cost[e] < pot[self.to[e]] - EPS:
                        pot[self.to[e]] = pot[u] + self.cost[e]
                        changed = True
            if not changed:
                break
        return [0.0 if p == math.inf else p for p in pot]

    def _dijkstra(self, s: int, pot: list[float]):
        dist = [math.inf] * self.n
        prev = [-1] * self.n
        dist[s] = 0.0
        heap = [(0.0, s)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u] + EPS:
                continue
            for e in self.graph[u]:
                if self.cap[e] <= 0:
                    continue
                v = self.to[e]
                nd = d + self.cost[e] + pot[u] - pot[v]
                if nd < dist[v] - EPS:
                    dist[v] = nd
                    prev[v] = e
                    heapq.heappush(heap, (nd, v))
        return dist, prev

    def min_cost_flow(self, s: int, t: int, max_flow: int | None = None,
                      only_negative: bool = False) -> tuple[int, float]:
        """Push flow along cheapest paths.

        With ``only_negative`` augmentation stops as soon as the cheapest
        path has non-negative cost, which yields a min-cost flow of any value
        (used for maximum-weight, not maximum-cardinality, matchings).
        """
        pot = self.init_potentials(s)
        flow, total = 0, 0.0
        while max_flow is None or flow < max_flow:
            dist, prev = self._dijkstra(s, pot)
            if dist[t] == math.inf:
                break
            path_cost = dist[t] - pot[s] + pot[t]
            if only_negative and path_cost > -EPS:
                break
            for v in range(self.n):
                if dist[v] < math.inf:
                    pot[v] += dist[v]
            push = math.inf if max_flow is None else max_flow - flow
            v = t
            while v != s:
                e = prev[v]
                push = min(push, self.cap[e])
                v = self.to[e ^ 1]
            v = t
            while v != s:
                e = prev[v]
                self.cap[e] -= push
                self.cap[e ^ 1] += push
                v = self.to[e ^ 1]
            flow += push
            total += push * path_cost
        return flow, total


def max_weight_b_matching(weights: np.ndarray, left_caps: Sequence[int] | int,
                          right_cap: int = 1, only_positive: bool = True):
    """Maximum-weight b-matching on a complete bipartite graph.

    Parameters
    ----------
    weights : (L, R) array
        Edge weights; the objective is maximized.
    left_caps : int or sequence of int
        Capacity of each left node.
    right_cap : int
        Capacity of each right node.
    only_positive : bool
        Stop once no augmenting path improves the weight (edges of weight
        <= 0 are never needed). With ``False`` the matching is also of
        maximum cardinality.

    Returns
    -------
    pairs : list of (left, right)
        Matched pairs in ascending order.
    value : float
        Total weight of the matching.
    """
    w = np.asarray(weights, dtype=float)
    nl, nr = w.shape
    caps = [left_caps] * nl if isinstance(left_caps, (int, np.integer)) else list(left_caps)
    s, t = nl + nr, nl + nr + 1
    net = MinCostFlow(nl + nr + 2)
    for i in range(nl):
        net.add_edge(s, i, int(caps[i]), 0.0)
    arcs = {}
    for i in range(nl):
        for j in range(nr):
            arcs[(i, j)] = net.add_edge(i, nl + j, 1, -float(w[i, j]))
    for j in range(nr):
        net.add_edge(nl + j, t, right_cap, 0.0)
    net.min_cost_flow(s, t, only_negative=only_positive)
    pairs = sorted(k for k, e in arcs.items() if net.flow_on(e) > 0)
    value = math.fsum(w[i, j] for i, j in pairs)
    return pairs, value
