"""Wasserstein-1 distance between bin-mass vectors with cityblock ground cost.

The l1 distance between two bins equals the length of a shortest path in the
4-neighbour grid graph whose horizontal edges cost ``dx`` and vertical edges
``dy``.  Optimal transport under that cost is therefore an uncapacitated
min-cost flow on the grid graph, with only ``O(p)`` arcs instead of the
``p**2`` variables of the transport polytope.  The flow problem is solved by
a primal network simplex.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidArgumentError, NumericalError
from .grid import BinWeights, GridSpec

UNITS = ("physical", "index")


@dataclass(frozen=True)
class FlowProblem:
    """Uncapacitated min-cost flow: ``supply[i]`` leaves node ``i`` in net."""

    supply: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        if abs(float(np.sum(self.supply))) > 1e-12:
            raise InvalidArgumentError(f"supplies sum to {np.sum(self.supply)!r}, not 0")
        if np.any(self.cost <= 0):
            raise InvalidArgumentError("arc costs must be positive")


@dataclass(frozen=True)
class FlowSolution:
    flow: np.ndarray
    cost: float
    pivots: int


def _costs(grid: GridSpec, units: str) -> tuple[float, float]:
    if units == "physical":
        return grid.dx, grid.dy
    if units == "index":
        return 1.0, 1.0
    raise InvalidArgumentError(f"units must be one of {UNITS}, got {units!r}")


def ground_distance(grid: GridSpec, a: int, b: int, units: str = "physical") -> float:
    cx, cy = _costs(grid, units)
    ja, ka = grid.coords_of(a)
    jb, kb = grid.coords_of(b)
    return abs(ja - jb) * cx + abs(ka - kb) * cy


def grid_flow_problem(grid: GridSpec, supply: np.ndarray, units: str = "physical") -> FlowProblem:
    """Both directions of every horizontal and vertical grid edge as arcs."""
    cx, cy = _costs(grid, units)
    idx = np.arange(grid.p).reshape(grid.k_bins, grid.j_bins)
    h0, h1 = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    v0, v1 = idx[:-1, :].ravel(), idx[1:, :].ravel()
    src = np.concatenate([h0, h1, v0, v1]).astype(np.int64)
    dst = np.concatenate([h1, h0, v1, v0]).astype(np.int64)
    cost = np.concatenate([np.full(2 * h0.size, cx), np.full(2 * v0.size, cy)])
    return FlowProblem(np.asarray(supply, dtype=float), src, dst, cost)


@njit(cache=True)
def _network_simplex(supply, src, dst, cost, big_m, eps):
    n = supply.size
    m = src.size
    root = n
    n_arcs = m + n
    a_src = np.empty(n_arcs, dtype=np.int64)
    a_dst = np.empty(n_arcs, dtype=np.int64)
    a_cost = np.empty(n_arcs)
    flow = np.zeros(n_arcs)
    in_tree = np.zeros(n_arcs, dtype=np.bool_)
    a_src[:m] = src
    a_dst[:m] = dst
    a_cost[:m] = cost

    parent = np.full(n + 1, -1, dtype=np.int64)
    pred = np.full(n + 1, -1, dtype=np.int64)
    up = np.zeros(n + 1, dtype=np.bool_)
    depth = np.zeros(n + 1, dtype=np.int64)
    pi = np.zeros(n + 1)
    first_child = np.full(n + 1, -1, dtype=np.int64)
    next_sib = np.full(n + 1, -1, dtype=np.int64)
    prev_sib = np.full(n + 1, -1, dtype=np.int64)

    # initial strongly feasible tree: artificial arcs to/from the root
    for i in range(n):
        a = m + i
        a_cost[a] = big_m
        if supply[i] >= 0:
            a_src[a] = i
            a_dst[a] = root
            flow[a] = supply[i]
            up[i] = True
            pi[i] = -big_m
        else:
            a_src[a] = root
            a_dst[a] = i
            flow[a] = -supply[i]
            up[i] = False
            pi[i] = big_m
        in_tree[a] = True
        parent[i] = root
        pred[i] = a
        depth[i] = 1
        next_sib[i] = first_child[root]
        if first_child[root] >= 0:
            prev_sib[first_child[root]] = i
        first_child[root] = i

    block = max(int(np.sqrt(n_arcs)), 16)
    next_arc = 0
    pivots = 0
    stack = np.empty(n + 1, dtype=np.int64)
    path = np.empty(n + 1, dtype=np.int64)
    old_pred = np.empty(n + 1, dtype=np.int64)
    old_up = np.empty(n + 1, dtype=np.bool_)

    while True:
        # block search for an entering arc
        entering = -1
        best = -eps
        scanned = 0
        while scanned < n_arcs:
            stop = min(block, n_arcs - scanned)
            for _ in range(stop):
                a = next_arc
                next_arc += 1
                if next_arc == n_arcs:
                    next_arc = 0
                if not in_tree[a]:
                    rc = a_cost[a] + pi[a_src[a]] - pi[a_dst[a]]
                    if rc < best:
                        best = rc
                        entering = a
            scanned += stop
            if entering >= 0:
                break
        if entering < 0:
            break
        pivots += 1
        k = a_src[entering]
        l = a_dst[entering]

        # apex of the cycle
        x = k
        y = l
        while x != y:
            if depth[x] > depth[y]:
                x = parent[x]
            elif depth[y] > depth[x]:
                y = parent[y]
            else:
                x = parent[x]
                y = parent[y]
        w = x

        # leaving arc: last blocking arc met when walking the cycle from the apex
        dk = np.inf
        qk = -1
        x = k
        while x != w:
            if up[x] and flow[pred[x]] < dk:
                dk = flow[pred[x]]
                qk = x
            x = parent[x]
        dl = np.inf
        ql = -1
        x = l
        while x != w:
            if (not up[x]) and flow[pred[x]] <= dl:
                dl = flow[pred[x]]
                ql = x
            x = parent[x]
        if ql >= 0 and dl <= dk:
            delta = dl
            q = ql
            q_on_l = True
        else:
            delta = dk
            q = qk
            q_on_l = False
        if q < 0:
            return flow[:m], -1

        # augment
        if delta > 0:
            x = k
            while x != w:
                if up[x]:
                    flow[pred[x]] -= delta
                else:
                    flow[pred[x]] += delta
                x = parent[x]
            x = l
            while x != w:
                if up[x]:
                    flow[pred[x]] += delta
                else:
                    flow[pred[x]] -= delta
                x = parent[x]
            flow[entering] += delta
        leaving = pred[q]
        flow[leaving] = 0.0
        in_tree[leaving] = False
        in_tree[entering] = True

        # re-hang the detached subtree from the entering arc
        if q_on_l:
            inner = l
            outer = k
        else:
            inner = k
            outer = l
        length = 0
        x = inner
        while True:
            path[length] = x
            old_pred[length] = pred[x]
            old_up[length] = up[x]
            length += 1
            if x == q:
                break
            x = parent[x]
        for i in range(length):
            x = path[i]
            px = parent[x]
            if prev_sib[x] >= 0:
                next_sib[prev_sib[x]] = next_sib[x]
            else:
                first_child[px] = next_sib[x]
            if next_sib[x] >= 0:
                prev_sib[next_sib[x]] = prev_sib[x]
            prev_sib[x] = -1
            next_sib[x] = -1
        for i in range(length):
            x = path[i]
            if i == 0:
                newp = outer
                pred[x] = entering
                up[x] = a_src[entering] == x
            else:
                newp = path[i - 1]
                pred[x] = old_pred[i - 1]
                up[x] = not old_up[i - 1]
            parent[x] = newp
            next_sib[x] = first_child[newp]
            if first_child[newp] >= 0:
                prev_sib[first_child[newp]] = x
            first_child[newp] = x

        # refresh depth and potentials below the re-hung subtree
        top = 0
        stack[top] = inner
        top += 1
        while top > 0:
            top -= 1
            x = stack[top]
            px = parent[x]
            depth[x] = depth[px] + 1
            if up[x]:
                pi[x] = pi[px] - a_cost[pred[x]]
            else:
                pi[x] = pi[px] + a_cost[pred[x]]
            c = first_child[x]
            while c >= 0:
                stack[top] = c
                top += 1
                c = next_sib[c]

    artificial = 0.0
    for i in range(n):
        artificial += flow[m + i]
    if artificial > 1e-9:
        return flow[:m], -2
    return flow[:m], pivots


def solve_flow(problem: FlowProblem) -> FlowSolution:
    """Solve an uncapacitated min-cost flow problem by network simplex."""
    n = problem.supply.size
    if problem.src.size == 0:
        if np.any(np.abs(problem.supply) > 1e-12):
            raise NumericalError("flow problem is infeasible")
        return FlowSolution(np.zeros(0), 0.0, 0)
    big_m = 1.0 + float(problem.cost.sum())
    eps = 1e-12 * big_m
    flow, status = _network_simplex(problem.supply.astype(float), problem.src, problem.dst,
                                     problem.cost.astype(float), big_m, eps)
    if status == -1:
        raise NumericalError("network simplex found an unbounded cycle")
    if status == -2:
        raise NumericalError("flow problem is infeasible (graph not connected?)")
    flow = np.maximum(flow, 0.0)
    return FlowSolution(flow, float(np.dot(flow, problem.cost)), int(status))


def _as_weights(w) -> BinWeights:
    return w if isinstance(w, BinWeights) else BinWeights(w)


def wasserstein1(grid: GridSpec, p, q, units: str = "physical", return_solution: bool = False):
    """Exact W1 distance between two bin-mass vectors on ``grid``.

    The pair is put in a canonical order before solving, so swapping the
    arguments gives a bit-identical cost (the flow in ``return_solution``
    then refers to the canonical order).
    """
    p, q = _as_weights(p), _as_weights(q)
    if len(p) != grid.p or len(q) != grid.p:
        raise InvalidArgumentError("weight vectors do not match the grid")
    differ = np.flatnonzero(p.theta != q.theta)
    if differ.size and p.theta[differ[0]] > q.theta[differ[0]]:
        p, q = q, p
    mismatch = float(p.theta.sum() - q.theta.sum())
    if abs(mismatch) > 1e-10:
        raise InvalidArgumentError(f"total masses differ by {mismatch:.3e}")
    supply = p.theta - q.theta
    supply = supply - supply.sum() / supply.size
    problem = grid_flow_problem(grid, supply, units)
    solution = solve_flow(problem)
    return (solution.cost, problem, solution) if return_solution else solution.cost
