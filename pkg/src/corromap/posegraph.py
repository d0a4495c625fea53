"""Sparse pose-graph optimization on SE(3).

Nodes are sensor poses (node-to-map); edges carry relative-pose
measurements with 6x6 information matrices, residual ordering
[translation, rotation].  Optional ground-plane constraints tie the
per-node view of a global plane to its prediction (residual
[n_x, n_y, offset], constraining roll, pitch, and height).  The gauge is
fixed by anchoring the first node.  Solved by Levenberg-Marquardt with
numerically differentiated Jacobians; the chi-square sequence over
accepted steps is non-increasing by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import RigidTransform, rotvec_from_quat


class GraphDisconnected(ValueError):
    """Edge structure does not connect all nodes."""


class SingularHessian(RuntimeError):
    """Normal equations unsolvable (typically an unfixed gauge)."""


@dataclass
class PoseEdge:
    i: int
    j: int
    measurement: RigidTransform   # expected X_i^-1 X_j
    information: np.ndarray

    def __post_init__(self):
        self.information = np.asarray(self.information, dtype=float).reshape(6, 6)


@dataclass
class GroundConstraint:
    """Observed ground plane in a node's local frame: n . x = offset."""

    node: int
    normal: np.ndarray
    offset: float
    information: np.ndarray
    # the global plane the observation is compared against, map frame
    global_normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    global_offset: float = 0.0

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float).reshape(3)
        self.normal = self.normal / np.linalg.norm(self.normal)
        self.information = np.asarray(self.information, dtype=float).reshape(3, 3)
        g = np.asarray(self.global_normal, dtype=float).reshape(3)
        self.global_normal = g / np.linalg.norm(g)


@dataclass
class PoseGraph:
    nodes: list[RigidTransform]
    edges: list[PoseEdge] = field(default_factory=list)
    constraints: list[GroundConstraint] = field(default_factory=list)


@dataclass
class OptimizeResult:
    graph: PoseGraph
    chi2: float
    chi2_history: list[float]
    converged: bool
    n_iter: int


def _edge_residual(edge: PoseEdge, xi: RigidTransform,
                   xj: RigidTransform) -> np.ndarray:
    D = edge.measurement.inverse() @ (xi.inverse() @ xj)
    return np.concatenate([D.t, rotvec_from_quat(D.q)])


def _constraint_residual(con: GroundConstraint, x: RigidTransform) -> np.ndarray:
    R = x.rotation
    n_pred = R.T @ con.global_normal
    d_pred = con.global_offset - con.global_normal @ x.t
    return np.array([n_pred[0] - con.normal[0],
                     n_pred[1] - con.normal[1],
                     d_pred - con.offset])


def _perturbed(x: RigidTransform, delta: np.ndarray) -> RigidTransform:
    return RigidTransform.from_rotvec(delta[3:], delta[:3]) @ x


def _numeric_jacobian(fun, x: RigidTransform, dim_out: int,
                      step: float = 1e-7) -> np.ndarray:
    J = np.empty((dim_out, 6))
    for k in range(6):
        d = np.zeros(6)
        d[k] = step
        J[:, k] = (fun(_perturbed(x, d)) - fun(_perturbed(x, -d))) / (2.0 * step)
    return J


def graph_chi2(graph: PoseGraph) -> float:
    total = 0.0
    for e in graph.edges:
        r = _edge_residual(e, graph.nodes[e.i], graph.nodes[e.j])
        total += float(r @ e.information @ r)
    for c in graph.constraints:
        r = _constraint_residual(c, graph.nodes[c.node])
        total += float(r @ c.information @ r)
    return total


def _check_connected(graph: PoseGraph):
    n = len(graph.nodes)
    if n <= 1:
        return
    adj: list[list[int]] = [[] for _ in range(n)]
    for e in graph.edges:
        adj[e.i].append(e.j)
        adj[e.j].append(e.i)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    if not seen.all():
        raise GraphDisconnected(f"{int((~seen).sum())} nodes unreachable from node 0")


def optimize_graph(graph: PoseGraph, max_iter: int = 30, tol: float = 1e-8,
                   fix_first: bool = True) -> OptimizeResult:
    """Levenberg-Marquardt over all node poses.

    Args:
        graph: input graph (not modified; the result carries new nodes).
        max_iter: outer iteration cap.
        tol: infinity-norm step threshold for convergence.
        fix_first: anchor node 0 (the gauge); disabling it without another
            gauge source raises SingularHessian.

    Raises:
        GraphDisconnected: some node is unreachable through edges.
        SingularHessian: the damped system cannot be solved.
    """
    _check_connected(graph)
    nodes = list(graph.nodes)
    n = len(nodes)
    free = list(range(1, n)) if fix_first else list(range(n))
    col = {node: 6 * k for k, node in enumerate(free)}
    dim = 6 * len(free)

    chi2 = graph_chi2(graph)
    history = [chi2]
    if dim == 0 or (not graph.edges and not graph.constraints):
        return OptimizeResult(PoseGraph(nodes, graph.edges, graph.constraints),
                              chi2, history, True, 0)

    lam = 1e-6
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        H = np.zeros((dim, dim))
        b = np.zeros(dim)
        for e in graph.edges:
            r = _edge_residual(e, nodes[e.i], nodes[e.j])
            blocks = []
            if e.i in col:
                Ji = _numeric_jacobian(
                    lambda x: _edge_residual(e, x, nodes[e.j]), nodes[e.i], 6)
                blocks.append((col[e.i], Ji))
            if e.j in col:
                Jj = _numeric_jacobian(
                    lambda x: _edge_residual(e, nodes[e.i], x), nodes[e.j], 6)
                blocks.append((col[e.j], Jj))
            for ca, Ja in blocks:
                b[ca:ca + 6] += Ja.T @ e.information @ r
                for cb, Jb in blocks:
                    H[ca:ca + 6, cb:cb + 6] += Ja.T @ e.information @ Jb
        for c in graph.constraints:
            if c.node not in col:
                continue
            r = _constraint_residual(c, nodes[c.node])
            Jc = _numeric_jacobian(
                lambda x: _constraint_residual(c, x), nodes[c.node], 3)
            ca = col[c.node]
            b[ca:ca + 6] += Jc.T @ c.information @ r
            H[ca:ca + 6, ca:ca + 6] += Jc.T @ c.information @ Jc

        if n_iter == 1 and not fix_first:
            # without an anchor the system has a free gauge; refuse rather
            # than let damping hide the rank deficiency
            w = np.linalg.eigvalsh(H)
            if w[0] < 1e-10 * max(w[-1], 1e-300):
                raise SingularHessian("gauge not fixed; anchor a node")

        if np.max(np.abs(b)) < 1e-14:
            converged = True
            break

        accepted = False
        while lam < 1e12:
            try:
                delta = np.linalg.solve(H + lam * np.eye(dim), -b)
            except np.linalg.LinAlgError as exc:
                raise SingularHessian(str(exc)) from exc
            if not np.all(np.isfinite(delta)):
                raise SingularHessian("non-finite update; gauge unfixed?")
            trial = list(nodes)
            for node, ca in col.items():
                trial[node] = _perturbed(nodes[node], delta[ca:ca + 6])
            trial_graph = PoseGraph(trial, graph.edges, graph.constraints)
            chi2_new = graph_chi2(trial_graph)
            if chi2_new <= chi2:
                nodes = trial
                chi2 = chi2_new
                history.append(chi2)
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged = True
            break
        if np.max(np.abs(delta)) < tol:
            converged = True
            break

    return OptimizeResult(PoseGraph(nodes, graph.edges, graph.constraints),
                          chi2, history, converged, n_iter)
