"""Simulated in-network recursive least squares via consensus ADMM.

Every node keeps a local information pair fed only by its own observations;
agreement on the global estimate is enforced by K rounds of a synchronous
ADMM consensus loop per sampling instant, exchanging estimates and Lagrange
multipliers with communication-graph neighbors.  The sum of the local
information matrices reproduces the centralized RLS information matrix
exactly, which is the invariant that makes K large recover the centralized
estimator.

The consensus penalty rho is only conditionally stable: the local update
anchors on raw neighbor estimates, so the inner loop converges for rho
below a ceiling that depends on the topology and on the conditioning of
the local information matrices.  Dense communication graphs tolerate a
wide range of rho; long rings and similar weakly connected topologies with
near-singular per-node data may not converge for any rho and should be
avoided for the estimator itself (they remain fine as message-count
fixtures).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graphs import Bandlimit, Graph, load_edge_list
from .sampling import NoiseModel


@dataclass(frozen=True)
class CommGraph:
    """Undirected, connected communication topology as neighbor tuples."""

    neighbor_sets: tuple

    def __post_init__(self):
        cleaned = []
        n = len(self.neighbor_sets)
        for i, nbrs in enumerate(self.neighbor_sets):
            ns = tuple(sorted(int(j) for j in nbrs))
            if any(not 0 <= j < n for j in ns):
                raise ValueError(f"neighbor index out of range at node {i}")
            if i in ns:
                raise ValueError(f"node {i} lists itself as a neighbor")
            if len(set(ns)) != len(ns):
                raise ValueError(f"duplicate neighbor at node {i}")
            cleaned.append(ns)
        for i, nbrs in enumerate(cleaned):
            for j in nbrs:
                if i not in cleaned[j]:
                    raise ValueError(f"asymmetric link {i}->{j}")
        object.__setattr__(self, "neighbor_sets", tuple(cleaned))
        if self._components() != 1:
            raise ValueError("communication graph must be connected")

    def _components(self) -> int:
        n = self.n
        seen = [False] * n
        count = 0
        for start in range(n):
            if seen[start]:
                continue
            count += 1
            stack = [start]
            seen[start] = True
            while stack:
                i = stack.pop()
                for j in self.neighbor_sets[i]:
                    if not seen[j]:
                        seen[j] = True
                        stack.append(j)
        return count

    @property
    def n(self) -> int:
        return len(self.neighbor_sets)

    @property
    def num_edges(self) -> int:
        return sum(len(nbrs) for nbrs in self.neighbor_sets) // 2

    @classmethod
    def from_graph(cls, g: Graph) -> "CommGraph":
        return cls(tuple(tuple(g.neighbors(i)) for i in range(g.n)))

    @classmethod
    def complete(cls, n: int) -> "CommGraph":
        return cls(tuple(tuple(j for j in range(n) if j != i) for i in range(n)))

    @classmethod
    def ring(cls, n: int) -> "CommGraph":
        if n < 3:
            raise ValueError("a ring needs at least three nodes")
        return cls(tuple(((i - 1) % n, (i + 1) % n) for i in range(n)))

    @classmethod
    def load(cls, path) -> "CommGraph":
        return cls.from_graph(load_edge_list(path))


@dataclass
class NodeState:
    """Local estimator state: information pair, consensus estimate, and one
    Lagrange multiplier per neighbor."""

    psi_mat: np.ndarray
    psi_vec: np.ndarray
    estimate: np.ndarray
    multipliers: dict


@dataclass(frozen=True)
class DrlsConfig:
    """ADMM parameters: penalty rho, inner rounds per instant, forgetting
    factor, and the initialization weight delta."""

    rho: float = 1.0
    inner_iters: int = 1
    beta: float = 0.95
    delta: float = 1e-3

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("consensus penalty rho must be positive")
        if self.inner_iters < 1:
            raise ValueError("need at least one inner iteration per instant")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("forgetting factor must lie in (0, 1]")
        if self.delta <= 0:
            raise ValueError("initialization weight delta must be positive")


@dataclass
class DrlsNetwork:
    """All node states plus the shared problem data and a message counter."""

    comm: CommGraph
    basis: Bandlimit
    noise: NoiseModel
    nodes: list
    message_count: int = 0


def drls_network_init(comm: CommGraph, b: Bandlimit, noise: NoiseModel,
                      config: DrlsConfig) -> DrlsNetwork:
    """Fresh network: each node starts with Psi_i = (delta/N) I so the sum
    over nodes equals the centralized initialization exactly."""
    if comm.n != b.n or noise.n != b.n:
        raise ValueError("communication graph, basis and noise sizes must agree")
    f = b.size
    share = config.delta / comm.n
    nodes = [
        NodeState(
            psi_mat=share * np.eye(f),
            psi_vec=np.zeros(f),
            estimate=np.zeros(f),
            multipliers={j: np.zeros(f) for j in comm.neighbor_sets[i]},
        )
        for i in range(comm.n)
    ]
    return DrlsNetwork(comm=comm, basis=b, noise=noise, nodes=nodes)


def drls_sense(node: NodeState, y_i: float, d_i: int, variance_i: float,
               u_row_i: np.ndarray, beta: float) -> NodeState:
    """Fold one local observation into the node's information pair:
    Psi_i <- beta Psi_i + d_i u_i u_i^T / sigma_i^2, likewise for psi_i."""
    w = float(d_i) / variance_i
    psi_mat = beta * node.psi_mat + w * np.outer(u_row_i, u_row_i)
    psi_vec = beta * node.psi_vec + w * float(y_i) * u_row_i
    return NodeState(psi_mat=psi_mat, psi_vec=psi_vec,
                     estimate=node.estimate, multipliers=node.multipliers)


def drls_local_update(node: NodeState, neighbor_estimates: dict,
                      incoming_multipliers: dict, rho: float) -> np.ndarray:
    """Closed-form minimizer of the local augmented Lagrangian:
    (Psi_i + rho |N_i| I)^{-1} [psi_i + rho sum_j s_j - (1/2) sum_j (l_ij - l_ji)].
    """
    nbrs = sorted(node.multipliers)
    f = node.psi_vec.shape[0]
    rhs = node.psi_vec.copy()
    for j in nbrs:
        rhs += rho * neighbor_estimates[j]
        rhs -= 0.5 * (node.multipliers[j] - incoming_multipliers[j])
    lhs = node.psi_mat + rho * len(nbrs) * np.eye(f)
    return np.linalg.solve(lhs, rhs)


def drls_multiplier_update(lambda_ij: np.ndarray, s_hat_j: np.ndarray,
                           s_hat_i: np.ndarray, rho: float) -> np.ndarray:
    """Dual ascent step lambda_ij <- lambda_ij + (rho/2)(s_i - s_j).

    The local update prices the links through lambda_ij - lambda_ji, so the
    ascent direction for the multiplier on link (i, j) is the disagreement
    s_i - s_j; the opposite direction turns the consensus loop into positive
    feedback and diverges for every rho.
    """
    return lambda_ij + 0.5 * rho * (s_hat_i - s_hat_j)


def drls_round(network: DrlsNetwork, draws: np.ndarray, observations: np.ndarray,
               config: DrlsConfig) -> DrlsNetwork:
    """One sampling instant: every node senses its own observation, then the
    network runs ``config.inner_iters`` synchronous consensus iterations.

    Within an inner iteration all nodes read previous-iteration neighbor
    estimates (double buffering), then multipliers advance on the freshly
    exchanged estimates.  The message counter grows by 2 |E| per inner
    iteration: one combined payload per directed edge.
    """
    n = network.comm.n
    draws = np.asarray(draws)
    observations = np.asarray(observations, dtype=float)
    if draws.shape != (n,) or observations.shape != (n,):
        raise ValueError("draws and observations must be length-n vectors")
    u = network.basis.basis_slice
    var = network.noise.variances
    for i in range(n):
        network.nodes[i] = drls_sense(network.nodes[i], observations[i],
                                      int(draws[i]), var[i], u[i], config.beta)
    for _ in range(config.inner_iters):
        snapshot = [node.estimate for node in network.nodes]
        new_estimates = []
        for i, node in enumerate(network.nodes):
            nbrs = network.comm.neighbor_sets[i]
            new_estimates.append(drls_local_update(
                node,
                {j: snapshot[j] for j in nbrs},
                {j: network.nodes[j].multipliers[i] for j in nbrs},
                config.rho,
            ))
        for i, node in enumerate(network.nodes):
            node.estimate = new_estimates[i]
        for i, node in enumerate(network.nodes):
            for j in network.comm.neighbor_sets[i]:
                node.multipliers[j] = drls_multiplier_update(
                    node.multipliers[j], new_estimates[j], new_estimates[i],
                    config.rho)
        network.message_count += 2 * network.comm.num_edges
    return network


def drls_simulate(comm: CommGraph, b: Bandlimit, noise: NoiseModel,
                  config: DrlsConfig, draws: np.ndarray, observations: np.ndarray,
                  x_true: np.ndarray):
    """Run the network over pre-drawn masks/observations (horizon x n each).

    Returns (curves, network): curves[t, i] is the squared deviation of node
    i's synthesized estimate from the true signal before instant t is
    sensed, matching the centralized learning-curve convention.
    """
    draws = np.asarray(draws)
    observations = np.asarray(observations, dtype=float)
    if draws.ndim != 2 or draws.shape != observations.shape:
        raise ValueError("draws and observations must both be horizon x n")
    horizon = draws.shape[0]
    network = drls_network_init(comm, b, noise, config)
    u = b.basis_slice
    x_true = np.asarray(x_true, dtype=float)
    curves = np.empty((horizon, comm.n))
    for t in range(horizon):
        for i, node in enumerate(network.nodes):
            err = u @ node.estimate - x_true
            curves[t, i] = float(err @ err)
        drls_round(network, draws[t], observations[t], config)
    return curves, network


def drls_run(comm: CommGraph, b: Bandlimit, noise: NoiseModel, p, config: DrlsConfig,
             horizon: int, rng: np.random.Generator, signal=None):
    """Self-contained simulation: draws the bandlimited signal (unless given),
    the sampling masks, and the observation noise from ``rng``, then defers
    to :func:`drls_simulate`.  Deterministic for a fixed generator state."""
    probs = p.probs if hasattr(p, "probs") else np.asarray(p, dtype=float)
    if signal is None:
        coeffs = rng.normal(size=b.size)
    else:
        coeffs = np.asarray(signal, dtype=float)
        if coeffs.shape != (b.size,):
            raise ValueError(f"signal must supply {b.size} bandlimited coefficients")
    x_true = b.basis_slice @ coeffs
    draws = (rng.random((horizon, b.n)) < probs).astype(np.int8)
    noise_vals = rng.normal(0.0, noise.std, size=(horizon, b.n))
    observations = draws * (x_true + noise_vals)
    return drls_simulate(comm, b, noise, config, draws, observations, x_true)
