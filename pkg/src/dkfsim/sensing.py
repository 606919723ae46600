"""Sensor network model: per-node measurements and the node-to-estimator delay channel."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

R_MIN = 1e-6  # variance floor; keeps R invertible when sampled ranges touch 0


@dataclass(frozen=True)
class DelaySpec:
    """Constant delay (seconds) plus an optional additive Gaussian component.

    The stochastic component is drawn once per node per run, not per message.
    """

    base: float = 0.0
    jitter_std: float = 0.0

    def __post_init__(self):
        if self.base < 0.0:
            raise ConfigError("delay base must be >= 0", keys=("delay_range",))
        if self.jitter_std < 0.0:
            raise ConfigError("jitter_std must be >= 0", keys=("jitter_std",))


@dataclass(frozen=True)
class SensorNode:
    """One filter node: measurement matrix H (p x m), noise covariance R (p x p), delay."""

    id: int
    h: np.ndarray
    r: np.ndarray
    delay: DelaySpec = DelaySpec()

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.h, dtype=float))
        r = np.atleast_2d(np.asarray(self.r, dtype=float))
        p = h.shape[0]
        if r.shape != (p, p):
            raise ConfigError(f"node {self.id}: R shape {r.shape} does not match p={p}")
        if np.linalg.eigvalsh(0.5 * (r + r.T)).min() <= 0.0:
            raise ConfigError(f"node {self.id}: R must be positive definite")
        if np.linalg.matrix_rank(h) < p or p > h.shape[1]:
            raise ConfigError(f"node {self.id}: H must have full row rank p <= m")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "r", r)

    @property
    def state_dim(self) -> int:
        return self.h.shape[1]

    def info_increment(self) -> np.ndarray:
        """H^T R^{-1} H, the per-update information added by this node."""
        return self.h.T @ np.linalg.solve(self.r, self.h)


@dataclass(frozen=True)
class SensorNetwork:
    """Ordered node collection with unique contiguous ids 1..n."""

    nodes: tuple

    def __post_init__(self):
        ids = [node.id for node in self.nodes]
        if ids != list(range(1, len(ids) + 1)):
            raise ConfigError("node ids must be contiguous 1..n in order")
        object.__setattr__(self, "nodes", tuple(self.nodes))

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def node(self, node_id: int) -> SensorNode:
        return self.nodes[node_id - 1]

    def ids(self) -> list[int]:
        return [node.id for node in self.nodes]


def measure(node: SensorNode, x, rng: np.random.Generator) -> np.ndarray:
    """z = H x + v with v ~ N(0, R)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != node.state_dim:
        raise ConfigError(f"state dim {x.shape[0]} does not match H columns {node.state_dim}")
    v = rng.standard_normal(node.h.shape[0]) @ np.linalg.cholesky(node.r).T
    return node.h @ x + v


def measure_sequence(node: SensorNode, states, rng: np.random.Generator) -> np.ndarray:
    """Measurements of every state in an (N+1, m) array; shape (N+1, p)."""
    states = np.asarray(states, dtype=float)
    v = rng.standard_normal((states.shape[0], node.h.shape[0])) @ np.linalg.cholesky(node.r).T
    return states @ node.h.T + v


def sample_network(
    n: int,
    variance_range,
    delay_range,
    rng: np.random.Generator,
    state_dim: int = 2,
    jitter_std: float = 0.0,
) -> SensorNetwork:
    """Draw n single-row sensors: random basis row H, R ~ U[variance_range], delay ~ U[delay_range].

    Variances are clamped below at R_MIN so information quantities stay finite.
    """
    if n < 1:
        raise ConfigError("cannot sample an empty network", keys=("n_sensors",))
    for name, (lo, hi) in (("variance_range", variance_range), ("delay_range", delay_range)):
        if not (0.0 <= lo <= hi):
            raise ConfigError(f"{name} must satisfy 0 <= lo <= hi", keys=(name,))
    rows = rng.integers(0, state_dim, size=n)
    variances = np.maximum(rng.uniform(variance_range[0], variance_range[1], size=n), R_MIN)
    delays = rng.uniform(delay_range[0], delay_range[1], size=n)
    nodes = []
    for i in range(n):
        h = np.zeros((1, state_dim))
        h[0, rows[i]] = 1.0
        nodes.append(
            SensorNode(
                id=i + 1,
                h=h,
                r=np.array([[variances[i]]]),
                delay=DelaySpec(base=float(delays[i]), jitter_std=jitter_std),
            )
        )
    return SensorNetwork(tuple(nodes))


def delay_steps(node: SensorNode, ts: float, rng: np.random.Generator | None = None) -> int:
    """Effective delay in filter steps: base plus one jitter draw, clamped at 0.

    Round-to-nearest with ties away from zero; a 1e-9 nudge absorbs binary
    representation error in ratios like 0.015/0.01.
    """
    if ts <= 0.0:
        raise ConfigError("ts must be positive", keys=("ts",))
    eff = node.delay.base
    if node.delay.jitter_std > 0.0:
        if rng is None:
            raise ConfigError(f"node {node.id} has stochastic delay; rng required")
        eff += rng.normal(0.0, node.delay.jitter_std)
    eff = max(eff, 0.0)
    return int(math.floor(eff / ts + 0.5 + 1e-9))


def resolve_delays(network: SensorNetwork, rng: np.random.Generator | None = None) -> SensorNetwork:
    """Fold each node's jitter draw into a constant delay (one draw per node).

    Returns an equivalent network with jitter_std = 0 everywhere, suitable for
    the selection algorithms, which require delays to be known.
    """
    nodes = []
    for node in network:
        if node.delay.jitter_std > 0.0:
            if rng is None:
                raise ConfigError("network has stochastic delays; rng required")
            eff = max(node.delay.base + rng.normal(0.0, node.delay.jitter_std), 0.0)
            nodes.append(replace(node, delay=DelaySpec(base=eff, jitter_std=0.0)))
        else:
            nodes.append(node)
    return SensorNetwork(tuple(nodes))


def load_network(path, state_dim: int = 2) -> SensorNetwork:
    """Read a network file: one node per line, `id h_row_index variance delay_s jitter_std`."""
    nodes = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ConfigError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            node_id, row_idx = int(parts[0]), int(parts[1])
            variance, delay_s, jitter = (float(v) for v in parts[2:])
            h = np.zeros((1, state_dim))
            h[0, row_idx] = 1.0
            nodes.append(
                SensorNode(
                    id=node_id,
                    h=h,
                    r=np.array([[max(variance, R_MIN)]]),
                    delay=DelaySpec(base=delay_s, jitter_std=jitter),
                )
            )
    return SensorNetwork(tuple(nodes))


def save_network(network: SensorNetwork, path) -> None:
    """Write the single-row network file format read by load_network."""
    with open(path, "w", encoding="utf-8") as fh:
        for node in network:
            if node.h.shape[0] != 1:
                raise ConfigError("network file format supports single-row sensors only")
            row_idx = int(np.argmax(np.abs(node.h[0])))
            fh.write(
                f"{node.id} {row_idx} {node.r[0, 0]:.17g} "
                f"{node.delay.base:.17g} {node.delay.jitter_std:.17g}\n"
            )
