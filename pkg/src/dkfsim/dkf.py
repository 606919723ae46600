"""Information-filter node recursions, delayed fusion at the estimator, and a
covariance-form Kalman filter used as a test oracle.

Node filters run on their own delay-free clocks. The estimator receives each
node's (posterior - prior) information differences with a per-node staleness
of d_i steps and compensates only through its own time updates.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericError, SelectionError, SingularInformationError
from .model import (
    LtvSystem,
    Trajectory,
    is_effectively_singular,
    robust_inverse,
    simulate,
    transition_matrix,
    transition_sequence,
)
from .sensing import SensorNetwork, delay_steps

PSD_TOL = 1e-9


def _symmetrize(a):
    return 0.5 * (a + a.T)


# ---------------------------------------------------------------------------
# Node-level recursions (reference implementations; the batched kernels in
# dkfsim._kernels implement the same arithmetic for whole networks at once).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NodeFilterState:
    """Snapshot of one node filter.

    Before a measurement update the posterior fields equal the priors, so the
    (posterior - prior) difference is exactly the node's pending report.
    x estimates are None while the information matrix is singular.
    """

    info_prior: np.ndarray
    info_post: np.ndarray
    iv_prior: np.ndarray
    iv_post: np.ndarray
    x_prior: np.ndarray | None = None
    x_post: np.ndarray | None = None
    gain: np.ndarray | None = None

    @property
    def state_dim(self) -> int:
        return self.info_post.shape[0]


def _recover(info, iv):
    if is_effectively_singular(info):
        return None
    return np.linalg.solve(info, iv)


def node_init(m: int, info0=None, x0_hat=None) -> NodeFilterState:
    """Initial state with prior information info0 (default 0, i.e. no prior)."""
    info = np.zeros((m, m)) if info0 is None else _symmetrize(np.asarray(info0, dtype=float))
    if x0_hat is None:
        iv = np.zeros(m)
    else:
        iv = info @ np.asarray(x0_hat, dtype=float)
    x = _recover(info, iv)
    return NodeFilterState(
        info_prior=info, info_post=info.copy(), iv_prior=iv, iv_post=iv.copy(),
        x_prior=x, x_post=None if x is None else x.copy(),
    )


def node_measurement_update(state: NodeFilterState, z, h, r) -> NodeFilterState:
    """info_post = info_prior + H^T R^{-1} H; iv_post = iv_prior + H^T R^{-1} z."""
    h = np.atleast_2d(np.asarray(h, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if h.shape[1] != state.state_dim or r.shape[0] != h.shape[0] or z.shape[0] != h.shape[0]:
        raise ConfigError("inconsistent measurement dimensions")
    if is_effectively_singular(r):
        raise ConfigError("measurement covariance is singular")
    hr = h.T @ np.linalg.inv(r)
    info_post = _symmetrize(state.info_prior + hr @ h)
    iv_post = state.iv_prior + hr @ z
    return replace(
        state,
        info_post=info_post,
        iv_post=iv_post,
        x_post=_recover(info_post, iv_post),
        gain=None,
    )


def time_update_general(info, iv, a_inv, q_inv):
    """One general-form time update of an information pair.

    M = Ainv^T I Ainv, C = M (M + Q^{-1})^{-1},
    I' = (I-C) M (I-C)^T + C Q^{-1} C^T, yv' = (I-C) Ainv^T yv.

    The Joseph-style product keeps the update valid for singular info; it
    equals (A I^{-1} A^T + Q)^{-1} whenever info is invertible.
    """
    mk = a_inv.T @ info @ a_inv
    c = np.linalg.solve(mk + q_inv, mk).T
    d = np.eye(info.shape[0]) - c
    info_next = _symmetrize(d @ mk @ d.T + c @ q_inv @ c.T)
    iv_next = d @ (a_inv.T @ iv)
    return info_next, iv_next


def node_time_update(state: NodeFilterState, a_k, q, step=None) -> NodeFilterState:
    """Propagate the posterior to the next-step prior (general-form update)."""
    a_inv, _ = robust_inverse(np.asarray(a_k, dtype=float))
    q_inv = np.linalg.inv(np.asarray(q, dtype=float))
    info_next, iv_next = time_update_general(state.info_post, state.iv_post, a_inv, q_inv)
    if not (np.all(np.isfinite(info_next)) and np.all(np.isfinite(iv_next))):
        where = "" if step is None else f" at step {step}"
        raise NumericError(f"non-finite information after time update{where}")
    x = _recover(info_next, iv_next)
    return NodeFilterState(
        info_prior=info_next, info_post=info_next.copy(),
        iv_prior=iv_next, iv_post=iv_next.copy(),
        x_prior=x, x_post=None if x is None else x.copy(),
    )


def observer_gain(state: NodeFilterState, a_k, h, r) -> np.ndarray:
    """L(k) = A(k) info_post^{-1} H^T R^{-1} (one-step-ahead predictor gain)."""
    if is_effectively_singular(state.info_post):
        raise SingularInformationError("information matrix singular: node not yet observable")
    h = np.atleast_2d(np.asarray(h, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    return np.asarray(a_k, dtype=float) @ np.linalg.solve(state.info_post, h.T) @ np.linalg.inv(r)


# ---------------------------------------------------------------------------
# Estimator-side fusion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FusedEstimate:
    """Fused posterior at one step: information matrix, state estimate, step index."""

    info: np.ndarray
    x_hat: np.ndarray
    step: int
    pinv_fallback: bool = False


@dataclass(frozen=True)
class DelayedReport:
    """A node's (posterior - prior) information differences, d_i steps stale."""

    node_id: int
    dinfo: np.ndarray
    div: np.ndarray
    staleness: int

    def __post_init__(self):
        if self.staleness < 0:
            raise ConfigError("staleness must be >= 0")


def fuse(info_prior, x_prior, reports, step: int = 0) -> FusedEstimate:
    """Additive fusion of delayed reports onto the estimator prior.

    I(k|k) = I(k|k-1) + sum dinfo_j;
    x(k|k) = I(k|k)^{-1} [I(k|k-1) x(k|k-1) + sum div_j].
    """
    info_prior = np.asarray(info_prior, dtype=float)
    x_prior = np.asarray(x_prior, dtype=float)
    m = info_prior.shape[0]
    info = info_prior.copy()
    rhs = info_prior @ x_prior
    for rep in reports:
        if rep.dinfo.shape != (m, m) or rep.div.shape != (m,):
            raise ConfigError(f"report from node {rep.node_id} has wrong dimensions")
        info = info + rep.dinfo
        rhs = rhs + rep.div
    info = _symmetrize(info)
    if is_effectively_singular(info):
        return FusedEstimate(info=info, x_hat=np.linalg.pinv(info) @ rhs, step=step,
                             pinv_fallback=True)
    return FusedEstimate(info=info, x_hat=np.linalg.solve(info, rhs), step=step)


def recover_estimates(info_hist, yv_hist):
    """x(k) = I(k)^{-1} yv(k) for a stacked history, pseudo-inverse where singular.

    Returns (xhat (N+1, m), pinv_flags (N+1,) bool).
    """
    svals = np.linalg.svd(info_hist, compute_uv=False)
    flags = (svals[:, -1] < 1e-10 * svals[:, 0]) | (svals[:, -1] == 0.0)
    xhat = np.empty_like(yv_hist)
    ok = ~flags
    if ok.any():
        xhat[ok] = np.linalg.solve(info_hist[ok], yv_hist[ok][..., None])[..., 0]
    for k in np.nonzero(flags)[0]:
        xhat[k] = np.linalg.pinv(info_hist[k]) @ yv_hist[k]
    return xhat, flags


# ---------------------------------------------------------------------------
# Whole-run engine
# ---------------------------------------------------------------------------


class DkfEngine:
    """One realization of plant, measurements, and delays, reusable across subsets.

    Measurement noise is drawn for every network node (in id order) regardless
    of the subset later filtered on, so runs over different subsets of the same
    engine share one realization; the greedy sweep depends on this.
    """

    def __init__(self, sys: LtvSystem, network: SensorNetwork, n_steps: int,
                 rng: np.random.Generator, info0=None, x0_hat=None):
        if n_steps < 1:
            raise ConfigError("n_steps must be >= 1", keys=("horizon",))
        for node in network:
            if node.state_dim != sys.state_dim:
                raise ConfigError(f"node {node.id} measures a {node.state_dim}-state plant")
        self.sys = sys
        self.network = network
        self.n_steps = n_steps
        m = sys.state_dim
        self.a_seq = transition_sequence(sys, n_steps)
        inv_pairs = [robust_inverse(a) for a in self.a_seq]
        self.a_inv_seq = np.ascontiguousarray([p[0] for p in inv_pairs])
        self.a_pinv_steps = [k for k, p in enumerate(inv_pairs) if p[1]]
        self.q_inv = np.linalg.inv(sys.process_noise_cov)
        self.truth = simulate(sys, n_steps, rng)
        n = len(network)
        self.l_all = np.empty((n, m, m))
        self.div_all = np.empty((n, n_steps + 1, m))
        self.measurements = []
        for i, node in enumerate(network):
            z = node.h @ self.truth.states.T  # (p, N+1)
            z = z.T + rng.standard_normal((n_steps + 1, node.h.shape[0])) @ np.linalg.cholesky(node.r).T
            self.measurements.append(z)
            hr = node.h.T @ np.linalg.inv(node.r)  # (m, p)
            self.l_all[i] = _symmetrize(hr @ node.h)
            self.div_all[i] = z @ hr.T
        self.delays = np.array(
            [delay_steps(node, sys.sample_time, rng) for node in network], dtype=np.int64
        )
        self.info0 = np.zeros((m, m)) if info0 is None else _symmetrize(np.asarray(info0, dtype=float))
        if x0_hat is None:
            self.yv0 = np.zeros(m)
        else:
            self.yv0 = self.info0 @ np.asarray(x0_hat, dtype=float)

    def _subset_indices(self, subset):
        ids = sorted(set(int(i) for i in subset))
        if not ids:
            raise SelectionError("node subset is empty")
        known = set(self.network.ids())
        unknown = [i for i in ids if i not in known]
        if unknown:
            raise SelectionError(f"unknown node ids in subset: {unknown}")
        return ids, np.array(ids, dtype=np.int64) - 1

    def fused_run(self, subset):
        """Run the estimator over one subset; returns (info_hist, yv_hist, xhat, flags)."""
        ids, idx = self._subset_indices(subset)
        n_out = self.n_steps + 1
        m = self.sys.state_dim
        d = self.delays[idx]
        live = d <= self.n_steps
        info_inc = np.zeros((n_out, m, m))
        np.add.at(info_inc, d[live], self.l_all[idx[live]])
        info_inc = np.cumsum(info_inc, axis=0)
        iv_inc = np.zeros((n_out, m))
        for delay in np.unique(d[live]):
            rows = idx[d == delay]
            iv_inc[delay:] += self.div_all[rows, : n_out - delay].sum(axis=0)
        info_hist, yv_hist = _kernels.fused_info_recursion(
            self.a_inv_seq, self.q_inv, info_inc, iv_inc, self.info0, self.yv0
        )
        if not np.all(np.isfinite(info_hist)):
            bad = int(np.nonzero(~np.isfinite(info_hist).all(axis=(1, 2)))[0][0])
            raise NumericError(f"non-finite fused information at step {bad}")
        xhat, flags = recover_estimates(info_hist, yv_hist)
        return info_hist, yv_hist, xhat, flags

    def node_histories(self, subset):
        """Per-node posterior information histories I_i(k|k), shape (len(subset), N+1, m, m)."""
        ids, idx = self._subset_indices(subset)
        info0 = np.broadcast_to(self.info0, self.l_all[idx].shape).copy()
        return _kernels.node_info_histories(
            self.a_inv_seq, self.q_inv, self.l_all[idx], info0
        )


@dataclass
class DkfRun:
    """Output of run_dkf: truth, fused trajectory, and per-node info histories."""

    truth: Trajectory
    xhat: np.ndarray
    info: np.ndarray
    pinv_steps: np.ndarray
    node_ids: list
    node_info: np.ndarray
    delays: np.ndarray
    measurements: list

    @cached_property
    def estimates(self):
        return [
            FusedEstimate(info=self.info[k], x_hat=self.xhat[k], step=k,
                          pinv_fallback=bool(self.pinv_steps[k]))
            for k in range(self.xhat.shape[0])
        ]


def run_dkf(sys: LtvSystem, network: SensorNetwork, subset, n_steps: int,
            rng: np.random.Generator, info0=None, x0_hat=None) -> DkfRun:
    """Simulate the plant once and run the delayed DKF over the given subset."""
    engine = DkfEngine(sys, network, n_steps, rng, info0=info0, x0_hat=x0_hat)
    ids, idx = engine._subset_indices(subset)
    info_hist, _, xhat, flags = engine.fused_run(ids)
    node_info = engine.node_histories(ids)
    return DkfRun(
        truth=engine.truth,
        xhat=xhat,
        info=info_hist,
        pinv_steps=flags,
        node_ids=ids,
        node_info=node_info,
        delays=engine.delays[idx],
        measurements=[engine.measurements[i] for i in idx],
    )


# ---------------------------------------------------------------------------
# Covariance-form oracle
# ---------------------------------------------------------------------------


def kf_covariance_form(sys: LtvSystem, h_stacked, r_blockdiag, measurements,
                       n_steps: int, x0_hat=None, p0=None):
    """Standard covariance-form Kalman filter (Joseph update); test oracle only.

    measurements has shape (n_steps+1, p); returns (xhat (N+1, m), cov (N+1, m, m)).
    """
    h = np.atleast_2d(np.asarray(h_stacked, dtype=float))
    r = np.atleast_2d(np.asarray(r_blockdiag, dtype=float))
    z = np.asarray(measurements, dtype=float).reshape(n_steps + 1, -1)
    m = sys.state_dim
    if h.shape != (z.shape[1], m) or r.shape != (z.shape[1], z.shape[1]):
        raise ConfigError("inconsistent oracle dimensions")
    x = np.zeros(m) if x0_hat is None else np.asarray(x0_hat, dtype=float).copy()
    p = np.eye(m) if p0 is None else np.asarray(p0, dtype=float).copy()
    eye = np.eye(m)
    xs = np.empty((n_steps + 1, m))
    ps = np.empty((n_steps + 1, m, m))
    for k in range(n_steps + 1):
        if k > 0:
            a = transition_matrix(sys, k - 1)
            x = a @ x
            p = _symmetrize(a @ p @ a.T + sys.process_noise_cov)
        s = h @ p @ h.T + r
        if is_effectively_singular(s):
            raise NumericError(f"singular innovation covariance at step {k}")
        gain = p @ h.T @ np.linalg.inv(s)
        x = x + gain @ (z[k] - h @ x)
        ikh = eye - gain @ h
        p = _symmetrize(ikh @ p @ ikh.T + gain @ r @ gain.T)
        xs[k] = x
        ps[k] = p
    return xs, ps
