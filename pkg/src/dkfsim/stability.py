"""Stability machinery for the delayed DKF: the one-step information operator
psi_k, the contraction constant beta-hat, and the lower-bound matrix used as
the admission threshold by the stability-based node selection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericError, OrderingError
from .model import (
    LtvSystem,
    is_effectively_singular,
    robust_inverse,
    transition_matrix,
    transition_sequence,
)
from .sensing import SensorNetwork

log = logging.getLogger(__name__)

DEFAULT_K_BAR = 20
DEFAULT_ALPHA = 1e-6


@dataclass
class StabilityParams:
    """Inputs for the bound: window length, regularization, contraction, info bound.

    beta_hat=None selects the per-node contraction mode, in which each node's
    beta is derived from its own delay-free information history.
    """

    k_bar: int = DEFAULT_K_BAR
    alpha: float = DEFAULT_ALPHA
    beta_hat: float | None = None
    i_bound: np.ndarray | None = None

    def __post_init__(self):
        if self.k_bar < 1:
            raise ConfigError("k_bar must be >= 1", keys=("k_bar",))
        if self.alpha <= 0.0:
            raise ConfigError("alpha must be > 0", keys=("alpha",))
        if self.beta_hat is not None and not (0.0 < self.beta_hat <= 1.0):
            raise ConfigError("beta_hat must lie in (0, 1]", keys=("beta_hat_override",))


def _symmetrize(a):
    return 0.5 * (a + a.T)


def psi(info, a_k, q) -> np.ndarray:
    """One-step information-matrix time update.

    (A info^{-1} A^T + Q)^{-1} for invertible info; the general form
    (I-C)^T M (I-C) + C Q^{-1} C^T otherwise.
    """
    info = _symmetrize(np.asarray(info, dtype=float))
    a_k = np.asarray(a_k, dtype=float)
    q = np.asarray(q, dtype=float)
    if not is_effectively_singular(info):
        out = np.linalg.inv(a_k @ np.linalg.solve(info, a_k.T) + q)
        if not np.all(np.isfinite(out)):
            raise NumericError("non-finite psi result")
        return _symmetrize(out)
    a_inv, _ = robust_inverse(a_k)
    q_inv = np.linalg.inv(q)
    mk = a_inv.T @ info @ a_inv
    c = np.linalg.solve(mk + q_inv, mk).T
    d = np.eye(info.shape[0]) - c
    out = _symmetrize(d @ mk @ d.T + c @ q_inv @ c.T)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite psi result")
    return out


def psi_monotone_check(i1, i2, a_k, q, tol: float = 1e-9) -> bool:
    """True when psi preserves the ordering i1 <= i2 (up to tol)."""
    i1 = np.asarray(i1, dtype=float)
    i2 = np.asarray(i2, dtype=float)
    if np.linalg.eigvalsh(_symmetrize(i2 - i1)).min() < -tol:
        raise OrderingError("precondition i1 <= i2 (PSD order) violated")
    diff = psi(i2, a_k, q) - psi(i1, a_k, q)
    return bool(np.linalg.eigvalsh(_symmetrize(diff)).min() >= -tol)


def _psd_sqrt(b):
    w, v = np.linalg.eigh(_symmetrize(b))
    return v @ np.diag(np.sqrt(np.maximum(w, 0.0))) @ v.T


def gamma_hat(a_k, q, info, alpha: float) -> float:
    """Smallest gamma with A^{-1} Q A^{-T} <= gamma (info + alpha I)^{-1}.

    Computed as the largest eigenvalue of
    (info + alpha I)^{1/2} A^{-1} Q A^{-T} (info + alpha I)^{1/2}.
    """
    if alpha <= 0.0:
        raise ConfigError("alpha must be > 0", keys=("alpha",))
    info = _symmetrize(np.asarray(info, dtype=float))
    a_inv, _ = robust_inverse(np.asarray(a_k, dtype=float))
    half = _psd_sqrt(info + alpha * np.eye(info.shape[0]))
    t = a_inv @ np.asarray(q, dtype=float) @ a_inv.T
    return float(max(np.linalg.eigvalsh(_symmetrize(half @ t @ half)).max(), 0.0))


def _distinct_noise_terms(sys: LtvSystem, horizon_n: int) -> np.ndarray:
    """Deduplicated A(k)^{-1} Q A(k)^{-T} over k in [0, horizon)."""
    q = sys.process_noise_cov
    seen = {}
    for k in range(horizon_n):
        a = transition_matrix(sys, k)
        key = a.tobytes()
        if key not in seen:
            a_inv, _ = robust_inverse(a)
            seen[key] = a_inv @ q @ a_inv.T
    return np.stack(list(seen.values()))


def beta_hat_batch(sys: LtvSystem, bounds, horizon_n: int, alpha: float) -> np.ndarray:
    """beta-hat for a stack of bound matrices (b, m, m) at once; returns (b,)."""
    if horizon_n < 1:
        raise ConfigError("horizon must be >= 1", keys=("horizon",))
    bounds = np.asarray(bounds, dtype=float)
    m = bounds.shape[-1]
    terms = _distinct_noise_terms(sys, horizon_n)
    w, v = np.linalg.eigh(0.5 * (bounds + bounds.transpose(0, 2, 1)) + alpha * np.eye(m))
    halves = v @ (np.sqrt(np.maximum(w, 0.0))[..., None] * v.transpose(0, 2, 1))
    gamma_max = np.zeros(bounds.shape[0])
    for t in terms:
        prod = halves @ t @ halves
        prod = 0.5 * (prod + prod.transpose(0, 2, 1))
        gamma_max = np.maximum(gamma_max, np.linalg.eigvalsh(prod)[:, -1])
    return 1.0 / (1.0 + np.maximum(gamma_max, 0.0))


def beta_hat(sys: LtvSystem, horizon_n: int, i_bound, alpha: float) -> float:
    """min over k in [0, horizon) of 1 / (1 + gamma_hat(A(k), Q, i_bound, alpha))."""
    i_bound = np.atleast_2d(np.asarray(i_bound, dtype=float))
    return float(beta_hat_batch(sys, i_bound[None], horizon_n, alpha)[0])


def i_tilde(k: int, k_bar: int, beta: float, sys: LtvSystem, l_node) -> np.ndarray:
    """Lower-bound matrix at step k over a window of k_bar steps:

    sum_{tau=1..k_bar} beta^{tau-1} G_tau^T l G_tau,
    G_tau = (A(k-1) ... A(k-tau+1))^{-1}, with G_1 = I.
    """
    if k < k_bar:
        raise ConfigError(f"k={k} must be >= k_bar={k_bar}", keys=("k_bar",))
    l_node = _symmetrize(np.asarray(l_node, dtype=float))
    m = l_node.shape[0]
    g = np.eye(m)
    total = np.zeros((m, m))
    scale = 1.0
    for tau in range(1, k_bar + 1):
        if tau > 1:
            a_inv, used_pinv = robust_inverse(transition_matrix(sys, k - tau + 1))
            if used_pinv:
                log.warning("i_tilde: A(%d) effectively singular, using pseudo-inverse", k - tau + 1)
            g = a_inv @ g
            scale *= beta
        total += scale * (g.T @ l_node @ g)
    return _symmetrize(total)


def i_tilde_products(sys: LtvSystem, k_lo: int, k_hi: int, k_bar: int) -> np.ndarray:
    """G_tau(k) G_tau(k)^T for k in [k_lo, k_hi], tau in [1, k_bar].

    Shape (k_hi - k_lo + 1, k_bar, m, m). Because trace(G^T l G) =
    <l, G G^T>, these products turn per-node bound traces into inner
    products, which is how the selection sweep evaluates thousands of nodes.
    """
    if k_lo < k_bar:
        raise ConfigError(f"k_lo={k_lo} must be >= k_bar={k_bar}", keys=("k_bar",))
    m = sys.state_dim
    a_inv_cache = {}

    def a_inv(j):
        if j not in a_inv_cache:
            inv, used_pinv = robust_inverse(transition_matrix(sys, j))
            if used_pinv:
                log.warning("i_tilde: A(%d) effectively singular, using pseudo-inverse", j)
            a_inv_cache[j] = inv
        return a_inv_cache[j]

    out = np.empty((k_hi - k_lo + 1, k_bar, m, m))
    for pos, k in enumerate(range(k_lo, k_hi + 1)):
        g = np.eye(m)
        out[pos, 0] = g
        for tau in range(2, k_bar + 1):
            g = a_inv(k - tau + 1) @ g
            out[pos, tau - 1] = g @ g.T
    return out


def i_tilde_matrices(sys: LtvSystem, k_lo: int, k_hi: int, k_bar: int, betas, l_all) -> np.ndarray:
    """Full bound matrices for a stack of nodes: (n, k_hi - k_lo + 1, m, m).

    Itilde_i(k) = sum_tau betas[i]^{tau-1} G_tau(k)^T l_all[i] G_tau(k); the
    G products are shared across nodes, so this is one einsum per sweep.
    """
    if k_lo < k_bar:
        raise ConfigError(f"k_lo={k_lo} must be >= k_bar={k_bar}", keys=("k_bar",))
    betas = np.asarray(betas, dtype=float)
    l_all = np.asarray(l_all, dtype=float)
    m = sys.state_dim
    a_inv_cache = {}

    def a_inv(j):
        if j not in a_inv_cache:
            inv, used_pinv = robust_inverse(transition_matrix(sys, j))
            if used_pinv:
                log.warning("i_tilde: A(%d) effectively singular, using pseudo-inverse", j)
            a_inv_cache[j] = inv
        return a_inv_cache[j]

    g = np.empty((k_hi - k_lo + 1, k_bar, m, m))
    for pos, k in enumerate(range(k_lo, k_hi + 1)):
        gm = np.eye(m)
        g[pos, 0] = gm
        for tau in range(2, k_bar + 1):
            gm = a_inv(k - tau + 1) @ gm
            g[pos, tau - 1] = gm
    beta_pow = betas[:, None] ** np.arange(k_bar)[None, :]
    out = np.einsum("ktba,ibc,ktcd,it->ikad", g, l_all, g, beta_pow, optimize=True)
    return 0.5 * (out + out.transpose(0, 1, 3, 2))


def check_bound(info_delayed, i_tilde_k) -> bool:
    """Trace comparison from the selection pseudo-code: tr(info) > tr(bound)."""
    info_delayed = np.asarray(info_delayed, dtype=float)
    i_tilde_k = np.asarray(i_tilde_k, dtype=float)
    if info_delayed.shape != i_tilde_k.shape:
        raise ConfigError("bound comparison requires matching dimensions")
    return bool(np.trace(info_delayed) > np.trace(i_tilde_k))


def check_bound_psd(info_delayed, i_tilde_k) -> bool:
    """Matrix-order comparison: info strictly dominates the bound (min eig > 0).

    This is the form the stability result actually guarantees for admitted
    nodes; the trace form is its scalar shadow and barely discriminates.
    """
    info_delayed = np.asarray(info_delayed, dtype=float)
    i_tilde_k = np.asarray(i_tilde_k, dtype=float)
    if info_delayed.shape != i_tilde_k.shape:
        raise ConfigError("bound comparison requires matching dimensions")
    diff = info_delayed - i_tilde_k
    return bool(np.linalg.eigvalsh(0.5 * (diff + diff.T)).min() > 0.0)


def estimate_info_bound(sys: LtvSystem, network: SensorNetwork, n_steps: int) -> np.ndarray:
    """Pilot delay-free pass: uniform bound on the fused information sequence.

    Runs the fused information recursion with every node delivering at delay 0
    (measurements do not enter the information flow) and returns the max-trace
    I(k|k), symmetrized.
    """
    m = sys.state_dim
    a_seq = transition_sequence(sys, n_steps)
    a_inv_seq = np.ascontiguousarray([robust_inverse(a)[0] for a in a_seq])
    q_inv = np.linalg.inv(sys.process_noise_cov)
    l_total = np.zeros((m, m))
    for node in network:
        l_total += node.info_increment()
    info_inc = np.broadcast_to(l_total, (n_steps + 1, m, m)).copy()
    info_hist, _ = _kernels.fused_info_recursion(
        a_inv_seq, q_inv, info_inc, np.zeros((n_steps + 1, m)), np.zeros((m, m)), np.zeros(m)
    )
    traces = np.trace(info_hist, axis1=1, axis2=2)
    return _symmetrize(info_hist[int(np.argmax(traces))])


def compute_params(
    sys: LtvSystem,
    network: SensorNetwork,
    n_steps: int,
    k_bar: int = DEFAULT_K_BAR,
    alpha: float = DEFAULT_ALPHA,
    beta_hat_override: float | None = None,
    per_node: bool = True,
) -> StabilityParams:
    """StabilityParams for a network: pilot bound plus contraction constant.

    per_node=True leaves beta_hat unset so the selection derives one
    contraction per node from that node's own information history; this is the
    discriminating variant. per_node=False computes a single global beta_hat
    from the fused pilot bound.
    """
    i_bound = estimate_info_bound(sys, network, n_steps)
    if beta_hat_override is not None:
        beta = float(beta_hat_override)
    elif per_node:
        beta = None
    else:
        beta = beta_hat(sys, n_steps, i_bound, alpha)
    return StabilityParams(k_bar=k_bar, alpha=alpha, beta_hat=beta, i_bound=i_bound)
