"""Sensor subset selection: the greedy threshold sweep (benchmark, needs ground
truth) and the stability-criterion selection (needs only information traces),
plus the MSE / maximum-deviation metrics both report.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .dkf import DkfEngine
from .errors import ConfigError, MetricError
from .model import LtvSystem, Trajectory, robust_inverse, transition_sequence
from .sensing import SensorNetwork, delay_steps
from .stability import StabilityParams, beta_hat_batch, i_tilde_matrices, i_tilde_products
from . import _kernels

log = logging.getLogger(__name__)

SETTLE_BAND = 0.01


@dataclass(frozen=True)
class SelectionReport:
    """One evaluated configuration: chosen nodes plus estimation-quality metrics."""

    nodes: frozenset
    mse: float
    md: float
    mse_raw: float = float("nan")
    iteration: int | None = None
    thresholds: tuple | None = None

    @property
    def n_selected(self) -> int:
        return len(self.nodes)

    @property
    def ran(self) -> bool:
        return not math.isnan(self.mse)


def _states(traj):
    return traj.states if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)


def settling_index(traj, band: float = SETTLE_BAND) -> int:
    """First step after which every state stays within band of its final value.

    The final value is the mean of the last 5% of samples; the band is
    band * max(|final|, max|x|) per state, the max-|x| floor guarding
    trajectories that decay to zero. Never settling returns N/2, flagged.
    """
    states = _states(traj)
    if states.shape[0] < 1:
        raise MetricError("empty trajectory")
    if not (0.0 < band < 1.0):
        raise ConfigError("band must lie in (0, 1)", keys=("band",))
    n_last = max(1, int(math.ceil(0.05 * states.shape[0])))
    final = states[-n_last:].mean(axis=0)
    floor = band * np.abs(states).max()
    tol = np.maximum(band * np.abs(final), floor)
    bad = (np.abs(states - final) > tol[None, :]).any(axis=1)
    if not bad.any():
        return 0
    last_bad = int(np.nonzero(bad)[0][-1])
    if last_bad == states.shape[0] - 1:
        fallback = (states.shape[0] - 1) // 2
        log.warning("trajectory never settles within band %.3g; falling back to step %d",
                    band, fallback)
        return fallback
    return last_bad + 1


def mse(x_hat, x, from_index: int = 0) -> float:
    """Per-step-normalized squared error: (1/2) sum ||xhat - x||^2 / #steps, k >= from_index."""
    return _mse(x_hat, x, from_index, normalize=True)


def mse_raw(x_hat, x, from_index: int = 0) -> float:
    """Plain accumulated (1/2) sum ||xhat - x||^2 over k >= from_index."""
    return _mse(x_hat, x, from_index, normalize=False)


def _mse(x_hat, x, from_index, normalize):
    a = _states(x_hat)
    b = _states(x)
    if a.shape != b.shape:
        raise MetricError(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    if not (0 <= from_index < a.shape[0]):
        raise MetricError(f"from_index {from_index} outside trajectory of length {a.shape[0]}")
    err = a[from_index:] - b[from_index:]
    total = 0.5 * float(np.sum(err * err))
    return total / err.shape[0] if normalize else total


def max_deviation(x_hat, x) -> float:
    """max |xhat - x| over steps and components, divided by max |x|."""
    a = _states(x_hat)
    b = _states(x)
    if a.shape != b.shape:
        raise MetricError(f"trajectory shapes differ: {a.shape} vs {b.shape}")
    denom = float(np.abs(b).max())
    if denom == 0.0:
        raise MetricError("maximum deviation undefined for an all-zero true trajectory")
    return float(np.abs(a - b).max()) / denom


def _node_variance(node) -> float:
    return float(np.linalg.eigvalsh(node.r).max())


def _require_resolved(network):
    for node in network:
        if node.delay.jitter_std > 0.0:
            raise ConfigError(
                f"node {node.id} has unresolved stochastic delay; apply sensing.resolve_delays",
            )


def greedy_select(
    sys: LtvSystem,
    network: SensorNetwork,
    iterations: int,
    r_max: float,
    tau_max: float,
    n_steps: int,
    rng: np.random.Generator,
    band: float = SETTLE_BAND,
    engine: DkfEngine | None = None,
) -> list:
    """Threshold sweep: iteration k admits nodes with R_i <= R0(k) and tau_i <= tau0(k),
    with R0, tau0 shrinking linearly from (r_max, tau_max) toward zero.

    Every iteration runs the DKF against one shared plant/noise realization, so
    the sweep compares subsets, not sample paths. Needs ground-truth states;
    benchmark use only. Iterations with an empty subset record NaN metrics.
    Stochastic delays must be resolved beforehand (sensing.resolve_delays).
    """
    if iterations < 1:
        raise ConfigError("iterations must be >= 1", keys=("iterations",))
    if r_max <= 0.0 or tau_max <= 0.0:
        raise ConfigError("r_max and tau_max must be positive", keys=("variance_range", "delay_range"))
    _require_resolved(network)
    if engine is None:
        engine = DkfEngine(sys, network, n_steps, rng)
    settle = settling_index(engine.truth, band)
    variances = np.array([_node_variance(node) for node in network])
    delays_s = np.array([node.delay.base for node in network])
    ids = np.array(network.ids())
    reports = []
    for it in range(1, iterations + 1):
        r0 = r_max * (1.0 - (it - 1) / iterations)
        tau0 = tau_max * (1.0 - (it - 1) / iterations)
        chosen = ids[(variances <= r0) & (delays_s <= tau0)]
        if chosen.size == 0:
            reports.append(SelectionReport(
                nodes=frozenset(), mse=float("nan"), md=float("nan"),
                iteration=it, thresholds=(r0, tau0),
            ))
            continue
        _, _, xhat, _ = engine.fused_run(chosen)
        reports.append(SelectionReport(
            nodes=frozenset(int(i) for i in chosen),
            mse=mse(xhat, engine.truth, settle),
            md=max_deviation(xhat, engine.truth),
            mse_raw=mse_raw(xhat, engine.truth, settle),
            iteration=it,
            thresholds=(r0, tau0),
        ))
    return reports


def best_report(reports) -> SelectionReport | None:
    """The ran report with the smallest MSE, or None when nothing ran."""
    ran = [r for r in reports if r.ran]
    return min(ran, key=lambda r: r.mse) if ran else None


@dataclass(frozen=True)
class NodeStabilityRow:
    """Per-node outcome of the stability check, for the report CSV."""

    node_id: int
    selected: bool
    ct_exp: int
    ct_act: int
    delay_s: float
    variance: float
    beta_hat: float


def stability_select(
    sys: LtvSystem,
    network: SensorNetwork,
    params: StabilityParams,
    n_steps: int,
    return_diagnostics: bool = False,
    comparison: str = "psd",
):
    """Admit node i iff its delayed information beats the stability bound at
    every applicable step k in (k_bar, N]: the delayed I_i(k - d_i | k - d_i)
    must dominate Itilde_i(k). Needs no ground-truth states.

    comparison='psd' requires matrix-order domination (min eig of the
    difference > 0), which is what the stability bound actually asserts and
    makes k_bar the tolerated staleness; comparison='trace' is the scalar
    pseudo-code form (check_bound) and admits almost every node.

    Nodes whose delay leaves no applicable step are excluded: they offer no
    evidence of stability. Stochastic delays must be resolved beforehand
    (sensing.resolve_delays).
    """
    if comparison not in ("psd", "trace"):
        raise ConfigError(f"unknown comparison {comparison!r}")
    if len(network) == 0:
        return (set(), []) if return_diagnostics else set()
    if n_steps <= params.k_bar:
        raise ConfigError(f"n_steps must exceed k_bar={params.k_bar}", keys=("horizon", "k_bar"))
    _require_resolved(network)
    m = sys.state_dim
    n = len(network)
    k_bar = params.k_bar
    d = np.array([delay_steps(node, sys.sample_time) for node in network], dtype=np.int64)

    # delay-free per-node information histories (the local IF recursions)
    a_seq = transition_sequence(sys, n_steps)
    a_inv_seq = np.ascontiguousarray([robust_inverse(a)[0] for a in a_seq])
    q_inv = np.linalg.inv(sys.process_noise_cov)
    l_all = np.stack([node.info_increment() for node in network])
    hist = _kernels.node_info_histories(a_inv_seq, q_inv, l_all, np.zeros((n, m, m)))
    traces = np.trace(hist, axis1=2, axis2=3)  # (n, N+1)

    if params.beta_hat is not None:
        betas = np.full(n, params.beta_hat)
    else:
        # per-node contraction from each node's own history bound
        peak = np.argmax(traces, axis=1)
        bounds = hist[np.arange(n), peak]
        bounds = 0.5 * (bounds + bounds.transpose(0, 2, 1))
        betas = beta_hat_batch(sys, bounds, n_steps, params.alpha)

    ks = np.arange(k_bar + 1, n_steps + 1)
    if comparison == "psd":
        bound_mats = i_tilde_matrices(sys, k_bar + 1, n_steps, k_bar, betas, l_all)
    else:
        # tr Itilde_i(k) = sum_tau beta_i^{tau-1} <l_i, G_tau(k) G_tau(k)^T>
        prods = i_tilde_products(sys, k_bar + 1, n_steps, k_bar)
        beta_pow = betas[:, None] ** np.arange(k_bar)[None, :]
        thresholds = np.einsum("iab,ktab,it->ik", l_all, prods, beta_pow, optimize=True)

    selected = set()
    rows = []
    any_applicable = False
    for i, node in enumerate(network):
        applicable = ks - d[i] >= 1
        ct_exp = int(applicable.sum())
        if ct_exp > 0:
            any_applicable = True
            delayed = ks[applicable] - d[i]
            if comparison == "psd":
                diff = hist[i, delayed] - bound_mats[i, applicable]
                min_eig = np.linalg.eigvalsh(0.5 * (diff + diff.transpose(0, 2, 1)))[:, 0]
                ct_act = int((min_eig > 0.0).sum())
            else:
                ct_act = int((traces[i, delayed] > thresholds[i, applicable]).sum())
        else:
            ct_act = 0
        ok = ct_exp > 0 and ct_exp == ct_act
        if ok:
            selected.add(node.id)
        if return_diagnostics:
            rows.append(NodeStabilityRow(
                node_id=node.id, selected=ok, ct_exp=ct_exp, ct_act=ct_act,
                delay_s=node.delay.base, variance=_node_variance(node),
                beta_hat=float(betas[i]),
            ))
    if not any_applicable:
        log.warning("no node has an applicable step: delays are larger than the estimation horizon")
    return (selected, rows) if return_diagnostics else selected
