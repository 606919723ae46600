import numpy as np
import pytest

from dkfsim.errors import ConfigError, OrderingError
from dkfsim.model import builtin_system, transition_matrix
from dkfsim.sensing import SensorNetwork, SensorNode
from dkfsim.stability import (
    StabilityParams,
    beta_hat,
    beta_hat_batch,
    check_bound,
    check_bound_psd,
    compute_params,
    estimate_info_bound,
    gamma_hat,
    i_tilde,
    i_tilde_matrices,
    i_tilde_products,
    psi,
    psi_monotone_check,
)

from conftest import identity_system, random_psd, random_system


def scalar_system(a=1.0, q=1.0, n_steps=50):
    from dkfsim.model import LtvSystem, MatrixTable

    return LtvSystem(
        state_dim=1,
        transition=MatrixTable(tuple(np.array([[a]]) for _ in range(n_steps))),
        process_noise_cov=np.array([[q]]),
        initial_state=np.zeros(1),
        sample_time=0.01,
    )


# ---------------------------------------------------------------------------
# psi
# ---------------------------------------------------------------------------


def test_psi_identity_case():
    np.testing.assert_allclose(psi(np.eye(2), np.eye(2), np.eye(2)), 0.5 * np.eye(2), atol=1e-14)


def test_psi_scalar_case():
    assert psi([[1.0]], [[2.0]], [[1.0]])[0, 0] == pytest.approx(0.2)


def test_psi_zero_information():
    np.testing.assert_allclose(psi(np.zeros((2, 2)), np.eye(2), np.eye(2)),
                               np.zeros((2, 2)), atol=1e-15)


def test_psi_simplified_equals_general_form():
    # invertible inputs: the explicit inverse form and the Joseph-style
    # general form agree to 1e-10
    rng = np.random.default_rng(10)
    for _ in range(50):
        a = rng.standard_normal((2, 2))
        while abs(np.linalg.det(a)) < 0.1:
            a = rng.standard_normal((2, 2))
        q = random_psd(rng) + 0.1 * np.eye(2)
        info = random_psd(rng) + 0.05 * np.eye(2)
        simplified = np.linalg.inv(a @ np.linalg.solve(info, a.T) + q)
        a_inv, q_inv = np.linalg.inv(a), np.linalg.inv(q)
        mk = a_inv.T @ info @ a_inv
        c = np.linalg.solve(mk + q_inv, mk).T
        d = np.eye(2) - c
        general = d @ mk @ d.T + c @ q_inv @ c.T
        np.testing.assert_allclose(general, simplified, atol=1e-10)
        np.testing.assert_allclose(psi(info, a, q), simplified, atol=1e-10)


def test_psi_monotone_trivial_pair():
    assert psi_monotone_check(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2))


def test_psi_monotone_equal_inputs():
    i1 = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert psi_monotone_check(i1, i1.copy(), np.eye(2), 0.5 * np.eye(2))


def test_psi_monotone_random_ordered_pairs():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a = rng.standard_normal((2, 2))
        while abs(np.linalg.det(a)) < 0.1:
            a = rng.standard_normal((2, 2))
        q = random_psd(rng) + 0.2 * np.eye(2)
        i1 = random_psd(rng)
        i2 = i1 + random_psd(rng)
        assert psi_monotone_check(i1, i2, a, q)


def test_psi_monotone_rejects_unordered():
    with pytest.raises(OrderingError):
        psi_monotone_check(np.eye(2), np.zeros((2, 2)), np.eye(2), np.eye(2))


# ---------------------------------------------------------------------------
# gamma-hat / beta-hat
# ---------------------------------------------------------------------------


def test_gamma_hat_scalar_one():
    assert gamma_hat([[1.0]], [[1.0]], [[0.0]], alpha=1.0) == pytest.approx(1.0)


def test_gamma_hat_vanishing_noise():
    assert gamma_hat([[1.0]], [[1e-14]], [[0.0]], alpha=1.0) == pytest.approx(0.0, abs=1e-12)


def test_gamma_hat_linear_in_q():
    info = random_psd(np.random.default_rng(1))
    a = np.array([[0.7, 0.2], [0.1, 0.9]])
    q = random_psd(np.random.default_rng(2)) + 0.1 * np.eye(2)
    g1 = gamma_hat(a, q, info, alpha=1e-6)
    g4 = gamma_hat(a, 4.0 * q, info, alpha=1e-6)
    assert g4 == pytest.approx(4.0 * g1, rel=1e-10)


def test_gamma_hat_certifies_its_inequality():
    # A^{-1} Q A^{-T} <= gamma (info + alpha I)^{-1} must hold at the returned gamma
    rng = np.random.default_rng(12)
    for _ in range(25):
        a = rng.standard_normal((2, 2)) + 2 * np.eye(2)
        q = random_psd(rng) + 0.1 * np.eye(2)
        info = random_psd(rng)
        alpha = 1e-6
        g = gamma_hat(a, q, info, alpha)
        lhs = np.linalg.inv(a) @ q @ np.linalg.inv(a).T
        rhs = g * np.linalg.inv(info + alpha * np.eye(2))
        assert np.linalg.eigvalsh(rhs - lhs).min() >= -1e-9 * max(g, 1.0)


def test_beta_hat_scalar_half():
    sys_ = scalar_system(a=1.0, q=1.0)
    assert beta_hat(sys_, 10, np.array([[0.0]]), alpha=1.0) == pytest.approx(0.5)


def test_beta_hat_noiseless_limit_is_one():
    sys_ = scalar_system(a=1.0, q=1e-15)
    assert beta_hat(sys_, 10, np.array([[0.0]]), alpha=1.0) == pytest.approx(1.0, abs=1e-12)


def test_beta_hat_benchmark_system_in_range():
    sys_ = builtin_system()
    i_bound = np.diag([5.0, 8.0])
    b = beta_hat(sys_, 300, i_bound, alpha=1e-6)
    assert 0.0 < b <= 1.0


def test_beta_hat_batch_matches_single():
    sys_ = builtin_system()
    rng = np.random.default_rng(3)
    bounds = np.stack([random_psd(rng, scale=3.0) for _ in range(5)])
    batch = beta_hat_batch(sys_, bounds, 120, alpha=1e-6)
    for i in range(5):
        assert batch[i] == pytest.approx(beta_hat(sys_, 120, bounds[i], 1e-6), rel=1e-9)


def test_contraction_lower_bound_with_computed_beta():
    # psi(I) >= beta * A^{-T} I A^{-1} for 100 random I <= i_bound
    rng = np.random.default_rng(13)
    sys_ = builtin_system()
    i_bound = random_psd(rng, scale=4.0) + np.eye(2)
    beta = beta_hat(sys_, 250, i_bound, alpha=1e-6)
    w, v = np.linalg.eigh(i_bound)
    half = v @ np.diag(np.sqrt(w)) @ v.T
    for _ in range(100):
        k = int(rng.integers(0, 250))
        a_k = transition_matrix(sys_, k)
        u = rng.standard_normal((2, 2))
        uq, _ = np.linalg.qr(u)
        contraction = uq @ np.diag(rng.uniform(0.0, 1.0, 2)) @ uq.T
        info = half @ contraction @ half.T
        info = 0.5 * (info + info.T)
        a_inv = np.linalg.inv(a_k)
        diff = psi(info, a_k, sys_.process_noise_cov) - beta * (a_inv.T @ info @ a_inv)
        assert np.linalg.eigvalsh(0.5 * (diff + diff.T)).min() >= -1e-8


# ---------------------------------------------------------------------------
# i-tilde
# ---------------------------------------------------------------------------


def test_i_tilde_window_one_returns_l():
    sys_ = builtin_system()
    l_node = np.array([[0.0, 0.0], [0.0, 4.0]])
    np.testing.assert_allclose(i_tilde(50, 1, 0.5, sys_, l_node), l_node, atol=0)


def test_i_tilde_identity_transitions_hand_value():
    sys_ = identity_system(n_steps=50)
    l_node = np.array([[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(i_tilde(10, 2, 0.5, sys_, l_node), 1.5 * l_node, atol=1e-14)


def test_i_tilde_rank_one_entry():
    # l from H=[0 1], R=0.25: entry (2,2) = 4 for a window of one step
    sys_ = builtin_system()
    node = SensorNode(id=1, h=np.array([[0.0, 1.0]]), r=np.array([[0.25]]))
    out = i_tilde(30, 1, 0.9, sys_, node.info_increment())
    np.testing.assert_allclose(out, [[0.0, 0.0], [0.0, 4.0]], atol=1e-14)
    assert np.linalg.matrix_rank(out) == 1


def test_i_tilde_requires_k_at_least_k_bar():
    with pytest.raises(ConfigError):
        i_tilde(5, 10, 0.5, builtin_system(), np.eye(2))


def test_i_tilde_symmetric_psd_and_monotone_in_window():
    sys_ = builtin_system()
    rng = np.random.default_rng(14)
    l_node = random_psd(rng)
    prev = None
    for k_bar in (1, 3, 6, 10):
        out = i_tilde(60, k_bar, 0.4, sys_, l_node)
        np.testing.assert_allclose(out, out.T, atol=1e-12)
        assert np.linalg.eigvalsh(out).min() >= -1e-12
        if prev is not None:
            assert np.linalg.eigvalsh(out - prev).min() >= -1e-12
        prev = out


def test_i_tilde_products_consistent_with_direct():
    sys_ = builtin_system()
    rng = np.random.default_rng(15)
    l_node = random_psd(rng)
    k_bar, k_lo, k_hi = 6, 40, 60
    prods = i_tilde_products(sys_, k_lo, k_hi, k_bar)
    beta = 0.37
    weights = beta ** np.arange(k_bar)
    for pos, k in enumerate(range(k_lo, k_hi + 1)):
        direct = np.trace(i_tilde(k, k_bar, beta, sys_, l_node))
        via_products = np.einsum("ab,tab,t->", l_node, prods[pos], weights)
        assert via_products == pytest.approx(direct, rel=1e-10)


def test_i_tilde_matrices_consistent_with_direct():
    sys_ = builtin_system()
    rng = np.random.default_rng(16)
    l_all = np.stack([random_psd(rng) for _ in range(3)])
    betas = np.array([0.2, 0.5, 0.9])
    mats = i_tilde_matrices(sys_, 30, 45, 5, betas, l_all)
    for i in range(3):
        for pos, k in enumerate(range(30, 46)):
            np.testing.assert_allclose(
                mats[i, pos], i_tilde(k, 5, betas[i], sys_, l_all[i]), atol=1e-11
            )


# ---------------------------------------------------------------------------
# bound checks and parameters
# ---------------------------------------------------------------------------


def test_check_bound_trace_comparison():
    assert check_bound(2 * np.eye(2), np.eye(2))
    assert not check_bound(np.eye(2), np.eye(2))  # strict inequality
    assert not check_bound(np.zeros((2, 2)), np.diag([0.0, 4.0]))


def test_check_bound_psd_comparison():
    assert check_bound_psd(2 * np.eye(2), np.eye(2))
    assert not check_bound_psd(np.eye(2), np.eye(2))
    # trace passes but a direction is uncovered: psd must refuse
    info = np.diag([5.0, 0.1])
    bound = np.diag([1.0, 1.0])
    assert check_bound(info, bound)
    assert not check_bound_psd(info, bound)


def test_check_bound_dimension_mismatch():
    with pytest.raises(ConfigError):
        check_bound(np.eye(2), np.eye(3))


def test_stability_params_validation():
    with pytest.raises(ConfigError):
        StabilityParams(k_bar=0)
    with pytest.raises(ConfigError):
        StabilityParams(alpha=0.0)
    with pytest.raises(ConfigError):
        StabilityParams(beta_hat=1.5)


def test_estimate_info_bound_dominates_history_traces():
    sys_ = builtin_system()
    rng = np.random.default_rng(17)
    nodes = []
    for i in range(5):
        h = np.zeros((1, 2))
        h[0, int(rng.integers(0, 2))] = 1.0
        nodes.append(SensorNode(id=i + 1, h=h, r=np.array([[float(rng.uniform(0.1, 0.5))]])))
    net = SensorNetwork(tuple(nodes))
    bound = estimate_info_bound(sys_, net, 150)
    np.testing.assert_allclose(bound, bound.T, atol=1e-12)
    assert np.linalg.eigvalsh(bound).min() > 0


def test_compute_params_modes():
    sys_ = builtin_system()
    node = SensorNode(id=1, h=np.array([[1.0, 0.0]]), r=np.array([[0.3]]))
    net = SensorNetwork((node,))
    per_node = compute_params(sys_, net, 100)
    assert per_node.beta_hat is None and per_node.i_bound is not None
    fixed = compute_params(sys_, net, 100, per_node=False)
    assert 0.0 < fixed.beta_hat <= 1.0
    overridden = compute_params(sys_, net, 100, beta_hat_override=0.25)
    assert overridden.beta_hat == 0.25


def test_information_inverse_matches_riccati_covariance():
    # exact per-node filtering: info_post^{-1} equals the propagated error
    # covariance of the covariance-form recursion at every step
    from dkfsim.dkf import DkfEngine, kf_covariance_form
    from dkfsim.sensing import SensorNetwork

    sys_ = builtin_system()
    node = SensorNode(id=1, h=np.array([[0.0, 1.0]]), r=np.array([[0.15]]))
    p0 = 2.0 * np.eye(2)
    eng = DkfEngine(sys_, SensorNetwork((node,)), 200, np.random.default_rng(9),
                    info0=np.linalg.inv(p0))
    info_hist, _, _, _ = eng.fused_run([1])
    _, ps = kf_covariance_form(sys_, node.h, node.r, eng.measurements[0], 200, p0=p0)
    for k in range(201):
        np.testing.assert_allclose(np.linalg.inv(info_hist[k]), ps[k], atol=1e-8)
