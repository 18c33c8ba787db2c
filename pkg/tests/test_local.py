import numpy as np
import pytest

from dssal1 import local
from dssal1.local import AgentState
from dssal1.problem import DataShard
from dssal1.stiefel import SingularInputError, projection_distance, random_stiefel


def dense_H(agent, A, Z):
    lam = local.implicit_lambda(agent)
    return A @ A.T + lam + agent.beta * Z @ Z.T


def test_init_agent_default_beta(rng):
    A = rng.standard_normal((10, 25))
    Z = random_stiefel(10, 3, rng)
    agent = local.init_agent(DataShard(A, 0), Z, 0.2)
    assert agent.beta == pytest.approx(0.1 * (np.linalg.norm(A @ A.T @ Z) + 0.2))
    np.testing.assert_allclose(agent.W, -(np.eye(10) - Z @ Z.T) @ A @ A.T @ Z, atol=1e-12)
    with pytest.raises(ValueError):
        local.init_agent(DataShard(A, 0), Z, 0.2, beta=-1.0)


def test_apply_H_cases(rng):
    n, p = 12, 3
    A = rng.standard_normal((n, 30))
    X, Z = random_stiefel(n, p, rng), random_stiefel(n, p, rng)
    V = rng.standard_normal((n, p))
    shard = DataShard(A, 0)
    bare = AgentState(X, np.zeros((n, p)), 0.0, A @ A.T @ X)
    np.testing.assert_allclose(local.apply_H(bare, shard, Z, V), A @ A.T @ V, atol=1e-12)
    empty = DataShard(np.zeros((n, 4)), 0)
    pen = AgentState(X, np.zeros((n, p)), 0.7, np.zeros((n, p)))
    np.testing.assert_allclose(local.apply_H(pen, empty, Z, V), 0.7 * Z @ (Z.T @ V), atol=1e-14)
    agent = local.update_multiplier(AgentState(X, np.zeros((n, p)), 0.4, np.zeros((n, p))), shard)
    np.testing.assert_allclose(local.apply_H(agent, shard, Z, V), dense_H(agent, A, Z) @ V,
                               rtol=1e-8, atol=1e-10)


def test_multiplier_cases(rng):
    n, p = 10, 3
    X = random_stiefel(n, p, rng)
    inside = DataShard(X @ rng.standard_normal((p, 7)), 0)
    a = local.update_multiplier(AgentState(X, np.ones((n, p)), 1.0, np.zeros((n, p))), inside)
    assert np.linalg.norm(a.W) <= 1e-12
    P = np.eye(n) - X @ X.T
    outside = DataShard(P @ rng.standard_normal((n, 7)), 0)
    b = local.update_multiplier(AgentState(X, np.ones((n, p)), 1.0, np.zeros((n, p))), outside)
    A = outside.samples
    np.testing.assert_allclose(b.W, -A @ A.T @ X, atol=1e-12)
    assert np.linalg.norm(X.T @ b.W) <= 1e-12


def test_multiplier_dense_closed_form(rng):
    A = rng.standard_normal((10, 25))
    X = random_stiefel(10, 3, rng)
    a = local.update_multiplier(AgentState(X, np.zeros((10, 3)), 1.0, np.zeros((10, 3))),
                                DataShard(A, 0))
    P = np.eye(10) - X @ X.T
    dense = -X @ X.T @ A @ A.T @ P - P @ A @ A.T @ X @ X.T
    lam = local.implicit_lambda(a)
    np.testing.assert_allclose(lam, dense, rtol=1e-9, atol=1e-12)
    np.testing.assert_array_equal(lam, lam.T)
    s = np.linalg.svd(lam, compute_uv=False)
    assert np.sum(s > 1e-10 * s[0]) <= 6


def test_ssi_fixed_point_at_eigenbasis(rng):
    A = rng.standard_normal((12, 40))
    V = np.linalg.eigh(A @ A.T)[1][:, ::-1][:, :3]
    shard = DataShard(A, 0)
    agent = local.init_agent(shard, V, 0.1)
    X_new = local.ssi_step(agent, shard, V)
    assert projection_distance(X_new, V) <= 1e-8


def test_ssi_zero_data_rotates_toward_Z(rng):
    X, Z = random_stiefel(8, 2, rng), random_stiefel(8, 2, rng)
    agent = AgentState(X, np.zeros((8, 2)), 0.5, np.zeros((8, 2)))
    X_new = local.ssi_step(agent, DataShard(np.zeros((8, 3)), 0), Z)
    assert projection_distance(X_new, Z) <= 1e-8


def test_ssi_rank_deficiency_raises(rng):
    X = np.eye(6, 2)
    Z = np.eye(6, 2)[:, ::-1].copy()
    Z[:, 0] = np.eye(6)[:, 3]     # Z orthogonal to X: beta Z Z^T X = 0
    agent = AgentState(X, np.zeros((6, 2)), 1.0, np.zeros((6, 2)))
    with pytest.raises(SingularInputError):
        local.ssi_step(agent, DataShard(np.zeros((6, 2)), 0), Z)


def test_decrease_conditions_trivial_cases(rng):
    A = rng.standard_normal((12, 30))
    shard = DataShard(A, 0)
    Z = random_stiefel(12, 3, rng)
    before = local.init_agent(shard, random_stiefel(12, 3, rng), 0.1)
    # same iterate at a non-stationary point: no value decrease
    first, _ = local.check_decrease_conditions(before, before, shard, Z)
    assert not first
    # exact dominant eigenbasis of H: zero KKT violation after the step
    H = dense_H(before, A, Z)
    top = np.linalg.eigh(H)[1][:, ::-1][:, :3]
    after = local.update_multiplier(before, shard, top)
    _, second = local.check_decrease_conditions(before, after, shard, Z, delta=1e-10)
    assert second


def test_local_update_keeps_invariants(rng):
    A = rng.standard_normal((15, 40))
    shard = DataShard(A, 3)
    agent = local.init_agent(shard, random_stiefel(15, 4, rng), 0.1)
    new = local.local_update(agent, shard, random_stiefel(15, 4, rng))
    np.testing.assert_allclose(new.X.T @ new.X, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(new.W, -(new.cached_AAtX - new.X @ (new.X.T @ new.cached_AAtX)),
                               atol=1e-12)
    np.testing.assert_allclose(new.cached_AAtX, A @ A.T @ new.X, rtol=1e-9, atol=1e-12)
    assert new.beta == agent.beta and new.agent_id == 3
