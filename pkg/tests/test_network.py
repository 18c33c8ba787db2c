import numpy as np
import pytest

from dssal1.network import Network, ProtocolError, communication_report


def test_fresh_network_report():
    assert communication_report(Network(4)) == (0, 0)


def test_zero_and_unit_contributions():
    net = Network(3)
    assert np.all(net.all_reduce_sum([np.zeros((4, 2))] * 3) == 0)
    e = np.eye(3)
    np.testing.assert_array_equal(net.all_reduce_sum([e[:, [i]] for i in range(3)]), np.ones((3, 1)))
    assert net.rounds == 2
    assert net.bytes == 3 * 8 * 8 + 3 * 3 * 8


def test_missing_contribution_names_agent():
    net = Network(3)
    with pytest.raises(ProtocolError, match="missing agents: 2"):
        net.all_reduce_sum([np.zeros((2, 2))] * 2)
    with pytest.raises(ProtocolError):
        net.all_reduce_sum([np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((3, 2))])
    assert net.rounds == 0


def test_fixed_order_is_bitwise_reproducible(rng):
    parts = [rng.standard_normal((20, 3)) * 10 ** rng.uniform(-8, 8) for _ in range(6)]
    a = Network(6).all_reduce_sum(parts)
    b = Network(6).all_reduce_sum(parts)
    np.testing.assert_array_equal(a, b)
    rev = Network(6, reduction_order=list(range(5, -1, -1))).all_reduce_sum(parts)
    np.testing.assert_allclose(rev, a, rtol=1e-12, atol=1e-6 * np.max(np.abs(a)) * 1e-9)


def test_reset_and_bad_order():
    net = Network(2)
    net.all_reduce_sum([np.ones((2, 2))] * 2)
    net.reset()
    assert net.communication_report() == (0, 0)
    with pytest.raises(ValueError):
        Network(3, reduction_order=[0, 0, 1])
