"""In-process stand-in for an all-reduce network of ``d`` agents.

The reduction is a sequential sum in a fixed agent order, so identical
contributions always give a bitwise-identical result. Each call counts as one
communication round in which every agent ships one ``n x p`` matrix.
"""
import numpy as np

WORD_SIZE = 8


class ProtocolError(RuntimeError):
    pass


class Network:
    """Round and byte accounting for a simulated all-reduce.

    Parameters
    ----------
    d : int
        Number of agents.
    reduction_order : sequence of int, optional
        Permutation of ``range(d)`` giving the summation order.
    word_size : int
        Bytes per matrix entry.
    """

    def __init__(self, d, reduction_order=None, word_size=WORD_SIZE):
        if d < 1:
            raise ValueError(f"network needs at least one agent, got d={d}")
        order = list(range(d)) if reduction_order is None else [int(i) for i in reduction_order]
        if sorted(order) != list(range(d)):
            raise ValueError(f"reduction_order must be a permutation of range({d})")
        self.d = d
        self.reduction_order = tuple(order)
        self.word_size = word_size
        self.rounds = 0
        self.bytes = 0

    def all_reduce_sum(self, contributions):
        """Sum one matrix per agent; ``contributions[i]`` belongs to agent ``i``."""
        contributions = list(contributions)
        if len(contributions) != self.d:
            missing = ", ".join(str(i) for i in range(len(contributions), self.d)) or "none"
            raise ProtocolError(
                f"expected {self.d} contributions, got {len(contributions)} (missing agents: {missing})")
        shape = None
        for i, c in enumerate(contributions):
            if c is None:
                raise ProtocolError(f"agent {i} sent no contribution")
            c = np.asarray(c)
            if shape is None:
                shape = c.shape
            elif c.shape != shape:
                raise ProtocolError(
                    f"agent {i} sent shape {c.shape}, expected {shape}")
        total = np.array(contributions[self.reduction_order[0]], dtype=float, copy=True)
        for i in self.reduction_order[1:]:
            total += contributions[i]
        self.rounds += 1
        self.bytes += self.d * total.size * self.word_size
        return total

    def communication_report(self):
        return self.rounds, self.bytes

    def reset(self):
        self.rounds = 0
        self.bytes = 0

    def __repr__(self):
        return f"Network(d={self.d}, rounds={self.rounds}, bytes={self.bytes})"


def communication_report(net):
    """``(rounds, bytes)`` accumulated since construction or the last reset."""
    return net.communication_report()
