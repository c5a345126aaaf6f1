"""Order-independent reductions.

``math.fsum`` returns the correctly rounded sum of its inputs, so results do
not depend on evaluation order, chunking or platform summation strategy.
"""

import math

import numpy as np


def exact_sum(values) -> float:
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def exact_mean(values) -> float:
    v = np.asarray(values, dtype=float).ravel()
    return math.fsum(v.tolist()) / v.size


def exact_column_means(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    m = M.shape[0]
    flat = M.reshape(m, -1)
    out = np.array([math.fsum(col) for col in flat.T.tolist()]) / m
    return out.reshape(M.shape[1:])
