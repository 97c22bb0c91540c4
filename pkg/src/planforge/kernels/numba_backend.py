"""numba @njit kernel implementations (the accelerated path).

Compiled artifacts are disk-cached, so the first call in a fresh checkout
pays the JIT cost once per kernel.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def grouped_sum_f64(codes, values, valid, n_groups):
    sums = np.zeros(n_groups, dtype=np.float64)
    counts = np.zeros(n_groups, dtype=np.int64)
    for i in range(codes.shape[0]):
        if valid[i]:
            c = codes[i]
            sums[c] += values[i]
            counts[c] += 1
    return sums, counts


@njit(cache=True, nogil=True)
def grouped_sum_i64(codes, values, valid, n_groups):
    sums = np.zeros(n_groups, dtype=np.int64)
    counts = np.zeros(n_groups, dtype=np.int64)
    for i in range(codes.shape[0]):
        if valid[i]:
            c = codes[i]
            sums[c] += values[i]
            counts[c] += 1
    return sums, counts


@njit(cache=True, nogil=True)
def grouped_count(codes, valid, n_groups):
    counts = np.zeros(n_groups, dtype=np.int64)
    for i in range(codes.shape[0]):
        if valid[i]:
            counts[codes[i]] += 1
    return counts


@njit(cache=True, nogil=True)
def grouped_min_max_f64(codes, values, valid, n_groups):
    mins = np.full(n_groups, np.inf, dtype=np.float64)
    maxs = np.full(n_groups, -np.inf, dtype=np.float64)
    counts = np.zeros(n_groups, dtype=np.int64)
    for i in range(codes.shape[0]):
        if valid[i]:
            c = codes[i]
            v = values[i]
            if v < mins[c]:
                mins[c] = v
            if v > maxs[c]:
                maxs[c] = v
            counts[c] += 1
    return mins, maxs, counts


@njit(cache=True, nogil=True)
def grouped_min_max_i64(codes, values, valid, n_groups):
    mins = np.full(n_groups, np.iinfo(np.int64).max, dtype=np.int64)
    maxs = np.full(n_groups, np.iinfo(np.int64).min, dtype=np.int64)
    counts = np.zeros(n_groups, dtype=np.int64)
    for i in range(codes.shape[0]):
        if valid[i]:
            c = codes[i]
            v = values[i]
            if v < mins[c]:
                mins[c] = v
            if v > maxs[c]:
                maxs[c] = v
            counts[c] += 1
    return mins, maxs, counts


@njit(cache=True, nogil=True)
def gather_utf8(offsets, data, indices):
    n = indices.shape[0]
    new_offsets = np.zeros(n + 1, dtype=np.int32)
    total = 0
    for i in range(n):
        total += offsets[indices[i] + 1] - offsets[indices[i]]
        new_offsets[i + 1] = total
    new_data = np.empty(total, dtype=np.uint8)
    pos = 0
    for i in range(n):
        start = offsets[indices[i]]
        end = offsets[indices[i] + 1]
        for j in range(start, end):
            new_data[pos] = data[j]
            pos += 1
    return new_offsets, new_data


def warmup():
    """Force compilation of every kernel on tiny inputs."""
    codes = np.zeros(1, dtype=np.int64)
    valid = np.ones(1, dtype=np.bool_)
    grouped_sum_f64(codes, np.zeros(1), valid, 1)
    grouped_sum_i64(codes, np.zeros(1, dtype=np.int64), valid, 1)
    grouped_count(codes, valid, 1)
    grouped_min_max_f64(codes, np.zeros(1), valid, 1)
    grouped_min_max_i64(codes, np.zeros(1, dtype=np.int64), valid, 1)
    gather_utf8(np.array([0, 1], dtype=np.int32),
                np.zeros(1, dtype=np.uint8),
                np.zeros(1, dtype=np.int64))
