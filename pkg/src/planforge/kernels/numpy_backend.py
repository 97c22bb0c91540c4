"""Pure-numpy kernel implementations (the fallback path)."""

import numpy as np


def grouped_sum_f64(codes, values, valid, n_groups):
    c = codes[valid]
    sums = np.bincount(c, weights=values[valid], minlength=n_groups)
    counts = np.bincount(c, minlength=n_groups).astype(np.int64)
    return sums, counts


def grouped_sum_i64(codes, values, valid, n_groups):
    c = codes[valid]
    sums = np.zeros(n_groups, dtype=np.int64)
    np.add.at(sums, c, values[valid])
    counts = np.bincount(c, minlength=n_groups).astype(np.int64)
    return sums, counts


def grouped_count(codes, valid, n_groups):
    return np.bincount(codes[valid], minlength=n_groups).astype(np.int64)


def grouped_min_max_f64(codes, values, valid, n_groups):
    c, v = codes[valid], values[valid]
    mins = np.full(n_groups, np.inf)
    maxs = np.full(n_groups, -np.inf)
    np.minimum.at(mins, c, v)
    np.maximum.at(maxs, c, v)
    counts = np.bincount(c, minlength=n_groups).astype(np.int64)
    return mins, maxs, counts


def grouped_min_max_i64(codes, values, valid, n_groups):
    c, v = codes[valid], values[valid]
    mins = np.full(n_groups, np.iinfo(np.int64).max, dtype=np.int64)
    maxs = np.full(n_groups, np.iinfo(np.int64).min, dtype=np.int64)
    np.minimum.at(mins, c, v)
    np.maximum.at(maxs, c, v)
    counts = np.bincount(c, minlength=n_groups).astype(np.int64)
    return mins, maxs, counts


def gather_utf8(offsets, data, indices):
    starts = offsets[indices].astype(np.int64)
    lens = (offsets[indices + 1] - offsets[indices]).astype(np.int64)
    n = len(indices)
    new_offsets = np.zeros(n + 1, dtype=np.int32)
    if n:
        new_offsets[1:] = np.cumsum(lens)
    total = int(new_offsets[-1])
    if total == 0:
        return new_offsets, np.zeros(0, dtype=np.uint8)
    src = (np.repeat(starts, lens)
           + np.arange(total, dtype=np.int64)
           - np.repeat(new_offsets[:-1].astype(np.int64), lens))
    return new_offsets, np.ascontiguousarray(data)[src]
