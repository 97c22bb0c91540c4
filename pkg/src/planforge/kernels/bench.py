"""Backend shoot-out: numba kernels vs the pure-numpy fallback."""

import statistics
import time

import numpy as np

from . import numpy_backend


def _time(fn, trials):
    samples = []
    fn()  # warmup (includes any JIT compilation)
    for _ in range(trials):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return {"mean_s": statistics.mean(samples),
            "sd_s": statistics.stdev(samples) if len(samples) > 1 else 0.0,
            "samples": samples}


def bench_kernels(rows: int, trials: int = 5) -> dict:
    rng = np.random.default_rng(5)
    codes = rng.integers(0, 512, rows).astype(np.int64)
    values = rng.random(rows)
    valid = rng.random(rows) > 0.05

    lens = rng.integers(0, 16, rows)
    offsets = np.zeros(rows + 1, dtype=np.int32)
    offsets[1:] = np.cumsum(lens)
    data = rng.integers(97, 123, int(offsets[-1])).astype(np.uint8)
    indices = rng.integers(0, rows, rows // 2).astype(np.int64)

    backends = {"numpy": numpy_backend}
    try:
        from . import numba_backend
        numba_backend.warmup()
        backends["numba"] = numba_backend
    except ImportError:
        pass

    report = {"rows": rows, "trials": trials, "kernels": {}}
    for kernel, call in (
        ("grouped_sum_f64",
         lambda be: be.grouped_sum_f64(codes, values, valid, 512)),
        ("grouped_min_max_f64",
         lambda be: be.grouped_min_max_f64(codes, values, valid, 512)),
        ("gather_utf8",
         lambda be: be.gather_utf8(offsets, data, indices)),
    ):
        entry = {}
        for name, backend in backends.items():
            entry[name] = _time(lambda b=backend: call(b), trials)
        if "numba" in entry:
            entry["numba"]["speedup_over_numpy"] = (
                entry["numpy"]["mean_s"] / max(entry["numba"]["mean_s"], 1e-12))
        report["kernels"][kernel] = entry
    return report
