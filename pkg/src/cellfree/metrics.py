"""Throughput summaries: sums, CDF points, percentiles and sum-log utility."""

from __future__ import annotations

import numpy as np


def empirical_cdf(values) -> tuple[np.ndarray, np.ndarray]:
    x = np.sort(np.asarray(values, dtype=float).ravel())
    return x, np.arange(1, x.size + 1) / x.size


def summarize(throughput, covered=None, log_floor: float = 1e-3) -> dict:
    """Summary of a ``(layouts, UEs)`` throughput table.

    Percentiles, minima and the CDF pool UEs of all layouts. Sum-log is
    computed per layout in bits and then averaged; throughputs below
    ``log_floor`` enter the log at the floor and are counted.
    """
    table = np.atleast_2d(np.asarray(throughput, dtype=float))
    if table.size == 0:
        raise ValueError("empty throughput table")
    covered = np.ones(table.shape, dtype=bool) if covered is None else np.atleast_2d(np.asarray(covered, dtype=bool))
    pooled = table.ravel()
    sums = table.sum(axis=1)
    sum_logs = np.log2(np.maximum(table, log_floor)).sum(axis=1)
    zero = table == 0
    x, p = empirical_cdf(pooled)
    return {
        "n_layouts": int(table.shape[0]),
        "n_ues": int(pooled.size),
        "sum_throughput": float(sums.mean()),
        "sum_throughput_per_layout": sums.tolist(),
        "mean_throughput": float(pooled.mean()),
        "p10": float(np.percentile(pooled, 10)),
        "p50": float(np.percentile(pooled, 50)),
        "p90": float(np.percentile(pooled, 90)),
        "min_throughput": float(pooled.min()),
        "min_throughput_covered": float(table[covered].min()) if covered.any() else 0.0,
        "sum_log_throughput": float(sum_logs.mean()),
        "sum_log_per_layout": sum_logs.tolist(),
        "floored_count": int((table < log_floor).sum()),
        "zero_count": int(zero.sum()),
        "zero_count_covered": int((zero & covered).sum()),
        "uncovered_count": int((~covered).sum()),
        "cdf": {"throughput": x.tolist(), "probability": p.tolist()},
    }


def summarize_experiment(result) -> dict:
    table = result.throughput_table
    covered = np.vstack([r.covered for r in result.layouts])
    out = summarize(table, covered, result.config.log_floor)
    out["slots_per_layout"] = [r.n_slots for r in result.layouts]
    out["steady_slot_per_layout"] = [r.steady_slot for r in result.layouts]
    out["a_max_per_layout"] = [r.a_max for r in result.layouts]
    return out
