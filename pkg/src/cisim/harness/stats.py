from __future__ import annotations

import numpy as np

from ..errors import EmptyInput


def stats(values, reference: float | None = None) -> dict:
    """Mean, standard error and, given a reference value, RMSE; MAD is about the median."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInput("stats of an empty sample")
    out = {
        "n": int(v.size),
        "mean": float(np.mean(v)),
        "stderr": float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0,
        "mad": float(np.median(np.abs(v - np.median(v)))),
    }
    if reference is not None:
        out["rmse"] = float(np.sqrt(np.mean((v - reference) ** 2)))
    return out


def weight_summary(weights) -> dict:
    w = np.asarray(weights, dtype=float)
    w = w[np.isfinite(w)]
    if w.size == 0:
        return {}
    q = np.quantile(np.abs(w), [0.05, 0.5, 0.95])
    return {
        "mean": float(w.mean()),
        "min": float(w.min()),
        "max": float(w.max()),
        "abs_q05": float(q[0]),
        "abs_q50": float(q[1]),
        "abs_q95": float(q[2]),
        "negative_fraction": float(np.mean(w < 0)),
    }
