"""Shared test oracles."""

import numpy as np

from fairmo.model import Batch


def central_difference(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        out[i] = (f(up) - f(down)) / (2 * h)
    return out


def grad_close(analytic, numeric, rtol=1e-4, floor=1e-8) -> bool:
    """Elementwise relative error within ``rtol``, or absolute error within ``floor``."""
    err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    return bool(np.all((err <= rtol * scale) | (err <= floor)))


def max_relative_error(analytic, numeric, floor=1e-8) -> float:
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over all components."""
    err = np.abs(analytic - numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(err / scale))


def random_batch(rng, n, d, attributes=("a",)):
    """Random rows with both groups and both labels present in every group."""
    x = rng.normal(size=(n, d))
    y = np.resize([1.0, -1.0], n)
    sensitive = {}
    for k, name in enumerate(attributes):
        g = np.resize([1.0, 1.0, -1.0, -1.0], n)
        sensitive[name] = np.roll(g, k)
    perm = rng.permutation(n)
    return Batch(x[perm], y[perm], {k: v[perm] for k, v in sensitive.items()})


def random_model(rng, spec, scale=0.7):
    from fairmo.model import Model

    return Model(spec, rng.normal(scale=scale, size=spec.n_params))


ACCEPTANCE_LINES: list[str] = []


def report(number: int, ok: bool, detail: str) -> None:
    """Record and print one acceptance line, then fail the test if needed."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    assert ok, line
