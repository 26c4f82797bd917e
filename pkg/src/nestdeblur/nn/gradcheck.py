import numpy as np


def relative_error(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def grad_check(f, x, analytic, eps=1e-5, max_coords=None, seed=0):
    """Worst relative error between ``analytic`` and central differences of ``f``.

    ``x`` is perturbed in place one coordinate at a time and restored, so it
    may be a live parameter array. ``f`` takes no arguments and returns a
    scalar. When ``max_coords`` is set and ``x`` is larger, a random subset
    of that many coordinates is checked.
    """
    flat = x.reshape(-1)
    if not np.shares_memory(flat, x):
        raise ValueError("grad_check needs a contiguous array it can perturb in place")
    analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)
    coords = np.arange(flat.size)
    if max_coords is not None and flat.size > max_coords:
        coords = np.random.default_rng(seed).choice(flat.size, size=max_coords, replace=False)

    worst = 0.0
    for i in coords:
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f())
        flat[i] = orig - eps
        fm = float(f())
        flat[i] = orig
        numeric = (fp - fm) / (2.0 * eps)
        worst = max(worst, float(relative_error(analytic[i], numeric)))
    return worst
