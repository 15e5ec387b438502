"""Synthetic data with a planted, known transport."""

import numpy as np


def planted_shift_series(n_periods=200, d=10, shifted=(0, 1), t=7, delta_t=2, period=24,
                         shift=2.0, scale=3.0, jitter=0.05, seed=0):
    """Hourly series whose features move only between hour ``t`` and ``t + delta_t``.

    Every period draws a baseline vector from N(0, I) that persists through
    the period, plus i.i.d. N(0, jitter^2) noise per hour. From hour
    ``t + delta_t`` onward the first feature in ``shifted`` is translated by
    ``shift`` and the second has its baseline multiplied by ``scale`` (a
    variance change with no mean change). The other features carry only
    jitter between the two hours.
    """
    mean_feat, var_feat = shifted
    rng = np.random.default_rng(seed)
    base = np.repeat(rng.standard_normal((n_periods, d)), period, axis=0)
    series = base + jitter * rng.standard_normal(base.shape)
    late = np.tile(np.arange(period), n_periods) >= t + delta_t
    series[late, mean_feat] += shift
    series[late, var_feat] += (scale - 1.0) * base[late, var_feat]
    return series


def planted_srg_dataset(n=80, d=15, features=(3, 8, 12), steady_shift=1.5, rare_shift=5.0,
                        rare_fraction=0.1, noise=0.1, seed=0):
    """Source/target sets where three features carry all of the transport.

    The first two planted features move every target point by
    ``steady_shift``; the third moves only a ``rare_fraction`` of target
    points, but by the larger ``rare_shift``. Remaining features are
    independent N(0, noise^2) draws in both sets. Under a max-coordinate
    ground metric the rare, large moves dominate the distance.
    """
    steady_a, steady_b, rare = features
    rng = np.random.default_rng(seed)
    source = noise * rng.standard_normal((n, d))
    target = noise * rng.standard_normal((n, d))
    target[:, steady_a] += steady_shift
    target[:, steady_b] += steady_shift
    movers = rng.choice(n, int(rare_fraction * n), replace=False)
    target[movers, rare] += rare_shift
    return source, target
