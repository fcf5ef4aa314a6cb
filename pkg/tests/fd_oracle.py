"""High-precision central differences for the mask density."""

import mpmath as mp
import numpy as np


def _density(masks, pts, alpha):
    out = []
    for x in pts:
        rho = mp.mpf(1)
        for m in masks:
            d1 = mp.sqrt(sum((x[k] - m[k]) ** 2 for k in range(3)))
            d2 = mp.sqrt(sum((x[k] - m[3 + k]) ** 2 for k in range(3)))
            d12 = mp.sqrt(sum((m[k] - m[3 + k]) ** 2 for k in range(3)))
            rho *= 1 / (1 + mp.exp(-alpha * (d1 + d2 - d12 - m[6])))
        out.append(rho)
    return out


def weighted_density_gradient(masks, pts, weights, alpha=3.0, step=1e-6, dps=40):
    """Central-difference gradient of ``weights @ density`` in ``dps`` digits."""
    with mp.workdps(dps):
        m0 = [[mp.mpf(float(v)) for v in row] for row in masks]
        p = [[mp.mpf(float(v)) for v in row] for row in pts]
        w = [mp.mpf(float(v)) for v in weights]
        a = mp.mpf(alpha)
        h = mp.mpf(step)
        grad = np.zeros(np.shape(masks))
        for i in range(len(m0)):
            for k in range(7):
                vals = []
                for s in (h, -h):
                    m = [row[:] for row in m0]
                    m[i][k] += s
                    vals.append(mp.fsum(wi * r for wi, r in zip(w, _density(m, p, a))))
                grad[i, k] = float((vals[0] - vals[1]) / (2 * h))
    return grad


def max_rel_error(analytic, fd, floor=1e-12):
    keep = np.abs(fd) > floor
    return float(np.max(np.abs(analytic[keep] - fd[keep]) / np.abs(fd[keep])))
