"""Element densities from spheroidal negative masks and their sensitivities.

A mask is 7 numbers: focal point one (3), focal point two (3) and the size
offset ``d``. The level function is

    phi(x) = |x - F1| + |x - F2| - |F1 - F2| - d

which is negative inside the spheroid. Each mask contributes a logistic
factor ``h = 1 / (1 + exp(-alpha * phi))`` and the density of an element is
the product of all factors at its centroid.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .solve import simp_scale as _simp_scale

LOG_SPACE_THRESHOLD = 64


@dataclass(frozen=True)
class MmosParams:
    alpha: float = 3.0
    epsilon: float = 1e-8
    rho_min: float = 1e-4
    eta: float = 3.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.rho_min < 1:
            raise ValueError("rho_min must lie in (0, 1)")
        if self.eta < 1:
            raise ValueError("eta must be >= 1")


def as_masks(masks):
    """Coerce to a ``(TM, 7)`` float array."""
    arr = np.asarray(masks, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, 7)
    arr = np.atleast_2d(arr)
    if arr.shape[1] != 7:
        raise ValueError(f"masks must have 7 columns, got shape {arr.shape}")
    return arr


def phi(mask, x):
    """Level function of one mask at points ``x`` (``(..., 3)``)."""
    mask = np.asarray(mask, dtype=float)
    x = np.asarray(x, dtype=float)
    f1, f2, d = mask[:3], mask[3:6], mask[6]
    return (np.linalg.norm(x - f1, axis=-1) + np.linalg.norm(x - f2, axis=-1)
            - np.linalg.norm(f1 - f2) - d)


def semi_axes(mask):
    """``(a, b)`` of the spheroid; zeros when the mask has vanished (d < 0)."""
    mask = np.asarray(mask, dtype=float)
    d = mask[6]
    if d < 0:
        return 0.0, 0.0
    a = 0.5 * (np.linalg.norm(mask[:3] - mask[3:6]) + d)
    b = np.sqrt(max((2.0 * a - 0.5 * d) * 0.5 * d, 0.0))
    return float(a), float(b)


def mask_value(mask, x, params=MmosParams()):
    return expit(params.alpha * phi(mask, x))


def _phi_matrix(masks, centroids):
    """``phi`` for every (element, mask) pair plus the distances used."""
    f1 = masks[None, :, 0:3]
    f2 = masks[None, :, 3:6]
    x = centroids[:, None, :]
    r1 = x - f1
    r2 = x - f2
    d1 = np.linalg.norm(r1, axis=2)
    d2 = np.linalg.norm(r2, axis=2)
    f12 = masks[:, 0:3] - masks[:, 3:6]
    d12 = np.linalg.norm(f12, axis=1)
    ph = d1 + d2 - d12[None, :] - masks[None, :, 6]
    return ph, r1, r2, d1, d2, f12, d12


def density(masks, centroids, params=MmosParams(), chunk=4096):
    """Element densities, the product of mask factors at each centroid."""
    masks = as_masks(masks)
    centroids = np.asarray(centroids, dtype=float)
    rho = np.ones(centroids.shape[0])
    if masks.shape[0] == 0:
        return rho
    log_space = masks.shape[0] > LOG_SPACE_THRESHOLD
    for s in range(0, centroids.shape[0], chunk):
        ph = _phi_matrix(masks, centroids[s:s + chunk])[0]
        z = params.alpha * ph
        if log_space:
            rho[s:s + chunk] = np.exp(log_expit(z).sum(axis=1))
        else:
            rho[s:s + chunk] = expit(z).prod(axis=1)
    return rho


def density_jacobian_product(masks, centroids, params, weights, rho=None,
                             chunk=4096):
    """``sum_i weights[i] * d rho_i / d psi`` for every mask variable.

    Returns an array shaped like ``masks`` (``(TM, 7)``). ``epsilon`` is
    added to each distance in a denominator.
    """
    masks = as_masks(masks)
    centroids = np.asarray(centroids, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if rho is None:
        rho = density(masks, centroids, params)
    eps, alpha = params.epsilon, params.alpha
    grad = np.zeros_like(masks)
    for s in range(0, centroids.shape[0], chunk):
        sl = slice(s, s + chunk)
        ph, r1, r2, d1, d2, f12, d12 = _phi_matrix(masks, centroids[sl])
        # alpha * rho_i * (1 - h_J), weighted by the caller's dI/drho
        c = (alpha * weights[sl] * rho[sl])[:, None] * expit(-alpha * ph)
        a1 = c / (d1 + eps)
        a2 = c / (d2 + eps)
        ctot = c.sum(axis=0)
        # d|x - F1|/dF1 = (F1 - x)/|x - F1|, d|F1 - F2|/dF1 = (F1 - F2)/|F1 - F2|
        g_f1 = -np.einsum("em,emk->mk", a1, r1)
        g_f2 = -np.einsum("em,emk->mk", a2, r2)
        u12 = f12 / (d12 + eps)[:, None]
        grad[:, 0:3] += g_f1 - ctot[:, None] * u12
        grad[:, 3:6] += g_f2 + ctot[:, None] * u12
        grad[:, 6] -= ctot
    return grad


def simp_scale(rho, params=MmosParams()):
    """Stiffness multiplier ``rho**eta * (1 - rho_min) + rho_min``."""
    return _simp_scale(rho, params.eta, params.rho_min)


def read_masks(path):
    return as_masks(np.loadtxt(path, ndmin=2))


def write_masks(path, masks):
    np.savetxt(path, as_masks(masks), fmt="%.17g")
