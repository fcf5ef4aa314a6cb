"""Method of Moving Asymptotes for box bounds plus one inequality constraint.

Follows Svanberg's 2007 update rules. The single constraint carries an
elastic variable ``y`` with cost ``c*y + 0.5*d*y**2`` so the subproblem is
always feasible; the subproblem is solved through its one-dimensional
concave dual.
"""

import numpy as np


class MMA:
    """Stateful MMA stepper.

    Parameters
    ----------
    lower, upper : arrays
        Variable bounds.
    move : float
        Largest step as a fraction of ``upper - lower``.
    """

    def __init__(self, lower, upper, move=0.1, asyinit=0.5, asyincr=1.2,
                 asydecr=0.7, albefa=0.1, raa0=1e-5, c=1000.0, d=1.0):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if np.any(self.upper <= self.lower):
            raise ValueError("upper bounds must exceed lower bounds")
        self.move = move
        self.asyinit, self.asyincr, self.asydecr = asyinit, asyincr, asydecr
        self.albefa, self.raa0 = albefa, raa0
        self.c, self.d = c, d
        self.iteration = 0
        self.low = self.upp = None
        self.xold1 = self.xold2 = None

    def _asymptotes(self, x):
        span = self.upper - self.lower
        if self.iteration < 3:
            low = x - self.asyinit * span
            upp = x + self.asyinit * span
        else:
            sign = (x - self.xold1) * (self.xold1 - self.xold2)
            factor = np.ones_like(x)
            factor[sign > 0] = self.asyincr
            factor[sign < 0] = self.asydecr
            low = x - factor * (self.xold1 - self.low)
            upp = x + factor * (self.upp - self.xold1)
            low = np.clip(low, x - 10.0 * span, x - 0.01 * span)
            upp = np.clip(upp, x + 0.01 * span, x + 10.0 * span)
        return low, upp

    def step(self, x, f0, df0, g, dg):
        """One MMA update.

        ``f0, df0``: objective value and gradient; ``g, dg``: constraint
        value (feasible when ``<= 0``) and gradient. Returns the new point.
        """
        x = np.asarray(x, dtype=float)
        self.iteration += 1
        low, upp = self._asymptotes(x)
        span = self.upper - self.lower

        alpha = np.maximum.reduce([self.lower, low + self.albefa * (x - low),
                                   x - self.move * span])
        beta = np.minimum.reduce([self.upper, upp - self.albefa * (upp - x),
                                  x + self.move * span])

        ux2 = (upp - x) ** 2
        xl2 = (x - low) ** 2
        inv_span = 1.0 / np.maximum(span, 1e-5)

        def approx(grad):
            pos = np.maximum(grad, 0.0)
            neg = np.maximum(-grad, 0.0)
            reg = 0.001 * (pos + neg) + self.raa0 * inv_span
            return (pos + reg) * ux2, (neg + reg) * xl2

        p0, q0 = approx(np.asarray(df0, dtype=float))
        p1, q1 = approx(np.asarray(dg, dtype=float))
        b = np.sum(p1 / (upp - x) + q1 / (x - low)) - g

        def x_of(lam):
            p = p0 + lam * p1
            q = q0 + lam * q1
            sp, sq = np.sqrt(p), np.sqrt(q)
            return np.clip((sp * low + sq * upp) / (sp + sq), alpha, beta)

        def dual_slope(lam):
            xl = x_of(lam)
            con = np.sum(p1 / (upp - xl) + q1 / (xl - low)) - b
            y = max(0.0, (lam - self.c) / self.d)
            return con - y

        if dual_slope(0.0) <= 0.0:
            lam = 0.0
        else:
            lo, hi = 0.0, 1.0
            while dual_slope(hi) > 0.0:
                lo, hi = hi, 2.0 * hi
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if dual_slope(mid) > 0.0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-12 * max(1.0, hi):
                    break
            lam = 0.5 * (lo + hi)
        xnew = x_of(lam)

        self.xold2 = self.xold1 if self.xold1 is not None else x.copy()
        self.xold1 = x.copy()
        self.low, self.upp = low, upp
        self.multiplier = lam
        return xnew


class ProjectedGradient:
    """Projected gradient descent on a quadratic-penalty merit function.

    A simple cross-check for :class:`MMA`; far slower to converge.
    """

    def __init__(self, lower, upper, move=0.02, penalty=100.0):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.move = move
        self.penalty = penalty
        self.iteration = 0

    def step(self, x, f0, df0, g, dg):
        self.iteration += 1
        span = self.upper - self.lower
        grad = np.asarray(df0) + 2.0 * self.penalty * max(g, 0.0) * np.asarray(dg)
        scaled = grad * span
        norm = np.max(np.abs(scaled))
        if norm == 0.0:
            return np.asarray(x, dtype=float).copy()
        return np.clip(x - self.move * span * scaled / norm, self.lower, self.upper)
