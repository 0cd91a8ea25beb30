"""Independent reference computations used by the tests."""

import numpy as np
from scipy.optimize import minimize_scalar


def breakeven_oracle(rule, m, f, eta, q_lo=None, n=400_001):
    """Dense grid over quality, then a bounded scalar refine around the best node."""
    q_lo = rule.q_min if q_lo is None else q_lo
    qs = np.linspace(q_lo, 1.0, n)
    vals = rule.score(np.maximum(m * qs ** eta + f, 0.0), qs)
    k = int(np.argmax(vals))
    a, b = qs[max(k - 1, 0)], qs[min(k + 1, n - 1)]
    if b > a:
        res = minimize_scalar(lambda q: -float(rule.score(max(m * q ** eta + f, 0.0), q)),
                              bounds=(a, b), method="bounded", options={"xatol": 1e-13})
        if -res.fun >= vals[k]:
            return float(res.x), float(-res.fun)
    return float(qs[k]), float(vals[k])


def brute_pseudotype(rule, m_ref, s_target, eta, lo, hi):
    """Bisection on the fixed cost using the grid oracle."""
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if breakeven_oracle(rule, m_ref, mid, eta, n=20001)[1] > s_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
