"""Compiled coordinate-descent kernels.

X is expected in Fortran order so each column is contiguous. All kernels
release the GIL so ensemble members can be fitted from a thread pool.
"""

import math

import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def _soft(z, lam):
    # dead zone widened by 1e-12 relative so lambda_max computed elsewhere yields exact zeros
    if abs(z) <= lam * (1.0 + 1e-12):
        return 0.0
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


@njit(nogil=True, cache=True)
def _coord(X, w, xsq, r, beta, j, lam, n, weighted):
    # one coordinate update of (1/2n) sum w_i r_i^2 + lam |beta_j|; r updated in place
    if xsq[j] == 0.0:
        return 0.0
    bj = beta[j]
    g = 0.0
    if weighted:
        for i in range(n):
            g += w[i] * X[i, j] * r[i]
    else:
        for i in range(n):
            g += X[i, j] * r[i]
    nb = _soft(g / n + xsq[j] * bj, lam) / xsq[j]
    if nb == bj:
        return 0.0
    d = nb - bj
    for i in range(n):
        r[i] -= d * X[i, j]
    beta[j] = nb
    return abs(d)


@njit(nogil=True, cache=True)
def _intercept(w, r, n):
    sw = 0.0
    sr = 0.0
    for i in range(n):
        sw += w[i]
        sr += w[i] * r[i]
    d = sr / sw
    for i in range(n):
        r[i] -= d
    return d


@njit(nogil=True, cache=True)
def _polish(X, r, beta, candidates, mc, lam, n):
    """Exact solve of the stationarity equations on the current active set.

    With signs s fixed, X_A'(r - X_A d)/n = lam s is linear in the step d.
    If a coefficient would change sign the step stops where the first one
    reaches zero. Nothing is done when the Cholesky factorization is badly
    conditioned. Returns True when a step was applied.
    """
    active = np.empty(mc, dtype=np.int64)
    m = 0
    for a in range(mc):
        if beta[candidates[a]] != 0.0:
            active[m] = candidates[a]
            m += 1
    if m == 0:
        return False
    G = np.empty((m, m))
    rhs = np.empty(m)
    for a in range(m):
        ja = active[a]
        g = 0.0
        for i in range(n):
            g += X[i, ja] * r[i]
        sgn = 1.0 if beta[ja] > 0 else -1.0
        rhs[a] = g / n - lam * sgn
        for b in range(a + 1):
            jb = active[b]
            s = 0.0
            for i in range(n):
                s += X[i, ja] * X[i, jb]
            G[a, b] = s / n
            G[b, a] = s / n
    # Cholesky in place (lower triangle)
    dmax = 0.0
    for a in range(m):
        if G[a, a] > dmax:
            dmax = G[a, a]
    for a in range(m):
        s = G[a, a]
        for c in range(a):
            s -= G[a, c] * G[a, c]
        if s <= 1e-10 * dmax:
            return False
        G[a, a] = math.sqrt(s)
        for b in range(a + 1, m):
            t = G[b, a]
            for c in range(a):
                t -= G[b, c] * G[a, c]
            G[b, a] = t / G[a, a]
    for a in range(m):
        t = rhs[a]
        for c in range(a):
            t -= G[a, c] * rhs[c]
        rhs[a] = t / G[a, a]
    for a in range(m - 1, -1, -1):
        t = rhs[a]
        for c in range(a + 1, m):
            t -= G[c, a] * rhs[c]
        rhs[a] = t / G[a, a]
    # within the sign orthant the objective is this quadratic, so moving
    # toward its minimizer up to the first sign change is a descent step
    t = 1.0
    hit = -1
    for a in range(m):
        ja = active[a]
        if (beta[ja] + rhs[a]) * beta[ja] <= 0.0:
            ta = -beta[ja] / rhs[a]
            if ta < t:
                t = ta
                hit = a
    for a in range(m):
        ja = active[a]
        d = t * rhs[a]
        if a == hit:
            d = -beta[ja]
        beta[ja] += d
        if a == hit:
            beta[ja] = 0.0
        for i in range(n):
            r[i] -= d * X[i, ja]
    return True


@njit(nogil=True, cache=True)
def _cd(X, w, xsq, r, beta, b0, lam, tol, budget, weighted, fit_intercept):
    """Active-set cycling: full sweep, then iterate on nonzeros until stable.

    Slow active-set cycling (ill-conditioned active Gram matrix) is cut
    short by an exact active-set solve every 50 sweeps in the unweighted
    case; convergence is still judged by coordinate sweeps afterwards.

    Returns (sweeps used, intercept, converged flag).
    """
    n, p = X.shape
    sweeps = 0
    active = np.empty(p, dtype=np.int64)
    while sweeps < budget:
        dmax = 0.0
        if fit_intercept:
            d = _intercept(w, r, n)
            b0 += d
            dmax = abs(d)
        for j in range(p):
            d = _coord(X, w, xsq, r, beta, j, lam, n, weighted)
            if d > dmax:
                dmax = d
        sweeps += 1
        if dmax < tol:
            return sweeps, b0, True
        m = 0
        for j in range(p):
            if beta[j] != 0.0:
                active[m] = j
                m += 1
        inner = 0
        while sweeps < budget:
            inner += 1
            if not weighted and not fit_intercept and inner % 50 == 0 and m > 0:
                _polish(X, r, beta, active, m, lam, n)
            dmax = 0.0
            if fit_intercept:
                d = _intercept(w, r, n)
                b0 += d
                dmax = abs(d)
            for a in range(m):
                d = _coord(X, w, xsq, r, beta, active[a], lam, n, weighted)
                if d > dmax:
                    dmax = d
            sweeps += 1
            if dmax < tol:
                break
    return sweeps, b0, False


@njit(nogil=True, cache=True)
def path_gaussian(X, y, lambdas, beta_init, tol, max_sweeps):
    n, p = X.shape
    K = lambdas.shape[0]
    coefs = np.zeros((p, K))
    sweeps = np.zeros(K, dtype=np.int64)
    ok = np.ones(K, dtype=np.bool_)
    w = np.ones(n)
    xsq = np.zeros(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += X[i, j] * X[i, j]
        xsq[j] = s / n
    beta = beta_init.copy()
    r = y - X @ beta
    for k in range(K):
        used, _, conv = _cd(X, w, xsq, r, beta, 0.0, lambdas[k], tol, max_sweeps, False, False)
        sweeps[k] = used
        ok[k] = conv
        coefs[:, k] = beta
    return coefs, sweeps, ok


@njit(nogil=True, cache=True)
def _logistic_objective(eta, y, beta, lam):
    n = eta.shape[0]
    s = 0.0
    for i in range(n):
        e = eta[i]
        if e > 0:
            s += e + math.log1p(math.exp(-e)) - y[i] * e
        else:
            s += math.log1p(math.exp(e)) - y[i] * e
    pen = 0.0
    for j in range(beta.shape[0]):
        pen += abs(beta[j])
    return s / n + lam * pen


@njit(nogil=True, cache=True)
def _sigmoid(e):
    if e >= 0:
        return 1.0 / (1.0 + math.exp(-e))
    t = math.exp(e)
    return t / (1.0 + t)


@njit(nogil=True, cache=True)
def path_binomial(X, y, lambdas, beta_init, b0_init, tol, max_sweeps, cap):
    """Proximal Newton (IRLS) outer loop with weighted coordinate descent inside.

    An unpenalized intercept is fitted. Coefficients are clipped to
    [-cap, cap] when the data are (quasi-)separable.
    """
    n, p = X.shape
    K = lambdas.shape[0]
    coefs = np.zeros((p, K))
    intercepts = np.zeros(K)
    sweeps = np.zeros(K, dtype=np.int64)
    ok = np.ones(K, dtype=np.bool_)
    capped = np.zeros(K, dtype=np.bool_)
    beta = beta_init.copy()
    b0 = b0_init
    w = np.empty(n)
    r = np.empty(n)
    xsq = np.empty(p)
    for k in range(K):
        lam = lambdas[k]
        used = 0
        conv = False
        eta = b0 + X @ beta
        obj = _logistic_objective(eta, y, beta, lam)
        while used < max_sweeps:
            for i in range(n):
                pi = _sigmoid(eta[i])
                wi = pi * (1.0 - pi)
                if wi < 1e-12:
                    wi = 1e-12
                w[i] = wi
                r[i] = (y[i] - pi) / wi
            for j in range(p):
                s = 0.0
                for i in range(n):
                    s += w[i] * X[i, j] * X[i, j]
                xsq[j] = s / n
            old_beta = beta.copy()
            old_b0 = b0
            got, b0, _ = _cd(X, w, xsq, r, beta, b0, lam, tol, max_sweeps - used, True, True)
            used += max(got, 1)
            for j in range(p):
                if beta[j] > cap:
                    beta[j] = cap
                    capped[k] = True
                elif beta[j] < -cap:
                    beta[j] = -cap
                    capped[k] = True
            # backtrack if the Newton step overshoots
            step = 1.0
            new_beta = beta.copy()
            new_b0 = b0
            eta = b0 + X @ beta
            new_obj = _logistic_objective(eta, y, beta, lam)
            halvings = 0
            while new_obj > obj + 1e-13 * abs(obj) and halvings < 40:
                step *= 0.5
                for j in range(p):
                    beta[j] = old_beta[j] + step * (new_beta[j] - old_beta[j])
                b0 = old_b0 + step * (new_b0 - old_b0)
                eta = b0 + X @ beta
                new_obj = _logistic_objective(eta, y, beta, lam)
                halvings += 1
            dmax = abs(b0 - old_b0)
            for j in range(p):
                d = abs(beta[j] - old_beta[j])
                if d > dmax:
                    dmax = d
            obj = new_obj
            if dmax < tol:
                conv = True
                break
        sweeps[k] = used
        ok[k] = conv
        coefs[:, k] = beta
        intercepts[k] = b0
    return coefs, intercepts, sweeps, ok, capped
