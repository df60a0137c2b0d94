"""Compiled per-column logistic fits for marginal screening."""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def _fit_column(y, X, gj, b0, max_iter, tol, sep_eta, coef, work):
    n, q = X.shape
    p = q + 1
    for a in range(q):
        coef[a] = b0[a]
    coef[q] = 0.0
    eta = work[0]
    mu = work[1]
    cand = work[2]
    tbuf = work[3]
    dev = 0.0
    for i in range(n):
        e = 0.0
        for a in range(q):
            e += X[i, a] * coef[a]
        eta[i] = e
        t = math.exp(-abs(e))
        mu[i] = (1.0 if e >= 0 else t) / (1.0 + t)
        dev += math.log1p(t) + max(e, 0.0) - y[i] * e
    A = np.empty((p, p))
    rhs = np.empty(p)
    step = np.empty(p)
    trial = np.empty(p)
    for it in range(max_iter):
        A[:, :] = 0.0
        rhs[:] = 0.0
        for i in range(n):
            w = mu[i] * (1.0 - mu[i])
            r = y[i] - mu[i]
            for a in range(q):
                xa = X[i, a]
                for b in range(a, q):
                    A[a, b] += w * xa * X[i, b]
                A[a, q] += w * xa * gj[i]
                rhs[a] += r * xa
            A[q, q] += w * gj[i] * gj[i]
            rhs[q] += r * gj[i]
        for a in range(p):
            for b in range(a):
                A[a, b] = A[b, a]
        # collinearity of g_j with X through the Schur complement
        Axx = A[:q, :q].copy()
        sol = np.linalg.solve(Axx, A[:q, q].copy())
        schur = A[q, q]
        for a in range(q):
            schur -= A[a, q] * sol[a]
        if not schur > 1e-10 * max(A[q, q], 1e-300):
            return 2, np.nan
        step[:] = np.linalg.solve(A, rhs)
        accepted = False
        for _h in range(30):
            for a in range(p):
                trial[a] = coef[a] + step[a]
            d_new = 0.0
            for i in range(n):
                e = trial[q] * gj[i]
                for a in range(q):
                    e += X[i, a] * trial[a]
                cand[i] = e
                t = math.exp(-abs(e))
                tbuf[i] = t
                d_new += math.log1p(t) + max(e, 0.0) - y[i] * e
            if math.isfinite(d_new) and d_new <= dev * (1 + 1e-12) + 1e-12:
                accepted = True
                break
            for a in range(p):
                step[a] *= 0.5
        big = 0.0
        if accepted:
            for a in range(p):
                coef[a] = trial[a]
                big = max(big, abs(step[a]))
            dev = d_new
            for i in range(n):
                e = cand[i]
                eta[i] = e
                t = tbuf[i]
                mu[i] = (1.0 if e >= 0 else t) / (1.0 + t)
        if big < tol:
            emax = 0.0
            for i in range(n):
                emax = max(emax, abs(eta[i]))
            if emax > sep_eta:
                return 3, np.nan
            # information at the final estimate
            A[:, :] = 0.0
            for i in range(n):
                w = mu[i] * (1.0 - mu[i])
                for a in range(q):
                    for b in range(a, q):
                        A[a, b] += w * X[i, a] * X[i, b]
                    A[a, q] += w * X[i, a] * gj[i]
                A[q, q] += w * gj[i] * gj[i]
            for a in range(q):
                for b in range(a):
                    A[a, b] = A[b, a]
            sol = np.linalg.solve(A[:q, :q].copy(), A[:q, q].copy())
            schur = A[q, q]
            for a in range(q):
                schur -= A[a, q] * sol[a]
            if not schur > 1e-10 * max(A[q, q], 1e-300):
                return 2, np.nan
            return 0, 1.0 / schur
    return 1, np.nan


@numba.njit(cache=True)
def logit_marginal(y, X, gT, b0, max_iter, tol, sep_eta):
    """Fit y ~ X + g_j for each row g_j of gT.

    Returns (beta, inverse information of beta, status) with status
    0 ok, 1 not converged, 2 collinear with X, 3 separated.
    """
    J, n = gT.shape
    q = X.shape[1]
    beta = np.full(J, np.nan)
    var = np.full(J, np.nan)
    status = np.zeros(J, dtype=np.int64)
    coef = np.empty(q + 1)
    work = np.empty((4, n))
    for j in range(J):
        st, v = _fit_column(y, X, gT[j], b0, max_iter, tol, sep_eta, coef, work)
        status[j] = st
        if st == 0:
            beta[j] = coef[q]
            var[j] = v
    return beta, var, status
