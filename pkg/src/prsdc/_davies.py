"""Davies' algorithm for the distribution of a linear combination of
independent chi-square variables (central case, one degree of freedom each).

Port of Algorithm AS 155 restricted to non-negative and negative weights with
unit multiplicity, zero non-centrality and no added normal term.  Kept close
to the published control flow so that fault codes mean the same thing.

Fault codes: 0 ok, 1 required accuracy not obtainable within ``lim`` terms,
2 round-off possibly significant, 3 invalid parameters, 4 unable to locate
integration parameters (counter overflow).
"""

import math

import numpy as np
from numba import njit

_PI = math.pi
_LOG28 = 0.0866  # log(2) / 8


@njit(cache=True)
def _exp1(x):
    return 0.0 if x < -50.0 else math.exp(x)


@njit(cache=True)
def _log1(x, first):
    # first: log(1 + x); otherwise log(1 + x) - x
    if abs(x) > 0.1:
        return math.log(1.0 + x) if first else math.log(1.0 + x) - x
    y = x / (2.0 + x)
    term = 2.0 * y * y * y
    k = 3.0
    s = (2.0 if first else -x) * y
    y = y * y
    s1 = s + term / k
    while s1 != s:
        k = k + 2.0
        term = term * y
        s = s1
        s1 = s + term / k
    return s


@njit(cache=True)
def _errbd(u, lb, sigsq, state):
    state[0] += 1.0
    xconst = u * sigsq
    sum1 = u * xconst
    u = 2.0 * u
    for j in range(lb.shape[0] - 1, -1, -1):
        lj = lb[j]
        x = u * lj
        y = 1.0 - x
        xconst = xconst + lj / y
        sum1 = sum1 + (x * x / y + _log1(-x, False))
    return _exp1(-0.5 * sum1), xconst


@njit(cache=True)
def _ctff(accx, upn, lb, sigsq, lmin, lmax, mean, state):
    u2 = upn
    u1 = 0.0
    c1 = mean
    rb = 2.0 * (lmax if u2 > 0.0 else lmin)
    u = u2 / (1.0 + u2 * rb)
    e, c2 = _errbd(u, lb, sigsq, state)
    while e > accx:
        if state[0] > state[1]:
            return 0.0, u2
        u1 = u2
        c1 = c2
        u2 = 2.0 * u2
        u = u2 / (1.0 + u2 * rb)
        e, c2 = _errbd(u, lb, sigsq, state)
    u = (c1 - mean) / (c2 - mean)
    while u < 0.9:
        if state[0] > state[1]:
            return 0.0, u2
        u = (u1 + u2) / 2.0
        e, xconst = _errbd(u / (1.0 + u * rb), lb, sigsq, state)
        if e > accx:
            u1 = u
            c1 = xconst
        else:
            u2 = u
            c2 = xconst
        u = (c1 - mean) / (c2 - mean)
    return c2, u2


@njit(cache=True)
def _truncation(u, tausq, lb, sigsq, state):
    state[0] += 1.0
    sum1 = 0.0
    prod2 = 0.0
    prod3 = 0.0
    s = 0
    sum2 = (sigsq + tausq) * u * u
    prod1 = 2.0 * sum2
    u = 2.0 * u
    for j in range(lb.shape[0]):
        x = (u * lb[j]) ** 2
        if x > 1.0:
            prod2 = prod2 + math.log(x)
            prod3 = prod3 + _log1(x, True)
            s = s + 1
        else:
            prod1 = prod1 + _log1(x, True)
    sum1 = 0.5 * sum1
    prod2 = prod1 + prod2
    prod3 = prod1 + prod3
    x = _exp1(-sum1 - 0.25 * prod2) / _PI
    y = _exp1(-sum1 - 0.25 * prod3) / _PI
    err1 = 1.0 if s == 0 else x * 2.0 / s
    err2 = 2.5 * y if prod3 > 1.0 else 1.0
    if err2 < err1:
        err1 = err2
    x = 0.5 * sum2
    err2 = 1.0 if x <= y else y / x
    return err1 if err1 < err2 else err2


@njit(cache=True)
def _findu(utx, accx, lb, sigsq, state):
    ut = utx
    u = ut / 4.0
    if _truncation(u, 0.0, lb, sigsq, state) > accx:
        u = ut
        while _truncation(u, 0.0, lb, sigsq, state) > accx:
            if state[0] > state[1]:
                return ut
            ut = ut * 4.0
            u = ut
    else:
        ut = u
        u = u / 4.0
        while _truncation(u, 0.0, lb, sigsq, state) <= accx:
            if state[0] > state[1]:
                return ut
            ut = u
            u = u / 4.0
    for divis in (2.0, 1.4, 1.2, 1.1):
        u = ut / divis
        if _truncation(u, 0.0, lb, sigsq, state) <= accx:
            ut = u
    return ut


@njit(cache=True)
def _integrate(nterm, interv, tausq, mainx, c, lb, sigsq):
    inpi = interv / _PI
    intl = 0.0
    ersm = 0.0
    for k in range(nterm, -1, -1):
        u = (k + 0.5) * interv
        sum1 = -2.0 * u * c
        sum2 = abs(sum1)
        sum3 = -0.5 * sigsq * u * u
        for j in range(lb.shape[0] - 1, -1, -1):
            x = 2.0 * lb[j] * u
            y = x * x
            sum3 = sum3 - 0.25 * _log1(y, True)
            z = math.atan(x)
            sum1 = sum1 + z
            sum2 = sum2 + abs(z)
        x = inpi * _exp1(sum3) / u
        if not mainx:
            x = x * (1.0 - _exp1(-0.5 * tausq * u * u))
        intl = intl + math.sin(0.5 * sum1) * x
        ersm = ersm + 0.5 * sum2 * x
    return intl, ersm


@njit(cache=True)
def _cfe(x, lb, order, state):
    # state[2] doubles as the 'fail' flag
    state[0] += 1.0
    axl = abs(x)
    sxl = 1.0 if x > 0.0 else -1.0
    sum1 = 0.0
    r = lb.shape[0]
    for j in range(r - 1, -1, -1):
        t = order[j]
        if lb[t] * sxl > 0.0:
            lj = abs(lb[t])
            axl1 = axl - lj
            axl2 = lj / _LOG28
            if axl1 > axl2:
                axl = axl1
            else:
                if axl > axl2:
                    axl = axl2
                sum1 = (axl - axl1) / lj
                for k in range(j - 1, -1, -1):
                    sum1 = sum1 + 1.0
                break
    if sum1 > 100.0:
        state[2] = 1.0
        return 1.0
    return 2.0 ** (sum1 / 4.0) / (_PI * axl * axl)


@njit(cache=True)
def qf(lb, c, lim, acc):
    """P(sum_j lb_j * chi2_1 < c).

    Returns (cdf value, fault code, error-bound estimate, terms used).
    """
    r = lb.shape[0]
    # state: [count, limit, fail]
    state = np.zeros(3)
    state[1] = float(lim)
    trace_err = 0.0
    nterms = 0.0
    order = np.argsort(-np.abs(lb))  # descending, as in the reference
    sigsq = 0.0
    lmax = 0.0
    lmin = 0.0
    mean = 0.0
    sd = 0.0
    for j in range(r):
        lj = lb[j]
        sd = sd + lj * lj * 2.0
        mean = mean + lj
        if lmax < lj:
            lmax = lj
        elif lmin > lj:
            lmin = lj
    if sd == 0.0:
        return (1.0 if c > 0.0 else 0.0), 0, 0.0, 0.0
    if lmin == 0.0 and lmax == 0.0:
        return -1.0, 3, 0.0, 0.0
    sd = math.sqrt(sd)
    almx = -lmin if lmax < -lmin else lmax

    xlim = float(lim)
    acc1 = acc
    utx = 16.0 / sd
    up = 4.5 / sd
    un = -up
    utx = _findu(utx, 0.5 * acc1, lb, sigsq, state)
    if c != 0.0 and almx > 0.07 * sd:
        tausq = 0.25 * acc1 / _cfe(c, lb, order, state)
        if state[2] > 0.0:
            state[2] = 0.0
        elif _truncation(utx, tausq, lb, sigsq, state) < 0.2 * acc1:
            sigsq = sigsq + tausq
            utx = _findu(utx, 0.25 * acc1, lb, sigsq, state)
    acc1 = 0.5 * acc1

    intl = 0.0
    ersm = 0.0
    while True:
        if state[0] > state[1]:
            return -1.0, 4, 0.0, nterms
        ct, up = _ctff(acc1, up, lb, sigsq, lmin, lmax, mean, state)
        d1 = ct - c
        if d1 < 0.0:
            return 1.0, 0, 0.0, nterms
        ct, un = _ctff(acc1, un, lb, sigsq, lmin, lmax, mean, state)
        d2 = c - ct
        if d2 < 0.0:
            return 0.0, 0, 0.0, nterms
        if state[0] > state[1]:
            return -1.0, 4, 0.0, nterms
        intv = 2.0 * _PI / (d1 if d1 > d2 else d2)
        xnt = utx / intv
        xntm = 3.0 / math.sqrt(acc1)
        if xnt > xntm * 1.5:
            if xntm > xlim:
                return -1.0, 1, 0.0, nterms
            ntm = int(math.floor(xntm + 0.5))
            intv1 = utx / ntm
            x = 2.0 * _PI / intv1
            if x <= abs(c):
                break
            tausq = 0.33 * acc1 / (1.1 * (_cfe(c - x, lb, order, state)
                                          + _cfe(c + x, lb, order, state)))
            if state[2] > 0.0:
                break
            acc1 = 0.67 * acc1
            a, b = _integrate(ntm, intv1, tausq, False, c, lb, sigsq)
            intl += a
            ersm += b
            xlim = xlim - xntm
            sigsq = sigsq + tausq
            nterms += ntm + 1
            utx = _findu(utx, 0.25 * acc1, lb, sigsq, state)
            acc1 = 0.75 * acc1
            continue
        break

    if xnt > xlim:
        return -1.0, 1, 0.0, nterms
    nt = int(math.floor(xnt + 0.5))
    a, b = _integrate(nt, intv, 0.0, True, c, lb, sigsq)
    intl += a
    ersm += b
    nterms += nt + 1
    qfval = 0.5 - intl
    trace_err = ersm
    fault = 0
    up = ersm
    x = up + acc / 10.0
    for rat in (1.0, 2.0, 4.0, 8.0):
        if rat * x == rat * up:
            fault = 2
    return qfval, fault, trace_err, nterms
