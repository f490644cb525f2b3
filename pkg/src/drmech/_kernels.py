"""Compiled inner loop for SRBM recruitment.

Mirrors ``srbm.form_pods`` comparison for comparison (same prefix sums, same
tolerance) so the two agree exactly; tests check this.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _first_reaching(cs, n, lo, target):
    # smallest idx in [lo, n] with cs[idx] >= target, or -1
    hi = n
    if cs[hi] < target:
        return -1
    while lo < hi:
        mid = (lo + hi) // 2
        if cs[mid] >= target:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def _feasible(smu, cs, sf, n, D, pi_e, rule_min, tol):
    s = 0
    e = _first_reaching(cs, n, s + 1, cs[s] + D - tol)
    if e < 0:
        return False
    acc = 0.0
    while True:
        h = _first_reaching(cs, n, e + 1, cs[e] + D - tol)
        if h < 0:
            return False
        if rule_min:
            top = 0.0
            for k in range(s, e):
                j = _first_reaching(cs, n, s + 1, cs[s] + sf[k] + D - tol) - 1
                if smu[j] > top:
                    top = smu[j]
            beta = pi_e / top
        else:
            beta = pi_e / smu[h - 1]
        acc += beta
        if acc >= 1.0 - tol:
            return True
        s, e = e, h


@njit(cache=True)
def smallest_feasible_prefix(mu, f, D, pi_e, rule_min, tol):
    """Smallest t such that the first t stream agents, sorted by (mu, arrival),
    close the pod stopping rule with one spare core. -1 if none."""
    n = mu.shape[0]
    smu = np.empty(n)
    sf = np.empty(n)
    cs = np.zeros(n + 1)
    total = 0.0
    for t in range(n):
        pos = t
        while pos > 0 and smu[pos - 1] > mu[t]:
            smu[pos] = smu[pos - 1]
            sf[pos] = sf[pos - 1]
            pos -= 1
        smu[pos] = mu[t]
        sf[pos] = f[t]
        total += f[t]
        if total < 2.0 * (D - tol):
            continue
        for i in range(t + 1):
            cs[i + 1] = cs[i] + sf[i]
        if _feasible(smu, cs, sf, t + 1, D, pi_e, rule_min, tol):
            return t + 1
    return -1


# -- complete-information pod sort -------------------------------------------

CI_OK, CI_SHORTFALL, CI_DEGENERATE, CI_INVARIANT = 0, 1, 2, 3


@njit(cache=True)
def _first_reaching_minus(cs, n, p, lo, target):
    # prefix sums with position p removed: S(x) = cs[x] (x <= p), cs[x+1] - f_p (x > p)
    if lo <= p and cs[p] >= target:
        hi = p
        while lo < hi:
            mid = (lo + hi) // 2
            if cs[mid] >= target:
                hi = mid
            else:
                lo = mid + 1
        return lo
    fp = cs[p + 1] - cs[p]
    t = target + fp
    lo2 = max(lo, p + 1) + 1
    hi = n + 1
    if lo2 > n or cs[n] < t:
        return -1
    while lo2 < hi:
        mid = (lo2 + hi) // 2
        if cs[mid] >= t:
            hi = mid
        else:
            lo2 = mid + 1
    return lo2 - 1


@njit(cache=True)
def ci_pod_kernel(mu, f, D, pi_e, watch, tol, eps):
    """Returns (status, M, bounds, agent_beta, reward, betas, watch_read, clamped).

    Same arithmetic as srbm_ci.ci_form_pods_ref; ``watch`` < 0 disables the
    read tracking.
    """
    n = mu.shape[0]
    cs = np.zeros(n + 1)
    for i in range(n):
        cs[i + 1] = cs[i] + f[i]
    ends = np.empty(n + 1, np.int64)
    nc = 0
    start = 0
    while True:
        e = _first_reaching(cs, n, start + 1, cs[start] + D - tol)
        if e < 0:
            break
        ends[nc] = e
        nc += 1
        start = e
    agent_beta = np.full(n, np.nan)
    reward = np.full(n, np.nan)
    betas = np.empty(max(nc, 1))
    if nc < 2:
        return CI_SHORTFALL, 0, ends[:nc], agent_beta, reward, betas[:0], False, 0
    src = np.empty(n + 2, np.int64)
    watch_read = False
    clamped = 0
    acc = 0.0
    # running product of the jump factors that no core member can move:
    # e^j for j <= i-4 only reads cores before the member's own core
    pre = 1.0
    pre_j = 0
    for i in range(1, nc):
        s = 0 if i == 1 else ends[i - 2]
        e = ends[i - 1]
        while pre_j < i - 4:
            j = pre_j + 1
            m = mu[ends[j - 1] - 1]
            d = m - mu[ends[j + 1] - 1]
            if abs(d) < eps:
                return CI_DEGENERATE, i - 1, ends[:nc], agent_beta, reward, betas[:i - 1], True, clamped
            ej = mu[ends[j + 2] - 1] * (m - mu[ends[j] - 1]) / (mu[ends[j + 1] - 1] * d)
            if ej < 0:
                return CI_INVARIANT, i - 1, ends[:nc], agent_beta, reward, betas[:i - 1], True, clamped
            if ej == 0:
                return CI_DEGENERATE, i - 1, ends[:nc], agent_beta, reward, betas[:i - 1], True, clamped
            pre *= ej
            pre_j = j
        for p in range(s, e):
            # ends of the sort without p, enough for nu^0..nu^{i+1}; cores
            # before p's own core are unchanged
            for j in range(i - 1):
                src[j] = ends[j] - 1
            cnt = i - 1
            st = s
            s_st = cs[s]
            while cnt < i + 2:
                x = _first_reaching_minus(cs, n, p, st + 1, s_st + D - tol)
                if x < 0:
                    break
                src[cnt] = x - 1 if x - 1 < p else x
                cnt += 1
                st = x
                s_st = cs[x] if x <= p else cs[x + 1] - (cs[p + 1] - cs[p])
            if cnt < 2:
                return CI_SHORTFALL, i - 1, ends[:nc], agent_beta, reward, betas[:i - 1], watch_read, clamped
            while cnt < i + 2:
                src[cnt] = src[cnt - 1]
                cnt += 1
                clamped += 1
            if watch >= 0 and p != watch:
                for j in range(i + 2):
                    if src[j] == watch:
                        watch_read = True
            c = pre
            for j in range(pre_j + 1, i):
                m = mu[src[j - 1]]
                d = m - mu[src[j + 1]]
                if abs(d) < eps:
                    return CI_DEGENERATE, i - 1, ends[:nc], agent_beta, reward, betas[:i - 1], True, clamped
                ej = mu[src[j + 2]] * (m - mu[src[j]]) / (mu[src[j + 1]] * d)
                if ej < 0:
                    return CI_INVARIANT, i - 1, ends[:nc], agent_beta, reward, betas[:i - 1], True, clamped
                if ej == 0:
                    return CI_DEGENERATE, i - 1, ends[:nc], agent_beta, reward, betas[:i - 1], True, clamped
                c *= ej
            agent_beta[p] = c * pi_e / mu[src[i + 1]]
            reward[p] = mu[src[i]] - pi_e
        b = agent_beta[s]
        for p in range(s + 1, e):
            if agent_beta[p] < b:
                b = agent_beta[p]
        betas[i - 1] = b
        acc += b
        if acc >= 1.0 - tol:
            return CI_OK, i, ends[:nc], agent_beta, reward, betas[:i], watch_read, clamped
    return CI_SHORTFALL, nc - 1, ends[:nc], agent_beta, reward, betas[:nc - 1], watch_read, clamped


@njit(cache=True)
def ci_smallest_feasible_prefix(mu, f, D, pi_e, tol, eps):
    """CI analogue of smallest_feasible_prefix: -1 if no prefix works."""
    n = mu.shape[0]
    smu = np.empty(n)
    sf = np.empty(n)
    total = 0.0
    for t in range(n):
        pos = t
        while pos > 0 and smu[pos - 1] > mu[t]:
            smu[pos] = smu[pos - 1]
            sf[pos] = sf[pos - 1]
            pos -= 1
        smu[pos] = mu[t]
        sf[pos] = f[t]
        total += f[t]
        if total < 2.0 * (D - tol):
            continue
        if ci_pod_kernel(smu[: t + 1], sf[: t + 1], D, pi_e, -1, tol, eps)[0] == CI_OK:
            return t + 1
    return -1
