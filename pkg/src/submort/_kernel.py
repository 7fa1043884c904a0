"""Compiled Metropolis-within-Gibbs sweeps.

Every scalar parameter gets its own random-walk update. Four joint moves
(ridge, shift and two scale moves) are interleaved to cross the
posterior correlations that single-site updates traverse slowly:

* ridge: ``beta[q,a,t] += d`` with ``u[:,a,t] -= Y[:,q] d`` (log-rates fixed)
* shift: ``mu[k,q,t]`` and every ``beta[q,a,t]`` in group ``k`` move by ``d``

Proposals for ``mu`` are scaled by its Gaussian full-conditional sd and shift
proposals by the RW2 conditional sd. Both depend only on variances the move
leaves unchanged, so the proposals stay symmetric, and the frozen step sizes
keep working when the hierarchical variances shrink after burn-in.
* beta scale: ``sigma_beta`` and the deviations ``beta - mu`` scale together
* u scale: ``sigma_x[x]`` and ``u[x,:,:]`` scale together

The caller supplies standard normals and log-uniforms so all randomness comes
from numpy generators outside compiled code. Parameter layout follows
``ModelParams.FIELDS`` (beta, u, mu, sigma_beta, sigma_mu, sigma_x); the
joint moves' step sizes and acceptance counters follow after it.
"""

import math

import numpy as np
from numba import njit

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
DIFFUSE_SD = 100.0


@njit(cache=True, inline="always")
def _nlp(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * z * z - math.log(sd) - HALF_LOG_2PI


@njit(cache=True)
def _rw2_local(mu, t, sm, tv):
    # Terms of the mu[k, q, :] prior that involve mu[t].
    T = mu.shape[0]
    lp = 0.0
    if t < 2:
        lp += _nlp(mu[t], 0.0, DIFFUSE_SD)
    for j in range(max(t, 2), min(t + 3, T)):
        s = sm[j] if tv else sm[0]
        lp += _nlp(mu[j], 2.0 * mu[j - 1] - mu[j - 2], s)
    return lp


@njit(cache=True)
def _rw2_precision(t, T, sm, tv):
    # Prior precision of mu[t] given its neighbours (RW2 plus diffuse start).
    prec = 1.0 / (DIFFUSE_SD * DIFFUSE_SD) if t < 2 else 0.0
    for j in range(max(t, 2), min(t + 3, T)):
        c = -2.0 if j == t + 1 else 1.0
        s = sm[j] if tv else sm[0]
        prec += c * c / (s * s)
    return prec


@njit(cache=True)
def _slice_delta(x, t, dv, eta, mrate, y, P, live, agg, agg_live, lam_agg, constraint, mnew):
    # Log-likelihood change when eta[x, a, t] += dv[a] for every area a.
    # New rates go to mnew[a]; returns (delta, change in aggregate mean).
    out = 0.0
    dtot = 0.0
    for a in range(dv.shape[0]):
        da = dv[a]
        if da == 0.0:
            mnew[a] = mrate[x, a, t]
            continue
        mn = math.exp(eta[x, a, t] + da)
        mnew[a] = mn
        if live[x, a, t]:
            dlam = P[x, a, t] * (mn - mrate[x, a, t])
            dtot += dlam
            out += y[x, a, t] * da - dlam
    if constraint and agg_live[x, t] and dtot != 0.0:
        r = dtot / lam_agg[x, t]
        if r <= -1.0:
            return -np.inf, dtot
        out += agg[x, t] * math.log1p(r) - dtot
    return out, dtot


@njit(cache=True)
def _slice_apply(x, t, dv, eta, mrate, lam_agg, dtot, mnew):
    for a in range(dv.shape[0]):
        if dv[a] != 0.0:
            eta[x, a, t] += dv[a]
            mrate[x, a, t] = mnew[a]
    lam_agg[x, t] += dtot


@njit(cache=True)
def _cell_delta(x, a, t, d, eta, mrate, y, P, live, agg, agg_live, lam_agg, constraint):
    # Single-cell version of _slice_delta; returns (delta, new rate, dlam).
    mn = math.exp(eta[x, a, t] + d)
    if not live[x, a, t]:
        return 0.0, mn, 0.0
    dlam = P[x, a, t] * (mn - mrate[x, a, t])
    out = y[x, a, t] * d - dlam
    if constraint and agg_live[x, t]:
        r = dlam / lam_agg[x, t]
        if r <= -1.0:
            return -np.inf, mn, dlam
        out += agg[x, t] * math.log1p(r) - dlam
    return out, mn, dlam


@njit(cache=True, nogil=True)
def run_chunk(
    theta, step, dims, Y, y, P, live, agg, agg_live, gidx, flags, upper,
    z, logu, eta, mrate, lam_agg, acc, save_at, saved, saved_lp, lp0,
):
    G, A, T, p, K = dims[0], dims[1], dims[2], dims[3], dims[4]
    constraint, use_u, hyper, tv = flags[0], flags[1], flags[2], flags[3]
    nb = p * A * T
    nu = G * A * T
    nm = K * p * T
    nsm = K * p * T if tv else K * p
    o_u = nb
    o_mu = o_u + nu
    o_sb = o_mu + nm
    o_sm = o_sb + nm
    o_sx = o_sm + nsm
    o_ridge = o_sx + G
    o_shift = o_ridge + nb
    o_sbs = o_shift + nm
    o_sxs = o_sbs + nm
    beta = theta[0:nb].reshape((p, A, T))
    u = theta[o_u:o_u + nu].reshape((G, A, T))
    mu = theta[o_mu:o_mu + nm].reshape((K, p, T))
    sb = theta[o_sb:o_sb + nm].reshape((K, p, T))
    sm_flat = theta[o_sm:o_sm + nsm]
    sx = theta[o_sx:o_sx + G]
    cnt = np.zeros(K, np.int64)
    for a in range(A):
        cnt[gidx[a]] += 1
    dv = np.zeros(A)
    mbuf = np.empty((G, A))
    dbuf = np.empty(G)
    ubuf = np.empty((G, T))
    tbuf = np.empty((T, A))
    lp = lp0
    n_saved = 0
    for it in range(z.shape[0]):
        zi = z[it]
        ui = logu[it]
        # beta[q, a, t]
        for q in range(p):
            for a in range(A):
                k = gidx[a]
                for t in range(T):
                    j = (q * A + a) * T + t
                    d = step[j] * zi[j]
                    dl = 0.0
                    for x in range(G):
                        c, mn, dlam = _cell_delta(x, a, t, Y[x, q] * d, eta, mrate, y, P, live, agg,
                                                  agg_live, lam_agg, constraint)
                        dl += c
                        mbuf[x, 0] = mn
                        dbuf[x] = dlam
                    if hyper:
                        b = beta[q, a, t]
                        dl += _nlp(b + d, mu[k, q, t], sb[k, q, t]) - _nlp(b, mu[k, q, t], sb[k, q, t])
                    if ui[j] < dl:
                        for x in range(G):
                            eta[x, a, t] += Y[x, q] * d
                            mrate[x, a, t] = mbuf[x, 0]
                            lam_agg[x, t] += dbuf[x]
                        beta[q, a, t] += d
                        lp += dl
                        acc[j] += 1
        if use_u and hyper:
            # ridge: trade beta against u, leaving every log-rate unchanged
            for q in range(p):
                for a in range(A):
                    k = gidx[a]
                    for t in range(T):
                        j = o_ridge + (q * A + a) * T + t
                        d = step[j] * zi[j]
                        b = beta[q, a, t]
                        dl = _nlp(b + d, mu[k, q, t], sb[k, q, t]) - _nlp(b, mu[k, q, t], sb[k, q, t])
                        for x in range(G):
                            v = u[x, a, t]
                            dl += _nlp(v - Y[x, q] * d, 0.0, sx[x]) - _nlp(v, 0.0, sx[x])
                        if ui[j] < dl:
                            beta[q, a, t] = b + d
                            for x in range(G):
                                u[x, a, t] -= Y[x, q] * d
                            lp += dl
                            acc[j] += 1
        if use_u:
            # u[x, a, t]
            for x in range(G):
                s = sx[x]
                for a in range(A):
                    for t in range(T):
                        j = o_u + (x * A + a) * T + t
                        d = step[j] * zi[j]
                        v = u[x, a, t]
                        dl, mn, dlam = _cell_delta(x, a, t, d, eta, mrate, y, P, live, agg, agg_live,
                                                   lam_agg, constraint)
                        dl += _nlp(v + d, 0.0, s) - _nlp(v, 0.0, s)
                        if ui[j] < dl:
                            eta[x, a, t] += d
                            mrate[x, a, t] = mn
                            lam_agg[x, t] += dlam
                            u[x, a, t] = v + d
                            lp += dl
                            acc[j] += 1
        if hyper:
            for k in range(K):
                for q in range(p):
                    if tv:
                        smk = sm_flat[(k * p + q) * T:(k * p + q + 1) * T]
                    else:
                        smk = sm_flat[k * p + q:k * p + q + 1]
                    muk = mu[k, q]
                    # mu[k, q, t]
                    for t in range(T):
                        j = o_mu + (k * p + q) * T + t
                        s = sb[k, q, t]
                        prec = _rw2_precision(t, T, smk, tv) + cnt[k] / (s * s)
                        d = step[j] * zi[j] / math.sqrt(prec)
                        old = muk[t]
                        dl = -_rw2_local(muk, t, smk, tv)
                        for a in range(A):
                            if gidx[a] == k:
                                dl += _nlp(beta[q, a, t], old + d, s) - _nlp(beta[q, a, t], old, s)
                        muk[t] = old + d
                        dl += _rw2_local(muk, t, smk, tv)
                        if ui[j] < dl:
                            lp += dl
                            acc[j] += 1
                        else:
                            muk[t] = old
                    # shift: mu[k, q, t] together with the group's beta[q, :, t]
                    for t in range(T):
                        j = o_shift + (k * p + q) * T + t
                        d = step[j] * zi[j] / math.sqrt(_rw2_precision(t, T, smk, tv))
                        old = muk[t]
                        dl = -_rw2_local(muk, t, smk, tv)
                        muk[t] = old + d
                        dl += _rw2_local(muk, t, smk, tv)
                        for x in range(G):
                            for a in range(A):
                                dv[a] = Y[x, q] * d if gidx[a] == k else 0.0
                            c, dbuf[x] = _slice_delta(x, t, dv, eta, mrate, y, P, live, agg, agg_live,
                                                      lam_agg, constraint, mbuf[x])
                            dl += c
                        if ui[j] < dl:
                            for x in range(G):
                                for a in range(A):
                                    dv[a] = Y[x, q] * d if gidx[a] == k else 0.0
                                _slice_apply(x, t, dv, eta, mrate, lam_agg, dbuf[x], mbuf[x])
                            for a in range(A):
                                if gidx[a] == k:
                                    beta[q, a, t] += d
                            lp += dl
                            acc[j] += 1
                        else:
                            muk[t] = old
                    # sigma_beta[k, q, t], log scale
                    for t in range(T):
                        j = o_sb + (k * p + q) * T + t
                        d = step[j] * zi[j]
                        so = sb[k, q, t]
                        sn = so * math.exp(d)
                        if sn > upper or sn <= 0.0:
                            continue
                        dl = d
                        for a in range(A):
                            if gidx[a] == k:
                                dl += _nlp(beta[q, a, t], mu[k, q, t], sn) - _nlp(beta[q, a, t], mu[k, q, t], so)
                        if ui[j] < dl:
                            sb[k, q, t] = sn
                            lp += dl - d
                            acc[j] += 1
                    # beta scale: sigma_beta and beta - mu scaled by exp(d)
                    for t in range(T):
                        j = o_sbs + (k * p + q) * T + t
                        d = step[j] * zi[j]
                        so = sb[k, q, t]
                        sn = so * math.exp(d)
                        if sn > upper or sn <= 0.0:
                            continue
                        f = math.exp(d) - 1.0
                        m0 = mu[k, q, t]
                        dl = (cnt[k] + 1) * d
                        for a in range(A):
                            if gidx[a] == k:
                                b = beta[q, a, t]
                                dl += _nlp(m0 + (b - m0) * (f + 1.0), m0, sn) - _nlp(b, m0, so)
                        for x in range(G):
                            for a in range(A):
                                dv[a] = Y[x, q] * f * (beta[q, a, t] - m0) if gidx[a] == k else 0.0
                            c, dbuf[x] = _slice_delta(x, t, dv, eta, mrate, y, P, live, agg, agg_live,
                                                      lam_agg, constraint, mbuf[x])
                            dl += c
                        if ui[j] < dl:
                            for x in range(G):
                                for a in range(A):
                                    dv[a] = Y[x, q] * f * (beta[q, a, t] - m0) if gidx[a] == k else 0.0
                                _slice_apply(x, t, dv, eta, mrate, lam_agg, dbuf[x], mbuf[x])
                            for a in range(A):
                                if gidx[a] == k:
                                    beta[q, a, t] = m0 + (beta[q, a, t] - m0) * (f + 1.0)
                            sb[k, q, t] = sn
                            lp += dl - (cnt[k] + 1) * d
                            acc[j] += 1
                    # sigma_mu[k, q(, t)], log scale
                    nsl = T if tv else 1
                    for r in range(nsl):
                        j = o_sm + (k * p + q) * nsl + r
                        d = step[j] * zi[j]
                        so = smk[r]
                        sn = so * math.exp(d)
                        if sn > upper or sn <= 0.0:
                            continue
                        dl = d
                        for tt in range(2, T):
                            if tv and tt != r:
                                continue
                            pred = 2.0 * muk[tt - 1] - muk[tt - 2]
                            dl += _nlp(muk[tt], pred, sn) - _nlp(muk[tt], pred, so)
                        if ui[j] < dl:
                            smk[r] = sn
                            lp += dl - d
                            acc[j] += 1
            if use_u:
                for x in range(G):
                    # sigma_x[x], log scale
                    j = o_sx + x
                    d = step[j] * zi[j]
                    so = sx[x]
                    sn = so * math.exp(d)
                    if sn <= upper and sn > 0.0:
                        dl = d
                        for a in range(A):
                            for t in range(T):
                                dl += _nlp(u[x, a, t], 0.0, sn) - _nlp(u[x, a, t], 0.0, so)
                        if ui[j] < dl:
                            sx[x] = sn
                            lp += dl - d
                            acc[j] += 1
                    # u scale: sigma_x[x] and u[x, :, :] scaled by exp(d)
                    j = o_sxs + x
                    d = step[j] * zi[j]
                    so = sx[x]
                    sn = so * math.exp(d)
                    if sn > upper or sn <= 0.0:
                        continue
                    f = math.exp(d) - 1.0
                    dl = (A * T + 1) * d
                    for t in range(T):
                        for a in range(A):
                            v = u[x, a, t]
                            dl += _nlp(v * (f + 1.0), 0.0, sn) - _nlp(v, 0.0, so)
                            dv[a] = f * v
                        c, ubuf[x, t] = _slice_delta(x, t, dv, eta, mrate, y, P, live, agg, agg_live,
                                                     lam_agg, constraint, tbuf[t])
                        dl += c
                    if ui[j] < dl:
                        for t in range(T):
                            for a in range(A):
                                dv[a] = f * u[x, a, t]
                            _slice_apply(x, t, dv, eta, mrate, lam_agg, ubuf[x, t], tbuf[t])
                            for a in range(A):
                                u[x, a, t] *= f + 1.0
                        sx[x] = sn
                        lp += dl - (A * T + 1) * d
                        acc[j] += 1
        if save_at[it]:
            saved[n_saved, :] = theta
            saved_lp[n_saved] = lp
            n_saved += 1
    return lp
