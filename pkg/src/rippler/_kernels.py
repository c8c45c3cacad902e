"""Compiled update loops for count-coupled models.

Everything here is nopython numba. The three built-in models export an
integer `kind` plus a flat parameter vector; `_fill_rate_matrix`
dispatches on `kind` so one compiled kernel serves all of them. States
are 1-based int64 throughout, matching the public data model; the -1
offsets appear only inside indexing expressions.

Randomness is consumed in a fixed documented order so that the pure
numpy reference implementations can replay a kernel run draw for draw:

rippler update:  T*N grid uniforms (t-major), then the tuner stream
                 (one uniform, plus one bounded integer when
                 exploring; nothing in fixed-kappa mode), then T*N
                 selection uniforms (t-major), then one uniform per
                 selected cell in descending-key order, then one
                 acceptance uniform.
iffbs update:    one bounded integer (individual), then T uniforms
                 (backward, t = T..1).
rjmcmc update:   one bounded integer (individual), one bounded integer
                 (move type, only when several types apply), one
                 bounded integer (event choice, only when moving with
                 two events), one bounded integer (new time, except for
                 removals), then one acceptance uniform.

Scalar draws inside numba advance the Generator bit stream exactly as
bulk draws of the same count do in numpy, which is what makes the
replay possible.
"""

import math

import numpy as np
from numba import njit

from .models import KIND_MULTISTRAIN, KIND_SEIR, KIND_SIR

NEG_INF = -math.inf
ONE_BELOW = np.nextafter(1.0, 0.0)

# rippler_chain / iffbs_chain status codes
OK = 0
ERR_NO_POSITIVE_WEIGHT = 1
ERR_INFEASIBLE_CURRENT = 2
ERR_INFEASIBLE_INITIAL = 3
ERR_EMPTY_FILTER_ROW = 4


@njit(cache=True, inline="always")
def _fill_rate_matrix(kind, params, counts, q):
    """Transition rate matrix at the given occupancy counts.

    Off-diagonal entries are event rates; diagonals close each row to
    zero sum.
    """
    S = q.shape[0]
    for a in range(S):
        for b in range(S):
            q[a, b] = 0.0
    if kind == KIND_SIR:
        q[0, 1] = params[0] * counts[1]
        q[1, 2] = params[1]
    elif kind == KIND_SEIR:
        E = S - 3
        q[0, 1] = params[0] * counts[S - 2]
        for i in range(E):
            q[1 + i, 2 + i] = params[2 + i]
        q[S - 2, S - 1] = params[1]
    else:
        M = S - 1
        delta = params[0]
        for i in range(M):
            q[0, 1 + i] = params[1 + i] * counts[1 + i]
        for i in range(M):
            q[1 + i, 0] = params[1 + M + i]
            for k in range(M):
                if k != i:
                    q[1 + i, 1 + k] = delta * params[1 + k] * counts[1 + k]
    for a in range(S):
        tot = 0.0
        for b in range(S):
            if b != a:
                tot += q[a, b]
        q[a, a] = -tot


@njit(cache=True, inline="always")
def _probs_from_rates(q, p):
    """Row-wise rate-to-probability conversion; competing exits share
    the leaving mass 1 - exp(q_rr) in proportion to their rates."""
    S = q.shape[0]
    for r in range(S):
        q_rr = q[r, r]
        if q_rr == 0.0:
            for s in range(S):
                p[r, s] = 0.0
            p[r, r] = 1.0
        else:
            stay = math.exp(q_rr)
            scale = (1.0 - stay) / (-q_rr)
            for s in range(S):
                p[r, s] = q[r, s] * scale
            p[r, r] = stay


@njit(cache=True, inline="always")
def _counts_of(snapshot, counts):
    S = counts.shape[0]
    for s in range(S):
        counts[s] = 0
    for j in range(snapshot.shape[0]):
        counts[snapshot[j] - 1] += 1


@njit(cache=True, inline="always")
def _g_scan(u, row):
    """Half-open inverse CDF: first state whose cumulative sum exceeds
    u; floating-point slack past the end returns the last positive
    state."""
    S = row.shape[0]
    acc = 0.0
    lastpos = 0
    for s in range(S):
        ps = row[s]
        if ps > 0.0:
            lastpos = s
        acc += ps
        if u < acc:
            return s + 1
    return lastpos + 1


@njit(cache=True, inline="always")
def _record_iteration(x, x_prev, counts_out, majd_abs, majd_ind,
                      latent_out, store_latent, it):
    T, N = x.shape
    S = counts_out.shape[2]
    for t in range(T):
        for s in range(S):
            counts_out[it, t, s] = 0
        for j in range(N):
            counts_out[it, t, x[t, j] - 1] += 1
    d_abs = 0.0
    d_ind = 0.0
    for t in range(T):
        for j in range(N):
            diff = x[t, j] - x_prev[t, j]
            if diff != 0:
                d_ind += 1.0
                d_abs += abs(diff)
            x_prev[t, j] = x[t, j]
    majd_abs[it] = d_abs
    majd_ind[it] = d_ind
    if store_latent:
        for t in range(T):
            for j in range(N):
                latent_out[it, t, j] = x[t, j]


@njit(cache=True)
def prob_matrix_jit(kind, params, counts):
    """One-step transition probability matrix for the given counts;
    test hook mirroring the Python model method."""
    S = counts.shape[0]
    q = np.empty((S, S))
    p = np.empty((S, S))
    _fill_rate_matrix(kind, params, counts, q)
    _probs_from_rates(q, p)
    return p


@njit(cache=True)
def rippler_chain(kind, params, pinit, logf, fobs, x, data_informed,
                  iterations, latent_updates, fixed_kappa,
                  epsilon, kappa_max, target_rate,
                  rng, rng_tuner, tuner_prop, tuner_acc,
                  counts_out, majd_abs, majd_ind, latent_out, store_latent,
                  trace_kappa, trace_kappa_eff, trace_accepted, trace_ripple,
                  trace_logratio, trace_explored, trace_earliest_flip):
    """Run `iterations` x `latent_updates` Rippler proposals in place.

    Implements the non-centred single-site-to-many-site move: bound the
    uniform grid cell-wise around the current states, redraw a few
    cells outside their bounds (an ordered weighted
    without-replacement draw, weight = complement mass), and push the
    edit forward through the deterministic reconstruction, letting
    downstream cells ripple. The acceptance ratio pairs each forward
    selection order with the same order in reverse, giving a product of
    remaining-weight ratios that collapses to W / W* when one cell is
    redrawn. With `data_informed` the rows are tilted by the
    destination emission likelihood and the likelihood term is replaced
    by normaliser sums.

    Returns a status code; nonzero means the chain stopped before
    completing (see module constants).
    """
    T, N = x.shape
    S = pinit.shape[1]

    low = np.empty((T, N))
    upp = np.empty((T, N))
    u = np.empty((T, N))
    x_star = np.empty((T, N), np.int64)
    x_prev = x.copy()
    q = np.empty((S, S))
    p = np.empty((S, S))
    counts = np.empty(S, np.int64)
    row = np.empty(S)
    init_rows = np.empty((N, S))
    nsel = kappa_max if fixed_kappa == 0 else max(kappa_max, fixed_kappa)
    sel_t = np.empty(nsel, np.int64)
    sel_j = np.empty(nsel, np.int64)
    sel_key = np.empty(nsel)
    sel_w = np.empty(nsel)
    sel_w_star = np.empty(nsel)
    sel_u_orig = np.empty(nsel)
    sel_mask = np.zeros((T, N), np.uint8)

    # initial rows never depend on the latent matrix: build once
    for j in range(N):
        if data_informed:
            c = 0.0
            for s in range(S):
                c += pinit[j, s] * fobs[0, j, s]
            if c <= 0.0:
                return ERR_INFEASIBLE_INITIAL
            for s in range(S):
                init_rows[j, s] = pinit[j, s] * fobs[0, j, s] / c
        else:
            for s in range(S):
                init_rows[j, s] = pinit[j, s]

    upd = 0
    for it in range(iterations):
        for rep in range(latent_updates):
            # ---- bounds of the current grid, total selection weight,
            # ---- and (data-informed) normaliser log-sum
            W = 0.0
            sum_logc = 0.0
            for j in range(N):
                xx = x[0, j] - 1
                lo = 0.0
                for s in range(xx):
                    lo += init_rows[j, s]
                hi = lo + init_rows[j, xx]
                low[0, j] = lo
                upp[0, j] = hi
                W += 1.0 - (hi - lo)
            for t in range(1, T):
                _counts_of(x[t - 1], counts)
                _fill_rate_matrix(kind, params, counts, q)
                _probs_from_rates(q, p)
                for j in range(N):
                    r = x[t - 1, j] - 1
                    xx = x[t, j] - 1
                    if data_informed:
                        c = 0.0
                        for s in range(S):
                            c += p[r, s] * fobs[t, j, s]
                        if c <= 0.0:
                            return ERR_INFEASIBLE_CURRENT
                        sum_logc += math.log(c)
                        lo = 0.0
                        for s in range(xx):
                            lo += p[r, s] * fobs[t, j, s] / c
                        hi = lo + p[r, xx] * fobs[t, j, xx] / c
                    else:
                        lo = 0.0
                        for s in range(xx):
                            lo += p[r, s]
                        hi = lo + p[r, xx]
                    low[t, j] = lo
                    upp[t, j] = hi
                    W += 1.0 - (hi - lo)

            # ---- materialise the grid inside its bounds
            for t in range(T):
                for j in range(N):
                    u[t, j] = low[t, j] + rng.random() * (upp[t, j] - low[t, j])

            # ---- move size
            explored = False
            if fixed_kappa > 0:
                kappa = fixed_kappa
            elif rng_tuner.random() < epsilon:
                kappa = int(rng_tuner.integers(1, kappa_max + 1))
                explored = True
            else:
                kappa = 1
                best = abs(tuner_acc[0] / tuner_prop[0] - target_rate)
                for k in range(1, kappa_max):
                    d = abs(tuner_acc[k] / tuner_prop[k] - target_rate)
                    if d < best:
                        best = d
                        kappa = k + 1

            # ---- select cells: top-kappa exponential-race keys,
            # ---- weight = complement mass, zero-weight cells excluded
            kappa_eff = 0
            for t in range(T):
                for j in range(N):
                    rkey = rng.random()
                    w = 1.0 - (upp[t, j] - low[t, j])
                    if w <= 0.0:
                        continue
                    key = math.log(rkey) / w
                    if kappa_eff < kappa:
                        pos = kappa_eff
                        kappa_eff += 1
                    elif key > sel_key[kappa - 1]:
                        pos = kappa - 1
                    else:
                        continue
                    while pos > 0 and sel_key[pos - 1] < key:
                        sel_key[pos] = sel_key[pos - 1]
                        sel_t[pos] = sel_t[pos - 1]
                        sel_j[pos] = sel_j[pos - 1]
                        pos -= 1
                    sel_key[pos] = key
                    sel_t[pos] = t
                    sel_j[pos] = j
            if kappa_eff == 0:
                return ERR_NO_POSITIVE_WEIGHT

            # ---- redraw the selected cells outside their bounds
            t_min = T
            for m in range(kappa_eff):
                tm = sel_t[m]
                jm = sel_j[m]
                lo = low[tm, jm]
                hi = upp[tm, jm]
                sel_w[m] = 1.0 - (hi - lo)
                sel_u_orig[m] = u[tm, jm]
                sel_mask[tm, jm] = 1
                v = rng.random() * (1.0 - (hi - lo))
                if v < lo:
                    u[tm, jm] = v
                else:
                    # hi + (v - lo) can round up to exactly 1.0 when the
                    # complement is nearly the whole interval; keep the
                    # grid inside [0, 1)
                    unew = hi + (v - lo)
                    if unew >= 1.0:
                        unew = ONE_BELOW
                    u[tm, jm] = unew
                if tm < t_min:
                    t_min = tm

            # ---- reconstruct the proposal forward through the edit
            Wstar = 0.0
            sum_logc_star = 0.0
            dlogf = 0.0
            feasible = True
            reverse_ok = True
            pos_star = 0
            for j in range(N):
                s_new = _g_scan(u[0, j], init_rows[j])
                x_star[0, j] = s_new
                w_new = 1.0 - init_rows[j, s_new - 1]
                Wstar += w_new
                if w_new > 0.0:
                    pos_star += 1
                if sel_mask[0, j] == 1:
                    for m in range(kappa_eff):
                        if sel_t[m] == 0 and sel_j[m] == j:
                            sel_w_star[m] = w_new
                            # the reverse move must redraw this cell's
                            # original value, which lives outside its
                            # interval; inside means the reverse path
                            # has density zero
                            lo_star = 0.0
                            for s in range(s_new - 1):
                                lo_star += init_rows[j, s]
                            hi_star = lo_star + init_rows[j, s_new - 1]
                            if lo_star <= sel_u_orig[m] < hi_star:
                                reverse_ok = False
                if not data_informed:
                    dlogf += logf[0, j, s_new - 1] - logf[0, j, x[0, j] - 1]
            for t in range(1, T):
                if not feasible:
                    break
                _counts_of(x_star[t - 1], counts)
                _fill_rate_matrix(kind, params, counts, q)
                _probs_from_rates(q, p)
                for j in range(N):
                    r = x_star[t - 1, j] - 1
                    if data_informed:
                        c = 0.0
                        for s in range(S):
                            c += p[r, s] * fobs[t, j, s]
                        if c <= 0.0:
                            feasible = False
                            break
                        sum_logc_star += math.log(c)
                        for s in range(S):
                            row[s] = p[r, s] * fobs[t, j, s] / c
                        s_new = _g_scan(u[t, j], row)
                        w_new = 1.0 - row[s_new - 1]
                    else:
                        s_new = _g_scan(u[t, j], p[r])
                        w_new = 1.0 - p[r, s_new - 1]
                        dlogf += logf[t, j, s_new - 1] - logf[t, j, x[t, j] - 1]
                    Wstar += w_new
                    if w_new > 0.0:
                        pos_star += 1
                    if sel_mask[t, j] == 1:
                        for m in range(kappa_eff):
                            if sel_t[m] == t and sel_j[m] == j:
                                sel_w_star[m] = w_new
                                lo_star = 0.0
                                if data_informed:
                                    for s in range(s_new - 1):
                                        lo_star += row[s]
                                    hi_star = lo_star + row[s_new - 1]
                                else:
                                    for s in range(s_new - 1):
                                        lo_star += p[r, s]
                                    hi_star = lo_star + p[r, s_new - 1]
                                if lo_star <= sel_u_orig[m] < hi_star:
                                    reverse_ok = False
                    x_star[t, j] = s_new
            for m in range(kappa_eff):
                sel_mask[sel_t[m], sel_j[m]] = 0

            # ---- acceptance
            ripple = 0
            earliest_flip = True
            if feasible:
                for t in range(T):
                    for j in range(N):
                        if x_star[t, j] != x[t, j]:
                            ripple += 1
                for m in range(kappa_eff):
                    if sel_t[m] == t_min and x_star[t_min, sel_j[m]] == x[t_min, sel_j[m]]:
                        earliest_flip = False
                # ordered without-replacement selection correction: at
                # each pick the remaining weight shrinks, and the
                # reverse move must pick the same cells in the same
                # order under the proposal's weights
                log_sel = 0.0
                acc_w = 0.0
                acc_w_star = 0.0
                for m in range(kappa_eff):
                    d = W - acc_w
                    d_star = Wstar - acc_w_star
                    if d <= 0.0 or d_star <= 0.0 or sel_w_star[m] <= 0.0:
                        log_sel = NEG_INF
                        break
                    log_sel += math.log(d) - math.log(d_star)
                    acc_w += sel_w[m]
                    acc_w_star += sel_w_star[m]
                # the reverse move requests the same size, so it selects
                # min(kappa, pos_star) cells; the paired reverse path
                # exists only when that matches the forward count
                if pos_star < kappa:
                    rev_eff = pos_star
                else:
                    rev_eff = kappa
                if log_sel == NEG_INF or not reverse_ok or rev_eff != kappa_eff:
                    logr = NEG_INF
                elif data_informed:
                    logr = sum_logc_star - sum_logc + log_sel
                else:
                    logr = dlogf + log_sel
            else:
                logr = NEG_INF
            a_draw = rng.random()
            accepted = feasible and (logr >= 0.0 or a_draw < math.exp(logr))
            if accepted:
                for t in range(T):
                    for j in range(N):
                        x[t, j] = x_star[t, j]

            if fixed_kappa == 0:
                tuner_prop[kappa - 1] += 1.0
                if accepted:
                    tuner_acc[kappa - 1] += 1.0
            trace_kappa[upd] = kappa
            trace_kappa_eff[upd] = kappa_eff
            trace_accepted[upd] = 1 if accepted else 0
            trace_ripple[upd] = ripple
            trace_logratio[upd] = logr
            trace_explored[upd] = 1 if explored else 0
            trace_earliest_flip[upd] = 1 if earliest_flip else 0
            upd += 1

        _record_iteration(x, x_prev, counts_out, majd_abs, majd_ind,
                          latent_out, store_latent, it)
    return OK


@njit(cache=True)
def iffbs_chain(kind, params, pinit, logf, fobs, x,
                iterations, latent_updates, rng,
                counts_out, majd_abs, majd_ind, latent_out, store_latent,
                trace_changed):
    """Single-individual forward-filter backward-sampler, conditioning
    each chosen column on every other individual's realised
    transitions.

    The filter row at time t carries (a) the individual's emission, (b)
    its own transition from the previous filter row, and (c) the
    coupling weight: the probability of everyone else's observed t ->
    t+1 moves given each candidate state. Coupling weights are computed
    in log space and shifted before exponentiation; each filter row is
    normalised in place. The backward pass needs no extra coupling
    factor: it is already inside the filter.
    """
    T, N = x.shape
    S = pinit.shape[1]

    counts_t = np.zeros((T, S), np.int64)
    for t in range(T):
        for j in range(N):
            counts_t[t, x[t, j] - 1] += 1

    filt = np.empty((T, S))
    rowbank = np.empty((max(T - 1, 1), S, S))
    logC = np.empty(S)
    a = np.empty(S)
    b = np.empty(S)
    q = np.empty((S, S))
    p = np.empty((S, S))
    pl = np.empty((S, S))
    cw = np.empty(S, np.int64)
    x_prev = x.copy()

    upd = 0
    for it in range(iterations):
        for rep in range(latent_updates):
            i = int(rng.integers(0, N))

            # ---- forward filter over candidate states of column i
            for t in range(T - 1):
                maxlc = NEG_INF
                for r in range(S):
                    for s in range(S):
                        cw[s] = counts_t[t, s]
                    cw[x[t, i] - 1] -= 1
                    cw[r] += 1
                    _fill_rate_matrix(kind, params, cw, q)
                    _probs_from_rates(q, p)
                    for aa in range(S):
                        for bb in range(S):
                            v = p[aa, bb]
                            pl[aa, bb] = math.log(v) if v > 0.0 else NEG_INF
                    lc = 0.0
                    for j in range(N):
                        if j != i:
                            lc += pl[x[t, j] - 1, x[t + 1, j] - 1]
                    logC[r] = lc
                    if lc > maxlc:
                        maxlc = lc
                    for s in range(S):
                        rowbank[t, r, s] = p[r, s]
                if t == 0:
                    for r in range(S):
                        a[r] = pinit[i, r] * fobs[0, i, r]
                else:
                    for s in range(S):
                        acc = 0.0
                        for r in range(S):
                            acc += filt[t - 1, r] * rowbank[t - 1, r, s]
                        a[s] = acc * fobs[t, i, s]
                tot = 0.0
                for r in range(S):
                    if logC[r] == NEG_INF or a[r] == 0.0:
                        a[r] = 0.0
                    else:
                        a[r] *= math.exp(logC[r] - maxlc)
                    tot += a[r]
                if tot <= 0.0:
                    return ERR_EMPTY_FILTER_ROW
                for r in range(S):
                    filt[t, r] = a[r] / tot
            # final time point: emission only
            tot = 0.0
            if T == 1:
                for s in range(S):
                    b[s] = pinit[i, s] * fobs[0, i, s]
                    tot += b[s]
            else:
                for s in range(S):
                    acc = 0.0
                    for r in range(S):
                        acc += filt[T - 2, r] * rowbank[T - 2, r, s]
                    b[s] = acc * fobs[T - 1, i, s]
                    tot += b[s]
            if tot <= 0.0:
                return ERR_EMPTY_FILTER_ROW
            for s in range(S):
                filt[T - 1, s] = b[s] / tot

            # ---- backward sampling, replacing column i in place
            changed = 0
            s_new = _g_scan(rng.random(), filt[T - 1])
            if s_new != x[T - 1, i]:
                changed += 1
                counts_t[T - 1, x[T - 1, i] - 1] -= 1
                counts_t[T - 1, s_new - 1] += 1
                x[T - 1, i] = s_new
            for t in range(T - 2, -1, -1):
                tot = 0.0
                for r in range(S):
                    b[r] = filt[t, r] * rowbank[t, r, x[t + 1, i] - 1]
                    tot += b[r]
                if tot <= 0.0:
                    return ERR_EMPTY_FILTER_ROW
                for r in range(S):
                    b[r] /= tot
                s_new = _g_scan(rng.random(), b)
                if s_new != x[t, i]:
                    changed += 1
                    counts_t[t, x[t, i] - 1] -= 1
                    counts_t[t, s_new - 1] += 1
                    x[t, i] = s_new

            trace_changed[upd] = changed
            upd += 1

        _record_iteration(x, x_prev, counts_out, majd_abs, majd_ind,
                          latent_out, store_latent, it)
    return OK


@njit(cache=True, inline="always")
def _sir_log_prior(beta, gamma, pinit, x):
    """log of the joint path density under the SIR dynamics; -inf for
    any impossible step."""
    T, N = x.shape
    total = 0.0
    for j in range(N):
        pv = pinit[j, x[0, j] - 1]
        if pv <= 0.0:
            return NEG_INF
        total += math.log(pv)
    p_ii = math.exp(-gamma)
    p_ir = 1.0 - p_ii
    for t in range(1, T):
        icount = 0
        for j in range(N):
            if x[t - 1, j] == 2:
                icount += 1
        p_ss = math.exp(-beta * icount)
        p_si = 1.0 - p_ss
        for j in range(N):
            prev = x[t - 1, j]
            cur = x[t, j]
            if prev == 1:
                if cur == 1:
                    pv = p_ss
                elif cur == 2:
                    pv = p_si
                else:
                    return NEG_INF
            elif prev == 2:
                if cur == 2:
                    pv = p_ii
                elif cur == 3:
                    pv = p_ir
                else:
                    return NEG_INF
            else:
                if cur != 3:
                    return NEG_INF
                pv = 1.0
            if pv <= 0.0:
                return NEG_INF
            total += math.log(pv)
    return total


@njit(cache=True, inline="always")
def _n_applicable(a, b, T):
    """Number of applicable move types for an individual with infection
    time a and recovery time b (0 = absent): add-only for the fully
    susceptible, move/remove plus add-recovery (when a < T) for the
    infected, move/remove for the recovered."""
    if a == 0:
        return 1
    if b == 0:
        return 3 if a < T else 2
    return 2


@njit(cache=True, inline="always")
def _write_sir_column(x, j, a, b):
    T = x.shape[0]
    for t in range(T):
        tt = t + 1
        if a == 0 or tt < a:
            x[t, j] = 1
        elif b == 0 or tt < b:
            x[t, j] = 2
        else:
            x[t, j] = 3


@njit(cache=True)
def rjmcmc_chain(beta, gamma, pinit, logf, x, inf_t, rec_t,
                 iterations, latent_updates, rng,
                 counts_out, majd_abs, majd_ind, latent_out, store_latent,
                 trace_accepted, trace_logratio, trace_changed):
    """Reversible-jump sampler on per-individual SIR event times.

    Each update picks an individual, then one applicable move type
    uniformly: shift an existing event time (uniform over its feasible
    window), add the next missing event, or remove the last one. The
    acceptance ratio combines the full path density (every individual's
    transitions re-enter through the changed infective counts), the
    individual's own observation terms, and the discrete
    dimension-matching proposal ratio.
    """
    T, N = x.shape
    col_save = np.empty(T, np.int64)
    x_prev = x.copy()
    log_prior_cur = _sir_log_prior(beta, gamma, pinit, x)
    if log_prior_cur == NEG_INF:
        return ERR_INFEASIBLE_INITIAL

    upd = 0
    for it in range(iterations):
        for rep in range(latent_updates):
            j = int(rng.integers(0, N))
            a = inf_t[j]
            b = rec_t[j]
            n_app = _n_applicable(a, b, T)

            # move types in fixed order: move, add, remove
            if a == 0:
                mtype = 1
            else:
                pick = int(rng.integers(0, n_app)) if n_app > 1 else 0
                if b == 0 and a >= T:
                    mtype = 0 if pick == 0 else 2
                elif b == 0:
                    mtype = pick
                else:
                    mtype = 0 if pick == 0 else 2

            a2 = a
            b2 = b
            log_q = 0.0
            if mtype == 0:
                # shift one existing event inside its feasible window;
                # windows and the event sub-draw match in reverse, but
                # the applicable-type count can change (an unrecovered
                # infection moving onto or off the final time loses or
                # gains add-recovery)
                event = int(rng.integers(0, 2)) if b > 0 else 0
                if event == 0:
                    hi = b - 1 if b > 0 else T
                    a2 = 1 + int(rng.integers(0, hi))
                else:
                    b2 = a + 1 + int(rng.integers(0, T - a))
                log_q = math.log(n_app / _n_applicable(a2, b2, T))
            elif mtype == 1:
                if a == 0:
                    a2 = 1 + int(rng.integers(0, T))
                    n_app2 = _n_applicable(a2, 0, T)
                    log_q = math.log(T * n_app / n_app2)
                else:
                    b2 = a + 1 + int(rng.integers(0, T - a))
                    n_app2 = _n_applicable(a, b2, T)
                    log_q = math.log((T - a) * n_app / n_app2)
            else:
                if b > 0:
                    b2 = 0
                    n_app2 = _n_applicable(a, 0, T)
                    log_q = -math.log((T - a) * n_app2 / n_app)
                else:
                    a2 = 0
                    n_app2 = _n_applicable(0, 0, T)
                    log_q = -math.log(T * n_app2 / n_app)

            for t in range(T):
                col_save[t] = x[t, j]
            _write_sir_column(x, j, a2, b2)
            log_prior_star = _sir_log_prior(beta, gamma, pinit, x)
            dlogf = 0.0
            for t in range(T):
                dlogf += logf[t, j, x[t, j] - 1] - logf[t, j, col_save[t] - 1]
            logr = log_prior_star - log_prior_cur + dlogf + log_q

            a_draw = rng.random()
            accepted = logr >= 0.0 or a_draw < math.exp(logr)
            changed = 0
            if accepted:
                for t in range(T):
                    if x[t, j] != col_save[t]:
                        changed += 1
                inf_t[j] = a2
                rec_t[j] = b2
                log_prior_cur = log_prior_star
            else:
                for t in range(T):
                    x[t, j] = col_save[t]

            trace_accepted[upd] = 1 if accepted else 0
            trace_logratio[upd] = logr
            trace_changed[upd] = changed
            upd += 1

        _record_iteration(x, x_prev, counts_out, majd_abs, majd_ind,
                          latent_out, store_latent, it)
    return OK
