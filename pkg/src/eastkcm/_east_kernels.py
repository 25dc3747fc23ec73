"""JIT kernels for East dynamics.

Two schedulers live here:

* ``gillespie`` only draws legal rings: it keeps the set of sites whose
  left neighbour is 0 and picks one uniformly at total rate ``|U|``.
* ``full_clock`` draws every ring of every site of a fixed window
  (global rate ``n``, uniform site, one coin per ring), so several
  replicas can be driven by the same graphical construction.

Indices inside the kernels are buffer-relative; absolute site = lo + index.
"""

import numpy as np
from numba import njit

NO_FRONT = -(2 ** 62)

STATUS_OK = 0
STATUS_MEMORY = 1


@njit(cache=True)
def _bit_at(s, idx, hi_idx, left_spin):
    if idx < 0:
        return left_spin if idx == -1 else 1
    if idx > hi_idx:
        return 1
    return s[idx]


@njit(cache=True)
def _rebuild_unconstrained(s, n_active, left_spin, uset, pos):
    for i in range(pos.shape[0]):
        pos[i] = -1
    nu = 0
    if n_active > 0 and left_spin == 0:
        uset[nu] = 0
        pos[0] = nu
        nu += 1
    for i in range(n_active - 1):
        if s[i] == 0:
            uset[nu] = i + 1
            pos[i + 1] = nu
            nu += 1
    return nu


@njit(cache=True)
def gillespie(rng, p, spins0, left_spin, grow, wkeep, mem_cap, horizon,
              front_times, snap_times, snap_w, win_times, win_a, win_b,
              lo0, hit_target, stop_at_hit):
    n0 = spins0.shape[0]
    if grow:
        cap = max(n0 + 64, 2 * wkeep + 64) if wkeep >= 0 else n0 + 1024
    else:
        cap = n0
    s = np.ones(cap, np.uint8)
    s[:n0] = spins0
    lo = lo0
    hi_idx = n0 - 1
    n_active = cap if grow else n0

    uset = np.empty(cap + 1, np.int64)
    pos = np.empty(cap + 1, np.int64)
    nu = _rebuild_unconstrained(s, n_active, left_spin, uset, pos)

    f = -1
    for i in range(n0 - 1, -1, -1):
        if s[i] == 0:
            f = i
            break

    n_front = front_times.shape[0]
    n_snap = snap_times.shape[0]
    n_win = win_times.shape[0]
    front_rec = np.empty(n_front, np.int64)
    snaps = np.ones((n_snap, snap_w), np.uint8)
    wins = np.ones((n_win, max(win_b - win_a + 1, 0)), np.uint8)
    i_front = 0
    i_snap = 0
    i_win = 0

    hit_time = -1.0
    if f >= 0 or left_spin == 0:
        if lo + f >= hit_target:
            hit_time = 0.0

    status = STATUS_OK
    nev = 0
    t = 0.0
    while True:
        if nu > 0:
            t_next = t + rng.standard_exponential() / nu
        else:
            t_next = np.inf
        if t_next > horizon:
            t_next = horizon + 1.0
        # record every sample strictly before the next event
        while i_front < n_front and front_times[i_front] < t_next:
            if f >= 0 or left_spin == 0:
                front_rec[i_front] = lo + f
            else:
                front_rec[i_front] = NO_FRONT
            i_front += 1
        while i_snap < n_snap and snap_times[i_snap] < t_next:
            for k in range(snap_w):
                snaps[i_snap, k] = _bit_at(s, f - 1 - k, hi_idx, left_spin)
            i_snap += 1
        while i_win < n_win and win_times[i_win] < t_next:
            for k in range(win_b - win_a + 1):
                wins[i_win, k] = _bit_at(s, win_a + k - lo, hi_idx, left_spin)
            i_win += 1
        if t_next > horizon:
            t = horizon
            break
        t = t_next
        nev += 1
        x = uset[int(rng.random() * nu)]
        c = 1 if rng.random() < p else 0
        if s[x] == c:
            continue
        s[x] = c
        y = x + 1
        if c == 0:
            if y < n_active and pos[y] < 0:
                pos[y] = nu
                uset[nu] = y
                nu += 1
            if x > f:
                f = x
                if hit_time < 0.0 and lo + f >= hit_target:
                    hit_time = t
                    if stop_at_hit:
                        break
        else:
            if y < n_active:
                k = pos[y]
                if k >= 0:
                    nu -= 1
                    last = uset[nu]
                    uset[k] = last
                    pos[last] = k
                    pos[y] = -1
            if x == f:
                g = x - 1
                while g >= 0 and s[g] == 1:
                    g -= 1
                f = g
        if grow:
            if f + 1 > hi_idx:
                hi_idx = f + 1
            if f + 3 > cap:
                if wkeep >= 0 and f - wkeep > 0:
                    sh = f - wkeep
                    left_spin = s[sh - 1]
                    m = cap - sh
                    s[:m] = s[sh:]
                    s[m:] = 1
                    f -= sh
                    lo += sh
                    hi_idx -= sh
                else:
                    new_cap = 2 * cap
                    if new_cap > mem_cap:
                        status = STATUS_MEMORY
                        break
                    s2 = np.ones(new_cap, np.uint8)
                    s2[:cap] = s
                    s = s2
                    cap = new_cap
                    uset = np.empty(cap + 1, np.int64)
                    pos = np.empty(cap + 1, np.int64)
                n_active = cap
                nu = _rebuild_unconstrained(s, n_active, left_spin, uset, pos)

    final = s[:hi_idx + 1].copy()
    return (front_rec, snaps, wins, hit_time, final, lo, left_spin, f,
            status, nev, t, i_front, i_snap, i_win)


@njit(cache=True)
def full_clock(rng, p, S, n_user, left_spin, horizon, sample_times,
               ones_row, stop_when_done):
    R = S.shape[0]
    n = S.shape[1]
    disagree = np.zeros(n, np.bool_)
    n_dis = 0
    for x in range(n):
        for r in range(1, n_user):
            if S[r, x] != S[0, x]:
                disagree[x] = True
                n_dis += 1
                break
    coal = 0.0 if n_dis == 0 else -1.0
    tau = -1.0
    if ones_row >= 0 and S[ones_row, n - 1] == 0:
        tau = 0.0
    n_samp = sample_times.shape[0]
    samples = np.empty((n_samp, R, n), np.uint8)
    i_s = 0
    t = 0.0
    nev = 0
    while True:
        t_next = t + rng.standard_exponential() / n
        while i_s < n_samp and sample_times[i_s] < t_next and sample_times[i_s] <= horizon:
            samples[i_s] = S
            i_s += 1
        if t_next > horizon:
            t = horizon
            break
        t = t_next
        nev += 1
        x = int(rng.random() * n)
        c = 1 if rng.random() < p else 0
        for r in range(R):
            if x == 0:
                legal = left_spin == 0
            else:
                legal = S[r, x - 1] == 0
            if legal:
                S[r, x] = c
        was = disagree[x]
        now = False
        for r in range(1, n_user):
            if S[r, x] != S[0, x]:
                now = True
                break
        if was != now:
            disagree[x] = now
            n_dis += 1 if now else -1
        if coal < 0.0 and n_dis == 0:
            coal = t
        if tau < 0.0 and ones_row >= 0 and S[ones_row, n - 1] == 0:
            tau = t
        if stop_when_done and coal >= 0.0 and (tau >= 0.0 or ones_row < 0):
            break
    return coal, tau, samples[:i_s], nev, t


@njit(cache=True)
def hitting_times(rng, p, L, n_rep):
    """tau(L) for n_rep independent replicas of the East chain on [1, L]
    started from all ones (frozen zero at 0)."""
    out = np.empty(n_rep)
    s = np.ones(L, np.uint8)
    uset = np.empty(L + 1, np.int64)
    pos = np.empty(L + 1, np.int64)
    for r in range(n_rep):
        s[:] = 1
        for i in range(L + 1):
            pos[i] = -1
        uset[0] = 0
        pos[0] = 0
        nu = 1
        f = -1
        t = 0.0
        while True:
            t += rng.standard_exponential() / nu
            x = uset[int(rng.random() * nu)]
            c = 1 if rng.random() < p else 0
            if s[x] == c:
                continue
            s[x] = c
            y = x + 1
            if c == 0:
                if x == L - 1:
                    break
                if pos[y] < 0:
                    pos[y] = nu
                    uset[nu] = y
                    nu += 1
                if x > f:
                    f = x
            else:
                if y < L:
                    k = pos[y]
                    if k >= 0:
                        nu -= 1
                        last = uset[nu]
                        uset[k] = last
                        pos[last] = k
                        pos[y] = -1
        out[r] = t
    return out
