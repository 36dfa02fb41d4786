"""Compiled event-skipping kernel behind :func:`voltsim.memsim.simulate`.

All state lives in integer arrays so a run can pause at an epoch boundary,
hand control to a Python policy, and resume with new timings. The timing
rules mirror :mod:`voltsim.dram_core`; the command log this kernel can
record is replayed through that module in the test suite.
"""
from __future__ import annotations

import numpy as np
from numba import njit

INF = np.int64(1) << np.int64(62)

# scalar state slots
NOW, BUS_FREE, NEXT_REF_DUE, SEQ, REF_COUNT, DRAIN, REF_PENDING, NOPEN, RCOUNT, WCOUNT = range(10)
N_ACT, N_PRE, N_RD, N_WR, N_REF, OPEN_BANK_CYCLES, BUS_BUSY, ROW_HITS, ROW_MISSES = range(10, 19)
ERR_CORR, ERR_UNCORR, LOG_N, LOG_OVERFLOW, VIOL_CYCLE, VIOL_BANK, LAST_CMD = range(19, 26)
N_SCALARS = 26

# bank columns
B_OPEN, B_BUSY, B_LASTACT, B_RASU, B_CLS = range(5)
# core columns
C_NEXT, C_END, C_ARRIVE, C_OUT, C_INSNS, C_LASTISSUE, C_DONE, C_READS, C_WRITES, C_LASTCOMP = range(10)
N_CORE_COLS = 10
# queue columns
Q_VALID, Q_REQ, Q_SEQ, Q_MISS = range(4)
# parameter slots
(P_CL, P_BURST, P_RFC, P_REFI, P_MAXOUT, P_WBUF, P_DRAIN_HI, P_DRAIN_LO, P_CLOSED, P_REFRESH,
 P_STOP, P_RUN_TO_STOP, P_ERR, P_BINOMIAL, P_GROUPS, P_RET_LIMIT, P_LOG_CAP, P_SEED, P_REGION) = range(19)
N_PARAMS = 19

# command codes in the log
K_ACT, K_RD, K_WR, K_PRE, K_REF = range(5)

STATUS_STOP, STATUS_DONE, STATUS_TIMING, STATUS_REFRESH = 0, 1, 2, 3


def new_state(n_banks: int, n_cores: int, max_out: int, wbuf: int, groups: int, log_cap: int):
    S = np.zeros(N_SCALARS, dtype=np.int64)
    banks = np.zeros((n_banks, 5), dtype=np.int64)
    banks[:, B_OPEN] = -1
    banks[:, B_LASTACT] = -(10**12)
    cores = np.zeros((n_cores, N_CORE_COLS), dtype=np.int64)
    cores[:, C_DONE] = -1
    comp = np.full((n_cores, max_out), -1, dtype=np.int64)
    q = np.zeros((n_cores * max_out + wbuf, 4), dtype=np.int64)
    last_ref = np.zeros(max(groups, 1), dtype=np.int64)
    log = np.zeros((max(log_cap, 1), 4), dtype=np.int64)
    return S, banks, cores, comp, q, last_ref, log


@njit(cache=True)
def _log(S, log, cap, cycle, kind, bank, row):
    if cap == 0:
        return
    n = S[LOG_N]
    if n >= cap:
        S[LOG_OVERFLOW] = 1
        return
    log[n, 0] = cycle
    log[n, 1] = kind
    log[n, 2] = bank
    log[n, 3] = row
    S[LOG_N] = n + 1


@njit(cache=True)
def _inject(p, binomial, p_bit):
    """Return 0 (clean), 1 (corrected) or 2 (uncorrectable) for one line read."""
    if p <= 0.0 or np.random.random() >= p:
        return 0
    if binomial == 0:
        return 1
    while True:
        total = 0
        worst = 0
        for w in range(8):
            k = np.random.binomial(64, p_bit)
            total += k
            if k > worst:
                worst = k
        if total > 0:
            break
    return 1 if worst <= 1 else 2


@njit(cache=True)
def pick_command(now, S, banks, q, req_bank, req_row, req_wr, tcls, row_class, P, hitpend):
    """FR-FCFS choice among queued requests.

    Returns (slot, kind, earliest_any): slot -1 when nothing can issue at
    ``now``; kind 0 ACT, 1 column, 2 PRE, 3 idle PRE (closed page, slot is
    then the bank); earliest_any is the soonest cycle any candidate could
    issue.
    """
    nq = q.shape[0]
    use_writes = S[DRAIN] == 1 or S[RCOUNT] == 0
    cl = P[P_CL]
    nb = banks.shape[0]
    for b in range(nb):
        hitpend[b] = 0
    for s in range(nq):
        if q[s, Q_VALID] == 0:
            continue
        i = q[s, Q_REQ]
        if (req_wr[i] == 1) != use_writes:
            continue
        b = req_bank[i]
        if banks[b, B_OPEN] == req_row[i]:
            hitpend[b] = 1
    best_hit = -1
    best_hit_seq = INF
    best_other = -1
    best_other_seq = INF
    best_other_kind = 0
    earliest_any = INF
    for s in range(nq):
        if q[s, Q_VALID] == 0:
            continue
        i = q[s, Q_REQ]
        if (req_wr[i] == 1) != use_writes:
            continue
        b = req_bank[i]
        r = req_row[i]
        openrow = banks[b, B_OPEN]
        if openrow == r:
            e = max(now, banks[b, B_BUSY], S[BUS_FREE] - cl)
            if e < earliest_any:
                earliest_any = e
            if e <= now and q[s, Q_SEQ] < best_hit_seq:
                best_hit = s
                best_hit_seq = q[s, Q_SEQ]
        elif openrow >= 0:
            if hitpend[b] == 1:
                continue
            e = max(now, banks[b, B_BUSY], banks[b, B_RASU])
            if e < earliest_any:
                earliest_any = e
            if e <= now and q[s, Q_SEQ] < best_other_seq:
                best_other = s
                best_other_seq = q[s, Q_SEQ]
                best_other_kind = 2
        else:
            e = max(now, banks[b, B_BUSY])
            if e < earliest_any:
                earliest_any = e
            if e <= now and q[s, Q_SEQ] < best_other_seq:
                best_other = s
                best_other_seq = q[s, Q_SEQ]
                best_other_kind = 0
    if best_hit >= 0:
        return best_hit, 1, earliest_any
    if best_other >= 0:
        return best_other, best_other_kind, earliest_any
    if P[P_CLOSED] == 1:
        # close rows nobody in the active queue is waiting on
        for b in range(nb):
            if banks[b, B_OPEN] >= 0 and hitpend[b] == 0:
                pending_other = False
                for s in range(nq):
                    if q[s, Q_VALID] == 1 and req_bank[q[s, Q_REQ]] == b and req_row[q[s, Q_REQ]] == banks[b, B_OPEN]:
                        pending_other = True
                        break
                if pending_other:
                    continue
                e = max(now, banks[b, B_BUSY], banks[b, B_RASU])
                if e <= now:
                    return b, 3, earliest_any
                if e < earliest_any:
                    earliest_any = e
    return -1, 0, earliest_any


@njit(cache=True)
def run_kernel(S, banks, cores, comp, q, last_ref, log,
               req_gap, req_wr, req_bank, req_row,
               tcls, row_class, P, err_prob, p_bit):
    np.random.seed(P[P_SEED])
    nb = banks.shape[0]
    nc = cores.shape[0]
    nq = q.shape[0]
    maxout = P[P_MAXOUT]
    cl = P[P_CL]
    burst = P[P_BURST]
    rfc = P[P_RFC]
    refi = P[P_REFI]
    stop = P[P_STOP]
    log_cap = P[P_LOG_CAP]
    hitpend = np.zeros(nb, dtype=np.int64)
    now = S[NOW]
    while True:
        S[NOW] = now
        # read completions
        for c in range(nc):
            for k in range(maxout):
                t = comp[c, k]
                if t >= 0 and t <= now:
                    comp[c, k] = -1
                    cores[c, C_OUT] -= 1
                    if t > cores[c, C_LASTCOMP]:
                        cores[c, C_LASTCOMP] = t
        # core arrivals
        for c in range(nc):
            while cores[c, C_NEXT] < cores[c, C_END] and cores[c, C_ARRIVE] <= now:
                i = cores[c, C_NEXT]
                wr = req_wr[i] == 1
                if wr:
                    if S[WCOUNT] >= P[P_WBUF]:
                        break
                elif cores[c, C_OUT] >= maxout:
                    break
                slot = -1
                for s in range(nq):
                    if q[s, Q_VALID] == 0:
                        slot = s
                        break
                q[slot, Q_VALID] = 1
                q[slot, Q_REQ] = i
                q[slot, Q_SEQ] = S[SEQ]
                q[slot, Q_MISS] = 0
                S[SEQ] += 1
                if wr:
                    S[WCOUNT] += 1
                    cores[c, C_WRITES] += 1
                else:
                    S[RCOUNT] += 1
                    cores[c, C_OUT] += 1
                    cores[c, C_READS] += 1
                cores[c, C_INSNS] += req_gap[i]
                cores[c, C_LASTISSUE] = now
                cores[c, C_NEXT] = i + 1
                if i + 1 < cores[c, C_END]:
                    cores[c, C_ARRIVE] = now + req_gap[i + 1]
        # completion bookkeeping
        all_done = True
        for c in range(nc):
            if cores[c, C_NEXT] >= cores[c, C_END] and cores[c, C_OUT] == 0:
                if cores[c, C_DONE] < 0:
                    cores[c, C_DONE] = max(cores[c, C_LASTISSUE], cores[c, C_LASTCOMP])
            else:
                all_done = False
        if all_done and S[WCOUNT] == 0 and P[P_RUN_TO_STOP] == 0:
            return STATUS_DONE
        if now >= stop:
            return STATUS_STOP
        # write drain hysteresis
        if S[DRAIN] == 0 and S[WCOUNT] >= P[P_DRAIN_HI]:
            S[DRAIN] = 1
        elif S[DRAIN] == 1 and S[WCOUNT] <= P[P_DRAIN_LO]:
            S[DRAIN] = 0
        if P[P_REFRESH] == 1 and S[REF_PENDING] == 0 and now >= S[NEXT_REF_DUE]:
            S[REF_PENDING] = 1
        issued = False
        ctrl_next = INF
        if S[REF_PENDING] == 1:
            # close every bank, then refresh all of them together
            any_open = False
            for b in range(nb):
                if banks[b, B_OPEN] >= 0:
                    any_open = True
                    e = max(now, banks[b, B_BUSY], banks[b, B_RASU])
                    if e <= now and not issued:
                        rp = tcls[banks[b, B_CLS], 2]
                        banks[b, B_OPEN] = -1
                        banks[b, B_BUSY] = max(banks[b, B_BUSY], now + rp)
                        S[NOPEN] -= 1
                        S[N_PRE] += 1
                        _log(S, log, log_cap, now, K_PRE, b, -1)
                        issued = True
                    elif e > now and e < ctrl_next:
                        ctrl_next = e
            if not any_open:
                ready_at = now
                for b in range(nb):
                    if banks[b, B_BUSY] > ready_at:
                        ready_at = banks[b, B_BUSY]
                if ready_at <= now:
                    for b in range(nb):
                        banks[b, B_BUSY] = now + rfc
                    S[N_REF] += 1
                    _log(S, log, log_cap, now, K_REF, -1, -1)
                    g = S[REF_COUNT] % P[P_GROUPS]
                    if now - last_ref[g] > P[P_RET_LIMIT]:
                        S[VIOL_CYCLE] = now
                        S[VIOL_BANK] = g
                        return STATUS_REFRESH
                    last_ref[g] = now
                    S[REF_COUNT] += 1
                    S[NEXT_REF_DUE] += refi
                    S[REF_PENDING] = 0
                    issued = True
                else:
                    ctrl_next = ready_at
        else:
            slot, kind, e_any = pick_command(now, S, banks, q, req_bank, req_row, req_wr, tcls, row_class, P, hitpend)
            ctrl_next = e_any
            if slot >= 0:
                issued = True
                if kind == 3:
                    b = slot
                    rp = tcls[banks[b, B_CLS], 2]
                    banks[b, B_OPEN] = -1
                    banks[b, B_BUSY] = max(banks[b, B_BUSY], now + rp)
                    S[NOPEN] -= 1
                    S[N_PRE] += 1
                    _log(S, log, log_cap, now, K_PRE, b, -1)
                else:
                    i = q[slot, Q_REQ]
                    b = req_bank[i]
                    r = req_row[i]
                    if kind == 0:
                        cls = row_class[b, r] if P[P_REGION] == 1 else 0
                        if now < banks[b, B_BUSY] or banks[b, B_OPEN] >= 0:
                            S[VIOL_CYCLE] = now
                            S[VIOL_BANK] = b
                            return STATUS_TIMING
                        banks[b, B_OPEN] = r
                        banks[b, B_LASTACT] = now
                        banks[b, B_BUSY] = max(banks[b, B_BUSY], now + tcls[cls, 0])
                        banks[b, B_RASU] = now + tcls[cls, 1]
                        banks[b, B_CLS] = cls
                        S[NOPEN] += 1
                        S[N_ACT] += 1
                        q[slot, Q_MISS] = 1
                        _log(S, log, log_cap, now, K_ACT, b, r)
                    elif kind == 2:
                        if now < banks[b, B_BUSY] or now < banks[b, B_RASU]:
                            S[VIOL_CYCLE] = now
                            S[VIOL_BANK] = b
                            return STATUS_TIMING
                        rp = tcls[banks[b, B_CLS], 2]
                        banks[b, B_OPEN] = -1
                        banks[b, B_BUSY] = max(banks[b, B_BUSY], now + rp)
                        S[NOPEN] -= 1
                        S[N_PRE] += 1
                        q[slot, Q_MISS] = 1
                        _log(S, log, log_cap, now, K_PRE, b, -1)
                    else:
                        if now < banks[b, B_BUSY] or now + cl < S[BUS_FREE]:
                            S[VIOL_CYCLE] = now
                            S[VIOL_BANK] = b
                            return STATUS_TIMING
                        S[BUS_FREE] = now + cl + burst
                        S[BUS_BUSY] += burst
                        if q[slot, Q_MISS] == 1:
                            S[ROW_MISSES] += 1
                        else:
                            S[ROW_HITS] += 1
                        q[slot, Q_VALID] = 0
                        if req_wr[i] == 1:
                            S[WCOUNT] -= 1
                            S[N_WR] += 1
                            _log(S, log, log_cap, now, K_WR, b, r)
                        else:
                            S[RCOUNT] -= 1
                            S[N_RD] += 1
                            _log(S, log, log_cap, now, K_RD, b, r)
                            c = -1
                            # owning core: the one whose request range holds i
                            for cc in range(nc):
                                if cores[cc, C_END] > i and (cc == 0 or cores[cc - 1, C_END] <= i):
                                    c = cc
                                    break
                            for k in range(maxout):
                                if comp[c, k] < 0:
                                    comp[c, k] = now + cl + burst
                                    break
                            if P[P_ERR] == 1:
                                res = _inject(err_prob[b, r], P[P_BINOMIAL], p_bit)
                                if res == 1:
                                    S[ERR_CORR] += 1
                                elif res == 2:
                                    S[ERR_UNCORR] += 1
                S[LAST_CMD] = now
        # next event
        if issued:
            nxt = now + 1
        else:
            nxt = ctrl_next
            for c in range(nc):
                if cores[c, C_NEXT] < cores[c, C_END]:
                    a = cores[c, C_ARRIVE]
                    if a > now and a < nxt:
                        nxt = a
                for k in range(maxout):
                    t = comp[c, k]
                    if t > now and t < nxt:
                        nxt = t
            if P[P_REFRESH] == 1 and S[REF_PENDING] == 0 and S[NEXT_REF_DUE] < nxt:
                nxt = S[NEXT_REF_DUE]
            if nxt <= now:
                nxt = now + 1
        if nxt > stop:
            nxt = stop
        S[OPEN_BANK_CYCLES] += S[NOPEN] * (nxt - now)
        now = nxt
