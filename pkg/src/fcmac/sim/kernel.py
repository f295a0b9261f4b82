"""Contention kernel.

Advances the BSS one contention round at a time (idle period, then the busy
period it ends in).  Idle slot boundaries are not enumerated: every station
that is counting down transmits at boundary ``join + counter`` of the current
idle period, so the round's first transmission is the minimum over stations.

The kernel is resumable.  It returns to the caller when agents must choose a
backoff, when a station's random stream runs dry, or when the output buffers
are full, and picks up where it stopped on the next call.  All state lives in
the arrays passed in.
"""
import numpy as np

from .._jit import njit

# station columns
S_AGENT = 0
S_CW = 1
S_STAGE = 2
S_CTR = 3          # backoff counter, -1 while an agent's choice is pending
S_JOIN = 4         # boundary index at which the station joins this idle period
S_CUM = 5          # idle slots counted in the current access attempt
S_DEFER = 6        # deferrals in the current access attempt
S_NEED = 7         # 0 none, 1 decide at the end of DIFS, 2 decide at ACK timeout
S_STEP = 8         # trajectory step of the agent's latest decision
S_LAST_ACK = 9     # end of this station's latest ACK, -1 if none
S_BUSY_AT_ACK = 10
S_LAST_TX = 11     # start of this station's latest transmission, -1 if none
S_FAIL_T = 12      # time the latest failure was declared, -1 if none
S_BUSY_AT_FAIL = 13
S_FAIL_PENDING = 14
S_PREV_FAIL_T = 15
S_PREV_BUSY_AT_FAIL = 16
S_ATTEMPTS = 17
S_SUCC = 18
S_COLL = 19
S_RNG_POS = 20
S_NCOL = 21

# global scalars
G_PHASE = 0
G_IDLE = 1         # start of the current idle period
G_GRID = 2         # first slot boundary (idle start + DIFS)
G_DEC_T = 3        # timestamp of the pending decision batch
G_BUSY = 4         # cumulative busy time
G_BUSY_WU = 5      # cumulative busy time at the end of warm-up, -1 until reached
G_NREC = 6
G_NEV = 7
G_LAST_TXEND = 8
G_NCOL = 9

# parameters
P_SLOT = 0
P_SIFS = 1
P_DIFS = 2
P_ACK = 3
P_ACK_TIMEOUT = 4
P_AIRTIME = 5
P_PAYLOAD = 6
P_CW_MIN = 7
P_CW_MAX = 8
P_WARMUP = 9
P_END = 10
P_JOIN_AFTER_COLL = 11
P_LOG = 12
P_BUSY_SLOT = 13
P_NCOL = 14

# record columns
R_STATION = 0
R_START = 1
R_END = 2
R_OUTCOME = 3      # 1 success, 2 collision
R_CW = 4
R_CUM = 5
R_STEP = 6
R_NCOL = 7

OUT_SUCCESS = 1
OUT_COLLISION = 2

# event kinds (same ranks as events.EventKind)
E_TX_END = 0
E_ACK_END = 1
E_ACK_TIMEOUT = 2
E_DEFER_END = 3
E_TX_START = 5
E_ACK_START = 6

PH_IDLE = 0
PH_AFTER_GRID = 1
PH_AFTER_TIMEOUT = 2

ST_DONE = 0
ST_DECIDE = 1
ST_NEED_RNG = 2
ST_NEED_SPACE = 3

NEVER = np.int64(1) << np.int64(62)


@njit
def _mark_warmup(g, p, t):
    if g[G_BUSY_WU] < 0 and t >= p[P_WARMUP]:
        g[G_BUSY_WU] = g[G_BUSY]


@njit
def _add_busy(g, p, a, b):
    if g[G_BUSY_WU] < 0 and b > p[P_WARMUP]:
        g[G_BUSY_WU] = g[G_BUSY] + max(0, p[P_WARMUP] - a)
    g[G_BUSY] += b - a


@njit
def _log(g, ev, t, kind, sid):
    k = g[G_NEV]
    ev[k, 0] = t
    ev[k, 1] = kind
    ev[k, 2] = sid
    g[G_NEV] = k + 1


@njit
def _draw(st, rand, i):
    pos = st[i, S_RNG_POS]
    st[i, S_CTR] = rand[i, pos] % (st[i, S_CW] + 1)
    st[i, S_RNG_POS] = pos + 1


@njit
def advance(st, g, p, rand, rec, recf, ev):
    n = st.shape[0]
    slot = p[P_SLOT]
    log = p[P_LOG] != 0
    is_tx = np.zeros(n, dtype=np.bool_)
    while True:
        ph = g[G_PHASE]
        if ph == PH_IDLE:
            if g[G_NREC] + n > rec.shape[0]:
                return ST_NEED_SPACE
            if log and g[G_NEV] + 5 * n + 2 > ev.shape[0]:
                return ST_NEED_SPACE
            for i in range(n):
                if st[i, S_AGENT] == 0 and st[i, S_RNG_POS] >= rand.shape[1]:
                    return ST_NEED_RNG
            grid = g[G_IDLE] + p[P_DIFS]
            g[G_GRID] = grid
            if grid >= p[P_END]:
                return ST_DONE
            if log:
                _log(g, ev, grid, E_DEFER_END, -1)
            g[G_PHASE] = PH_AFTER_GRID
            pending = False
            for i in range(n):
                if st[i, S_NEED] == 1:
                    pending = True
            if pending:
                _mark_warmup(g, p, grid)
                g[G_DEC_T] = grid
                return ST_DECIDE

        elif ph == PH_AFTER_GRID:
            grid = g[G_GRID]
            kmin = NEVER
            for i in range(n):
                if st[i, S_NEED] == 1:
                    return -1  # caller skipped a decision
                if st[i, S_CTR] >= 0:
                    k = st[i, S_JOIN] + st[i, S_CTR]
                    if k < kmin:
                        kmin = k
            t_busy = NEVER if kmin == NEVER else grid + kmin * slot
            t_fail = g[G_LAST_TXEND] + p[P_ACK_TIMEOUT]
            for i in range(n):
                if st[i, S_FAIL_PENDING] != 0:
                    st[i, S_BUSY_AT_FAIL] = g[G_BUSY] + min(max(0, t_fail - t_busy), p[P_AIRTIME])
                    st[i, S_FAIL_PENDING] = 0
            g[G_PHASE] = PH_AFTER_TIMEOUT
            waiting = False
            for i in range(n):
                if st[i, S_NEED] == 2:
                    waiting = True
            if waiting:
                if t_busy >= t_fail and t_fail < p[P_END]:
                    _mark_warmup(g, p, t_fail)
                    g[G_DEC_T] = t_fail
                    return ST_DECIDE
                # medium went busy before the timeout: choose at the next DIFS end
                for i in range(n):
                    if st[i, S_NEED] == 2:
                        st[i, S_NEED] = 1
                        st[i, S_JOIN] = 0

        else:
            grid = g[G_GRID]
            kmin = NEVER
            for i in range(n):
                if st[i, S_NEED] == 2:
                    return -1
                if st[i, S_CTR] >= 0:
                    k = st[i, S_JOIN] + st[i, S_CTR]
                    if k < kmin:
                        kmin = k
            if kmin == NEVER:
                return ST_DONE
            t0 = grid + kmin * slot
            if t0 >= p[P_END]:
                return ST_DONE
            _mark_warmup(g, p, t0)
            post = t0 >= p[P_WARMUP]

            ntx = 0
            for i in range(n):
                is_tx[i] = False
                if st[i, S_CTR] < 0:
                    continue
                waited = kmin - st[i, S_JOIN]
                if waited < 0:
                    # still inside its ACK timeout: not counting yet
                    st[i, S_JOIN] = 0
                    continue
                st[i, S_JOIN] = 0
                st[i, S_CUM] += waited
                st[i, S_CTR] -= waited
                if st[i, S_CTR] == 0:
                    is_tx[i] = True
                    ntx += 1
                else:
                    st[i, S_DEFER] += 1
                    if st[i, S_AGENT] != 0:
                        st[i, S_CTR] = -1
                        st[i, S_NEED] = 1
                    elif p[P_BUSY_SLOT] != 0:
                        # the deferral period counts as one generic slot
                        st[i, S_CTR] -= 1
                        st[i, S_CUM] += 1

            max_ratio = 0.0
            for i in range(n):
                if st[i, S_AGENT] != 0:
                    r = st[i, S_CUM] / st[i, S_CW]
                    if r > max_ratio:
                        max_ratio = r

            tx_end = t0 + p[P_AIRTIME]
            ack_start = tx_end
            ack_end = tx_end
            if ntx == 1:
                ack_start = tx_end + p[P_SIFS]
                ack_end = ack_start + p[P_ACK]
                _add_busy(g, p, t0, tx_end)
                _add_busy(g, p, ack_start, ack_end)
                busy_end = ack_end
                outcome = OUT_SUCCESS
            else:
                _add_busy(g, p, t0, tx_end)
                busy_end = tx_end
                outcome = OUT_COLLISION

            for i in range(n):
                if not is_tx[i]:
                    continue
                if post:
                    k = g[G_NREC]
                    rec[k, R_STATION] = i
                    rec[k, R_START] = t0
                    rec[k, R_END] = tx_end
                    rec[k, R_OUTCOME] = outcome
                    rec[k, R_CW] = st[i, S_CW]
                    rec[k, R_CUM] = st[i, S_CUM]
                    rec[k, R_STEP] = st[i, S_STEP] if st[i, S_AGENT] != 0 else -1
                    recf[k, 0] = st[i, S_CUM] / st[i, S_CW]
                    recf[k, 1] = max_ratio
                    g[G_NREC] = k + 1
                    st[i, S_ATTEMPTS] += 1
                if log:
                    _log(g, ev, t0, E_TX_START, i)
                    _log(g, ev, tx_end, E_TX_END, i)
                st[i, S_LAST_TX] = t0
                st[i, S_CUM] = 0
                st[i, S_DEFER] = 0
                st[i, S_STEP] = -1
                if outcome == OUT_SUCCESS:
                    if post:
                        st[i, S_SUCC] += 1
                    if log:
                        _log(g, ev, ack_start, E_ACK_START, i)
                        _log(g, ev, ack_end, E_ACK_END, i)
                    st[i, S_LAST_ACK] = ack_end
                    st[i, S_BUSY_AT_ACK] = g[G_BUSY]
                    st[i, S_CW] = p[P_CW_MIN]
                    st[i, S_STAGE] = 0
                    st[i, S_JOIN] = 0
                    if st[i, S_AGENT] != 0:
                        st[i, S_CTR] = -1
                        st[i, S_NEED] = 1
                    else:
                        _draw(st, rand, i)
                else:
                    if post:
                        st[i, S_COLL] += 1
                    t_fail = tx_end + p[P_ACK_TIMEOUT]
                    if log:
                        _log(g, ev, t_fail, E_ACK_TIMEOUT, i)
                    st[i, S_PREV_FAIL_T] = st[i, S_FAIL_T]
                    st[i, S_PREV_BUSY_AT_FAIL] = st[i, S_BUSY_AT_FAIL]
                    st[i, S_FAIL_T] = t_fail
                    st[i, S_FAIL_PENDING] = 1
                    st[i, S_CW] = min(2 * (st[i, S_CW] + 1) - 1, p[P_CW_MAX])
                    st[i, S_STAGE] += 1
                    st[i, S_JOIN] = p[P_JOIN_AFTER_COLL]
                    if st[i, S_AGENT] != 0:
                        st[i, S_CTR] = -1
                        st[i, S_NEED] = 2
                    else:
                        _draw(st, rand, i)
            g[G_LAST_TXEND] = tx_end
            g[G_IDLE] = busy_end
            g[G_PHASE] = PH_IDLE


@njit
def set_actions(st, stations, values, steps):
    """Install chosen backoff counters for agents awaiting a decision."""
    for k in range(stations.shape[0]):
        i = stations[k]
        st[i, S_CTR] = values[k]
        st[i, S_STEP] = steps[k]
        st[i, S_NEED] = 0


@njit
def observe(st, g, p, self_obs, pairs, active):
    """Fill observation arrays for every station at the pending decision time."""
    n = st.shape[0]
    now = g[G_DEC_T]
    busy = g[G_BUSY]
    if now >= p[P_WARMUP]:
        origin = p[P_WARMUP]
        busy_origin = g[G_BUSY_WU]
    else:
        origin = 0
        busy_origin = 0
    for j in range(n):
        if st[j, S_LAST_ACK] >= 0:
            d2lt = now - st[j, S_LAST_ACK]
            busy_since = busy - st[j, S_BUSY_AT_ACK]
        else:
            d2lt = now - origin
            busy_since = busy - busy_origin
        pairs[j, 0] = d2lt
        pairs[j, 1] = d2lt - busy_since
        active[j] = st[j, S_LAST_TX] >= 0 and st[j, S_LAST_TX] >= origin

        # a failure timestamped after `now` has not been declared yet
        fail_t = st[j, S_FAIL_T]
        busy_at_fail = st[j, S_BUSY_AT_FAIL]
        if fail_t > now:
            fail_t = st[j, S_PREV_FAIL_T]
            busy_at_fail = st[j, S_PREV_BUSY_AT_FAIL]
        if fail_t >= 0:
            since = now - fail_t
            ref = busy_at_fail
        else:
            since = now - origin
            ref = busy_origin
        self_obs[j, 0] = st[j, S_CW]
        self_obs[j, 1] = st[j, S_DEFER]
        self_obs[j, 2] = st[j, S_CUM]
        self_obs[j, 3] = since
        self_obs[j, 4] = since - (busy - ref)
