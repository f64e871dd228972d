# cython: language_level=3
# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled simulation engine.

Mirrors _pyengine instruction for instruction with C state: splitmix64
streams, credit scheduler, Gilbert-Elliot chains and the streaming decoder's
reduced-row-echelon bookkeeping all run without interpreter overhead.  The
adaptation controller stays the shared Python object so both engines see
bit-identical share vectors.  Parity tests assert equal ledgers against the
pure-Python engine; anything observable must match exactly.
"""

from libc.math cimport INFINITY
from libc.stdint cimport int64_t, uint8_t, uint64_t
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy, memmove

from . import gf as _gfmod
from . import simcore as _simcore
from .channel import GILBERT_ELLIOT
from .ols import WindowMeasurement
from .scheduler import PacketScheduler

# ---------------------------------------------------------------------------
# GF(2^8) tables, copied from the Python module so both engines share one
# definition of the field
# ---------------------------------------------------------------------------

cdef uint8_t _EXP[510]
cdef uint8_t _LOG[256]

def _load_tables():
    cdef int i
    for i in range(510):
        _EXP[i] = _gfmod.EXP[i]
    for i in range(256):
        _LOG[i] = _gfmod.LOG[i]

_load_tables()


cdef inline int gf_mul(int a, int b) noexcept:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


cdef inline int gf_div(int a, int b) noexcept:
    # callers never pass b == 0
    if a == 0:
        return 0
    return _EXP[_LOG[a] + 255 - _LOG[b]]


# ---------------------------------------------------------------------------
# splitmix64, identical to rng.py
# ---------------------------------------------------------------------------

cdef uint64_t GOLDEN = <uint64_t>0x9E3779B97F4A7C15
cdef uint64_t _MUL1 = <uint64_t>0xBF58476D1CE4E5B9
cdef uint64_t _MUL2 = <uint64_t>0x94D049BB133111EB
cdef uint64_t _REPAIR_TAG = <uint64_t>0x74657472797372
cdef double _INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _finalize(uint64_t z) noexcept:
    z = (z ^ (z >> 30)) * _MUL1
    z = (z ^ (z >> 27)) * _MUL2
    return z ^ (z >> 31)


cdef inline uint64_t _mix64(uint64_t x) noexcept:
    return _finalize(x + GOLDEN)


cdef inline double _next_double(uint64_t* state) noexcept:
    state[0] = state[0] + GOLDEN
    return <double>(_finalize(state[0]) >> 11) * _INV_2_53


cdef inline uint64_t _repair_seed(uint64_t stream_seed, int64_t counter) noexcept:
    cdef uint64_t s = stream_seed
    s = _finalize(s ^ _mix64(_REPAIR_TAG))
    s = _finalize(s ^ _mix64(<uint64_t>counter))
    return s


cdef inline int _repair_coeff(uint64_t seed, int64_t seq) noexcept:
    return <int>(_finalize(seed ^ (<uint64_t>(seq + 1) * GOLDEN)) % 255) + 1


# ---------------------------------------------------------------------------
# per-path loss chain, identical to channel.LossProcess
# ---------------------------------------------------------------------------

cdef struct Chan:
    int ge
    int bad
    double plr
    double p
    double r
    uint64_t rng


cdef int _chan_init(Chan* c, object model, object seed) except -1:
    c.rng = <uint64_t>seed
    c.ge = 1 if model.kind == GILBERT_ELLIOT else 0
    c.plr = model.plr
    c.p = 0.0
    c.r = 1.0
    c.bad = 0
    if c.ge:
        c.p, c.r = model.transition_probs()
        if _next_double(&c.rng) < c.plr:
            c.bad = 1
    return 0


cdef inline int _chan_lost(Chan* c) noexcept:
    cdef double u = _next_double(&c.rng)
    cdef int lost
    if not c.ge:
        return u < c.plr
    lost = c.bad
    if c.bad == 0:
        if u < c.p:
            c.bad = 1
    else:
        if u < c.r:
            c.bad = 0
    return lost


# ---------------------------------------------------------------------------
# event rings (per-path data, acknowledgment reverse channel)
# ---------------------------------------------------------------------------

cdef struct Ev:
    double t
    int64_t enq
    int kind
    int64_t a
    int64_t b
    uint64_t c


cdef struct EvQ:
    Ev* buf
    int cap  # power of two
    int head
    int count


cdef int _evq_init(EvQ* q) except -1:
    q.cap = 1024
    q.head = 0
    q.count = 0
    q.buf = <Ev*>malloc(sizeof(Ev) * q.cap)
    if q.buf == NULL:
        raise MemoryError()
    return 0


cdef int _evq_push(EvQ* q, double t, int64_t enq, int kind,
                   int64_t a, int64_t b, uint64_t c) except -1:
    cdef Ev* nb
    cdef int i, idx
    if q.count == q.cap:
        nb = <Ev*>malloc(sizeof(Ev) * q.cap * 2)
        if nb == NULL:
            raise MemoryError()
        for i in range(q.count):
            nb[i] = q.buf[(q.head + i) & (q.cap - 1)]
        free(q.buf)
        q.buf = nb
        q.head = 0
        q.cap *= 2
    idx = (q.head + q.count) & (q.cap - 1)
    q.buf[idx].t = t
    q.buf[idx].enq = enq
    q.buf[idx].kind = kind
    q.buf[idx].a = a
    q.buf[idx].b = b
    q.buf[idx].c = c
    q.count += 1
    return 0


# ---------------------------------------------------------------------------
# sparse GF rows for the streaming decoder
# ---------------------------------------------------------------------------

cdef struct Row:
    int64_t pivot
    int n
    int64_t* seqs  # ascending
    uint8_t* vals


cdef inline int _vec_find(int64_t* seqs, int n, int64_t s) noexcept:
    cdef int lo = 0, hi = n - 1, mid
    while lo <= hi:
        mid = (lo + hi) >> 1
        if seqs[mid] < s:
            lo = mid + 1
        elif seqs[mid] > s:
            hi = mid - 1
        else:
            return mid
    return -1


cdef inline int _merge(int64_t* a_s, uint8_t* a_v, int an,
                       int64_t* b_s, uint8_t* b_v, int bn, int c,
                       int64_t* o_s, uint8_t* o_v) noexcept:
    """o = a ^ (c * b) with zero results dropped; all vectors ascending."""
    cdef int i = 0, j = 0, k = 0, v
    while i < an and j < bn:
        if a_s[i] < b_s[j]:
            o_s[k] = a_s[i]
            o_v[k] = a_v[i]
            i += 1
            k += 1
        elif a_s[i] > b_s[j]:
            v = gf_mul(c, b_v[j])
            if v:
                o_s[k] = b_s[j]
                o_v[k] = <uint8_t>v
                k += 1
            j += 1
        else:
            v = a_v[i] ^ gf_mul(c, b_v[j])
            if v:
                o_s[k] = a_s[i]
                o_v[k] = <uint8_t>v
                k += 1
            i += 1
            j += 1
    while i < an:
        o_s[k] = a_s[i]
        o_v[k] = a_v[i]
        i += 1
        k += 1
    while j < bn:
        v = gf_mul(c, b_v[j])
        if v:
            o_s[k] = b_s[j]
            o_v[k] = <uint8_t>v
            k += 1
        j += 1
    return k


cdef void _row_free(Row* r) noexcept:
    if r != NULL:
        if r.seqs != NULL:
            free(r.seqs)
        if r.vals != NULL:
            free(r.vals)
        free(r)


# ---------------------------------------------------------------------------
# the engine
# ---------------------------------------------------------------------------

cdef class _Core:
    # plan scalars
    cdef int npaths, is_tetrys, n_windows, fec_k, fec_rep, tet_k
    cdef int64_t n_sources, n_blocks
    cdef double interval, deadline, window_ms, ack_period, t_end
    cdef uint64_t stream_seed
    # channels
    cdef Chan* chans
    cdef Chan ack_chan
    cdef double* delays
    cdef double ack_delay
    # scheduler
    cdef int any_strategy
    cdef double* credits
    cdef double* shares
    cdef int* rorder
    cdef int* sorder
    cdef int64_t* src_sent
    cdef int64_t* rep_sent
    # wire counters
    cdef int64_t* path_sent
    cdef int64_t* path_lost
    cdef int64_t* w_sent
    cdef int64_t* w_lost
    # per-source outcome
    cdef double* known
    cdef uint8_t* how
    # block code state
    cdef int64_t* fec_counts
    # sliding-window sender state
    cdef int64_t next_seq, first_unacked, repairs_built
    cdef int since_repair
    # streaming decoder state
    cdef int64_t contig
    cdef Row** rows
    cdef int nrows, rows_cap
    cdef int64_t* cur_s
    cdef uint8_t* cur_v
    cdef int cur_n, cur_cap
    cdef int64_t* tmp_s
    cdef uint8_t* tmp_v
    cdef int tmp_cap
    cdef int64_t* snap
    cdef int snap_cap
    cdef int64_t* q_s
    cdef uint8_t* q_arr
    cdef int q_head, q_tail, q_cap
    # event rings
    cdef EvQ* evq
    cdef EvQ ackq
    cdef int64_t enq
    # python-side collaborators
    cdef object cfg, plan, controller, windows

    def __cinit__(self):
        self.chans = NULL
        self.delays = NULL
        self.credits = NULL
        self.shares = NULL
        self.rorder = NULL
        self.sorder = NULL
        self.src_sent = NULL
        self.rep_sent = NULL
        self.path_sent = NULL
        self.path_lost = NULL
        self.w_sent = NULL
        self.w_lost = NULL
        self.known = NULL
        self.how = NULL
        self.fec_counts = NULL
        self.rows = NULL
        self.cur_s = NULL
        self.cur_v = NULL
        self.tmp_s = NULL
        self.tmp_v = NULL
        self.snap = NULL
        self.q_s = NULL
        self.q_arr = NULL
        self.evq = NULL
        self.ackq.buf = NULL
        self.ack_chan.rng = 0

    def __dealloc__(self):
        cdef int i
        if self.rows != NULL:
            for i in range(self.nrows):
                _row_free(self.rows[i])
            free(self.rows)
        if self.evq != NULL:
            for i in range(self.npaths):
                if self.evq[i].buf != NULL:
                    free(self.evq[i].buf)
            free(self.evq)
        if self.ackq.buf != NULL:
            free(self.ackq.buf)
        for ptr in (<size_t>self.chans, <size_t>self.delays, <size_t>self.credits,
                    <size_t>self.shares, <size_t>self.rorder, <size_t>self.sorder,
                    <size_t>self.src_sent, <size_t>self.rep_sent,
                    <size_t>self.path_sent, <size_t>self.path_lost,
                    <size_t>self.w_sent, <size_t>self.w_lost,
                    <size_t>self.known, <size_t>self.how, <size_t>self.fec_counts,
                    <size_t>self.cur_s, <size_t>self.cur_v, <size_t>self.tmp_s,
                    <size_t>self.tmp_v, <size_t>self.snap, <size_t>self.q_s,
                    <size_t>self.q_arr):
            if ptr:
                free(<void*><size_t>ptr)

    # -- allocation helpers -------------------------------------------------

    cdef void* _alloc(self, size_t nbytes) except NULL:
        cdef void* p = malloc(nbytes if nbytes > 0 else 1)
        if p == NULL:
            raise MemoryError()
        return p

    cdef int _ensure_cur(self, int need) except -1:
        cdef int64_t* ns
        cdef uint8_t* nv
        if need <= self.cur_cap:
            return 0
        while self.cur_cap < need:
            self.cur_cap *= 2
        ns = <int64_t*>self._alloc(sizeof(int64_t) * self.cur_cap)
        nv = <uint8_t*>self._alloc(self.cur_cap)
        memcpy(ns, self.cur_s, sizeof(int64_t) * self.cur_n)
        memcpy(nv, self.cur_v, self.cur_n)
        free(self.cur_s)
        free(self.cur_v)
        self.cur_s = ns
        self.cur_v = nv
        return 0

    cdef int _ensure_tmp(self, int need) except -1:
        if need <= self.tmp_cap:
            return 0
        while self.tmp_cap < need:
            self.tmp_cap *= 2
        free(self.tmp_s)
        free(self.tmp_v)
        self.tmp_s = <int64_t*>self._alloc(sizeof(int64_t) * self.tmp_cap)
        self.tmp_v = <uint8_t*>self._alloc(self.tmp_cap)
        return 0

    cdef int _push_q(self, int64_t s, int arrived) except -1:
        cdef int64_t* ns
        cdef uint8_t* na
        if self.q_tail == self.q_cap:
            self.q_cap *= 2
            ns = <int64_t*>self._alloc(sizeof(int64_t) * self.q_cap)
            na = <uint8_t*>self._alloc(self.q_cap)
            memcpy(ns, self.q_s, sizeof(int64_t) * self.q_tail)
            memcpy(na, self.q_arr, self.q_tail)
            free(self.q_s)
            free(self.q_arr)
            self.q_s = ns
            self.q_arr = na
        self.q_s[self.q_tail] = s
        self.q_arr[self.q_tail] = <uint8_t>arrived
        self.q_tail += 1
        return 0

    # -- scheduler, identical to scheduler.PacketScheduler.assign ------------

    cdef int _assign(self, int is_repair) noexcept:
        cdef int i, pick = -1
        cdef double best
        cdef int* order
        for i in range(self.npaths):
            self.credits[i] += self.shares[i]
        order = self.rorder if is_repair else self.sorder
        if not self.any_strategy:
            for i in range(self.npaths):
                if self.credits[order[i]] > 1e-12:
                    pick = order[i]
                    break
        if pick < 0:
            best = -INFINITY
            for i in range(self.npaths):
                if self.credits[order[i]] > best:
                    best = self.credits[order[i]]
                    pick = order[i]
        self.credits[pick] -= 1.0
        if is_repair:
            self.rep_sent[pick] += 1
        else:
            self.src_sent[pick] += 1
        return pick

    cdef int _transmit(self, double t, int is_repair, int kind,
                       int64_t a, int64_t b, uint64_t c) except -1:
        cdef int p = self._assign(is_repair)
        self.path_sent[p] += 1
        self.w_sent[p] += 1
        if _chan_lost(&self.chans[p]):
            self.path_lost[p] += 1
            self.w_lost[p] += 1
        else:
            _evq_push(&self.evq[p], t + self.delays[p], self.enq, kind, a, b, c)
            self.enq += 1
        return 0

    # -- streaming decoder ----------------------------------------------------

    cdef void _mark_contig(self, int64_t s) noexcept:
        if s == self.contig + 1:
            self.contig = s
            while self.contig + 1 < self.n_sources \
                    and self.known[self.contig + 1] != INFINITY:
                self.contig += 1

    cdef Row* _find_row(self, int64_t pivot) noexcept:
        cdef int i
        for i in range(self.nrows):
            if self.rows[i].pivot == pivot:
                return self.rows[i]
        return NULL

    cdef int _append_row(self, int64_t pivot) except -1:
        """Store the current scratch vector as a new row."""
        cdef Row** nr
        cdef Row* r
        cdef int i
        if self.nrows == self.rows_cap:
            self.rows_cap *= 2
            nr = <Row**>self._alloc(sizeof(Row*) * self.rows_cap)
            for i in range(self.nrows):
                nr[i] = self.rows[i]
            free(self.rows)
            self.rows = nr
        r = <Row*>self._alloc(sizeof(Row))
        r.seqs = NULL
        r.vals = NULL
        r.pivot = pivot
        r.n = self.cur_n
        r.seqs = <int64_t*>malloc(sizeof(int64_t) * self.cur_n)
        r.vals = <uint8_t*>malloc(self.cur_n)
        if r.seqs == NULL or r.vals == NULL:
            _row_free(r)
            raise MemoryError()
        memcpy(r.seqs, self.cur_s, sizeof(int64_t) * self.cur_n)
        memcpy(r.vals, self.cur_v, self.cur_n)
        self.rows[self.nrows] = r
        self.nrows += 1
        return 0

    cdef int _insert_row(self) except -1:
        """Reduce the scratch vector into echelon form and file it.

        Same algebra as TetrysReceiver._insert_row: eliminate every pivot
        column present in the incoming support (one ascending pass), discard
        if dependent, normalize, then back-eliminate the new pivot from every
        older row, queueing any rows that became singletons.
        """
        cdef int sn = self.cur_n
        cdef int idx, pos, c, m, i
        cdef int64_t s, pivot
        cdef int pv
        cdef Row* r
        cdef int64_t* swap_s
        cdef uint8_t* swap_v
        cdef int swap_cap

        if self.snap_cap < sn:
            while self.snap_cap < sn:
                self.snap_cap *= 2
            free(self.snap)
            self.snap = <int64_t*>self._alloc(sizeof(int64_t) * self.snap_cap)
        memcpy(self.snap, self.cur_s, sizeof(int64_t) * sn)

        for idx in range(sn):
            s = self.snap[idx]
            r = self._find_row(s)
            if r == NULL:
                continue
            pos = _vec_find(self.cur_s, self.cur_n, s)
            if pos < 0:
                continue  # cancelled by an earlier elimination
            c = self.cur_v[pos]
            self._ensure_tmp(self.cur_n + r.n)
            m = _merge(self.cur_s, self.cur_v, self.cur_n,
                       r.seqs, r.vals, r.n, c, self.tmp_s, self.tmp_v)
            swap_s = self.cur_s
            swap_v = self.cur_v
            swap_cap = self.cur_cap
            self.cur_s = self.tmp_s
            self.cur_v = self.tmp_v
            self.cur_cap = self.tmp_cap
            self.tmp_s = swap_s
            self.tmp_v = swap_v
            self.tmp_cap = swap_cap
            self.cur_n = m

        if self.cur_n == 0:
            return 0  # linearly dependent on what we already hold
        pivot = self.cur_s[0]
        pv = self.cur_v[0]
        if pv != 1:
            for i in range(self.cur_n):
                self.cur_v[i] = <uint8_t>gf_div(self.cur_v[i], pv)

        for i in range(self.nrows):
            r = self.rows[i]
            pos = _vec_find(r.seqs, r.n, pivot)
            if pos < 0:
                continue
            c = r.vals[pos]
            self._ensure_tmp(r.n + self.cur_n)
            m = _merge(r.seqs, r.vals, r.n,
                       self.cur_s, self.cur_v, self.cur_n, c,
                       self.tmp_s, self.tmp_v)
            free(r.seqs)
            free(r.vals)
            r.seqs = <int64_t*>malloc(sizeof(int64_t) * m)
            r.vals = <uint8_t*>malloc(m)
            if r.seqs == NULL or r.vals == NULL:
                raise MemoryError()
            memcpy(r.seqs, self.tmp_s, sizeof(int64_t) * m)
            memcpy(r.vals, self.tmp_v, m)
            r.n = m
            if m == 1:
                self._push_q(r.pivot, 0)

        self._append_row(pivot)
        if self.cur_n == 1:
            self._push_q(pivot, 0)
        return 0

    cdef int _absorb_repair(self, int64_t first, int64_t last,
                            uint64_t seed) except -1:
        cdef int64_t s
        cdef int n = 0
        self._ensure_cur(<int>(last - first + 1))
        for s in range(first, last + 1):
            if self.known[s] == INFINITY:
                self.cur_s[n] = s
                self.cur_v[n] = <uint8_t>_repair_coeff(seed, s)
                n += 1
        self.cur_n = n
        if n:
            self._insert_row()
        return 0

    cdef int _drain(self, double now) except -1:
        """Process the decode worklist: mark seqs known, substitute them out
        of every pending row, cascade."""
        cdef int64_t s
        cdef int arrived, i, pos, c
        cdef Row* r
        while self.q_head < self.q_tail:
            s = self.q_s[self.q_head]
            arrived = self.q_arr[self.q_head]
            self.q_head += 1
            if self.known[s] != INFINITY:
                continue
            self.known[s] = now
            self.how[s] = 1 if arrived else 2
            self._mark_contig(s)
            i = 0
            while i < self.nrows:
                r = self.rows[i]
                pos = _vec_find(r.seqs, r.n, s)
                if pos < 0:
                    i += 1
                    continue
                memmove(r.seqs + pos, r.seqs + pos + 1,
                        sizeof(int64_t) * (r.n - pos - 1))
                memmove(r.vals + pos, r.vals + pos + 1, r.n - pos - 1)
                r.n -= 1
                if s == r.pivot:
                    # the row loses its pivot: re-file the remainder
                    self.rows[i] = self.rows[self.nrows - 1]
                    self.nrows -= 1
                    if r.n > 0:
                        self._ensure_cur(r.n)
                        memcpy(self.cur_s, r.seqs, sizeof(int64_t) * r.n)
                        memcpy(self.cur_v, r.vals, r.n)
                        self.cur_n = r.n
                        _row_free(r)
                        self._insert_row()
                    else:
                        _row_free(r)
                    # stay at i: a row was swapped into this slot
                else:
                    if r.n == 1:
                        self._push_q(r.pivot, 0)
                    i += 1
        self.q_head = 0
        self.q_tail = 0
        return 0

    # -- setup ----------------------------------------------------------------

    def _setup(self, config):
        cdef int i
        self.cfg = config
        plan = _simcore.plan(config)
        self.plan = plan
        self.npaths = len(config.paths)
        self.is_tetrys = 1 if config.is_tetrys else 0
        self.interval = plan.interval_ms
        self.n_sources = plan.n_sources
        self.deadline = config.deadline_ms
        self.window_ms = plan.window_ms
        self.n_windows = plan.n_windows
        self.t_end = plan.t_end_ms
        self.windows = []

        delays = [p.prop_delay_ms for p in config.paths]
        self.delays = <double*>self._alloc(sizeof(double) * self.npaths)
        self.chans = <Chan*>self._alloc(sizeof(Chan) * self.npaths)
        for i in range(self.npaths):
            self.delays[i] = delays[i]
            _chan_init(&self.chans[i], config.paths[i].loss, plan.path_seeds[i])

        ack_idx = min(range(self.npaths), key=lambda j: (delays[j], j))
        self.ack_delay = delays[ack_idx]
        _chan_init(&self.ack_chan, config.paths[ack_idx].loss, plan.ack_seed)

        # borrow the Python scheduler's preference orders and initial loads
        # so tie-breaking rules have exactly one definition
        import mptetrys.scheduler as _sched_mod
        strategy = config.strategy if (self.is_tetrys or config.apply_strategy_to_fec) \
            else _sched_mod.ANY
        ps = PacketScheduler(delays, strategy, _simcore.initial_loads(config))
        self.any_strategy = 1 if strategy == _sched_mod.ANY else 0
        self.credits = <double*>self._alloc(sizeof(double) * self.npaths)
        self.shares = <double*>self._alloc(sizeof(double) * self.npaths)
        self.rorder = <int*>self._alloc(sizeof(int) * self.npaths)
        self.sorder = <int*>self._alloc(sizeof(int) * self.npaths)
        self.src_sent = <int64_t*>self._alloc(sizeof(int64_t) * self.npaths)
        self.rep_sent = <int64_t*>self._alloc(sizeof(int64_t) * self.npaths)
        self.path_sent = <int64_t*>self._alloc(sizeof(int64_t) * self.npaths)
        self.path_lost = <int64_t*>self._alloc(sizeof(int64_t) * self.npaths)
        self.w_sent = <int64_t*>self._alloc(sizeof(int64_t) * self.npaths)
        self.w_lost = <int64_t*>self._alloc(sizeof(int64_t) * self.npaths)
        for i in range(self.npaths):
            self.credits[i] = 0.0
            self.shares[i] = ps.loads.shares[i]
            self.rorder[i] = ps._repair_order[i]
            self.sorder[i] = ps._source_order[i]
            self.src_sent[i] = 0
            self.rep_sent[i] = 0
            self.path_sent[i] = 0
            self.path_lost[i] = 0
            self.w_sent[i] = 0
            self.w_lost[i] = 0

        self.controller = _simcore.make_controller(config)

        self.known = <double*>self._alloc(sizeof(double) * self.n_sources)
        self.how = <uint8_t*>self._alloc(self.n_sources)
        for i in range(self.n_sources):
            self.known[i] = INFINITY
            self.how[i] = 0

        if self.is_tetrys:
            self.tet_k = config.coding.k
            self.stream_seed = <uint64_t>plan.stream_seed
            self.fec_k = 0
            self.fec_rep = 0
            self.n_blocks = 0
        else:
            self.tet_k = 0
            self.stream_seed = 0
            self.fec_k = config.coding.k
            self.fec_rep = config.coding.n - config.coding.k
            self.n_blocks = (self.n_sources + self.fec_k - 1) // self.fec_k
            self.fec_counts = <int64_t*>self._alloc(sizeof(int64_t) * self.n_blocks)
            for i in range(self.n_blocks):
                self.fec_counts[i] = 0

        self.next_seq = 0
        self.first_unacked = 0
        self.repairs_built = 0
        self.since_repair = 0
        self.contig = -1
        self.nrows = 0
        self.rows_cap = 64
        self.rows = <Row**>self._alloc(sizeof(Row*) * self.rows_cap)
        self.cur_cap = 256
        self.cur_s = <int64_t*>self._alloc(sizeof(int64_t) * self.cur_cap)
        self.cur_v = <uint8_t*>self._alloc(self.cur_cap)
        self.cur_n = 0
        self.tmp_cap = 256
        self.tmp_s = <int64_t*>self._alloc(sizeof(int64_t) * self.tmp_cap)
        self.tmp_v = <uint8_t*>self._alloc(self.tmp_cap)
        self.snap_cap = 256
        self.snap = <int64_t*>self._alloc(sizeof(int64_t) * self.snap_cap)
        self.q_cap = 256
        self.q_s = <int64_t*>self._alloc(sizeof(int64_t) * self.q_cap)
        self.q_arr = <uint8_t*>self._alloc(self.q_cap)
        self.q_head = 0
        self.q_tail = 0

        self.evq = <EvQ*>self._alloc(sizeof(EvQ) * self.npaths)
        for i in range(self.npaths):
            self.evq[i].buf = NULL
        for i in range(self.npaths):
            _evq_init(&self.evq[i])
        _evq_init(&self.ackq)
        self.enq = 0

    # -- main loop --------------------------------------------------------------

    def execute(self):
        cdef double ev_t, t0, t, expiry, info
        cdef int ev_prio, ev_what, ev_path, p, kind, i, rep_i
        cdef int64_t ev_enq, NO_ENQ = <int64_t>1 << 62
        cdef int64_t slot_i = 0, next_cls = 0, win_miss = 0, win_tot = 0
        cdef int64_t acks_sent = 0, acks_lost = 0
        cdef int64_t a, b, seq, blk, acked, new_first, block_lo, block_n
        cdef uint64_t c, seed
        cdef int next_win = 1 if self.n_windows >= 1 else -1
        cdef int64_t next_ack_j = 1 if self.is_tetrys else -1
        cdef Ev* e
        cdef int slot_live

        controller = self.controller
        cdef double ack_period = self.cfg.ack_period_ms

        while True:
            ev_t = INFINITY
            ev_prio = 9
            ev_enq = NO_ENQ
            ev_what = -1
            ev_path = -1
            for p in range(self.npaths):
                if self.evq[p].count:
                    e = &self.evq[p].buf[self.evq[p].head]
                    if e.t < ev_t or (e.t == ev_t and
                                      (0 < ev_prio or (0 == ev_prio and e.enq < ev_enq))):
                        ev_t = e.t
                        ev_prio = 0
                        ev_enq = e.enq
                        ev_what = 0
                        ev_path = p
            if self.ackq.count:
                e = &self.ackq.buf[self.ackq.head]
                if e.t < ev_t or (e.t == ev_t and
                                  (1 < ev_prio or (1 == ev_prio and e.enq < ev_enq))):
                    ev_t = e.t
                    ev_prio = 1
                    ev_enq = e.enq
                    ev_what = 1
            if next_win >= 0:
                t0 = next_win * self.window_ms
                if t0 < ev_t or (t0 == ev_t and ev_prio > 2):
                    ev_t = t0
                    ev_prio = 2
                    ev_enq = NO_ENQ
                    ev_what = 2
            if next_ack_j >= 0:
                t0 = next_ack_j * ack_period
                if t0 > self.t_end:
                    next_ack_j = -1
                elif t0 < ev_t or (t0 == ev_t and ev_prio > 3):
                    ev_t = t0
                    ev_prio = 3
                    ev_enq = NO_ENQ
                    ev_what = 3
            slot_live = slot_i < self.n_sources or (
                self.is_tetrys and self.first_unacked < self.next_seq
                and slot_i * self.interval <= self.t_end)
            if slot_live:
                t0 = slot_i * self.interval
                if t0 < ev_t or (t0 == ev_t and ev_prio > 4):
                    ev_t = t0
                    ev_prio = 4
                    ev_enq = NO_ENQ
                    ev_what = 4
            if ev_what < 0:
                break

            if ev_what == 0:  # data arrival
                e = &self.evq[ev_path].buf[self.evq[ev_path].head]
                t = e.t
                kind = e.kind
                a = e.a
                b = e.b
                c = e.c
                self.evq[ev_path].head = (self.evq[ev_path].head + 1) \
                    & (self.evq[ev_path].cap - 1)
                self.evq[ev_path].count -= 1
                if self.is_tetrys:
                    if kind == 0:
                        if self.known[a] == INFINITY:
                            self._push_q(a, 1)
                    else:
                        self._absorb_repair(a, b, c)
                    self._drain(t)
                else:
                    if kind == 0:
                        blk = a // self.fec_k
                        if self.known[a] == INFINITY:
                            self.known[a] = t
                            self.how[a] = 1
                    else:
                        blk = a
                    self.fec_counts[blk] += 1
                    block_lo = blk * self.fec_k
                    block_n = self.fec_k
                    if self.n_sources - block_lo < block_n:
                        block_n = self.n_sources - block_lo
                    if self.fec_counts[blk] == block_n:
                        for seq in range(block_lo, block_lo + block_n):
                            if self.known[seq] == INFINITY:
                                self.known[seq] = t
                                self.how[seq] = 2

            elif ev_what == 1:  # acknowledgment arrival
                e = &self.ackq.buf[self.ackq.head]
                acked = e.a
                self.ackq.head = (self.ackq.head + 1) & (self.ackq.cap - 1)
                self.ackq.count -= 1
                new_first = acked + 1
                if new_first > self.first_unacked:
                    self.first_unacked = new_first

            elif ev_what == 2:  # adaptation window boundary
                t = next_win * self.window_ms
                while next_cls < self.n_sources:
                    expiry = next_cls * self.interval + self.deadline
                    if expiry > t:
                        break
                    win_tot += 1
                    if not self.known[next_cls] <= expiry:
                        win_miss += 1
                    next_cls += 1
                info = (<double>win_miss) / win_tot if win_tot else 0.0
                w_sent_t = tuple(self.w_sent[i] for i in range(self.npaths))
                w_lost_t = tuple(self.w_lost[i] for i in range(self.npaths))
                meas = WindowMeasurement(w_sent_t, w_lost_t, info)
                if controller is not None:
                    lv = controller.step(meas)
                    shares = lv.shares
                    for i in range(self.npaths):
                        self.shares[i] = shares[i]
                self.windows.append(_simcore.WindowRecord(
                    next_win, t, w_sent_t, w_lost_t, info,
                    tuple(self.shares[i] for i in range(self.npaths))))
                for i in range(self.npaths):
                    self.w_sent[i] = 0
                    self.w_lost[i] = 0
                win_miss = 0
                win_tot = 0
                next_win = next_win + 1 if next_win < self.n_windows else -1

            elif ev_what == 3:  # acknowledgment timer
                t = next_ack_j * ack_period
                acked = self.contig
                acks_sent += 1
                if _chan_lost(&self.ack_chan):
                    acks_lost += 1
                else:
                    _evq_push(&self.ackq, t + self.ack_delay, self.enq, 0,
                              acked, 0, 0)
                    self.enq += 1
                next_ack_j += 1

            else:  # transmission slot
                t = slot_i * self.interval
                if slot_i < self.n_sources:
                    if self.is_tetrys:
                        seq = self.next_seq
                        self.next_seq += 1
                        self._transmit(t, 0, 0, seq, 0, 0)
                        self.since_repair += 1
                        if self.since_repair == self.tet_k:
                            self.since_repair = 0
                            seed = _repair_seed(self.stream_seed, self.repairs_built)
                            self.repairs_built += 1
                            self._transmit(t, 1, 1, self.first_unacked,
                                           self.next_seq - 1, seed)
                    else:
                        seq = slot_i
                        self._transmit(t, 0, 0, seq, 0, 0)
                        blk = seq // self.fec_k
                        if seq % self.fec_k == self.fec_k - 1 or seq == self.n_sources - 1:
                            for rep_i in range(self.fec_rep):
                                self._transmit(t, 1, 1, blk, 0, 0)
                else:
                    # stream over: keep the repair cadence over the
                    # still-unacknowledged window
                    self.since_repair += 1
                    if self.since_repair == self.tet_k:
                        self.since_repair = 0
                        seed = _repair_seed(self.stream_seed, self.repairs_built)
                        self.repairs_built += 1
                        self._transmit(t, 1, 1, self.first_unacked,
                                       self.next_seq - 1, seed)
                slot_i += 1

        # final per-source classification
        cdef int64_t delivered = 0, recovered = 0, late = 0, unrecovered = 0
        cdef double kt
        for i in range(self.n_sources):
            kt = self.known[i]
            if kt == INFINITY:
                unrecovered += 1
            elif kt <= i * self.interval + self.deadline:
                if self.how[i] == 1:
                    delivered += 1
                else:
                    recovered += 1
            else:
                late += 1

        cdef int64_t repairs_total = 0
        for i in range(self.npaths):
            repairs_total += self.rep_sent[i]

        return _simcore.MetricsLedger(
            n_paths=self.npaths,
            sources_sent=self.n_sources,
            delivered_on_time=delivered,
            recovered_on_time=recovered,
            late=late,
            unrecovered=unrecovered,
            repairs_sent=repairs_total,
            acks_sent=acks_sent,
            acks_lost=acks_lost,
            path_sent=tuple(self.path_sent[i] for i in range(self.npaths)),
            path_lost=tuple(self.path_lost[i] for i in range(self.npaths)),
            path_source_sent=tuple(self.src_sent[i] for i in range(self.npaths)),
            path_repair_sent=tuple(self.rep_sent[i] for i in range(self.npaths)),
            windows=self.windows,
            engine="compiled",
        )


def run_compiled(config):
    """Simulate one experiment with the compiled engine."""
    core = _Core()
    core._setup(config)
    return core.execute()
