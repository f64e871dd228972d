"""Pure-Python simulation engine.

Composes the public modules (channel, scheduler, tetrys, fec_block, ols)
into the event loop.  The compiled engine in _engine.pyx re-implements the
same loop in C for sweep-scale runs; this one is the readable reference,
the only engine that can trace events or collect per-source details, and
the import-time fallback when the extension is unavailable.
"""

import math

from . import scheduler, simcore
from .channel import Path
from .ols import WindowMeasurement
from .scheduler import PacketScheduler
from .tetrys import RepairPacket, SourcePacket, TetrysReceiver, TetrysSender

_INF = math.inf

# dispatch order at equal timestamps: arrivals settle before the window
# snapshot, acknowledgments go out after it, new transmissions come last
_P_DATA = 0
_P_ACK = 1
_P_WINDOW = 2
_P_ACKTICK = 3
_P_SLOT = 4
_NO_ENQ = 1 << 62  # tick events never tie-break on insertion order


class PyEngine:
    def __init__(self, config, trace=None, collect_details=False):
        self.cfg = config
        self.plan = simcore.plan(config)
        self.trace = trace
        self.collect_details = collect_details

    def run(self):
        cfg = self.cfg
        plan = self.plan
        trace = self.trace
        npaths = len(cfg.paths)
        delays = [p.prop_delay_ms for p in cfg.paths]
        paths = [Path(p, plan.path_seeds[i]) for i, p in enumerate(cfg.paths)]
        is_tetrys = cfg.is_tetrys
        strategy = cfg.strategy if (is_tetrys or cfg.apply_strategy_to_fec) else scheduler.ANY
        sched = PacketScheduler(delays, strategy, simcore.initial_loads(cfg))
        controller = simcore.make_controller(cfg)

        interval = plan.interval_ms
        n_sources = plan.n_sources
        deadline = cfg.deadline_ms
        window_ms = plan.window_ms
        t_end = plan.t_end_ms

        # acknowledgments ride the reverse direction of the fastest path
        ack_idx = min(range(npaths), key=lambda i: (delays[i], i))
        ack_delay = delays[ack_idx]
        ack_chain = Path(cfg.paths[ack_idx], plan.ack_seed)

        sender = receiver = None
        fec_counts = fec_k = fec_rep = None
        if is_tetrys:
            sender = TetrysSender(cfg.coding.k, plan.stream_seed)
            receiver = TetrysReceiver(ack_period_ms=cfg.ack_period_ms)
        else:
            fec_k = cfg.coding.k
            fec_rep = cfg.coding.n - cfg.coding.k
            fec_counts = [0] * ((n_sources + fec_k - 1) // fec_k)

        known = [_INF] * n_sources
        how = bytearray(n_sources)
        path_sent = [0] * npaths
        path_lost = [0] * npaths
        w_sent = [0] * npaths
        w_lost = [0] * npaths
        acks_sent = acks_lost = 0
        windows = []
        queues = [[] for _ in range(npaths)]  # (t, enq, kind, a, b, c)
        heads = [0] * npaths  # pop index per queue, compacted periodically
        ackq = []
        ack_head = 0
        enq = 0

        slot_i = 0
        next_win = 1 if plan.n_windows >= 1 else None
        next_ack_j = 1 if is_tetrys else None
        next_cls = 0  # first source not yet classified into a window
        win_miss = 0
        win_tot = 0

        def block_k(b):
            return min(fec_k, n_sources - b * fec_k)

        def fec_decode(b, t):
            lo = b * fec_k
            hi = lo + block_k(b)
            for s in range(lo, hi):
                if known[s] == _INF:
                    known[s] = t
                    how[s] = 2

        def transmit(t, is_repair, kind, a, b, c):
            nonlocal enq
            p = sched.assign(is_repair)
            path_sent[p] += 1
            w_sent[p] += 1
            arrival = paths[p].transmit(t)
            if arrival is None:
                path_lost[p] += 1
                w_lost[p] += 1
                if trace:
                    trace({"t": t, "ev": "drop", "path": p, "kind": kind, "a": a, "b": b})
            else:
                queues[p].append((arrival, enq, kind, a, b, c))
                enq += 1
                if trace:
                    trace({"t": t, "ev": "tx", "path": p, "kind": kind, "a": a, "b": b})

        while True:
            # pick the next event: min (time, priority, insertion order)
            ev_t = _INF
            ev_prio = 9
            ev_enq = _NO_ENQ
            ev_what = -1
            ev_path = -1
            for p in range(npaths):
                q = queues[p]
                h = heads[p]
                if h < len(q):
                    t0 = q[h][0]
                    e0 = q[h][1]
                    if t0 < ev_t or (t0 == ev_t and (_P_DATA, e0) < (ev_prio, ev_enq)):
                        ev_t, ev_prio, ev_enq, ev_what, ev_path = t0, _P_DATA, e0, 0, p
            if ack_head < len(ackq):
                t0, e0 = ackq[ack_head][0], ackq[ack_head][1]
                if t0 < ev_t or (t0 == ev_t and (_P_ACK, e0) < (ev_prio, ev_enq)):
                    ev_t, ev_prio, ev_enq, ev_what = t0, _P_ACK, e0, 1
            if next_win is not None:
                t0 = next_win * window_ms
                if t0 < ev_t or (t0 == ev_t and ev_prio > _P_WINDOW):
                    ev_t, ev_prio, ev_enq, ev_what = t0, _P_WINDOW, _NO_ENQ, 2
            if next_ack_j is not None:
                t0 = next_ack_j * cfg.ack_period_ms
                if t0 > t_end:
                    next_ack_j = None
                elif t0 < ev_t or (t0 == ev_t and ev_prio > _P_ACKTICK):
                    ev_t, ev_prio, ev_enq, ev_what = t0, _P_ACKTICK, _NO_ENQ, 3
            slot_live = slot_i < n_sources or (
                is_tetrys and sender.first_unacked < sender.next_seq
                and slot_i * interval <= t_end)
            if slot_live:
                t0 = slot_i * interval
                if t0 < ev_t or (t0 == ev_t and ev_prio > _P_SLOT):
                    ev_t, ev_prio, ev_enq, ev_what = t0, _P_SLOT, _NO_ENQ, 4
            if ev_what < 0:
                break

            if ev_what == 0:  # data arrival
                q = queues[ev_path]
                t, _, kind, a, b, c = q[heads[ev_path]]
                heads[ev_path] += 1
                if heads[ev_path] > 4096 and heads[ev_path] * 2 > len(q):
                    del q[: heads[ev_path]]
                    heads[ev_path] = 0
                if is_tetrys:
                    if kind == 0:
                        if known[a] == _INF:
                            known[a] = t
                            how[a] = 1
                        decoded = receiver.on_receive(SourcePacket(a), t)
                    else:
                        decoded = receiver.on_receive(RepairPacket(a, b, c), t)
                    for s in decoded:
                        if known[s] == _INF:
                            known[s] = t
                            how[s] = 2
                    if trace:
                        trace({"t": t, "ev": "rx", "path": ev_path, "kind": kind,
                               "a": a, "decoded": list(decoded)})
                else:
                    if kind == 0:
                        blk = a // fec_k
                        if known[a] == _INF:
                            known[a] = t
                            how[a] = 1
                    else:
                        blk = a
                    fec_counts[blk] += 1
                    if fec_counts[blk] == block_k(blk):
                        fec_decode(blk, t)
                    if trace:
                        trace({"t": t, "ev": "rx", "path": ev_path, "kind": kind, "a": a})

            elif ev_what == 1:  # ack arrival
                t, _, acked = ackq[ack_head]
                ack_head += 1
                if ack_head > 4096 and ack_head * 2 > len(ackq):
                    del ackq[:ack_head]
                    ack_head = 0
                new_first = acked + 1
                if new_first > sender.first_unacked:
                    sender.first_unacked = new_first
                if trace:
                    trace({"t": t, "ev": "ack_rx", "acked": acked})

            elif ev_what == 2:  # adaptation window boundary
                t = next_win * window_ms
                while next_cls < n_sources:
                    expiry = next_cls * interval + deadline
                    if expiry > t:
                        break
                    win_tot += 1
                    if not known[next_cls] <= expiry:
                        win_miss += 1
                    next_cls += 1
                info = win_miss / win_tot if win_tot else 0.0
                meas = WindowMeasurement(tuple(w_sent), tuple(w_lost), info)
                if controller is not None:
                    sched.apply_feedback(controller.step(meas))
                windows.append(simcore.WindowRecord(
                    next_win, t, meas.path_sent, meas.path_lost, info,
                    tuple(sched.loads.shares)))
                if trace:
                    trace({"t": t, "ev": "window", "info_loss": info,
                           "loads": list(sched.loads.shares)})
                for i in range(npaths):
                    w_sent[i] = 0
                    w_lost[i] = 0
                win_miss = 0
                win_tot = 0
                next_win = next_win + 1 if next_win < plan.n_windows else None

            elif ev_what == 3:  # acknowledgment timer
                t = next_ack_j * cfg.ack_period_ms
                ack = receiver.emit_ack(t)
                acks_sent += 1
                arrival = ack_chain.transmit(t)
                if arrival is None:
                    acks_lost += 1
                else:
                    ackq.append((arrival, enq, ack.acked_through))
                    enq += 1
                if trace:
                    trace({"t": t, "ev": "ack_tx", "acked": ack.acked_through,
                           "lost": arrival is None})
                next_ack_j += 1

            else:  # transmission slot
                t = slot_i * interval
                if slot_i < n_sources:
                    if is_tetrys:
                        pkt, rep = sender.send_source()
                        transmit(t, False, 0, pkt.seq, 0, 0)
                        if rep is not None:
                            transmit(t, True, 1, rep.first_seq, rep.last_seq, rep.seed)
                    else:
                        seq = slot_i
                        transmit(t, False, 0, seq, 0, 0)
                        blk = seq // fec_k
                        if seq % fec_k == fec_k - 1 or seq == n_sources - 1:
                            for _ in range(fec_rep):
                                transmit(t, True, 1, blk, 0, 0)
                else:
                    rep = sender.tick_without_source()
                    if rep is not None:
                        transmit(t, True, 1, rep.first_seq, rep.last_seq, rep.seed)
                slot_i += 1

        delivered = recovered = late = unrecovered = 0
        for i in range(n_sources):
            kt = known[i]
            if kt == _INF:
                unrecovered += 1
            elif kt <= i * interval + deadline:
                if how[i] == 1:
                    delivered += 1
                else:
                    recovered += 1
            else:
                late += 1

        details = None
        if self.collect_details:
            details = simcore.PerSourceDetails(
                send_ms=[i * interval for i in range(n_sources)],
                known_ms=[None if known[i] == _INF else known[i] for i in range(n_sources)],
                how=list(how))

        return simcore.MetricsLedger(
            n_paths=npaths,
            sources_sent=n_sources,
            delivered_on_time=delivered,
            recovered_on_time=recovered,
            late=late,
            unrecovered=unrecovered,
            repairs_sent=sum(sched.repair_sent),
            acks_sent=acks_sent,
            acks_lost=acks_lost,
            path_sent=tuple(path_sent),
            path_lost=tuple(path_lost),
            path_source_sent=tuple(sched.source_sent),
            path_repair_sent=tuple(sched.repair_sent),
            windows=windows,
            engine="python",
            details=details,
        )
