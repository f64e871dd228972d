"""On-the-fly erasure coding over an elastic window (Tetrys style).

The sender keeps every source packet that has not been cumulatively
acknowledged in its encoding window and, after every k sources, emits one
repair: a random linear combination of the whole current window.  The
receiver maintains the pending repair equations in reduced row echelon form
over the unknown sequence numbers, so a source is recovered the moment the
received equations pin it down, no matter which mix of source, repair and
acknowledgment packets was lost on the way.

Repair coefficients are not carried on the wire: they are re-derived from a
per-repair seed, so a repair packet costs a constant header.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import gf, rng

_REPAIR_TAG = 0x74657472797372  # namespaces repair seeds within a stream seed


@dataclass(frozen=True)
class TetrysParams:
    k: int  # sources between consecutive repairs

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"repair interval k must be >= 1, got {self.k}")

    @property
    def redundancy_ratio(self):
        return 1.0 / (self.k + 1)


def k_for_redundancy(ratio):
    """Repair interval giving one repair per k sources with k = round(1/R) - 1."""
    if not 0.0 < ratio <= 0.5:
        raise ValueError(f"redundancy ratio must be in (0, 0.5], got {ratio}")
    return round(1.0 / ratio) - 1


def repair_coeff(seed, seq):
    """Coefficient of source ``seq`` inside the repair with the given seed.

    Derived, not transmitted; always in 1..255 so every window member truly
    participates in every repair.
    """
    return rng.finalize(seed ^ ((seq + 1) * rng.GOLDEN & rng.MASK64)) % 255 + 1


@dataclass(frozen=True)
class SourcePacket:
    seq: int
    payload: bytes = None


@dataclass(frozen=True)
class RepairPacket:
    first_seq: int
    last_seq: int
    seed: int
    payload: bytes = None

    def coeff(self, seq):
        if not self.first_seq <= seq <= self.last_seq:
            return 0
        return repair_coeff(self.seed, seq)


@dataclass(frozen=True)
class AckPacket:
    acked_through: int  # highest seq such that all seqs <= it are known
    sent_time: float


class TetrysSender:
    """Elastic-window encoder emitting one repair every k sources."""

    def __init__(self, k, stream_seed=0, store_payloads=False):
        self.params = TetrysParams(k)
        self.k = k
        self.stream_seed = stream_seed
        self.store_payloads = store_payloads
        self.first_unacked = 0
        self.next_seq = 0
        self.repairs_built = 0
        self._since_repair = 0
        self._payloads = {}

    @property
    def window_size(self):
        return self.next_seq - self.first_unacked

    def send_source(self, payload=None):
        """Emit the next source packet, plus a repair when the cadence hits k."""
        seq = self.next_seq
        self.next_seq += 1
        if self.store_payloads:
            if payload is None:
                raise ValueError("store_payloads sender needs source payloads")
            self._payloads[seq] = bytes(payload)
        pkt = SourcePacket(seq, payload)
        self._since_repair += 1
        repair = None
        if self._since_repair == self.k:
            self._since_repair = 0
            repair = self.build_repair()
        return pkt, repair

    def tick_without_source(self):
        """Advance the repair cadence without a new source (stream drained).

        Keeps emitting repairs over the still-unacknowledged window so late
        losses get repaired after the stream stops.  Returns the repair due
        at this slot, or None.
        """
        if self.first_unacked >= self.next_seq:
            return None
        self._since_repair += 1
        if self._since_repair == self.k:
            self._since_repair = 0
            return self.build_repair()
        return None

    def build_repair(self):
        first, last = self.first_unacked, self.next_seq - 1
        if last < first:
            raise ValueError("cannot build a repair over an empty window")
        seed = rng.derive_seed(self.stream_seed, _REPAIR_TAG, self.repairs_built)
        self.repairs_built += 1
        payload = None
        if self.store_payloads:
            acc = None
            for s in range(first, last + 1):
                term = gf.scale(repair_coeff(seed, s),
                                np.frombuffer(self._payloads[s], dtype=np.uint8))
                acc = term if acc is None else acc ^ term
            payload = acc.tobytes()
        return RepairPacket(first, last, seed, payload)

    def on_ack(self, ack):
        """Slide the window start forward; stale or reordered ACKs are no-ops."""
        new_first = ack.acked_through + 1
        if new_first <= self.first_unacked:
            return
        if self.store_payloads:
            for s in range(self.first_unacked, min(new_first, self.next_seq)):
                self._payloads.pop(s, None)
        self.first_unacked = new_first


class _Row:
    __slots__ = ("pivot", "coeffs", "rhs")

    def __init__(self, pivot, coeffs, rhs):
        self.pivot = pivot
        self.coeffs = coeffs  # seq -> nonzero coefficient, pivot included at 1
        self.rhs = rhs  # np.uint8 payload accumulator or None


class TetrysReceiver:
    """Incremental decoder with cumulative acknowledgments.

    Pending repair equations are kept in reduced row echelon form keyed by
    their pivot (lowest unknown seq).  Arrivals substitute known sources out
    of every equation; any equation left with a single unknown decodes it,
    and decodes cascade.  Works with or without payloads: without, it still
    tracks exactly which seqs are known and when.
    """

    def __init__(self, ack_period_ms=10.0, store_payloads=False):
        self.ack_period = ack_period_ms
        self.store_payloads = store_payloads
        self.contig = -1  # every seq <= contig is known
        self.decoded_log = []  # (seq, time) in decode order
        self.payloads = {}
        self._known_above = set()
        self._rows = {}  # pivot seq -> _Row
        self._next_ack_due = 0.0

    # -- knowledge bookkeeping -------------------------------------------

    def is_known(self, seq):
        return seq <= self.contig or seq in self._known_above

    @property
    def pending_rows(self):
        return len(self._rows)

    def on_receive(self, pkt, now):
        """Feed one arrived packet; returns the list of seqs decoded now."""
        decoded = []
        queue = deque()
        if isinstance(pkt, SourcePacket):
            if not self.is_known(pkt.seq):
                pl = None
                if pkt.payload is not None:
                    pl = np.frombuffer(bytes(pkt.payload), dtype=np.uint8)
                queue.append((pkt.seq, pl, True))
        elif isinstance(pkt, RepairPacket):
            self._absorb_repair(pkt, now, queue, decoded)
        else:
            raise TypeError(f"receiver cannot absorb {type(pkt).__name__}")
        self._drain(queue, now, decoded)
        return decoded

    def emit_ack(self, now):
        return AckPacket(self.contig, now)

    def maybe_emit_ack(self, now):
        if now + 1e-9 < self._next_ack_due:
            return None
        self._next_ack_due = now + self.ack_period
        return self.emit_ack(now)

    # -- decoding core ----------------------------------------------------

    def _absorb_repair(self, rep, now, queue, decoded):
        coeffs = {}
        rhs = None
        if rep.payload is not None:
            rhs = np.frombuffer(bytes(rep.payload), dtype=np.uint8).copy()
        for s in range(rep.first_seq, rep.last_seq + 1):
            if not self.is_known(s):
                coeffs[s] = repair_coeff(rep.seed, s)
            elif rhs is not None:
                rhs ^= gf.scale(repair_coeff(rep.seed, s), self.payloads[s])
        if coeffs:
            self._insert_row(coeffs, rhs, queue)

    def _insert_row(self, coeffs, rhs, queue):
        # eliminate every pivot column present, ascending (one pass suffices:
        # existing rows never reference other pivots)
        for s in sorted(coeffs):
            row = self._rows.get(s)
            if row is None:
                continue
            c = coeffs.pop(s, 0)
            if not c:
                continue
            for s2, c2 in row.coeffs.items():
                if s2 == s:
                    continue
                v = coeffs.get(s2, 0) ^ gf.mul(c, c2)
                if v:
                    coeffs[s2] = v
                else:
                    coeffs.pop(s2, None)
            if rhs is not None and row.rhs is not None:
                rhs = rhs ^ gf.scale(c, row.rhs)
        coeffs = {s: c for s, c in coeffs.items() if c}
        if not coeffs:
            return  # linearly dependent on what we already hold
        pivot = min(coeffs)
        pv = coeffs[pivot]
        if pv != 1:
            coeffs = {s: gf.div(c, pv) for s, c in coeffs.items()}
            if rhs is not None:
                rhs = gf.scale(gf.inv(pv), rhs)
        new_row = _Row(pivot, coeffs, rhs)
        # back-eliminate the new pivot from every older row
        for p in sorted(self._rows):
            row = self._rows[p]
            c = row.coeffs.pop(pivot, None)
            if not c:
                continue
            for s2, c2 in coeffs.items():
                if s2 == pivot:
                    continue
                v = row.coeffs.get(s2, 0) ^ gf.mul(c, c2)
                if v:
                    row.coeffs[s2] = v
                else:
                    row.coeffs.pop(s2, None)
            if row.rhs is not None and rhs is not None:
                row.rhs = row.rhs ^ gf.scale(c, rhs)
            if len(row.coeffs) == 1:
                self._queue_singleton(row, queue)
        self._rows[pivot] = new_row
        if len(coeffs) == 1:
            self._queue_singleton(new_row, queue)

    def _queue_singleton(self, row, queue):
        val = None
        if row.rhs is not None:
            c = row.coeffs[row.pivot]
            val = row.rhs if c == 1 else gf.scale(gf.inv(c), row.rhs)
        queue.append((row.pivot, val, False))

    def _drain(self, queue, now, decoded):
        while queue:
            s, pl, arrived = queue.popleft()
            if self.is_known(s):
                continue
            self._mark_known(s, pl)
            if not arrived:
                decoded.append(s)
                self.decoded_log.append((s, now))
            for p in sorted(self._rows):
                row = self._rows.get(p)
                if row is None:
                    continue
                c = row.coeffs.pop(s, None)
                if c is None:
                    continue
                if row.rhs is not None and pl is not None:
                    row.rhs = row.rhs ^ gf.scale(c, pl)
                if s == p:
                    del self._rows[p]
                    if row.coeffs:
                        self._insert_row(row.coeffs, row.rhs, queue)
                elif len(row.coeffs) == 1:
                    self._queue_singleton(row, queue)

    def _mark_known(self, seq, payload):
        if self.store_payloads:
            if payload is None:
                raise ValueError("store_payloads receiver fed a payload-less packet")
            self.payloads[seq] = np.asarray(payload, dtype=np.uint8)
        if seq == self.contig + 1:
            self.contig = seq
            while self.contig + 1 in self._known_above:
                self._known_above.discard(self.contig + 1)
                self.contig += 1
        else:
            self._known_above.add(seq)
