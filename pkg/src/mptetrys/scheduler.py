"""Load splitting of the outgoing packet stream across paths.

A single credit counter per path tracks how far that path lags its share of
the joint stream: every assignment first grants each path its share, then
the chosen path pays one whole packet.  Choosing the most-lagging path gives
smooth weighted round-robin; per-path totals can never drift more than one
packet per path away from the target shares, no matter how source and
repair packets interleave.

The repair placement strategy biases which positive-credit path is taken:
"long" hands repairs to the longest-delay path first (spilling to the
next-longest when its share is exhausted) while sources fill in from the
shortest-delay end, "short" mirrors that, and "any" is class-blind
most-lagging-path selection.  Either way the shares, not the strategy,
decide how much each path carries.
"""

import math
from dataclasses import dataclass

LONG = "long"
SHORT = "short"
ANY = "any"
STRATEGIES = (LONG, SHORT, ANY)

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class LoadVector:
    shares: tuple

    def __post_init__(self):
        object.__setattr__(self, "shares", tuple(float(s) for s in self.shares))
        problem = check_shares(self.shares)
        if problem:
            raise ValueError(problem)

    @classmethod
    def uniform(cls, n):
        return cls((1.0 / n,) * n)

    def __len__(self):
        return len(self.shares)

    def __getitem__(self, i):
        return self.shares[i]


def check_shares(shares):
    """Reason the shares are not a valid load vector, or None if they are."""
    if len(shares) == 0:
        return "empty load vector"
    total = 0.0
    for s in shares:
        if not isinstance(s, (int, float)) or isinstance(s, bool):
            return f"non-numeric share {s!r}"
        if math.isnan(s) or math.isinf(s):
            return f"non-finite share {s!r}"
        if s < 0.0:
            return f"negative share {s}"
        total += s
    if abs(total - 1.0) > _SUM_TOL:
        return f"shares sum to {total!r}, not 1"
    return None


class PacketScheduler:
    """Credit scheduler with repair-placement preference."""

    def __init__(self, delays, strategy=ANY, loads=None):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        self.n = len(delays)
        self.delays = tuple(float(d) for d in delays)
        self.strategy = strategy
        self.loads = loads if loads is not None else LoadVector.uniform(self.n)
        if len(self.loads) != self.n:
            raise ValueError("load vector size does not match path count")
        self.credits = [0.0] * self.n
        self.rejected_feedback = 0
        self.source_sent = [0] * self.n
        self.repair_sent = [0] * self.n
        # repair preference: delay order per strategy, index breaks ties;
        # sources prefer the opposite end so the repair path stays clear
        idx = list(range(self.n))
        if strategy == LONG:
            self._repair_order = sorted(idx, key=lambda i: (-self.delays[i], i))
        elif strategy == SHORT:
            self._repair_order = sorted(idx, key=lambda i: (self.delays[i], i))
        else:
            self._repair_order = idx
        self._source_order = list(reversed(self._repair_order)) if strategy != ANY else idx

    def assign(self, is_repair):
        """Pick the path for the next packet and account for it."""
        credits = self.credits
        shares = self.loads.shares
        for i in range(self.n):
            credits[i] += shares[i]
        order = self._repair_order if is_repair else self._source_order
        pick = -1
        if self.strategy != ANY:
            # first path in class preference order that is owed traffic
            for i in order:
                if credits[i] > 1e-12:
                    pick = i
                    break
        if pick < 0:
            # nothing is owed (or class-blind "any"): take the most lagging
            # path, preference order breaking exact ties
            best = -math.inf
            for i in order:
                if credits[i] > best:
                    best = credits[i]
                    pick = i
        credits[pick] -= 1.0
        if is_repair:
            self.repair_sent[pick] += 1
        else:
            self.source_sent[pick] += 1
        return pick

    def apply_feedback(self, shares):
        """Adopt a new load vector; malformed ones are rejected, keeping the
        previous vector.  Credits carry over so past imbalance is not
        forgotten.  Returns True when accepted."""
        if isinstance(shares, LoadVector):
            candidate = shares
        else:
            shares = tuple(shares)
            if len(shares) != self.n or check_shares(shares) is not None:
                self.rejected_feedback += 1
                return False
            candidate = LoadVector(shares)
        if len(candidate) != self.n:
            self.rejected_feedback += 1
            return False
        self.loads = candidate
        return True

    @property
    def sent(self):
        return [self.source_sent[i] + self.repair_sent[i] for i in range(self.n)]
