"""Per-path loss and delay models.

A path has a constant one-way propagation delay and an independent loss
process: either iid (Bernoulli) losses or a two-state Gilbert-Elliot chain
for bursty losses.  The chain loses every packet in the bad state and none
in the good state; with entry probability p and exit probability r the
stationary loss rate is p/(p+r) and the mean burst length 1/r, so the chain
is parametrized directly by (plr, mean_burst):

    r = 1 / mean_burst          p = plr * r / (1 - plr)

which constrains plr <= mean_burst / (mean_burst + 1).
"""

from dataclasses import dataclass

from .rng import SplitMix64

UNIFORM = "uniform"
GILBERT_ELLIOT = "gilbert_elliot"

_GOOD = 0
_BAD = 1


@dataclass(frozen=True)
class LossModel:
    kind: str
    plr: float
    mean_burst: float = 1.0

    def __post_init__(self):
        if self.kind not in (UNIFORM, GILBERT_ELLIOT):
            raise ValueError(f"unknown loss model kind {self.kind!r}")
        if not 0.0 <= self.plr < 1.0:
            raise ValueError(f"plr must be in [0, 1), got {self.plr}")
        if self.kind == GILBERT_ELLIOT:
            if self.mean_burst < 1.0:
                raise ValueError(f"mean_burst must be >= 1, got {self.mean_burst}")
            p, _ = self.transition_probs()
            if p > 1.0:
                raise ValueError(
                    f"plr={self.plr} unreachable with mean_burst={self.mean_burst}"
                    f" (needs plr <= burst/(burst+1))")

    def transition_probs(self):
        """(p, r): good->bad and bad->good probabilities."""
        if self.kind != GILBERT_ELLIOT:
            raise ValueError("transition probabilities only exist for gilbert_elliot")
        r = 1.0 / self.mean_burst
        p = self.plr * r / (1.0 - self.plr)
        return p, r


@dataclass(frozen=True)
class PathConfig:
    prop_delay_ms: float
    loss: LossModel

    def __post_init__(self):
        if not self.prop_delay_ms > 0.0:
            raise ValueError(f"propagation delay must be positive, got {self.prop_delay_ms}")


class LossProcess:
    """Stateful per-packet loss decisions for one direction of one path."""

    def __init__(self, model, seed):
        self.model = model
        self._rng = SplitMix64(seed)
        self._p = 0.0
        self._r = 1.0
        self._state = _GOOD
        if model.kind == GILBERT_ELLIOT:
            self._p, self._r = model.transition_probs()
            # start from the stationary distribution
            if self._rng.next_double() < model.plr:
                self._state = _BAD

    def step(self):
        """Advance one packet; True means the packet is lost."""
        u = self._rng.next_double()
        if self.model.kind == UNIFORM:
            return u < self.model.plr
        lost = self._state == _BAD
        if self._state == _GOOD:
            if u < self._p:
                self._state = _BAD
        else:
            if u < self._r:
                self._state = _GOOD
        return lost


class Path:
    """Constant-delay, lossy, order-preserving packet pipe."""

    def __init__(self, config, seed):
        self.config = config
        self.loss = LossProcess(config.loss, seed)

    def transmit(self, now):
        """Arrival time of a packet sent now, or None if the path drops it."""
        if self.loss.step():
            return None
        return now + self.config.prop_delay_ms
