"""Online load splitting: receiver-driven hill climbing of the share vector.

Measurements arrive once per adaptation window.  The first window seeds the
shares proportionally to each path's delivery rate; afterwards the
controller walks the path list in order of increasing loss, growing one
path's share by a fixed step per window and shrinking the others in
proportion to their measured loss rates.  A window whose information loss
got worse undoes the last step and moves on to the next path; an exhausted
list triggers a fresh sort.  The threshold variant additionally restarts
from the sort whenever any path's measured loss moved by more than theta
between consecutive windows, keeping the current shares instead of
reverting.
"""

from dataclasses import dataclass

from .scheduler import LoadVector

DELTA_L = 0.03  # share increase applied to the probed path each window
THETA = 0.05  # per-path loss swing that triggers a re-sort (variant)

_INIT = "init"
_PROBING = "probing"


@dataclass(frozen=True)
class WindowMeasurement:
    """Per-window receiver report: per-path packet counts and the fraction
    of sources whose deadline expired in the window without recovery."""

    path_sent: tuple
    path_lost: tuple
    info_loss: float

    def __post_init__(self):
        if len(self.path_sent) != len(self.path_lost):
            raise ValueError("path_sent and path_lost sizes differ")
        if any(l > s for s, l in zip(self.path_sent, self.path_lost)):
            raise ValueError("lost exceeds sent on some path")


def bootstrap(n_paths):
    """Equal split used until the first measurement exists."""
    return LoadVector.uniform(n_paths)


def asymptotic_optimal(loss_rates):
    """Split proportional to per-path delivery rates (1 - loss)."""
    good = [max(0.0, 1.0 - l) for l in loss_rates]
    total = sum(good)
    if total <= 0.0:
        return LoadVector.uniform(len(loss_rates))
    return LoadVector(tuple(g / total for g in good))


class OlsController:
    """One instance drives one run; ``step`` consumes one window measurement
    and returns the share vector for the next window."""

    def __init__(self, n_paths, delta_l=DELTA_L, theta=None):
        if n_paths < 1:
            raise ValueError("need at least one path")
        if not 0.0 < delta_l <= 1.0:
            raise ValueError(f"delta_l must be in (0, 1], got {delta_l}")
        if theta is not None and theta <= 0.0:
            raise ValueError(f"theta must be positive, got {theta}")
        self.n = n_paths
        self.delta_l = delta_l
        self.theta = theta
        self.loads = bootstrap(n_paths)
        self.best = self.loads
        self.phase = _INIT
        self.probe_path = None
        self._remaining = []
        self._rates = [0.0] * n_paths
        self._prev_rates = None
        self._prev_info = None

    # -- measurement handling ----------------------------------------------

    def _update_rates(self, meas):
        """Loss rate per path; an idle path keeps its previous estimate."""
        if len(meas.path_sent) != self.n:
            raise ValueError("measurement path count does not match controller")
        for i in range(self.n):
            if meas.path_sent[i] > 0:
                self._rates[i] = meas.path_lost[i] / meas.path_sent[i]

    def step(self, meas):
        self._update_rates(meas)
        rates = list(self._rates)
        if self.phase == _INIT:
            self.best = asymptotic_optimal(rates)
            self.loads = self.best
            self._resort(rates)
            self._advance_probe(rates)
            self.phase = _PROBING
        elif self.theta is not None and self._theta_tripped(rates):
            # keep the shares we are at, re-rank the paths, probe afresh
            self.best = self.loads
            self._resort(rates)
            self._advance_probe(rates)
        elif self._prev_info is not None and meas.info_loss > self._prev_info:
            # the last increase hurt: undo it and give up on that path
            self.loads = self.best
            self._advance_probe(rates)
        else:
            # accepted: lock in and push the same path further
            self.best = self.loads
            changed = self._try_increase(self.probe_path, rates)
            if not changed:
                self._advance_probe(rates)
        self._prev_rates = rates
        self._prev_info = meas.info_loss
        return self.loads

    # -- internals -----------------------------------------------------------

    def _theta_tripped(self, rates):
        if self._prev_rates is None:
            return False
        return any(abs(rates[i] - self._prev_rates[i]) > self.theta
                   for i in range(self.n))

    def _resort(self, rates):
        self._remaining = sorted(range(self.n), key=lambda i: (rates[i], i))

    def _advance_probe(self, rates):
        """Move to the next probe-worthy path and apply its first increase."""
        for _ in range(2 * self.n + 1):
            if not self._remaining:
                self._resort(rates)
            self.probe_path = self._remaining.pop(0)
            if self._try_increase(self.probe_path, rates):
                return
        # nothing can move (degenerate split); stand pat on best
        self.loads = self.best

    def _try_increase(self, path, rates):
        """Grow ``path`` by delta_l off ``self.best``; False when saturated."""
        shares = list(self.best.shares)
        inc = min(self.delta_l, 1.0 - shares[path])
        if inc <= 1e-15:
            return False
        shares[path] += inc
        others = [i for i in range(self.n) if i != path]
        if not others:
            return False
        wsum = sum(rates[i] for i in others)
        for i in others:
            cut = inc * rates[i] / wsum if wsum > 0.0 else inc / len(others)
            shares[i] -= cut
        # negative shares clip to zero; the shortfall comes out of the
        # largest remaining share
        deficit = 0.0
        for i in others:
            if shares[i] < 0.0:
                deficit -= shares[i]
                shares[i] = 0.0
        while deficit > 1e-15:
            j = max(others, key=lambda i: (shares[i], -i))
            if shares[j] <= 0.0:
                break
            take = min(shares[j], deficit)
            shares[j] -= take
            deficit -= take
        self.loads = LoadVector(tuple(shares))
        return True
