"""Graphical construction and event-driven dynamics of the East process.

Supported starts are a finite window of spins plus a convention for what
lies outside it:

* ``Boundary.FROZEN_ZERO``: the site ``lo - 1`` is a frozen 0 and the window
  ``[lo, hi]`` is the whole system (finite-volume East chain).
* ``Boundary.ALL_ONES``: every site outside the window is 1.  Sites left of
  ``lo`` are then inert, and the window grows to the right ahead of the
  front, which realises the half-line / infinite-line process started from
  a configuration with a front.

Because the constraint of ``x`` only reads ``x - 1``, a run restricted to
sites ``<= x`` never depends on sites ``> x``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import stats as sps

from . import _east_kernels as _k

__version__ = "0.1.0"

NO_FRONT = _k.NO_FRONT
DEFAULT_W_KEEP = 512
DEFAULT_MEM_CAP = 1 << 26


class UsageError(ValueError):
    """Invalid arguments (maps to CLI exit code 2)."""


class ResourceCapError(RuntimeError):
    """A configured size cap was exceeded (maps to CLI exit code 3).

    ``partial`` holds whatever was computed before the cap was hit.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class CheckFailure(AssertionError):
    """A model-implied inequality failed beyond its CI (CLI exit code 4)."""


@dataclass(frozen=True)
class Params:
    p: float

    def __post_init__(self):
        if not (0.0 < self.p < 1.0) or not math.isfinite(self.p):
            raise UsageError(f"p must lie in (0, 1), got {self.p!r}")

    @property
    def q(self) -> float:
        return 1.0 - self.p


class Boundary(str, enum.Enum):
    FROZEN_ZERO = "FrozenZeroAtLoMinus1"
    ALL_ONES = "AllOnesBeyondWindow"


@dataclass
class LatticeState:
    """Spins on ``[lo, hi]`` with a boundary convention.

    The front is recomputed from the spins; with ``FROZEN_ZERO`` and no zero
    inside the window it is ``lo - 1`` (the frozen site).
    """

    lo: int
    spins: np.ndarray
    boundary: Boundary = Boundary.ALL_ONES

    def __post_init__(self):
        self.spins = np.asarray(self.spins, dtype=np.uint8).copy()
        if self.spins.ndim != 1 or self.spins.size < 1:
            raise UsageError("window length must be >= 1")
        if np.any(self.spins > 1):
            raise UsageError("spins must be 0/1")
        self.boundary = Boundary(self.boundary)

    @property
    def hi(self) -> int:
        return self.lo + self.spins.size - 1

    @property
    def front(self) -> int | None:
        zeros = np.flatnonzero(self.spins == 0)
        if zeros.size:
            return self.lo + int(zeros[-1])
        if self.boundary is Boundary.FROZEN_ZERO:
            return self.lo - 1
        return None

    @property
    def left_spin(self) -> int:
        return 0 if self.boundary is Boundary.FROZEN_ZERO else 1

    def spin(self, x: int) -> int:
        if self.lo <= x <= self.hi:
            return int(self.spins[x - self.lo])
        if x == self.lo - 1:
            return self.left_spin
        return 1

    def copy(self) -> "LatticeState":
        return LatticeState(self.lo, self.spins.copy(), self.boundary)

    @classmethod
    def omega_star(cls) -> "LatticeState":
        """Single zero at the origin, ones everywhere else."""
        return cls(0, np.zeros(1, np.uint8), Boundary.ALL_ONES)

    @classmethod
    def all_ones(cls, L: int, lo: int = 1) -> "LatticeState":
        """The finite chain on ``[lo, lo + L - 1]`` started from all ones."""
        return cls(lo, np.ones(L, np.uint8), Boundary.FROZEN_ZERO)


def _check_site(state: LatticeState, x: int):
    if not (state.lo <= x <= state.hi):
        raise UsageError(f"site {x} outside window [{state.lo}, {state.hi}]")


def constraint(state: LatticeState, x: int) -> bool:
    """True iff the spin left of ``x`` is 0."""
    _check_site(state, x)
    return state.spin(x - 1) == 0


def apply_ring(state: LatticeState, x: int, coin: int) -> LatticeState:
    """Apply one ring of the clock at ``x`` with Bernoulli coin ``coin``.

    Illegal rings return an unchanged copy.
    """
    new = state.copy()
    if constraint(state, x):
        new.spins[x - new.lo] = 1 if coin else 0
    return new


class EventStream:
    """Seeded source of rings for the graphical construction.

    Replica ``r`` of master seed ``s`` draws from
    ``PCG64(SeedSequence([s, r]))``, so any subset of replicas can be
    reproduced without generating the others.
    """

    def __init__(self, seed: int, replica: int = 0):
        self.seed = int(seed)
        self.replica = int(replica)
        self._rng = None

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            ss = np.random.SeedSequence([self.seed & (2**64 - 1), self.replica])
            self._rng = np.random.Generator(np.random.PCG64(ss))
        return self._rng

    def spawn(self, replica: int) -> "EventStream":
        return EventStream(self.seed, replica)

    def rings(self, n_sites: int, p: float, lo: int = 0) -> Iterator[tuple[int, float, int]]:
        """Full per-site clock stream on ``n_sites`` sites: ``(site, time, coin)``.

        Matches the draw order of the JIT ``full_clock`` kernel.
        """
        rng = self.rng
        t = 0.0
        while True:
            t += rng.standard_exponential() / n_sites
            x = int(rng.random() * n_sites)
            coin = 1 if rng.random() < p else 0
            yield lo + x, t, coin


# -- probes -----------------------------------------------------------------

@dataclass(frozen=True)
class FrontProbe:
    """Front position at the given times."""
    times: Sequence[float]


@dataclass(frozen=True)
class BehindFrontProbe:
    """Bits at offsets -1..-width from the front, at the given times."""
    times: Sequence[float]
    width: int


@dataclass(frozen=True)
class WindowProbe:
    """Bits on the absolute sites ``[a, b]`` at the given times."""
    times: Sequence[float]
    a: int
    b: int


@dataclass(frozen=True)
class HitProbe:
    """First time the front reaches ``target`` (optionally stop there)."""
    target: int
    stop: bool = False


@dataclass
class RunRecord:
    final: LatticeState
    horizon: float
    t_end: float
    n_events: int
    front_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    front: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    snap_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    behind: np.ndarray = field(default_factory=lambda: np.empty((0, 0), np.uint8))
    window_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    window: np.ndarray = field(default_factory=lambda: np.empty((0, 0), np.uint8))
    hit_time: float | None = None
    truncated: bool = False
    final_left_spin: int = 1


def _sorted_times(times, horizon):
    t = np.asarray(times, dtype=np.float64).ravel()
    if t.size and (np.any(np.diff(t) < 0) or t[0] < 0 or t[-1] > horizon):
        raise UsageError("probe times must be sorted within [0, horizon]")
    return t


def run(state0: LatticeState, params: Params, events: EventStream, horizon: float,
        probes: Sequence = (), w_keep: int | None = None,
        mem_cap: int = DEFAULT_MEM_CAP) -> RunRecord:
    """Evolve ``state0`` up to ``horizon`` using legal rings only.

    ``w_keep`` drops sites more than ``w_keep`` behind the front (their last
    value left of the kept window is frozen).  Only meaningful with
    ``Boundary.ALL_ONES``.
    """
    if not horizon >= 0:
        raise UsageError("horizon must be >= 0")
    kinds = {FrontProbe: "front", BehindFrontProbe: "behind", WindowProbe: "window", HitProbe: "hit"}
    chosen = {}
    for pr in probes:
        kind = kinds.get(type(pr))
        if kind is None:
            raise UsageError(f"unknown probe {pr!r}")
        if kind in chosen:
            raise UsageError(f"at most one {type(pr).__name__} per run")
        chosen[kind] = pr
    fp, bp, wp, hp = (chosen.get(k) for k in ("front", "behind", "window", "hit"))

    grow = state0.boundary is Boundary.ALL_ONES
    if w_keep is not None:
        if not grow:
            raise UsageError("left truncation needs the growing (ALL_ONES) convention")
        if bp is not None and bp.width > w_keep:
            raise UsageError("behind-front width exceeds w_keep")
    ft = _sorted_times(fp.times if fp else (), horizon)
    st = _sorted_times(bp.times if bp else (), horizon)
    wt = _sorted_times(wp.times if wp else (), horizon)
    sw = int(bp.width) if bp else 0
    if bp is not None and sw < 1:
        raise UsageError("behind-front width must be >= 1")
    wa, wb = (int(wp.a), int(wp.b)) if wp else (0, -1)
    target = int(hp.target) if hp else np.iinfo(np.int64).max // 4

    out = _k.gillespie(events.rng, float(params.p), state0.spins, state0.left_spin,
                       grow, -1 if w_keep is None else int(w_keep), int(mem_cap),
                       float(horizon), ft, st, sw, wt, wa, wb, int(state0.lo),
                       target, bool(hp.stop) if hp else False)
    (front_rec, snaps, wins, hit_time, final, lo, left_spin, _f,
     status, nev, t_end, i_f, i_s, i_w) = out
    boundary = state0.boundary
    rec = RunRecord(
        final=LatticeState(int(lo), final, boundary),
        horizon=float(horizon), t_end=float(t_end), n_events=int(nev),
        front_times=ft[:i_f], front=front_rec[:i_f],
        snap_times=st[:i_s], behind=snaps[:i_s],
        window_times=wt[:i_w], window=wins[:i_w],
        hit_time=None if hit_time < 0 else float(hit_time),
        truncated=bool(int(lo) != state0.lo),
        final_left_spin=int(left_spin),
    )
    if status == _k.STATUS_MEMORY:
        raise ResourceCapError(f"window growth exceeded mem_cap={mem_cap}", partial=rec)
    return rec


@dataclass
class CoalescenceRecord:
    coalescence_time: float | None
    tau: float | None
    final: np.ndarray
    sample_times: np.ndarray
    samples: np.ndarray
    n_events: int

    @property
    def bound_holds(self) -> bool:
        """Coalescence no later than the all-ones hitting time of the right end."""
        if self.tau is None:
            return True
        return self.coalescence_time is not None and self.coalescence_time <= self.tau


def coupled_run(states0: Sequence[LatticeState], params: Params, events: EventStream,
                horizon: float, sample_times: Sequence[float] = (),
                stop_when_done: bool = False) -> CoalescenceRecord:
    """Basic coupling: every replica sees the same rings and coins.

    The full per-site clock stream of the window is simulated.  An all-ones
    replica is tracked alongside the given states to time ``tau``, the first
    zero at the right end of the window.
    """
    if not states0:
        raise UsageError("need at least one initial state")
    lo, n, bd = states0[0].lo, states0[0].spins.size, states0[0].boundary
    for s in states0:
        if (s.lo, s.spins.size, s.boundary) != (lo, n, bd):
            raise UsageError("all states must share the window and boundary convention")
    S = np.stack([s.spins for s in states0]).astype(np.uint8)
    n_user = S.shape[0]
    S = np.vstack([S, np.ones((1, n), np.uint8)])
    st = _sorted_times(sample_times, horizon)
    coal, tau, samples, nev, _ = _k.full_clock(
        events.rng, float(params.p), S, n_user, states0[0].left_spin, float(horizon),
        st, n_user, stop_when_done)
    return CoalescenceRecord(
        coalescence_time=None if coal < 0 else float(coal),
        tau=None if tau < 0 else float(tau),
        final=S[:n_user].copy(),
        sample_times=st[:samples.shape[0]],
        samples=samples[:, :n_user],
        n_events=int(nev),
    )


def hitting_times(params: Params, L: int, replicas: int, seed: int) -> np.ndarray:
    """Samples of tau(L) on [1, L] from all ones, one stream per replica."""
    if L < 1:
        raise UsageError("L must be >= 1")
    out = np.empty(replicas)
    base = EventStream(seed)
    for r in range(replicas):
        out[r] = _k.hitting_times(base.spawn(r).rng, float(params.p), int(L), 1)[0]
    return out


# -- finite speed of propagation ---------------------------------------------

@dataclass(frozen=True)
class LinkingEventQuery:
    x: int
    y: int
    s: float
    t: float

    def __post_init__(self):
        if abs(self.x - self.y) < 1:
            raise UsageError("need |x - y| >= 1")
        if not self.t > self.s:
            raise UsageError("need t > s")


@dataclass(frozen=True)
class LinkingProbability:
    probability: float
    log_probability: float
    bound_applies: bool
    bound: float


def default_vmax(max_v: int = 64) -> int:
    """Smallest integer v with P(Poisson(1) >= v) <= exp(-v)."""
    for v in range(1, max_v + 1):
        if sps.poisson.logsf(v - 1, 1.0) <= -v:
            return v
    raise RuntimeError("no v_max found")


def _log_poisson_tail(n: int, mu: float) -> float:
    """log P(Poisson(mu) >= n), stable far into the tail."""
    logp = float(sps.poisson.logsf(n - 1, mu))
    if math.isfinite(logp) and logp > -700:
        return logp
    # P(N >= n) = pmf(n) * sum_k mu^k / ((n+1)...(n+k)), converges for n > mu
    term, total, k = 1.0, 1.0, 1
    while term > 1e-17 * total:
        term *= mu / (n + k)
        total += term
        k += 1
    return float(sps.poisson.logpmf(n, mu)) + math.log(total)


def linking_probability(query: LinkingEventQuery, v_max: float | None = None) -> LinkingProbability:
    """P(a rate-1 Poisson process has >= |x - y| points in (s, t])."""
    n = abs(query.x - query.y)
    mu = query.t - query.s
    logp = _log_poisson_tail(n, mu)
    vm = default_vmax() if v_max is None else v_max
    return LinkingProbability(
        probability=math.exp(logp),
        log_probability=logp,
        bound_applies=n >= vm * mu,
        bound=math.exp(-n),
    )


# -- serialization ----------------------------------------------------------

def write_records_csv(path, records: Sequence[RunRecord], replica_ids: Sequence[int] | None = None):
    """One row per front sample: replica, t, front, then b1..bw behind-front bits
    when the records carry snapshots taken at the same times."""
    ids = range(len(records)) if replica_ids is None else replica_ids
    with open(path, "w") as fh:
        width = 0
        if records and records[0].behind.size and np.array_equal(records[0].snap_times, records[0].front_times):
            width = records[0].behind.shape[1]
        head = ["replica", "t", "front"] + [f"b{i}" for i in range(1, width + 1)]
        fh.write(",".join(head) + "\n")
        for rid, rec in zip(ids, records):
            for n, (t, x) in enumerate(zip(rec.front_times, rec.front)):
                row = [str(rid), repr(float(t)), str(int(x))]
                if width:
                    row += [str(int(b)) for b in rec.behind[n]]
                fh.write(",".join(row) + "\n")


def manifest(seed: int, params: Params | dict, horizon: float | None, probes, **extra) -> dict:
    pdict = {"p": params.p, "q": params.q} if isinstance(params, Params) else dict(params)
    return {
        "seed": int(seed),
        "params": pdict,
        "horizon": horizon,
        "probes": [repr(p) for p in probes],
        "code_version": __version__,
        "seed_scheme": "PCG64(SeedSequence([seed, replica]))",
        **extra,
    }


def write_manifest(path, data: dict):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, enum.Enum):
        return o.value
    raise TypeError(f"not JSON serializable: {type(o)}")
