"""Exact event-driven realization of the reaction-diffusion flow.

In coupled mode a point ``(t, u)`` of mark ``m`` fires iff ``u`` lies below
the mark's rate in the state just before ``t``.  Only the stripes
``[s, s+1)`` with ``s < ceil(rate)`` can fire, so the engine keeps the next
point of every such stripe in a heap.  A stripe that becomes active is
scanned from the current time on and never retroactively.  Because cells
of the :class:`~rdips.streams.EventStream` are replayable, any number of
flows (other initial data, other truncation levels, other rate functions)
read exactly the same points, which is the pathwise coupling.

Independent mode is the classical direct method with the same law and no
stripe bookkeeping.  It is for throughput only.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

from .configuration import MAX_COUNT, Configuration, CountOverflowError
from .streams import EventStream

__all__ = [
    "BIRTH",
    "DEATH",
    "JUMP",
    "Mark",
    "EngineConfig",
    "Trajectory",
    "TruncationLadder",
    "EngineError",
    "TransitionError",
    "RunawayError",
    "apply_transition",
    "apply_transition_m",
    "total_rate",
    "run_flow",
    "run_coupled_pair",
    "run_flows",
    "run_truncation_ladder",
]

BIRTH, DEATH, JUMP = "birth", "death", "jump"
_KIND_CODE = {BIRTH: 0, DEATH: 1, JUMP: 2}
DEFAULT_EVENT_CAP = 10**8


class Mark(NamedTuple):
    kind: str
    site: object
    target: object = None

    @classmethod
    def birth(cls, site) -> "Mark":
        return cls(BIRTH, site)

    @classmethod
    def death(cls, site) -> "Mark":
        return cls(DEATH, site)

    @classmethod
    def jump(cls, site, target) -> "Mark":
        return cls(JUMP, site, target)


class EngineError(RuntimeError):
    pass


class TransitionError(EngineError, ValueError):
    """A death or jump was requested from an empty site."""


class RunawayError(EngineError):
    """The accepted-event count exceeded the configured cap."""


@dataclass(frozen=True)
class EngineConfig:
    mode: str = "coupled"
    truncation_m: int | None = None
    t_end: float = 1.0
    sample_times: tuple = ()
    event_cap: int = DEFAULT_EVENT_CAP
    record_rejected: bool = False

    def __post_init__(self):
        if self.mode not in ("coupled", "independent"):
            raise ValueError(f"unknown engine mode {self.mode!r}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        object.__setattr__(self, "sample_times", tuple(float(s) for s in self.sample_times))
        if any(not 0 <= s <= self.t_end for s in self.sample_times):
            raise ValueError("sample_times must lie in [0, t_end]")
        if self.truncation_m is not None and self.truncation_m < 1:
            raise ValueError("truncation_m must be a positive integer")


# -- transitions -------------------------------------------------------------


def apply_transition(eta: Configuration, mark: Mark) -> Configuration:
    """Untruncated transition operator of ``mark``."""
    return apply_transition_m(eta, mark, None)


def apply_transition_m(eta: Configuration, mark: Mark, m: int | None) -> Configuration:
    """Transition with arrivals at sites already holding ``m`` particles killed."""
    kind, x, y = mark
    if kind == BIRTH:
        if m is not None and eta[x] >= m:
            return eta
        return eta.add(x, 1)
    if eta[x] < 1:
        raise TransitionError(f"{kind} from empty site {x!r}")
    if kind == DEATH:
        return eta.add(x, -1)
    if kind == JUMP:
        if x == y:
            return eta
        out = eta.add(x, -1)
        if m is not None and eta[y] >= m:
            return out
        return out.add(y, 1)
    raise ValueError(f"unknown mark kind {kind!r}")


def mark_rate(eta, mark: Mark, fam, g) -> float:
    kind, x, y = mark
    k = eta.get(x, 0)
    if kind == BIRTH:
        return fam.rates(k)[0]
    if kind == DEATH:
        return fam.rates(k)[1]
    for j, p in g.kernel_row(x):
        if j == y:
            return p * k
    return 0.0


def total_rate(eta: Configuration, fam, g) -> float:
    """Sum of all mark rates, self-jumps included."""
    parts = []
    for x, k in eta.items():
        fp, fm = fam.rates(k)
        parts.append(fp + fm + k * math.fsum(p for _, p in g.kernel_row(x)))
    return math.fsum(parts)


# -- trajectories ------------------------------------------------------------


@dataclass
class Trajectory:
    """Piecewise-constant path with its accepted events.

    ``changes[k]`` lists ``(site, new_count)`` for the ``k``-th accepted
    event; a truncated no-op birth has an empty change list.
    """

    initial: Configuration
    t_end: float
    times: list = field(default_factory=list)
    marks: list = field(default_factory=list)
    changes: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    sample_times: tuple = ()
    samples: list = field(default_factory=list)
    truncation_m: int | None = None
    mode: str = "coupled"

    def __len__(self):
        return len(self.times)

    @property
    def states(self) -> list:
        """Configuration after each accepted event."""
        cur = self.initial.as_dict()
        out = []
        for ch in self.changes:
            _apply_changes(cur, ch)
            out.append(Configuration._trusted(dict(cur)))
        return out

    @property
    def final(self) -> Configuration:
        cur = self.initial.as_dict()
        for ch in self.changes:
            _apply_changes(cur, ch)
        return Configuration._trusted(cur)

    @property
    def event_log(self) -> list:
        """``(time, Mark, accepted)`` in time order."""
        log = [(t, mk, True) for t, mk in zip(self.times, self.marks)]
        log += [(t, mk, False) for t, mk in self.rejected]
        log.sort(key=lambda e: e[0])
        return log

    def state_at(self, t: float) -> Configuration:
        """Right-continuous state at time ``t``."""
        return self.sample([t])[0]

    def sample(self, times: Sequence[float]) -> list:
        order = sorted(range(len(times)), key=lambda i: times[i])
        out = [None] * len(times)
        cur = self.initial.as_dict()
        k = 0
        n = len(self.times)
        for i in order:
            s = times[i]
            while k < n and self.times[k] <= s:
                _apply_changes(cur, self.changes[k])
                k += 1
            out[i] = Configuration._trusted(dict(cur))
        return out

    def segments(self) -> Iterator[tuple[float, float, dict, tuple]]:
        """Yield ``(start, stop, state, changes_at_stop)`` over ``[0, t_end]``.

        ``state`` is one dict mutated in place between yields.
        """
        cur = self.initial.as_dict()
        start = 0.0
        for t, ch in zip(self.times, self.changes):
            yield start, t, cur, ch
            _apply_changes(cur, ch)
            start = t
        yield start, self.t_end, cur, ()

    def max_occupancy(self) -> int:
        best = max(self.initial.values(), default=0)
        for ch in self.changes:
            for _, k in ch:
                if k > best:
                    best = k
        return best

    def same_path(self, other: "Trajectory") -> bool:
        """Event-for-event equality of accepted events and resulting states."""
        return (
            self.initial == other.initial
            and self.times == other.times
            and self.marks == other.marks
            and self.changes == other.changes
        )


def _apply_changes(cur: dict, changes) -> None:
    for s, k in changes:
        if k:
            cur[s] = k
        else:
            cur.pop(s, None)


@dataclass
class TruncationLadder:
    untruncated: Trajectory
    by_m: dict
    stable_m: int | None
    max_occupancy: int


# -- coupled kernel ----------------------------------------------------------


class _CoupledFlow:
    """One flow reading an :class:`EventStream`; see the module docstring."""

    def __init__(self, eta0: Configuration, fam, g, cfg: EngineConfig, stream: EventStream):
        self.fam = fam
        self.g = g
        self.m = cfg.truncation_m
        self.t_end = cfg.t_end
        self.cap = cfg.event_cap
        self.record_rejected = cfg.record_rejected
        self.stream = stream
        self.counts = eta0.as_dict()
        # per-mark columns
        self.kind: list = []
        self.src: list = []
        self.dst: list = []
        self.prob: list = []
        self.key: list = []
        self.rate: list = []
        self.active: list = []
        self.site_marks: dict = {}
        self.heap: list = []
        self.in_heap: set = set()

    def _ensure_site(self, s):
        mids = self.site_marks.get(s)
        if mids is not None:
            return mids
        g = self.g
        mids = []
        base = g.mark_key(s)
        specs = [(0, s, None, 0.0, (0,) + base), (1, s, None, 0.0, (1,) + base)]
        for y, p in g.kernel_row(s):
            if y != s:
                specs.append((2, s, y, p, (2,) + g.jump_key(s, y)))
        for kind, x, y, p, key in specs:
            mids.append(len(self.kind))
            self.kind.append(kind)
            self.src.append(x)
            self.dst.append(y)
            self.prob.append(p)
            self.key.append(key)
            self.rate.append(0.0)
            self.active.append(0)
        self.site_marks[s] = mids
        return mids

    def _refresh(self, s, now):
        mids = self._ensure_site(s)
        k = self.counts.get(s, 0)
        fp, fm = self.fam.rates(k)
        rate, active, kind, prob = self.rate, self.active, self.kind, self.prob
        for mid in mids:
            c = kind[mid]
            r = fp if c == 0 else fm if c == 1 else prob[mid] * k
            rate[mid] = r
            need = math.ceil(r) if r > 0 else 0
            have = active[mid]
            if need > have:
                self._activate(mid, have, need, now)
            active[mid] = need

    def _activate(self, mid, lo, hi, now):
        in_heap, heap, key, stream, horizon = self.in_heap, self.heap, self.key[mid], self.stream, self.t_end
        for st in range(lo, hi):
            tag = (mid, st)
            if tag in in_heap:
                continue
            nxt = stream.next_point(key, st, now, horizon)
            if nxt is not None:
                in_heap.add(tag)
                heapq.heappush(heap, (nxt[0], mid, st, nxt[1], nxt[2], nxt[3]))

    def run(self) -> Trajectory:
        counts = self.counts
        initial = Configuration._trusted(dict(counts))
        for s in sorted(counts):
            self._refresh(s, 0.0)
        times, mids_log, changes, rejected = [], [], [], []
        heap, in_heap, active, rate = self.heap, self.in_heap, self.active, self.rate
        kind, src, dst, key = self.kind, self.src, self.dst, self.key
        stream, horizon, m, cap = self.stream, self.t_end, self.m, self.cap
        pop, push = heapq.heappop, heapq.heappush
        accepted = 0
        while heap:
            t, mid, st, u, blk, pos = pop(heap)
            if st >= active[mid]:
                in_heap.discard((mid, st))
                continue
            nxt = stream.advance(key[mid], st, blk, pos, horizon)
            if nxt is None:
                in_heap.discard((mid, st))
            else:
                push(heap, (nxt[0], mid, st, nxt[1], nxt[2], nxt[3]))
            if not u < rate[mid]:
                if self.record_rejected:
                    rejected.append((t, mid))
                continue
            c = kind[mid]
            x = src[mid]
            kx = counts.get(x, 0)
            if c == 0:
                if m is not None and kx >= m:
                    ch = ()
                else:
                    if kx >= MAX_COUNT:
                        raise CountOverflowError(f"count at {x!r} overflows at t={t}")
                    counts[x] = kx + 1
                    ch = ((x, kx + 1),)
            elif c == 1:
                _drop(counts, x, kx)
                ch = ((x, kx - 1),)
            else:
                y = dst[mid]
                _drop(counts, x, kx)
                ky = counts.get(y, 0)
                if m is not None and ky >= m:
                    ch = ((x, kx - 1),)
                else:
                    if ky >= MAX_COUNT:
                        raise CountOverflowError(f"count at {y!r} overflows at t={t}")
                    counts[y] = ky + 1
                    ch = ((x, kx - 1), (y, ky + 1))
            times.append(t)
            mids_log.append(mid)
            changes.append(ch)
            accepted += 1
            if accepted > cap:
                raise RunawayError(f"more than {cap} accepted events before t={t}; raise event_cap or shorten t_end")
            for s, _ in ch:
                self._refresh(s, t)
        marks = [self.as_mark(mid) for mid in mids_log]
        rej = [(t, self.as_mark(mid)) for t, mid in rejected]
        return Trajectory(initial, horizon, times, marks, changes, rej, truncation_m=m, mode="coupled")

    def as_mark(self, mid) -> Mark:
        c = self.kind[mid]
        if c == 0:
            return Mark(BIRTH, self.src[mid])
        if c == 1:
            return Mark(DEATH, self.src[mid])
        return Mark(JUMP, self.src[mid], self.dst[mid])


def _drop(counts, x, kx):
    if kx < 1:
        raise TransitionError(f"transition from empty site {x!r}")
    if kx == 1:
        del counts[x]
    else:
        counts[x] = kx - 1


# -- independent kernel ------------------------------------------------------


def _run_direct(eta0: Configuration, fam, g, cfg: EngineConfig, stream: EventStream) -> Trajectory:
    gen = stream.generator(0xD1)
    buf: list = []
    counts = eta0.as_dict()
    initial = Configuration._trusted(dict(counts))
    m, horizon, cap = cfg.truncation_m, cfg.t_end, cfg.event_cap
    rows: dict = {}

    def moves(s):
        r = rows.get(s)
        if r is None:
            r = rows[s] = [(y, p) for y, p in g.kernel_row(s) if y != s]
        return r

    site_rate: dict = {}

    def refresh(s):
        k = counts.get(s, 0)
        if k == 0:
            return site_rate.pop(s, 0.0)
        fp, fm = fam.rates(k)
        jump = k * math.fsum(p for _, p in moves(s))
        old = site_rate.get(s, 0.0)
        site_rate[s] = fp + fm + jump
        return old

    for s in sorted(counts):
        refresh(s)
    total = math.fsum(site_rate.values())
    times, marks, changes = [], [], []
    t = 0.0
    since = 0
    while total > 0:
        if len(buf) < 2:
            buf = gen.random(2048).tolist()[::-1]
        u1 = buf.pop()
        u2 = buf.pop()
        t += -math.log1p(-u1) / total
        if t > horizon:
            break
        target = u2 * total
        chosen = None
        for s, r in site_rate.items():
            if target < r:
                chosen = s
                break
            target -= r
        if chosen is None:
            chosen = next(reversed(site_rate))
            target = site_rate[chosen] * 0.5
        x = chosen
        kx = counts[x]
        fp, fm = fam.rates(kx)
        if target < fp:
            mark = Mark(BIRTH, x)
            if m is not None and kx >= m:
                ch = ()
            else:
                counts[x] = kx + 1
                ch = ((x, kx + 1),)
        elif target < fp + fm:
            mark = Mark(DEATH, x)
            _drop(counts, x, kx)
            ch = ((x, kx - 1),)
        else:
            target = (target - fp - fm) / kx
            y = None
            for y, p in moves(x):
                if target < p:
                    break
                target -= p
            mark = Mark(JUMP, x, y)
            _drop(counts, x, kx)
            ky = counts.get(y, 0)
            if m is not None and ky >= m:
                ch = ((x, kx - 1),)
            else:
                counts[y] = ky + 1
                ch = ((x, kx - 1), (y, ky + 1))
        times.append(t)
        marks.append(mark)
        changes.append(ch)
        if len(times) > cap:
            raise RunawayError(f"more than {cap} accepted events before t={t}")
        for s, _ in ch:
            old = refresh(s)
            total += site_rate.get(s, 0.0) - old
        since += 1
        if since >= 256 or total <= 1e-12:
            total = math.fsum(site_rate.values())
            since = 0
    return Trajectory(initial, horizon, times, marks, changes, truncation_m=m, mode="independent")


# -- public runners ----------------------------------------------------------


def _check_initial(eta0: Configuration, g, m):
    if not isinstance(eta0, Configuration):
        eta0 = Configuration(eta0)
    for s in eta0:
        g.check_site(s)
    if m is not None and any(k > m for k in eta0.values()):
        raise ValueError(f"initial configuration exceeds the truncation level m={m}")
    return eta0


def run_flow(eta0: Configuration, fam, g, cfg: EngineConfig, stream: EventStream) -> Trajectory:
    """Simulate one flow on ``[0, cfg.t_end]`` and sample it at ``cfg.sample_times``."""
    eta0 = _check_initial(eta0, g, cfg.truncation_m)
    if cfg.mode == "coupled":
        traj = _CoupledFlow(eta0, fam, g, cfg, stream).run()
    else:
        traj = _run_direct(eta0, fam, g, cfg, stream)
    traj.sample_times = cfg.sample_times
    traj.samples = traj.sample(cfg.sample_times) if cfg.sample_times else []
    return traj


def run_flows(etas: Sequence[Configuration], fam, g, cfg: EngineConfig, stream: EventStream) -> list:
    """Several coupled flows from one stream realization."""
    if cfg.mode != "coupled":
        raise ValueError("pathwise coupling requires coupled mode")
    return [run_flow(eta, fam, g, cfg, stream) for eta in etas]


def run_coupled_pair(eta0, eta0b, fam, g, cfg: EngineConfig, stream: EventStream) -> tuple:
    """Two flows driven by the same marks.

    A point fires both flows iff its height is below both rates, which is
    the min/max split of the coupled generator.
    """
    a, b = run_flows([eta0, eta0b], fam, g, cfg, stream)
    return a, b


def run_truncation_ladder(eta0, fam, g, t_end: float, m_list: Sequence[int], stream: EventStream, sample_times=()) -> TruncationLadder:
    """Untruncated flow plus ``Phi^m`` for every ``m``, all from ``stream``.

    ``stable_m`` is the smallest listed ``m`` whose path equals the
    untruncated one event for event.  Levels below the largest initial
    count are skipped, since ``eta0`` would not lie in the truncated space.
    """
    eta0 = _check_initial(eta0, g, None)
    floor = max(eta0.values(), default=0)
    base = EngineConfig(mode="coupled", t_end=t_end, sample_times=tuple(sample_times))
    full = run_flow(eta0, fam, g, base, stream)
    by_m = {}
    for m in sorted(set(m_list)):
        if m < floor:
            continue
        cfg = EngineConfig(mode="coupled", truncation_m=m, t_end=t_end, sample_times=tuple(sample_times))
        by_m[m] = run_flow(eta0, fam, g, cfg, stream)
    stable = next((m for m in sorted(by_m) if by_m[m].same_path(full)), None)
    return TruncationLadder(full, by_m, stable, full.max_occupancy())
