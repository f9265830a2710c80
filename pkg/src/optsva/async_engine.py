"""Condition-triggered tasks and the drivers that execute engine steps.

Engine operations are written as generators.  They yield effects
(:class:`Wait`, :data:`PREEMPT`, :class:`Sleep`) and return their result
through ``StopIteration``.  Code between two yields is one atomic segment.
Three drivers interpret the effects:

* :class:`ThreadedDriver` runs steps on real threads under one monitor lock.
* :class:`Scheduler` runs steps of many actors one segment at a time and
  lets a policy pick the next actor; with a clock it doubles as a
  discrete-event simulator.
* :func:`explore` enumerates every schedule of a small program.
"""

from __future__ import annotations

import random
import threading
import time
from collections.abc import Callable, Generator, Hashable
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, TypeVar

T = TypeVar("T")
Steps = Generator[Any, None, T]


class DeadlockError(RuntimeError):
    """No actor can make progress although some have not finished."""


class _Preempt:
    __slots__ = ()

    def __repr__(self) -> str:
        return "PREEMPT"


PREEMPT = _Preempt()


@dataclass
class Wait:
    """Block until ``ready()`` holds.  ``reason`` shows up in deadlock dumps."""

    ready: Callable[[], bool]
    reason: str = ""


@dataclass
class Sleep:
    """Spend ``ticks`` units of simulated time (ignored by real threads)."""

    ticks: int


@dataclass(frozen=True)
class WakeCondition:
    """``counter`` of ``cell`` equals ``target``."""

    cell: Any
    counter: str
    target: int

    def holds(self) -> bool:
        return getattr(self.cell, self.counter) == self.target

    def __str__(self) -> str:
        return f"{self.counter}({self.cell.name})={self.target}"


class TaskState(str, Enum):
    WAITING = "waiting"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


class Task:
    """A body that runs once, after its wake condition first holds.

    Bodies must not block: by the time they run the condition they
    waited for is all they need.  A body returns ``False`` to report
    failure (the owning transaction is then pending an abort).
    """

    def __init__(self, key: str, cond: WakeCondition, body: Callable[[], bool | None]) -> None:
        self.key = key
        self.cond = cond
        self.body = body
        self.state = TaskState.WAITING

    @property
    def finished(self) -> bool:
        return self.state in (TaskState.DONE, TaskState.FAILED)

    def run(self) -> None:
        assert self.state is TaskState.WAITING, f"task {self.key} already ran"
        self.state = TaskState.RUNNING
        ok = self.body()
        self.state = TaskState.FAILED if ok is False else TaskState.DONE

    def cancel(self) -> None:
        if self.state is TaskState.WAITING:
            self.state = TaskState.DONE

    def __repr__(self) -> str:
        return f"Task({self.key}, {self.cond}, {self.state.value})"


class TaskRegistry:
    """Tasks that have been spawned but have not run yet."""

    def __init__(self) -> None:
        self._waiting: list[Task] = []

    def spawn_when(self, key: str, cond: WakeCondition, body: Callable[[], bool | None]) -> Task:
        task = Task(key, cond, body)
        self._waiting.append(task)
        return task

    def ready(self) -> list[Task]:
        self._waiting = [t for t in self._waiting if t.state is TaskState.WAITING]
        return [t for t in self._waiting if t.cond.holds()]

    def waiting(self) -> list[Task]:
        return [t for t in self._waiting if t.state is TaskState.WAITING]

    def run_ready(self) -> int:
        """Run ready tasks until none is left; returns how many ran."""
        ran = 0
        while True:
            batch = self.ready()
            if not batch:
                return ran
            for task in batch:
                if task.state is TaskState.WAITING:
                    task.run()
                    ran += 1


def join(task: Task) -> Steps[bool]:
    """Wait for ``task`` to finish; true iff it did not fail."""
    if not task.finished:
        yield Wait(lambda: task.finished, f"join {task.key}")
    return task.state is TaskState.DONE


# ---------------------------------------------------------------------------
# real threads
# ---------------------------------------------------------------------------


class ThreadedDriver:
    """Runs step generators on the calling thread under a shared monitor.

    Ready tasks run on whichever thread ends an atomic segment, so a task
    starts as soon as the segment that made its condition true is over.
    """

    def __init__(self, tasks: TaskRegistry, watchdog: float = 30.0) -> None:
        self.tasks = tasks
        self.watchdog = watchdog
        self._monitor = threading.Condition(threading.Lock())
        self._progress = 0

    def execute(self, steps: Steps[T]) -> T:
        with self._monitor:
            try:
                while True:
                    try:
                        effect = next(steps)
                    except StopIteration as stop:
                        return stop.value
                    if isinstance(effect, Wait):
                        self._settle()
                        self._block(effect)
                    elif effect is PREEMPT:
                        # let other threads in between operations
                        self._settle()
                        self._monitor.release()
                        time.sleep(0)
                        self._monitor.acquire()
                    elif isinstance(effect, Sleep):
                        continue
                    else:
                        raise TypeError(f"unknown effect {effect!r}")
            finally:
                self._settle()

    def _settle(self) -> None:
        self.tasks.run_ready()
        self._progress += 1
        self._monitor.notify_all()

    def _block(self, effect: Wait) -> None:
        while not effect.ready():
            seen = self._progress
            if not self._monitor.wait(self.watchdog) and seen == self._progress:
                pending = ", ".join(repr(t) for t in self.tasks.waiting()) or "none"
                raise DeadlockError(f"stuck waiting for {effect.reason}; waiting tasks: {pending}")


# ---------------------------------------------------------------------------
# deterministic scheduling
# ---------------------------------------------------------------------------


@dataclass
class _Actor:
    name: str
    steps: Steps[Any]
    pending: Any = None
    wake_at: int = 0
    done: bool = False
    result: Any = None
    error: BaseException | None = None

    def runnable(self, now: int) -> bool:
        if self.done:
            return False
        if isinstance(self.pending, Wait):
            return self.pending.ready()
        if isinstance(self.pending, Sleep):
            return now >= self.wake_at
        return True


Policy = Callable[[list[str]], int]


def first_enabled(keys: list[str]) -> int:
    return 0


def random_policy(seed: int) -> Policy:
    rng = random.Random(seed)
    return lambda keys: rng.randrange(len(keys))


class Scheduler:
    """Interleaves actors at yield points, one atomic segment at a time.

    Enabled choices are listed ready tasks first (``task:<key>``), then
    actors in the order they were added.  A :class:`Wait` that already
    holds is not a scheduling point.  :class:`Sleep` parks an actor until
    the clock reaches its wake time; the clock jumps forward only when
    nothing else is enabled.
    """

    def __init__(self, tasks: TaskRegistry, policy: Policy = first_enabled, max_steps: int = 1_000_000) -> None:
        self.tasks = tasks
        self.policy = policy
        self.max_steps = max_steps
        self.now = 0
        self.actors: dict[str, _Actor] = {}
        self.choices: list[str] = []
        # whatever the builder wants visitors to see (engine, outcome, ...)
        self.context: Any = None

    def spawn(self, name: str, steps: Steps[Any]) -> None:
        if name in self.actors:
            raise ValueError(f"duplicate actor {name}")
        self.actors[name] = _Actor(name, steps)

    def enabled(self) -> list[str]:
        keys = [f"task:{t.key}" for t in self.tasks.ready()]
        keys.extend(a.name for a in self.actors.values() if a.runnable(self.now))
        return keys

    @property
    def finished(self) -> bool:
        return all(a.done for a in self.actors.values())

    def step(self, key: str) -> None:
        self.choices.append(key)
        if key.startswith("task:"):
            wanted = key[5:]
            for task in self.tasks.ready():
                if task.key == wanted:
                    task.run()
                    return
            raise KeyError(key)
        self._advance(self.actors[key])

    def _advance(self, actor: _Actor) -> None:
        actor.pending = None
        while True:
            try:
                effect = next(actor.steps)
            except StopIteration as stop:
                actor.done, actor.result = True, stop.value
                return
            except Exception as exc:  # surfaced by run()
                actor.done, actor.error = True, exc
                return
            if isinstance(effect, Wait):
                if effect.ready():
                    continue
                actor.pending = effect
                return
            if isinstance(effect, Sleep):
                if effect.ticks <= 0:
                    continue
                actor.pending, actor.wake_at = effect, self.now + effect.ticks
                return
            if effect is PREEMPT:
                actor.pending = effect
                return
            raise TypeError(f"unknown effect {effect!r}")

    def run(self) -> None:
        steps = 0
        while True:
            keys = self.enabled()
            if not keys:
                if self.finished:
                    break
                sleepers = [a.wake_at for a in self.actors.values() if not a.done and isinstance(a.pending, Sleep)]
                if sleepers:
                    self.now = max(self.now, min(sleepers))
                    continue
                raise DeadlockError(self.describe_blocked())
            self.step(keys[self.policy(keys)])
            steps += 1
            if steps > self.max_steps:
                raise DeadlockError(f"step budget {self.max_steps} exhausted")
        for actor in self.actors.values():
            if actor.error is not None:
                raise actor.error

    def describe_blocked(self) -> str:
        lines = []
        for a in self.actors.values():
            if not a.done:
                reason = a.pending.reason if isinstance(a.pending, Wait) else repr(a.pending)
                lines.append(f"{a.name}: {reason}")
        lines.extend(f"task {t.key}: {t.cond}" for t in self.tasks.waiting())
        return "; ".join(lines)


def explore(
    build: Callable[[], Scheduler],
    visit: Callable[[Scheduler], None],
    state_key: Callable[[Scheduler], Hashable] | None = None,
    limit: int | None = None,
) -> int:
    """Run every schedule of the program that ``build`` sets up.

    Depth first: a run follows the first enabled choice to the end and
    leaves the other choices on a stack; each of those is later reached
    by replaying its choice prefix on a fresh scheduler.  With
    ``state_key`` a node whose state was already expanded is pruned.
    ``visit`` sees each finished run.  Returns the number of finished runs
    visited.
    """
    seen: set[Hashable] = set()
    stack: list[list[str]] = [[]]
    runs = 0
    while stack:
        prefix = stack.pop()
        sched = build()
        for key in prefix:
            sched.step(key)
        while True:
            keys = sched.enabled()
            if not keys:
                break
            if state_key is not None:
                node = state_key(sched)
                if node in seen:
                    keys = None
                    break
                seen.add(node)
            path = list(sched.choices)
            stack.extend(path + [k] for k in reversed(keys[1:]))
            sched.step(keys[0])
        if keys is None:
            continue
        if not sched.finished:
            raise DeadlockError(sched.describe_blocked())
        for actor in sched.actors.values():
            if actor.error is not None:
                raise actor.error
        visit(sched)
        runs += 1
        if limit is not None and runs >= limit:
            break
    return runs


@dataclass
class Barrier:
    """Program-level rendezvous used by scenario scripts."""

    name: str
    parties: int
    arrived: int = 0

    def arrive(self) -> Steps[None]:
        self.arrived += 1
        yield Wait(lambda: self.arrived >= self.parties, f"barrier {self.name}")


@dataclass
class StartTickets:
    """Forces transactions to start in a fixed global order."""

    order: list[Hashable]
    position: int = 0
    index: dict[Hashable, int] = field(init=False)

    def __post_init__(self) -> None:
        self.index = {k: i for i, k in enumerate(self.order)}

    def wait_turn(self, key: Hashable) -> Steps[None]:
        mine = self.index[key]
        yield Wait(lambda: self.position == mine, f"start ticket {key}")

    def advance(self) -> None:
        self.position += 1
