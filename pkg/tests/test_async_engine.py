import threading

import pytest

from optsva.async_engine import (
    PREEMPT,
    Barrier,
    DeadlockError,
    Scheduler,
    Sleep,
    StartTickets,
    TaskRegistry,
    TaskState,
    ThreadedDriver,
    Wait,
    WakeCondition,
    explore,
    first_enabled,
    join,
    random_policy,
)


class Cell:
    name = "c"

    def __init__(self):
        self.lv = 0


def test_task_runs_once_after_condition():
    cell, tasks, log = Cell(), TaskRegistry(), []
    tasks.spawn_when("t", WakeCondition(cell, "lv", 2), lambda: log.append(cell.lv))
    assert tasks.run_ready() == 0
    cell.lv = 1
    assert tasks.run_ready() == 0
    cell.lv = 2
    assert tasks.run_ready() == 1
    assert tasks.run_ready() == 0
    assert log == [2]


def test_failing_body_marks_task_failed():
    tasks = TaskRegistry()
    cell = Cell()
    task = tasks.spawn_when("t", WakeCondition(cell, "lv", 0), lambda: False)
    tasks.run_ready()
    assert task.state is TaskState.FAILED and task.finished


def test_cancelled_task_never_runs():
    tasks, cell, log = TaskRegistry(), Cell(), []
    task = tasks.spawn_when("t", WakeCondition(cell, "lv", 0), lambda: log.append(1))
    task.cancel()
    tasks.run_ready()
    assert log == [] and task.state is TaskState.DONE


def test_run_twice_is_a_bug():
    task = TaskRegistry().spawn_when("t", WakeCondition(Cell(), "lv", 0), lambda: None)
    task.run()
    with pytest.raises(AssertionError):
        task.run()


def counter_actor(log, name, n):
    for i in range(n):
        log.append((name, i))
        yield PREEMPT


def test_scheduler_policies_are_reproducible():
    def run(policy):
        log = []
        s = Scheduler(TaskRegistry(), policy)
        s.spawn("a", counter_actor(log, "a", 3))
        s.spawn("b", counter_actor(log, "b", 3))
        s.run()
        return log

    assert run(first_enabled) == [("a", 0), ("a", 1), ("a", 2), ("b", 0), ("b", 1), ("b", 2)]
    assert run(random_policy(4)) == run(random_policy(4))


def test_sleep_advances_clock_only_when_idle():
    log = []

    def sleeper(name, ticks):
        yield Sleep(ticks)
        log.append((name, s.now))

    s = Scheduler(TaskRegistry())
    s.spawn("slow", sleeper("slow", 10))
    s.spawn("fast", sleeper("fast", 3))
    s.run()
    assert log == [("fast", 3), ("slow", 10)]
    assert s.now == 10


def test_deadlock_is_reported():
    def stuck():
        yield Wait(lambda: False, "never")

    s = Scheduler(TaskRegistry())
    s.spawn("a", stuck())
    with pytest.raises(DeadlockError, match="never"):
        s.run()


def test_actor_errors_propagate():
    def broken():
        yield PREEMPT
        raise KeyError("boom")

    s = Scheduler(TaskRegistry())
    s.spawn("a", broken())
    with pytest.raises(KeyError):
        s.run()


def test_join_waits_for_task():
    cell, tasks = Cell(), TaskRegistry()
    task = tasks.spawn_when("t", WakeCondition(cell, "lv", 1), lambda: None)
    done = []

    def waiter():
        ok = yield from join(task)
        done.append(ok)

    def opener():
        yield PREEMPT
        cell.lv = 1

    s = Scheduler(tasks)
    s.spawn("w", waiter())
    s.spawn("o", opener())
    s.run()
    assert done == [True]


def test_explore_enumerates_all_interleavings():
    finals = set()

    def build():
        log = []
        s = Scheduler(TaskRegistry())
        s.spawn("a", counter_actor(log, "a", 2))
        s.spawn("b", counter_actor(log, "b", 2))
        s.context = log
        return s

    runs = explore(build, lambda s: finals.add(tuple(s.context)))
    # C(4, 2) orders of two 2-step actors
    assert len(finals) == 6
    assert runs >= 6


def test_explore_limit():
    def build():
        s = Scheduler(TaskRegistry())
        s.spawn("a", counter_actor([], "a", 3))
        s.spawn("b", counter_actor([], "b", 3))
        return s

    assert explore(build, lambda s: None, limit=2) == 2


def test_barrier_and_start_tickets():
    log = []
    barrier = Barrier("b", 2)
    tickets = StartTickets(["second", "first"])

    def party(name):
        yield from tickets.wait_turn(name)
        log.append(name)
        tickets.advance()
        yield from barrier.arrive()
        log.append(name + "-through")

    s = Scheduler(TaskRegistry())
    s.spawn("first", party("first"))
    s.spawn("second", party("second"))
    s.run()
    assert log[:2] == ["second", "first"]
    assert set(log[2:]) == {"first-through", "second-through"}


def test_threaded_driver_wakes_blocked_thread():
    cell, tasks = Cell(), TaskRegistry()
    driver = ThreadedDriver(tasks, watchdog=5.0)
    got = []

    def wait_for_open():
        yield Wait(lambda: cell.lv == 1, "open")
        return "opened"

    def open_cell():
        yield PREEMPT
        cell.lv = 1

    t = threading.Thread(target=lambda: got.append(driver.execute(wait_for_open())))
    t.start()
    driver.execute(open_cell())
    t.join(5)
    assert got == ["opened"]


def test_threaded_driver_watchdog():
    driver = ThreadedDriver(TaskRegistry(), watchdog=0.05)

    def stuck():
        yield Wait(lambda: False, "forever")

    with pytest.raises(DeadlockError):
        driver.execute(stuck())
