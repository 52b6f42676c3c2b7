"""Execution kernels: deterministic virtual time and live asyncio time.

The turn protocol is written once, as plain ``async def`` coroutines that
only ever await primitives of the small :class:`Kernel` interface below.
:class:`VirtualKernel` drives those coroutines from a single-threaded event
queue in integer-microsecond virtual time, which makes full-dialogue runs
instant, byte-for-byte reproducible, and exact (no float drift in span
arithmetic). :class:`AsyncioKernel` runs the identical coroutines on a live
asyncio loop for the service and the REPL.

All kernel time is integer microseconds. Use :func:`us` / :func:`sec` to
convert at the edges.
"""

from __future__ import annotations

import asyncio
import heapq
import itertools
from typing import Any, Callable, Coroutine

US_PER_SECOND = 1_000_000


def us(seconds: float) -> int:
    """Convert seconds to integer microseconds (round to nearest)."""
    return round(seconds * US_PER_SECOND)


def sec(microseconds: int) -> float:
    """Convert integer microseconds to float seconds."""
    return microseconds / US_PER_SECOND


def sec3(microseconds: int) -> str:
    """Render microseconds as seconds with exactly three decimal places."""
    return "%.3f" % (microseconds / US_PER_SECOND)


class KernelError(RuntimeError):
    pass


class _Immediate:
    """Awaitable that resolves synchronously without suspending the task."""

    __slots__ = ("value",)

    def __init__(self, value: Any = None):
        self.value = value

    def __await__(self):
        return self.value
        yield  # unreachable; makes this a generator


class _Request:
    """Awaitable yielded up to the VirtualKernel trampoline."""

    __slots__ = ("kind", "arg1", "arg2")

    def __init__(self, kind: str, arg1: Any = None, arg2: Any = None):
        self.kind = kind
        self.arg1 = arg1
        self.arg2 = arg2

    def __await__(self):
        result = yield self
        return result


class VirtualEvent:
    """One-shot event usable from virtual tasks."""

    __slots__ = ("_kernel", "_set", "_waiters")

    def __init__(self, kernel: "VirtualKernel"):
        self._kernel = kernel
        self._set = False
        self._waiters: list[dict] = []

    def is_set(self) -> bool:
        return self._set

    def set(self) -> None:
        if self._set:
            return
        self._set = True
        waiters, self._waiters = self._waiters, []
        for waiter in waiters:
            if not waiter["done"]:
                waiter["done"] = True
                self._kernel._schedule(0, waiter["task"], True)


class VirtualTask:
    """Handle for a coroutine scheduled on the VirtualKernel."""

    def __init__(self, kernel: "VirtualKernel", coro: Coroutine, name: str):
        self.coro = coro
        self.name = name
        self.finished = False
        self.cancelled = False
        self.result: Any = None
        self.error: BaseException | None = None
        self.done_event = VirtualEvent(kernel)

    def cancel(self) -> None:
        """Best-effort cancel: a task that has not finished stops running."""
        if not self.finished:
            self.cancelled = True


class VirtualKernel:
    """Single-threaded deterministic scheduler over virtual microseconds.

    Events are ordered by (time, sequence number); the sequence number is
    assigned at scheduling time, so identical programs produce identical
    interleavings on every run.
    """

    def __init__(self):
        self._now_us = 0
        self._seq = itertools.count()
        self._queue: list[tuple[int, int, VirtualTask, Any]] = []

    # -- Kernel interface -------------------------------------------------

    def now_us(self) -> int:
        return self._now_us

    def sleep_us(self, duration_us: int) -> _Request:
        if duration_us < 0:
            raise ValueError("negative sleep")
        return _Request("sleep", duration_us)

    def spawn(self, coro: Coroutine, name: str = "task") -> VirtualTask:
        task = VirtualTask(self, coro, name)
        self._schedule(0, task, None)
        return task

    def new_event(self) -> VirtualEvent:
        return VirtualEvent(self)

    def wait_for(self, event: VirtualEvent, timeout_us: int | None):
        """Await an event; returns True if it fired, False on timeout."""
        if event.is_set():
            return _Immediate(True)
        return _Request("wait", event, timeout_us)

    def call_blocking(self, fn: Callable[[], Any]):
        """Run a blocking callable; inline (zero virtual time) here."""
        return _Immediate(fn())

    # -- Driving ----------------------------------------------------------

    def run(self, coro: Coroutine, name: str = "main") -> Any:
        """Run `coro` to completion, advancing virtual time as needed."""
        main = self.spawn(coro, name)
        while not main.finished:
            if not self._queue:
                raise KernelError(
                    "virtual kernel deadlock: main task %r is blocked with no "
                    "pending events" % main.name
                )
            when, _, task, value = heapq.heappop(self._queue)
            self._now_us = when
            if isinstance(task, _CallbackTask):
                task.fn()
            else:
                self._resume(task, value)
        if main.error is not None:
            raise main.error
        return main.result

    # -- Internals --------------------------------------------------------

    def _schedule(self, delay_us: int, task: VirtualTask, value: Any) -> None:
        heapq.heappush(
            self._queue, (self._now_us + delay_us, next(self._seq), task, value)
        )

    def _finish(self, task: VirtualTask, result: Any, error: BaseException | None):
        task.finished = True
        task.result = result
        task.error = error
        task.done_event.set()

    def _resume(self, task: VirtualTask, value: Any) -> None:
        if task.finished or task.cancelled:
            return
        try:
            request = task.coro.send(value)
        except StopIteration as stop:
            self._finish(task, stop.value, None)
            return
        except BaseException as exc:  # surfaced when the task is joined
            self._finish(task, None, exc)
            return
        if not isinstance(request, _Request):
            raise KernelError(
                "task %r awaited a non-kernel awaitable (%r); under the "
                "virtual kernel only kernel primitives may be awaited"
                % (task.name, request)
            )
        if request.kind == "sleep":
            self._schedule(request.arg1, task, None)
        elif request.kind == "wait":
            event: VirtualEvent = request.arg1
            timeout_us = request.arg2
            if event.is_set():
                self._schedule(0, task, True)
                return
            waiter = {"task": task, "done": False}
            event._waiters.append(waiter)
            if timeout_us is not None:
                self._schedule_timeout(timeout_us, waiter)
        else:  # pragma: no cover - defensive
            raise KernelError("unknown kernel request %r" % request.kind)

    def _schedule_timeout(self, timeout_us: int, waiter: dict) -> None:
        def fire():
            if not waiter["done"]:
                waiter["done"] = True
                self._resume(waiter["task"], False)

        heapq.heappush(
            self._queue,
            (self._now_us + timeout_us, next(self._seq), _CallbackTask(fire), None),
        )


class _CallbackTask:
    """Queue entry that runs a plain callback instead of resuming a coroutine."""

    __slots__ = ("fn", "finished", "cancelled")

    def __init__(self, fn: Callable[[], None]):
        self.fn = fn
        self.finished = False
        self.cancelled = False

    @property
    def coro(self):  # pragma: no cover - never used
        raise AttributeError


class AsyncioTask:
    """Handle over an asyncio.Task matching the VirtualTask duck type."""

    def __init__(self, task: asyncio.Task):
        self._task = task
        self.done_event = asyncio.Event()
        task.add_done_callback(lambda _t: self.done_event.set())

    @property
    def finished(self) -> bool:
        return self._task.done()

    @property
    def error(self) -> BaseException | None:
        if not self._task.done() or self._task.cancelled():
            return None
        return self._task.exception()

    def cancel(self) -> None:
        self._task.cancel()


class AsyncioKernel:
    """Kernel over a live asyncio loop; time is measured from construction."""

    def __init__(self):
        self._t0 = asyncio.get_event_loop().time()

    def now_us(self) -> int:
        return us(asyncio.get_event_loop().time() - self._t0)

    async def sleep_us(self, duration_us: int) -> None:
        await asyncio.sleep(sec(duration_us))

    def spawn(self, coro: Coroutine, name: str = "task") -> AsyncioTask:
        return AsyncioTask(asyncio.create_task(coro, name=name))

    def new_event(self) -> asyncio.Event:
        return asyncio.Event()

    async def wait_for(self, event: asyncio.Event, timeout_us: int | None) -> bool:
        if timeout_us is None:
            await event.wait()
            return True
        try:
            await asyncio.wait_for(event.wait(), sec(timeout_us))
            return True
        except asyncio.TimeoutError:
            return False

    async def call_blocking(self, fn: Callable[[], Any]) -> Any:
        return await asyncio.to_thread(fn)
