from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from contextvars import ContextVar, Token, copy_context
from copy import copy as shallow_copy
from typing import Callable, Iterable, Self, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


class Runtime:
    """Execution settings shared by every module for the active context.

    ``threads=1`` always means deterministic, serial execution. With more
    threads, per-sample work (augmentation, batching) fans out over a thread
    pool; results stay identical because every sample owns a keyed RNG stream
    and results are collected in input order.
    """

    threads: int
    deterministic: bool
    active_tokens: list[Token[Runtime]]

    def __init__(self, *, threads: int = 1, deterministic: bool = True) -> None:
        if threads < 1:
            raise ValueError(f"threads must be >= 1, got {threads}.")
        self.threads = threads
        self.deterministic = deterministic or threads == 1
        self.active_tokens = []

    def __call__(
        self, *, threads: int | None = None, deterministic: bool | None = None
    ) -> Self:
        """Create a shallow copy of the runtime with overridden parameters.

        Example:
            with Runtime(threads=4, deterministic=False) as runtime:
                with runtime(threads=1):
                    # serial again
                    ...
        """
        copied = shallow_copy(self)
        copied.active_tokens = []
        if threads is not None:
            if threads < 1:
                raise ValueError(f"threads must be >= 1, got {threads}.")
            copied.threads = threads
        if deterministic is not None:
            copied.deterministic = deterministic
        copied.deterministic = copied.deterministic or copied.threads == 1
        return copied

    def __enter__(self) -> Self:
        token = active_runtime.set(self)
        self.active_tokens.append(token)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        token = self.active_tokens.pop()
        active_runtime.reset(token)

    @property
    def parallel(self) -> bool:
        return self.threads > 1

    def map(self, fn: Callable[[T], R], items: Sequence[T] | Iterable[T]) -> list[R]:
        items = list(items)
        if not self.parallel or len(items) < 2:
            return [fn(item) for item in items]
        # workers see the caller's context (active tape stays out, runtime stays in)
        context = copy_context()
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(lambda item: context.copy().run(fn, item), items))

    def __repr__(self) -> str:
        return f"Runtime(threads={self.threads}, deterministic={self.deterministic})"


active_runtime: ContextVar[Runtime] = ContextVar("active_runtime", default=Runtime())
