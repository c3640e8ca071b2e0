"""Two-state sequential execution contract: success flows on, failure short-circuits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Generic, Sequence, TypeVar, Union

T = TypeVar("T")


@dataclass(frozen=True)
class Success(Generic[T]):
    value: T

    @property
    def ok(self) -> bool:
        return True


@dataclass(frozen=True)
class Failure:
    error: Exception
    failed_step: str

    @property
    def ok(self) -> bool:
        return False


Either = Union[Success[T], Failure]

Step = tuple[str, Callable[[Any], Any]]


def either_chain(initial: Any, steps: Sequence[Step]) -> Either:
    """Run named steps in order, feeding each the previous value.

    The first raising step yields Failure(error, step name) and later steps
    never run; an empty chain is Success(initial). Failures carry the step
    name (not a positional index), which keeps chaining associative:
    splitting a step list into consecutive sub-chains produces the same
    result and the same failed_step attribution.
    """
    value = initial
    for name, fn in steps:
        try:
            value = fn(value)
        except Exception as exc:  # noqa: BLE001 - the chain is the error boundary
            return Failure(error=exc, failed_step=name)
    return Success(value)


def chain_then(result: Either, steps: Sequence[Step]) -> Either:
    """Continue a prior chain result with more steps (associativity helper)."""
    if isinstance(result, Failure):
        return result
    return either_chain(result.value, steps)
