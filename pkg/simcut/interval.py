"""Outward-rounded interval arithmetic over numpy arrays.

Every arithmetic result is widened by ULP_PAD units in the last place towards
-inf (lower) and +inf (upper), so each bound contains the exact real result
whatever the rounding mode of the intermediate operation.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

ULP_PAD = 4
# exp, arctan and arcsin from numpy are trusted to this many ulps.
ELEMENTARY_ULPS = 8

Number = Union[float, np.ndarray]


def down(x: Number, ulps: int = ULP_PAD) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    for _ in range(ulps):
        x = np.nextafter(x, -np.inf)
    return x


def up(x: Number, ulps: int = ULP_PAD) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    for _ in range(ulps):
        x = np.nextafter(x, np.inf)
    return x


@dataclass(frozen=True)
class Interval:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(lo > hi):
            raise ValueError("interval lower bound exceeds upper bound")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x: Number) -> "Interval":
        return cls(x, x)

    @classmethod
    def hull(cls, a: Number, b: Number) -> "Interval":
        return cls(np.minimum(a, b), np.maximum(a, b))

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: Number) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return (self.lo <= x) & (x <= self.hi)

    def subset_of(self, other: "Interval") -> np.ndarray:
        return (other.lo <= self.lo) & (self.hi <= other.hi)

    def __getitem__(self, idx) -> "Interval":
        return Interval(self.lo[idx], self.hi[idx])

    def __repr__(self) -> str:
        return f"Interval({self.lo!r}, {self.hi!r})"

    # --- arithmetic ---

    @staticmethod
    def _coerce(other) -> "Interval":
        return other if isinstance(other, Interval) else Interval.point(other)

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __add__(self, other) -> "Interval":
        o = self._coerce(other)
        return Interval(down(self.lo + o.lo), up(self.hi + o.hi))

    __radd__ = __add__

    def __sub__(self, other) -> "Interval":
        o = self._coerce(other)
        return Interval(down(self.lo - o.hi), up(self.hi - o.lo))

    def __rsub__(self, other) -> "Interval":
        return self._coerce(other) - self

    def __mul__(self, other) -> "Interval":
        o = self._coerce(other)
        pairs = ((self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi))
        with np.errstate(invalid="ignore"):
            products = np.stack([a * b for a, b in pairs])
        undefined = np.stack([np.isnan(a) | np.isnan(b) for a, b in pairs])
        # 0 * inf counts as 0; NaN operands stay NaN.
        products = np.where(np.isnan(products) & ~undefined, 0.0, products)
        return Interval(down(products.min(axis=0)), up(products.max(axis=0)))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Interval":
        o = self._coerce(other)
        if np.any((o.lo <= 0.0) & (o.hi >= 0.0)):
            raise ZeroDivisionError("divisor interval contains 0")
        recip = Interval(down(1.0 / o.hi), up(1.0 / o.lo))
        return self * recip

    def sqrt(self) -> "Interval":
        """Square root of the nonnegative part."""
        lo = np.sqrt(np.clip(self.lo, 0.0, None))
        hi = np.sqrt(np.clip(self.hi, 0.0, None))
        return Interval(np.clip(down(lo), 0.0, None), up(hi))

    def square(self) -> "Interval":
        a, b = self.lo ** 2, self.hi ** 2
        straddles = (self.lo <= 0.0) & (self.hi >= 0.0)
        lo = np.where(straddles, 0.0, np.minimum(a, b))
        return Interval(np.clip(down(lo), 0.0, None), up(np.maximum(a, b)))

    def power(self, p: int) -> "Interval":
        """Odd integer powers are monotone; even powers go through square."""
        if p % 2 == 0:
            return self.square().power(p // 2) if p > 2 else self.square()
        lo, hi = self.lo ** p, self.hi ** p
        return Interval(down(lo, ULP_PAD * p), up(hi, ULP_PAD * p))

    def clip(self, lo: float, hi: float) -> "Interval":
        return Interval(np.clip(self.lo, lo, hi), np.clip(self.hi, lo, hi))

    def pad(self, absolute: float) -> "Interval":
        """Widen by a declared absolute error budget."""
        return Interval(down(self.lo - absolute), up(self.hi + absolute))

    # --- monotone elementary functions ---

    def exp(self) -> "Interval":
        with np.errstate(over="ignore"):
            lo, hi = np.exp(self.lo), np.exp(self.hi)
        return Interval(np.clip(down(lo, ELEMENTARY_ULPS), 0.0, None), up(hi, ELEMENTARY_ULPS))

    def arctan(self) -> "Interval":
        return Interval(down(np.arctan(self.lo), ELEMENTARY_ULPS), up(np.arctan(self.hi), ELEMENTARY_ULPS))

    def arcsin(self) -> "Interval":
        """arcsin of the part inside [-1, 1]."""
        lo = down(np.arcsin(np.clip(self.lo, -1.0, 1.0)), ELEMENTARY_ULPS)
        hi = up(np.arcsin(np.clip(self.hi, -1.0, 1.0)), ELEMENTARY_ULPS)
        return Interval(lo, hi)
