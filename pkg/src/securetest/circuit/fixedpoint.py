"""Two's complement fixed-point encoding of reals into w-bit ring elements."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParameter, RangeError


@dataclass(frozen=True)
class FixedPointEncoding:
    width: int = 32
    frac: int = 16

    def __post_init__(self):
        if not (0 < self.frac < self.width <= 64):
            raise InvalidParameter(
                f"need 0 < frac < width <= 64, got width={self.width} frac={self.frac}"
            )

    @property
    def modulus(self) -> int:
        return 1 << self.width

    @property
    def scale(self) -> int:
        return 1 << self.frac

    @property
    def min_int(self) -> int:
        return -(1 << (self.width - 1))

    @property
    def max_int(self) -> int:
        return (1 << (self.width - 1)) - 1

    @property
    def min_value(self) -> float:
        return self.min_int / self.scale

    @property
    def max_value(self) -> float:
        return self.max_int / self.scale

    @property
    def resolution(self) -> float:
        return 1.0 / self.scale

    def encode(self, x: float) -> int:
        return encode(x, self)

    def decode(self, v: int) -> float:
        return decode(v, self)

    def quantize(self, x: float) -> float:
        """Snap x to the nearest representable grid point."""
        return decode(encode(x, self), self)


DEFAULT_ENCODING = FixedPointEncoding()


def to_signed(v: int, enc: FixedPointEncoding) -> int:
    v &= enc.modulus - 1
    return v - enc.modulus if v > enc.max_int else v


def encode(x: float, enc: FixedPointEncoding = DEFAULT_ENCODING) -> int:
    """Return round(x * 2**frac) as an unsigned w-bit two's complement pattern.

    Raises RangeError when x falls outside the representable range.
    """
    x = float(x)
    if not np.isfinite(x):
        raise RangeError(f"cannot encode non-finite value {x!r}")
    scaled = round(x * enc.scale)
    if scaled < enc.min_int or scaled > enc.max_int:
        raise RangeError(
            f"{x!r} is outside [{enc.min_value}, {enc.max_value}] "
            f"for width={enc.width} frac={enc.frac}"
        )
    return scaled & (enc.modulus - 1)


def decode(v: int, enc: FixedPointEncoding = DEFAULT_ENCODING) -> float:
    return to_signed(int(v), enc) / enc.scale


def int_to_bits(v: int, width: int) -> list[int]:
    """LSB-first bit decomposition of the low `width` bits of v."""
    return [(v >> i) & 1 for i in range(width)]


def bits_to_int(bits) -> int:
    out = 0
    for i, b in enumerate(bits):
        out |= (int(b) & 1) << i
    return out


def encode_bits(values, enc: FixedPointEncoding = DEFAULT_ENCODING) -> list[int]:
    """Encode a sequence of reals and concatenate their LSB-first bits."""
    bits: list[int] = []
    for x in values:
        bits.extend(int_to_bits(encode(x, enc), enc.width))
    return bits
