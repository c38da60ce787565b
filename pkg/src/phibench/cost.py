"""API cost of running an LLM over a note warehouse vs. one-time distillation.

Arithmetic is exact ``Decimal``; rounding (half-up) only happens when a
figure is reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Union

from phibench.errors import ValidationError

Number = Union[Decimal, int, str]

MILLION = Decimal(1_000_000)
CENT = Decimal("0.01")


def _dec(x: Number) -> Decimal:
    if isinstance(x, float):
        raise TypeError("pass currency and counts as Decimal, int or str, not float")
    return x if isinstance(x, Decimal) else Decimal(x)


@dataclass(frozen=True)
class PriceSheet:
    input_per_million: Decimal
    output_per_million: Decimal
    chars_per_token: Decimal = Decimal(4)

    def __post_init__(self) -> None:
        for name in ("input_per_million", "output_per_million", "chars_per_token"):
            value = _dec(getattr(self, name))
            if value <= 0:
                raise ValidationError(f"{name} must be positive")
            object.__setattr__(self, name, value)

    def scaled(self, factor: Number) -> PriceSheet:
        f = _dec(factor)
        return PriceSheet(self.input_per_million * f, self.output_per_million * f, self.chars_per_token)


# Gemini 2.5 Flash, Vertex AI, March 2025
FLEX = PriceSheet(Decimal("0.15"), Decimal("1.25"))
STANDARD = PriceSheet(Decimal("0.30"), Decimal("2.50"))
PRIORITY = PriceSheet(Decimal("0.54"), Decimal("4.50"))
SHEETS = {"flex": FLEX, "standard": STANDARD, "priority": PRIORITY}


@dataclass(frozen=True)
class CostEstimate:
    input_tokens: Decimal
    output_tokens: Decimal
    input_cost: Decimal
    output_cost: Decimal

    @property
    def total(self) -> Decimal:
        return self.input_cost + self.output_cost


def estimate_cost(
    output_tokens: Number,
    sheet: PriceSheet = FLEX,
    *,
    input_chars: Number | None = None,
    input_tokens: Number | None = None,
) -> CostEstimate:
    """Exact cost; give exactly one of ``input_chars`` or ``input_tokens``."""
    if (input_chars is None) == (input_tokens is None):
        raise ValidationError("give exactly one of input_chars or input_tokens")
    out_tok = _dec(output_tokens)
    in_tok = _dec(input_tokens) if input_tokens is not None else _dec(input_chars) / sheet.chars_per_token
    if out_tok < 0 or in_tok < 0:
        raise ValidationError("token and character counts must be non-negative")
    return CostEstimate(
        in_tok,
        out_tok,
        in_tok * sheet.input_per_million / MILLION,
        out_tok * sheet.output_per_million / MILLION,
    )


def to_cents(amount: Decimal) -> Decimal:
    return amount.quantize(CENT, rounding=ROUND_HALF_UP)


def to_dollars(amount: Decimal) -> Decimal:
    return amount.quantize(Decimal(1), rounding=ROUND_HALF_UP)


def format_usd(amount: Decimal, whole_dollars: bool | None = None) -> str:
    """``$693,738`` or ``$10.08``; by default amounts of $1,000+ drop the cents."""
    if whole_dollars is None:
        whole_dollars = abs(to_cents(amount)) >= 1000
    if whole_dollars:
        return f"${to_dollars(amount):,}"
    return f"${to_cents(amount):,.2f}"


def reduction_factor(a: Number, b: Number) -> Decimal:
    b = _dec(b)
    if b == 0:
        raise ValidationError("reduction factor undefined for a zero denominator")
    return _dec(a) / b


def round_significant(x: Decimal, figures: int = 3) -> Decimal:
    if x == 0:
        return Decimal(0)
    exp = x.adjusted() - figures + 1
    return x.quantize(Decimal(1).scaleb(exp), rounding=ROUND_HALF_UP)


def format_tokens(n: Decimal) -> str:
    """``158B`` / ``6.5M`` style counts as in cost tables."""
    for scale, suffix in ((Decimal(10) ** 9, "B"), (MILLION, "M"), (Decimal(1000), "K")):
        if abs(n) >= scale:
            return f"{(n / scale).normalize():f}" + suffix
    return f"{n.normalize():f}"
