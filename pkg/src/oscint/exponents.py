"""Critical Lebesgue exponents as exact rationals."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import DomainError


def p_n(n: int) -> Fraction:
    """Lower endpoint of the L^p -> L^p range reached by polynomial partitioning."""
    if n < 3:
        raise DomainError("p_n is defined for n >= 3")
    if n == 3:
        return Fraction(4)
    if n % 2:
        return Fraction(2 * (3 * n + 1), 3 * n - 3)
    return Fraction(2 * 3 * n, 3 * n - 4)


def p_bar(k: int, n: int) -> Fraction:
    """k-broad exponent 2(n + k) / (n + k - 2)."""
    _check_kn(k, n)
    return Fraction(2 * (n + k), n + k - 2)


def p_broad_to_linear(k: int, n: int) -> Fraction:
    """Smallest p for which a k-broad estimate upgrades to a linear one."""
    _check_kn(k, n)
    if k <= 3:
        return Fraction(2 * (n - 1), n - 2)
    return Fraction(2 * (2 * n - k + 1), 2 * n - k - 1)


def e_kn(k: int, n: int, p) -> Fraction:
    """Gain exponent (1/2)(1/2 - 1/p)(n + k)."""
    _check_kn(k, n)
    p = Fraction(p)
    return Fraction(1, 2) * (Fraction(1, 2) - 1 / p) * (n + k)


def p_upper(n: int) -> Fraction:
    return Fraction(2 * n, n - 2)


def best_k(n: int) -> int:
    """The k balancing the broad and broad-to-linear exponents."""
    return (n + 1) // 2 if n % 2 else n // 2 + 1


def _check_kn(k: int, n: int) -> None:
    if n < 3 or not (2 <= k <= n):
        raise DomainError(f"need n >= 3 and 2 <= k <= n, got k={k}, n={n}")


@dataclass(frozen=True)
class ExponentTable:
    n: int
    k: int
    p_n: Fraction
    p_bar: Fraction
    p_kn: Fraction

    def e(self, p) -> Fraction:
        return e_kn(self.k, self.n, p)

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "p_n": str(self.p_n), "p_bar": str(self.p_bar), "p_kn": str(self.p_kn),
                "p_n_float": float(self.p_n)}


def critical_exponents(n: int, k: int) -> ExponentTable:
    return ExponentTable(n, k, p_n(n), p_bar(k, n), p_broad_to_linear(k, n))
