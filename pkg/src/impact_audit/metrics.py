"""Confusion-matrix fairness and accuracy statistics.

Everything here is a pure function of label arrays or of the four cell
counts of a 2x2 outcome-by-group table.  The table convention is fixed
once, in :class:`ConfusionMatrix`, and every rate is derived from it:

              X = 0      X = 1
    NO          a          b
    YES         c          d

with X = 0 the designated minority group and YES the favorable outcome.
Group selection rates are ``pi0 = c/(a+c)`` and ``pi1 = d/(b+d)``; the
disparate-impact ratio is ``pi0 / pi1`` and the "80% rule" flags values
at or below 0.8.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConfusionMatrix",
    "ConfusionRates",
    "DIValue",
    "confusion",
    "rates",
    "disparate_impact",
    "ber",
    "utility",
    "zemel_fairness",
]


@dataclass(frozen=True)
class ConfusionMatrix:
    """Cell counts of the outcome-by-group table.

    a: NO  outcomes in group X=0 (minority)
    b: NO  outcomes in group X=1 (majority)
    c: YES outcomes in group X=0
    d: YES outcomes in group X=1
    """

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self) -> None:
        cells = (self.a, self.b, self.c, self.d)
        if any(int(v) != v or v < 0 for v in cells):
            raise ValueError(f"cell counts must be nonnegative integers, got {cells}")
        if sum(cells) < 1:
            raise ValueError("confusion matrix must contain at least one observation")

    @property
    def total(self) -> int:
        return self.a + self.b + self.c + self.d

    def scaled(self, k: int) -> "ConfusionMatrix":
        """All four cells multiplied by a positive integer (rate-preserving)."""
        if k < 1:
            raise ValueError("scale factor must be >= 1")
        return ConfusionMatrix(self.a * k, self.b * k, self.c * k, self.d * k)

    def swapped_groups(self) -> "ConfusionMatrix":
        """The same table with the two group columns exchanged."""
        return ConfusionMatrix(self.b, self.a, self.d, self.c)


@dataclass(frozen=True)
class ConfusionRates:
    """Rates derived from a ConfusionMatrix; requires both groups present.

    ``sensitivity`` is the majority selection rate d/(b+d), ``specificity``
    the minority rejection rate a/(a+c).  ``alpha = b/(b+d)`` and
    ``beta_rate = c/(a+c)`` are the two "wrong column" rates when the
    outcome is read as a predictor of the group; ``pi0 = beta_rate`` and
    ``pi1 = 1 - alpha`` are the group selection rates.
    """

    sensitivity: float
    specificity: float
    alpha: float
    beta_rate: float
    pi0: float
    pi1: float


@dataclass(frozen=True)
class DIValue:
    """Disparate impact ratio pi0/pi1 and its reciprocal LR+ = pi1/pi0."""

    value: float
    lr_plus: float


def _as_binary(arr, name: str) -> np.ndarray:
    out = np.asarray(arr)
    if out.dtype == bool:
        return out.astype(np.int64)
    out = out.astype(np.int64, casting="unsafe")
    if not np.isin(out, (0, 1)).all():
        raise ValueError(f"{name} must be binary (0/1 or bool)")
    return out


def confusion(outcomes, groups) -> ConfusionMatrix:
    """Count the four cells from per-row binary labels.

    ``outcomes``: 1 (or True) = YES, 0 = NO.  ``groups``: 0 = minority,
    1 = majority.
    """
    y = _as_binary(outcomes, "outcomes")
    x = _as_binary(groups, "groups")
    if y.shape != x.shape:
        raise ValueError(f"length mismatch: {y.shape} outcomes vs {x.shape} groups")
    a = int(np.sum((y == 0) & (x == 0)))
    b = int(np.sum((y == 0) & (x == 1)))
    c = int(np.sum((y == 1) & (x == 0)))
    d = int(np.sum((y == 1) & (x == 1)))
    return ConfusionMatrix(a, b, c, d)


def rates(m: ConfusionMatrix) -> ConfusionRates:
    """Derive all rates; errors if either group column is empty."""
    n0 = m.a + m.c
    n1 = m.b + m.d
    if n0 < 1 or n1 < 1:
        raise ValueError("both groups must be present to compute rates")
    sens = m.d / n1
    spec = m.a / n0
    alpha = m.b / n1
    beta = m.c / n0
    return ConfusionRates(
        sensitivity=sens,
        specificity=spec,
        alpha=alpha,
        beta_rate=beta,
        pi0=beta,
        pi1=1.0 - alpha,
    )


def disparate_impact(m: ConfusionMatrix) -> DIValue:
    """Selection-rate ratio pi0/pi1 of minority over majority.

    Returns +inf when the majority is never selected but the minority is,
    0 when the minority is never selected, and raises when neither group
    is ever selected (the ratio is undefined, not merely extreme).
    """
    n0 = m.a + m.c
    n1 = m.b + m.d
    if n0 < 1 or n1 < 1:
        raise ValueError("both groups must be present to compute disparate impact")
    if m.c == 0 and m.d == 0:
        raise ValueError("undefined disparate impact: both selection rates are zero")
    if m.d == 0:
        return DIValue(value=float("inf"), lr_plus=0.0)
    if m.c == 0:
        return DIValue(value=0.0, lr_plus=float("inf"))
    pi0 = m.c / n0
    pi1 = m.d / n1
    return DIValue(value=pi0 / pi1, lr_plus=pi1 / pi0)


def ber(predicted, actual) -> float:
    """Balanced error rate: mean of the two class-conditional error rates.

    Both actual classes must occur, otherwise one of the conditional
    rates is undefined.
    """
    pred = _as_binary(predicted, "predicted")
    act = _as_binary(actual, "actual")
    if pred.shape != act.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {act.shape}")
    n1 = int(np.sum(act == 1))
    n0 = int(np.sum(act == 0))
    if n0 < 1 or n1 < 1:
        raise ValueError("both actual classes must be present to compute BER")
    err_on_1 = np.sum((act == 1) & (pred == 0)) / n1
    err_on_0 = np.sum((act == 0) & (pred == 1)) / n0
    return float((err_on_1 + err_on_0) / 2.0)


def utility(predicted_class, actual_class) -> float:
    """1 - BER of a class predictor; 1.0 for a perfect classifier."""
    return 1.0 - ber(predicted_class, actual_class)


def zemel_fairness(outcomes, groups) -> float:
    """Discrimination score of prior work: twice the BER of reading the
    outcome labels as a predictor of the group labels.

    0 when outcomes perfectly reveal the group, 1 when independent with
    balanced rates; may exceed 1 when the outcome anti-correlates.
    """
    return 2.0 * ber(outcomes, groups)
