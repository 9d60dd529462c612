"""Facial expression classes.

This module defines the seven expression classes used throughout the
package. Each class has a lowercase name (as written in manifests) and a
stable integer code in alphabetical order.
"""

from __future__ import annotations

from enum import Enum


class ExpressionLabel(Enum):
    """Enumeration of the seven canonical expression classes.

    The enum value is the lowercase class name used in manifest files. The
    integer code used by classifiers and confusion matrices is the position
    of the member in alphabetical order, so the mapping is fixed for the
    whole codebase.

    Attributes:
        ANGER: code 0
        CONTEMPT: code 1
        DISGUST: code 2
        FEAR: code 3
        HAPPINESS: code 4
        SADNESS: code 5
        SURPRISE: code 6

    Example:
        >>> ExpressionLabel.FEAR.code
        3
        >>> ExpressionLabel.from_code(6)
        <ExpressionLabel.SURPRISE: 'surprise'>
        >>> ExpressionLabel.parse("Happiness")
        <ExpressionLabel.HAPPINESS: 'happiness'>
    """

    ANGER = "anger"
    CONTEMPT = "contempt"
    DISGUST = "disgust"
    FEAR = "fear"
    HAPPINESS = "happiness"
    SADNESS = "sadness"
    SURPRISE = "surprise"

    @property
    def code(self) -> int:
        """Integer code of this class (0..6, alphabetical)."""
        return _CODES[self]

    @property
    def title(self) -> str:
        """Capitalized display name, e.g. "Happiness"."""
        return self.value.capitalize()

    @classmethod
    def from_code(cls, code: int) -> ExpressionLabel:
        """Get the label for an integer code.

        Raises:
            ValueError: If the code is outside 0..6.
        """
        if not 0 <= code < len(_ORDERED):
            msg = f"Unknown expression code {code}; expected 0..{len(_ORDERED) - 1}"
            raise ValueError(msg)
        return _ORDERED[code]

    @classmethod
    def parse(cls, text: str) -> ExpressionLabel:
        """Parse a manifest label string (case-insensitive, surrounding space ignored).

        Raises:
            ValueError: If the string does not name one of the seven classes.
                The message lists the valid labels.
        """
        try:
            return cls(text.strip().lower())
        except ValueError:
            msg = f"Unknown expression label {text!r}; valid labels are: {', '.join(cls.names())}"
            raise ValueError(msg) from None

    @classmethod
    def ordered(cls) -> list[ExpressionLabel]:
        """All labels in code order."""
        return list(_ORDERED)

    @classmethod
    def names(cls) -> list[str]:
        """Lowercase label names in code order."""
        return [label.value for label in _ORDERED]


_ORDERED: tuple[ExpressionLabel, ...] = tuple(sorted(ExpressionLabel, key=lambda m: m.value))
_CODES: dict[ExpressionLabel, int] = {label: code for code, label in enumerate(_ORDERED)}
