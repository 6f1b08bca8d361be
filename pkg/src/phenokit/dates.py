"""Date plumbing: calendar dates at I/O boundaries, integer days internally.

Everything downstream of ingestion works on days since 1970-01-01 so that
window arithmetic is plain integer math. Calendar conversions happen only
when reading or writing files.
"""
from __future__ import annotations

import datetime

EPOCH_ORDINAL = datetime.date(1970, 1, 1).toordinal()

# Date strings repeat heavily in event files; memoize the parse.
_parse_cache: dict[str, int] = {}


class DateError(ValueError):
    """Raised for unparseable or impossible calendar dates."""


def parse_day(text: str) -> int:
    """Parse a YYYY-MM-DD string to days since epoch."""
    cached = _parse_cache.get(text)
    if cached is not None:
        return cached
    parts = text.split("-")
    if len(parts) != 3:
        raise DateError(f"expected YYYY-MM-DD, got {text!r}")
    try:
        d = datetime.date(int(parts[0]), int(parts[1]), int(parts[2]))
    except ValueError as exc:
        raise DateError(f"invalid date {text!r}: {exc}") from None
    day = d.toordinal() - EPOCH_ORDINAL
    if len(_parse_cache) < 200_000:
        _parse_cache[text] = day
    return day


def format_day(day: int) -> str:
    """Days since epoch back to YYYY-MM-DD."""
    return datetime.date.fromordinal(day + EPOCH_ORDINAL).isoformat()


def to_date(day: int) -> datetime.date:
    return datetime.date.fromordinal(day + EPOCH_ORDINAL)


def from_date(d: datetime.date) -> int:
    return d.toordinal() - EPOCH_ORDINAL


def age_years_at(birth_day: int, at_day: int) -> int:
    """Whole calendar years between birth and a reference day.

    Ticks up on the anniversary of the birth date; Feb 29 birthdays tick on
    Mar 1 in common years.
    """
    birth = to_date(birth_day)
    at = to_date(at_day)
    years = at.year - birth.year
    anniversary = (at.month, at.day) < (birth.month, birth.day)
    return years - 1 if anniversary else years
