"""Expanding-window train/valid/test split plans"""

from datetime import date, timedelta
from typing import List, Optional
import math
import pendulum
import structlog

from core.exceptions import ConfigurationError
from schemas.config import CalendarConfig
from schemas.report import Split, SplitPlan, SplitSpan

logger = structlog.get_logger()


def _add_years(day: date, years: int) -> date:
    shifted = pendulum.date(day.year, day.month, day.day).add(years=years)
    return date(shifted.year, shifted.month, shifted.day)


def make_splits(
    start: date,
    end: date,
    first_test_start: date,
    increment_years: int = 1,
    min_train_days: int = 365,
    valid_fraction: float = 0.1,
) -> SplitPlan:
    """Annual test spans from ``first_test_start``; each trains on everything before it.

    The validation span is the last ceil(valid_fraction * train days) days of
    the training span. A final test span cut short by the calendar end is
    kept and flagged ``truncated``.
    """
    if not start < first_test_start <= end:
        raise ConfigurationError(
            "First test start must fall inside the calendar",
            {"start": str(start), "end": str(end), "first_test_start": str(first_test_start)},
        )
    train_days = (first_test_start - start).days
    if train_days < min_train_days:
        raise ConfigurationError(
            "First training span is shorter than the minimum",
            {"train_days": train_days, "min_train_days": min_train_days},
        )

    splits: List[Split] = []
    index = 0
    test_start = first_test_start
    while test_start <= end:
        full_end = _add_years(test_start, increment_years) - timedelta(days=1)
        test_end = min(full_end, end)
        train = SplitSpan(start=start, end=test_start - timedelta(days=1))
        n_valid = max(1, int(math.ceil(train.n_days * valid_fraction - 1e-9)))
        valid = SplitSpan(start=train.end - timedelta(days=n_valid - 1), end=train.end)
        splits.append(
            Split(
                index=index,
                train=train,
                valid=valid,
                test=SplitSpan(start=test_start, end=test_end),
                truncated=test_end < full_end,
            )
        )
        index += 1
        test_start = _add_years(first_test_start, increment_years * index)

    plan = SplitPlan(splits=splits)
    logger.info(
        "Split plan built",
        splits=len(splits),
        tests=[s.test.label() for s in splits],
        truncated=[s.index for s in splits if s.truncated],
    )
    return plan


def splits_from_config(calendar: CalendarConfig, end: Optional[date] = None) -> SplitPlan:
    return make_splits(
        calendar.start,
        end or calendar.end,
        calendar.first_test_start,
        calendar.test_increment_years,
        calendar.min_train_days,
        calendar.valid_fraction,
    )
