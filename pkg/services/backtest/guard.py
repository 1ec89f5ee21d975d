"""Access guard that keeps realistic backtests from reading past the selection horizon"""

import pandas as pd
import structlog

from core.exceptions import LookaheadError
from models.panel import FactorPanel

logger = structlog.get_logger()


class LookaheadGuard:
    """Hands out panel views truncated at a horizon that only moves forward"""

    def __init__(self, panel: FactorPanel, horizon):
        self._panel = panel
        self._horizon = pd.Timestamp(horizon)

    @property
    def horizon(self) -> pd.Timestamp:
        return self._horizon

    def view(self, end=None) -> FactorPanel:
        """Panel up to ``end`` (default: the horizon); reading past the horizon aborts"""
        end = self._horizon if end is None else pd.Timestamp(end)
        if end > self._horizon:
            raise LookaheadError(
                "Read beyond the selection horizon",
                {"requested": str(end.date()), "horizon": str(self._horizon.date())},
            )
        return self._panel.truncate(end)

    def release(self, horizon) -> "LookaheadGuard":
        """Move the horizon forward once the decisions that depend on it are frozen"""
        horizon = pd.Timestamp(horizon)
        if horizon < self._horizon:
            raise LookaheadError(
                "Horizon cannot move backwards",
                {"current": str(self._horizon.date()), "requested": str(horizon.date())},
            )
        logger.debug("Horizon released", previous=str(self._horizon.date()), horizon=str(horizon.date()))
        self._horizon = horizon
        return self

