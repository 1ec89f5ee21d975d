"""Structured logging configuration"""

import structlog
import logging
import sys
from contextlib import contextmanager
from typing import Dict, Any, Iterator, Optional
import time
import uuid

from core.config import settings


def setup_logging(log_level: Optional[str] = None, log_format: Optional[str] = None):
    """Configure structured logging for the application"""

    level = (log_level or settings.LOG_LEVEL).upper()
    fmt = log_format or settings.LOG_FORMAT

    # Configure structlog processors
    timestamper = structlog.processors.TimeStamper(fmt="iso")

    shared_processors = [
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        timestamper,
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        structlog.processors.UnicodeDecoder(),
        structlog.contextvars.merge_contextvars,
        structlog.processors.CallsiteParameterAdder(
            parameters=[
                structlog.processors.CallsiteParameter.FILENAME,
                structlog.processors.CallsiteParameter.LINENO,
                structlog.processors.CallsiteParameter.FUNC_NAME
            ]
        ),
    ]

    if fmt == "json":
        # JSON output for batch runs
        renderer = structlog.processors.JSONRenderer()
    else:
        # Human-readable output for interactive runs
        renderer = structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())

    structlog.configure(
        processors=shared_processors + [
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )

    # Logs go to stderr; stdout is reserved for command output
    handler = logging.StreamHandler(sys.stderr)

    # Use ProcessorFormatter to format standard logs through structlog
    handler.setFormatter(
        structlog.stdlib.ProcessorFormatter(
            foreign_pre_chain=shared_processors,
            processors=[
                structlog.stdlib.ProcessorFormatter.remove_processors_meta,
                renderer,
            ],
        )
    )

    # Configure root logger
    root_logger = logging.getLogger()
    root_logger.handlers = [handler]
    root_logger.setLevel(getattr(logging, level, logging.INFO))

    # Quiet noisy libraries
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("joblib").setLevel(logging.WARNING)
    logging.getLogger("statsmodels").setLevel(logging.WARNING)


@contextmanager
def command_context(command: str, **fields: Any) -> Iterator[str]:
    """Bind a run id for one CLI command and log its lifecycle"""

    run_id = str(uuid.uuid4())

    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(run_id=run_id, command=command)

    logger = structlog.get_logger()
    start_time = time.time()

    logger.info("Command started", **fields)

    try:
        yield run_id

        duration = time.time() - start_time
        logger.info("Command completed", duration=round(duration, 3))

    except Exception as e:
        duration = time.time() - start_time

        logger.error(
            "Command failed",
            duration=round(duration, 3),
            exception_type=type(e).__name__,
            exception_message=str(e),
        )
        raise

    finally:
        structlog.contextvars.clear_contextvars()


class MetricsLogger:
    """Logger for research metrics"""

    def __init__(self):
        self.logger = structlog.get_logger("metrics")

    def log_training_epoch(
        self,
        seed: int,
        epoch: int,
        train_loss: float,
        valid_loss: float,
        lr: float
    ):
        """Log one training epoch"""
        self.logger.debug(
            "training_epoch",
            seed=seed,
            epoch=epoch,
            train_loss=train_loss,
            valid_loss=valid_loss,
            lr=lr,
        )

    def log_strategy_metric(
        self,
        strategy: str,
        metric: str,
        value: float,
        tags: Dict[str, str] = None
    ):
        """Log a strategy-level statistic"""
        self.logger.info(
            "strategy_metric",
            strategy=strategy,
            metric=metric,
            value=value,
            tags=tags or {},
        )


# Global metrics logger instance
metrics_logger = MetricsLogger()
