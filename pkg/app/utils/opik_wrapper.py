"""Small wrappers around Opik to keep run tracking consistent.

We keep these helpers best-effort and guarded behind Settings so observability
never breaks training or evaluation when Opik is disabled or misconfigured.
"""

from __future__ import annotations

import functools
import logging
from typing import Any, Callable, Dict, Optional, TypeVar

from app.core.config import settings

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])


def configure_opik() -> bool:
    """Configure the Opik client from Settings.

    Returns True when Opik is enabled and configured. Never raises.
    """
    if not settings.OPIK_ENABLED:
        return False

    try:
        import opik

        configure_kwargs: Dict[str, Any] = {"use_local": False, "automatic_approvals": True}
        if settings.OPIK_API_KEY:
            configure_kwargs["api_key"] = settings.OPIK_API_KEY
        if settings.OPIK_WORKSPACE:
            configure_kwargs["workspace"] = settings.OPIK_WORKSPACE
        if settings.OPIK_URL_OVERRIDE:
            configure_kwargs["url"] = settings.OPIK_URL_OVERRIDE

        opik.configure(**configure_kwargs)
        return True
    except Exception as exc:
        logger.warning("Opik configuration failed: %s", exc)
        return False


def tracked(name: str) -> Callable[[F], F]:
    """Trace the decorated function with ``opik.track`` when Opik is enabled.

    The check happens per call, so tests can toggle ``settings.OPIK_ENABLED``.
    """

    def decorator(fn: F) -> F:
        @functools.wraps(fn)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            if not settings.OPIK_ENABLED:
                return fn(*args, **kwargs)
            try:
                import opik

                traced = opik.track(name=name, project_name=settings.OPIK_PROJECT_NAME)(fn)
            except Exception as exc:
                logger.debug("Opik tracking unavailable for %s: %s", name, exc)
                return fn(*args, **kwargs)
            return traced(*args, **kwargs)

        return wrapper  # type: ignore[return-value]

    return decorator


def log_run_metrics(
    *,
    name: str,
    metrics: Dict[str, float],
    metadata: Optional[Dict[str, Any]] = None,
) -> None:
    """Attach metrics to the current Opik trace.

    Best-effort: never raises. No-op when Opik is disabled.
    """
    if not settings.OPIK_ENABLED or not metrics:
        return

    try:
        from opik import opik_context

        opik_context.update_current_trace(
            metadata={"run": name, "metrics": dict(metrics), **(metadata or {})}
        )
    except Exception:
        # Avoid breaking the run if Opik is unavailable.
        return


__all__ = ["configure_opik", "tracked", "log_run_metrics"]
