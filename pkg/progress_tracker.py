"""
Progress tracking for long experiment runs.
Sessions count finished trials and log progress with an ETA.
"""

import threading
from datetime import datetime
from typing import Any, Dict, Optional

from logging_config import get_logger

logger = get_logger('progress')


class ProgressTracker:
    """Thread-safe progress tracker for experiment sessions."""

    def __init__(self, log_every: int = 1):
        self._lock = threading.Lock()
        self._sessions: Dict[str, Dict[str, Any]] = {}
        self.log_every = max(1, log_every)

    def start_session(self, session_id: str, total_steps: int, description: str = "Running") -> None:
        with self._lock:
            self._sessions[session_id] = {
                'total_steps': total_steps,
                'current_step': 0,
                'description': description,
                'status': 'running',
                'current_task': 'Starting...',
                'start_time': datetime.now(),
                'percent': 0.0,
                'error': None,
            }
        logger.info(f"Session started: {session_id} - {description} ({total_steps} trials)")

    def update_progress(self, session_id: str, step: Optional[int], task: str) -> None:
        """Record that `step` of the session's trials are done (None: one more than before)."""
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                return
            step = session['current_step'] + 1 if step is None else step
            session['current_step'] = step
            session['current_task'] = task
            session['last_update'] = datetime.now()
            total = session['total_steps']
            session['percent'] = min(100.0, step / total * 100) if total > 0 else 0.0
            elapsed = (session['last_update'] - session['start_time']).total_seconds()
            eta = elapsed / step * (total - step) if step else float('nan')
            should_log = step % self.log_every == 0 or step == total
        if should_log:
            logger.info(f"{session_id}: {step}/{total} ({session['percent']:.0f}%) - {task}, "
                        f"eta {eta:.0f}s")

    def advance(self, session_id: str, task: str) -> None:
        """Count one more finished trial."""
        self.update_progress(session_id, None, task)

    def complete_session(self, session_id: str, success: bool = True, error: Optional[str] = None) -> None:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                return
            session['status'] = 'completed' if success else 'error'
            session['percent'] = 100.0 if success else session['percent']
            session['end_time'] = datetime.now()
            session['error'] = error
            seconds = (session['end_time'] - session['start_time']).total_seconds()
        status_text = "completed" if success else f"failed: {error}"
        logger.info(f"Session {session_id} {status_text} after {seconds:.1f}s")

    def get_progress(self, session_id: str) -> Optional[Dict[str, Any]]:
        with self._lock:
            session = self._sessions.get(session_id)
            return dict(session) if session else None

    def cleanup_session(self, session_id: str) -> None:
        with self._lock:
            if self._sessions.pop(session_id, None) is not None:
                logger.debug(f"Session cleaned up: {session_id}")


# Global progress tracker instance
progress_tracker = ProgressTracker()
