# toimit/loaders.py - writes run manifests and dropped trajectories into the registry
import json
import logging
from typing import List, Optional, Sequence

from sqlalchemy.orm import Session

from toimit.database import SessionLocal
from toimit.dataset import DroppedTask
from toimit.models import GenerationFailure, RunRecord
from toimit.schemas import RunManifest


logger = logging.getLogger(__name__)


def save_run(
    manifest: RunManifest,
    failures: Sequence[DroppedTask] = (),
    db_session: Optional[Session] = None,
) -> int:
    """
    Insert one run and its dropped trajectories.

    Args:
        manifest: The run's manifest, as written next to its outputs
        failures: Tasks dropped during generation (empty for other commands)
        db_session: Optional SQLAlchemy session. If None, opens one on the configured registry.

    Returns:
        The new run id

    Raises:
        Exception: If database operations fail (the insert is rolled back)
    """
    own_session = db_session is None
    if own_session:
        db_session = SessionLocal()

    try:
        run = RunRecord(
            command=manifest.command,
            output_dir=manifest.output_dir,
            seed=manifest.seed,
            config_hash=manifest.config_hash,
            arguments=json.dumps(manifest.arguments, sort_keys=True),
            started_at=manifest.started_at,
            finished_at=manifest.finished_at,
            exit_code=manifest.exit_code,
        )
        run.failures = [
            GenerationFailure(
                task=f.task.name,
                seed_index=f.index,
                task_seed=f.task.seed,
                reason=f.reason,
            )
            for f in failures
        ]
        db_session.add(run)
        db_session.commit()
        logger.debug(f"Registered run {run.id} ({manifest.command}, {len(failures)} failure(s))")
        return run.id

    except Exception:
        db_session.rollback()
        raise

    finally:
        # Only close if session is created
        if own_session:
            db_session.close()


def list_runs(db_session: Session, command: Optional[str] = None) -> List[RunRecord]:
    query = db_session.query(RunRecord)
    if command is not None:
        query = query.filter(RunRecord.command == command)
    return query.order_by(RunRecord.id).all()
