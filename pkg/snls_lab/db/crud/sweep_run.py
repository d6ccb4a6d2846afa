from sqlalchemy.orm import Session
from typing import List, Optional
from snls_lab.db.models.sweep_run import SweepRun, StrengthSummaryRow, TrajectoryOutcomeRow
from snls_lab.db.schemas.experiments import SweepReport


def create_sweep_run(db: Session, report: SweepReport, run_dir: Optional[str] = None) -> SweepRun:
    db_run = SweepRun(
        run_id=report.run_id,
        config_hash=report.config_hash,
        code_version=report.code_version,
        schema_version=report.schema_version,
        config=report.config.model_dump(mode="json"),
        run_dir=run_dir,
        snapshot_files=list(report.snapshot_files),
        created_at=report.created_at,
    )
    for i, summary in enumerate(report.summaries):
        db_run.summaries.append(StrengthSummaryRow(position=i, **summary.model_dump()))
    for i, traj in enumerate(report.trajectories):
        db_run.trajectories.append(TrajectoryOutcomeRow(position=i, **traj.model_dump(mode="json")))
    db.add(db_run)
    db.commit()
    db.refresh(db_run)
    return db_run


def get_sweep_run(db: Session, run_id: str) -> Optional[SweepRun]:
    return db.query(SweepRun).filter(SweepRun.run_id == run_id).first()


def get_sweep_runs_by_hash(db: Session, config_hash: str) -> List[SweepRun]:
    return db.query(SweepRun).filter(SweepRun.config_hash == config_hash).order_by(SweepRun.created_at).all()


def get_all_sweep_runs(db: Session, skip: int = 0, limit: int = 100) -> List[SweepRun]:
    return db.query(SweepRun).offset(skip).limit(limit).all()


def delete_sweep_run(db: Session, run_id: str) -> bool:
    db_run = get_sweep_run(db, run_id)
    if db_run:
        db.delete(db_run)
        db.commit()
        return True
    return False
