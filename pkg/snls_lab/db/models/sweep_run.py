from sqlalchemy import Column, Integer, String, Boolean, Float, DateTime, JSON, ForeignKey
from datetime import datetime, timezone
from snls_lab.database import Base
from sqlalchemy.orm import relationship


class SweepRun(Base):
    __tablename__ = "sweep_runs"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(String, nullable=False, unique=True, index=True)
    config_hash = Column(String, nullable=False, index=True)
    code_version = Column(String, nullable=False)
    schema_version = Column(Integer, nullable=False)
    config = Column(JSON, nullable=False)  # SweepConfig.model_dump(mode="json")
    run_dir = Column(String, nullable=True)
    snapshot_files = Column(JSON, nullable=True)
    created_at = Column(DateTime(timezone=True), default=lambda: datetime.now(timezone.utc))

    summaries = relationship(
        "StrengthSummaryRow", back_populates="run", cascade="all, delete-orphan", order_by="StrengthSummaryRow.position"
    )
    trajectories = relationship(
        "TrajectoryOutcomeRow", back_populates="run", cascade="all, delete-orphan", order_by="TrajectoryOutcomeRow.position"
    )

    def __repr__(self):
        return f"<SweepRun(id={self.id}, run_id='{self.run_id}', config_hash='{self.config_hash[:12]}')>"


class StrengthSummaryRow(Base):
    __tablename__ = "strength_summaries"

    id = Column(Integer, primary_key=True, index=True)
    sweep_run_id = Column(Integer, ForeignKey("sweep_runs.id"), nullable=False)
    position = Column(Integer, nullable=False)
    strength = Column(Float, nullable=False)
    n_paths = Column(Integer, nullable=False)
    n_global = Column(Integer, nullable=False)
    n_blowup = Column(Integer, nullable=False)
    n_undecided = Column(Integer, nullable=False)
    n_failed = Column(Integer, default=0)
    n_global_loose = Column(Integer, nullable=False)
    p_hat = Column(Float, nullable=False)
    ci_lo = Column(Float, nullable=False)
    ci_hi = Column(Float, nullable=False)
    p_hat_loose = Column(Float, nullable=False)
    ci_lo_loose = Column(Float, nullable=False)
    ci_hi_loose = Column(Float, nullable=False)
    mean_peak_grad = Column(Float, nullable=True)
    max_peak_grad = Column(Float, nullable=True)
    certificate_fraction = Column(Float, nullable=True)

    run = relationship("SweepRun", back_populates="summaries")

    def __repr__(self):
        return f"<StrengthSummaryRow(strength={self.strength}, p_hat={self.p_hat}, n_paths={self.n_paths})>"


class TrajectoryOutcomeRow(Base):
    __tablename__ = "trajectory_outcomes"

    id = Column(Integer, primary_key=True, index=True)
    sweep_run_id = Column(Integer, ForeignKey("sweep_runs.id"), nullable=False)
    position = Column(Integer, nullable=False)
    strength = Column(Float, nullable=False)
    strength_index = Column(Integer, nullable=False)
    path_index = Column(Integer, nullable=False)
    seed = Column(JSON, nullable=False)  # entropy list [base_seed, strength_index, path_index]
    frame = Column(String, nullable=False, default="physical")
    kind = Column(String, nullable=False)
    kind_loose = Column(String, nullable=True)
    blowup_time = Column(Float, nullable=True)
    unstable = Column(Boolean, default=False)
    scattering_residual = Column(Float, nullable=True)
    peak_grad_ratio = Column(Float, nullable=True)
    certificate = Column(Boolean, nullable=True)
    error = Column(String, nullable=True)
    snapshot_file = Column(String, nullable=True)

    run = relationship("SweepRun", back_populates="trajectories")

    def __repr__(self):
        return f"<TrajectoryOutcomeRow(strength={self.strength}, path_index={self.path_index}, kind='{self.kind}')>"
