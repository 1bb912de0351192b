# toimit/models.py - run registry tables using SQLAlchemy ORM
from sqlalchemy import Column, DateTime, ForeignKey, Index, Integer, String, Text
from sqlalchemy.orm import declarative_base, relationship


Base = declarative_base()


# ============================================
# Run Record Model
# ============================================


class RunRecord(Base):
    """One CLI invocation and where its outputs went."""
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    command = Column(String, nullable=False, index=True)
    output_dir = Column(String, nullable=False)
    seed = Column(Integer, nullable=False)
    config_hash = Column(String, nullable=False, default="")
    arguments = Column(Text, nullable=False, default="{}")  # JSON
    started_at = Column(DateTime, nullable=False)
    finished_at = Column(DateTime, nullable=True)
    exit_code = Column(Integer, nullable=True)

    # One-to-many with dropped trajectories
    failures = relationship(
        "GenerationFailure",
        back_populates="run",
        cascade="all, delete-orphan",
    )

    __table_args__ = (
        Index("idx_command_started", "command", "started_at"),
    )

    def __repr__(self):
        return (
            f"<RunRecord(id={self.id}, command={self.command}, seed={self.seed}, "
            f"exit_code={self.exit_code})>"
        )


# ============================================
# Generation Failure Model
# ============================================


class GenerationFailure(Base):
    """A sampled task whose solve did not converge or failed the feasibility gates."""
    __tablename__ = "generation_failures"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("runs.id"), nullable=False)
    task = Column(String, nullable=False, index=True)
    seed_index = Column(Integer, nullable=False)
    task_seed = Column(Integer, nullable=True)
    reason = Column(Text, nullable=False)

    run = relationship("RunRecord", back_populates="failures")

    __table_args__ = (
        Index("idx_failure_run", "run_id"),
    )

    def __repr__(self):
        return f"<GenerationFailure(id={self.id}, task={self.task}, seed_index={self.seed_index})>"
