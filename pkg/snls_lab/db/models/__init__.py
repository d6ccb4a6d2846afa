from .sweep_run import SweepRun, StrengthSummaryRow, TrajectoryOutcomeRow

__all__ = ['SweepRun', 'StrengthSummaryRow', 'TrajectoryOutcomeRow']
