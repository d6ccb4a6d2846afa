from .sweep_run import create_sweep_run, get_sweep_run, get_sweep_runs_by_hash, get_all_sweep_runs, delete_sweep_run
