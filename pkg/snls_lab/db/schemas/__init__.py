# Schemas are imported from their modules directly:
# from snls_lab.db.schemas.solver import SolverConfig
