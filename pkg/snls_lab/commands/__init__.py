from . import simulate, sweep, gbm, picard, selftest

__all__ = ['simulate', 'sweep', 'gbm', 'picard', 'selftest']
