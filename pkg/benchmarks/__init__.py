"""Timing, desk-scale reproduction and parameter sweeps"""

__all__ = ['timing_profiler', 'benchmark_runner', 'noise_sweep']
