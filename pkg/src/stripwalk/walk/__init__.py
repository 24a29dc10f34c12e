from .chain import (WalkState, WalkSummary, WindowExhaustedError, build_cdf, first_passage,
                    reflected_window, simulate, simulate_1d, simulate_batch, step)

__all__ = [
    "WalkState", "WalkSummary", "WindowExhaustedError", "build_cdf", "first_passage",
    "reflected_window", "simulate", "simulate_1d", "simulate_batch", "step",
]
