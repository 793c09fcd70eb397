from .trace_pattern import TraceConfig, TracePatterning, ground_truth_returns, return_horizon

__all__ = ["TraceConfig", "TracePatterning", "ground_truth_returns", "return_horizon"]
