"""Runtime benchmarking: label transfer, aggregation, voxelization."""

from .benchmark import run_benchmark, BENCHMARK_COUNTS

__all__ = ["run_benchmark", "BENCHMARK_COUNTS"]
