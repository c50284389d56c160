"""Benchmark harness over the (p, q) plane."""
