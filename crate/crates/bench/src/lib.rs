//! Benchmarks for the core numerical kernels live under `benches/`.
