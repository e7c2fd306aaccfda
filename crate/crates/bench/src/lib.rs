//! Criterion benchmarks for the bprelab kernels; see `benches/`.
