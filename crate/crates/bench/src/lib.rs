//! Criterion benchmarks for the `adherence` crate live under `benches/`.
