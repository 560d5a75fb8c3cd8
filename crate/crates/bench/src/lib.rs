//! Criterion benchmarks for graphdyn; see `benches/`.
