//! Criterion benchmarks for path synthesis; see `benches/synthesis.rs`.
