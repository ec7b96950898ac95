//! Criterion benchmarks for the mclose pipeline; see `benches/`.
