//! Criterion benchmarks for `acco-core`; see `benches/`.
