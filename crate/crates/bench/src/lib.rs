//! Criterion benchmarks in `benches/` and the acceptance harness in `tests/`.
