//! Criterion benchmarks for the `ercav` library live under `benches/`.
