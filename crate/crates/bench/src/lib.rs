//! Benchmarks for the `layerdp` library live in `benches/`.
