//! Benchmarks and power studies for `dendroscan`; see `benches/` and
//! `examples/`.
