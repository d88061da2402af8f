//! Benchmarks for the crowd-consensus pipeline live in `benches/`.
