//! Benchmarks for saddlekit; see `benches/`.
