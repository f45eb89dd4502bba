//! Benchmark-only crate; see `benches/decode_path.rs`.
