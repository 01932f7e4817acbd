//! Benchmark-only crate; see benches/codec.rs.
