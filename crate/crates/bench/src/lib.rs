//! Criterion benchmarks of the control, simulation and optimization hot paths.
//! Run with `cargo bench -p gaitopt-bench`.
