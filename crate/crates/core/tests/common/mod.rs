#![allow(dead_code)]

mod oracles;

pub use oracles::*;

/// Fixed-seed proptest configuration so runs are reproducible.
pub fn proptest_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        rng_seed: proptest::test_runner::RngSeed::Fixed(0x5eed_1e55),
        failure_persistence: None,
        ..proptest::test_runner::Config::default()
    }
}
