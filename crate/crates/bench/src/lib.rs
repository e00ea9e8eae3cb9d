//! Benchmark fixtures shared by the criterion targets.

use comono_rdd::dgp::gen_linear_oracle;
use comono_rdd::Dataset;

/// Linear-oracle sample used by every benchmark.
pub fn fixture(n: usize) -> Dataset {
    gen_linear_oracle(n, 0.5, 0.1, 20_240_601).expect("valid design").0
}
