//! Fixtures shared by the benchmarks.

use grp_core::sim::{gen_glm_response, gen_toeplitz_design, Misspec};
use grp_core::{Dataset, GlmFamily};

/// Sparse logistic problem on a Toeplitz design with five unit coefficients.
pub fn logistic_fixture(n: usize, p: usize, seed: u64) -> Dataset {
    let x = gen_toeplitz_design(n, p, 0.6, seed).expect("valid design");
    let beta: Vec<f64> = (0..p).map(|j| if j < 5 { 1.0 } else { 0.0 }).collect();
    let y = gen_glm_response(x.view(), GlmFamily::Logistic, &beta, &Misspec::None, 0.0, seed + 1)
        .expect("valid response");
    Dataset::for_family(x, y, GlmFamily::Logistic).expect("two classes")
}
