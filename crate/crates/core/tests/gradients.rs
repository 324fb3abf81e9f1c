//! Analytic gradients against central finite differences.

mod oracles;

use oracles::suite;

#[test]
fn gcn_gradient_matches_finite_differences() {
    suite::gcn_gradient().unwrap();
}

#[test]
fn gae_gradient_matches_finite_differences() {
    suite::gae_gradient().unwrap();
}

#[test]
fn skipgram_gradient_matches_finite_differences() {
    suite::skipgram_gradient().unwrap();
}
