mod common;

use common::gradcheck::{suite, TOL};

#[test]
fn finite_differences_match_backward() {
    let checks = suite(0x9a1d);
    assert!(checks.len() >= 20);
    for c in &checks {
        assert!(c.passed(), "{}: max relative error {:.3e} over {} values", c.name, c.max_rel, c.checked);
    }
    for c in &checks {
        println!("{:<60} n={:<5} max rel {:.2e}", c.name, c.checked, c.max_rel);
    }
    let worst = checks.iter().map(|c| c.max_rel).fold(0.0, f64::max);
    assert!(worst < TOL);
}
