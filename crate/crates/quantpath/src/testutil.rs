//! Shared fixtures for the unit tests.

use crate::mat::Mat;
use crate::problem::QuantileProblem;

/// Three observations, three columns, groups `{0}` and `{1, 2}`, tau = 1/2.
/// The complete solution path of this problem is known exactly and is used
/// as the golden fixture across modules.
pub fn demo_problem() -> QuantileProblem {
    let x = Mat::from_rows(&[
        vec![-4.0, 3.0, 5.0],
        vec![-4.0, 5.0, 1.0],
        vec![4.0, -3.0, 0.0],
    ]);
    QuantileProblem::new(x, vec![8.0, 7.0, -11.0], 0.5, vec![vec![0], vec![1, 2]]).unwrap()
}

pub fn assert_close(got: &[f64], want: &[f64], tol: f64) {
    assert_eq!(got.len(), want.len(), "length mismatch: {got:?} vs {want:?}");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!(
            (g - w).abs() <= tol,
            "component {i}: got {g}, want {w} (tol {tol}); full: {got:?} vs {want:?}"
        );
    }
}
