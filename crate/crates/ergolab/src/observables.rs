//! Named observables configs can refer to. Base observables are functions
//! of the base coordinate alone (legal test functions for the duality
//! route); pair observables see both coordinates.

use crate::ErgoError;
use std::f64::consts::TAU;

pub type BaseObs = Box<dyn Fn(f64) -> f64 + Send + Sync>;
pub type PairObs = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

pub fn base_observable(name: &str) -> Result<BaseObs, ErgoError> {
    match name {
        "cos_2pi_x" => Ok(Box::new(|x| (TAU * x).cos())),
        "sin_2pi_x" => Ok(Box::new(|x| (TAU * x).sin())),
        other => Err(ErgoError::Config(format!(
            "unknown base observable '{other}'; expected cos_2pi_x or sin_2pi_x"
        ))),
    }
}

pub fn pair_observable(name: &str) -> Result<PairObs, ErgoError> {
    match name {
        "cos_2pi_x" => Ok(Box::new(|x, _| (TAU * x).cos())),
        "sin_2pi_x" => Ok(Box::new(|x, _| (TAU * x).sin())),
        "fiber_y" => Ok(Box::new(|_, y| y)),
        "distance_sq" => Ok(Box::new(|x, y| (x - y) * (x - y))),
        // cos(4 pi x) - cos(2 pi x) = u(2x) - u(x) with u = cos(2 pi .):
        // a coboundary over any base with doubling in it, the canonical
        // degenerate-variance case
        "cos_coboundary" => Ok(Box::new(|x, _| (2.0 * TAU * x).cos() - (TAU * x).cos())),
        other => Err(ErgoError::Config(format!(
            "unknown observable '{other}'; expected one of cos_2pi_x, sin_2pi_x, fiber_y, \
             distance_sq, cos_coboundary"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_observables_evaluate_where_we_can_check_by_hand() {
        let cos = base_observable("cos_2pi_x").unwrap();
        assert!((cos(0.0) - 1.0).abs() < 1e-15);
        assert!(cos(0.25).abs() < 1e-15);
        let d2 = pair_observable("distance_sq").unwrap();
        assert!((d2(0.3, 0.1) - 0.04).abs() < 1e-15);
        let y = pair_observable("fiber_y").unwrap();
        assert_eq!(y(0.9, 0.125), 0.125);
    }

    #[test]
    fn coboundary_really_telescopes_under_doubling() {
        let ob = pair_observable("cos_coboundary").unwrap();
        let u = |x: f64| (TAU * x).cos();
        for i in 0..50 {
            let x = i as f64 / 50.0 + 0.007;
            let fx = (2.0 * x).rem_euclid(1.0);
            assert!((ob(x, 0.0) - (u(fx) - u(x))).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_names_are_rejected_with_the_menu() {
        let err = base_observable("nope").err().expect("unknown name").to_string();
        assert!(err.contains("cos_2pi_x"), "{err}");
        let err = pair_observable("nope").err().expect("unknown name").to_string();
        assert!(err.contains("cos_coboundary"), "{err}");
    }
}
