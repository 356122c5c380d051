//! Hölder base potentials and the membership diagnostics the operator theory
//! asks of them: oscillation and Hölder budgets, and the spectral-gap
//! condition combining degree, contraction constants, and the potential
//! budget. Also hosts the reduction of fiber potentials to base potentials
//! along an invariant horizontal fiber.

use std::sync::Arc;

use base_dynamics::{IntervalMap, PointFn};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("potential evaluated to a non-finite value at x = {0}")]
    NonFinite(f64),
    #[error("fiber {y0} moves by {residual:.3e} under the fiber map; not an invariant fiber")]
    FixedFiberViolation { y0: f64, residual: f64 },
}

/// Default sampling resolution for populating estimates.
pub const DEFAULT_GRID: usize = 4096;

/// Cap on exhaustive pair enumeration; beyond this the estimator strides.
const PAIR_BUDGET: usize = 200_000;

/// A ζ-Hölder potential on the base, with empirical regularity estimates.
/// Estimates are sampled lower bounds; the class membership they feed is a
/// diagnostic, not a certificate.
pub struct HolderPotential {
    eval: PointFn,
    pub zeta: f64,
    pub holder_constant_estimate: f64,
    pub sup_val: f64,
    pub inf_val: f64,
    pub epsilon_phi: f64,
    /// Base metric convention for pair distances.
    pub circle: bool,
    /// Interior breakpoints across which φ may jump (branch cuts of the
    /// generating map). Regularity is measured within pieces: the operator
    /// estimates only ever compare φ at two points of one inverse-branch
    /// image, so a jump at a cut is invisible to them.
    pub pieces: Vec<f64>,
    grid_used: usize,
}

impl HolderPotential {
    pub fn from_fn(
        eval: PointFn,
        zeta: f64,
        epsilon_phi: f64,
        circle: bool,
        grid_size: usize,
    ) -> Result<Self, PotentialError> {
        if !(zeta > 0.0 && zeta <= 1.0) {
            return Err(PotentialError::InvalidParameter(format!(
                "Hölder exponent must lie in (0,1], got {zeta}"
            )));
        }
        if grid_size < 8 {
            return Err(PotentialError::InvalidParameter(format!(
                "grid size {grid_size} below minimum 8"
            )));
        }
        let mut p = HolderPotential {
            eval,
            zeta,
            holder_constant_estimate: 0.0,
            sup_val: f64::NEG_INFINITY,
            inf_val: f64::INFINITY,
            epsilon_phi,
            circle,
            pieces: Vec::new(),
            grid_used: grid_size,
        };
        p.repopulate(grid_size)?;
        Ok(p)
    }

    /// Declare branch cuts and refresh the piecewise regularity estimates.
    pub fn with_pieces(mut self, mut pieces: Vec<f64>) -> Result<Self, PotentialError> {
        pieces.retain(|&c| c > 0.0 && c < 1.0);
        pieces.sort_by(|a, b| a.partial_cmp(b).unwrap());
        self.pieces = pieces;
        self.repopulate(self.grid_used)?;
        Ok(self)
    }

    pub fn constant(c: f64, zeta: f64, epsilon_phi: f64) -> Self {
        Self::from_fn(Arc::new(move |_| c), zeta, epsilon_phi, false, 64)
            .expect("constant potential is always valid")
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn oscillation(&self) -> f64 {
        self.sup_val - self.inf_val
    }

    pub fn grid_used(&self) -> usize {
        self.grid_used
    }

    /// Re-derive sup/inf and the Hölder estimate at the given resolution.
    pub fn repopulate(&mut self, grid_size: usize) -> Result<(), PotentialError> {
        let pts = sample_points(grid_size);
        let mut vals = Vec::with_capacity(pts.len());
        for &x in &pts {
            let v = (self.eval)(x);
            if !v.is_finite() {
                return Err(PotentialError::NonFinite(x));
            }
            vals.push(v);
        }
        self.sup_val = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.inf_val = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        self.holder_constant_estimate =
            holder_ratio_max(&pts, &vals, self.zeta, self.circle, &self.pieces);
        self.grid_used = grid_size;
        Ok(())
    }
}

/// Interior grid i/n, i = 1..n-1. Nested as n doubles, so sampled Hölder
/// estimates are monotone in the resolution; excludes endpoints where
/// geometric potentials of intermittent maps degenerate.
fn sample_points(n: usize) -> Vec<f64> {
    (1..n).map(|i| i as f64 / n as f64).collect()
}

fn pair_distance(a: f64, b: f64, circle: bool) -> f64 {
    let d = (a - b).abs();
    if circle {
        d.min(1.0 - d)
    } else {
        d
    }
}

/// Max of |v_i - v_j| / d(x_i,x_j)^ζ over an exhaustive or strided pair set,
/// skipping pairs separated by a declared cut.
fn holder_ratio_max(pts: &[f64], vals: &[f64], zeta: f64, circle: bool, pieces: &[f64]) -> f64 {
    let n = pts.len();
    let piece_of = |x: f64| pieces.iter().filter(|&&c| x >= c).count();
    let mut best = 0.0f64;
    let mut consider = |i: usize, j: usize| {
        if piece_of(pts[i]) != piece_of(pts[j]) {
            return;
        }
        let d = pair_distance(pts[i], pts[j], circle);
        if d > 0.0 {
            let r = (vals[i] - vals[j]).abs() / d.powf(zeta);
            if r > best {
                best = r;
            }
        }
    };
    if n * (n - 1) / 2 <= PAIR_BUDGET {
        for i in 0..n {
            for j in (i + 1)..n {
                consider(i, j);
            }
        }
    } else {
        // Near offsets catch rough pairs, doubling strides catch the
        // large-separation regime that dominates for smooth φ with ζ < 1.
        for i in 0..n {
            for off in 1..=32usize {
                if i + off < n {
                    consider(i, i + off);
                }
            }
            let mut off = 64usize;
            while i + off < n {
                consider(i, i + off);
                off *= 2;
            }
        }
    }
    best
}

/// Sampled lower bound on the ζ-Hölder seminorm of φ at the given resolution.
pub fn estimate_holder_constant(phi: &HolderPotential, grid_size: usize) -> f64 {
    let pts = sample_points(grid_size.max(8));
    let vals: Vec<f64> = pts.iter().map(|&x| phi.value(x)).collect();
    holder_ratio_max(&pts, &vals, phi.zeta, phi.circle, &phi.pieces)
}

/// Membership report for the potential class: oscillation below the budget
/// and Hölder constant of e^φ below ε_φ e^{inf φ}.
#[derive(Debug, Clone)]
pub struct PmReport {
    pub f31: bool,
    pub f32: bool,
    /// sup φ − inf φ.
    pub oscillation: f64,
    /// Sampled H_ζ(e^φ).
    pub holder_exp: f64,
    /// ε_φ e^{inf φ}.
    pub f32_bound: f64,
    pub epsilon_phi: f64,
}

impl PmReport {
    pub fn is_member(&self) -> bool {
        self.f31 && self.f32
    }
}

pub fn check_pm_membership(phi: &HolderPotential) -> PmReport {
    let pts = sample_points(phi.grid_used);
    let vals: Vec<f64> = pts.iter().map(|&x| phi.value(x).exp()).collect();
    let holder_exp = holder_ratio_max(&pts, &vals, phi.zeta, phi.circle, &phi.pieces);
    let oscillation = phi.oscillation();
    let f32_bound = phi.epsilon_phi * phi.inf_val.exp();
    PmReport {
        f31: oscillation < phi.epsilon_phi,
        f32: holder_exp < f32_bound,
        oscillation,
        holder_exp,
        f32_bound,
        epsilon_phi: phi.epsilon_phi,
    }
}

/// Left-hand side of the spectral-gap condition,
/// exp(ε_φ)·[(deg−q)σ^(−e) + q·L^e·(1+(L−1)^e)]/deg, to be compared to 1.
/// The source states one display with exponent α and its worked check with ζ;
/// the exponent is therefore an explicit argument and callers pass ζ.
pub fn gap_condition_value(
    deg: usize,
    q: usize,
    sigma: f64,
    l: f64,
    exponent: f64,
    epsilon_phi: f64,
) -> Result<f64, PotentialError> {
    if q >= deg {
        return Err(PotentialError::InvalidParameter(format!(
            "covering count q = {q} must be below the degree {deg}"
        )));
    }
    if sigma <= 1.0 {
        return Err(PotentialError::InvalidParameter(format!(
            "expansion constant must exceed 1, got {sigma}"
        )));
    }
    if l < 1.0 {
        return Err(PotentialError::InvalidParameter(format!(
            "global inverse Lipschitz bound must be >= 1, got {l}"
        )));
    }
    if !(exponent > 0.0 && exponent <= 1.0) {
        return Err(PotentialError::InvalidParameter(format!(
            "exponent must lie in (0,1], got {exponent}"
        )));
    }
    if epsilon_phi < 0.0 {
        return Err(PotentialError::InvalidParameter("negative ε_φ".into()));
    }
    let expanding = (deg - q) as f64 * sigma.powf(-exponent);
    let bad = q as f64 * l.powf(exponent) * (1.0 + (l - 1.0).powf(exponent));
    Ok(epsilon_phi.exp() * (expanding + bad) / deg as f64)
}

/// φ = −t·log|Df| built from the map's analytic local contraction data.
pub fn geometric_potential(
    map: &IntervalMap,
    t: f64,
    zeta: f64,
) -> Result<HolderPotential, PotentialError> {
    let branches: Vec<(f64, Arc<dyn Fn(f64) -> f64 + Send + Sync>)> = map
        .branches
        .iter()
        .map(|b| {
            let dom_end = b.domain.1;
            let l = b.inv_lipschitz_arc();
            (dom_end, l)
        })
        .collect();
    let circle = map.circle;
    let eval: PointFn = Arc::new(move |x: f64| {
        let mut idx = branches.len() - 1;
        for (i, (end, _)) in branches.iter().enumerate() {
            if x < *end {
                idx = i;
                break;
            }
        }
        // |Df| = 1/L(x); L analytic per branch, so the log is well posed
        // wherever L is finite and positive.
        t * branches[idx].1(x).ln()
    });
    let cuts: Vec<f64> = map.branches.iter().skip(1).map(|b| b.domain.0).collect();
    HolderPotential::from_fn(eval, zeta, 0.05, circle, DEFAULT_GRID)?.with_pieces(cuts)
}

/// Freeze a fiber potential along an invariant horizontal fiber y0, after
/// verifying the fiber really is invariant: sup_x |G(x,y0) − y0| ≤ 1e-9 on a
/// grid. The result still needs a membership check before use.
pub fn reduce_fiber_potential(
    phi_bar: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    fiber_map: &dyn Fn(f64, f64) -> f64,
    y0: f64,
    zeta: f64,
    epsilon_phi: f64,
    circle: bool,
) -> Result<HolderPotential, PotentialError> {
    let mut residual = 0.0f64;
    for i in 0..=1024 {
        let x = i as f64 / 1024.0;
        residual = residual.max((fiber_map(x, y0) - y0).abs());
    }
    if residual > 1e-9 {
        return Err(PotentialError::FixedFiberViolation { y0, residual });
    }
    let eval: PointFn = Arc::new(move |x: f64| phi_bar(x, y0));
    HolderPotential::from_fn(eval, zeta, epsilon_phi, circle, DEFAULT_GRID)
}

#[cfg(test)]
mod tests {
    use super::*;
    use base_dynamics::{doubling, l_adic, manneville_pomeau};
    use proptest::prelude::*;

    #[test]
    fn constant_has_zero_seminorm() {
        let p = HolderPotential::constant(3.7, 0.5, 0.1);
        assert_eq!(p.holder_constant_estimate, 0.0);
        assert_eq!(p.oscillation(), 0.0);
        assert_eq!(estimate_holder_constant(&p, 256), 0.0);
    }

    #[test]
    fn identity_has_unit_lipschitz_constant() {
        let p = HolderPotential::from_fn(Arc::new(|x| x), 1.0, 1.0, false, 512).unwrap();
        assert!((p.holder_constant_estimate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mp_geometric_oscillation_envelope() {
        // Pairwise differences of −t log|Df| are bounded by t·log(2+α);
        // the Hölder ratio itself is allowed to exceed that.
        let alpha = 0.5;
        let t = 0.1;
        let f = manneville_pomeau(alpha).unwrap();
        let p = geometric_potential(&f, -t, alpha).unwrap();
        let envelope = t * (2.0 + alpha).ln();
        assert!(
            p.oscillation() <= envelope + 1e-12,
            "oscillation {} vs envelope {}",
            p.oscillation(),
            envelope
        );
        assert!(p.holder_constant_estimate > envelope);
        assert!(p.holder_constant_estimate < 2.0f64.powf(alpha) * (1.0 + alpha) * t * 1.05);
    }

    #[test]
    fn pm_membership_trivial_and_failing() {
        let zero = HolderPotential::constant(0.0, 0.5, 0.1);
        let r = check_pm_membership(&zero);
        assert!(r.f31 && r.f32);

        let steep =
            HolderPotential::from_fn(Arc::new(|x| 10.0 * x), 1.0, 0.1, false, 256).unwrap();
        let r = check_pm_membership(&steep);
        assert!(!r.f31);
        assert!((r.oscillation - 10.0 * (255.0 - 1.0) / 256.0).abs() < 1e-9);
    }

    #[test]
    fn pm_membership_mp_family_small_t() {
        let alpha = 0.5;
        let f = manneville_pomeau(alpha).unwrap();
        let p = geometric_potential(&f, 0.01, alpha).unwrap();
        let r = check_pm_membership(&p);
        assert!(r.is_member(), "oscillation {} holder_exp {} bound {}", r.oscillation, r.holder_exp, r.f32_bound);
    }

    #[test]
    fn gap_condition_worked_values() {
        let v = gap_condition_value(3, 1, 2.0, 1.0, 1.0, 0.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        let v = gap_condition_value(2, 0, 2.0, 1.0, 1.0, 0.0).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        assert!(gap_condition_value(2, 2, 2.0, 1.0, 1.0, 0.0).is_err());
        assert!(gap_condition_value(2, 1, 0.9, 1.0, 1.0, 0.0).is_err());
        assert!(gap_condition_value(2, 1, 2.0, 0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn geometric_potentials_of_linear_maps_are_constant() {
        let p = geometric_potential(&doubling(), 1.0, 1.0).unwrap();
        assert!((p.value(0.33) + 2.0f64.ln()).abs() < 1e-12);
        assert!(p.oscillation() < 1e-12);
        let p = geometric_potential(&l_adic(3), 1.0, 1.0).unwrap();
        assert!((p.value(0.7) + 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn reduce_fiber_potential_freezes_y() {
        let phi_bar = Arc::new(|x: f64, y: f64| -(2.0f64.ln()) + 0.3 * x + y);
        // Fiber map with invariant fiber at 0.
        let g = |_x: f64, y: f64| 0.5 * y;
        let p = reduce_fiber_potential(phi_bar.clone(), &g, 0.0, 1.0, 0.5, true).unwrap();
        for i in 0..10 {
            let x = i as f64 / 10.0;
            assert!((p.value(x) - (phi_bar(x, 0.0))).abs() < 1e-15);
        }
        // A fiber the map moves is rejected.
        let err = reduce_fiber_potential(phi_bar, &g, 0.25, 1.0, 0.5, true);
        assert!(matches!(err, Err(PotentialError::FixedFiberViolation { .. })));
    }

    #[test]
    fn fiber_constant_reduction_is_pointwise_identity() {
        let psi = |x: f64| (2.0 * std::f64::consts::PI * x).cos();
        let phi_bar = Arc::new(move |x: f64, _y: f64| psi(x));
        let g = |_x: f64, y: f64| y; // identity fibers: every fiber invariant
        let p = reduce_fiber_potential(phi_bar, &g, 0.7, 1.0, 0.5, true).unwrap();
        for i in 0..50 {
            let x = i as f64 / 50.0;
            assert!((p.value(x) - psi(x)).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn gap_value_monotone(
            eps in 0.0f64..0.3,
            l in 1.0f64..1.5,
            sigma in 1.1f64..4.0,
        ) {
            let base = gap_condition_value(3, 1, sigma, l, 0.7, eps).unwrap();
            prop_assert!(gap_condition_value(3, 1, sigma, l, 0.7, eps + 0.05).unwrap() > base);
            prop_assert!(gap_condition_value(3, 1, sigma, l + 0.1, 0.7, eps).unwrap() > base);
            prop_assert!(gap_condition_value(3, 2, sigma, l, 0.7, eps).unwrap() >= base);
            prop_assert!(gap_condition_value(3, 1, sigma + 0.2, l, 0.7, eps).unwrap() < base);
        }

        #[test]
        fn holder_estimate_monotone_in_resolution(seed in 0u64..50) {
            // Nested grids: the finer estimate dominates.
            let a = 0.5 + (seed as f64) / 100.0;
            let p = HolderPotential::from_fn(
                Arc::new(move |x: f64| (a * 7.1 * x).sin() + 0.3 * (13.0 * x).cos()),
                0.6, 1.0, false, 64,
            ).unwrap();
            let coarse = estimate_holder_constant(&p, 64);
            let fine = estimate_holder_constant(&p, 128);
            prop_assert!(fine >= coarse - 1e-12);
        }
    }
}
