//! Atomic signed measures on the fiber [0,1], the Wasserstein–Kantorovich
//! style dual norm as an exact finite linear program with an independent
//! oracle, pushforward under fiber maps, bin coarsening, and leaf-indexed
//! families with the norms the transfer-operator analysis runs on.

mod family;
mod flow;
mod lp;

pub use family::{
    family_distance_linf, holder_seminorm, linf_norm, read_family_csv, sinf_norm,
    write_family_csv, LeafFamily,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("fiber map sent an atom to {0}, outside [0,1]")]
    FiberEscape(f64),
    #[error("leaf count mismatch: {a} vs {b}")]
    LeafCountMismatch { a: usize, b: usize },
    #[error("family file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Signed atomic measure: sorted positions in [0,1], coincident atoms merged,
/// exact zeros dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<(f64, f64)>,
    total_mass: f64,
}

impl AtomicMeasure {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self, MeasureError> {
        for &(p, w) in &atoms {
            if !(0.0..=1.0).contains(&p) {
                return Err(MeasureError::InvalidInput(format!("atom position {p} outside [0,1]")));
            }
            if !w.is_finite() {
                return Err(MeasureError::InvalidInput(format!("non-finite weight at {p}")));
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (p, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == p => last.1 += w,
                _ => merged.push((p, w)),
            }
        }
        merged.retain(|&(_, w)| w != 0.0);
        let total_mass = merged.iter().map(|&(_, w)| w).sum();
        Ok(AtomicMeasure { atoms: merged, total_mass })
    }

    pub fn zero() -> Self {
        AtomicMeasure { atoms: Vec::new(), total_mass: 0.0 }
    }

    pub fn delta(pos: f64, weight: f64) -> Result<Self, MeasureError> {
        Self::new(vec![(pos, weight)])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Total variation proxy: sum of absolute weights.
    pub fn abs_mass(&self) -> f64 {
        self.atoms.iter().map(|&(_, w)| w.abs()).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let atoms = self.atoms.iter().map(|&(p, w)| (p, c * w)).collect();
        AtomicMeasure::new(atoms).expect("scaling preserves validity")
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        AtomicMeasure::new(atoms).expect("sum of valid measures is valid")
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(-1.0))
    }

    /// Jordan split after merge; merge-first mirrors the fact that the
    /// decomposition of a restriction does not depend on the representative.
    pub fn positive_part(&self) -> Self {
        let atoms = self.atoms.iter().filter(|&&(_, w)| w > 0.0).cloned().collect();
        AtomicMeasure::new(atoms).expect("filtered atoms valid")
    }

    pub fn negative_part(&self) -> Self {
        let atoms =
            self.atoms.iter().filter(|&&(_, w)| w < 0.0).map(|&(p, w)| (p, -w)).collect();
        AtomicMeasure::new(atoms).expect("filtered atoms valid")
    }

    /// Integral of a test function against the measure.
    pub fn integrate(&self, u: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&(p, w)| w * u(p)).sum()
    }
}

/// Capped Hölder distance between fiber points: the effective test-function
/// separation min(2, |a−b|^ζ).
pub fn rho(a: f64, b: f64, zeta: f64) -> f64 {
    ((a - b).abs().powf(zeta)).min(2.0)
}

/// Exact dual norm: max Σ w_i u(y_i) over test functions with values in
/// [−1,1] and |u(y)−u(z)| ≤ |y−z|^ζ. Values off the atoms never enter the
/// objective and a feasible extension always exists, so the program is finite.
/// ζ = 1 reduces to adjacent-gap constraints and a chain recursion over
/// concave profiles; ζ < 1 makes every pair bind and runs a cutting-plane
/// simplex. Both are exact optima, not estimates.
pub fn wk_norm(mu: &AtomicMeasure, zeta: f64) -> f64 {
    assert!(zeta > 0.0 && zeta <= 1.0, "Hölder exponent {zeta} outside (0,1]");
    if mu.is_empty() {
        return 0.0;
    }
    let pos: Vec<f64> = mu.atoms.iter().map(|&(p, _)| p).collect();
    let w: Vec<f64> = mu.atoms.iter().map(|&(_, w)| w).collect();
    if zeta == 1.0 {
        lp::chain_max(&pos, &w)
    } else {
        lp::cutting_plane_max(&pos, &w, zeta)
    }
}

/// Independent verification route. Phase one follows the projected-subgradient
/// ascent over test-function values on a uniform grid joined with the atom
/// positions, keeping the best value of the repaired (certified feasible)
/// iterate: a lower bound on the norm. Phase two solves the dual
/// transportation problem (move mass at cost min(2,d^ζ), absorb or create at
/// cost 1) exactly by successive shortest paths, which equals the norm by LP
/// duality. The lower bound must not exceed the flow value; the flow value is
/// returned.
pub fn wk_norm_oracle(mu: &AtomicMeasure, zeta: f64, grid: usize) -> f64 {
    assert!(zeta > 0.0 && zeta <= 1.0, "Hölder exponent {zeta} outside (0,1]");
    assert!(grid >= 64, "oracle grid below 64");
    if mu.is_empty() {
        return 0.0;
    }
    let ascent = lp::subgradient_lower_bound(mu, zeta, grid, 200);
    let exact = flow::transport_value(mu, zeta);
    assert!(
        ascent <= exact + 1e-9,
        "oracle sandwich violated: ascent {ascent} above flow optimum {exact}"
    );
    exact
}

/// Transport atoms through a fiber map, preserving weights. The image must
/// stay inside the fiber up to 1e-12 of slack, which is clamped away.
pub fn pushforward(
    g: impl Fn(f64) -> f64,
    mu: &AtomicMeasure,
) -> Result<AtomicMeasure, MeasureError> {
    let mut atoms = Vec::with_capacity(mu.len());
    for &(p, w) in mu.atoms() {
        let image = g(p);
        if !(-1e-12..=1.0 + 1e-12).contains(&image) {
            return Err(MeasureError::FiberEscape(image));
        }
        atoms.push((image.clamp(0.0, 1.0), w));
    }
    AtomicMeasure::new(atoms)
}

/// Aggregate atoms onto a uniform bin-center grid by proportional split to
/// the two nearest centers. Mass is preserved exactly (the second share is
/// the exact complement) and each unit of |weight| moves at most half a bin,
/// so the norm distortion is at most (1/(2·bins))^ζ · Σ|w|.
pub fn coarsen(mu: &AtomicMeasure, bins: usize) -> AtomicMeasure {
    assert!(bins >= 2, "need at least 2 bins");
    let mut acc = vec![0.0f64; bins];
    let nb = bins as f64;
    for &(p, w) in mu.atoms() {
        let t = p * nb - 0.5;
        if t <= 0.0 {
            acc[0] += w;
        } else if t >= nb - 1.0 {
            acc[bins - 1] += w;
        } else {
            let k = t.floor() as usize;
            let theta = t - k as f64;
            let upper = w * theta;
            acc[k] += w - upper;
            acc[k + 1] += upper;
        }
    }
    let atoms: Vec<(f64, f64)> = acc
        .iter()
        .enumerate()
        .filter(|&(_, &w)| w != 0.0)
        .map(|(k, &w)| ((k as f64 + 0.5) / nb, w))
        .collect();
    AtomicMeasure::new(atoms).expect("bin centers lie in [0,1]")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_measure(rng: &mut ChaCha8Rng, max_atoms: usize) -> AtomicMeasure {
        let n = rng.gen_range(1..=max_atoms);
        let atoms: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.gen::<f64>(), rng.gen_range(-1.5..1.5))).collect();
        AtomicMeasure::new(atoms).unwrap()
    }

    #[test]
    fn construction_merges_and_sorts() {
        let mu = AtomicMeasure::new(vec![(0.7, 1.0), (0.2, 0.5), (0.7, -0.25)]).unwrap();
        assert_eq!(mu.atoms(), &[(0.2, 0.5), (0.7, 0.75)]);
        assert!((mu.total_mass() - 1.25).abs() < 1e-15);
        let cancel = AtomicMeasure::new(vec![(0.3, 1.0), (0.3, -1.0)]).unwrap();
        assert!(cancel.is_empty());
    }

    #[test]
    fn wk_norm_closed_forms() {
        let pair = AtomicMeasure::new(vec![(0.2, 1.0), (0.6, -1.0)]).unwrap();
        assert!((wk_norm(&pair, 1.0) - 0.4).abs() < 1e-9);
        let single = AtomicMeasure::delta(0.5, 1.0).unwrap();
        assert!((wk_norm(&single, 1.0) - 1.0).abs() < 1e-9);
        let three =
            AtomicMeasure::new(vec![(0.0, 0.5), (1.0, 0.5), (0.5, -1.0)]).unwrap();
        assert!((wk_norm(&three, 1.0) - 0.5).abs() < 1e-9);
        // ζ < 1 point-mass pair: min(2, d^ζ)·|w|.
        let pair = AtomicMeasure::new(vec![(0.1, 2.0), (0.9, -2.0)]).unwrap();
        assert!((wk_norm(&pair, 0.5) - 2.0 * 0.8f64.powf(0.5)).abs() < 1e-9);
    }

    #[test]
    fn wk_norm_weighted_delta_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (a, b) = (rng.gen::<f64>(), rng.gen::<f64>());
            let w: f64 = rng.gen_range(-2.0..2.0);
            let zeta = [0.4, 0.7, 1.0][rng.gen_range(0..3)];
            let single = AtomicMeasure::delta(a, w).unwrap();
            assert!((wk_norm(&single, zeta) - w.abs()).abs() < 1e-9);
            if a != b {
                let pair = AtomicMeasure::new(vec![(a, w), (b, -w)]).unwrap();
                let want = w.abs() * rho(a, b, zeta);
                assert!(
                    (wk_norm(&pair, zeta) - want).abs() < 1e-9,
                    "pair ({a},{b}) w={w} zeta={zeta}"
                );
            }
        }
    }

    #[test]
    fn oracle_agrees_on_seeded_random_measures() {
        let mut rng = ChaCha8Rng::seed_from_u64(1729);
        for trial in 0..100 {
            let mu = random_measure(&mut rng, 10);
            let zeta = [1.0, 0.5, 0.7][trial % 3];
            let a = wk_norm(&mu, zeta);
            let b = wk_norm_oracle(&mu, zeta, 64);
            assert!((a - b).abs() <= 1e-4, "trial {trial}: lp {a} vs oracle {b}");
        }
    }

    #[test]
    fn oracle_trivial_cases() {
        assert_eq!(wk_norm_oracle(&AtomicMeasure::zero(), 1.0, 64), 0.0);
        let neg = AtomicMeasure::delta(0.3, -1.0).unwrap();
        assert!((wk_norm_oracle(&neg, 1.0, 64) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pushforward_moves_atoms_and_preserves_mass() {
        let mu = AtomicMeasure::delta(0.8, 1.0).unwrap();
        let nu = pushforward(|y| 0.5 * y, &mu).unwrap();
        assert_eq!(nu.atoms(), &[(0.4, 1.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mu = random_measure(&mut rng, 30);
            let nu = pushforward(|y| 0.3 * y + 0.2, &mu).unwrap();
            assert!((nu.total_mass() - mu.total_mass()).abs() < 1e-12);
        }
        let bad = pushforward(|y| 1.5 * y, &AtomicMeasure::delta(0.9, 1.0).unwrap());
        assert!(matches!(bad, Err(MeasureError::FiberEscape(_))));
    }

    #[test]
    fn pushforward_is_weak_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = |y: f64| 0.5 * y + 0.1 * (3.0 * y).sin().abs();
        for _ in 0..100 {
            let mu = random_measure(&mut rng, 12);
            let nu = pushforward(g, &mu).unwrap();
            assert!(wk_norm(&nu, 1.0) <= wk_norm(&mu, 1.0) + 1e-9);
        }
    }

    #[test]
    fn pushforward_contracts_zero_mean_by_alpha() {
        // Affine contraction rate 0.5, ζ = 1: factor 0.5 on mean-zero inputs.
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..100 {
            let raw = random_measure(&mut rng, 10);
            if raw.is_empty() {
                continue;
            }
            let balance = AtomicMeasure::delta(rng.gen(), -raw.total_mass()).unwrap();
            let mu = raw.add(&balance);
            let nu = pushforward(|y| 0.5 * y + 0.25, &mu).unwrap();
            let (n0, n1) = (wk_norm(&mu, 1.0), wk_norm(&nu, 1.0));
            assert!(n1 <= 0.5 * n0 + 1e-9, "ratio {}", n1 / n0);
        }
    }

    #[test]
    fn coarsen_fixes_bin_centered_measures() {
        let bins = 256;
        let atoms: Vec<(f64, f64)> =
            (0..40).map(|k| ((4 * k) as f64 + 0.5, 0.1)).map(|(c, w)| (c / 256.0, w)).collect();
        let mu = AtomicMeasure::new(atoms).unwrap();
        let c = coarsen(&mu, bins);
        assert_eq!(c.atoms(), mu.atoms());
    }

    #[test]
    fn coarsen_preserves_mass_and_stays_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..40 {
            let mu = random_measure(&mut rng, 60);
            let c = coarsen(&mu, 256);
            assert!((c.total_mass() - mu.total_mass()).abs() < 1e-12);
            assert!(c.len() <= 256);
            for zeta in [1.0, 0.5] {
                let d = wk_norm(&mu.sub(&c), zeta);
                let bound = (1.0 / 512.0f64).powf(zeta) * mu.abs_mass();
                assert!(d <= bound + 1e-12, "distortion {d} above bound {bound}");
            }
        }
    }

    #[test]
    fn wk_norm_is_a_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..60 {
            let a = random_measure(&mut rng, 8);
            let b = random_measure(&mut rng, 8);
            let zeta = [1.0, 0.6][rng.gen_range(0..2)];
            let (na, nb) = (wk_norm(&a, zeta), wk_norm(&b, zeta));
            let nsum = wk_norm(&a.add(&b), zeta);
            assert!(nsum <= na + nb + 1e-8, "triangle: {nsum} vs {na}+{nb}");
            let c: f64 = rng.gen_range(-3.0..3.0);
            let nscaled = wk_norm(&a.scaled(c), zeta);
            assert!((nscaled - c.abs() * na).abs() < 1e-8, "homogeneity");
        }
    }

    #[test]
    fn wk_norm_bounded_by_abs_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..40 {
            let mu = random_measure(&mut rng, 20);
            assert!(wk_norm(&mu, 1.0) <= mu.abs_mass() + 1e-12);
        }
    }

    #[test]
    fn jordan_parts_recombine() {
        let mu = AtomicMeasure::new(vec![(0.1, 1.0), (0.4, -0.5), (0.9, 0.25)]).unwrap();
        let back = mu.positive_part().sub(&mu.negative_part());
        assert_eq!(back.atoms(), mu.atoms());
    }
}
