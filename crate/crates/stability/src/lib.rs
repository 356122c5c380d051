//! Perturbation families and the statistical stability suite: computable
//! slices of the admissibility conditions, equilibrium distance curves
//! against the R(delta)^zeta |log delta| envelope, and uniformity of the
//! contraction constants across a sweep.
//!
//! The stability theorem is existential about its constant, so the
//! falsifiable surrogate here is: distances vanish monotonically along the
//! sweep, and the fitted envelope constant is stable across the smallest
//! two deltas. Super-envelope growth fails the run.

use base_dynamics::{l_adic_shifted, MapError};
use measures::{
    family_distance_linf, holder_seminorm, AtomicMeasure, LeafFamily, MeasureError,
};
use potentials::HolderPotential;
use rayon::prelude::*;
use ruelle::{lasota_yorke_probe, RuelleError};
use skew_transfer::{
    coefficient_fiber, cosine_solenoid, equilibrium, linear_fiber, FiberFn, FiberMap, SkewError,
    SkewSystem, EQ_MAX_ITER, EQ_TOL,
};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("equilibrium did not converge at delta = {delta}")]
    NotConverged { delta: f64 },
    #[error(transparent)]
    Skew(#[from] SkewError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Ruelle(#[from] RuelleError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    FiberShift,
    BaseShift,
    Coefficient,
    /// Null perturbation: the same system at every delta. Calibration case;
    /// every distance must come out exactly zero.
    Constant,
}

impl FamilyKind {
    pub fn label(&self) -> &'static str {
        match self {
            FamilyKind::FiberShift => "fiber-shift",
            FamilyKind::BaseShift => "base-shift",
            FamilyKind::Coefficient => "coefficient",
            FamilyKind::Constant => "constant",
        }
    }
}

pub type Generator = Arc<dyn Fn(f64) -> Result<SkewSystem, SkewError> + Send + Sync>;
pub type Modulus = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default sweep, large to small.
pub const DELTA_SWEEP: [f64; 7] = [0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001];

/// A one-parameter family of skew systems with a perturbation modulus R.
/// The generator at 0 is the reference system; construction verifies it is
/// reproducible bit-for-bit, since every downstream comparison assumes the
/// reference can be rebuilt on demand.
pub struct PerturbationFamily {
    pub kind: FamilyKind,
    generator: Generator,
    modulus: Modulus,
    pub deltas: Vec<f64>,
}

fn validate_sweep(modulus: &Modulus, deltas: &[f64]) -> Result<(), StabilityError> {
    if deltas.is_empty() {
        return Err(StabilityError::InvalidInput("empty delta sweep".into()));
    }
    if deltas.iter().any(|d| !d.is_finite() || *d <= 0.0 || *d >= 1.0) {
        return Err(StabilityError::InvalidInput("sweep deltas must lie in (0, 1)".into()));
    }
    let r0 = modulus(0.0);
    if r0 != 0.0 {
        return Err(StabilityError::InvalidInput(format!("R(0) = {r0}, must be 0")));
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite deltas"));
    for pair in sorted.windows(2) {
        let (ra, rb) = (modulus(pair[0]), modulus(pair[1]));
        if !(ra.is_finite() && rb.is_finite()) || ra < 0.0 || rb < 0.0 || ra > rb {
            return Err(StabilityError::InvalidInput(format!(
                "modulus must be nonnegative and non-decreasing: R({}) = {ra}, R({}) = {rb}",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

impl PerturbationFamily {
    pub fn new(
        kind: FamilyKind,
        generator: Generator,
        modulus: Modulus,
        deltas: Vec<f64>,
    ) -> Result<Self, StabilityError> {
        validate_sweep(&modulus, &deltas)?;
        let a = generator(0.0)?;
        let b = generator(0.0)?;
        if a.spectral.lambda.to_bits() != b.spectral.lambda.to_bits()
            || a.spectral.h.values != b.spectral.h.values
            || a.spectral.m_weights != b.spectral.m_weights
        {
            return Err(StabilityError::InvalidInput(
                "generator(0) is not reproducible; perturbation comparisons would drift".into(),
            ));
        }
        Ok(PerturbationFamily { kind, generator, modulus, deltas })
    }

    /// Same family on a different sweep, revalidated against the modulus.
    pub fn with_deltas(mut self, deltas: Vec<f64>) -> Result<Self, StabilityError> {
        validate_sweep(&self.modulus, &deltas)?;
        self.deltas = deltas;
        Ok(self)
    }

    pub fn system(&self, delta: f64) -> Result<SkewSystem, StabilityError> {
        if !delta.is_finite() || !(0.0..1.0).contains(&delta) {
            return Err(StabilityError::InvalidInput(format!("delta {delta} outside [0, 1)")));
        }
        Ok((self.generator)(delta)?)
    }

    pub fn r(&self, delta: f64) -> f64 {
        (self.modulus)(delta)
    }
}

/// Fiber translation on the forced solenoid: G_delta = clamp(G + delta) with
/// unit shift profile, R(delta) = delta. The unperturbed map sends [0, 1]
/// into [0, 0.8] and the sweep tops out at 0.1, so the clamp never acts.
pub fn fiber_shift_family(n: usize, bins: usize) -> Result<PerturbationFamily, StabilityError> {
    let gen: Generator = Arc::new(move |delta| {
        let (base, fiber0) = cosine_solenoid(2, 0.5, 0.15)?;
        let branches: Vec<FiberFn> = (0..fiber0.degree())
            .map(|b| {
                let f = fiber0.clone();
                Arc::new(move |x: f64, y: f64| (f.eval(b, x, y) + delta).clamp(0.0, 1.0))
                    as FiberFn
            })
            .collect();
        let fiber = FiberMap::per_branch(branches, fiber0.alpha, fiber0.g_holder)?;
        let phi = HolderPotential::constant(-(2.0f64.ln()), 1.0, 0.0);
        SkewSystem::new(base, fiber, phi, 1.0, n, bins)
    });
    PerturbationFamily::new(FamilyKind::FiberShift, gen, Arc::new(|d| d), DELTA_SWEEP.to_vec())
}

/// Base rotation f_delta = l x + delta mod 1 with the fiber and the constant
/// geometric potential held fixed, R(delta) = delta. Preimages move by
/// exactly delta / l.
pub fn base_shift_family(
    l: usize,
    n: usize,
    bins: usize,
) -> Result<PerturbationFamily, StabilityError> {
    let gen: Generator = Arc::new(move |delta| {
        let base = l_adic_shifted(l, delta);
        let fiber = linear_fiber(l, 0.5, 0.2)?;
        let phi = HolderPotential::constant(-(l as f64).ln(), 1.0, 0.0);
        SkewSystem::new(base, fiber, phi, 1.0, n, bins)
    });
    PerturbationFamily::new(FamilyKind::BaseShift, gen, Arc::new(|d| d), DELTA_SWEEP.to_vec())
}

/// Piecewise-constant contraction coefficients alpha_i + delta c_i over the
/// doubling base, c = (1, -1/2). The fiber maps are x-discontinuous with
/// zero fiber variation for every delta, and |G_delta - G_0| <= delta on the
/// unit fiber, so R(delta) = delta.
pub fn coefficient_family(n: usize, bins: usize) -> Result<PerturbationFamily, StabilityError> {
    let gen: Generator = Arc::new(move |delta| {
        let fiber = coefficient_fiber(&[0.3 + delta, 0.5 - 0.5 * delta])?;
        let phi = HolderPotential::constant(-(2.0f64.ln()), 1.0, 0.0);
        SkewSystem::new(base_dynamics::doubling(), fiber, phi, 1.0, n, bins)
    });
    PerturbationFamily::new(FamilyKind::Coefficient, gen, Arc::new(|d| d), DELTA_SWEEP.to_vec())
}

fn base_dist(a: f64, b: f64, circle: bool) -> f64 {
    let d = (a - b).abs();
    if circle {
        d.min(1.0 - d)
    } else {
        d
    }
}

fn nearest(points: &[f64], y: f64, circle: bool) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, &p) in points.iter().enumerate() {
        let d = base_dist(p, y, circle);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// One-step conformal weight g(gamma) = h(gamma) e^phi(gamma) / (lambda h(x))
/// at a preimage gamma of x.
fn g_weight(sys: &SkewSystem, gamma: f64, x: f64) -> f64 {
    sys.spectral.h.eval(gamma) * sys.potential.value(gamma).exp()
        / (sys.spectral.lambda * sys.spectral.h.eval(x))
}

/// First-order propagation of the eigen-solve residual into the conformal
/// weights. An accounting device for separating the condition value from
/// solver noise, not a rigorous enclosure.
fn residual_slack(sys: &SkewSystem) -> f64 {
    let hmin = sys.spectral.h.values.iter().cloned().fold(f64::INFINITY, f64::min);
    sys.spectral.residual_h / (sys.spectral.lambda * hmin)
}

const FIBER_GRID: usize = 64;
const DISPLACEMENT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct AdmissibilityReport {
    pub delta: f64,
    pub r_delta: f64,
    /// (U1) branch count preserved.
    pub degree_ok: bool,
    /// (U2.2) max over grid points and preimages of the displacement to the
    /// nearest unperturbed preimage.
    pub preimage_displacement: f64,
    pub preimage_ok: bool,
    /// (U2.3) sup over the sample grid of the fiber-map displacement.
    pub fiber_displacement: f64,
    pub fiber_ok: bool,
    /// (U2.1) max over grid points of the summed conformal-weight gap.
    pub jacobian_sum_diff: f64,
    pub spectral_slack: f64,
    pub jacobian_ok: bool,
    /// (U3) max cellwise ratio of perturbed to unperturbed invariant weights.
    pub density_ratio: f64,
    pub pass: bool,
}

/// Evaluates the computable admissibility slices at one delta. U-conditions
/// are graded against R(delta) plus explicitly recorded slack; U3 has no
/// finite target in the hypotheses and is reported as a ratio only.
pub fn check_admissibility(
    fam: &PerturbationFamily,
    delta: f64,
) -> Result<AdmissibilityReport, StabilityError> {
    let sys0 = fam.system(0.0)?;
    let sysd = fam.system(delta)?;
    let r_delta = fam.r(delta);
    let degree_ok = sys0.base.degree() == sysd.base.degree();

    let mut preimage_displacement = 0.0f64;
    let mut jacobian_sum_diff = 0.0f64;
    if degree_ok {
        for x in ruelle::centers(sys0.n) {
            let p0 = sys0.base.inverse_branches(x)?;
            let pd = sysd.base.inverse_branches(x)?;
            let mut sum = 0.0;
            for &gamma_d in &pd {
                // nearest-preimage pairing; a matching as long as the
                // displacement stays under half the branch spacing
                let (j, dist) = nearest(&p0, gamma_d, sys0.base.circle);
                preimage_displacement = preimage_displacement.max(dist);
                sum += (g_weight(&sysd, gamma_d, x) - g_weight(&sys0, p0[j], x)).abs();
            }
            jacobian_sum_diff = jacobian_sum_diff.max(sum);
        }
    }

    let mut fiber_displacement = 0.0f64;
    for i in 0..FIBER_GRID {
        let x = (i as f64 + 0.5) / FIBER_GRID as f64;
        let b0 = sys0.base.branch_of(x);
        let bd = sysd.base.branch_of(x);
        for j in 0..=FIBER_GRID {
            let y = j as f64 / FIBER_GRID as f64;
            let gap = (sys0.fiber.eval(b0, x, y) - sysd.fiber.eval(bd, x, y)).abs();
            fiber_displacement = fiber_displacement.max(gap);
        }
    }

    let mut density_ratio = 0.0f64;
    for (m0, md) in sys0.spectral.m_weights.iter().zip(&sysd.spectral.m_weights) {
        if *m0 > 0.0 {
            density_ratio = density_ratio.max(md / m0);
        } else if *md > 1e-15 {
            density_ratio = f64::INFINITY;
        }
    }

    let spectral_slack =
        sys0.base.degree() as f64 * (residual_slack(&sys0) + residual_slack(&sysd)) + 1e-12;
    let preimage_ok = preimage_displacement <= r_delta + DISPLACEMENT_SLACK;
    let fiber_ok = fiber_displacement <= r_delta + DISPLACEMENT_SLACK;
    let jacobian_ok = jacobian_sum_diff <= r_delta + spectral_slack;
    Ok(AdmissibilityReport {
        delta,
        r_delta,
        degree_ok,
        preimage_displacement,
        preimage_ok,
        fiber_displacement,
        fiber_ok,
        jacobian_sum_diff,
        spectral_slack,
        jacobian_ok,
        density_ratio,
        pass: degree_ok && preimage_ok && fiber_ok && jacobian_ok,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct CurveConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Fractional headroom on the monotone-decrease check.
    pub jitter: f64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig { tol: EQ_TOL, max_iter: EQ_MAX_ITER, jitter: 0.1 }
    }
}

/// Envelope-constant candidates at the two smallest deltas must stay within
/// this ratio band for the curve to count as stable.
pub const RATIO_BAND: (f64, f64) = (0.2, 5.0);

#[derive(Debug, Clone)]
pub struct CurveRow {
    pub delta: f64,
    pub distance: f64,
    pub r_delta: f64,
    /// C_hat * R(delta)^zeta * |log delta|; dominates distance by fit.
    pub envelope: f64,
    /// Per-point candidate distance / (R^zeta |log delta|).
    pub c_hat: f64,
}

#[derive(Debug, Clone)]
pub struct StabilityCurve {
    /// Sorted by descending delta.
    pub rows: Vec<CurveRow>,
    pub c_hat: f64,
    pub monotone_ok: bool,
    pub ratio_ok: bool,
    pub pass: bool,
    pub zeta: f64,
}

fn converge(
    sys: &SkewSystem,
    cfg: &CurveConfig,
    delta: f64,
) -> Result<LeafFamily, StabilityError> {
    let m2 = AtomicMeasure::delta(0.5, 1.0)?;
    let res = equilibrium(sys, &m2, cfg.tol, cfg.max_iter)?;
    if !res.converged {
        return Err(StabilityError::NotConverged { delta });
    }
    Ok(res.family)
}

fn require_contracts(sys: &SkewSystem, delta: f64) -> Result<(), StabilityError> {
    if !sys.contracts() {
        return Err(StabilityError::Hypothesis(format!(
            "(alpha L)^zeta = {} >= 1 at delta = {delta}",
            sys.beta
        )));
    }
    Ok(())
}

/// Equilibrium distance sweep with the fitted envelope. Passes when the
/// distances shrink monotonically (up to the jitter allowance) and the
/// envelope-constant candidates at the two smallest deltas agree within
/// [RATIO_BAND].
pub fn stability_curve(
    fam: &PerturbationFamily,
    cfg: &CurveConfig,
) -> Result<StabilityCurve, StabilityError> {
    let mut deltas = fam.deltas.clone();
    deltas.sort_by(|a, b| b.partial_cmp(a).expect("finite deltas"));
    deltas.dedup();
    if deltas.len() < 2 {
        return Err(StabilityError::InvalidInput(
            "envelope stability needs at least two sweep points".into(),
        ));
    }
    let sys0 = fam.system(0.0)?;
    require_contracts(&sys0, 0.0)?;
    let zeta = sys0.zeta;
    let eq0 = converge(&sys0, cfg, 0.0)?;

    let mut rows = deltas
        .par_iter()
        .map(|&delta| {
            let sysd = fam.system(delta)?;
            require_contracts(&sysd, delta)?;
            let eqd = converge(&sysd, cfg, delta)?;
            let distance = family_distance_linf(&eqd, &eq0, zeta)?;
            let weight = fam.r(delta).powf(zeta) * delta.ln().abs();
            let c_hat = if weight > 0.0 {
                distance / weight
            } else if distance <= 1e-14 {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(CurveRow { delta, distance, r_delta: fam.r(delta), envelope: 0.0, c_hat })
        })
        .collect::<Result<Vec<CurveRow>, StabilityError>>()?;

    let c_hat = rows.iter().map(|r| r.c_hat).fold(0.0, f64::max);
    for r in &mut rows {
        r.envelope = c_hat * r.r_delta.powf(zeta) * r.delta.ln().abs();
    }

    let monotone_ok = rows
        .windows(2)
        .all(|w| w[1].distance <= w[0].distance * (1.0 + cfg.jitter) + 1e-12);
    let last = rows.len() - 1;
    let (ca, cb) = (rows[last - 1].c_hat, rows[last].c_hat);
    let ratio_ok = if ca <= 1e-14 && cb <= 1e-14 {
        true
    } else if ca > 0.0 && cb.is_finite() {
        let ratio = cb / ca;
        ratio >= RATIO_BAND.0 && ratio <= RATIO_BAND.1
    } else {
        false
    };
    let pass = monotone_ok && ratio_ok && c_hat.is_finite();
    Ok(StabilityCurve { rows, c_hat, monotone_ok, ratio_ok, pass, zeta })
}

#[derive(Debug, Clone)]
pub struct UniformRow {
    pub delta: f64,
    /// (alpha L)^zeta of the generated system.
    pub beta: f64,
    /// Leafwise inequality constant (eps_phi + |G|) L^zeta.
    pub d_const: f64,
    /// Fitted one-step constants of the base operator.
    pub ly_beta: f64,
    pub ly_c: f64,
    pub ly_holds: bool,
    /// Measured Holder seminorm of the equilibrium.
    pub seminorm: f64,
}

#[derive(Debug, Clone)]
pub struct UniformReport {
    /// Ascending delta, reference system first.
    pub rows: Vec<UniformRow>,
    pub beta_max: f64,
    pub beta_uniform_ok: bool,
    pub d_max: f64,
    /// Uniform regularity bound D_u / (1 - beta_u).
    pub b_u: f64,
    pub seminorm_max: f64,
    /// Discretization allowance added to the bound, max over the sweep.
    pub slack: f64,
    pub holder_ok: bool,
    pub pass: bool,
}

const LY_TRIALS: usize = 12;
const LY_STEPS: usize = 12;
const LY_SEED: u64 = 0x57ab1e;

/// Tabulates the contraction data over the sweep (reference included) and
/// checks the two uniformity assertions: sup beta_delta < 1, and every
/// measured equilibrium seminorm under the uniform bound B_u plus the
/// coarsening slack.
pub fn uniform_constants_probe(
    fam: &PerturbationFamily,
    cfg: &CurveConfig,
) -> Result<UniformReport, StabilityError> {
    let mut deltas = vec![0.0];
    deltas.extend_from_slice(&fam.deltas);
    deltas.sort_by(|a, b| a.partial_cmp(b).expect("finite deltas"));
    deltas.dedup();

    let data = deltas
        .par_iter()
        .map(|&delta| {
            let sys = fam.system(delta)?;
            require_contracts(&sys, delta)?;
            let eq = converge(&sys, cfg, delta)?;
            let seminorm = holder_seminorm(&eq, sys.zeta);
            let probe =
                lasota_yorke_probe(&sys.spectral, &sys.matrix, sys.zeta, LY_TRIALS, LY_STEPS, LY_SEED)?;
            let slack = 2.0 * (2.0 * sys.bins as f64).powf(-sys.zeta) * (sys.n as f64).powf(sys.zeta);
            Ok((
                UniformRow {
                    delta,
                    beta: sys.beta,
                    d_const: sys.d_const,
                    ly_beta: probe.beta,
                    ly_c: probe.c,
                    ly_holds: probe.ly_holds,
                    seminorm,
                },
                slack,
            ))
        })
        .collect::<Result<Vec<(UniformRow, f64)>, StabilityError>>()?;

    let slack = data.iter().map(|(_, s)| *s).fold(0.0, f64::max);
    let rows: Vec<UniformRow> = data.into_iter().map(|(r, _)| r).collect();
    let beta_max = rows.iter().map(|r| r.beta).fold(0.0, f64::max);
    let d_max = rows.iter().map(|r| r.d_const).fold(0.0, f64::max);
    let seminorm_max = rows.iter().map(|r| r.seminorm).fold(0.0, f64::max);
    let beta_uniform_ok = beta_max < 1.0;
    let b_u = if beta_uniform_ok { d_max / (1.0 - beta_max) } else { f64::INFINITY };
    let holder_ok = rows.iter().all(|r| r.seminorm <= b_u + slack);
    Ok(UniformReport {
        rows,
        beta_max,
        beta_uniform_ok,
        d_max,
        b_u,
        seminorm_max,
        slack,
        holder_ok,
        pass: beta_uniform_ok && holder_ok,
    })
}

/// Plot-ready curve table. Columns are frozen; see docs/formats.md.
pub fn write_curve_csv(curve: &StabilityCurve, path: &Path) -> Result<(), StabilityError> {
    let mut out = String::from("delta,distance,R,envelope,C_hat\n");
    for r in &curve.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.delta, r.distance, r.r_delta, r.envelope, r.c_hat
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tight() -> CurveConfig {
        CurveConfig { tol: 1e-7, max_iter: 300, jitter: 0.1 }
    }

    #[test]
    fn construction_rejects_bad_sweeps_and_moduli() {
        let gen: Generator = Arc::new(|_| {
            let fiber = linear_fiber(2, 0.5, 0.2)?;
            let phi = HolderPotential::constant(0.0, 1.0, 0.0);
            SkewSystem::new(base_dynamics::doubling(), fiber, phi, 1.0, 32, 16)
        });
        let id: Modulus = Arc::new(|d| d);
        assert!(PerturbationFamily::new(FamilyKind::BaseShift, gen.clone(), id.clone(), vec![]).is_err());
        assert!(
            PerturbationFamily::new(FamilyKind::BaseShift, gen.clone(), id.clone(), vec![1.0]).is_err()
        );
        let offset: Modulus = Arc::new(|d| d + 1.0);
        assert!(
            PerturbationFamily::new(FamilyKind::BaseShift, gen.clone(), offset, vec![0.1]).is_err()
        );
        let decreasing: Modulus = Arc::new(|d| if d == 0.0 { 0.0 } else { 1.0 - d });
        assert!(PerturbationFamily::new(
            FamilyKind::BaseShift,
            gen,
            decreasing,
            vec![0.1, 0.01]
        )
        .is_err());
    }

    #[test]
    fn shipped_generators_are_reproducible() {
        let fam = fiber_shift_family(64, 64).unwrap();
        let a = fam.system(0.0).unwrap();
        let b = fam.system(0.0).unwrap();
        assert_eq!(a.spectral.lambda.to_bits(), b.spectral.lambda.to_bits());
        assert_eq!(a.spectral.h.values, b.spectral.h.values);
        assert_eq!(a.spectral.m_weights, b.spectral.m_weights);
        assert_eq!(fam.r(0.0), 0.0);
        assert!(fam.r(0.001) <= fam.r(0.1));
    }

    #[test]
    fn zero_delta_admissibility_is_exact() {
        let fam = fiber_shift_family(64, 64).unwrap();
        let rep = check_admissibility(&fam, 0.0).unwrap();
        assert!(rep.degree_ok);
        assert_eq!(rep.preimage_displacement, 0.0);
        assert_eq!(rep.fiber_displacement, 0.0);
        assert!(rep.jacobian_sum_diff <= rep.spectral_slack);
        assert!((rep.density_ratio - 1.0).abs() <= 1e-9);
        assert!(rep.pass);
    }

    #[test]
    fn base_shift_preimages_move_by_half_delta() {
        let fam = base_shift_family(2, 64, 32).unwrap();
        let rep = check_admissibility(&fam, 0.04).unwrap();
        assert!(rep.degree_ok);
        assert!(
            (rep.preimage_displacement - 0.02).abs() <= 1e-12,
            "displacement {}",
            rep.preimage_displacement
        );
        // constant potential, flat eigenfunction: the conformal weights are
        // 1/2 on both sides, so the U2.1 gap is solver noise only
        assert!(rep.jacobian_sum_diff <= 1e-10, "gap {}", rep.jacobian_sum_diff);
        assert_eq!(rep.fiber_displacement, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn fiber_shift_displacement_is_the_shift() {
        let fam = fiber_shift_family(64, 64).unwrap();
        let rep = check_admissibility(&fam, 0.1).unwrap();
        assert_eq!(rep.preimage_displacement, 0.0);
        assert!((rep.fiber_displacement - 0.1).abs() <= 1e-12);
        assert!(rep.pass);
    }

    #[test]
    fn coefficient_family_has_zero_fiber_variation() {
        let fam = coefficient_family(64, 64).unwrap();
        for delta in [0.0, 0.01, 0.1] {
            let sys = fam.system(delta).unwrap();
            assert_eq!(sys.fiber.g_holder, 0.0);
        }
        let rep = check_admissibility(&fam, 0.1).unwrap();
        assert!(rep.fiber_displacement <= 0.1 + 1e-9);
        assert!(rep.pass);
    }

    #[test]
    fn constant_family_gives_a_flat_curve() {
        let gen: Generator = Arc::new(|_| {
            let (base, fiber) = cosine_solenoid(2, 0.5, 0.15)?;
            let phi = HolderPotential::constant(-(2.0f64.ln()), 1.0, 0.0);
            SkewSystem::new(base, fiber, phi, 1.0, 32, 64)
        });
        let fam = PerturbationFamily::new(
            FamilyKind::FiberShift,
            gen,
            Arc::new(|d| d),
            vec![0.1, 0.01],
        )
        .unwrap();
        let curve = stability_curve(&fam, &tight()).unwrap();
        for row in &curve.rows {
            assert_eq!(row.distance, 0.0);
            assert_eq!(row.envelope, 0.0);
        }
        assert_eq!(curve.c_hat, 0.0);
        assert!(curve.pass);
    }

    #[test]
    fn fiber_shift_curve_obeys_the_coupling_bound() {
        let fam = fiber_shift_family(64, 128).unwrap();
        let curve = stability_curve(&fam, &tight()).unwrap();
        assert!(curve.pass, "monotone {} ratio {}", curve.monotone_ok, curve.ratio_ok);
        for row in &curve.rows {
            // both equilibria push the same base randomness through fibers
            // offset by at most delta/(1-alpha); coarsening adds two bins
            let bound = row.delta / (1.0 - 0.5) + 2.0 / 128.0;
            assert!(
                row.distance <= bound + 1e-9,
                "d({}) = {} above coupling bound {}",
                row.delta,
                row.distance,
                bound
            );
            assert!(row.distance <= row.envelope + 1e-12);
        }
        let d_first = curve.rows.first().unwrap().distance;
        let d_last = curve.rows.last().unwrap().distance;
        assert!(d_last < d_first, "distances did not shrink: {d_first} -> {d_last}");
    }

    #[test]
    fn family_distance_is_symmetric_and_triangular() {
        let fam = fiber_shift_family(48, 64).unwrap();
        let cfg = tight();
        let eq0 = converge(&fam.system(0.0).unwrap(), &cfg, 0.0).unwrap();
        let eq1 = converge(&fam.system(0.02).unwrap(), &cfg, 0.02).unwrap();
        let eq2 = converge(&fam.system(0.1).unwrap(), &cfg, 0.1).unwrap();
        let d01 = family_distance_linf(&eq0, &eq1, 1.0).unwrap();
        let d10 = family_distance_linf(&eq1, &eq0, 1.0).unwrap();
        let d12 = family_distance_linf(&eq1, &eq2, 1.0).unwrap();
        let d02 = family_distance_linf(&eq0, &eq2, 1.0).unwrap();
        assert!((d01 - d10).abs() <= 1e-12);
        assert!(d02 <= d01 + d12 + 1e-12, "triangle broke: {d02} > {d01} + {d12}");
    }

    #[test]
    fn uniform_constants_are_flat_for_fiber_shifts() {
        let gen: Generator = Arc::new(move |delta| {
            let (base, fiber0) = cosine_solenoid(2, 0.5, 0.15)?;
            let branches: Vec<FiberFn> = (0..fiber0.degree())
                .map(|b| {
                    let f = fiber0.clone();
                    Arc::new(move |x: f64, y: f64| (f.eval(b, x, y) + delta).clamp(0.0, 1.0))
                        as FiberFn
                })
                .collect();
            let fiber = FiberMap::per_branch(branches, fiber0.alpha, fiber0.g_holder)?;
            let phi = HolderPotential::constant(-(2.0f64.ln()), 1.0, 0.0);
            SkewSystem::new(base, fiber, phi, 1.0, 48, 64)
        });
        let fam = PerturbationFamily::new(
            FamilyKind::FiberShift,
            gen,
            Arc::new(|d| d),
            vec![0.1, 0.01],
        )
        .unwrap();
        let report = uniform_constants_probe(&fam, &tight()).unwrap();
        assert_eq!(report.rows.len(), 3);
        for row in &report.rows {
            assert_eq!(row.beta.to_bits(), report.rows[0].beta.to_bits());
            assert_eq!(row.d_const.to_bits(), report.rows[0].d_const.to_bits());
            assert!(row.ly_holds, "LY probe failed at delta {}", row.delta);
        }
        assert!(report.beta_uniform_ok);
        assert!(report.holder_ok, "seminorm {} vs B_u {} + slack {}", report.seminorm_max, report.b_u, report.slack);
        assert!(report.pass);
    }

    #[test]
    fn curve_propagates_generator_failures() {
        // alpha + 2 delta leaves [0, 1) on the larger sweep points
        let gen: Generator = Arc::new(|delta| {
            let fiber = coefficient_fiber(&[0.85 + 2.0 * delta, 0.5])?;
            let phi = HolderPotential::constant(0.0, 1.0, 0.0);
            SkewSystem::new(base_dynamics::doubling(), fiber, phi, 1.0, 32, 16)
        });
        let fam = PerturbationFamily::new(
            FamilyKind::Coefficient,
            gen,
            Arc::new(|d| d),
            vec![0.1, 0.01],
        )
        .unwrap();
        assert!(matches!(stability_curve(&fam, &tight()), Err(StabilityError::Skew(_))));
    }

    #[test]
    fn curve_reports_the_offending_delta_on_non_convergence() {
        let fam = fiber_shift_family(32, 32).unwrap();
        let cfg = CurveConfig { tol: 1e-12, max_iter: 1, jitter: 0.1 };
        match stability_curve(&fam, &cfg) {
            Err(StabilityError::NotConverged { delta }) => assert!(delta >= 0.0),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn curve_csv_round_trips_through_the_frozen_header() {
        let fam = fiber_shift_family(32, 32).unwrap();
        let curve = stability_curve(&fam, &tight()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        write_curve_csv(&curve, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("delta,distance,R,envelope,C_hat"));
        assert_eq!(lines.count(), curve.rows.len());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn base_shift_displacement_is_delta_over_l(
            l in 2usize..=4,
            delta in 1e-3f64..0.2,
        ) {
            let fam = base_shift_family(l, 32, 16).unwrap();
            let rep = check_admissibility(&fam, delta).unwrap();
            prop_assert!(rep.degree_ok);
            prop_assert!(
                (rep.preimage_displacement - delta / l as f64).abs() <= 1e-9,
                "l = {l}, delta = {delta}: displacement {}", rep.preimage_displacement
            );
        }
    }
}
