//! Leafwise transfer operator for skew products over piecewise expanding
//! bases: one fiber measure per base grid cell, moved by the fiber maps and
//! reweighted by the normalized base transfer operator. Equilibrium states
//! are computed as fixed points of this action and checked against the
//! contraction and regularity bounds that make the fixed point unique.

use std::sync::Arc;

use base_dynamics::{IntervalMap, MapError};
use measures::{
    coarsen, family_distance_linf, holder_seminorm, pushforward, AtomicMeasure, LeafFamily,
    MeasureError,
};
use potentials::{gap_condition_value, HolderPotential, PotentialError};
use ruelle::{
    build_operator_matrix, centers, interp_weights, leading_eigendata, normalized_apply,
    GridFunction, OperatorMatrix, RuelleError, SpectralData,
};
use thiserror::Error;

pub type FiberFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Error)]
pub enum SkewError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Spectral(#[from] RuelleError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),
}

/// Fiber dynamics G(x, y), one evaluator per base branch so the map may jump
/// across branch boundaries. `alpha` bounds the fiber contraction and
/// `g_holder` the per-branch base regularity; both are promises checked by
/// sampling, not inferred.
#[derive(Clone)]
pub struct FiberMap {
    branches: Vec<FiberFn>,
    pub alpha: f64,
    pub g_holder: f64,
}

impl FiberMap {
    pub fn per_branch(branches: Vec<FiberFn>, alpha: f64, g_holder: f64) -> Result<Self, SkewError> {
        if branches.is_empty() {
            return Err(SkewError::InvalidInput("no fiber branches".into()));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(SkewError::InvalidInput(format!(
                "fiber contraction rate must lie in [0,1), got {alpha}"
            )));
        }
        if !g_holder.is_finite() || g_holder < 0.0 {
            return Err(SkewError::InvalidInput(format!(
                "base regularity constant must be finite and nonnegative, got {g_holder}"
            )));
        }
        Ok(FiberMap { branches, alpha, g_holder })
    }

    /// Same evaluator over every branch (continuous-in-x fiber maps).
    pub fn uniform(g: FiberFn, deg: usize, alpha: f64, g_holder: f64) -> Result<Self, SkewError> {
        Self::per_branch(vec![g; deg], alpha, g_holder)
    }

    pub fn degree(&self) -> usize {
        self.branches.len()
    }

    pub fn eval(&self, branch: usize, x: f64, y: f64) -> f64 {
        self.branches[branch](x, y)
    }
}

/// Sampled verification of the two fiber hypotheses: contraction along
/// fibers at rate alpha, and base Hölder regularity within each branch.
#[derive(Debug, Clone)]
pub struct FiberReport {
    pub contraction_ratio: f64,
    pub base_ratio: f64,
    pub contraction_ok: bool,
    pub base_ok: bool,
}

pub fn check_fiber_hypotheses(
    map: &IntervalMap,
    fiber: &FiberMap,
    zeta: f64,
    grid: usize,
) -> Result<FiberReport, SkewError> {
    if fiber.degree() != map.degree() {
        return Err(SkewError::InvalidInput(format!(
            "fiber has {} branches, base has {}",
            fiber.degree(),
            map.degree()
        )));
    }
    let grid = grid.max(16);
    let mut contraction = 0.0f64;
    let mut base = 0.0f64;
    for (b, branch) in map.branches.iter().enumerate() {
        let (lo, hi) = branch.domain;
        let xs: Vec<f64> = (0..grid)
            .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / grid as f64)
            .collect();
        let ys: Vec<f64> = (0..=16).map(|i| i as f64 / 16.0).collect();
        for &x in &xs {
            for (i, &y1) in ys.iter().enumerate() {
                for &y2 in &ys[i + 1..] {
                    let num = (fiber.eval(b, x, y1) - fiber.eval(b, x, y2)).abs();
                    contraction = contraction.max(num / (y1 - y2).abs());
                }
            }
        }
        for &y in &ys {
            for (i, &x1) in xs.iter().enumerate() {
                for &x2 in &xs[i + 1..] {
                    let num = (fiber.eval(b, x1, y) - fiber.eval(b, x2, y)).abs();
                    base = base.max(num / (x1 - x2).abs().powf(zeta));
                }
            }
        }
    }
    Ok(FiberReport {
        contraction_ratio: contraction,
        base_ratio: base,
        contraction_ok: contraction <= fiber.alpha + 1e-9,
        base_ok: base <= fiber.g_holder + 1e-9,
    })
}

/// A base map, fiber dynamics, and potential tied to one collocation grid,
/// with the spectral data solved once and the contraction constants of the
/// two-term inequality recorded.
pub struct SkewSystem {
    pub base: IntervalMap,
    pub fiber: FiberMap,
    pub potential: HolderPotential,
    pub zeta: f64,
    pub n: usize,
    /// Fiber bin count for coarsening after each operator application.
    pub bins: usize,
    pub matrix: OperatorMatrix,
    pub spectral: SpectralData,
    /// (alpha L)^zeta; below 1 the leafwise operator contracts seminorms.
    pub beta: f64,
    /// (epsilon_phi + |G|_zeta) L^zeta, the inhomogeneous term.
    pub d_const: f64,
    /// Base spectral-gap condition value; None when the map's expansion
    /// constants fall outside the formula's domain.
    pub gap_value: Option<f64>,
}

pub const DEFAULT_BINS: usize = 256;
pub const EIG_TOL: f64 = 1e-12;

impl SkewSystem {
    pub fn new(
        base: IntervalMap,
        fiber: FiberMap,
        potential: HolderPotential,
        zeta: f64,
        n: usize,
        bins: usize,
    ) -> Result<Self, SkewError> {
        if fiber.degree() != base.degree() {
            return Err(SkewError::InvalidInput(format!(
                "fiber has {} branches, base has {}",
                fiber.degree(),
                base.degree()
            )));
        }
        if bins < 2 {
            return Err(SkewError::InvalidInput(format!("need at least 2 fiber bins, got {bins}")));
        }
        let matrix = build_operator_matrix(&base, &potential, n)?;
        let spectral = leading_eigendata(&matrix, EIG_TOL)?;
        let beta = (fiber.alpha * base.l_max).powf(zeta);
        let d_const = (potential.epsilon_phi + fiber.g_holder) * base.l_max.powf(zeta);
        let structure = base.check_structure(512);
        let gap_value = gap_condition_value(
            base.degree(),
            structure.q,
            base.sigma,
            base.l_max,
            zeta,
            potential.epsilon_phi,
        )
        .ok();
        Ok(SkewSystem { base, fiber, potential, zeta, n, bins, matrix, spectral, beta, d_const, gap_value })
    }

    /// Hypothesis of the regularity and convergence theorems.
    pub fn contracts(&self) -> bool {
        self.beta < 1.0
    }
}

/// One application of the leafwise operator. The output leaf at a grid cell
/// is the branch sum of pushforwards of the input leaves read at the cell's
/// preimages, weighted by h·e^φ there and normalized by λh at the cell.
///
/// A preimage rarely lands on a grid center, so the leaf there is realized
/// by linear interpolation. The interpolation is applied to the h-weighted
/// leaves (not to leaf and weight separately): this makes the output leaf
/// masses match the normalized operator acting on the marginal density
/// exactly, rather than up to a second-order interpolation defect.
pub fn apply_transfer(sys: &SkewSystem, fam: &LeafFamily) -> Result<LeafFamily, SkewError> {
    if fam.len() != sys.n {
        return Err(SkewError::InvalidInput(format!(
            "family has {} leaves, grid expects {}",
            fam.len(),
            sys.n
        )));
    }
    let h = &sys.spectral.h.values;
    let lambda = sys.spectral.lambda;
    let positive_input = fam.marginal_density().iter().all(|&d| d > 0.0);
    let mut out_leaves = Vec::with_capacity(sys.n);
    for (j, x) in centers(sys.n).enumerate() {
        let mut acc = AtomicMeasure::zero();
        for (b, &y) in sys.base.inverse_branches(x)?.iter().enumerate() {
            let phi_weight = sys.potential.value(y).exp();
            for (k, theta) in interp_weights(sys.n, sys.base.circle, y) {
                if theta == 0.0 {
                    continue;
                }
                let fiber = &sys.fiber;
                let pushed = pushforward(|z| fiber.eval(b, y, z), fam.leaf(k))?;
                acc = acc.add(&pushed.scaled(theta * h[k] * phi_weight));
            }
        }
        if positive_input {
            // Positive families cannot reach the degenerate zero-mass branch
            // of the disintegrated operator; hitting it means a bug upstream.
            assert!(acc.total_mass() > 0.0, "leaf {j} lost all mass under a positive family");
        }
        out_leaves.push(coarsen(&acc.scaled(1.0 / (lambda * h[j])), sys.bins));
    }
    let marg_in = GridFunction::new(fam.marginal_density().to_vec(), sys.base.circle)?;
    let marg_out = normalized_apply(&sys.spectral, &sys.matrix, &marg_in);
    Ok(LeafFamily::with_density(
        out_leaves,
        fam.base_weights().to_vec(),
        marg_out.values,
        sys.base.circle,
    )?)
}

/// Iteration record for an equilibrium run. Non-convergence is a reported
/// state, not an error: the trace is the diagnostic.
#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub family: LeafFamily,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

pub const EQ_TOL: f64 = 1e-6;
pub const EQ_MAX_ITER: usize = 400;

/// Fixed-point iteration from the product family (every leaf = m2).
pub fn equilibrium(
    sys: &SkewSystem,
    m2: &AtomicMeasure,
    tol: f64,
    n_max: usize,
) -> Result<EquilibriumResult, SkewError> {
    if (m2.total_mass() - 1.0).abs() > 1e-9 {
        return Err(SkewError::InvalidInput(format!(
            "starting fiber measure must be a probability, mass {}",
            m2.total_mass()
        )));
    }
    if tol <= 0.0 {
        return Err(SkewError::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let leaves = vec![coarsen(m2, sys.bins); sys.n];
    let mut fam = LeafFamily::with_density(
        leaves,
        sys.spectral.m_weights.clone(),
        vec![1.0; sys.n],
        sys.base.circle,
    )?;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..n_max {
        let next = apply_transfer(sys, &fam)?;
        let d = family_distance_linf(&next, &fam, sys.zeta)?;
        trace.push(d);
        fam = next;
        if d < tol {
            converged = true;
            break;
        }
    }
    let iterations = trace.len();
    Ok(EquilibriumResult { family: fam, trace, converged, iterations })
}

/// Measured Hölder seminorm of a converged family against the closed-form
/// bound D/(1−β), with the discretization slack recorded: coarsening moves
/// each unit of leaf mass at most half a bin, which inflates adjacent-pair
/// seminorm estimates by at most 2·(2·bins)^{−ζ}·N^ζ.
#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub seminorm: f64,
    pub beta: f64,
    pub d_const: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

pub fn regularity_check(sys: &SkewSystem, fam: &LeafFamily) -> Result<RegularityReport, SkewError> {
    if !sys.contracts() {
        return Err(SkewError::HypothesisViolation(format!(
            "(alpha L)^zeta = {} is not below 1; the regularity bound does not apply",
            sys.beta
        )));
    }
    let seminorm = holder_seminorm(fam, sys.zeta);
    let bound = sys.d_const / (1.0 - sys.beta);
    let slack =
        2.0 * (2.0 * sys.bins as f64).powf(-sys.zeta) * (sys.n as f64).powf(sys.zeta);
    Ok(RegularityReport {
        seminorm,
        beta: sys.beta,
        d_const: sys.d_const,
        bound,
        slack,
        pass: seminorm <= bound + slack,
    })
}

/// Integrals of inf and sup of ψ∘Fⁿ over each fiber, against the invariant
/// base weights. The gap between them contracts to zero as n grows, which
/// pins the unique invariant measure from both sides.
pub fn sandwich_probe(
    sys: &SkewSystem,
    psi: &dyn Fn(f64, f64) -> f64,
    n_steps: usize,
    fiber_grid: usize,
) -> Result<(f64, f64), SkewError> {
    let fiber_grid = fiber_grid.max(2);
    let mut lower = 0.0f64;
    let mut upper = 0.0f64;
    for (j, x0) in centers(sys.n).enumerate() {
        // The base orbit is shared by the whole fiber.
        let mut orbit = Vec::with_capacity(n_steps);
        let mut x = x0;
        for _ in 0..n_steps {
            orbit.push((sys.base.branch_of(x), x));
            x = sys.base.eval(x);
        }
        let x_final = x;
        let mut fiber_min = f64::INFINITY;
        let mut fiber_max = f64::NEG_INFINITY;
        for k in 0..=fiber_grid {
            let mut y = k as f64 / fiber_grid as f64;
            for &(b, xb) in &orbit {
                y = sys.fiber.eval(b, xb, y).clamp(0.0, 1.0);
            }
            let v = psi(x_final, y);
            fiber_min = fiber_min.min(v);
            fiber_max = fiber_max.max(v);
        }
        lower += sys.spectral.m_weights[j] * fiber_min;
        upper += sys.spectral.m_weights[j] * fiber_max;
    }
    Ok((lower, upper))
}

/// Max residual of G(x, y0) = y0 over a grid: zero residual puts the system
/// in the class with an invariant horizontal fiber, the gateway for
/// reducing fiber-dependent potentials to the base.
pub fn invariant_fiber_residual(fiber: &FiberMap, y0: f64, grid: usize) -> f64 {
    let grid = grid.max(16);
    let mut residual = 0.0f64;
    for b in 0..fiber.degree() {
        for i in 0..=grid {
            let x = i as f64 / grid as f64;
            residual = residual.max((fiber.eval(b, x, y0) - y0).abs());
        }
    }
    residual
}

/// Margin of the planar-base expansion condition |∂_y g| > 1 + |∂_x g|/3,
/// evaluated on supplied partial-derivative bounds. Positive margin passes.
pub fn planar_expansion_margin(dy_g: f64, dx_g: f64) -> f64 {
    dy_g.abs() - 1.0 - dx_g.abs() / 3.0
}

/// l-adic base with fiber G(x, y) = alpha·y + amp·(1 + cos 2πx). The
/// forcing peaks at 2·amp, so alpha + 2·amp ≤ 1 keeps the fiber inside
/// [0,1] with no clamping on the attractor.
pub fn cosine_solenoid(l: usize, alpha: f64, amp: f64) -> Result<(IntervalMap, FiberMap), SkewError> {
    if amp < 0.0 || alpha + 2.0 * amp > 1.0 + 1e-12 {
        return Err(SkewError::InvalidInput(format!(
            "forcing amplitude {amp} with contraction {alpha} leaves the unit fiber"
        )));
    }
    let base = base_dynamics::l_adic(l);
    let g: FiberFn = Arc::new(move |x: f64, y: f64| {
        alpha * y + amp * (1.0 + (std::f64::consts::TAU * x).cos())
    });
    let g_holder = amp * std::f64::consts::TAU;
    let fiber = FiberMap::uniform(g, l, alpha, g_holder)?;
    Ok((base, fiber))
}

/// Fiber G(x, y) = alpha·y + c on every branch; contracts to the global
/// fixed point c/(1−alpha).
pub fn linear_fiber(deg: usize, alpha: f64, c: f64) -> Result<FiberMap, SkewError> {
    if c < 0.0 || alpha + c > 1.0 + 1e-12 {
        return Err(SkewError::InvalidInput(format!(
            "offset {c} with contraction {alpha} leaves the unit fiber"
        )));
    }
    let g: FiberFn = Arc::new(move |_x: f64, y: f64| alpha * y + c);
    FiberMap::uniform(g, deg, alpha, 0.0)
}

/// Piecewise-constant contractions G(x, y) = alpha_b·y for x in branch b.
/// Discontinuous across branch boundaries, yet base-constant within each,
/// so the base regularity constant is zero.
pub fn coefficient_fiber(alphas: &[f64]) -> Result<FiberMap, SkewError> {
    if alphas.is_empty() {
        return Err(SkewError::InvalidInput("no branch coefficients".into()));
    }
    let mut alpha_max = 0.0f64;
    let mut branches: Vec<FiberFn> = Vec::with_capacity(alphas.len());
    for &a in alphas {
        if !(0.0..1.0).contains(&a) {
            return Err(SkewError::InvalidInput(format!(
                "branch contraction rate must lie in [0,1), got {a}"
            )));
        }
        alpha_max = alpha_max.max(a);
        branches.push(Arc::new(move |_x: f64, y: f64| a * y));
    }
    FiberMap::per_branch(branches, alpha_max, 0.0)
}
