//! Statistical consequences of the spectral picture: decay of correlations
//! through operator duality, a seeded central-limit sampler over skew
//! orbits, and the Birkhoff check that cohomologous potentials share
//! time averages.
//!
//! The duality route never simulates: for a base observable psi and a fiber
//! observable phi the correlation at lag n is
//!
//!   C(n) = sum_i psi_i (Lbar^n s)_i m_i  -  (sum psi m)(sum s m),
//!
//! where s(gamma) is the conditional average of phi over the leaf at gamma
//! and m the invariant weights. The Monte Carlo route in the sampler draws
//! orbits from the same equilibrium and is used to cross-validate C(n).

mod sampler;

pub use sampler::{
    birkhoff_cohomology_check, clt_sample, correlation_monte_carlo, draw_initial, ks_critical,
    ks_statistic, CltReport, CohomologyReport, McCorrelation, ORBIT_DITHER, SAMPLE_BLOCK,
};

use measures::LeafFamily;
use ruelle::{normalized_apply, GridFunction};
use skew_transfer::{SkewError, SkewSystem};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error(transparent)]
    Skew(#[from] SkewError),
}

/// Entries with |C(n)| at or below this are excluded from the rate fit.
/// They sit at the quadrature noise floor and would flatten the regression.
pub const FIT_FLOOR: f64 = 1e-13;

/// Autocovariance lags are summed until a term drops below this magnitude.
pub const SIGMA_TRUNCATION: f64 = 1e-10;

/// Hard cap on the lag sum; the series converges geometrically, so hitting
/// the cap means the discretized operator is not mixing and the recorded
/// truncation lag will say so.
const MAX_SIGMA_LAG: usize = 4096;

/// Default routing threshold into the degenerate CLT branch.
pub const DEGENERATE_SIGMA_SQ: f64 = 1e-12;

/// Correlation series at lags 0..=n_max with the fitted geometric rate.
#[derive(Debug, Clone)]
pub struct CorrelationSeries {
    pub n_values: Vec<usize>,
    pub c_values: Vec<f64>,
    /// exp of the fitted slope of log|C(n)|, clamped into (0, 1]. NaN when
    /// fewer than two entries clear [FIT_FLOOR].
    pub fitted_rate: f64,
    pub fit_r2: f64,
    /// exp of the fitted intercept; the empirical pair constant.
    pub fitted_amplitude: f64,
    pub usable_points: usize,
}

/// Truncated Green-Kubo variance of a centered observable.
#[derive(Debug, Clone)]
pub struct VarianceEstimate {
    pub sigma_sq: f64,
    /// Last lag included in the sum.
    pub truncation_lag: usize,
    /// Magnitude of the first dropped term, 0 if the cap was hit.
    pub tail_term: f64,
    /// A negative truncated sum is floored at zero and flagged.
    pub floored: bool,
    /// Mean of the observable under the equilibrium, subtracted throughout.
    pub center: f64,
}

/// Conditional averages s_i = (1/mass_i) integral of phi(c_i, .) over leaf i.
/// Requires every leaf to carry positive mass; a converged equilibrium does.
pub(crate) fn conditional_averages(
    eq: &LeafFamily,
    phi_obs: &(dyn Fn(f64, f64) -> f64 + Sync),
) -> Result<Vec<f64>, StatsError> {
    let mut s = Vec::with_capacity(eq.len());
    for i in 0..eq.len() {
        let leaf = eq.leaf(i);
        let mass = leaf.total_mass();
        if !(mass > 0.0) {
            return Err(StatsError::InvalidInput(format!(
                "leaf {i} has mass {mass}; conditional averages need a converged equilibrium"
            )));
        }
        let c = eq.center(i);
        s.push(leaf.integrate(|y| phi_obs(c, y)) / mass);
    }
    Ok(s)
}

pub(crate) fn check_family(sys: &SkewSystem, eq: &LeafFamily) -> Result<(), StatsError> {
    if eq.len() != sys.n {
        return Err(StatsError::InvalidInput(format!(
            "family has {} leaves, operator grid has {}",
            eq.len(),
            sys.n
        )));
    }
    Ok(())
}

/// Decay of correlations by operator duality. psi must be constant along
/// fibers; phi_obs is reduced to the base through its leafwise averages.
pub fn correlation(
    sys: &SkewSystem,
    eq: &LeafFamily,
    psi: &(dyn Fn(f64) -> f64 + Sync),
    phi_obs: &(dyn Fn(f64, f64) -> f64 + Sync),
    n_max: usize,
) -> Result<CorrelationSeries, StatsError> {
    check_family(sys, eq)?;
    let m = &sys.spectral.m_weights;
    let s = conditional_averages(eq, phi_obs)?;
    let psi_vals: Vec<f64> = (0..sys.n).map(|i| psi(eq.center(i))).collect();
    let mean_s: f64 = s.iter().zip(m).map(|(a, w)| a * w).sum();
    let mean_psi: f64 = psi_vals.iter().zip(m).map(|(a, w)| a * w).sum();
    let psi_c: Vec<f64> = psi_vals.iter().map(|v| v - mean_psi).collect();

    let mut u = GridFunction::new(s.iter().map(|v| v - mean_s).collect(), sys.matrix.circle)
        .map_err(|e| StatsError::InvalidInput(e.to_string()))?;
    let mut n_values = Vec::with_capacity(n_max + 1);
    let mut c_values = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let c: f64 = psi_c
            .iter()
            .zip(u.values.iter())
            .zip(m)
            .map(|((p, v), w)| p * v * w)
            .sum();
        n_values.push(n);
        c_values.push(c);
        if n < n_max {
            u = normalized_apply(&sys.spectral, &sys.matrix, &u);
        }
    }

    let (fitted_rate, fit_r2, fitted_amplitude, usable_points) =
        fit_log_decay(&n_values, &c_values);
    Ok(CorrelationSeries {
        n_values,
        c_values,
        fitted_rate,
        fit_r2,
        fitted_amplitude,
        usable_points,
    })
}

/// sigma^2 = A(0) + 2 sum_{j>=1} A(j), with A(0) the full fiber second
/// moment of the centered observable and A(j) the lagged autocovariance of
/// its leafwise reduction, summed until [SIGMA_TRUNCATION].
pub fn green_kubo_variance(
    sys: &SkewSystem,
    eq: &LeafFamily,
    phi_obs: &(dyn Fn(f64, f64) -> f64 + Sync),
) -> Result<VarianceEstimate, StatsError> {
    check_family(sys, eq)?;
    let m = &sys.spectral.m_weights;
    let s = conditional_averages(eq, phi_obs)?;
    let center: f64 = s.iter().zip(m).map(|(a, w)| a * w).sum();

    // Lag 0 sees the fiber spread, not just the reduced s.
    let mut a0 = 0.0;
    for i in 0..eq.len() {
        let leaf = eq.leaf(i);
        let c = eq.center(i);
        a0 += m[i] * leaf.integrate(|y| (phi_obs(c, y) - center).powi(2)) / leaf.total_mass();
    }

    let s_hat = GridFunction::new(s.iter().map(|v| v - center).collect(), sys.matrix.circle)
        .map_err(|e| StatsError::InvalidInput(e.to_string()))?;
    let mut u = s_hat.clone();
    let mut acc = a0;
    let mut truncation_lag = 0;
    let mut tail_term = 0.0;
    for j in 1..=MAX_SIGMA_LAG {
        u = normalized_apply(&sys.spectral, &sys.matrix, &u);
        let aj: f64 = s_hat
            .values
            .iter()
            .zip(u.values.iter())
            .zip(m)
            .map(|((p, v), w)| p * v * w)
            .sum();
        if aj.abs() < SIGMA_TRUNCATION {
            tail_term = aj.abs();
            break;
        }
        acc += 2.0 * aj;
        truncation_lag = j;
    }
    let floored = acc < 0.0;
    Ok(VarianceEstimate {
        sigma_sq: acc.max(0.0),
        truncation_lag,
        tail_term,
        floored,
        center,
    })
}

/// Least squares on (n, log|C(n)|) over entries above [FIT_FLOOR]. Returns
/// (rate, r2, amplitude, usable count); NaNs when the fit is undefined.
fn fit_log_decay(ns: &[usize], cs: &[f64]) -> (f64, f64, f64, usize) {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(cs)
        .filter(|(_, c)| c.abs() > FIT_FLOOR)
        .map(|(&n, &c)| (n as f64, c.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN, f64::NAN, pts.len());
    }
    let k = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(x, _)| x).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let denom = k * sxx - sx * sx;
    if denom <= 0.0 {
        return (f64::NAN, f64::NAN, f64::NAN, pts.len());
    }
    let slope = (k * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / k;
    let mean_y = sy / k;
    let ss_tot: f64 = pts.iter().map(|(_, y)| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let fit_r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let rate = slope.exp().clamp(f64::MIN_POSITIVE, 1.0);
    (rate, fit_r2, intercept.exp(), pts.len())
}
