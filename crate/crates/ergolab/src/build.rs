//! Assembly of dynamical objects from config blocks. Parameter presence is
//! already validated; this layer owns the mapping from names to builders
//! and the cross-checks between blocks (degrees, fiber bounds).

use crate::config::{BaseConfig, FiberConfig, PotentialConfig, StabilityParams, SystemConfig};
use crate::ErgoError;
use base_dynamics::IntervalMap;
use potentials::HolderPotential;
use skew_transfer::{
    coefficient_fiber, cosine_solenoid, linear_fiber, FiberMap, SkewError, SkewSystem,
};
use stability::{FamilyKind, Generator, PerturbationFamily};
use std::sync::Arc;

pub fn build_base(cfg: &BaseConfig) -> Result<IntervalMap, ErgoError> {
    match cfg.kind.as_str() {
        "doubling" => Ok(base_dynamics::doubling()),
        "l_adic" => Ok(base_dynamics::l_adic(cfg.l.expect("validated"))),
        "l_adic_shifted" => {
            Ok(base_dynamics::l_adic_shifted(cfg.l.expect("validated"), cfg.shift.expect("validated")))
        }
        "manneville_pomeau" => {
            Ok(base_dynamics::manneville_pomeau(cfg.intermittency.expect("validated"))?)
        }
        "piecewise_affine" => Ok(base_dynamics::piecewise_affine(
            cfg.slopes.as_ref().expect("validated"),
            cfg.cuts.as_ref().expect("validated"),
        )?),
        other => Err(ErgoError::Config(format!("unknown base kind '{other}'"))),
    }
}

pub fn build_potential(
    cfg: &PotentialConfig,
    base: &IntervalMap,
    zeta: f64,
) -> Result<HolderPotential, ErgoError> {
    match cfg.kind.as_str() {
        "constant" => Ok(HolderPotential::constant(
            cfg.value.expect("validated"),
            zeta,
            cfg.epsilon_phi.unwrap_or(0.0),
        )),
        "geometric" => Ok(potentials::geometric_potential(base, cfg.t.expect("validated"), zeta)?),
        other => Err(ErgoError::Config(format!("unknown potential kind '{other}'"))),
    }
}

pub fn build_fiber(cfg: &FiberConfig, degree: usize) -> Result<FiberMap, ErgoError> {
    match cfg.kind.as_str() {
        "cosine" => {
            let (_, fiber) = cosine_solenoid(
                degree,
                cfg.alpha.expect("validated"),
                cfg.amp.expect("validated"),
            )?;
            Ok(fiber)
        }
        "linear" => Ok(linear_fiber(
            degree,
            cfg.alpha.expect("validated"),
            cfg.offset.expect("validated"),
        )?),
        "coefficient" => {
            let coeffs = cfg.coefficients.as_ref().expect("validated");
            if coeffs.len() != degree {
                return Err(ErgoError::Config(format!(
                    "fiber lists {} branch coefficients, base has degree {degree}",
                    coeffs.len()
                )));
            }
            Ok(coefficient_fiber(coeffs)?)
        }
        other => Err(ErgoError::Config(format!("unknown fiber kind '{other}'"))),
    }
}

pub fn build_system(cfg: &SystemConfig) -> Result<SkewSystem, ErgoError> {
    let base = build_base(&cfg.base)?;
    let fiber_cfg = cfg.fiber.as_ref().ok_or_else(|| {
        ErgoError::Config("this experiment needs a [system.fiber] block".into())
    })?;
    let fiber = build_fiber(fiber_cfg, base.degree())?;
    let potential = build_potential(&cfg.potential, &base, cfg.zeta)?;
    Ok(SkewSystem::new(base, fiber, potential, cfg.zeta, cfg.grid_n, cfg.fiber_bins)?)
}

/// Stability families are named presets over the config grid; the constant
/// family replays the config's own system at every delta.
pub fn build_family(
    sys_cfg: &SystemConfig,
    params: &StabilityParams,
) -> Result<PerturbationFamily, ErgoError> {
    let n = sys_cfg.grid_n;
    let bins = sys_cfg.fiber_bins;
    let fam = match params.family.as_str() {
        "fiber_shift" => stability::fiber_shift_family(n, bins)?,
        "base_shift" => stability::base_shift_family(params.l.expect("validated"), n, bins)?,
        "coefficient" => stability::coefficient_family(n, bins)?,
        "constant" => {
            let frozen = sys_cfg.clone();
            let gen: Generator = Arc::new(move |_| {
                build_system(&frozen).map_err(|e| SkewError::InvalidInput(e.to_string()))
            });
            PerturbationFamily::new(
                FamilyKind::Constant,
                gen,
                Arc::new(|d| d),
                stability::DELTA_SWEEP.to_vec(),
            )?
        }
        other => return Err(ErgoError::Config(format!("unknown stability family '{other}'"))),
    };
    match &params.deltas {
        Some(ds) => Ok(fam.with_deltas(ds.clone())?),
        None => Ok(fam),
    }
}
