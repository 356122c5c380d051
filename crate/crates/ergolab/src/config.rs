//! Experiment configuration: a strict TOML tree. Unknown keys are rejected,
//! parameters are checked against the declared kind, and every run writes
//! the fully-resolved config next to its outputs so artifacts are
//! self-describing.

use crate::ErgoError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const EXPERIMENT_KINDS: [&str; 7] =
    ["spectrum", "equilibrium", "decay", "clt", "stability", "verify", "cohomology"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub base: BaseConfig,
    /// Optional for base-only experiments (spectrum, base-only verify).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber: Option<FiberConfig>,
    pub potential: PotentialConfig,
    #[serde(default = "one")]
    pub zeta: f64,
    #[serde(default = "default_grid")]
    pub grid_n: usize,
    #[serde(default = "default_bins")]
    pub fiber_bins: usize,
    /// Working bound on per-leaf support between coarsenings; the pipeline
    /// never exceeds degree * interpolation stencil * fiber_bins.
    #[serde(default = "default_atom_cap")]
    pub atom_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseConfig {
    /// doubling | l_adic | l_adic_shifted | manneville_pomeau | piecewise_affine
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermittency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slopes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cuts: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    /// cosine | linear | coefficient
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// constant | geometric
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Regularity budget epsilon_phi; the geometric builder carries its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_phi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<EquilibriumParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clt: Option<CltParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohomology: Option<CohomologyParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumParams {
    /// Fiber position of the starting point mass.
    #[serde(default = "half")]
    pub start_pos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayParams {
    /// Base test function, constant along fibers.
    pub psi: String,
    pub phi_obs: String,
    pub n_max: usize,
    /// 0 disables the Monte Carlo cross-check.
    #[serde(default)]
    pub mc_samples: usize,
    #[serde(default = "ten")]
    pub mc_n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltParams {
    pub observable: String,
    pub n: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityParams {
    /// fiber_shift | base_shift | coefficient | constant
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    /// Overrides the default sweep when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default)]
    pub uniform_probe: bool,
    #[serde(default = "yes")]
    pub admissibility: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {
    #[serde(default = "default_fiber_grid")]
    pub fiber_grid: usize,
    /// Checks G(x, y0) = y0 when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_s_y0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planar: Option<PlanarParams>,
}

/// Arithmetic checker for the planar endomorphism example: the expansion
/// lemma |dy_g| > 1 + |dx_g|/3 and the gap-condition value at the supplied
/// structural constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarParams {
    pub dy_g: f64,
    pub dx_g: f64,
    pub sigma: f64,
    pub deg: usize,
    pub q: usize,
    pub l: f64,
    #[serde(default)]
    pub epsilon_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohomologyParams {
    pub phi_bar: String,
    pub y0: f64,
    pub orbit_count: usize,
    pub n_values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Subset of {csv, json}; summary.json and the resolved config are
    /// always written.
    pub formats: Vec<String>,
    pub seed: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("out"),
            formats: vec!["csv".into(), "json".into()],
            seed: 0,
        }
    }
}

/// Every pass/fail threshold the runner consults. Field defaults mirror the
/// library conventions so configs only state deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub eq_tol: f64,
    pub eq_max_iter: usize,
    pub eig_tol: f64,
    pub eig_residual: f64,
    pub norm_identity: f64,
    pub fit_r2_min: f64,
    pub tau_max: f64,
    pub mc_sigma: f64,
    pub degenerate_sigma_sq: f64,
    pub monotone_jitter: f64,
    /// Trailing iterations used for the geometric trace fit.
    pub trace_window: usize,
    pub class_s_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eq_tol: skew_transfer::EQ_TOL,
            eq_max_iter: skew_transfer::EQ_MAX_ITER,
            eig_tol: skew_transfer::EIG_TOL,
            eig_residual: 1e-9,
            norm_identity: 1e-8,
            fit_r2_min: 0.95,
            tau_max: 1.0,
            mc_sigma: 3.0,
            degenerate_sigma_sq: statistics::DEGENERATE_SIGMA_SQ,
            monotone_jitter: 0.1,
            trace_window: 20,
            class_s_residual: 1e-9,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn ten() -> usize {
    10
}
fn yes() -> bool {
    true
}
fn default_grid() -> usize {
    256
}
fn default_bins() -> usize {
    256
}
fn default_atom_cap() -> usize {
    4096
}
fn default_fiber_grid() -> usize {
    64
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ErgoError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ErgoError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ErgoError> {
        // toml's serde errors carry line/column context in their Display
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ErgoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ErgoError> {
        toml::to_string_pretty(self).map_err(|e| ErgoError::Config(e.to_string()))
    }

    /// Structural validation beyond serde: kinds are known, the params
    /// present belong to the declared kind, required ones are there.
    pub fn validate(&self) -> Result<(), ErgoError> {
        let mut errs: Vec<String> = Vec::new();
        validate_base(&self.system.base, &mut errs);
        if let Some(f) = &self.system.fiber {
            validate_fiber(f, &mut errs);
        }
        validate_potential(&self.system.potential, &mut errs);
        if !(self.system.zeta > 0.0 && self.system.zeta <= 1.0) {
            errs.push(format!("system.zeta must lie in (0, 1], got {}", self.system.zeta));
        }
        if self.system.grid_n < 8 {
            errs.push(format!("system.grid_n must be at least 8, got {}", self.system.grid_n));
        }
        if self.system.fiber_bins < 2 {
            errs.push(format!(
                "system.fiber_bins must be at least 2, got {}",
                self.system.fiber_bins
            ));
        }
        if self.system.atom_cap < self.system.fiber_bins {
            errs.push(format!(
                "system.atom_cap {} is below system.fiber_bins {}; coarsened leaves would not fit",
                self.system.atom_cap, self.system.fiber_bins
            ));
        }
        validate_experiment(&self.experiment, &mut errs);
        for f in &self.output.formats {
            if f != "csv" && f != "json" {
                errs.push(format!("output.formats entry '{f}' is not one of csv, json"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ErgoError::Config(errs.join("; ")))
        }
    }
}

fn require<T>(opt: &Option<T>, name: &str, kind: &str, errs: &mut Vec<String>) {
    if opt.is_none() {
        errs.push(format!("{name} is required for kind '{kind}'"));
    }
}

fn forbid<T>(opt: &Option<T>, name: &str, kind: &str, errs: &mut Vec<String>) {
    if opt.is_some() {
        errs.push(format!("{name} is not a parameter of kind '{kind}'"));
    }
}

fn validate_base(b: &BaseConfig, errs: &mut Vec<String>) {
    let k = b.kind.as_str();
    match k {
        "doubling" => {
            forbid(&b.l, "system.base.l", k, errs);
            forbid(&b.shift, "system.base.shift", k, errs);
            forbid(&b.intermittency, "system.base.intermittency", k, errs);
            forbid(&b.slopes, "system.base.slopes", k, errs);
            forbid(&b.cuts, "system.base.cuts", k, errs);
        }
        "l_adic" => {
            require(&b.l, "system.base.l", k, errs);
            forbid(&b.shift, "system.base.shift", k, errs);
            forbid(&b.intermittency, "system.base.intermittency", k, errs);
            forbid(&b.slopes, "system.base.slopes", k, errs);
            forbid(&b.cuts, "system.base.cuts", k, errs);
        }
        "l_adic_shifted" => {
            require(&b.l, "system.base.l", k, errs);
            require(&b.shift, "system.base.shift", k, errs);
            forbid(&b.intermittency, "system.base.intermittency", k, errs);
            forbid(&b.slopes, "system.base.slopes", k, errs);
            forbid(&b.cuts, "system.base.cuts", k, errs);
        }
        "manneville_pomeau" => {
            require(&b.intermittency, "system.base.intermittency", k, errs);
            forbid(&b.l, "system.base.l", k, errs);
            forbid(&b.shift, "system.base.shift", k, errs);
            forbid(&b.slopes, "system.base.slopes", k, errs);
            forbid(&b.cuts, "system.base.cuts", k, errs);
        }
        "piecewise_affine" => {
            require(&b.slopes, "system.base.slopes", k, errs);
            require(&b.cuts, "system.base.cuts", k, errs);
            forbid(&b.l, "system.base.l", k, errs);
            forbid(&b.shift, "system.base.shift", k, errs);
            forbid(&b.intermittency, "system.base.intermittency", k, errs);
        }
        other => errs.push(format!("unknown base kind '{other}'")),
    }
}

fn validate_fiber(f: &FiberConfig, errs: &mut Vec<String>) {
    let k = f.kind.as_str();
    match k {
        "cosine" => {
            require(&f.alpha, "system.fiber.alpha", k, errs);
            require(&f.amp, "system.fiber.amp", k, errs);
            forbid(&f.offset, "system.fiber.offset", k, errs);
            forbid(&f.coefficients, "system.fiber.coefficients", k, errs);
        }
        "linear" => {
            require(&f.alpha, "system.fiber.alpha", k, errs);
            require(&f.offset, "system.fiber.offset", k, errs);
            forbid(&f.amp, "system.fiber.amp", k, errs);
            forbid(&f.coefficients, "system.fiber.coefficients", k, errs);
        }
        "coefficient" => {
            require(&f.coefficients, "system.fiber.coefficients", k, errs);
            forbid(&f.alpha, "system.fiber.alpha", k, errs);
            forbid(&f.amp, "system.fiber.amp", k, errs);
            forbid(&f.offset, "system.fiber.offset", k, errs);
        }
        other => errs.push(format!("unknown fiber kind '{other}'")),
    }
}

fn validate_potential(p: &PotentialConfig, errs: &mut Vec<String>) {
    let k = p.kind.as_str();
    match k {
        "constant" => {
            require(&p.value, "system.potential.value", k, errs);
            forbid(&p.t, "system.potential.t", k, errs);
        }
        "geometric" => {
            require(&p.t, "system.potential.t", k, errs);
            forbid(&p.value, "system.potential.value", k, errs);
            forbid(&p.epsilon_phi, "system.potential.epsilon_phi", k, errs);
        }
        other => errs.push(format!("unknown potential kind '{other}'")),
    }
}

fn validate_experiment(e: &ExperimentBlock, errs: &mut Vec<String>) {
    let kind = e.kind.as_str();
    if !EXPERIMENT_KINDS.contains(&kind) {
        errs.push(format!(
            "unknown experiment kind '{kind}'; expected one of {}",
            EXPERIMENT_KINDS.join(", ")
        ));
        return;
    }
    let blocks: [(&str, bool); 6] = [
        ("equilibrium", e.equilibrium.is_some()),
        ("decay", e.decay.is_some()),
        ("clt", e.clt.is_some()),
        ("stability", e.stability.is_some()),
        ("verify", e.verify.is_some()),
        ("cohomology", e.cohomology.is_some()),
    ];
    for (name, present) in blocks {
        if present && name != kind {
            errs.push(format!(
                "experiment.{name} block does not belong to experiment kind '{kind}'"
            ));
        }
        if !present && name == kind {
            errs.push(format!("experiment.{kind} block is required"));
        }
    }
    match kind {
        "decay" => {
            if let Some(d) = &e.decay {
                if d.n_max == 0 {
                    errs.push("experiment.decay.n_max must be positive".into());
                }
                if d.mc_samples > 0 && d.mc_n_max > d.n_max {
                    errs.push(format!(
                        "experiment.decay.mc_n_max {} exceeds n_max {}",
                        d.mc_n_max, d.n_max
                    ));
                }
            }
        }
        "clt" => {
            if let Some(c) = &e.clt {
                if c.n == 0 {
                    errs.push("experiment.clt.n must be positive".into());
                }
            }
        }
        "stability" => {
            if let Some(s) = &e.stability {
                let fams = ["fiber_shift", "base_shift", "coefficient", "constant"];
                if !fams.contains(&s.family.as_str()) {
                    errs.push(format!(
                        "unknown stability family '{}'; expected one of {}",
                        s.family,
                        fams.join(", ")
                    ));
                }
                if s.family == "base_shift" {
                    if s.l.is_none() {
                        errs.push(
                            "experiment.stability.l is required for the base_shift family".into(),
                        );
                    }
                } else if s.l.is_some() {
                    errs.push(format!(
                        "experiment.stability.l is not a parameter of family '{}'",
                        s.family
                    ));
                }
            }
        }
        "cohomology" => {
            if let Some(c) = &e.cohomology {
                if c.orbit_count == 0 {
                    errs.push("experiment.cohomology.orbit_count must be positive".into());
                }
                if c.n_values.is_empty() {
                    errs.push("experiment.cohomology.n_values must be nonempty".into());
                }
            }
        }
        _ => {}
    }
}
