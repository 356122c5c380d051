//! One runner per experiment kind. Each takes the validated config, writes
//! its artifacts under the output directory, and fills a ResultRecord with
//! metrics, pass/fail flags, and any named hypothesis violations.

use crate::build::{build_base, build_family, build_fiber, build_potential, build_system};
use crate::config::ExperimentConfig;
use crate::observables::{base_observable, pair_observable};
use crate::record::ResultRecord;
use crate::ErgoError;
use measures::AtomicMeasure;
use ruelle::GridFunction;
use serde_json::json;
use skew_transfer::SkewSystem;
use statistics::StatsError;
use std::path::Path;

pub struct RunEnv<'a> {
    pub cfg: &'a ExperimentConfig,
    pub out: &'a Path,
    pub seed: u64,
}

impl RunEnv<'_> {
    fn wants(&self, format: &str) -> bool {
        self.cfg.output.formats.iter().any(|f| f == format)
    }

    fn write_json(
        &self,
        rec: &mut ResultRecord,
        name: &str,
        value: &serde_json::Value,
    ) -> Result<(), ErgoError> {
        if !self.wants("json") {
            return Ok(());
        }
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| ErgoError::Artifact(e.to_string()))?;
        std::fs::write(self.out.join(name), text)?;
        rec.file(name);
        Ok(())
    }

    fn write_csv(
        &self,
        rec: &mut ResultRecord,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), ErgoError> {
        if !self.wants("csv") {
            return Ok(());
        }
        let mut w = csv::Writer::from_path(self.out.join(name))
            .map_err(|e| ErgoError::Artifact(e.to_string()))?;
        w.write_record(header).map_err(|e| ErgoError::Artifact(e.to_string()))?;
        for row in rows {
            w.write_record(row).map_err(|e| ErgoError::Artifact(e.to_string()))?;
        }
        w.flush()?;
        rec.file(name);
        Ok(())
    }
}

pub fn dispatch(env: &RunEnv, rec: &mut ResultRecord) -> Result<(), ErgoError> {
    match env.cfg.experiment.kind.as_str() {
        "spectrum" => run_spectrum(env, rec),
        "equilibrium" => run_equilibrium(env, rec),
        "decay" => run_decay(env, rec),
        "clt" => run_clt(env, rec),
        "stability" => run_stability(env, rec),
        "verify" => run_verify(env, rec),
        "cohomology" => run_cohomology(env, rec),
        other => Err(ErgoError::Config(format!("unknown experiment kind '{other}'"))),
    }
}

/// Shared gate: experiments built on the leafwise operator require the
/// contraction hypothesis. A failure is reported, not computed around.
fn contracts_or_report(sys: &SkewSystem, rec: &mut ResultRecord) -> bool {
    if sys.contracts() {
        true
    } else {
        rec.violation(format!(
            "(alpha L)^zeta = {} is not below 1; leafwise contraction fails",
            sys.beta
        ));
        false
    }
}

fn run_spectrum(env: &RunEnv, rec: &mut ResultRecord) -> Result<(), ErgoError> {
    let t = &env.cfg.tolerances;
    let sys_cfg = &env.cfg.system;
    let base = build_base(&sys_cfg.base)?;
    let phi = build_potential(&sys_cfg.potential, &base, sys_cfg.zeta)?;
    let a = ruelle::build_operator_matrix(&base, &phi, sys_cfg.grid_n)?;
    let spec = ruelle::leading_eigendata(&a, t.eig_tol)?;

    let one = GridFunction::constant(sys_cfg.grid_n, base.circle, 1.0);
    let img = ruelle::normalized_apply(&spec, &a, &one);
    let norm_residual =
        img.values.iter().map(|v| (v - 1.0).abs()).fold(0.0f64, f64::max);

    let h_min = spec.h.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let h_max = spec.h.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    rec.metric("lambda", spec.lambda);
    rec.metric("residual_h", spec.residual_h);
    rec.metric("residual_nu", spec.residual_nu);
    rec.metric("iterations", spec.iterations as f64);
    rec.metric("norm_identity_residual", norm_residual);
    rec.metric("h_min", h_min);
    rec.metric("h_max", h_max);
    rec.flag("eigen_residuals", spec.residual_h <= t.eig_residual && spec.residual_nu <= t.eig_residual);
    rec.flag("normalization_identity", norm_residual <= t.norm_identity);

    let structure = base.check_structure(512);
    rec.metric("structure_q", structure.q as f64);
    let mut gap_json = json!(null);
    if structure.q < base.degree() {
        // the L-term only enters through the bad region, so an expanding
        // map's sub-1 inverse bound is lifted to the formula's domain
        if let Ok(v) = potentials::gap_condition_value(
            base.degree(),
            structure.q,
            base.sigma,
            base.l_max.max(1.0),
            sys_cfg.zeta,
            phi.epsilon_phi,
        ) {
            rec.metric("gap_value", v);
            gap_json = json!(v);
        }
    }

    env.write_json(
        rec,
        "spectral.json",
        &json!({
            "lambda": spec.lambda,
            "residual_h": spec.residual_h,
            "residual_nu": spec.residual_nu,
            "iterations": spec.iterations,
            "norm_identity_residual": norm_residual,
            "h_min": h_min,
            "h_max": h_max,
            "gap_value": gap_json,
        }),
    )?;
    let rows: Vec<Vec<String>> = ruelle::centers(sys_cfg.grid_n)
        .enumerate()
        .map(|(i, x)| {
            vec![
                format!("{x}"),
                format!("{}", spec.h.values[i]),
                format!("{}", spec.nu_weights[i]),
                format!("{}", spec.m_weights[i]),
            ]
        })
        .collect();
    env.write_csv(rec, "eigendata.csv", &["x", "h", "nu", "m"], &rows)?;
    Ok(())
}

/// Least-squares geometric fit of a positive tail: returns (ratio, r2).
fn fit_geometric(tail: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0.0)
        .map(|(i, d)| (i as f64, d.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom <= 0.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in &pts {
        let pred = intercept + slope * x;
        ss_res += (y - pred) * (y - pred);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some((slope.exp(), r2))
}

fn converge_equilibrium(
    env: &RunEnv,
    sys: &SkewSystem,
    start_pos: f64,
) -> Result<skew_transfer::EquilibriumResult, ErgoError> {
    let t = &env.cfg.tolerances;
    let start = AtomicMeasure::delta(start_pos, 1.0)?;
    Ok(skew_transfer::equilibrium(sys, &start, t.eq_tol, t.eq_max_iter)?)
}

fn run_equilibrium(env: &RunEnv, rec: &mut ResultRecord) -> Result<(), ErgoError> {
    let t = &env.cfg.tolerances;
    let p = env.cfg.experiment.equilibrium.as_ref().expect("validated");
    let sys = build_system(&env.cfg.system)?;
    if !contracts_or_report(&sys, rec) {
        return Ok(());
    }
    let res = converge_equilibrium(env, &sys, p.start_pos)?;
    rec.metric("lambda", sys.spectral.lambda);
    rec.metric("iterations", res.iterations as f64);
    rec.metric("final_distance", res.trace.last().copied().unwrap_or(f64::NAN));
    rec.flag("converged", res.converged);

    let reg = skew_transfer::regularity_check(&sys, &res.family)?;
    rec.metric("seminorm", reg.seminorm);
    rec.metric("regularity_bound", reg.bound);
    rec.metric("discretization_slack", reg.slack);
    rec.flag("regularity", reg.pass);

    let window = t.trace_window.min(res.trace.len());
    let fit = fit_geometric(&res.trace[res.trace.len() - window..]);
    match fit {
        Some((ratio, r2)) => {
            rec.metric("trace_ratio", ratio);
            rec.metric("trace_r2", r2);
            rec.flag("trace_geometric", ratio < 1.0 && r2 >= t.fit_r2_min);
        }
        None => rec.flag("trace_geometric", false),
    }

    if env.wants("csv") {
        measures::write_family_csv(&res.family, &env.out.join("family.csv"))?;
        rec.file("family.csv");
        let rows: Vec<Vec<String>> = res
            .trace
            .iter()
            .enumerate()
            .map(|(i, d)| vec![format!("{i}"), format!("{d}")])
            .collect();
        env.write_csv(rec, "trace.csv", &["iter", "distance"], &rows)?;
    }
    Ok(())
}

fn run_decay(env: &RunEnv, rec: &mut ResultRecord) -> Result<(), ErgoError> {
    let t = &env.cfg.tolerances;
    let p = env.cfg.experiment.decay.as_ref().expect("validated");
    let sys = build_system(&env.cfg.system)?;
    if !contracts_or_report(&sys, rec) {
        return Ok(());
    }
    let res = converge_equilibrium(env, &sys, 0.5)?;
    rec.flag("equilibrium_converged", res.converged);
    if !res.converged {
        return Ok(());
    }
    let psi = base_observable(&p.psi)?;
    let phi_obs = pair_observable(&p.phi_obs)?;
    let psi_f = |x: f64| psi(x);
    let phi_f = |x: f64, y: f64| phi_obs(x, y);

    let series = statistics::correlation(&sys, &res.family, &psi_f, &phi_f, p.n_max)?;
    rec.metric("fitted_rate", series.fitted_rate);
    rec.metric("fit_r2", series.fit_r2);
    rec.metric("fitted_amplitude", series.fitted_amplitude);
    rec.metric("usable_points", series.usable_points as f64);
    rec.metric("c0", series.c_values.first().copied().unwrap_or(f64::NAN));
    rec.flag("decay_rate", series.fitted_rate.is_finite() && series.fitted_rate < t.tau_max);
    rec.flag("decay_fit", series.fit_r2 >= t.fit_r2_min);

    let rows: Vec<Vec<String>> = series
        .n_values
        .iter()
        .zip(&series.c_values)
        .map(|(n, c)| vec![format!("{n}"), format!("{c}")])
        .collect();
    env.write_csv(rec, "correlation.csv", &["n", "c"], &rows)?;

    if p.mc_samples > 0 {
        let mc = statistics::correlation_monte_carlo(
            &sys,
            &res.family,
            &psi_f,
            &phi_f,
            p.mc_n_max,
            p.mc_samples,
            env.seed,
        )?;
        let mut max_gap_sigma = 0.0f64;
        let mut agree = true;
        for (i, n) in mc.n_values.iter().enumerate() {
            let gap = (series.c_values[*n] - mc.c_values[i]).abs();
            let se = mc.std_errors[i];
            if gap > t.mc_sigma * se + 1e-12 {
                agree = false;
            }
            if se > 0.0 {
                max_gap_sigma = max_gap_sigma.max(gap / se);
            }
        }
        rec.metric("mc_max_gap_sigma", max_gap_sigma);
        rec.flag("mc_agreement", agree);
        let rows: Vec<Vec<String>> = mc
            .n_values
            .iter()
            .zip(mc.c_values.iter().zip(&mc.std_errors))
            .map(|(n, (c, se))| vec![format!("{n}"), format!("{c}"), format!("{se}")])
            .collect();
        env.write_csv(rec, "correlation_mc.csv", &["n", "c", "stderr"], &rows)?;
    }
    Ok(())
}

fn run_clt(env: &RunEnv, rec: &mut ResultRecord) -> Result<(), ErgoError> {
    let t = &env.cfg.tolerances;
    let p = env.cfg.experiment.clt.as_ref().expect("validated");
    let sys = build_system(&env.cfg.system)?;
    if !contracts_or_report(&sys, rec) {
        return Ok(());
    }
    let res = converge_equilibrium(env, &sys, 0.5)?;
    rec.flag("equilibrium_converged", res.converged);
    if !res.converged {
        return Ok(());
    }
    let obs = pair_observable(&p.observable)?;
    let obs_f = |x: f64, y: f64| obs(x, y);
    let rep = statistics::clt_sample(
        &sys,
        &res.family,
        &obs_f,
        p.n,
        p.samples,
        env.seed,
        t.degenerate_sigma_sq,
    )?;
    rec.metric("sigma_sq", rep.sigma_sq_estimate);
    rec.metric("truncation_lag", rep.truncation_lag as f64);
    rec.metric("degenerate", if rep.degenerate { 1.0 } else { 0.0 });
    if rep.ks_statistic.is_finite() {
        rec.metric("ks_statistic", rep.ks_statistic);
        rec.metric("ks_critical", statistics::ks_critical(p.samples));
    }
    rec.flag("clt", rep.ks_pass);

    env.write_json(
        rec,
        "clt.json",
        &json!({
            "sample_count": rep.sample_count,
            "n": rep.n,
            "sigma_sq_estimate": rep.sigma_sq_estimate,
            "truncation_lag": rep.truncation_lag,
            "variance_floored": rep.variance_floored,
            "ks_statistic": if rep.ks_statistic.is_finite() { json!(rep.ks_statistic) } else { json!(null) },
            "ks_critical": statistics::ks_critical(p.samples),
            "ks_pass": rep.ks_pass,
            "degenerate": rep.degenerate,
            "degenerate_profile": rep.degenerate_profile,
            "seed": rep.seed,
        }),
    )?;
    Ok(())
}

fn run_stability(env: &RunEnv, rec: &mut ResultRecord) -> Result<(), ErgoError> {
    let t = &env.cfg.tolerances;
    let p = env.cfg.experiment.stability.as_ref().expect("validated");
    let fam = build_family(&env.cfg.system, p)?;
    let ccfg = stability::CurveConfig {
        tol: t.eq_tol,
        max_iter: t.eq_max_iter,
        jitter: t.monotone_jitter,
    };
    let curve = match stability::stability_curve(&fam, &ccfg) {
        Ok(c) => c,
        Err(stability::StabilityError::Hypothesis(msg)) => {
            rec.violation(msg);
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    rec.metric("c_hat", curve.c_hat);
    rec.metric("distance_max", curve.rows.first().map(|r| r.distance).unwrap_or(f64::NAN));
    rec.metric("distance_min", curve.rows.last().map(|r| r.distance).unwrap_or(f64::NAN));
    rec.flag("curve_monotone", curve.monotone_ok);
    rec.flag("curve_ratio", curve.ratio_ok);
    if env.wants("csv") {
        stability::write_curve_csv(&curve, &env.out.join("curve.csv"))?;
        rec.file("curve.csv");
    }

    if p.admissibility {
        let mut all_pass = true;
        let mut reports = Vec::new();
        for &delta in &fam.deltas {
            let a = stability::check_admissibility(&fam, delta)?;
            all_pass &= a.pass;
            reports.push(json!({
                "delta": a.delta,
                "r_delta": a.r_delta,
                "degree_ok": a.degree_ok,
                "preimage_displacement": a.preimage_displacement,
                "preimage_ok": a.preimage_ok,
                "fiber_displacement": a.fiber_displacement,
                "fiber_ok": a.fiber_ok,
                "jacobian_sum_diff": a.jacobian_sum_diff,
                "spectral_slack": a.spectral_slack,
                "jacobian_ok": a.jacobian_ok,
                "density_ratio": a.density_ratio,
                "pass": a.pass,
            }));
        }
        rec.flag("admissibility", all_pass);
        env.write_json(rec, "admissibility.json", &json!({ "family": fam.kind.label(), "reports": reports }))?;
    }

    if p.uniform_probe {
        let probe = match stability::uniform_constants_probe(&fam, &ccfg) {
            Ok(u) => u,
            Err(stability::StabilityError::Hypothesis(msg)) => {
                rec.violation(msg);
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        };
        rec.metric("beta_max", probe.beta_max);
        rec.metric("b_uniform", probe.b_u);
        rec.metric("seminorm_max", probe.seminorm_max);
        rec.flag("uniform_beta", probe.beta_uniform_ok);
        rec.flag("uniform_holder", probe.holder_ok);
        let rows: Vec<serde_json::Value> = probe
            .rows
            .iter()
            .map(|r| {
                json!({
                    "delta": r.delta,
                    "beta": r.beta,
                    "d_const": r.d_const,
                    "ly_beta": r.ly_beta,
                    "ly_c": r.ly_c,
                    "ly_holds": r.ly_holds,
                    "seminorm": r.seminorm,
                })
            })
            .collect();
        env.write_json(
            rec,
            "uniform.json",
            &json!({
                "rows": rows,
                "beta_max": probe.beta_max,
                "d_max": probe.d_max,
                "b_uniform": probe.b_u,
                "slack": probe.slack,
                "pass": probe.pass,
            }),
        )?;
    }
    Ok(())
}

fn run_verify(env: &RunEnv, rec: &mut ResultRecord) -> Result<(), ErgoError> {
    let t = &env.cfg.tolerances;
    let p = env.cfg.experiment.verify.as_ref().expect("validated");
    let sys_cfg = &env.cfg.system;
    let base = build_base(&sys_cfg.base)?;
    let phi = build_potential(&sys_cfg.potential, &base, sys_cfg.zeta)?;

    let structure = base.check_structure(512);
    rec.flag("f1", structure.f1);
    rec.flag("f2", structure.f2);
    rec.flag("P2", structure.p2());
    if !structure.f1 {
        rec.violation("(f1) expansion bounds fail off the bad region");
    }
    if !structure.f2 {
        rec.violation(format!(
            "(f2) covering count q = {} is not below the degree {}",
            structure.q,
            base.degree()
        ));
    }
    if !structure.p2() {
        rec.violation("(P2) branch domains do not partition onto the space");
    }
    for v in &structure.violations {
        rec.violation(format!("structure: {v}"));
    }

    let pm = potentials::check_pm_membership(&phi);
    rec.flag("f3_1", pm.f31);
    rec.flag("f3_2", pm.f32);
    rec.metric("oscillation", pm.oscillation);
    rec.metric("f3_1_margin", pm.epsilon_phi - pm.oscillation);
    rec.metric("f3_2_margin", pm.f32_bound - pm.holder_exp);
    if !pm.f31 {
        rec.violation(format!(
            "(f3.1) potential oscillation {} is not below epsilon_phi = {}",
            pm.oscillation, pm.epsilon_phi
        ));
    }
    if !pm.f32 {
        rec.violation(format!(
            "(f3.2) Holder constant of e^phi = {} is not below {}",
            pm.holder_exp, pm.f32_bound
        ));
    }

    let mut gap_json = json!(null);
    if structure.f2 {
        match potentials::gap_condition_value(
            base.degree(),
            structure.q,
            base.sigma,
            base.l_max.max(1.0),
            sys_cfg.zeta,
            phi.epsilon_phi,
        ) {
            Ok(v) => {
                rec.metric("gap_value", v);
                rec.metric("gap_margin", 1.0 - v);
                rec.flag("gap", v < 1.0);
                if v >= 1.0 {
                    rec.violation(format!("gap condition value {v} is not below 1"));
                }
                gap_json = json!({ "value": v, "margin": 1.0 - v, "pass": v < 1.0 });
            }
            Err(e) => {
                rec.flag("gap", false);
                rec.violation(format!("gap condition not evaluable: {e}"));
            }
        }
    }

    let mut fiber_json = json!(null);
    let mut class_s_json = json!(null);
    if let Some(fc) = &sys_cfg.fiber {
        let fiber = build_fiber(fc, base.degree())?;
        let fr = skew_transfer::check_fiber_hypotheses(&base, &fiber, sys_cfg.zeta, p.fiber_grid)?;
        rec.flag("H1", fr.contraction_ok);
        rec.flag("H2", fr.base_ok);
        rec.metric("fiber_contraction_ratio", fr.contraction_ratio);
        rec.metric("fiber_base_ratio", fr.base_ratio);
        if !fr.contraction_ok {
            rec.violation(format!(
                "(H1) fiber contraction ratio {} exceeds alpha = {}",
                fr.contraction_ratio, fiber.alpha
            ));
        }
        if !fr.base_ok {
            rec.violation(format!(
                "(H2) fiber base-regularity ratio {} exceeds |G|_zeta = {}",
                fr.base_ratio, fiber.g_holder
            ));
        }
        let beta = (fiber.alpha * base.l_max).powf(sys_cfg.zeta);
        rec.metric("beta", beta);
        rec.flag("contraction", beta < 1.0);
        if beta >= 1.0 {
            rec.violation(format!("(alpha L)^zeta = {beta} is not below 1"));
        }
        fiber_json = json!({
            "contraction_ratio": fr.contraction_ratio,
            "base_ratio": fr.base_ratio,
            "H1": fr.contraction_ok,
            "H2": fr.base_ok,
            "beta": beta,
        });

        if let Some(y0) = p.class_s_y0 {
            let residual = skew_transfer::invariant_fiber_residual(&fiber, y0, 1024);
            let ok = residual <= t.class_s_residual;
            rec.metric("class_s_residual", residual);
            rec.flag("class_s", ok);
            if !ok {
                rec.violation(format!(
                    "class-S: G(x, {y0}) deviates from {y0} by {residual}"
                ));
            }
            class_s_json = json!({ "y0": y0, "residual": residual, "pass": ok });
        }
    } else if p.class_s_y0.is_some() {
        return Err(ErgoError::Config(
            "verify.class_s_y0 needs a [system.fiber] block".into(),
        ));
    }

    let mut planar_json = json!(null);
    if let Some(q) = &p.planar {
        let margin = skew_transfer::planar_expansion_margin(q.dy_g, q.dx_g);
        rec.metric("planar_lemma_margin", margin);
        rec.flag("planar_lemma", margin > 0.0);
        if margin <= 0.0 {
            rec.violation(format!(
                "planar expansion lemma fails: |dy_g| = {} is not above 1 + |dx_g|/3 = {}",
                q.dy_g.abs(),
                1.0 + q.dx_g.abs() / 3.0
            ));
        }
        let mut gap_value = json!(null);
        if q.q >= q.deg {
            rec.flag("planar_f2", false);
            rec.violation(format!(
                "(f2) planar checker: covering count q = {} is not below the degree {}",
                q.q, q.deg
            ));
        } else {
            rec.flag("planar_f2", true);
            let v = potentials::gap_condition_value(
                q.deg,
                q.q,
                q.sigma,
                q.l,
                sys_cfg.zeta,
                q.epsilon_phi,
            )?;
            rec.metric("planar_gap_value", v);
            rec.flag("planar_gap", v < 1.0);
            if v >= 1.0 {
                rec.violation(format!("planar gap condition value {v} is not below 1"));
            }
            gap_value = json!(v);
        }
        planar_json = json!({
            "dy_g": q.dy_g,
            "dx_g": q.dx_g,
            "lemma_margin": margin,
            "lemma_pass": margin > 0.0,
            "gap_value": gap_value,
        });
    }

    env.write_json(
        rec,
        "dossier.json",
        &json!({
            "structure": {
                "f1": structure.f1,
                "f2": structure.f2,
                "P2": structure.p2(),
                "q": structure.q,
                "degree": base.degree(),
                "sigma": base.sigma,
                "l_max": base.l_max,
                "violations": structure.violations,
            },
            "potential": {
                "f3_1": pm.f31,
                "f3_2": pm.f32,
                "oscillation": pm.oscillation,
                "holder_exp": pm.holder_exp,
                "f3_2_bound": pm.f32_bound,
                "epsilon_phi": pm.epsilon_phi,
            },
            "gap": gap_json,
            "fiber": fiber_json,
            "class_s": class_s_json,
            "planar": planar_json,
            "violations": rec.violations,
        }),
    )?;
    Ok(())
}

fn run_cohomology(env: &RunEnv, rec: &mut ResultRecord) -> Result<(), ErgoError> {
    let p = env.cfg.experiment.cohomology.as_ref().expect("validated");
    let sys = build_system(&env.cfg.system)?;
    let obs = pair_observable(&p.phi_bar)?;
    let obs_f = |x: f64, y: f64| obs(x, y);
    let rep = match statistics::birkhoff_cohomology_check(
        &sys,
        &obs_f,
        p.y0,
        p.orbit_count,
        &p.n_values,
        env.seed,
    ) {
        Ok(r) => r,
        Err(StatsError::Hypothesis(msg)) => {
            rec.violation(msg);
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    rec.metric("c_fitted", rep.c_fitted);
    rec.metric("fiber_residual", rep.fiber_residual);
    rec.metric("max_delta_final", rep.max_delta.last().copied().unwrap_or(f64::NAN));
    rec.flag("decade_decay", rep.decade_decay_ok);

    let rows: Vec<Vec<String>> = rep
        .n_values
        .iter()
        .zip(&rep.max_delta)
        .map(|(n, d)| {
            vec![format!("{n}"), format!("{d}"), format!("{}", rep.c_fitted / *n as f64)]
        })
        .collect();
    env.write_csv(rec, "cohomology.csv", &["n", "max_delta", "fitted_bound"], &rows)?;
    env.write_json(
        rec,
        "cohomology.json",
        &json!({
            "n_values": rep.n_values,
            "max_delta": rep.max_delta,
            "per_orbit": rep.per_orbit,
            "c_fitted": rep.c_fitted,
            "decade_decay_ok": rep.decade_decay_ok,
            "fiber_residual": rep.fiber_residual,
            "starts": rep.starts,
            "seed": rep.seed,
        }),
    )?;
    Ok(())
}
