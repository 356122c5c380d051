//! Transport formulation of the dual norm, used as the oracle's exact route.
//!
//! Splitting a signed measure into positive part (sources, masses s_p) and
//! negative part (sinks, masses t_q), the norm equals the cheapest way to
//! move or absorb all mass when moving p to q costs ρ(p, q), and creating or
//! destroying a unit costs 1 (the test-function bound). Because ρ is a
//! metric capped at 2 = 1 + 1, no rerouting through other atoms or through
//! the boundary helps, so plans between unlike-sign atoms suffice:
//!
//!   ‖μ‖ = S + T − max Σ (2 − ρ_pq) π_pq,  row sums ≤ s, column sums ≤ t.
//!
//! The inner program is a capacitated assignment solved by the same simplex
//! that backs the cutting-plane route, but on a different formulation; the
//! two routes share no active-set logic.

use crate::{rho, AtomicMeasure};

pub fn transport_value(mu: &AtomicMeasure, zeta: f64) -> f64 {
    let mut sources: Vec<(f64, f64)> = Vec::new();
    let mut sinks: Vec<(f64, f64)> = Vec::new();
    for &(p, w) in mu.atoms() {
        if w > 0.0 {
            sources.push((p, w));
        } else if w < 0.0 {
            sinks.push((p, -w));
        }
    }
    let s_total: f64 = sources.iter().map(|&(_, w)| w).sum();
    let t_total: f64 = sinks.iter().map(|&(_, w)| w).sum();
    let (ns, nt) = (sources.len(), sinks.len());
    if ns == 0 || nt == 0 {
        return s_total + t_total;
    }
    let nv = ns * nt;
    let m = ns + nt;
    let mut c = vec![0.0f64; nv];
    let mut a = vec![0.0f64; m * nv];
    let mut b = vec![0.0f64; m];
    for (p, &(xp, sp)) in sources.iter().enumerate() {
        b[p] = sp;
        for (q, &(xq, _)) in sinks.iter().enumerate() {
            let var = p * nt + q;
            c[var] = 2.0 - rho(xp, xq, zeta);
            a[p * nv + var] = 1.0;
            a[(ns + q) * nv + var] = 1.0;
        }
    }
    for (q, &(_, tq)) in sinks.iter().enumerate() {
        b[ns + q] = tq;
    }
    let pi = crate::lp::simplex_max(&c, &a, &b, m, nv);
    let saved: f64 = pi.iter().zip(&c).map(|(x, c)| x * c).sum();
    s_total + t_total - saved
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matched_pair_costs_distance() {
        let mu = AtomicMeasure::new(vec![(0.2, 1.0), (0.4, -1.0)]).unwrap();
        assert!((transport_value(&mu, 1.0) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn split_sources_one_sink() {
        let mu = AtomicMeasure::new(vec![(0.0, 0.5), (1.0, 0.5), (0.5, -1.0)]).unwrap();
        assert!((transport_value(&mu, 1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unmatched_mass_pays_unit_rate() {
        let mu = AtomicMeasure::new(vec![(0.3, -1.0)]).unwrap();
        assert!((transport_value(&mu, 1.0) - 1.0).abs() < 1e-12);
        let nu = AtomicMeasure::new(vec![(0.1, 2.0)]).unwrap();
        assert!((transport_value(&nu, 0.5) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn far_pair_prefers_absorption() {
        // ρ capped at 2 equals destroy + create, so the value is just |μ|.
        let mu = AtomicMeasure::new(vec![(0.0, 1.0), (1.0, -1.0)]).unwrap();
        let v = transport_value(&mu, 0.25);
        assert!((v - 1.0f64.powf(0.25).min(2.0)).abs() < 1e-12);
    }
}
