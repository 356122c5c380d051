//! Exact solvers for the dual-norm linear program, plus the subgradient
//! ascent used by the verification oracle's lower-bound phase.

use crate::{rho, AtomicMeasure};

/// ζ = 1: adjacent constraints |u_{k+1} − u_k| ≤ gap imply every pair
/// constraint (distances add along the line), so the program is a chain.
/// Sweep left to right, carrying V_k(u) = best objective of the first k
/// atoms given u_k = u. Each V_k is concave piecewise linear on [−1,1]:
/// the window max over |v − u| ≤ gap spreads the peak into a plateau, the
/// box restricts the domain, and the new atom adds a linear term.
pub fn chain_max(pos: &[f64], w: &[f64]) -> f64 {
    let n = pos.len();
    // V as vertices (x, value), x ascending, concave.
    let mut v: Vec<(f64, f64)> = vec![(-1.0, -w[0]), (1.0, w[0])];
    for k in 1..n {
        let gap = pos[k] - pos[k - 1];
        v = dilate(&v, gap);
        v = restrict(&v, -1.0, 1.0);
        for p in &mut v {
            p.1 += w[k] * p.0;
        }
        v = concave_hull(v);
    }
    v.iter().map(|&(_, val)| val).fold(f64::NEG_INFINITY, f64::max)
}

/// Window max over radius g: the rising part slides left, the falling part
/// slides right, and the peak becomes a plateau of width 2g.
fn dilate(v: &[(f64, f64)], g: f64) -> Vec<(f64, f64)> {
    let mut lo = 0;
    for (i, p) in v.iter().enumerate() {
        if p.1 > v[lo].1 {
            lo = i;
        }
    }
    let mut hi = lo;
    while hi + 1 < v.len() && v[hi + 1].1 == v[lo].1 {
        hi += 1;
    }
    let peak = v[lo].1;
    let mut out = Vec::with_capacity(v.len() + 2);
    out.extend(v[..=lo].iter().map(|&(x, val)| (x - g, val)));
    out.push((v[lo].0 - g, peak));
    out.push((v[hi].0 + g, peak));
    out.extend(v[hi..].iter().map(|&(x, val)| (x + g, val)));
    concave_hull(out)
}

fn eval_pl(v: &[(f64, f64)], x: f64) -> f64 {
    if x <= v[0].0 {
        return v[0].1;
    }
    if x >= v[v.len() - 1].0 {
        return v[v.len() - 1].1;
    }
    let mut i = match v.binary_search_by(|p| p.0.partial_cmp(&x).unwrap()) {
        Ok(i) => return v[i].1,
        Err(i) => i,
    };
    if i == 0 {
        i = 1;
    }
    let (x0, y0) = v[i - 1];
    let (x1, y1) = v[i];
    let t = (x - x0) / (x1 - x0);
    y0 * (1.0 - t) + y1 * t
}

fn restrict(v: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut out = vec![(lo, eval_pl(v, lo))];
    out.extend(v.iter().filter(|p| p.0 > lo && p.0 < hi).cloned());
    out.push((hi, eval_pl(v, hi)));
    out
}

/// Upper concave hull of a vertex list; collapses duplicates and collinear
/// runs, keeping the function intact.
fn concave_hull(mut p: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    p.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut q: Vec<(f64, f64)> = Vec::with_capacity(p.len());
    for (x, y) in p {
        match q.last_mut() {
            Some(last) if last.0 == x => last.1 = last.1.max(y),
            _ => q.push((x, y)),
        }
    }
    let mut h: Vec<(f64, f64)> = Vec::with_capacity(q.len());
    for p in q {
        while h.len() >= 2 {
            let (x1, y1) = h[h.len() - 2];
            let (x2, y2) = h[h.len() - 1];
            if (x2 - x1) * (p.1 - y1) - (p.0 - x1) * (y2 - y1) >= -1e-15 {
                h.pop();
            } else {
                break;
            }
        }
        h.push(p);
    }
    h
}

/// ζ < 1: every pair may bind. Start from the adjacent pairs, solve the
/// relaxation with a dense tableau simplex, then add the worst violated pair
/// constraints and repeat until the full program is satisfied. Variables are
/// shifted to v = u + 1 ∈ [0,2] so the all-slack basis is feasible.
pub fn cutting_plane_max(pos: &[f64], w: &[f64], zeta: f64) -> f64 {
    let n = pos.len();
    if n == 1 {
        return w[0].abs();
    }
    let mut working: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    for _round in 0..200 {
        let u = solve_working_set(pos, w, zeta, &working);
        let mut violations: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let excess = (u[i] - u[j]).abs() - rho(pos[i], pos[j], zeta);
                if excess > 1e-10 {
                    violations.push((excess, i, j));
                }
            }
        }
        if violations.is_empty() {
            return u.iter().zip(w).map(|(u, w)| u * w).sum();
        }
        violations.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for &(_, i, j) in violations.iter().take(n.max(4)) {
            if !working.contains(&(i, j)) {
                working.push((i, j));
            }
        }
    }
    panic!("internal LP bug: cutting planes did not settle");
}

fn solve_working_set(pos: &[f64], w: &[f64], zeta: f64, pairs: &[(usize, usize)]) -> Vec<f64> {
    let n = pos.len();
    let m = n + 2 * pairs.len();
    // Rows: v_i <= 2, then v_i − v_j <= ρ and v_j − v_i <= ρ per pair.
    let mut a = vec![0.0f64; m * n];
    let mut b = vec![0.0f64; m];
    for i in 0..n {
        a[i * n + i] = 1.0;
        b[i] = 2.0;
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let r = rho(pos[i], pos[j], zeta);
        let row = n + 2 * k;
        a[row * n + i] = 1.0;
        a[row * n + j] = -1.0;
        b[row] = r;
        a[(row + 1) * n + i] = -1.0;
        a[(row + 1) * n + j] = 1.0;
        b[row + 1] = r;
    }
    let v = simplex_max(w, &a, &b, m, n);
    v.iter().map(|x| x - 1.0).collect()
}

/// Dense tableau primal simplex for max c·x, Ax ≤ b, x ≥ 0, b ≥ 0.
/// Dantzig pricing with a Bland fallback for stalls.
pub(crate) fn simplex_max(c: &[f64], a: &[f64], b: &[f64], m: usize, n: usize) -> Vec<f64> {
    let cols = n + m + 1;
    let mut t = vec![0.0f64; (m + 1) * cols];
    for r in 0..m {
        t[r * cols..r * cols + n].copy_from_slice(&a[r * n..(r + 1) * n]);
        t[r * cols + n + r] = 1.0;
        t[r * cols + cols - 1] = b[r];
    }
    for j in 0..n {
        t[m * cols + j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    for it in 0..200_000usize {
        let bland = it > 5_000;
        let obj_row = &t[m * cols..m * cols + n + m];
        let piv_col = if bland {
            obj_row.iter().position(|&r| r < -1e-10)
        } else {
            let (j, &r) = obj_row
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            (r < -1e-10).then_some(j)
        };
        let Some(piv_col) = piv_col else {
            let mut x = vec![0.0f64; n];
            for (r, &bi) in basis.iter().enumerate() {
                if bi < n {
                    x[bi] = t[r * cols + cols - 1];
                }
            }
            return x;
        };
        let mut piv_row: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..m {
            let coef = t[r * cols + piv_col];
            if coef > 1e-12 {
                let ratio = t[r * cols + cols - 1] / coef;
                let better = ratio < best - 1e-15
                    || (ratio < best + 1e-15
                        && piv_row.is_some_and(|pr| bland && basis[r] < basis[pr]));
                if better {
                    best = ratio;
                    piv_row = Some(r);
                }
            }
        }
        let piv_row = piv_row.expect("internal LP bug: unbounded program");
        let piv = t[piv_row * cols + piv_col];
        for j in 0..cols {
            t[piv_row * cols + j] /= piv;
        }
        for r in 0..=m {
            if r == piv_row {
                continue;
            }
            let f = t[r * cols + piv_col];
            if f != 0.0 {
                for j in 0..cols {
                    t[r * cols + j] -= f * t[piv_row * cols + j];
                }
            }
        }
        basis[piv_row] = piv_col;
    }
    panic!("internal LP bug: simplex iteration cap");
}

/// Subgradient ascent over test-function values on the union of a uniform
/// grid and the atom positions, projecting back by cyclic pairwise splits,
/// then certifying via the Lipschitz lower envelope (which only lowers
/// values, so the certified objective is a true lower bound).
pub fn subgradient_lower_bound(
    mu: &AtomicMeasure,
    zeta: f64,
    grid: usize,
    iterations: usize,
) -> f64 {
    let mut pts: Vec<f64> = (0..grid).map(|i| (i as f64 + 0.5) / grid as f64).collect();
    pts.extend(mu.atoms().iter().map(|&(p, _)| p));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let np = pts.len();
    let atom_idx: Vec<(usize, f64)> = mu
        .atoms()
        .iter()
        .map(|&(p, w)| (pts.binary_search_by(|q| q.partial_cmp(&p).unwrap()).unwrap(), w))
        .collect();
    let mut d = vec![0.0f64; np * np];
    for i in 0..np {
        for j in 0..np {
            d[i * np + j] = rho(pts[i], pts[j], zeta);
        }
    }
    let mut g = vec![0.0f64; np];
    for &(i, w) in &atom_idx {
        g[i] += w;
    }
    let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let mut u = vec![0.0f64; np];
    let mut best = f64::NEG_INFINITY;
    for t in 1..=iterations {
        let step = 1.0 / (t as f64).sqrt() / gnorm;
        for i in 0..np {
            u[i] += step * g[i];
        }
        for _ in 0..4 {
            let mut clean = true;
            for i in 0..np {
                for j in (i + 1)..np {
                    let excess = (u[i] - u[j]).abs() - d[i * np + j];
                    if excess > 1e-15 {
                        let half = 0.5 * excess;
                        if u[i] > u[j] {
                            u[i] -= half;
                            u[j] += half;
                        } else {
                            u[i] += half;
                            u[j] -= half;
                        }
                        clean = false;
                    }
                }
            }
            for x in &mut u {
                *x = x.clamp(-1.0, 1.0);
            }
            if clean {
                break;
            }
        }
        // Lipschitz lower envelope: feasible for every pair, at or below u.
        let repaired: Vec<f64> = (0..np)
            .map(|i| {
                (0..np)
                    .map(|j| u[j] + d[i * np + j])
                    .fold(f64::INFINITY, f64::min)
                    .clamp(-1.0, 1.0)
            })
            .collect();
        let val: f64 = atom_idx.iter().map(|&(i, w)| w * repaired[i]).sum();
        best = best.max(val);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_matches_hand_values() {
        assert!((chain_max(&[0.2, 0.6], &[1.0, -1.0]) - 0.4).abs() < 1e-12);
        assert!((chain_max(&[0.5], &[-2.0]) - 2.0).abs() < 1e-12);
        assert!((chain_max(&[0.0, 0.5, 1.0], &[0.5, -1.0, 0.5]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cutting_plane_matches_chain_at_unit_exponent() {
        // ζ = 1 runs through the chain in production; the simplex must agree.
        let pos = [0.05, 0.3, 0.31, 0.7, 0.99];
        let w = [1.0, -2.0, 0.7, 0.4, -0.6];
        let a = chain_max(&pos, &w);
        let b = cutting_plane_max(&pos, &w, 1.0);
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn all_positive_weights_saturate() {
        let pos = [0.1, 0.5, 0.9];
        let w = [1.0, 2.0, 0.5];
        assert!((chain_max(&pos, &w) - 3.5).abs() < 1e-12);
        assert!((cutting_plane_max(&pos, &w, 0.5) - 3.5).abs() < 1e-9);
    }
}
