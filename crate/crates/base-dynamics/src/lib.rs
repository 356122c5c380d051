//! Piecewise full-branch maps of the unit interval (or circle).
//!
//! A map is a finite family of monotone branches whose domains partition
//! [0,1] up to endpoints and whose images each cover the whole space. The
//! structural hypotheses the operator layer depends on live here too: local
//! inverse-branch contraction outside a designated bad region, and a covering
//! count for that region strictly below the degree.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub type PointFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Tolerance for inverse-branch root finding and endpoint checks.
pub const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;

/// Slack accepted on iterated points before `eval` treats them as out of range.
const INPUT_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inverse root finding failed on branch {branch}: {detail}")]
    RootFinding { branch: usize, detail: String },
}

enum Inverse {
    Closed(PointFn),
    /// Bisect the forward map over the branch domain. Requires the branch to
    /// be monotone there; builders that use this guarantee it.
    Bisect,
}

/// One monotone branch f restricted to an injectivity domain.
pub struct Branch {
    /// Domain [a, b]; branches own their left endpoint, the last branch owns both.
    pub domain: (f64, f64),
    forward: PointFn,
    inverse: Inverse,
    /// Local inverse Lipschitz constant L(x) = 1/|f'(x)|, supplied analytically.
    inv_lipschitz: PointFn,
    increasing: bool,
}

impl Branch {
    pub fn with_closed_inverse(
        domain: (f64, f64),
        forward: PointFn,
        inverse: PointFn,
        inv_lipschitz: PointFn,
        increasing: bool,
    ) -> Self {
        Branch { domain, forward, inverse: Inverse::Closed(inverse), inv_lipschitz, increasing }
    }

    pub fn with_bisection_inverse(
        domain: (f64, f64),
        forward: PointFn,
        inv_lipschitz: PointFn,
        increasing: bool,
    ) -> Self {
        Branch { domain, forward, inverse: Inverse::Bisect, inv_lipschitz, increasing }
    }

    pub fn forward(&self, x: f64) -> f64 {
        (self.forward)(x)
    }

    pub fn inv_lipschitz_at(&self, x: f64) -> f64 {
        (self.inv_lipschitz)(x)
    }

    /// Shared handle to the analytic L(x) evaluator, for derived potentials.
    pub fn inv_lipschitz_arc(&self) -> PointFn {
        Arc::clone(&self.inv_lipschitz)
    }

    fn invert(&self, y: f64, index: usize) -> Result<f64, MapError> {
        match &self.inverse {
            Inverse::Closed(inv) => Ok(inv(y)),
            Inverse::Bisect => self.bisect(y, index),
        }
    }

    fn bisect(&self, y: f64, index: usize) -> Result<f64, MapError> {
        let (mut lo, mut hi) = self.domain;
        let (flo, fhi) = ((self.forward)(lo), (self.forward)(hi));
        let (vlo, vhi) = if self.increasing { (flo, fhi) } else { (fhi, flo) };
        if !self.increasing {
            std::mem::swap(&mut lo, &mut hi);
        }
        // lo now maps near the low end of the image. Accept y within slack of it.
        if y < vlo - INPUT_SLACK || y > vhi + INPUT_SLACK {
            return Err(MapError::RootFinding {
                branch: index,
                detail: format!("target {y} outside branch image [{vlo}, {vhi}]"),
            });
        }
        let y = y.clamp(vlo, vhi);
        for _ in 0..ROOT_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if (hi - lo).abs() < ROOT_TOL {
                return Ok(mid);
            }
            if (self.forward)(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

impl fmt::Debug for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Branch")
            .field("domain", &self.domain)
            .field("increasing", &self.increasing)
            .finish()
    }
}

/// Structural report from `check_structure`. `q` counts branch domains that
/// meet the bad region; the partition and surjectivity flags together make up
/// the full-branch hypothesis.
#[derive(Debug, Clone)]
pub struct StructureReport {
    /// Contraction hypothesis: L(x) bounded by `l_max` on the bad region,
    /// strictly below 1/sigma off it.
    pub f1: bool,
    /// Covering hypothesis: q < degree.
    pub f2: bool,
    /// Branch domains partition [0,1] up to endpoints.
    pub partition: bool,
    /// Every branch maps its domain onto the whole space.
    pub surjective: bool,
    pub q: usize,
    pub violations: Vec<String>,
}

impl StructureReport {
    pub fn p2(&self) -> bool {
        self.partition && self.surjective
    }

    pub fn all_pass(&self) -> bool {
        self.f1 && self.f2 && self.p2()
    }
}

/// A piecewise monotone full-branch map with its structural data.
pub struct IntervalMap {
    pub branches: Vec<Branch>,
    /// Interpret [0,1] with endpoints glued; distances and preimages wrap.
    pub circle: bool,
    /// Bad region where expansion may fail, as a closed interval. `None` means
    /// the map is uniformly expanding.
    pub bad_region: Option<(f64, f64)>,
    /// Uniform expansion constant outside the bad region: L(x) < 1/sigma there.
    pub sigma: f64,
    /// Global inverse Lipschitz bound, >= 1 by convention.
    pub l_max: f64,
    pub name: String,
}

impl fmt::Debug for IntervalMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IntervalMap")
            .field("name", &self.name)
            .field("degree", &self.degree())
            .field("circle", &self.circle)
            .field("sigma", &self.sigma)
            .field("l_max", &self.l_max)
            .finish()
    }
}

impl IntervalMap {
    pub fn degree(&self) -> usize {
        self.branches.len()
    }

    /// Index of the branch whose domain contains x. Branches own their left
    /// endpoint; the last branch also owns x = 1.
    pub fn branch_of(&self, x: f64) -> usize {
        let x = checked_point(x);
        for (i, b) in self.branches.iter().enumerate() {
            if x < b.domain.1 {
                return i;
            }
        }
        self.branches.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = checked_point(x);
        let y = self.branches[self.branch_of(x)].forward(x);
        if self.circle {
            wrap_unit(y)
        } else {
            y.clamp(0.0, 1.0)
        }
    }

    /// Local inverse Lipschitz constant at x, taken on the branch through x.
    pub fn inv_lipschitz(&self, x: f64) -> f64 {
        let x = checked_point(x);
        self.branches[self.branch_of(x)].inv_lipschitz_at(x)
    }

    /// All degree-many preimages of y, ordered by branch index.
    pub fn inverse_branches(&self, y: f64) -> Result<Vec<f64>, MapError> {
        let y = checked_point(y);
        let mut pre = Vec::with_capacity(self.branches.len());
        for (i, b) in self.branches.iter().enumerate() {
            let x = b.invert(y, i)?;
            pre.push(x.clamp(b.domain.0, b.domain.1));
        }
        Ok(pre)
    }

    /// Distance on the base: circle metric when the endpoints are glued.
    pub fn base_distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        if self.circle {
            d.min(1.0 - d)
        } else {
            d
        }
    }

    pub fn in_bad_region(&self, x: f64) -> bool {
        match self.bad_region {
            Some((lo, hi)) => x >= lo && x <= hi,
            None => false,
        }
    }

    /// Sample the structural hypotheses on `sample_count` points per check.
    pub fn check_structure(&self, sample_count: usize) -> StructureReport {
        let mut violations = Vec::new();

        // Partition: consecutive domains must abut and the union cover [0,1].
        let mut partition = true;
        let first = self.branches.first().expect("map has branches");
        let last = self.branches.last().expect("map has branches");
        if first.domain.0.abs() > ROOT_TOL || (last.domain.1 - 1.0).abs() > ROOT_TOL {
            partition = false;
            violations.push("branch domains do not span [0,1]".into());
        }
        for w in self.branches.windows(2) {
            if (w[0].domain.1 - w[1].domain.0).abs() > ROOT_TOL {
                partition = false;
                violations.push(format!(
                    "gap or overlap between domains ending {} and starting {}",
                    w[0].domain.1, w[1].domain.0
                ));
            }
        }

        // Surjectivity. Monotone branches on the interval are pinned by their
        // endpoint images; circle branches are checked by inverting a grid.
        let mut surjective = true;
        if self.circle {
            let n = (sample_count / self.degree()).max(16);
            'grid: for j in 0..n {
                let y = (j as f64 + 0.5) / n as f64;
                match self.inverse_branches(y) {
                    Ok(pre) => {
                        for (i, &x) in pre.iter().enumerate() {
                            let err = self.base_distance(self.eval(x), y);
                            if err > 1e-9 {
                                surjective = false;
                                violations.push(format!(
                                    "branch {i} misses {y} by {err:.2e}"
                                ));
                                break 'grid;
                            }
                        }
                    }
                    Err(e) => {
                        surjective = false;
                        violations.push(format!("no preimage of {y}: {e}"));
                        break 'grid;
                    }
                }
            }
        } else {
            for (i, b) in self.branches.iter().enumerate() {
                let (fa, fb) = (b.forward(b.domain.0), b.forward(b.domain.1));
                let (lo, hi) = if b.increasing { (fa, fb) } else { (fb, fa) };
                if lo.abs() > 1e-9 || (hi - 1.0).abs() > 1e-9 {
                    surjective = false;
                    violations.push(format!(
                        "branch {i} image [{lo:.3e}, {hi:.6}] is not [0,1]"
                    ));
                }
            }
        }

        // Contraction: L(x) <= l_max on the bad region, L(x) < 1/sigma off it.
        let mut f1 = true;
        let inv_sigma = 1.0 / self.sigma;
        for j in 0..sample_count {
            let x = (j as f64 + 0.5) / sample_count as f64;
            let l = self.inv_lipschitz(x);
            if self.in_bad_region(x) {
                if l > self.l_max + ROOT_TOL {
                    f1 = false;
                    violations.push(format!("L({x}) = {l} exceeds l_max = {}", self.l_max));
                    break;
                }
            } else if l >= inv_sigma {
                f1 = false;
                violations.push(format!("L({x}) = {l} not below 1/sigma = {inv_sigma}"));
                break;
            }
        }

        // Covering count: branch domains whose interior meets the bad region.
        let q = match self.bad_region {
            Some((lo, hi)) => self
                .branches
                .iter()
                .filter(|b| b.domain.0 < hi && b.domain.1 > lo)
                .count(),
            None => 0,
        };
        let f2 = q < self.degree();
        if !f2 {
            violations.push(format!("bad region meets all {} branches", self.degree()));
        }

        StructureReport { f1, f2, partition, surjective, q, violations }
    }
}

fn checked_point(x: f64) -> f64 {
    assert!(
        (-INPUT_SLACK..=1.0 + INPUT_SLACK).contains(&x),
        "invalid input: point {x} outside [0,1]"
    );
    x.clamp(0.0, 1.0)
}

fn wrap_unit(y: f64) -> f64 {
    let w = y - y.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Margin keeping the sampled strict inequality L(x) < 1/sigma true at the
/// points where the analytic constants coincide.
const SIGMA_MARGIN: f64 = 1.0 - 1e-6;

/// Angle-doubling map on the circle.
pub fn doubling() -> IntervalMap {
    l_adic(2)
}

/// x -> l x mod 1 on the circle.
pub fn l_adic(l: usize) -> IntervalMap {
    l_adic_shifted(l, 0.0)
}

fn l_adic_checked(l: usize) -> Result<IntervalMap, MapError> {
    if l < 2 {
        return Err(MapError::InvalidParameter(format!("l-adic map needs l >= 2, got {l}")));
    }
    Ok(l_adic(l))
}

/// x -> l x + shift mod 1; the shift is how the stability experiments perturb
/// the base while keeping the branch combinatorics fixed.
pub fn l_adic_shifted(l: usize, shift: f64) -> IntervalMap {
    assert!(l >= 2, "l-adic map needs l >= 2");
    let lf = l as f64;
    let branches = (0..l)
        .map(|k| {
            let kf = k as f64;
            Branch::with_closed_inverse(
                (kf / lf, (kf + 1.0) / lf),
                Arc::new(move |x: f64| lf * x + shift),
                Arc::new(move |y: f64| {
                    let base = wrap_unit(y - shift);
                    (base + kf) / lf
                }),
                Arc::new(move |_| 1.0 / lf),
                true,
            )
        })
        .collect();
    IntervalMap {
        branches,
        circle: true,
        bad_region: None,
        sigma: lf * SIGMA_MARGIN,
        l_max: 1.0,
        name: if shift == 0.0 {
            format!("{l}-adic")
        } else {
            format!("{l}-adic+{shift}")
        },
    }
}

/// Interval map with an indifferent fixed point at 0:
/// x(1 + 2^a x^a) on [0, 1/2], 2x - 1 on (1/2, 1].
pub fn manneville_pomeau(alpha: f64) -> Result<IntervalMap, MapError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MapError::InvalidParameter(format!(
            "intermittency exponent must lie in (0,1), got {alpha}"
        )));
    }
    let c = 2f64.powf(alpha);
    // Bad region: [0, 1/16]. The expansion constant is the derivative at its
    // right edge, where the slow branch is steepest-from-below.
    let bad_hi = 1.0 / 16.0;
    let deriv = move |x: f64| 1.0 + c * (1.0 + alpha) * x.powf(alpha);
    let sigma = deriv(bad_hi) * SIGMA_MARGIN;
    let slow = Branch::with_bisection_inverse(
        (0.0, 0.5),
        Arc::new(move |x: f64| x * (1.0 + c * x.powf(alpha))),
        Arc::new(move |x: f64| 1.0 / deriv(x)),
        true,
    );
    let fast = Branch::with_closed_inverse(
        (0.5, 1.0),
        Arc::new(|x: f64| 2.0 * x - 1.0),
        Arc::new(|y: f64| 0.5 * (y + 1.0)),
        Arc::new(|_| 0.5),
        true,
    );
    Ok(IntervalMap {
        branches: vec![slow, fast],
        circle: false,
        bad_region: Some((0.0, bad_hi)),
        sigma,
        l_max: 1.0,
        name: format!("manneville-pomeau({alpha})"),
    })
}

/// Full-branch piecewise affine map: `cuts` are the interior breakpoints in
/// increasing order, and every branch is affine onto [0,1] with the sign of
/// the matching `slopes` entry (magnitudes are implied by the cut spacing and
/// must agree with the given ones to 1e-9).
pub fn piecewise_affine(slopes: &[f64], cuts: &[f64]) -> Result<IntervalMap, MapError> {
    if slopes.len() < 2 {
        return Err(MapError::InvalidParameter("need at least two branches".into()));
    }
    if cuts.len() != slopes.len() - 1 {
        return Err(MapError::InvalidParameter(format!(
            "{} slopes need {} interior cuts, got {}",
            slopes.len(),
            slopes.len() - 1,
            cuts.len()
        )));
    }
    let mut ends = Vec::with_capacity(slopes.len() + 1);
    ends.push(0.0);
    ends.extend_from_slice(cuts);
    ends.push(1.0);
    for w in ends.windows(2) {
        if w[1] <= w[0] {
            return Err(MapError::InvalidParameter("cuts must increase strictly in (0,1)".into()));
        }
    }
    let mut branches = Vec::with_capacity(slopes.len());
    let mut min_abs = f64::INFINITY;
    for (i, &s) in slopes.iter().enumerate() {
        let (a, b) = (ends[i], ends[i + 1]);
        let implied = 1.0 / (b - a);
        if (s.abs() - implied).abs() > 1e-9 {
            return Err(MapError::InvalidParameter(format!(
                "branch {i} on [{a}, {b}] implies |slope| {implied}, got {}",
                s.abs()
            )));
        }
        if s.abs() <= 1.0 {
            return Err(MapError::InvalidParameter(format!(
                "branch {i} slope {s} is not expanding"
            )));
        }
        min_abs = min_abs.min(s.abs());
        let increasing = s > 0.0;
        let mag = s.abs();
        let forward: PointFn = if increasing {
            Arc::new(move |x: f64| (x - a) * mag)
        } else {
            Arc::new(move |x: f64| (b - x) * mag)
        };
        let inverse: PointFn = if increasing {
            Arc::new(move |y: f64| a + y / mag)
        } else {
            Arc::new(move |y: f64| b - y / mag)
        };
        branches.push(Branch::with_closed_inverse(
            (a, b),
            forward,
            inverse,
            Arc::new(move |_| 1.0 / mag),
            increasing,
        ));
    }
    Ok(IntervalMap {
        branches,
        circle: false,
        bad_region: None,
        sigma: min_abs * SIGMA_MARGIN,
        l_max: 1.0,
        name: format!("piecewise-affine({})", slopes.len()),
    })
}

/// Validated l-adic constructor for config-driven callers.
pub fn l_adic_validated(l: usize) -> Result<IntervalMap, MapError> {
    l_adic_checked(l)
}
