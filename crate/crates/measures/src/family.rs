//! Families of fiber measures indexed by base grid cells, with the sup,
//! strong, and Hölder functionals used to track regularity of the leafwise
//! disintegration under operator iteration.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{wk_norm, AtomicMeasure, MeasureError};

/// Budget for non-adjacent leaf pairs in the Hölder functional. Every
/// adjacent pair is always scanned; beyond that the esssup is estimated
/// from below by seeded random far pairs, so the value is reproducible.
const FAR_PAIR_BUDGET: usize = 10_000;
const FAR_PAIR_SEED: u64 = 0x1eaf;

/// One atomic measure per base cell center (i + 1/2)/N, together with the
/// base weights of the cells and the marginal density per leaf. For an
/// equilibrium family the leaf masses and the density agree; transient
/// iterates may drift, so the invariant is a query, not a constructor check.
#[derive(Debug, Clone)]
pub struct LeafFamily {
    leaves: Vec<AtomicMeasure>,
    base_weights: Vec<f64>,
    marginal_density: Vec<f64>,
    circle: bool,
}

impl LeafFamily {
    /// Marginal density is read off the leaf masses.
    pub fn new(
        leaves: Vec<AtomicMeasure>,
        base_weights: Vec<f64>,
        circle: bool,
    ) -> Result<Self, MeasureError> {
        let density = leaves.iter().map(|l| l.total_mass()).collect();
        Self::with_density(leaves, base_weights, density, circle)
    }

    pub fn with_density(
        leaves: Vec<AtomicMeasure>,
        base_weights: Vec<f64>,
        marginal_density: Vec<f64>,
        circle: bool,
    ) -> Result<Self, MeasureError> {
        if leaves.len() != base_weights.len() || leaves.len() != marginal_density.len() {
            return Err(MeasureError::InvalidInput(format!(
                "family arrays disagree: {} leaves, {} weights, {} densities",
                leaves.len(),
                base_weights.len(),
                marginal_density.len()
            )));
        }
        if base_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(MeasureError::InvalidInput(
                "base weights must be finite and nonnegative".into(),
            ));
        }
        if marginal_density.iter().any(|d| !d.is_finite()) {
            return Err(MeasureError::InvalidInput(
                "marginal density must be finite".into(),
            ));
        }
        Ok(LeafFamily {
            leaves,
            base_weights,
            marginal_density,
            circle,
        })
    }

    /// Uniform base weights; the usual starting family for iteration.
    pub fn uniform(leaves: Vec<AtomicMeasure>, circle: bool) -> Result<Self, MeasureError> {
        let n = leaves.len();
        if n == 0 {
            return Err(MeasureError::InvalidInput("empty family".into()));
        }
        Self::new(leaves, vec![1.0 / n as f64; n], circle)
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn leaves(&self) -> &[AtomicMeasure] {
        &self.leaves
    }

    pub fn leaf(&self, i: usize) -> &AtomicMeasure {
        &self.leaves[i]
    }

    pub fn base_weights(&self) -> &[f64] {
        &self.base_weights
    }

    pub fn marginal_density(&self) -> &[f64] {
        &self.marginal_density
    }

    pub fn circle(&self) -> bool {
        self.circle
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.leaves.len() as f64
    }

    pub fn base_distance(&self, i: usize, j: usize) -> f64 {
        let d = (self.center(i) - self.center(j)).abs();
        if self.circle {
            d.min(1.0 - d)
        } else {
            d
        }
    }

    /// Leaf masses match the stored marginal density.
    pub fn density_consistent(&self, tol: f64) -> bool {
        self.leaves
            .iter()
            .zip(&self.marginal_density)
            .all(|(l, d)| (l.total_mass() - d).abs() <= tol)
    }
}

/// Sup over leaves of the fiber norm.
pub fn linf_norm(fam: &LeafFamily, zeta: f64) -> f64 {
    assert!(!fam.is_empty(), "norm of an empty family");
    fam.leaves
        .iter()
        .map(|l| wk_norm(l, zeta))
        .fold(0.0, f64::max)
}

/// Strong norm: Hölder seminorm of the marginal density plus the sup norm.
pub fn sinf_norm(fam: &LeafFamily, zeta: f64) -> f64 {
    assert!(!fam.is_empty(), "norm of an empty family");
    scalar_holder(&fam.marginal_density, zeta, fam.circle) + linf_norm(fam, zeta)
}

/// Hölder seminorm of the leaf map: sup over distinct base cells of
/// ‖μ_i − μ_j‖ / d₁(γ_i, γ_j)^ζ. All adjacent pairs plus a seeded sample of
/// far pairs; a lower estimate of the esssup by construction.
pub fn holder_seminorm(fam: &LeafFamily, zeta: f64) -> f64 {
    assert!(!fam.is_empty(), "seminorm of an empty family");
    let n = fam.len();
    if n < 2 {
        return 0.0;
    }
    let pair_value = |i: usize, j: usize| {
        let diff = fam.leaves[i].sub(&fam.leaves[j]);
        wk_norm(&diff, zeta) / fam.base_distance(i, j).powf(zeta)
    };
    let mut best = 0.0f64;
    for i in 0..n - 1 {
        best = best.max(pair_value(i, i + 1));
    }
    if fam.circle {
        best = best.max(pair_value(n - 1, 0));
    }
    let far_total = n * (n - 1) / 2;
    if far_total <= FAR_PAIR_BUDGET + n {
        for i in 0..n {
            for j in (i + 2)..n {
                best = best.max(pair_value(i, j));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(FAR_PAIR_SEED);
        let mut drawn = 0usize;
        while drawn < FAR_PAIR_BUDGET {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j || i.abs_diff(j) == 1 {
                continue;
            }
            best = best.max(pair_value(i, j));
            drawn += 1;
        }
    }
    best
}

/// Sup over leaves of the fiber distance between two families.
pub fn family_distance_linf(
    a: &LeafFamily,
    b: &LeafFamily,
    zeta: f64,
) -> Result<f64, MeasureError> {
    if a.len() != b.len() {
        return Err(MeasureError::LeafCountMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    Ok(a.leaves
        .iter()
        .zip(&b.leaves)
        .map(|(x, y)| wk_norm(&x.sub(y), zeta))
        .fold(0.0, f64::max))
}

/// Grid Hölder seminorm of a scalar sequence on cell centers. Full scan for
/// small grids, strided offsets beyond that; adjacent pairs always included.
fn scalar_holder(values: &[f64], zeta: f64, circle: bool) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let dist = |i: usize, j: usize| {
        let d = (i as f64 - j as f64).abs() / n as f64;
        if circle {
            d.min(1.0 - d)
        } else {
            d
        }
    };
    let mut best = 0.0f64;
    let full = n * (n - 1) / 2 <= 200_000;
    if full {
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max((values[i] - values[j]).abs() / dist(i, j).powf(zeta));
            }
        }
    } else {
        let mut offsets: Vec<usize> = (1..=32).collect();
        let mut k = 64;
        while k < n {
            offsets.push(k);
            k *= 2;
        }
        for off in offsets {
            for i in 0..n - off {
                best = best.max((values[i] - values[i + off]).abs() / dist(i, i + off).powf(zeta));
            }
            if circle {
                for i in n - off..n {
                    let j = (i + off) % n;
                    best = best.max((values[i] - values[j]).abs() / dist(i, j).powf(zeta));
                }
            }
        }
    }
    best
}

/// Columnar checkpoint: header `leaf,pos,weight`, one row per atom. Base
/// weights and the circle flag are not part of the format; readers supply
/// the flag and get uniform base weights back.
pub fn write_family_csv(fam: &LeafFamily, path: &Path) -> Result<(), MeasureError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "leaf,pos,weight")?;
    for (i, leaf) in fam.leaves.iter().enumerate() {
        for &(pos, w) in leaf.atoms() {
            writeln!(out, "{i},{pos},{w}")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_family_csv(path: &Path, circle: bool) -> Result<LeafFamily, MeasureError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| MeasureError::Format("empty file".into()))??;
    if header.trim() != "leaf,pos,weight" {
        return Err(MeasureError::Format(format!(
            "expected header 'leaf,pos,weight', found '{header}'"
        )));
    }
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.splitn(3, ',').collect();
        if parts.len() != 3 {
            return Err(MeasureError::Format(format!(
                "short row at line {}",
                lineno + 2
            )));
        }
        let bad = |e: &dyn std::fmt::Display| {
            MeasureError::Format(format!("line {}: {e}", lineno + 2))
        };
        let leaf: usize = parts[0].trim().parse().map_err(|e| bad(&e))?;
        let pos: f64 = parts[1].trim().parse().map_err(|e| bad(&e))?;
        let w: f64 = parts[2].trim().parse().map_err(|e| bad(&e))?;
        rows.push((leaf, pos, w));
    }
    let n = rows
        .iter()
        .map(|&(l, _, _)| l + 1)
        .max()
        .ok_or_else(|| MeasureError::Format("no atom rows".into()))?;
    let mut atoms: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
    for (leaf, pos, w) in rows {
        atoms[leaf].push((pos, w));
    }
    let leaves = atoms
        .into_iter()
        .map(AtomicMeasure::new)
        .collect::<Result<Vec<_>, _>>()?;
    LeafFamily::uniform(leaves, circle)
}
