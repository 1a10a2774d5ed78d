//! Tetrachoric correlations by two-step maximum likelihood: thresholds from
//! the margins, then ρ maximising the 2×2 multinomial likelihood.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bvn::{bvn_pdf, bvn_upper};
use super::{pair_list, PairIndex};
use crate::dataset::{ItemId, ScoredMatrix};
use crate::error::{Error, Result};
use crate::par::{map_range, Execution};
use crate::stats::{norm_quantile, pearson};

/// Correlations are kept strictly inside ±`RHO_CAP`.
pub const RHO_CAP: f64 = 0.999;

/// Cell counts of two dichotomies. `n10` = first item 1, second item 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table2x2 {
    pub n11: f64,
    pub n10: f64,
    pub n01: f64,
    pub n00: f64,
}

impl Table2x2 {
    pub fn new(n11: u64, n10: u64, n01: u64, n00: u64) -> Self {
        Table2x2 {
            n11: n11 as f64,
            n10: n10 as f64,
            n01: n01 as f64,
            n00: n00 as f64,
        }
    }

    pub fn total(&self) -> f64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }

    fn cells(&self) -> [f64; 4] {
        [self.n11, self.n10, self.n01, self.n00]
    }

    /// Counts for columns `a` and `b`, each row weighted by `weight(row)`.
    pub fn from_columns(ds: &ScoredMatrix, a: usize, b: usize, weight: impl Fn(usize) -> f64) -> Self {
        let mut t = [0.0; 4];
        for r in 0..ds.n() {
            let w = weight(r);
            if w == 0.0 {
                continue;
            }
            let idx = match (ds.get(r, a), ds.get(r, b)) {
                (1, 1) => 0,
                (1, 0) => 1,
                (0, 1) => 2,
                _ => 3,
            };
            t[idx] += w;
        }
        Table2x2 {
            n11: t[0],
            n10: t[1],
            n01: t[2],
            n00: t[3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TetraEstimate {
    pub rho: f64,
    /// Sampling variance of `rho` from the inverse observed information.
    pub variance: f64,
    /// Thresholds τ = Φ⁻¹(1 - p) of the two items.
    pub thresholds: (f64, f64),
    /// 0.5 was added to every cell because one was empty.
    pub continuity_corrected: bool,
    /// The maximiser sat at ±`RHO_CAP`.
    pub capped: bool,
}

struct Likelihood {
    counts: [f64; 4],
    t1: f64,
    t2: f64,
}

impl Likelihood {
    /// `None` when a margin is empty.
    fn new(table: &Table2x2) -> Option<(Self, bool)> {
        let corrected = table.cells().contains(&0.0);
        let counts = if corrected {
            table.cells().map(|c| c + 0.5)
        } else {
            table.cells()
        };
        let n: f64 = counts.iter().sum();
        let p1 = (counts[0] + counts[1]) / n;
        let p2 = (counts[0] + counts[2]) / n;
        if !(p1 > 0.0 && p1 < 1.0 && p2 > 0.0 && p2 < 1.0) {
            return None;
        }
        Some((
            Likelihood {
                counts,
                t1: norm_quantile(1.0 - p1),
                t2: norm_quantile(1.0 - p2),
            },
            corrected,
        ))
    }
}

impl Likelihood {
    /// Cell probabilities, each evaluated directly so small cells do not
    /// suffer cancellation.
    fn probs(&self, rho: f64) -> [f64; 4] {
        let (t1, t2) = (self.t1, self.t2);
        let tiny = 1e-300;
        [
            bvn_upper(t1, t2, rho).max(tiny),
            bvn_upper(t1, -t2, -rho).max(tiny),
            bvn_upper(-t1, t2, -rho).max(tiny),
            bvn_upper(-t1, -t2, rho).max(tiny),
        ]
    }

    fn loglik(&self, rho: f64) -> f64 {
        self.probs(rho)
            .iter()
            .zip(&self.counts)
            .map(|(p, n)| n * p.ln())
            .sum()
    }

    fn score(&self, rho: f64) -> f64 {
        let p = self.probs(rho);
        let c = &self.counts;
        bvn_pdf(self.t1, self.t2, rho) * (c[0] / p[0] - c[1] / p[1] - c[2] / p[2] + c[3] / p[3])
    }

    fn information(&self, rho: f64) -> f64 {
        let p = self.probs(rho);
        let c = &self.counts;
        let dens = bvn_pdf(self.t1, self.t2, rho);
        let om = 1.0 - rho * rho;
        let q = self.t1 * self.t1 - 2.0 * rho * self.t1 * self.t2 + self.t2 * self.t2;
        let dlog = rho / om + (self.t1 * self.t2 * om - rho * q) / (om * om);
        let s1 = c[0] / p[0] - c[1] / p[1] - c[2] / p[2] + c[3] / p[3];
        let s2: f64 = c.iter().zip(&p).map(|(n, pi)| n / (pi * pi)).sum();
        let observed = -(dens * dlog * s1 - dens * dens * s2);
        if observed > 0.0 && observed.is_finite() {
            observed
        } else {
            dens * dens * s2
        }
    }
}

/// Brent's method for a sign-changing bracket.
fn brent_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, tol: f64) -> f64 {
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut mflag = true;
    let mut d = 0.0;
    for _ in 0..200 {
        if fb == 0.0 || (b - a).abs() < tol {
            return b;
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let between = if lo < b { s > lo && s < b } else { s > b && s < lo };
        if !between
            || (mflag && (s - b).abs() >= (b - c).abs() / 2.0)
            || (!mflag && (s - b).abs() >= (c - d).abs() / 2.0)
            || (mflag && (b - c).abs() < tol)
            || (!mflag && (c - d).abs() < tol)
        {
            s = (a + b) / 2.0;
            mflag = true;
        } else {
            mflag = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    b
}

/// Two-step ML tetrachoric correlation of a 2×2 table. Returns `None` for an
/// empty table.
pub fn tetrachoric_from_table(table: &Table2x2) -> Option<TetraEstimate> {
    if !(table.total() > 0.0) {
        return None;
    }
    let (lik, corrected) = Likelihood::new(table)?;
    let (rho, capped) = maximise(&lik);
    Some(TetraEstimate {
        rho,
        variance: 1.0 / lik.information(rho),
        thresholds: (lik.t1, lik.t2),
        continuity_corrected: corrected,
        capped,
    })
}

const GRID: usize = 21;

/// Coarse grid over [-cap, cap], then Brent on the score inside the
/// bracketing cell (golden section if the score does not change sign there).
fn maximise(lik: &Likelihood) -> (f64, bool) {
    let grid: Vec<f64> = (0..GRID)
        .map(|i| -RHO_CAP + 2.0 * RHO_CAP * i as f64 / (GRID - 1) as f64)
        .collect();
    let ll: Vec<f64> = grid.iter().map(|&r| lik.loglik(r)).collect();
    let best = (0..GRID).fold(0, |b, i| if ll[i] > ll[b] { i } else { b });
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(GRID - 1)];
    let (s_lo, s_hi) = (lik.score(lo), lik.score(hi));
    if best == 0 && s_lo <= 0.0 {
        return (-RHO_CAP, true);
    }
    if best == GRID - 1 && s_hi >= 0.0 {
        return (RHO_CAP, true);
    }
    let rho = if s_lo > 0.0 && s_hi < 0.0 {
        brent_root(|r| lik.score(r), lo, hi, s_lo, s_hi, 1e-13)
    } else {
        golden_max(|r| lik.loglik(r), lo, hi, 1e-12)
    };
    let capped = rho.abs() >= RHO_CAP;
    (rho.clamp(-RHO_CAP, RHO_CAP), capped)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Log-likelihood of `rho` for a table, with the same zero-cell handling as
/// [`tetrachoric_from_table`].
pub fn table_loglik(table: &Table2x2, rho: f64) -> f64 {
    Likelihood::new(table).map_or(f64::NAN, |(lik, _)| lik.loglik(rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TetraOptions {
    pub execution: Execution,
}

impl Default for TetraOptions {
    fn default() -> Self {
        TetraOptions {
            execution: Execution::Parallel,
        }
    }
}

/// Pairwise tetrachoric correlations of a scored matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TetraMatrix {
    pub items: Vec<ItemId>,
    pub n: usize,
    /// Symmetric, unit diagonal, unsmoothed.
    pub rho: DMatrix<f64>,
    /// Sampling variance of each off-diagonal estimate; zero on the diagonal.
    pub variance: DMatrix<f64>,
    pub thresholds: Vec<f64>,
    /// Pairs whose estimate hit the ±0.999 cap.
    pub capped_pairs: Vec<(ItemId, ItemId)>,
}

pub fn tetrachoric_matrix(ds: &ScoredMatrix, opts: &TetraOptions) -> Result<TetraMatrix> {
    let j = ds.j();
    let n = ds.n();
    if n < 2 {
        return Err(Error::SubsetTooSmall { n });
    }
    let degenerate: Vec<ItemId> = (0..j)
        .filter(|&c| {
            let ones = (0..n).filter(|&r| ds.get(r, c) == 1).count();
            ones == 0 || ones == n
        })
        .map(|c| ds.item_ids()[c])
        .collect();
    if !degenerate.is_empty() {
        return Err(Error::DegenerateItems { items: degenerate });
    }
    let pairs = pair_list(j);
    let estimates = map_range(opts.execution, pairs.len(), |p| {
        let (a, b) = pairs[p];
        tetrachoric_from_table(&Table2x2::from_columns(ds, a, b, |_| 1.0))
            .expect("non-degenerate margins")
    });
    let mut rho = DMatrix::identity(j, j);
    let mut variance = DMatrix::zeros(j, j);
    let mut capped_pairs = Vec::new();
    for (&(a, b), est) in pairs.iter().zip(&estimates) {
        rho[(a, b)] = est.rho;
        rho[(b, a)] = est.rho;
        variance[(a, b)] = est.variance;
        variance[(b, a)] = est.variance;
        if est.capped {
            capped_pairs.push((ds.item_ids()[a], ds.item_ids()[b]));
        }
    }
    let thresholds = (0..j)
        .map(|c| {
            let p = ds.column(c).iter().sum::<f64>() / n as f64;
            norm_quantile(1.0 - p)
        })
        .collect();
    Ok(TetraMatrix {
        items: ds.item_ids().to_vec(),
        n,
        rho,
        variance,
        thresholds,
        capped_pairs,
    })
}

impl TetraMatrix {
    /// Sub-matrix for `items`, in that order.
    pub fn select(&self, items: &[ItemId]) -> Result<TetraMatrix> {
        let idx = items
            .iter()
            .map(|it| {
                self.items
                    .iter()
                    .position(|x| x == it)
                    .ok_or_else(|| Error::Config(format!("item {it} not in correlation matrix")))
            })
            .collect::<Result<Vec<_>>>()?;
        let k = idx.len();
        Ok(TetraMatrix {
            items: items.to_vec(),
            n: self.n,
            rho: DMatrix::from_fn(k, k, |r, c| self.rho[(idx[r], idx[c])]),
            variance: DMatrix::from_fn(k, k, |r, c| self.variance[(idx[r], idx[c])]),
            thresholds: idx.iter().map(|&i| self.thresholds[i]).collect(),
            capped_pairs: self
                .capped_pairs
                .iter()
                .copied()
                .filter(|(a, b)| items.contains(a) && items.contains(b))
                .collect(),
        })
    }

    /// Square CSV with a header row of item ids.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        write_square_csv(&self.items, &self.rho, w)
    }
}

pub(crate) fn write_square_csv<W: std::io::Write>(items: &[ItemId], m: &DMatrix<f64>, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["item".to_string()];
    header.extend(items.iter().map(|i| format!("q{i}")));
    wtr.write_record(&header)?;
    for (r, it) in items.iter().enumerate() {
        let mut rec = vec![format!("q{it}")];
        rec.extend((0..items.len()).map(|c| crate::stats::fmt6(m[(r, c)])));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Result of eigenvalue smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub matrix: DMatrix<f64>,
    pub applied: bool,
    pub min_eigenvalue_before: f64,
}

/// Clips eigenvalues below 1e-6 and rescales to unit diagonal, but only when
/// the matrix is not positive definite.
pub fn smooth_psd(corr: &DMatrix<f64>) -> Smoothed {
    let eig = SymmetricEigen::new(corr.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if corr.clone().cholesky().is_some() && min > 0.0 {
        return Smoothed {
            matrix: corr.clone(),
            applied: false,
            min_eigenvalue_before: min,
        };
    }
    let clipped = eig.eigenvalues.map(|v| v.max(1e-6));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let d: Vec<f64> = (0..rebuilt.nrows()).map(|i| rebuilt[(i, i)].sqrt()).collect();
    let matrix = DMatrix::from_fn(rebuilt.nrows(), rebuilt.ncols(), |r, c| {
        if r == c {
            1.0
        } else {
            rebuilt[(r, c)] / (d[r] * d[c])
        }
    });
    Smoothed {
        matrix,
        applied: true,
        min_eigenvalue_before: min,
    }
}

/// Phi (Pearson on 0/1) correlation matrix.
pub fn phi_matrix(ds: &ScoredMatrix) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = (0..ds.j()).map(|c| ds.column(c)).collect();
    DMatrix::from_fn(ds.j(), ds.j(), |r, c| if r == c { 1.0 } else { pearson(&cols[r], &cols[c]) })
}

/// Covariance of the tetrachoric estimates across respondent-level bootstrap
/// resamples, pairs ordered as in [`pair_list`].
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapCovariance {
    pub items: Vec<ItemId>,
    pub replicates: usize,
    pub seed: u64,
    /// P×P, P = J(J-1)/2, finite-sample scale (not multiplied by N).
    pub cov: DMatrix<f64>,
}

impl BootstrapCovariance {
    /// Restriction to the pairs among `items`.
    pub fn select(&self, items: &[ItemId]) -> Result<BootstrapCovariance> {
        let idx = items
            .iter()
            .map(|it| {
                self.items
                    .iter()
                    .position(|x| x == it)
                    .ok_or_else(|| Error::Config(format!("item {it} not in bootstrap covariance")))
            })
            .collect::<Result<Vec<_>>>()?;
        let full = PairIndex::new(self.items.len());
        let sub: Vec<usize> = pair_list(items.len())
            .into_iter()
            .map(|(a, b)| full.index(idx[a], idx[b]))
            .collect();
        Ok(BootstrapCovariance {
            items: items.to_vec(),
            replicates: self.replicates,
            seed: self.seed,
            cov: DMatrix::from_fn(sub.len(), sub.len(), |r, c| self.cov[(sub[r], sub[c])]),
        })
    }
}

/// Replicate `b` draws from its own ChaCha stream, so results do not depend
/// on scheduling.
pub fn bootstrap_covariance(
    ds: &ScoredMatrix,
    replicates: usize,
    seed: u64,
    exec: Execution,
) -> Result<BootstrapCovariance> {
    if replicates < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least two replicates".into()));
    }
    let n = ds.n();
    if n < 2 {
        return Err(Error::SubsetTooSmall { n });
    }
    let pairs = pair_list(ds.j());
    // a replicate whose table degenerates keeps the full-sample value
    let full: Vec<f64> = pairs
        .iter()
        .map(|&(a, c)| tetrachoric_from_table(&Table2x2::from_columns(ds, a, c, |_| 1.0)).map_or(0.0, |e| e.rho))
        .collect();
    let draws: Vec<Vec<f64>> = map_range(exec, replicates, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64 + 1);
        let mut weight = vec![0.0f64; n];
        for _ in 0..n {
            weight[rng.random_range(0..n)] += 1.0;
        }
        pairs
            .iter()
            .zip(&full)
            .map(|(&(a, c), &fallback)| {
                tetrachoric_from_table(&Table2x2::from_columns(ds, a, c, |r| weight[r]))
                    .map_or(fallback, |e| e.rho)
            })
            .collect()
    });
    let p = pairs.len();
    let mut mean = vec![0.0; p];
    for d in &draws {
        for (m, v) in mean.iter_mut().zip(d) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= replicates as f64;
    }
    let mut cov = DMatrix::zeros(p, p);
    for d in &draws {
        let centred: Vec<f64> = d.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for r in 0..p {
            let cr = centred[r];
            for c in r..p {
                cov[(r, c)] += cr * centred[c];
            }
        }
    }
    let denom = (replicates - 1) as f64;
    for r in 0..p {
        for c in r..p {
            let v = cov[(r, c)] / denom;
            cov[(r, c)] = v;
            cov[(c, r)] = v;
        }
    }
    Ok(BootstrapCovariance {
        items: ds.item_ids().to_vec(),
        replicates,
        seed,
        cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate_factor_model, FactorModelSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn quadrant_table_recovers_half() {
        // P(both above 0) at ρ = 0.5 is 1/4 + asin(.5)/2π = 1/3
        let t = Table2x2 {
            n11: 2000.0,
            n10: 1000.0,
            n01: 1000.0,
            n00: 2000.0,
        };
        let e = tetrachoric_from_table(&t).unwrap();
        assert_abs_diff_eq!(e.rho, 0.5, epsilon = 1e-9);
        assert!(!e.continuity_corrected);
        assert_abs_diff_eq!(e.thresholds.0, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn independent_table_is_zero() {
        // p1 = 0.3, p2 = 0.6, n = 1000
        let t = Table2x2::new(180, 120, 420, 280);
        assert_abs_diff_eq!(tetrachoric_from_table(&t).unwrap().rho, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn empty_cell_is_corrected() {
        let t = Table2x2::new(40, 0, 25, 35);
        let e = tetrachoric_from_table(&t).unwrap();
        assert!(e.continuity_corrected);
        assert!(e.rho.abs() < 1.0 && e.rho > 0.8);
        assert!(e.variance > 0.0 && e.variance.is_finite());
        assert!(tetrachoric_from_table(&Table2x2::new(0, 0, 0, 0)).is_none());
    }

    #[test]
    fn variance_matches_numeric_curvature() {
        let t = Table2x2::new(310, 95, 140, 455);
        let e = tetrachoric_from_table(&t).unwrap();
        let h = 1e-4;
        let d2 = (table_loglik(&t, e.rho + h) - 2.0 * table_loglik(&t, e.rho) + table_loglik(&t, e.rho - h)) / (h * h);
        assert_abs_diff_eq!(e.variance, -1.0 / d2, epsilon = 1e-6 * e.variance.max(1e-3));
    }

    #[test]
    fn duplicated_columns_are_capped() {
        let rows: Vec<Vec<u8>> = (0..200).map(|i| vec![(i % 3 == 0) as u8; 2]).collect();
        let ds = ScoredMatrix::from_rows(&rows).unwrap();
        let m = tetrachoric_matrix(&ds, &TetraOptions::default()).unwrap();
        assert_abs_diff_eq!(m.rho[(0, 1)], RHO_CAP, epsilon = 1e-12);
        assert_eq!(m.capped_pairs, vec![(1, 2)]);
    }

    #[test]
    fn degenerate_items_listed() {
        let ds = ScoredMatrix::from_rows(&[vec![1, 0, 0], vec![1, 1, 0]]).unwrap();
        match tetrachoric_matrix(&ds, &TetraOptions::default()) {
            Err(Error::DegenerateItems { items }) => assert_eq!(items, vec![1, 3]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn simulated_bivariate_normal_recovered() {
        let spec = FactorModelSpec::single_pair(0.6, 0.0);
        let ds = simulate_factor_model(&spec, 5000, 11);
        let m = tetrachoric_matrix(&ds, &TetraOptions::default()).unwrap();
        assert!((m.rho[(0, 1)] - 0.6).abs() < 0.03, "rho = {}", m.rho[(0, 1)]);
        assert_eq!(m.rho, m.rho.transpose());
        assert!((0..2).all(|i| m.rho[(i, i)] == 1.0));
    }

    #[test]
    fn smoothing_only_when_needed() {
        let pd = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        assert!(!smooth_psd(&pd).applied);
        let bad = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let s = smooth_psd(&bad);
        assert!(s.applied && s.min_eigenvalue_before < 0.0);
        let min = SymmetricEigen::new(s.matrix.clone()).eigenvalues.min();
        assert!(min >= 0.0);
        assert!((0..3).all(|i| (s.matrix[(i, i)] - 1.0).abs() < 1e-15));
    }

    #[test]
    fn bootstrap_is_reproducible_across_execution_modes() {
        let spec = FactorModelSpec::one_factor(4, 0.7);
        let ds = simulate_factor_model(&spec, 300, 5);
        let a = bootstrap_covariance(&ds, 20, 9, Execution::Sequential).unwrap();
        let b = bootstrap_covariance(&ds, 20, 9, Execution::Parallel).unwrap();
        assert_eq!(a.cov, b.cov);
        assert_eq!(a.cov.nrows(), 6);
        assert!((0..6).all(|i| a.cov[(i, i)] > 0.0));
        let sub = a.select(&[2, 4]).unwrap();
        let full = PairIndex::new(4);
        assert_eq!(sub.cov[(0, 0)], a.cov[(full.index(1, 3), full.index(1, 3))]);
    }

    proptest! {
        #[test]
        fn flipping_one_item_negates_rho(n11 in 1u64..400, n10 in 1u64..400, n01 in 1u64..400, n00 in 1u64..400) {
            let t = Table2x2::new(n11, n10, n01, n00);
            let flipped = Table2x2::new(n01, n00, n11, n10);
            let a = tetrachoric_from_table(&t).unwrap().rho;
            let b = tetrachoric_from_table(&flipped).unwrap().rho;
            prop_assert!((a + b).abs() < 1e-8, "{} vs {}", a, b);
        }
    }
}
