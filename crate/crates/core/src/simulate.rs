//! Seeded generators for synthetic response data: binary data from a
//! thresholded multivariate-normal factor model and from a 2PL model.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{
    cctt_answer_key, cctt_factor_spec, Choice, Demographics, Gender, Grade, RawCell, RawRecord,
    RawResponseTable, ScoredMatrix,
};
use crate::stats::logistic;

/// Binary items generated as `y = 1[λᵀη + e > τ]` with η ~ N(0, Φ) and the
/// error variance chosen so the latent response has unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModelSpec {
    /// Loadings, one row per item, one column per factor.
    pub loadings: DMatrix<f64>,
    /// Factor correlation matrix.
    pub phi: DMatrix<f64>,
    pub thresholds: Vec<f64>,
    /// Extra correlation between the latent responses of item pairs.
    pub residual_correlations: Vec<(usize, usize, f64)>,
}

impl FactorModelSpec {
    /// Simple structure: item `i` loads `loadings[i]` on factor `factor_of[i]`.
    pub fn simple(factor_of: &[usize], loadings: &[f64], phi: DMatrix<f64>, thresholds: Vec<f64>) -> Self {
        let k = phi.nrows();
        let mut lam = DMatrix::zeros(factor_of.len(), k);
        for (i, (&f, &l)) in factor_of.iter().zip(loadings).enumerate() {
            lam[(i, f)] = l;
        }
        FactorModelSpec {
            loadings: lam,
            phi,
            thresholds,
            residual_correlations: Vec::new(),
        }
    }

    pub fn one_factor(items: usize, loading: f64) -> Self {
        let thresholds = (0..items)
            .map(|i| -1.0 + 2.0 * i as f64 / (items.max(2) - 1) as f64)
            .collect();
        Self::simple(&vec![0; items], &vec![loading; items], DMatrix::identity(1, 1), thresholds)
    }

    /// Two items whose latent responses correlate `rho`, both cut at `threshold`.
    pub fn single_pair(rho: f64, threshold: f64) -> Self {
        let l = rho.sqrt();
        Self::simple(&[0, 0], &[l, l], DMatrix::identity(1, 1), vec![threshold; 2])
    }

    /// Model-implied latent correlation matrix.
    pub fn implied(&self) -> DMatrix<f64> {
        let mut s = &self.loadings * &self.phi * self.loadings.transpose();
        for &(a, b, r) in &self.residual_correlations {
            s[(a, b)] += r;
            s[(b, a)] += r;
        }
        for i in 0..s.nrows() {
            s[(i, i)] = 1.0;
        }
        s
    }
}

/// Draws `n` respondents. Panics if the implied matrix is not positive definite.
pub fn simulate_factor_model(spec: &FactorModelSpec, n: usize, seed: u64) -> ScoredMatrix {
    let sigma = spec.implied();
    let chol = sigma
        .clone()
        .cholesky()
        .expect("implied latent correlation matrix must be positive definite")
        .l();
    let j = sigma.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut z = vec![0.0; j];
    for _ in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let row = (0..j)
            .map(|i| {
                let ystar: f64 = (0..=i).map(|c| chol[(i, c)] * z[c]).sum();
                (ystar > spec.thresholds[i]) as u8
            })
            .collect();
        rows.push(row);
    }
    ScoredMatrix::from_rows(&rows).expect("well-formed simulated rows")
}

/// Draws `n` respondents from a 2PL model with θ ~ N(0, 1).
pub fn simulate_2pl(a: &[f64], b: &[f64], n: usize, seed: u64) -> ScoredMatrix {
    assert_eq!(a.len(), b.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<u8>> = (0..n)
        .map(|_| {
            let theta: f64 = rng.sample(StandardNormal);
            a.iter()
                .zip(b)
                .map(|(&aj, &bj)| (rng.random::<f64>() < logistic(aj * (theta - bj))) as u8)
                .collect()
        })
        .collect();
    ScoredMatrix::from_rows(&rows).expect("well-formed simulated rows")
}

/// Raw answer sheets for the built-in 25-item key: a six-factor model with
/// difficulties spread like a real instrument, grade 4 scoring higher than
/// grade 3, a few mixed-grade respondents, and non-answers mixed into the
/// wrong responses.
pub fn synthetic_cctt_sheets(n: usize, seed: u64) -> RawResponseTable {
    let spec = cctt_factor_spec();
    let factor_of: Vec<usize> = (1..=25).map(|i| spec.factor_of(i).unwrap()).collect();
    let mut phi = DMatrix::from_element(6, 6, 0.65);
    phi.fill_diagonal(1.0);
    let loadings: Vec<f64> = (0..25).map(|i| 0.6 + 0.2 * ((i * 11) % 25) as f64 / 24.0).collect();
    let base: Vec<f64> = (0..25).map(|i| -1.4 + 2.4 * i as f64 / 24.0).collect();
    let shifted = |d: f64| FactorModelSpec::simple(&factor_of, &loadings, phi.clone(), base.iter().map(|t| t + d).collect());

    let n3 = n * 2 / 5;
    let nm = n / 20;
    let n4 = n - n3 - nm;
    let parts = [
        (Grade::G3, simulate_factor_model(&shifted(0.25), n3, seed)),
        (Grade::G4, simulate_factor_model(&shifted(-0.25), n4, seed.wrapping_add(1))),
        (Grade::Mixed, simulate_factor_model(&shifted(0.0), nm, seed.wrapping_add(2))),
    ];
    let key = cctt_answer_key();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
    let mut records = Vec::with_capacity(n);
    for (grade, ds) in &parts {
        for r in 0..ds.n() {
            let gender = match rng.random_range(0..20) {
                0 => Gender::Undisclosed,
                k if k % 2 == 0 => Gender::F,
                _ => Gender::M,
            };
            let answers = ds
                .row(r)
                .iter()
                .zip(&key.items)
                .map(|(&y, k)| {
                    if y == 1 {
                        return RawCell::Choice(k.correct);
                    }
                    match rng.random_range(0..100) {
                        0..8 => RawCell::Idk,
                        8..12 => RawCell::Blank,
                        12..14 => RawCell::Multi,
                        _ => {
                            let wrong: Vec<Choice> = Choice::ALL.into_iter().filter(|c| *c != k.correct).collect();
                            RawCell::Choice(wrong[rng.random_range(0..3)])
                        }
                    }
                })
                .collect();
            records.push(RawRecord {
                student_id: format!("s{:05}", records.len() + 1),
                demographics: Demographics { grade: *grade, gender },
                answers,
            });
        }
    }
    RawResponseTable { item_ids: (1..=25).collect(), records }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_draws_repeat() {
        let spec = FactorModelSpec::one_factor(5, 0.6);
        assert_eq!(simulate_factor_model(&spec, 50, 3), simulate_factor_model(&spec, 50, 3));
        assert_ne!(simulate_factor_model(&spec, 50, 3), simulate_factor_model(&spec, 50, 4));
        let a = [1.0, 1.5];
        let b = [0.0, 1.0];
        assert_eq!(simulate_2pl(&a, &b, 40, 1), simulate_2pl(&a, &b, 40, 1));
    }

    #[test]
    fn threshold_sets_marginal_rate() {
        let spec = FactorModelSpec::single_pair(0.3, 1.0);
        let ds = simulate_factor_model(&spec, 20_000, 8);
        let p = ds.column(0).iter().sum::<f64>() / 20_000.0;
        // 1 - Φ(1) = 0.1587
        assert!((p - 0.1587).abs() < 0.01);
    }
}
