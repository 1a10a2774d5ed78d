//! Parameter layout, implied correlations and derivatives of a CFA on the
//! correlation metric (unit factor variances, unit item variances).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{FactorSpec, ItemId};
use crate::error::{Error, Result};
use crate::latentcorr::{pair_list, PairIndex};

/// A parameter that is fixed at zero in the base model and may be freed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FreeParam {
    /// Item (by position) loading on a factor other than its own.
    CrossLoading { item: usize, factor: usize },
    /// Correlation between the residuals of two items (positions, a < b).
    ResidualCorrelation { a: usize, b: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfaModel {
    pub items: Vec<ItemId>,
    pub factor_names: Vec<String>,
    /// Free loadings as (item position, factor index); primary loadings first.
    pub loadings: Vec<(usize, usize)>,
    /// Freed residual correlations (a < b).
    pub residuals: Vec<(usize, usize)>,
}

/// Degrees of freedom of the simple-structure model: J(J-1)/2 moments minus
/// J loadings and K(K-1)/2 factor correlations.
pub fn model_df(spec: &FactorSpec, j: usize) -> Result<usize> {
    let k = spec.factors.iter().filter(|f| !f.items.is_empty()).count();
    let moments = (j * j.saturating_sub(1) / 2) as i64;
    let params = (j + k * k.saturating_sub(1) / 2) as i64;
    let df = moments - params;
    if df < 0 {
        return Err(Error::NotIdentified(format!(
            "{params} parameters for {moments} correlations (df = {df})"
        )));
    }
    Ok(df as usize)
}

impl CfaModel {
    /// Simple-structure model from a factor partition. Each factor needs at
    /// least two items.
    pub fn from_spec(spec: &FactorSpec) -> Result<Self> {
        let factors: Vec<_> = spec.factors.iter().filter(|f| !f.items.is_empty()).collect();
        if let Some(f) = factors.iter().find(|f| f.items.len() < 2) {
            return Err(Error::NotIdentified(format!(
                "factor {} has {} item(s); at least two are required",
                f.name,
                f.items.len()
            )));
        }
        let items: Vec<ItemId> = factors.iter().flat_map(|f| f.items.iter().copied()).collect();
        model_df(spec, items.len())?;
        let mut loadings = Vec::with_capacity(items.len());
        let mut pos = 0;
        for (fi, f) in factors.iter().enumerate() {
            for _ in &f.items {
                loadings.push((pos, fi));
                pos += 1;
            }
        }
        Ok(CfaModel {
            items,
            factor_names: factors.iter().map(|f| f.name.clone()).collect(),
            loadings,
            residuals: Vec::new(),
        })
    }

    pub fn j(&self) -> usize {
        self.items.len()
    }

    pub fn k(&self) -> usize {
        self.factor_names.len()
    }

    pub fn n_phi(&self) -> usize {
        self.k() * self.k().saturating_sub(1) / 2
    }

    pub fn n_params(&self) -> usize {
        self.loadings.len() + self.n_phi() + self.residuals.len()
    }

    pub fn n_moments(&self) -> usize {
        self.j() * (self.j() - 1) / 2
    }

    pub fn df(&self) -> Result<usize> {
        self.n_moments().checked_sub(self.n_params()).ok_or_else(|| {
            Error::NotIdentified(format!(
                "{} parameters for {} correlations",
                self.n_params(),
                self.n_moments()
            ))
        })
    }

    /// Primary factor of each item (the first loading listed for it).
    pub fn primary_factor(&self, item: usize) -> usize {
        self.loadings.iter().find(|l| l.0 == item).map(|l| l.1).unwrap_or(0)
    }

    pub fn is_free(&self, p: FreeParam) -> bool {
        match p {
            FreeParam::CrossLoading { item, factor } => self.loadings.contains(&(item, factor)),
            FreeParam::ResidualCorrelation { a, b } => {
                self.residuals.contains(&(a.min(b), a.max(b)))
            }
        }
    }

    /// The model with `p` freed. New parameters are appended after the
    /// existing ones of the same kind.
    pub fn freeing(&self, p: FreeParam) -> CfaModel {
        let mut m = self.clone();
        if !self.is_free(p) {
            match p {
                FreeParam::CrossLoading { item, factor } => m.loadings.push((item, factor)),
                FreeParam::ResidualCorrelation { a, b } => m.residuals.push((a.min(b), a.max(b))),
            }
        }
        m
    }

    /// Natural parameter vector layout: loadings, factor correlations (pair
    /// order), residual correlations.
    pub fn unpack(&self, theta: &[f64]) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
        let (j, k) = (self.j(), self.k());
        let mut lam = DMatrix::zeros(j, k);
        for (p, &(i, f)) in self.loadings.iter().enumerate() {
            lam[(i, f)] = theta[p];
        }
        let off = self.loadings.len();
        let mut phi = DMatrix::identity(k, k);
        for (p, (f, g)) in pair_list(k).into_iter().enumerate() {
            phi[(f, g)] = theta[off + p];
            phi[(g, f)] = theta[off + p];
        }
        let psi = theta[off + self.n_phi()..].to_vec();
        (lam, phi, psi)
    }

    /// Implied correlations for the J(J-1)/2 item pairs.
    pub fn implied_vec(&self, theta: &[f64]) -> Vec<f64> {
        let (lam, phi, psi) = self.unpack(theta);
        let sigma = &lam * &phi * lam.transpose();
        let pidx = PairIndex::new(self.j());
        let mut out: Vec<f64> = pair_list(self.j()).iter().map(|&(a, b)| sigma[(a, b)]).collect();
        for (&(a, b), v) in self.residuals.iter().zip(&psi) {
            out[pidx.index(a, b)] += v;
        }
        out
    }

    /// Implied correlation matrix with unit diagonal.
    pub fn implied_matrix(&self, theta: &[f64]) -> DMatrix<f64> {
        let v = self.implied_vec(theta);
        vec_to_matrix(self.j(), &v)
    }

    /// ∂σ/∂θ in natural parameters, one row per item pair.
    pub fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let (lam, phi, _) = self.unpack(theta);
        let lp = &lam * &phi;
        let pairs = pair_list(self.j());
        let mut jac = DMatrix::zeros(pairs.len(), self.n_params());
        for (row, &(a, b)) in pairs.iter().enumerate() {
            for (p, &(i, f)) in self.loadings.iter().enumerate() {
                let mut d = 0.0;
                if i == a {
                    d += lp[(b, f)];
                }
                if i == b {
                    d += lp[(a, f)];
                }
                jac[(row, p)] = d;
            }
            let off = self.loadings.len();
            for (p, (f, g)) in pair_list(self.k()).into_iter().enumerate() {
                jac[(row, off + p)] = lam[(a, f)] * lam[(b, g)] + lam[(a, g)] * lam[(b, f)];
            }
        }
        let off = self.loadings.len() + self.n_phi();
        let pidx = PairIndex::new(self.j());
        for (p, &(a, b)) in self.residuals.iter().enumerate() {
            jac[(pidx.index(a, b), off + p)] = 1.0;
        }
        jac
    }

    /// Derivative of σ with respect to a parameter that is currently fixed at
    /// zero, evaluated at `theta`.
    pub fn fixed_derivative(&self, theta: &[f64], p: FreeParam) -> Vec<f64> {
        let pairs = pair_list(self.j());
        match p {
            FreeParam::CrossLoading { item, factor } => {
                let (lam, phi, _) = self.unpack(theta);
                let lp = &lam * &phi;
                pairs
                    .iter()
                    .map(|&(a, b)| {
                        if a == item {
                            lp[(b, factor)]
                        } else if b == item {
                            lp[(a, factor)]
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            FreeParam::ResidualCorrelation { a, b } => {
                let idx = PairIndex::new(self.j()).index(a, b);
                (0..pairs.len()).map(|r| (r == idx) as u8 as f64).collect()
            }
        }
    }

    /// Every parameter that is fixed at zero and could be freed.
    pub fn fixed_params(&self) -> Vec<FreeParam> {
        let mut out = Vec::new();
        for item in 0..self.j() {
            for factor in 0..self.k() {
                let p = FreeParam::CrossLoading { item, factor };
                if !self.is_free(p) {
                    out.push(p);
                }
            }
        }
        for (a, b) in pair_list(self.j()) {
            let p = FreeParam::ResidualCorrelation { a, b };
            if !self.is_free(p) {
                out.push(p);
            }
        }
        out
    }
}

pub(crate) fn vec_to_matrix(j: usize, v: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::identity(j, j);
    for (p, (a, b)) in pair_list(j).into_iter().enumerate() {
        m[(a, b)] = v[p];
        m[(b, a)] = v[p];
    }
    m
}

/// Correlation matrix from unconstrained canonical partial correlations
/// (tanh-transformed), in [`pair_list`] order with `(f, g)` mapping to row
/// `g`, column `f` of the Cholesky factor. Returns Φ and ∂φ/∂u.
pub fn corr_from_cpc(k: usize, u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let pairs = pair_list(k);
    let pidx = PairIndex::new(k);
    let z = |row: usize, col: usize| u[pidx.index(col, row)].tanh();
    let mut l = DMatrix::zeros(k, k);
    for row in 0..k {
        let mut rem = 1.0f64;
        for col in 0..row {
            let zz = z(row, col);
            l[(row, col)] = zz * rem.sqrt();
            rem *= 1.0 - zz * zz;
        }
        l[(row, row)] = rem.sqrt();
    }
    let phi = &l * l.transpose();

    let mut jac = DMatrix::zeros(pairs.len(), pairs.len());
    for (q, &(m, row)) in pairs.iter().enumerate() {
        // parameter q = CPC at (row, m); it only moves row `row` of L
        let zm = z(row, m);
        let mut dl_row = vec![0.0; k];
        for col in 0..=row {
            dl_row[col] = if col < m {
                0.0
            } else if col == m {
                let prod: f64 = (0..m).map(|c| (1.0 - z(row, c).powi(2)).sqrt()).product();
                (1.0 - zm * zm) * prod
            } else {
                -zm * l[(row, col)]
            };
        }
        for (p, &(f, g)) in pairs.iter().enumerate() {
            let mut d = 0.0;
            if f == row {
                d += (0..k).map(|c| dl_row[c] * l[(g, c)]).sum::<f64>();
            }
            if g == row {
                d += (0..k).map(|c| l[(f, c)] * dl_row[c]).sum::<f64>();
            }
            jac[(p, q)] = d;
        }
    }
    (phi, jac)
}

/// Inverse of [`corr_from_cpc`]; `phi` must be positive definite.
pub fn cpc_from_corr(phi: &DMatrix<f64>) -> Option<Vec<f64>> {
    let k = phi.nrows();
    let l = phi.clone().cholesky()?.l();
    let pidx = PairIndex::new(k);
    let mut u = vec![0.0; pidx.len()];
    for row in 1..k {
        let mut rem = 1.0f64;
        for col in 0..row {
            let zz = (l[(row, col)] / rem.sqrt()).clamp(-1.0 + 1e-12, 1.0 - 1e-12);
            u[pidx.index(col, row)] = zz.atanh();
            rem *= 1.0 - zz * zz;
        }
    }
    Some(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{cctt_factor_spec, Factor};
    use approx::assert_abs_diff_eq;

    #[test]
    fn df_arithmetic() {
        let spec = cctt_factor_spec();
        assert_eq!(model_df(&spec, 25).unwrap(), 260);
        assert_eq!(model_df(&spec.without(&[17]), 24).unwrap(), 237);
        let m = CfaModel::from_spec(&spec).unwrap();
        assert_eq!(m.n_params(), 25 + 15);
        assert_eq!(m.df().unwrap(), 260);
        let tiny = FactorSpec::new(vec![
            Factor { name: "a".into(), items: vec![1, 2] },
            Factor { name: "b".into(), items: vec![3, 4] },
        ])
        .unwrap();
        // 6 moments, 5 parameters
        assert_eq!(model_df(&tiny, 4).unwrap(), 1);
        let under = FactorSpec::new(vec![Factor { name: "a".into(), items: vec![1, 2] }]).unwrap();
        assert!(model_df(&under, 2).is_err());
        let three = FactorSpec::new(vec![
            Factor { name: "a".into(), items: vec![1, 2] },
            Factor { name: "b".into(), items: vec![3, 4] },
            Factor { name: "c".into(), items: vec![5, 6] },
        ])
        .unwrap();
        assert_eq!(model_df(&three, 6).unwrap(), 15 - 9);
        assert!(model_df(&three, 3).is_err());
    }

    #[test]
    fn singleton_factor_rejected() {
        let spec = FactorSpec::new(vec![
            Factor { name: "a".into(), items: vec![1, 2, 3] },
            Factor { name: "b".into(), items: vec![4] },
        ])
        .unwrap();
        assert!(matches!(CfaModel::from_spec(&spec), Err(Error::NotIdentified(_))));
    }

    #[test]
    fn implied_matches_brute_force() {
        let spec = cctt_factor_spec();
        let m = CfaModel::from_spec(&spec).unwrap();
        let theta: Vec<f64> = (0..m.n_params()).map(|p| 0.3 + 0.02 * (p % 17) as f64).collect();
        let (lam, phi, _) = m.unpack(&theta);
        let implied = m.implied_matrix(&theta);
        for a in 0..25 {
            for b in 0..25 {
                if a == b {
                    continue;
                }
                let (fa, fb) = (m.primary_factor(a), m.primary_factor(b));
                let want = if fa == fb {
                    lam[(a, fa)] * lam[(b, fb)]
                } else {
                    lam[(a, fa)] * phi[(fa, fb)] * lam[(b, fb)]
                };
                assert_abs_diff_eq!(implied[(a, b)], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let spec = FactorSpec::new(vec![
            Factor { name: "a".into(), items: vec![1, 2, 3] },
            Factor { name: "b".into(), items: vec![4, 5, 6] },
        ])
        .unwrap();
        let m = CfaModel::from_spec(&spec)
            .unwrap()
            .freeing(FreeParam::CrossLoading { item: 0, factor: 1 })
            .freeing(FreeParam::ResidualCorrelation { a: 2, b: 4 });
        let theta: Vec<f64> = (0..m.n_params()).map(|p| 0.5 + 0.03 * p as f64).collect();
        let jac = m.jacobian(&theta);
        let h = 1e-6;
        for p in 0..m.n_params() {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[p] += h;
            dn[p] -= h;
            let (su, sd) = (m.implied_vec(&up), m.implied_vec(&dn));
            for r in 0..su.len() {
                assert_abs_diff_eq!(jac[(r, p)], (su[r] - sd[r]) / (2.0 * h), epsilon = 1e-8);
            }
        }
        // fixed derivative of a not-yet-free cross-loading
        let fd = m.fixed_derivative(&theta, FreeParam::CrossLoading { item: 5, factor: 0 });
        let freed = m.freeing(FreeParam::CrossLoading { item: 5, factor: 0 });
        let mut t2 = theta.clone();
        t2.insert(m.loadings.len(), 0.0);
        let col = freed.jacobian(&t2).column(m.loadings.len()).iter().copied().collect::<Vec<_>>();
        for (a, b) in fd.iter().zip(&col) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn cpc_round_trip_and_derivative() {
        let k = 4;
        let u: Vec<f64> = vec![0.3, -0.2, 0.5, 0.1, 0.4, -0.6];
        let (phi, jac) = corr_from_cpc(k, &u);
        assert!((0..k).all(|i| (phi[(i, i)] - 1.0).abs() < 1e-14));
        assert!(phi.clone().cholesky().is_some());
        let back = cpc_from_corr(&phi).unwrap();
        for (a, b) in u.iter().zip(&back) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let pairs = pair_list(k);
        let h = 1e-6;
        for q in 0..u.len() {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[q] += h;
            dn[q] -= h;
            let (pu, _) = corr_from_cpc(k, &up);
            let (pd, _) = corr_from_cpc(k, &dn);
            for (p, &(f, g)) in pairs.iter().enumerate() {
                assert_abs_diff_eq!(jac[(p, q)], (pu[(f, g)] - pd[(f, g)]) / (2.0 * h), epsilon = 1e-8);
            }
        }
    }
}
