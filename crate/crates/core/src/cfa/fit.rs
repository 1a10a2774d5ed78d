use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::{corr_from_cpc, cpc_from_corr, vec_to_matrix, CfaModel};
use crate::dataset::{FactorSpec, ItemId, ScoredMatrix};
use crate::error::{Error, Result};
use crate::latentcorr::{
    bootstrap_covariance, pair_list, tetrachoric_matrix, BootstrapCovariance, TetraMatrix,
    TetraOptions,
};
use crate::par::Execution;
use crate::stats::{chi2_sf, z_two_sided};

/// Sample moments handed to the estimator: the correlations, their
/// asymptotic variances and (optionally) their full covariance.
#[derive(Debug, Clone)]
pub struct CfaInput {
    pub items: Vec<ItemId>,
    pub n: usize,
    /// Pairwise correlations in pair order.
    pub s: Vec<f64>,
    /// Sampling variance of each correlation at sample size `n`.
    pub variance: Vec<f64>,
    /// Sampling covariance of the correlations at sample size `n`.
    pub cov: Option<DMatrix<f64>>,
}

impl CfaInput {
    pub fn from_tetra(t: &TetraMatrix, boot: Option<&BootstrapCovariance>) -> Result<Self> {
        let j = t.items.len();
        let pairs = pair_list(j);
        let s = pairs.iter().map(|&(a, b)| t.rho[(a, b)]).collect();
        let variance: Vec<f64> = pairs.iter().map(|&(a, b)| t.variance[(a, b)]).collect();
        if let Some(p) = variance.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            let (a, b) = pairs[p];
            return Err(Error::Singular(format!(
                "no usable sampling variance for items {} and {}",
                t.items[a], t.items[b]
            )));
        }
        let cov = match boot {
            Some(bc) => {
                if bc.items != t.items {
                    return Err(Error::InvalidArgument(
                        "bootstrap covariance and correlation matrix cover different items".into(),
                    ));
                }
                Some(bc.cov.clone())
            }
            None => None,
        };
        Ok(CfaInput { items: t.items.clone(), n: t.n, s, variance, cov })
    }

    /// Input built from a known correlation matrix, with normal-theory
    /// variances (1 − ρ²)²/n. Used for perfect-fit checks.
    pub fn from_correlations(items: Vec<ItemId>, corr: &DMatrix<f64>, n: usize) -> Self {
        let pairs = pair_list(items.len());
        let s: Vec<f64> = pairs.iter().map(|&(a, b)| corr[(a, b)]).collect();
        let variance = s.iter().map(|r| (1.0 - r * r).powi(2) / n as f64).collect();
        CfaInput { items, n, s, variance, cov: None }
    }

    pub fn j(&self) -> usize {
        self.items.len()
    }

    /// Restrict to a subset of items, in the given order.
    pub fn select(&self, items: &[ItemId]) -> Result<Self> {
        let pos: Vec<usize> = items
            .iter()
            .map(|id| {
                self.items.iter().position(|x| x == id).ok_or_else(|| {
                    Error::InvalidArgument(format!("item {id} not in the correlation matrix"))
                })
            })
            .collect::<Result<_>>()?;
        let old = crate::latentcorr::PairIndex::new(self.j());
        let map: Vec<usize> = pair_list(items.len())
            .iter()
            .map(|&(a, b)| old.index(pos[a], pos[b]))
            .collect();
        Ok(CfaInput {
            items: items.to_vec(),
            n: self.n,
            s: map.iter().map(|&p| self.s[p]).collect(),
            variance: map.iter().map(|&p| self.variance[p]).collect(),
            cov: self
                .cov
                .as_ref()
                .map(|c| DMatrix::from_fn(map.len(), map.len(), |r, q| c[(map[r], map[q])])),
        })
    }

    pub fn sample_matrix(&self) -> DMatrix<f64> {
        vec_to_matrix(self.j(), &self.s)
    }

    /// DWLS weights on the per-observation scale.
    pub(crate) fn weights(&self) -> Vec<f64> {
        self.variance.iter().map(|v| 1.0 / (self.n as f64 * v)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfaOptions {
    /// Bootstrap replicates for the robust statistic and sandwich SEs; 0
    /// disables both.
    pub bootstrap: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for CfaOptions {
    fn default() -> Self {
        CfaOptions {
            bootstrap: 200,
            seed: 0,
            max_iter: 500,
            gradient_tol: 1e-8,
            step_tol: 1e-10,
            execution: Execution::default(),
        }
    }
}

/// Mean-and-variance adjusted statistic `scale * T + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustStatistic {
    pub chi2: f64,
    pub scale: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadingEstimate {
    pub item: ItemId,
    pub factor: String,
    pub primary: bool,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    /// Equal to `estimate` on the correlation metric.
    pub standardized: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub a: String,
    pub b: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualCorrelationEstimate {
    pub a: ItemId,
    pub b: ItemId,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineStats {
    pub chi2: f64,
    pub chi2_unadjusted: f64,
    pub df: usize,
    pub robust: Option<RobustStatistic>,
}

#[derive(Debug, Clone)]
pub struct CfaFit {
    pub model: CfaModel,
    pub n: usize,
    /// Natural parameters: loadings, factor correlations, residual correlations.
    pub theta: Vec<f64>,
    pub se: Vec<f64>,
    pub loadings: Vec<LoadingEstimate>,
    pub residual_correlations: Vec<ResidualCorrelationEstimate>,
    pub phi: DMatrix<f64>,
    pub phi_se: DMatrix<f64>,
    pub sample: DMatrix<f64>,
    pub implied: DMatrix<f64>,
    pub residual: DMatrix<f64>,
    /// Minimised DWLS discrepancy (per-observation weights).
    pub discrepancy: f64,
    pub df: usize,
    /// (N − 1)·F̂.
    pub chi2_unadjusted: f64,
    pub robust: Option<RobustStatistic>,
    pub baseline: BaselineStats,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Items whose loading or communality exceeds one.
    pub heywood: Vec<ItemId>,
    pub(crate) input: CfaInput,
}

impl CfaFit {
    /// Headline statistic: robust when a bootstrap covariance was supplied,
    /// unadjusted otherwise.
    pub fn chi2(&self) -> f64 {
        self.robust.map_or(self.chi2_unadjusted, |r| r.chi2)
    }

    pub fn p_value(&self) -> f64 {
        chi2_sf(self.chi2(), self.df as f64)
    }

    pub fn srmr(&self) -> f64 {
        let j = self.model.j();
        let pairs = pair_list(j);
        if pairs.is_empty() {
            return 0.0;
        }
        let ss: f64 = pairs.iter().map(|&(a, b)| self.residual[(a, b)].powi(2)).sum();
        (ss / pairs.len() as f64).sqrt()
    }

    pub fn is_admissible(&self) -> bool {
        self.heywood.is_empty()
    }

    /// DWLS discrepancy at arbitrary natural parameters of this model.
    pub fn objective_at(&self, theta: &[f64]) -> f64 {
        objective(&self.model, &self.input.s, &self.input.weights(), theta)
    }

    pub fn loading(&self, item: ItemId) -> Option<&LoadingEstimate> {
        self.loadings.iter().find(|l| l.item == item && l.primary)
    }
}

/// Factor correlation table with significance.
pub fn factor_correlations(fit: &CfaFit) -> Vec<CorrelationEstimate> {
    let names = &fit.model.factor_names;
    pair_list(fit.model.k())
        .into_iter()
        .map(|(f, g)| {
            let est = fit.phi[(f, g)];
            let se = fit.phi_se[(f, g)];
            let z = est / se;
            CorrelationEstimate {
                a: names[f].clone(),
                b: names[g].clone(),
                estimate: est,
                se,
                z,
                p_value: z_two_sided(z),
            }
        })
        .collect()
}

/// Compute the tetrachoric input (and bootstrap covariance when requested)
/// for the items of `spec`, then fit.
pub fn fit_cfa(ds: &ScoredMatrix, spec: &FactorSpec, opts: &CfaOptions) -> Result<CfaFit> {
    let model = CfaModel::from_spec(spec)?;
    let sub = ds.select_items(&model.items)?;
    let tetra = tetrachoric_matrix(&sub, &TetraOptions { execution: opts.execution })?;
    let boot = if opts.bootstrap > 0 {
        Some(bootstrap_covariance(&sub, opts.bootstrap, opts.seed, opts.execution)?)
    } else {
        None
    };
    let input = CfaInput::from_tetra(&tetra, boot.as_ref())?;
    fit_model(&model, &input, opts)
}

/// Fit a model (possibly with freed parameters) to prepared moments.
pub fn fit_model(model: &CfaModel, input: &CfaInput, opts: &CfaOptions) -> Result<CfaFit> {
    let input = if input.items == model.items { input.clone() } else { input.select(&model.items)? };
    let df = model.df()?;
    let w = input.weights();
    let (theta, iterations, gradient_norm, f_hat) = optimise(model, &input, &w, opts, None)?;
    Ok(assemble(model.clone(), input, w, theta, df, iterations, gradient_norm, f_hat))
}

/// Refit starting from a previous solution (used after freeing a parameter).
pub fn refit(fit: &CfaFit, model: &CfaModel, opts: &CfaOptions) -> Result<CfaFit> {
    let input = fit.input.select(&model.items)?;
    let df = model.df()?;
    let w = input.weights();
    let start = carry_start(&fit.model, &fit.theta, model);
    let (theta, iterations, gradient_norm, f_hat) =
        optimise(model, &input, &w, opts, Some(start))?;
    Ok(assemble(model.clone(), input, w, theta, df, iterations, gradient_norm, f_hat))
}

fn carry_start(old: &CfaModel, theta: &[f64], new: &CfaModel) -> Vec<f64> {
    let mut out = Vec::with_capacity(new.n_params());
    for &(i, f) in &new.loadings {
        let id = new.items[i];
        let fname = &new.factor_names[f];
        let v = old.loadings.iter().position(|&(oi, of)| {
            old.items[oi] == id && &old.factor_names[of] == fname
        });
        out.push(v.map_or(0.0, |p| theta[p]));
    }
    let (_, ophi, opsi) = old.unpack(theta);
    for (f, g) in pair_list(new.k()) {
        let of = old.factor_names.iter().position(|n| n == &new.factor_names[f]);
        let og = old.factor_names.iter().position(|n| n == &new.factor_names[g]);
        out.push(match (of, og) {
            (Some(a), Some(b)) => ophi[(a, b)],
            _ => 0.3,
        });
    }
    for &(a, b) in &new.residuals {
        let (ia, ib) = (new.items[a], new.items[b]);
        let v = old.residuals.iter().position(|&(oa, ob)| {
            let (x, y) = (old.items[oa], old.items[ob]);
            (x, y) == (ia, ib) || (x, y) == (ib, ia)
        });
        out.push(v.map_or(0.0, |p| opsi[p]));
    }
    out
}

fn default_start(model: &CfaModel) -> Vec<f64> {
    let mut theta = Vec::with_capacity(model.n_params());
    let mut seen = vec![false; model.j()];
    for &(i, _) in &model.loadings {
        theta.push(if seen[i] { 0.0 } else { 0.7 });
        seen[i] = true;
    }
    theta.extend(std::iter::repeat_n(0.3, model.n_phi()));
    theta.extend(std::iter::repeat_n(0.0, model.residuals.len()));
    theta
}

/// Natural → unconstrained (loadings and residuals unchanged, φ via CPC).
fn to_unconstrained(model: &CfaModel, theta: &[f64]) -> Vec<f64> {
    let (_, phi, _) = model.unpack(theta);
    let nl = model.loadings.len();
    let mut u = theta.to_vec();
    let cpc = cpc_from_corr(&phi).unwrap_or_else(|| vec![0.0; model.n_phi()]);
    u[nl..nl + model.n_phi()].copy_from_slice(&cpc);
    u
}

fn to_natural(model: &CfaModel, u: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let nl = model.loadings.len();
    let np = model.n_phi();
    let (phi, dphi) = corr_from_cpc(model.k(), &u[nl..nl + np]);
    let mut theta = u.to_vec();
    for (p, (f, g)) in pair_list(model.k()).into_iter().enumerate() {
        theta[nl + p] = phi[(f, g)];
    }
    (theta, dphi)
}

fn objective(model: &CfaModel, s: &[f64], w: &[f64], theta: &[f64]) -> f64 {
    let sigma = model.implied_vec(theta);
    s.iter().zip(&sigma).zip(w).map(|((s, m), w)| w * (s - m).powi(2)).sum()
}

/// Levenberg–Marquardt on the unconstrained parameters. Returns the natural
/// estimate, iteration count, final gradient norm and F̂.
fn optimise(
    model: &CfaModel,
    input: &CfaInput,
    w: &[f64],
    opts: &CfaOptions,
    start: Option<Vec<f64>>,
) -> Result<(Vec<f64>, usize, f64, f64)> {
    let m = model.n_params();
    let nl = model.loadings.len();
    let np = model.n_phi();
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let mut u = to_unconstrained(model, &start.unwrap_or_else(|| default_start(model)));
    let (mut theta, _) = to_natural(model, &u);
    let mut f = objective(model, &input.s, w, &theta);
    let mut lambda = 1e-3;
    let mut grad_norm = f64::INFINITY;

    for iter in 0..opts.max_iter {
        let (th, dphi) = to_natural(model, &u);
        theta = th;
        let sigma = model.implied_vec(&theta);
        let jac_nat = model.jacobian(&theta);
        // chain rule through the CPC block
        let mut jac = jac_nat.clone();
        if np > 0 {
            let block = jac_nat.columns(nl, np) * &dphi;
            jac.columns_mut(nl, np).copy_from(&block);
        }
        let r = DVector::from_iterator(
            sigma.len(),
            input.s.iter().zip(&sigma).zip(&sw).map(|((s, m), sw)| sw * (s - m)),
        );
        for (row, swr) in sw.iter().enumerate() {
            jac.row_mut(row).scale_mut(*swr);
        }
        // F = rᵀr with r = √w (s − σ); ∇F = −2 Jᵀ r
        let g = jac.transpose() * &r;
        grad_norm = 2.0 * g.norm();
        if grad_norm < opts.gradient_tol {
            return Ok((theta, iter, grad_norm, f));
        }
        let a = jac.transpose() * &jac;
        let mut accepted = false;
        for _ in 0..60 {
            let mut damped = a.clone();
            for d in 0..m {
                damped[(d, d)] += lambda * a[(d, d)].max(1e-12);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&g),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let cand: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let (ct, _) = to_natural(model, &cand);
            let cf = objective(model, &input.s, w, &ct);
            if cf.is_finite() && cf <= f {
                let small = step.norm() < opts.step_tol;
                u = cand;
                theta = ct;
                f = cf;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small {
                    return Ok((theta, iter + 1, grad_norm, f));
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent direction left at machine precision
            return Ok((theta, iter + 1, grad_norm, f));
        }
    }
    Err(Error::NoConvergence {
        method: "DWLS",
        iterations: opts.max_iter,
        last_change: grad_norm,
        trace: Vec::new(),
    })
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    model: CfaModel,
    input: CfaInput,
    w: Vec<f64>,
    theta: Vec<f64>,
    df: usize,
    iterations: usize,
    gradient_norm: f64,
    f_hat: f64,
) -> CfaFit {
    let n = input.n;
    let nf = n as f64;
    let m = model.n_params();
    let delta = model.jacobian(&theta);
    let wd = scale_rows(&delta, &w);
    let h = delta.transpose() * &wd;
    let h_inv = h.clone().try_inverse();

    // sandwich covariance of θ̂
    let cov_theta = h_inv.as_ref().map(|hi| {
        let meat = match &input.cov {
            Some(c) => wd.transpose() * c * &wd,
            None => {
                let d: Vec<f64> = w.iter().zip(&input.variance).map(|(w, v)| w * w * v).collect();
                delta.transpose() * scale_rows(&delta, &d)
            }
        };
        hi * meat * hi
    });
    let se: Vec<f64> = (0..m)
        .map(|p| cov_theta.as_ref().map_or(f64::NAN, |c| c[(p, p)].max(0.0).sqrt()))
        .collect();

    let chi2_unadjusted = (nf - 1.0) * f_hat;
    let gamma = input.cov.as_ref().map(|c| c * nf);
    let robust = gamma.as_ref().and_then(|g| {
        let u = match &h_inv {
            Some(hi) => {
                let mut u = DMatrix::from_diagonal(&DVector::from_column_slice(&w));
                u -= &wd * hi * wd.transpose();
                u
            }
            None => return None,
        };
        scaled_shifted(&u, g, df, chi2_unadjusted)
    });

    let baseline = {
        let f_b: f64 = input.s.iter().zip(&w).map(|(s, w)| w * s * s).sum();
        let t_b = (nf - 1.0) * f_b;
        let df_b = model.n_moments();
        let r = gamma.as_ref().and_then(|g| {
            let u = DMatrix::from_diagonal(&DVector::from_column_slice(&w));
            scaled_shifted(&u, g, df_b, t_b)
        });
        BaselineStats { chi2: r.map_or(t_b, |r| r.chi2), chi2_unadjusted: t_b, df: df_b, robust: r }
    };

    let (lam, phi, psi) = model.unpack(&theta);
    let loadings: Vec<LoadingEstimate> = model
        .loadings
        .iter()
        .enumerate()
        .map(|(p, &(i, f))| {
            let z = theta[p] / se[p];
            LoadingEstimate {
                item: model.items[i],
                factor: model.factor_names[f].clone(),
                primary: model.primary_factor(i) == f,
                estimate: theta[p],
                se: se[p],
                z,
                p_value: z_two_sided(z),
                standardized: theta[p],
            }
        })
        .collect();
    let nl = model.loadings.len();
    let mut phi_se = DMatrix::zeros(model.k(), model.k());
    for (p, (f, g)) in pair_list(model.k()).into_iter().enumerate() {
        phi_se[(f, g)] = se[nl + p];
        phi_se[(g, f)] = se[nl + p];
    }
    let off = nl + model.n_phi();
    let residual_correlations = model
        .residuals
        .iter()
        .enumerate()
        .map(|(p, &(a, b))| ResidualCorrelationEstimate {
            a: model.items[a],
            b: model.items[b],
            estimate: psi[p],
            se: se[off + p],
        })
        .collect();

    let communality = (&lam * &phi * lam.transpose()).diagonal();
    let heywood = (0..model.j())
        .filter(|&i| {
            communality[i] > 1.0 + 1e-9 || (0..model.k()).any(|f| lam[(i, f)].abs() > 1.0)
        })
        .map(|i| model.items[i])
        .collect();

    let sample = input.sample_matrix();
    let implied = model.implied_matrix(&theta);
    let residual = &sample - &implied;
    CfaFit {
        model,
        n,
        theta,
        se,
        loadings,
        residual_correlations,
        phi,
        phi_se,
        sample,
        implied,
        residual,
        discrepancy: f_hat,
        df,
        chi2_unadjusted,
        robust,
        baseline,
        iterations,
        gradient_norm,
        heywood,
        input,
    }
}

pub(crate) fn scale_rows(m: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (r, wr) in w.iter().enumerate() {
        out.row_mut(r).scale_mut(*wr);
    }
    out
}

/// Satorra–Bentler style mean-and-variance adjustment with a shift so the
/// adjusted statistic has mean and variance of χ²(df).
fn scaled_shifted(u: &DMatrix<f64>, gamma: &DMatrix<f64>, df: usize, t: f64) -> Option<RobustStatistic> {
    if df == 0 {
        return None;
    }
    let ug = u * gamma;
    let tr1 = ug.trace();
    let tr2 = (&ug * &ug).trace();
    if !(tr2 > 0.0) {
        return None;
    }
    let d = df as f64;
    let scale = (d / tr2).sqrt();
    let shift = d - scale * tr1;
    Some(RobustStatistic { chi2: scale * t + shift, scale, shift })
}
