//! 1PL and 2PL logistic item response models fitted by marginal maximum
//! likelihood (Bock–Aitkin EM over Gauss–Hermite quadrature), information
//! curves and likelihood-ratio comparison.

mod curves;

pub use curves::{
    emit_curves, icc, iic, tif, write_curves_csv, write_tif_csv, AbilityGrid, CurvePoint, TifPoint,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{ItemId, ScoredMatrix};
use crate::error::{Error, Result};
use crate::par::{map_chunks, Execution};
use crate::quadrature::{gauss_hermite_normal, Rule};
use crate::stats::{chi2_sf, logistic, norm_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IrtModel {
    #[serde(rename = "1PL")]
    OnePl,
    #[serde(rename = "2PL")]
    TwoPl,
}

impl IrtModel {
    pub fn label(self) -> &'static str {
        match self {
            IrtModel::OnePl => "1PL",
            IrtModel::TwoPl => "2PL",
        }
    }

    pub fn n_params(self, j: usize) -> usize {
        match self {
            IrtModel::OnePl => j + 1,
            IrtModel::TwoPl => 2 * j,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrtOptions {
    pub quadrature: usize,
    pub max_iter: usize,
    /// Largest absolute change in any item parameter.
    pub param_tol: f64,
    pub loglik_tol: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for IrtOptions {
    fn default() -> Self {
        IrtOptions { quadrature: 49, max_iter: 5000, param_tol: 1e-4, loglik_tol: 1e-6, execution: Execution::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemParams {
    pub item: ItemId,
    /// Discrimination (logit units).
    pub a: f64,
    /// Difficulty on the ability scale.
    pub b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrtFit {
    pub model: IrtModel,
    pub items: Vec<ItemParams>,
    pub n: usize,
    pub loglik: f64,
    pub k: usize,
    pub aic: f64,
    pub bic: f64,
    pub iterations: usize,
    pub quadrature: usize,
    /// Marginal log-likelihood before each M-step.
    pub trace: Vec<f64>,
    /// False if any EM step lowered the log-likelihood beyond rounding.
    pub monotone: bool,
}

impl IrtFit {
    pub fn a(&self) -> Vec<f64> {
        self.items.iter().map(|p| p.a).collect()
    }

    pub fn b(&self) -> Vec<f64> {
        self.items.iter().map(|p| p.b).collect()
    }
}

pub fn aic(loglik: f64, k: usize) -> f64 {
    -2.0 * loglik + 2.0 * k as f64
}

pub fn bic(loglik: f64, k: usize, n: usize) -> f64 {
    -2.0 * loglik + k as f64 * (n as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lrt {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Likelihood-ratio test of a 1PL fit nested in a 2PL fit on the same data.
pub fn lrt_compare(small: &IrtFit, big: &IrtFit) -> Result<Lrt> {
    let same_items = small.items.len() == big.items.len()
        && small.items.iter().zip(&big.items).all(|(a, b)| a.item == b.item);
    if !same_items || small.n != big.n || small.k >= big.k {
        return Err(Error::InvalidArgument("fits are not nested on the same data".into()));
    }
    let statistic = 2.0 * (big.loglik - small.loglik);
    let df = big.k - small.k;
    Ok(Lrt { statistic, df, p_value: chi2_sf(statistic.max(0.0), df as f64) })
}

/// Expected counts from one E-step.
struct Expected {
    /// Σ_i posterior(i, q)
    nq: Vec<f64>,
    /// Σ_i posterior(i, q)·y_ij, item-major (J × Q)
    rjq: Vec<f64>,
    loglik: f64,
}

const CHUNK: usize = 64;

fn e_step(ds: &ScoredMatrix, rule: &Rule, a: &[f64], d: &[f64], exec: Execution) -> Expected {
    let (j, q) = (ds.j(), rule.nodes.len());
    let mut lp1 = vec![0.0; j * q];
    let mut lp0 = vec![0.0; j * q];
    for it in 0..j {
        for (k, &t) in rule.nodes.iter().enumerate() {
            let z = a[it] * t + d[it];
            // log σ(z) and log σ(−z) without overflow
            lp1[it * q + k] = -softplus(-z);
            lp0[it * q + k] = -softplus(z);
        }
    }
    let logw: Vec<f64> = rule.weights.iter().map(|w| w.ln()).collect();
    let parts = map_chunks(exec, ds.n(), CHUNK, |rows| {
        let mut nq = vec![0.0; q];
        let mut rjq = vec![0.0; j * q];
        let mut ll = 0.0;
        let mut lq = vec![0.0; q];
        for i in rows {
            lq.copy_from_slice(&logw);
            let row = ds.row(i);
            for (it, &y) in row.iter().enumerate() {
                let tab = if y == 1 { &lp1 } else { &lp0 };
                for k in 0..q {
                    lq[k] += tab[it * q + k];
                }
            }
            let m = lq.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in lq.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            ll += m + s.ln();
            for k in 0..q {
                let post = lq[k] / s;
                nq[k] += post;
                for (it, &y) in row.iter().enumerate() {
                    if y == 1 {
                        rjq[it * q + k] += post;
                    }
                }
            }
        }
        (nq, rjq, ll)
    });
    let mut out = Expected { nq: vec![0.0; q], rjq: vec![0.0; j * q], loglik: 0.0 };
    for (nq, rjq, ll) in parts {
        out.nq.iter_mut().zip(&nq).for_each(|(a, b)| *a += b);
        out.rjq.iter_mut().zip(&rjq).for_each(|(a, b)| *a += b);
        out.loglik += ll;
    }
    out
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Expected complete-data log-likelihood of one item and its derivatives in
/// (a, d).
fn item_terms(nodes: &[f64], nq: &[f64], r: &[f64], a: f64, d: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let mut f = 0.0;
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for k in 0..nodes.len() {
        let t = nodes[k];
        let z = a * t + d;
        let p = logistic(z);
        f += r[k] * -softplus(-z) + (nq[k] - r[k]) * -softplus(z);
        let res = r[k] - nq[k] * p;
        g[0] += res * t;
        g[1] += res;
        let v = nq[k] * p * (1.0 - p);
        h[0][0] -= v * t * t;
        h[0][1] -= v * t;
        h[1][1] -= v;
    }
    h[1][0] = h[0][1];
    (f, g, h)
}

fn m_step_2pl(nodes: &[f64], ex: &Expected, a: &mut [f64], d: &mut [f64]) {
    let q = nodes.len();
    for it in 0..a.len() {
        let r = &ex.rjq[it * q..(it + 1) * q];
        for _ in 0..50 {
            let (f0, g, h) = item_terms(nodes, &ex.nq, r, a[it], d[it]);
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            if !(det > 0.0 && h[0][0] < 0.0) {
                break;
            }
            let da = -(h[1][1] * g[0] - h[0][1] * g[1]) / det;
            let dd = -(-h[1][0] * g[0] + h[0][0] * g[1]) / det;
            let mut step = 1.0;
            loop {
                let (na, nd) = (a[it] + step * da, d[it] + step * dd);
                let (f1, _, _) = item_terms(nodes, &ex.nq, r, na, nd);
                if f1 >= f0 - 1e-12 * f0.abs() || step < 1e-6 {
                    a[it] = na;
                    d[it] = nd;
                    break;
                }
                step *= 0.5;
            }
            if (step * da).abs().max((step * dd).abs()) < 1e-10 {
                break;
            }
        }
    }
}

/// Common slope, item intercepts: a (J+1)-parameter Newton step.
fn m_step_1pl(nodes: &[f64], ex: &Expected, a: &mut [f64], d: &mut [f64]) {
    let j = d.len();
    let q = nodes.len();
    let total = |slope: f64, dd: &[f64]| -> f64 {
        (0..j).map(|it| item_terms(nodes, &ex.nq, &ex.rjq[it * q..(it + 1) * q], slope, dd[it]).0).sum()
    };
    for _ in 0..50 {
        let slope = a[0];
        let mut grad = DVector::zeros(j + 1);
        let mut hess = DMatrix::zeros(j + 1, j + 1);
        for it in 0..j {
            let (_, g, h) = item_terms(nodes, &ex.nq, &ex.rjq[it * q..(it + 1) * q], slope, d[it]);
            grad[it] = g[1];
            grad[j] += g[0];
            hess[(it, it)] = h[1][1];
            hess[(it, j)] = h[0][1];
            hess[(j, it)] = h[0][1];
            hess[(j, j)] += h[0][0];
        }
        let neg = -hess;
        let Some(ch) = neg.cholesky() else { break };
        let step = ch.solve(&grad);
        let f0 = total(slope, d);
        let mut s = 1.0;
        loop {
            let nd: Vec<f64> = (0..j).map(|it| d[it] + s * step[it]).collect();
            let na = slope + s * step[j];
            if total(na, &nd) >= f0 - 1e-12 * f0.abs() || s < 1e-6 {
                d.copy_from_slice(&nd);
                a.iter_mut().for_each(|x| *x = na);
                break;
            }
            s *= 0.5;
        }
        if s * step.amax() < 1e-10 {
            break;
        }
    }
}

/// Fit a 1PL (common discrimination) or 2PL model.
pub fn fit_irt(ds: &ScoredMatrix, model: IrtModel, opts: &IrtOptions) -> Result<IrtFit> {
    let (n, j) = (ds.n(), ds.j());
    if n < 2 {
        return Err(Error::SubsetTooSmall { n });
    }
    let p: Vec<f64> = (0..j).map(|c| ds.column(c).iter().sum::<f64>() / n as f64).collect();
    let degenerate: Vec<ItemId> = p
        .iter()
        .zip(ds.item_ids())
        .filter(|(p, _)| **p <= 0.0 || **p >= 1.0)
        .map(|(_, id)| *id)
        .collect();
    if !degenerate.is_empty() {
        return Err(Error::DegenerateItems { items: degenerate });
    }
    let rule = gauss_hermite_normal(opts.quadrature);
    let mut a = vec![1.0; j];
    // marginal P(correct) under a = 1 is about Φ(−b/1.974)
    let mut d: Vec<f64> = p.iter().map(|&p| 1.974 * norm_quantile(p)).collect();
    let mut trace = Vec::new();
    let mut monotone = true;
    let mut prev = f64::NEG_INFINITY;
    for iter in 0..opts.max_iter {
        let ex = e_step(ds, &rule, &a, &d, opts.execution);
        if ex.loglik < prev - 1e-9 * prev.abs().max(1.0) {
            monotone = false;
        }
        trace.push(ex.loglik);
        let (a0, d0) = (a.clone(), d.clone());
        match model {
            IrtModel::OnePl => m_step_1pl(&rule.nodes, &ex, &mut a, &mut d),
            IrtModel::TwoPl => m_step_2pl(&rule.nodes, &ex, &mut a, &mut d),
        }
        let change = (0..j)
            .map(|i| {
                let (b_old, b_new) = (-d0[i] / a0[i], -d[i] / a[i]);
                (a[i] - a0[i]).abs().max((b_new - b_old).abs())
            })
            .fold(0.0, f64::max);
        let dll = ex.loglik - prev;
        prev = ex.loglik;
        if change < opts.param_tol && dll.abs() < opts.loglik_tol {
            let loglik = e_step(ds, &rule, &a, &d, opts.execution).loglik;
            let k = model.n_params(j);
            let items = ds
                .item_ids()
                .iter()
                .enumerate()
                .map(|(i, &item)| ItemParams { item, a: a[i], b: -d[i] / a[i] })
                .collect();
            return Ok(IrtFit {
                model,
                items,
                n,
                loglik,
                k,
                aic: aic(loglik, k),
                bic: bic(loglik, k, n),
                iterations: iter + 1,
                quadrature: opts.quadrature,
                trace,
                monotone,
            });
        }
    }
    let last_change = trace.windows(2).last().map_or(f64::NAN, |w| w[1] - w[0]);
    Err(Error::NoConvergence { method: "EM", iterations: opts.max_iter, last_change, trace })
}
