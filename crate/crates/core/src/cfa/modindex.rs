use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::fit::{scale_rows, CfaFit};
use super::model::FreeParam;
use crate::dataset::ItemId;

/// A fixed parameter described by item ids and factor name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamDescriptor {
    CrossLoading { item: ItemId, factor: String },
    ResidualCorrelation { a: ItemId, b: ItemId },
}

impl ParamDescriptor {
    /// Items involved in the parameter.
    pub fn items(&self) -> Vec<ItemId> {
        match self {
            ParamDescriptor::CrossLoading { item, .. } => vec![*item],
            ParamDescriptor::ResidualCorrelation { a, b } => vec![*a, *b],
        }
    }
}

impl std::fmt::Display for ParamDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamDescriptor::CrossLoading { item, factor } => write!(f, "{factor} =~ Q{item}"),
            ParamDescriptor::ResidualCorrelation { a, b } => write!(f, "Q{a} ~~ Q{b}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModificationIndex {
    pub param: ParamDescriptor,
    #[serde(skip)]
    pub free: Option<FreeParam>,
    /// Expected decrease of the unadjusted statistic; `None` when the
    /// information for this parameter is singular.
    pub mi: Option<f64>,
    /// Expected parameter change.
    pub epc: Option<f64>,
}

/// Univariate score statistics for every fixed cross-loading and residual
/// correlation, sorted descending (undefined entries last).
pub fn modification_indices(fit: &CfaFit) -> Vec<ModificationIndex> {
    let model = &fit.model;
    let w = fit.input.weights();
    let delta = model.jacobian(&fit.theta);
    let wd = scale_rows(&delta, &w);
    let h_inv = (delta.transpose() * &wd).try_inverse();
    let sigma = model.implied_vec(&fit.theta);
    let we = DVector::from_iterator(
        w.len(),
        fit.input.s.iter().zip(&sigma).zip(&w).map(|((s, m), w)| w * (s - m)),
    );
    let scale = fit.n as f64 - 1.0;

    let mut out: Vec<ModificationIndex> = model
        .fixed_params()
        .into_iter()
        .map(|p| {
            let dc = DVector::from_vec(model.fixed_derivative(&fit.theta, p));
            let d = dc.dot(&we);
            let wdc = dc.component_mul(&DVector::from_column_slice(&w));
            let cc = dc.dot(&wdc);
            let (mi, epc) = match &h_inv {
                Some(hi) => {
                    let cross = wd.transpose() * &dc;
                    let s = cc - (cross.transpose() * hi * &cross)[(0, 0)];
                    if s > 1e-10 * cc.max(f64::MIN_POSITIVE) {
                        (Some((scale * d * d / s).max(0.0)), Some(d / s))
                    } else {
                        (None, None)
                    }
                }
                None => (None, None),
            };
            let param = match p {
                FreeParam::CrossLoading { item, factor } => ParamDescriptor::CrossLoading {
                    item: model.items[item],
                    factor: model.factor_names[factor].clone(),
                },
                FreeParam::ResidualCorrelation { a, b } => ParamDescriptor::ResidualCorrelation {
                    a: model.items[a],
                    b: model.items[b],
                },
            };
            ModificationIndex { param, free: Some(p), mi, epc }
        })
        .collect();
    out.sort_by(|a, b| match (a.mi, b.mi) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    out
}
