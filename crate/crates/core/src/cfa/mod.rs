//! Confirmatory factor analysis on tetrachoric correlations by diagonally
//! weighted least squares, with robust fit statistics and modification
//! indices.

mod fit;
mod indices;
mod model;
mod modindex;

pub use fit::{
    factor_correlations, fit_cfa, fit_model, refit, BaselineStats, CfaFit, CfaInput, CfaOptions,
    CorrelationEstimate, LoadingEstimate, ResidualCorrelationEstimate, RobustStatistic,
};
pub use indices::{fit_indices, FitIndices};
pub use model::{corr_from_cpc, cpc_from_corr, model_df, CfaModel, FreeParam};
pub use modindex::{modification_indices, ModificationIndex, ParamDescriptor};
