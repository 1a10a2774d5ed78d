//! Bivariate-normal machinery, tetrachoric correlations and factorability
//! diagnostics.

mod bvn;
mod factorability;
mod tetrachoric;

pub use bvn::{bvn_cdf, bvn_pdf};
pub use factorability::{bartlett, kmo, Bartlett, Kmo};
pub use tetrachoric::{
    bootstrap_covariance, phi_matrix, smooth_psd, table_loglik, tetrachoric_from_table,
    tetrachoric_matrix, BootstrapCovariance, Smoothed, Table2x2, TetraEstimate, TetraMatrix,
    TetraOptions, RHO_CAP,
};

use serde::{Deserialize, Serialize};

/// Which correlation matrix feeds KMO and Bartlett.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    #[default]
    Tetrachoric,
    Pearson,
}

/// Upper-triangle pairs `(a, b)`, `a < b`, in row-major order.
pub fn pair_list(j: usize) -> Vec<(usize, usize)> {
    (0..j).flat_map(|a| (a + 1..j).map(move |b| (a, b))).collect()
}

/// Position of a pair within [`pair_list`].
#[derive(Debug, Clone, Copy)]
pub struct PairIndex {
    j: usize,
}

impl PairIndex {
    pub fn new(j: usize) -> Self {
        PairIndex { j }
    }

    pub fn len(&self) -> usize {
        self.j * self.j.saturating_sub(1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        a * (2 * self.j - a - 1) / 2 + (b - a - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_index_matches_list() {
        let j = 7;
        let idx = PairIndex::new(j);
        for (p, &(a, b)) in pair_list(j).iter().enumerate() {
            assert_eq!(idx.index(a, b), p);
            assert_eq!(idx.index(b, a), p);
        }
        assert_eq!(idx.len(), 21);
    }
}
