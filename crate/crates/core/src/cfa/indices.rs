use serde::{Deserialize, Serialize};

use super::fit::CfaFit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitIndices {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
    pub chi2_over_df: f64,
    pub cfi: f64,
    pub tli: f64,
    /// `None` when df = 0.
    pub rmsea: Option<f64>,
    pub srmr: f64,
    pub chi2_unadjusted: f64,
    pub baseline_chi2: f64,
    pub baseline_df: usize,
}

impl FitIndices {
    /// Incremental and absolute indices from the target and baseline
    /// statistics. TLI is truncated at 1; CFI lies in [0, 1].
    pub fn from_stats(chi2: f64, df: usize, chi2_b: f64, df_b: usize, n: usize, srmr: f64) -> Self {
        let d = df as f64;
        let db = df_b as f64;
        let excess = (chi2 - d).max(0.0);
        let excess_b = (chi2_b - db).max(0.0);
        let denom = excess.max(excess_b);
        let cfi = if denom > 0.0 { 1.0 - excess / denom } else { 1.0 };
        let tli = if df > 0 && df_b > 0 {
            let rb = chi2_b / db;
            let num = rb - chi2 / d;
            if rb - 1.0 > 0.0 {
                (num / (rb - 1.0)).min(1.0)
            } else {
                1.0
            }
        } else {
            1.0
        };
        let rmsea = (df > 0).then(|| (excess / (d * (n as f64 - 1.0))).sqrt());
        FitIndices {
            chi2,
            df,
            p_value: crate::stats::chi2_sf(chi2, d),
            chi2_over_df: if df > 0 { chi2 / d } else { f64::NAN },
            cfi,
            tli,
            rmsea,
            srmr,
            chi2_unadjusted: chi2,
            baseline_chi2: chi2_b,
            baseline_df: df_b,
        }
    }
}

/// Fit indices of `fit` against its independence baseline, using the robust
/// statistics when available.
pub fn fit_indices(fit: &CfaFit) -> FitIndices {
    let mut fi = FitIndices::from_stats(
        fit.chi2(),
        fit.df,
        fit.baseline.chi2,
        fit.baseline.df,
        fit.n,
        fit.srmr(),
    );
    fi.chi2_unadjusted = fit.chi2_unadjusted;
    fi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rmsea_formula() {
        let fi = FitIndices::from_stats(551.0, 260, 7000.0, 300, 1519, 0.05);
        assert_abs_diff_eq!(fi.rmsea.unwrap(), (291.0f64 / (260.0 * 1518.0)).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(fi.rmsea.unwrap(), 0.027, epsilon = 0.0005);
        assert_abs_diff_eq!(fi.chi2_over_df, 551.0 / 260.0, epsilon = 1e-15);
    }

    #[test]
    fn perfect_fit() {
        let fi = FitIndices::from_stats(260.0, 260, 7000.0, 300, 1519, 0.0);
        assert_eq!(fi.rmsea, Some(0.0));
        assert_eq!(fi.cfi, 1.0);
        let fi = FitIndices::from_stats(0.0, 260, 7000.0, 300, 1519, 0.0);
        assert_eq!(fi.tli, 1.0);
    }

    #[test]
    fn saturated_has_no_rmsea() {
        let fi = FitIndices::from_stats(0.0, 0, 100.0, 3, 100, 0.0);
        assert!(fi.rmsea.is_none());
    }

    #[test]
    fn doubling_n() {
        let a = FitIndices::from_stats(551.0, 260, 7000.0, 300, 1519, 0.05);
        let b = FitIndices::from_stats(551.0, 260, 7000.0, 300, 3038, 0.05);
        assert_eq!(a.cfi, b.cfi);
        assert_eq!(a.tli, b.tli);
        assert_eq!(a.srmr, b.srmr);
        let ratio = a.rmsea.unwrap() / b.rmsea.unwrap();
        assert_abs_diff_eq!(ratio, (3037.0f64 / 1518.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn cfi_bounds() {
        // target worse than baseline
        let fi = FitIndices::from_stats(900.0, 10, 500.0, 15, 200, 0.2);
        assert!((0.0..=1.0).contains(&fi.cfi));
    }
}
