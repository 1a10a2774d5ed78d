//! Kaiser-Meyer-Olkin sampling adequacy and Bartlett's sphericity test.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::chi2_sf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kmo {
    pub overall: f64,
    pub per_item: Vec<f64>,
}

/// KMO from anti-image partial correlations.
pub fn kmo(corr: &DMatrix<f64>) -> Result<Kmo> {
    let p = corr.nrows();
    if p < 2 || corr.ncols() != p {
        return Err(Error::InvalidArgument("KMO needs a square matrix with at least two variables".into()));
    }
    let inv = corr
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("correlation matrix is not invertible; apply eigenvalue smoothing".into()))?;
    let mut r2 = vec![0.0; p];
    let mut q2 = vec![0.0; p];
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let q = -inv[(i, j)] / (inv[(i, i)] * inv[(j, j)]).sqrt();
            r2[i] += corr[(i, j)].powi(2);
            q2[i] += q * q;
        }
    }
    let (sr, sq): (f64, f64) = (r2.iter().sum(), q2.iter().sum());
    Ok(Kmo {
        overall: sr / (sr + sq),
        per_item: r2.iter().zip(&q2).map(|(r, q)| r / (r + q)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bartlett {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
}

/// χ² = -(n - 1 - (2p + 5)/6) ln|R| on p(p-1)/2 degrees of freedom.
pub fn bartlett(corr: &DMatrix<f64>, n: usize) -> Result<Bartlett> {
    let p = corr.nrows();
    let chol = corr
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("Bartlett's test needs a positive definite matrix".into()))?;
    let ln_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let chi2 = -((n as f64 - 1.0) - (2.0 * p as f64 + 5.0) / 6.0) * ln_det;
    let df = p * (p - 1) / 2;
    Ok(Bartlett {
        chi2,
        df,
        p_value: chi2_sf(chi2, df as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_variables_give_half() {
        for r in [0.1, -0.4, 0.8] {
            let m = DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]);
            let k = kmo(&m).unwrap();
            assert_abs_diff_eq!(k.overall, 0.5, epsilon = 1e-12);
            assert!(k.per_item.iter().all(|v| (v - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(kmo(&m), Err(Error::Singular(_))));
        assert!(bartlett(&m, 100).is_err());
    }

    #[test]
    fn identity_has_zero_statistic() {
        let b = bartlett(&DMatrix::identity(25, 25), 1519).unwrap();
        assert_abs_diff_eq!(b.chi2, 0.0, epsilon = 1e-12);
        assert_eq!(b.df, 300);
        assert_abs_diff_eq!(b.p_value, 1.0);
    }

    #[test]
    fn bartlett_by_hand() {
        // det = 1 - r², p = 2: χ² = -(n - 1 - 9/6) ln(1 - r²)
        let r: f64 = 0.3;
        let m = DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]);
        let b = bartlett(&m, 50).unwrap();
        assert_abs_diff_eq!(b.chi2, -(49.0 - 1.5) * (1.0 - r * r).ln(), epsilon = 1e-12);
        assert_eq!(b.df, 1);
    }

    #[test]
    fn kmo_is_permutation_invariant() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[1.0, 0.5, 0.3, 0.2, 0.5, 1.0, 0.4, 0.1, 0.3, 0.4, 1.0, 0.35, 0.2, 0.1, 0.35, 1.0],
        );
        let perm = [2, 0, 3, 1];
        let pm = DMatrix::from_fn(4, 4, |r, c| m[(perm[r], perm[c])]);
        let (a, b) = (kmo(&m).unwrap(), kmo(&pm).unwrap());
        assert_abs_diff_eq!(a.overall, b.overall, epsilon = 1e-14);
        for (i, &p) in perm.iter().enumerate() {
            assert_abs_diff_eq!(b.per_item[i], a.per_item[p], epsilon = 1e-14);
        }
    }
}
