use serde::{Deserialize, Serialize};

use super::IrtFit;
use crate::dataset::ItemId;
use crate::error::Result;
use crate::stats::{fmt6, logistic};

pub fn icc(a: f64, b: f64, theta: f64) -> f64 {
    logistic(a * (theta - b))
}

/// Item information a²·P·(1 − P).
pub fn iic(a: f64, b: f64, theta: f64) -> f64 {
    let p = icc(a, b, theta);
    a * a * p * (1.0 - p)
}

/// Evenly spaced ability values for curve emission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityGrid {
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

impl Default for AbilityGrid {
    fn default() -> Self {
        AbilityGrid { from: -4.0, to: 4.0, step: 0.05 }
    }
}

impl AbilityGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.to - self.from) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.from + i as f64 * self.step).collect()
    }
}

/// Test information: pointwise sum of item information.
pub fn tif(fit: &IrtFit, grid: &AbilityGrid) -> Vec<TifPoint> {
    grid.points()
        .into_iter()
        .map(|theta| TifPoint {
            theta,
            tif: fit.items.iter().map(|p| iic(p.a, p.b, theta)).sum(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub item: ItemId,
    pub theta: f64,
    pub icc: f64,
    pub iic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TifPoint {
    pub theta: f64,
    pub tif: f64,
}

/// Long-format item curves and the test information curve.
pub fn emit_curves(fit: &IrtFit, grid: &AbilityGrid) -> (Vec<CurvePoint>, Vec<TifPoint>) {
    let pts = grid.points();
    let curves = fit
        .items
        .iter()
        .flat_map(|p| {
            pts.iter().map(move |&theta| CurvePoint {
                item: p.item,
                theta,
                icc: icc(p.a, p.b, theta),
                iic: iic(p.a, p.b, theta),
            })
        })
        .collect();
    (curves, tif(fit, grid))
}

pub fn write_curves_csv<W: std::io::Write>(w: W, curves: &[CurvePoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["item", "theta", "icc", "iic"])?;
    for c in curves {
        out.write_record([c.item.to_string(), fmt6(c.theta), fmt6(c.icc), fmt6(c.iic)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_tif_csv<W: std::io::Write>(w: W, points: &[TifPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["theta", "tif"])?;
    for p in points {
        out.write_record([fmt6(p.theta), fmt6(p.tif)])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icc_values() {
        assert_eq!(icc(1.7, 0.4, 0.4), 0.5);
        let p = icc(1.18, -2.40, 0.0);
        assert!((p - 1.0 / (1.0 + (-2.832f64).exp())).abs() < 1e-15);
        assert!((p - 0.944).abs() < 0.0005);
        assert_eq!(icc(1.0, 0.0, 1e6), 1.0);
    }

    #[test]
    fn iic_peak() {
        assert_eq!(iic(1.4, -0.3, -0.3), 1.4 * 1.4 / 4.0);
        assert_eq!(iic(0.0, 1.0, 0.3), 0.0);
        let grid = AbilityGrid::default();
        let pts = grid.points();
        assert_eq!(pts.len(), 161);
        for b in [-2.4, -0.37, 0.0, 0.69, 2.8] {
            let best = pts
                .iter()
                .copied()
                .max_by(|x, y| iic(1.3, b, *x).total_cmp(&iic(1.3, b, *y)))
                .unwrap();
            assert!((best - b).abs() <= grid.step + 1e-12);
        }
    }
}
