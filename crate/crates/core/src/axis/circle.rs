use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleFit {
    pub center: [f64; 2],
    pub radius: f64,
    /// RMS radial error.
    pub residual: f64,
    pub points: usize,
}

/// Algebraic least-squares circle through `(y, z)` points: minimises
/// `Σ (y² + z² + A·y + B·z + C)²`.
pub fn fit_circle(points: &[[f64; 2]]) -> Result<CircleFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "circle fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    // Centre the data for conditioning.
    let n = points.len() as f64;
    let my = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let mz = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    let (mut suuu, mut svvv, mut suvv, mut svuu) = (0.0, 0.0, 0.0, 0.0);
    for p in points {
        let u = p[0] - my;
        let v = p[1] - mz;
        suu += u * u;
        suv += u * v;
        svv += v * v;
        suuu += u * u * u;
        svvv += v * v * v;
        suvv += u * v * v;
        svuu += v * u * u;
    }
    let det = suu * svv - suv * suv;
    let scale = (suu + svv).powi(2);
    if !(det > 1e-12 * scale) {
        return Err(Error::Degenerate("circle fit points are collinear".into()));
    }
    let ru = 0.5 * (suuu + suvv);
    let rv = 0.5 * (svvv + svuu);
    let uc = (svv * ru - suv * rv) / det;
    let vc = (suu * rv - suv * ru) / det;
    let radius = (uc * uc + vc * vc + (suu + svv) / n).sqrt();
    let center = [uc + my, vc + mz];
    let residual = (points
        .iter()
        .map(|p| ((p[0] - center[0]).hypot(p[1] - center[1]) - radius).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(CircleFit { center, radius, residual, points: points.len() })
}

/// Circle fit that repeatedly drops points whose radial error exceeds
/// `k` robust standard deviations (but never below `floor`), so stray
/// points from other surfaces do not pull the centre.
pub fn fit_circle_trimmed(points: &[[f64; 2]], k: f64, floor: f64, rounds: usize) -> Result<CircleFit> {
    let mut fit = fit_circle(points)?;
    let mut kept: Vec<[f64; 2]> = points.to_vec();
    for _ in 0..rounds {
        let mut err: Vec<f64> = kept
            .iter()
            .map(|p| (p[0] - fit.center[0]).hypot(p[1] - fit.center[1]) - fit.radius)
            .collect();
        let mut abs: Vec<f64> = err.iter().map(|e| e.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let mad = abs[abs.len() / 2];
        let cut = (k * 1.4826 * mad).max(floor);
        let next: Vec<[f64; 2]> = kept
            .iter()
            .zip(err.iter_mut())
            .filter(|(_, e)| e.abs() <= cut)
            .map(|(p, _)| *p)
            .collect();
        if next.len() == kept.len() || next.len() < 3 {
            break;
        }
        kept = next;
        fit = fit_circle(&kept)?;
    }
    Ok(fit)
}
