//! Evaluation metrics: rate accuracy, PSNR, Bjontegaard-delta bitrate, and
//! per-frame CSV logging.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rate-accuracy metric in percent: `|target - achieved| / target * 100`.
pub fn delta_r(achieved_avg_bpp: f64, r_tar: f64) -> Result<f64> {
    if !(r_tar > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target bitrate must be positive, got {r_tar}"
        )));
    }
    Ok((r_tar - achieved_avg_bpp).abs() / r_tar * 100.0)
}

/// PSNR in dB of an MSE on [0, 1]-normalized pixels.
pub fn psnr(d_mse: f64) -> Result<f64> {
    if !(d_mse > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mse must be positive, got {d_mse}"
        )));
    }
    Ok(10.0 * (1.0 / d_mse).log10())
}

/// One rate-distortion curve: `(avg bpp, PSNR dB)` operating points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdCurve {
    pub points: Vec<(f64, f64)>,
}

impl RdCurve {
    /// Sorts points by bitrate and validates monotonicity (bpp strictly
    /// increasing, PSNR nondecreasing) and the four-point minimum.
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::InvalidArgument(format!(
                "rd curve needs >= 4 points, got {}",
                points.len()
            )));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in points.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::InvalidArgument(format!(
                    "bpp must be strictly increasing ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
            if pair[1].1 < pair[0].1 {
                return Err(Error::InvalidArgument(format!(
                    "psnr must be nondecreasing ({} then {})",
                    pair[0].1, pair[1].1
                )));
            }
        }
        if points.iter().any(|(bpp, _)| !(*bpp > 0.0)) {
            return Err(Error::InvalidArgument("bpp must be positive".into()));
        }
        Ok(RdCurve { points })
    }

    fn psnr_range(&self) -> (f64, f64) {
        (
            self.points.first().unwrap().1,
            self.points.last().unwrap().1,
        )
    }
}

/// Least-squares cubic fit of `log10(bpp)` as a function of PSNR. PSNR is
/// centered before fitting for conditioning; the returned closure evaluates
/// the fit at raw PSNR values.
fn fit_log_rate(curve: &RdCurve) -> impl Fn(f64) -> f64 {
    let n = curve.points.len();
    let mean_p: f64 = curve.points.iter().map(|p| p.1).sum::<f64>() / n as f64;
    // Normal equations for the 4-coefficient polynomial in (psnr - mean).
    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [0.0f64; 4];
    for (bpp, p) in &curve.points {
        let x = p - mean_p;
        let y = bpp.log10();
        let phi = [1.0, x, x * x, x * x * x];
        for i in 0..4 {
            for j in 0..4 {
                ata[i][j] += phi[i] * phi[j];
            }
            atb[i] += phi[i] * y;
        }
    }
    let coef = solve4(ata, atb);
    move |p: f64| {
        let x = p - mean_p;
        coef[0] + coef[1] * x + coef[2] * x * x + coef[3] * x * x * x
    }
}

/// Gaussian elimination with partial pivoting on a 4x4 system.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> [f64; 4] {
    for col in 0..4 {
        let mut pivot = col;
        for row in col + 1..4 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        for row in col + 1..4 {
            let factor = a[row][col] / diag;
            for k in col..4 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0f64; 4];
    for col in (0..4).rev() {
        let mut acc = b[col];
        for k in col + 1..4 {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    x
}

/// Bjontegaard-delta bitrate of `test` against `anchor` in percent; negative
/// means the test curve needs fewer bits at equal quality.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (a_lo, a_hi) = anchor.psnr_range();
    let (t_lo, t_hi) = test.psnr_range();
    let lo = a_lo.max(t_lo);
    let hi = a_hi.min(t_hi);
    if !(hi > lo) {
        return Err(Error::InvalidArgument(format!(
            "psnr ranges do not overlap: [{a_lo}, {a_hi}] vs [{t_lo}, {t_hi}]"
        )));
    }
    let fa = fit_log_rate(anchor);
    let ft = fit_log_rate(test);

    // 1000-interval trapezoid rule over the overlap.
    let n = 1000usize;
    let h = (hi - lo) / n as f64;
    let mut integral = 0.0;
    for i in 0..=n {
        let p = lo + h * i as f64;
        let diff = ft(p) - fa(p);
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        integral += w * diff;
    }
    let avg_diff = integral * h / (hi - lo);
    Ok((10f64.powf(avg_diff) - 1.0) * 100.0)
}

/// One per-frame log entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameLogRow {
    pub poc: usize,
    pub lambda: f64,
    pub m: f64,
    pub r_bpp: f64,
    pub d_mse: f64,
    pub psnr: f64,
    pub r_tar: f64,
    pub reward: f64,
}

pub const FRAME_LOG_HEADER: &str = "poc,lambda,m,r_bpp,d_mse,psnr,r_tar,reward";

/// Writes per-frame rows as CSV. Floats are serialized with 17 significant
/// digits so a reread reproduces them exactly.
pub fn emit_logs(rows: &[FrameLogRow], path: &Path) -> Result<()> {
    let mut out = String::from(FRAME_LOG_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.poc, r.lambda, r.m, r.r_bpp, r.d_mse, r.psnr, r.r_tar, r.reward
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_logs(path: &Path) -> Result<Vec<FrameLogRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(FRAME_LOG_HEADER) {
        return Err(Error::InvalidArgument(format!(
            "frame log must start with '{FRAME_LOG_HEADER}'"
        )));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(Error::InvalidArgument(format!(
                "frame log row {}: expected 8 columns",
                idx + 2
            )));
        }
        let f = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("frame log row {}: {e}", idx + 2)))
        };
        rows.push(FrameLogRow {
            poc: cols[0].trim().parse::<usize>().map_err(|e| {
                Error::InvalidArgument(format!("frame log row {}: {e}", idx + 2))
            })?,
            lambda: f(cols[1])?,
            m: f(cols[2])?,
            r_bpp: f(cols[3])?,
            d_mse: f(cols[4])?,
            psnr: f(cols[5])?,
            r_tar: f(cols[6])?,
            reward: f(cols[7])?,
        });
    }
    Ok(rows)
}

pub const CURVE_HEADER: &str = "avg_bpp,psnr";

/// Writes RD-curve points as CSV with header `avg_bpp,psnr`.
pub fn emit_curve(points: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for (bpp, p) in points {
        out.push_str(&format!("{:.16e},{:.16e}\n", bpp, p));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// JSON evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub delta_r_pct: f64,
    pub bd_rate_pct: Option<f64>,
    pub mean_psnr: f64,
    pub mean_bpp: f64,
}
