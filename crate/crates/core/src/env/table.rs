//! Tabulated replay environment: a measured (lambda, m, reference-distortion)
//! grid of rate/distortion points, queried with bilinear interpolation in
//! `(log lambda, m)` within the nearest reference-distortion bucket.

use std::path::Path;

use crate::env::{Action, EnvState, StepOutcome};
use crate::error::{Error, Result};

/// Dense grid of `(r_bpp, d_mse)` entries indexed by
/// `[ref_bucket][lambda][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RdTable {
    pub lambda_levels: Vec<f64>,
    pub m_levels: Vec<f64>,
    /// Representative reference distortion per bucket, ascending.
    pub ref_buckets: Vec<f64>,
    entries: Vec<(f64, f64)>,
}

impl RdTable {
    pub fn new(
        lambda_levels: Vec<f64>,
        m_levels: Vec<f64>,
        ref_buckets: Vec<f64>,
        entries: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if lambda_levels.len() < 2 || m_levels.is_empty() || ref_buckets.is_empty() {
            return Err(Error::InvalidSpec(
                "table needs >= 2 lambda levels and nonempty m/bucket axes".into(),
            ));
        }
        for axis in [&lambda_levels, &m_levels, &ref_buckets] {
            if axis.windows(2).any(|w| w[1] <= w[0]) && axis.len() > 1 {
                return Err(Error::InvalidSpec("table axes must be strictly ascending".into()));
            }
        }
        if lambda_levels.iter().any(|l| *l <= 0.0) {
            return Err(Error::InvalidSpec("lambda levels must be positive".into()));
        }
        let expect = lambda_levels.len() * m_levels.len() * ref_buckets.len();
        if entries.len() != expect {
            return Err(Error::InvalidSpec(format!(
                "table has {} entries, grid needs {expect}",
                entries.len()
            )));
        }
        if entries.iter().any(|(r, _)| !(*r > 0.0)) {
            return Err(Error::InvalidSpec("table rates must be positive".into()));
        }
        Ok(RdTable {
            lambda_levels,
            m_levels,
            ref_buckets,
            entries,
        })
    }

    fn idx(&self, bucket: usize, li: usize, mi: usize) -> usize {
        (bucket * self.lambda_levels.len() + li) * self.m_levels.len() + mi
    }

    pub fn entry(&self, bucket: usize, li: usize, mi: usize) -> (f64, f64) {
        self.entries[self.idx(bucket, li, mi)]
    }

    /// Nearest bucket to `d_prev`; ties go to the lower-distortion bucket.
    fn nearest_bucket(&self, d_prev: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, b) in self.ref_buckets.iter().enumerate() {
            let dist = (b - d_prev).abs();
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        best
    }

    /// Interpolated `(r_bpp, d_mse)` at `(lambda, m, d_prev)`. Queries outside
    /// the `(lambda, m)` hull are rejected.
    pub fn lookup(&self, lambda: f64, m: f64, d_prev: f64) -> Result<(f64, f64)> {
        let l_lo = *self.lambda_levels.first().unwrap();
        let l_hi = *self.lambda_levels.last().unwrap();
        let m_lo = *self.m_levels.first().unwrap();
        let m_hi = *self.m_levels.last().unwrap();
        if !(l_lo..=l_hi).contains(&lambda) || !(m_lo..=m_hi).contains(&m) {
            return Err(Error::ActionOutOfBounds(format!(
                "query ({lambda}, {m}) outside table hull [{l_lo}, {l_hi}] x [{m_lo}, {m_hi}]"
            )));
        }
        let bucket = self.nearest_bucket(d_prev);
        let (li, lw) = bracket_log(&self.lambda_levels, lambda);
        let (mi, mw) = bracket_linear(&self.m_levels, m);

        let mut r = 0.0;
        let mut d = 0.0;
        for (dl, wl) in [(0usize, 1.0 - lw), (1, lw)] {
            if wl == 0.0 {
                continue;
            }
            for (dm, wm) in [(0usize, 1.0 - mw), (1, mw)] {
                if wm == 0.0 {
                    continue;
                }
                let (er, ed) = self.entry(bucket, li + dl, mi + dm);
                r += wl * wm * er;
                d += wl * wm * ed;
            }
        }
        Ok((r, d))
    }

    /// Writes the grid as CSV with header `lambda,m,ref_bucket,r_bpp,d_mse`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("lambda,m,ref_bucket,r_bpp,d_mse\n");
        for (bi, bucket) in self.ref_buckets.iter().enumerate() {
            for (li, lambda) in self.lambda_levels.iter().enumerate() {
                for (mi, m) in self.m_levels.iter().enumerate() {
                    let (r, d) = self.entry(bi, li, mi);
                    out.push_str(&format!(
                        "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                        lambda, m, bucket, r, d
                    ));
                }
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        match lines.next() {
            Some("lambda,m,ref_bucket,r_bpp,d_mse") => {}
            other => {
                return Err(Error::InvalidSpec(format!(
                    "table csv must start with 'lambda,m,ref_bucket,r_bpp,d_mse', got {other:?}"
                )))
            }
        }
        let mut rows = Vec::new();
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidSpec(format!("table row {}: {e}", idx + 2)))?;
            if cols.len() != 5 {
                return Err(Error::InvalidSpec(format!(
                    "table row {}: expected 5 columns",
                    idx + 2
                )));
            }
            rows.push((cols[0], cols[1], cols[2], cols[3], cols[4]));
        }
        let mut lambda_levels = dedup_sorted(rows.iter().map(|r| r.0));
        let mut m_levels = dedup_sorted(rows.iter().map(|r| r.1));
        let mut ref_buckets = dedup_sorted(rows.iter().map(|r| r.2));
        lambda_levels.sort_by(f64::total_cmp);
        m_levels.sort_by(f64::total_cmp);
        ref_buckets.sort_by(f64::total_cmp);

        let mut entries =
            vec![(0.0, 0.0); lambda_levels.len() * m_levels.len() * ref_buckets.len()];
        let mut filled = vec![false; entries.len()];
        for (lambda, m, bucket, r, d) in rows {
            let li = position(&lambda_levels, lambda)?;
            let mi = position(&m_levels, m)?;
            let bi = position(&ref_buckets, bucket)?;
            let idx = (bi * lambda_levels.len() + li) * m_levels.len() + mi;
            entries[idx] = (r, d);
            filled[idx] = true;
        }
        if filled.iter().any(|f| !f) {
            return Err(Error::InvalidSpec("table grid has unpopulated cells".into()));
        }
        RdTable::new(lambda_levels, m_levels, ref_buckets, entries)
    }
}

fn dedup_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn position(axis: &[f64], value: f64) -> Result<usize> {
    axis.iter()
        .position(|v| *v == value)
        .ok_or_else(|| Error::InvalidSpec("axis value mismatch".into()))
}

/// Bracketing index and weight for interpolation along `log(axis)`.
fn bracket_log(axis: &[f64], value: f64) -> (usize, f64) {
    bracket(axis, value, |v| v.ln())
}

fn bracket_linear(axis: &[f64], value: f64) -> (usize, f64) {
    bracket(axis, value, |v| v)
}

fn bracket(axis: &[f64], value: f64, map: impl Fn(f64) -> f64) -> (usize, f64) {
    if axis.len() == 1 || value <= axis[0] {
        return (0, 0.0);
    }
    let last = axis.len() - 1;
    if value >= axis[last] {
        return (last - 1, 1.0);
    }
    let mut i = 0;
    while axis[i + 1] < value {
        i += 1;
    }
    if axis[i + 1] == value {
        return (i, 1.0);
    }
    let lo = map(axis[i]);
    let hi = map(axis[i + 1]);
    (i, (map(value) - lo) / (hi - lo))
}

/// Codes one frame by table lookup, advancing the ledger exactly like the
/// analytic environment.
pub fn tabulated_encode(table: &RdTable, state: &EnvState, action: Action) -> Result<StepOutcome> {
    if state.t >= state.n_frames {
        return Err(Error::InvalidArgument(format!(
            "episode finished: t={} of {}",
            state.t, state.n_frames
        )));
    }
    let (r_bpp, d_mse) = table.lookup(action.lambda, action.m, state.d_prev)?;
    let next_t = state.t + 1;
    Ok(StepOutcome {
        r_bpp,
        d_mse,
        next_state: EnvState {
            t: next_t,
            d_prev: d_mse,
            lambda_prev: action.lambda,
            m_prev: action.m,
            spent_bpp: state.spent_bpp + r_bpp,
            r_tar: state.r_tar,
            n_frames: state.n_frames,
        },
        done: next_t == state.n_frames,
    })
}
