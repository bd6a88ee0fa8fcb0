//! Bandwidth traces: piecewise-constant target bitrates over frame indices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSegment {
    pub start_frame: usize,
    pub r_tar: f64,
}

/// Piecewise-constant target bitrate. The first segment starts at frame 0
/// and start frames are strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthTrace {
    pub segments: Vec<TraceSegment>,
}

impl BandwidthTrace {
    pub fn new(segments: Vec<TraceSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidSpec("trace needs at least one segment".into()));
        }
        if segments[0].start_frame != 0 {
            return Err(Error::InvalidSpec("first trace segment must start at frame 0".into()));
        }
        for pair in segments.windows(2) {
            if pair[1].start_frame <= pair[0].start_frame {
                return Err(Error::InvalidSpec(format!(
                    "trace start frames must be strictly increasing ({} then {})",
                    pair[0].start_frame, pair[1].start_frame
                )));
            }
        }
        if segments.iter().any(|s| !(s.r_tar > 0.0) || !s.r_tar.is_finite()) {
            return Err(Error::InvalidSpec("trace bitrates must be positive".into()));
        }
        Ok(BandwidthTrace { segments })
    }

    pub fn constant(r_tar: f64) -> Result<Self> {
        Self::new(vec![TraceSegment {
            start_frame: 0,
            r_tar,
        }])
    }

    /// Builds a trace from a bpp pattern rescaled so its first value equals
    /// `anchor`, one segment every `segment_frames` frames. Keeps the
    /// pattern's relative shape while moving it into an environment's
    /// operating range.
    pub fn scaled_pattern(pattern: &[f64], anchor: f64, segment_frames: usize) -> Result<Self> {
        if pattern.is_empty() || segment_frames == 0 {
            return Err(Error::InvalidSpec("empty pattern or zero segment length".into()));
        }
        if !(pattern[0] > 0.0) {
            return Err(Error::InvalidSpec("pattern values must be positive".into()));
        }
        let scale = anchor / pattern[0];
        let segments = pattern
            .iter()
            .enumerate()
            .map(|(i, p)| TraceSegment {
                start_frame: i * segment_frames,
                r_tar: p * scale,
            })
            .collect();
        Self::new(segments)
    }

    /// Writes the trace as CSV with header `start_frame,bpp`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("start_frame,bpp\n");
        for seg in &self.segments {
            out.push_str(&format!("{},{:.16e}\n", seg.start_frame, seg.r_tar));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        match lines.next() {
            Some("start_frame,bpp") => {}
            other => {
                return Err(Error::InvalidSpec(format!(
                    "trace csv must start with 'start_frame,bpp', got {other:?}"
                )))
            }
        }
        let mut segments = Vec::new();
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let start = cols
                .next()
                .and_then(|v| v.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::InvalidSpec(format!("trace row {}: bad start_frame", idx + 2)))?;
            let bpp = cols
                .next()
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidSpec(format!("trace row {}: bad bpp", idx + 2)))?;
            segments.push(TraceSegment {
                start_frame: start,
                r_tar: bpp,
            });
        }
        Self::new(segments)
    }
}

/// Target bitrate of the segment whose range contains frame `t`.
pub fn target_bitrate(trace: &BandwidthTrace, t: usize) -> f64 {
    let mut current = trace.segments[0].r_tar;
    for seg in &trace.segments {
        if seg.start_frame <= t {
            current = seg.r_tar;
        } else {
            break;
        }
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;

    fn johnny() -> BandwidthTrace {
        BandwidthTrace::new(vec![
            TraceSegment { start_frame: 0, r_tar: 0.0163 },
            TraceSegment { start_frame: 12, r_tar: 0.0173 },
            TraceSegment { start_frame: 24, r_tar: 0.0166 },
        ])
        .unwrap()
    }

    #[test]
    fn constant_trace_everywhere() {
        let t = BandwidthTrace::constant(0.10).unwrap();
        for i in [0usize, 1, 7, 100] {
            assert_eq!(target_bitrate(&t, i), 0.10);
        }
    }

    #[test]
    fn segment_lookup_at_boundary_and_inside() {
        let t = johnny();
        assert_eq!(target_bitrate(&t, 12), 0.0173);
        assert_eq!(target_bitrate(&t, 23), 0.0173);
        assert_eq!(target_bitrate(&t, 24), 0.0166);
        assert_eq!(target_bitrate(&t, 0), 0.0163);
    }

    #[test]
    fn invalid_traces_rejected() {
        assert!(BandwidthTrace::new(vec![]).is_err());
        assert!(BandwidthTrace::new(vec![TraceSegment { start_frame: 3, r_tar: 0.1 }]).is_err());
        assert!(BandwidthTrace::new(vec![
            TraceSegment { start_frame: 0, r_tar: 0.1 },
            TraceSegment { start_frame: 0, r_tar: 0.2 },
        ])
        .is_err());
        assert!(BandwidthTrace::new(vec![TraceSegment { start_frame: 0, r_tar: -0.1 }]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let t = johnny();
        t.save_csv(&path).unwrap();
        let back = BandwidthTrace::load_csv(&path).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn scaled_pattern_keeps_ratios() {
        let t = BandwidthTrace::scaled_pattern(&[0.0163, 0.0173, 0.0166], 20.0, 12).unwrap();
        assert_eq!(t.segments.len(), 3);
        assert!((t.segments[0].r_tar - 20.0).abs() < 1e-12);
        let ratio = t.segments[1].r_tar / t.segments[0].r_tar;
        assert!((ratio - 0.0173 / 0.0163).abs() < 1e-12);
        assert_eq!(t.segments[2].start_frame, 24);
    }
}
