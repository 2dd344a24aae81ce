use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Mean,
    Median,
}

impl FilterKind {
    pub fn parse(s: &str) -> Result<FilterKind> {
        match s {
            "mean" => Ok(FilterKind::Mean),
            "median" => Ok(FilterKind::Median),
            other => Err(Error::InvalidArgument(format!(
                "unknown filter kind `{other}` (expected mean|median)"
            ))),
        }
    }
}

/// Per-coordinate centered moving mean/median over a 3D pose sequence,
/// stride 1. Window must be odd; windows are truncated at the sequence
/// edges rather than padded.
pub fn filter_baseline(
    frames: &[Vec<f64>],
    kind: FilterKind,
    window: usize,
) -> Result<Vec<Vec<f64>>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "filter window must be odd, got {window}"
        )));
    }
    if frames.is_empty() {
        return Err(Error::EmptyInput("filter_baseline".into()));
    }
    let dim = frames[0].len();
    for (i, f) in frames.iter().enumerate() {
        if f.len() != dim {
            return Err(Error::dim_mismatch(format!("filter frame {i}"), dim, f.len()));
        }
    }
    let half = window / 2;
    let len = frames.len();
    let mut out = vec![vec![0.0; dim]; len];
    let mut scratch = Vec::with_capacity(window);
    for t in 0..len {
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(len - 1);
        for d in 0..dim {
            scratch.clear();
            for frame in &frames[lo..=hi] {
                scratch.push(frame[d]);
            }
            out[t][d] = match kind {
                FilterKind::Mean => scratch.iter().sum::<f64>() / scratch.len() as f64,
                FilterKind::Median => {
                    scratch.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
                    let mid = scratch.len() / 2;
                    if scratch.len() % 2 == 1 {
                        scratch[mid]
                    } else {
                        (scratch[mid - 1] + scratch[mid]) / 2.0
                    }
                }
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sequence_unchanged() {
        let frames = vec![vec![3.0, -1.0]; 7];
        for kind in [FilterKind::Mean, FilterKind::Median] {
            let out = filter_baseline(&frames, kind, 5).unwrap();
            assert_eq!(out, frames);
        }
    }

    #[test]
    fn median_rejects_impulse() {
        let frames: Vec<Vec<f64>> = [0.0, 0.0, 10.0, 0.0, 0.0].iter().map(|&v| vec![v]).collect();
        let out = filter_baseline(&frames, FilterKind::Median, 5).unwrap();
        assert_eq!(out[2][0], 0.0);
    }

    #[test]
    fn matches_naive_oracle() {
        let mut state = 3u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 10.0
        };
        let frames: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| next()).collect()).collect();
        for kind in [FilterKind::Mean, FilterKind::Median] {
            let out = filter_baseline(&frames, kind, 5).unwrap();
            for t in 0..frames.len() {
                let lo = t.saturating_sub(2);
                let hi = (t + 2).min(frames.len() - 1);
                for d in 0..4 {
                    let mut vals: Vec<f64> = (lo..=hi).map(|i| frames[i][d]).collect();
                    let expect = match kind {
                        FilterKind::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
                        FilterKind::Median => {
                            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                            let mid = vals.len() / 2;
                            if vals.len() % 2 == 1 {
                                vals[mid]
                            } else {
                                (vals[mid - 1] + vals[mid]) / 2.0
                            }
                        }
                    };
                    assert!((out[t][d] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn even_window_rejected() {
        let frames = vec![vec![0.0]; 3];
        assert!(filter_baseline(&frames, FilterKind::Mean, 4).is_err());
    }

    #[test]
    fn single_frame_sequence_passes_through() {
        let frames = vec![vec![1.0, 2.0]];
        let out = filter_baseline(&frames, FilterKind::Median, 5).unwrap();
        assert_eq!(out, frames);
    }
}
