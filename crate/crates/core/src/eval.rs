//! Ranking metrics: non-interpolated average precision and precision-recall points.
//!
//! Scores are ranked in descending order; equal scores keep their original
//! order, so results are deterministic under ties.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{write_file, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

fn ranking(scores: &[f64], positive: &[bool]) -> Result<(Vec<usize>, usize)> {
    if scores.len() != positive.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            got: positive.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("scores contain NaN".into()));
    }
    let n_pos = positive.iter().filter(|p| **p).count();
    if n_pos == 0 {
        return Err(Error::Input("average precision needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok((order, n_pos))
}

/// Mean over positives of the precision at each positive's rank.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let (order, n_pos) = ranking(scores, positive)?;
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / n_pos as f64)
}

/// One point per distinct score, thresholds descending; a point counts every
/// sample scoring at or above its threshold.
pub fn pr_curve(scores: &[f64], positive: &[bool]) -> Result<Vec<PRPoint>> {
    let (order, n_pos) = ranking(scores, positive)?;
    let mut points = Vec::new();
    let mut hits = 0usize;
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            hits += 1;
        }
        let last_of_group = order.get(rank + 1).map_or(true, |&next| scores[next] != scores[i]);
        if last_of_group {
            points.push(PRPoint {
                threshold: scores[i],
                precision: hits as f64 / (rank + 1) as f64,
                recall: hits as f64 / n_pos as f64,
            });
        }
    }
    Ok(points)
}

/// CSV with header `threshold,precision,recall`.
pub fn format_pr_csv(points: &[PRPoint]) -> String {
    let mut out = String::from("threshold,precision,recall\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.precision, p.recall);
    }
    out
}

pub fn write_pr_csv(path: impl AsRef<Path>, points: &[PRPoint]) -> Result<()> {
    write_file(path.as_ref(), format_pr_csv(points))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ap_hand_cases() {
        assert_eq!(average_precision(&[2.0, 1.0], &[true, false]).unwrap(), 1.0);
        assert_eq!(average_precision(&[2.0, 1.0], &[false, true]).unwrap(), 0.5);
        let ap = average_precision(&[3.0, 2.0, 1.0], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn ap_errors() {
        assert!(matches!(
            average_precision(&[1.0, 2.0], &[false, false]),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            average_precision(&[1.0], &[true, false]),
            Err(Error::Dimension { .. })
        ));
        assert!(average_precision(&[f64::NAN], &[true]).is_err());
    }

    #[test]
    fn ties_keep_original_order() {
        assert_eq!(average_precision(&[1.0, 1.0], &[true, false]).unwrap(), 1.0);
        assert_eq!(average_precision(&[1.0, 1.0], &[false, true]).unwrap(), 0.5);
    }

    #[test]
    fn pr_curve_cases() {
        let perfect = pr_curve(&[2.0, 1.0], &[true, false]).unwrap();
        assert!(perfect.iter().any(|p| p.precision == 1.0 && p.recall == 1.0));

        let inverted = pr_curve(&[2.0, 1.0], &[false, true]).unwrap();
        let last = inverted.last().unwrap();
        assert_eq!((last.precision, last.recall), (0.5, 1.0));

        let c = pr_curve(&[3.0, 2.0, 1.0], &[true, false, true]).unwrap();
        let pairs: Vec<(f64, f64)> = c.iter().map(|p| (p.precision, p.recall)).collect();
        assert_eq!(pairs, vec![(1.0, 0.5), (0.5, 0.5), (2.0 / 3.0, 1.0)]);
        assert_eq!(c.iter().map(|p| p.threshold).collect::<Vec<_>>(), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn pr_curve_groups_ties() {
        let c = pr_curve(&[1.0, 2.0, 1.0], &[true, false, false]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[1].threshold, 1.0);
        assert!((c[1].precision - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let c = pr_curve(&[2.0, 1.0], &[true, false]).unwrap();
        assert_eq!(format_pr_csv(&c), "threshold,precision,recall\n2,1,1\n1,0.5,1\n");
    }
}
