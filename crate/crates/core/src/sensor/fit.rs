//! Recovering a [`DetectionModel`] from per-altitude detector counts.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::DetectionModel;

/// Recall at or above this counts as the full-detection plateau.
const PLATEAU_RECALL: f64 = 0.99;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least 3 distinct altitudes with counts, got {0}")]
    TooFewAltitudes(usize),
    #[error("altitude {0} m has no true positives or false negatives")]
    EmptyRow(f64),
    #[error("altitude must be finite and non-negative, got {0}")]
    BadAltitude(f64),
    #[error("fitted slope {0} is not negative; recall does not fall with altitude")]
    NonDecreasing(f64),
    #[error("detection table: {0}")]
    Csv(#[from] csv::Error),
}

/// One row of a detection table: counts for a detector evaluated at one
/// altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionSample {
    pub altitude_m: f64,
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl DetectionSample {
    pub fn new(altitude_m: f64, tp: u64, fn_: u64) -> Self {
        DetectionSample {
            altitude_m,
            tp,
            fn_,
        }
    }
}

/// Reads a CSV with header `altitude_m,tp,fn`.
pub fn read_detection_table<R: Read>(reader: R) -> Result<Vec<DetectionSample>, FitError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    rdr.deserialize()
        .map(|row| row.map_err(FitError::from))
        .collect()
}

/// Fits the piecewise model to recall = TP / (TP + FN).
///
/// * `p_min` is the lowest observed recall.
/// * `alpha1` is the highest altitude whose recall is still ≥ 0.99 (the
///   lowest altitude if none is).
/// * The slope comes from least squares over the transition band, from
///   `alpha1` up to the first altitude that reaches `p_min`, both included.
/// * `beta2` is then pinned so the line meets 1 at `alpha1`, and `alpha2`
///   is where that line drops to `p_min`.
///
/// Rows at the same altitude are pooled.
pub fn fit_detection_model(table: &[DetectionSample]) -> Result<DetectionModel, FitError> {
    let mut pooled: BTreeMap<u64, (f64, u64, u64)> = BTreeMap::new();
    for row in table {
        if !(row.altitude_m.is_finite() && row.altitude_m >= 0.0) {
            return Err(FitError::BadAltitude(row.altitude_m));
        }
        let entry = pooled
            .entry(row.altitude_m.to_bits())
            .or_insert((row.altitude_m, 0, 0));
        entry.1 += row.tp;
        entry.2 += row.fn_;
    }
    let mut points = Vec::with_capacity(pooled.len());
    for &(alt, tp, fn_) in pooled.values() {
        if tp + fn_ == 0 {
            return Err(FitError::EmptyRow(alt));
        }
        points.push((alt, tp as f64 / (tp + fn_) as f64));
    }
    if points.len() < 3 {
        return Err(FitError::TooFewAltitudes(points.len()));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));

    let p_min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let alpha1 = points
        .iter()
        .rev()
        .find(|p| p.1 >= PLATEAU_RECALL)
        .map_or(points[0].0, |p| p.0);
    let top = points[points.len() - 1].0;

    if p_min >= PLATEAU_RECALL {
        // Never leaves the plateau within the observed range.
        return Ok(DetectionModel {
            alpha1: top,
            alpha2: top + 1.0,
            beta1: 0.0,
            beta2: 1.0,
            p_min,
        });
    }

    let floor_alt = points
        .iter()
        .find(|p| p.0 >= alpha1 && p.1 <= p_min)
        .map_or(top, |p| p.0);
    let band: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|p| p.0 >= alpha1 && p.0 <= floor_alt)
        .collect();
    let beta1 = if band.len() >= 2 {
        least_squares_slope(&band)
    } else {
        // Single point in the band: fall back to the plateau-to-floor chord.
        (p_min - 1.0) / (floor_alt.max(alpha1 + 1.0) - alpha1)
    };
    if !(beta1 < 0.0) {
        return Err(FitError::NonDecreasing(beta1));
    }
    let beta2 = 1.0 - beta1 * alpha1;
    let alpha2 = ((p_min - beta2) / beta1).max(alpha1.next_up());
    Ok(DetectionModel {
        alpha1,
        alpha2,
        beta1,
        beta2,
        p_min,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Counts drawn exactly from a model, `per_alt` trials per altitude.
    fn synthetic(model: &DetectionModel, altitudes: &[f64], per_alt: u64) -> Vec<DetectionSample> {
        altitudes
            .iter()
            .map(|&z| {
                let tp = (model.prob(z) * per_alt as f64).round() as u64;
                DetectionSample::new(z, tp, per_alt - tp)
            })
            .collect()
    }

    #[test]
    fn round_trip_recovers_default_model() {
        let truth = DetectionModel::default();
        let alts: Vec<f64> = (1..=12).map(|i| 10.0 * i as f64).collect();
        let fitted = fit_detection_model(&synthetic(&truth, &alts, 10_000)).unwrap();
        assert_eq!(fitted.alpha1, 10.0);
        assert_eq!(fitted.p_min, 0.25);
        assert!(
            (fitted.beta1 / truth.beta1 - 1.0).abs() < 0.05,
            "{fitted:?}"
        );
        fitted.validate().unwrap();
        assert_eq!(fitted.prob(10.0), 1.0);
    }

    #[test]
    fn three_point_slope() {
        let table = [
            DetectionSample::new(10.0, 100, 0),
            DetectionSample::new(55.0, 63, 37),
            DetectionSample::new(100.0, 25, 75),
        ];
        let m = fit_detection_model(&table).unwrap();
        // Least-squares over the three points, frozen from an exact evaluation.
        assert_abs_diff_eq!(m.beta1, -0.00833333333333333333, epsilon = 1e-12);
        assert_abs_diff_eq!(m.beta2, 1.08333333333333333, epsilon = 1e-12);
        assert_abs_diff_eq!(m.alpha2, 100.0, epsilon = 1e-9);
        m.validate().unwrap();
    }

    #[test]
    fn perfect_recall_gives_flat_model() {
        let table = [
            DetectionSample::new(10.0, 50, 0),
            DetectionSample::new(40.0, 50, 0),
            DetectionSample::new(80.0, 50, 0),
        ];
        let m = fit_detection_model(&table).unwrap();
        assert_eq!(m.alpha1, 80.0);
        assert_eq!(m.beta1, 0.0);
        assert!((0..200).all(|z| m.prob(z as f64) == 1.0));
        m.validate().unwrap();
    }

    #[test]
    fn degenerate_tables_rejected() {
        assert!(matches!(
            fit_detection_model(&[DetectionSample::new(10.0, 5, 5)]),
            Err(FitError::TooFewAltitudes(1))
        ));
        let pooled = [
            DetectionSample::new(10.0, 5, 5),
            DetectionSample::new(10.0, 1, 5),
            DetectionSample::new(20.0, 5, 5),
        ];
        assert!(matches!(
            fit_detection_model(&pooled),
            Err(FitError::TooFewAltitudes(2))
        ));
        let empty = [
            DetectionSample::new(10.0, 0, 0),
            DetectionSample::new(20.0, 0, 0),
            DetectionSample::new(30.0, 0, 0),
        ];
        assert!(matches!(
            fit_detection_model(&empty),
            Err(FitError::EmptyRow(_))
        ));
    }

    #[test]
    fn csv_reader_accepts_documented_header() {
        let text = "altitude_m,tp,fn\n10,99,1\n 50 , 60 , 40\n100,25,75\n";
        let rows = read_detection_table(text.as_bytes()).unwrap();
        assert_eq!(rows[1], DetectionSample::new(50.0, 60, 40));
        assert!(read_detection_table("altitude,tp,fn\n10,1,1\n".as_bytes()).is_err());
    }
}
