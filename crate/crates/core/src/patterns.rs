//! Point-pattern data model, CSV ingestion, and window rescaling.
//!
//! Patterns live in the unit cube `[0,1]^D` once rescaled; all statistics in
//! this crate assume that normalization. Loading keeps points in file order
//! and never rescales implicitly.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{CfError, Result};

/// A fully mapped point pattern: `n` points with `dim` coordinates each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    points: Vec<Vec<f64>>,
    dim: usize,
    pub label: Option<String>,
}

/// A rectangular observation window in data units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Window {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len()
            || lower.is_empty()
            || lower
                .iter()
                .zip(&upper)
                .any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
        {
            return Err(CfError::InvalidWindow);
        }
        Ok(Window { lower, upper })
    }

    /// The unit cube `[0,1]^D`.
    pub fn unit(dim: usize) -> Self {
        Window {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Square window `[0,s]^2`, the common case for the example data sets.
    pub fn square(side: f64) -> Result<Self> {
        Window::new(vec![0.0, 0.0], vec![side, side])
    }
}

impl PointPattern {
    /// Builds a pattern, checking that every point has `dim` coordinates and
    /// lies in the closed unit cube.
    pub fn new(points: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(CfError::EmptyInput);
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(CfError::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            for (d, &x) in p.iter().enumerate() {
                if !(0.0..=1.0).contains(&x) {
                    return Err(CfError::OutsideWindow {
                        index: i,
                        coord: d,
                        value: x,
                    });
                }
            }
        }
        Ok(PointPattern {
            points,
            dim,
            label: None,
        })
    }

    /// Builds a pattern in data units without the unit-cube check. Used by the
    /// loader before `rescale_to_unit` is applied.
    pub fn new_raw(points: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(CfError::EmptyInput);
        }
        for p in &points {
            if p.len() != dim {
                return Err(CfError::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
        }
        Ok(PointPattern {
            points,
            dim,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn coord(&self, point: usize, d: usize) -> f64 {
        self.points[point][d]
    }

    /// Indices of exact duplicate points, surfaced so callers can warn.
    /// The CF statistic remains well defined with ties.
    pub fn duplicate_indices(&self) -> Vec<usize> {
        let mut dups = Vec::new();
        for i in 1..self.points.len() {
            if self.points[..i].iter().any(|q| *q == self.points[i]) {
                dups.push(i);
            }
        }
        dups
    }
}

/// Returns true when a CSV field does not parse as a number, which is how a
/// single header line is detected.
fn non_numeric(field: &str) -> bool {
    field.trim().parse::<f64>().is_err()
}

/// Loads a pattern from comma-separated text: one point per line, `dim`
/// numeric fields per record, an optional single header line auto-detected by
/// a non-numeric first field. No rescaling is applied.
pub fn load_pattern<R: BufRead>(source: R, dim: usize) -> Result<PointPattern> {
    let mut points = Vec::new();
    let mut saw_record = false;
    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if !saw_record && fields.first().is_some_and(|f| non_numeric(f)) {
            // header line
            saw_record = true;
            continue;
        }
        saw_record = true;
        if fields.len() != dim {
            return Err(CfError::FieldCount {
                row: lineno + 1,
                expected: dim,
                found: fields.len(),
            });
        }
        let mut p = Vec::with_capacity(dim);
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| CfError::MalformedRecord {
                row: lineno + 1,
                col: col + 1,
                value: field.trim().to_string(),
            })?;
            p.push(v);
        }
        points.push(p);
    }
    PointPattern::new_raw(points, dim)
}

/// Loads and rescales in one step, the usual path for data files.
pub fn load_pattern_in_window<R: BufRead>(
    source: R,
    dim: usize,
    window: &Window,
) -> Result<PointPattern> {
    let raw = load_pattern(source, dim)?;
    rescale_to_unit(&raw, window)
}

/// Maps each coordinate `x_d` to `(x_d - lower_d) / (upper_d - lower_d)`.
/// Points must lie inside the closed window.
pub fn rescale_to_unit(pattern: &PointPattern, window: &Window) -> Result<PointPattern> {
    if window.dim() != pattern.dim() {
        return Err(CfError::DimensionMismatch {
            expected: pattern.dim(),
            got: window.dim(),
        });
    }
    let mut points = Vec::with_capacity(pattern.len());
    for (i, p) in pattern.points().iter().enumerate() {
        let mut q = Vec::with_capacity(pattern.dim());
        for (d, &x) in p.iter().enumerate() {
            if x < window.lower[d] || x > window.upper[d] {
                return Err(CfError::OutsideWindow {
                    index: i,
                    coord: d,
                    value: x,
                });
            }
            q.push((x - window.lower[d]) / (window.upper[d] - window.lower[d]));
        }
        points.push(q);
    }
    let mut out = PointPattern::new(points, pattern.dim())?;
    out.label = pattern.label.clone();
    Ok(out)
}

/// Serializes a pattern back to CSV with 17 significant digits, so that a
/// load/save round trip is bit-identical.
pub fn write_pattern<W: Write>(pattern: &PointPattern, mut sink: W) -> Result<()> {
    for p in pattern.points() {
        let fields: Vec<String> = p.iter().map(|x| format!("{:.17e}", x)).collect();
        writeln!(sink, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_plain_records() {
        let p = load_pattern(Cursor::new("0.5,0.5\n0.1,0.9"), 2).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.points()[1], vec![0.1, 0.9]);
    }

    #[test]
    fn skips_single_header() {
        let p = load_pattern(Cursor::new("x,y\n0.2,0.3"), 2).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.points()[0], vec![0.2, 0.3]);
    }

    #[test]
    fn reports_malformed_cell() {
        let err = load_pattern(Cursor::new("0.2,abc"), 2).unwrap_err();
        match err {
            CfError::MalformedRecord { row, col, .. } => {
                assert_eq!((row, col), (1, 2));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn reports_wrong_field_count() {
        let err = load_pattern(Cursor::new("0.2,0.3,0.4"), 2).unwrap_err();
        assert!(matches!(err, CfError::FieldCount { row: 1, expected: 2, found: 3 }));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(load_pattern(Cursor::new(""), 2), Err(CfError::EmptyInput)));
        // header only, no records
        assert!(matches!(load_pattern(Cursor::new("x,y\n"), 2), Err(CfError::EmptyInput)));
    }

    #[test]
    fn rescale_maps_corners_and_midpoint() {
        let raw = PointPattern::new_raw(vec![vec![0.0, 0.0], vec![5.7, 5.7], vec![2.85, 2.85]], 2).unwrap();
        let w = Window::square(5.7).unwrap();
        let p = rescale_to_unit(&raw, &w).unwrap();
        assert_eq!(p.points()[0], vec![0.0, 0.0]);
        assert_eq!(p.points()[1], vec![1.0, 1.0]);
        assert_eq!(p.points()[2], vec![0.5, 0.5]);
    }

    #[test]
    fn rescale_rejects_point_outside_window() {
        let raw = PointPattern::new_raw(vec![vec![6.0, 1.0]], 2).unwrap();
        let w = Window::square(5.7).unwrap();
        let err = rescale_to_unit(&raw, &w).unwrap_err();
        assert!(matches!(err, CfError::OutsideWindow { index: 0, coord: 0, .. }));
    }

    #[test]
    fn rescale_is_idempotent_on_unit_window() {
        let p = PointPattern::new(vec![vec![0.25, 0.75], vec![1.0, 0.0]], 2).unwrap();
        let q = rescale_to_unit(&p, &Window::unit(2)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn boundary_points_are_accepted() {
        let p = PointPattern::new(vec![vec![0.0, 1.0]], 2).unwrap();
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn duplicates_are_kept_and_reported() {
        let p = PointPattern::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]], 2).unwrap();
        assert_eq!(p.duplicate_indices(), vec![1]);
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let p = PointPattern::new(vec![vec![0.123456789012345678, 0.9], vec![1.0 / 3.0, 0.0]], 2).unwrap();
        let mut buf = Vec::new();
        write_pattern(&p, &mut buf).unwrap();
        let q = load_pattern(Cursor::new(buf), 2).unwrap();
        assert_eq!(p.points(), q.points());
    }
}
