//! Convex piecewise-linear scalar functions on a closed interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Evaluation points may sit this far outside the domain before they are rejected.
pub const DOMAIN_TOL: f64 = 1e-9;
const CONTINUITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PwlError {
    #[error("z = {z} outside domain [{lo}, {hi}]")]
    OutOfDomain { z: f64, lo: f64, hi: f64 },
    #[error("function never reaches level {level} on [{lo}, {hi}] (minimum {min})")]
    NoRoot { level: f64, lo: f64, hi: f64, min: f64 },
    #[error("invalid piecewise-linear function: {0}")]
    Invalid(String),
}

/// `slope * z + intercept` on `[z_lo, z_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub z_lo: f64,
    pub z_hi: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl Piece {
    pub fn eval(&self, z: f64) -> f64 {
        self.slope * z + self.intercept
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearValue {
    pieces: Vec<Piece>,
}

impl PiecewiseLinearValue {
    /// Validates ordering, tiling, continuity and strict convexity.
    pub fn new(pieces: Vec<Piece>) -> Result<Self, PwlError> {
        if pieces.is_empty() {
            return Err(PwlError::Invalid("no pieces".into()));
        }
        for p in &pieces {
            if !(p.z_lo.is_finite() && p.z_hi.is_finite() && p.slope.is_finite() && p.intercept.is_finite()) {
                return Err(PwlError::Invalid(format!("non-finite piece {p:?}")));
            }
            if p.z_lo > p.z_hi {
                return Err(PwlError::Invalid(format!("reversed piece {p:?}")));
            }
        }
        for w in pieces.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a.z_hi - b.z_lo).abs() > DOMAIN_TOL {
                return Err(PwlError::Invalid(format!("gap between {} and {}", a.z_hi, b.z_lo)));
            }
            if b.slope <= a.slope {
                return Err(PwlError::Invalid(format!(
                    "slopes not strictly increasing: {} then {}",
                    a.slope, b.slope
                )));
            }
            let scale = 1.0 + a.eval(a.z_hi).abs();
            if (a.eval(a.z_hi) - b.eval(b.z_lo)).abs() > CONTINUITY_TOL * scale {
                return Err(PwlError::Invalid(format!("discontinuity at {}", a.z_hi)));
            }
        }
        Ok(PiecewiseLinearValue { pieces })
    }

    pub fn constant(z_lo: f64, z_hi: f64, value: f64) -> Self {
        PiecewiseLinearValue {
            pieces: vec![Piece {
                z_lo,
                z_hi,
                slope: 0.0,
                intercept: value,
            }],
        }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.pieces[0].z_lo, self.pieces[self.pieces.len() - 1].z_hi)
    }

    /// Supporting hyperplanes `(slope, intercept)`; their maximum is the function.
    pub fn hyperplanes(&self) -> Vec<(f64, f64)> {
        self.pieces.iter().map(|p| (p.slope, p.intercept)).collect()
    }

    pub fn piece_index(&self, z: f64) -> Result<usize, PwlError> {
        let (lo, hi) = self.domain();
        if z.is_nan() || z < lo - DOMAIN_TOL || z > hi + DOMAIN_TOL {
            return Err(PwlError::OutOfDomain { z, lo, hi });
        }
        let idx = self.pieces.partition_point(|p| p.z_hi < z);
        Ok(idx.min(self.pieces.len() - 1))
    }

    pub fn eval(&self, z: f64) -> Result<f64, PwlError> {
        let i = self.piece_index(z)?;
        Ok(self.pieces[i].eval(z))
    }

    /// Maximum over the supporting hyperplanes, valid on and off the domain.
    pub fn eval_max(&self, z: f64) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.eval(z))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.pieces
            .iter()
            .flat_map(|p| [p.eval(p.z_lo), p.eval(p.z_hi)])
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest `z` in the domain with `f(z) <= level`.
    pub fn min_root(&self, level: f64) -> Result<f64, PwlError> {
        let first = self.pieces[0];
        if first.eval(first.z_lo) <= level {
            return Ok(first.z_lo);
        }
        for p in &self.pieces {
            if p.eval(p.z_hi) <= level {
                // the left end is above the level, so the slope is negative
                let z = if p.slope < 0.0 {
                    (level - p.intercept) / p.slope
                } else {
                    p.z_hi
                };
                return Ok(z.clamp(p.z_lo, p.z_hi));
            }
        }
        let (lo, hi) = self.domain();
        Err(PwlError::NoRoot {
            level,
            lo,
            hi,
            min: self.min_value(),
        })
    }

    /// Largest `z` in the domain with `f(z) <= level`.
    pub fn max_root(&self, level: f64) -> Result<f64, PwlError> {
        let last = self.pieces[self.pieces.len() - 1];
        if last.eval(last.z_hi) <= level {
            return Ok(last.z_hi);
        }
        for p in self.pieces.iter().rev() {
            if p.eval(p.z_lo) <= level {
                let z = if p.slope > 0.0 {
                    (level - p.intercept) / p.slope
                } else {
                    p.z_lo
                };
                return Ok(z.clamp(p.z_lo, p.z_hi));
            }
        }
        let (lo, hi) = self.domain();
        Err(PwlError::NoRoot {
            level,
            lo,
            hi,
            min: self.min_value(),
        })
    }

    pub fn slopes_nondecreasing(&self) -> bool {
        self.pieces.windows(2).all(|w| w[1].slope >= w[0].slope)
    }

    /// Convex majorant with at most `max_pieces` pieces made of chords between
    /// breakpoints, keeping the two endpoints and the end of a flat first
    /// piece. Breakpoints are added greedily by largest gap until the gap is
    /// at most `tol`. Returns the majorant and its largest gap.
    pub fn upper_chords(&self, max_pieces: usize, tol: f64) -> (PiecewiseLinearValue, f64) {
        let n = self.pieces.len();
        let xs: Vec<f64> = std::iter::once(self.pieces[0].z_lo)
            .chain(self.pieces.iter().map(|p| p.z_hi))
            .collect();
        let ys: Vec<f64> = std::iter::once(self.pieces[0].eval(self.pieces[0].z_lo))
            .chain(self.pieces.iter().map(|p| p.eval(p.z_hi)))
            .collect();
        let gap = |a: usize, b: usize| -> (usize, f64) {
            let s = (ys[b] - ys[a]) / (xs[b] - xs[a]);
            (a + 1..b)
                .map(|i| (i, ys[a] + s * (xs[i] - xs[a]) - ys[i]))
                .fold((a, 0.0), |best, c| if c.1 > best.1 { c } else { best })
        };
        let mut keep = vec![0, n];
        if n > 1 && self.pieces[0].slope == 0.0 && max_pieces >= 2 {
            keep.insert(1, 1);
        }
        let max_pieces = max_pieces.max(keep.len() - 1);
        let mut worst = 0.0f64;
        loop {
            let (k, (i, g)) = keep
                .windows(2)
                .enumerate()
                .map(|(k, w)| (k, gap(w[0], w[1])))
                .fold((0, (0, 0.0)), |best, c| if c.1 .1 > best.1 .1 { c } else { best });
            if g <= tol || keep.len() > max_pieces {
                worst = worst.max(g);
                break;
            }
            keep.insert(k + 1, i);
        }
        let mut pieces: Vec<Piece> = Vec::with_capacity(keep.len() - 1);
        for w in keep.windows(2) {
            let (a, b) = (w[0], w[1]);
            let slope = (ys[b] - ys[a]) / (xs[b] - xs[a]);
            match pieces.last_mut() {
                Some(last) if slope <= last.slope => last.z_hi = xs[b],
                _ => pieces.push(Piece {
                    z_lo: xs[a],
                    z_hi: xs[b],
                    slope,
                    intercept: ys[a] - slope * xs[a],
                }),
            }
        }
        (PiecewiseLinearValue { pieces }, worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs_fn() -> PiecewiseLinearValue {
        PiecewiseLinearValue::new(vec![
            Piece { z_lo: -1.0, z_hi: 0.0, slope: -1.0, intercept: 0.0 },
            Piece { z_lo: 0.0, z_hi: 1.0, slope: 1.0, intercept: 0.0 },
        ])
        .unwrap()
    }

    #[test]
    fn abs_eval_and_root() {
        let f = abs_fn();
        assert_eq!(f.eval(0.5).unwrap(), 0.5);
        assert_eq!(f.eval(-0.25).unwrap(), 0.25);
        assert_eq!(f.min_root(0.0).unwrap(), 0.0);
        assert_eq!(f.hyperplanes(), vec![(-1.0, 0.0), (1.0, 0.0)]);
    }

    #[test]
    fn root_by_inverting_first_piece() {
        let f = PiecewiseLinearValue::new(vec![
            Piece { z_lo: 0.0, z_hi: 0.5, slope: -2.0, intercept: 1.0 },
            Piece { z_lo: 0.5, z_hi: 2.0, slope: 0.0, intercept: 0.0 },
        ])
        .unwrap();
        assert!((f.min_root(0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((f.min_root(0.5).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn out_of_domain_and_no_root() {
        let f = abs_fn();
        assert!(matches!(f.eval(1.5), Err(PwlError::OutOfDomain { .. })));
        assert!(f.eval(1.0 + 1e-12).is_ok());
        let g = PiecewiseLinearValue::constant(0.0, 1.0, 0.5);
        assert!(matches!(g.min_root(0.0), Err(PwlError::NoRoot { .. })));
    }

    #[test]
    fn rejects_nonconvex_and_discontinuous() {
        let bad = vec![
            Piece { z_lo: 0.0, z_hi: 1.0, slope: 1.0, intercept: 0.0 },
            Piece { z_lo: 1.0, z_hi: 2.0, slope: 0.5, intercept: 0.5 },
        ];
        assert!(PiecewiseLinearValue::new(bad).is_err());
        let jump = vec![
            Piece { z_lo: 0.0, z_hi: 1.0, slope: 0.0, intercept: 0.0 },
            Piece { z_lo: 1.0, z_hi: 2.0, slope: 1.0, intercept: 0.0 },
        ];
        assert!(PiecewiseLinearValue::new(jump).is_err());
    }

    #[test]
    fn eval_matches_max_of_hyperplanes() {
        let f = PiecewiseLinearValue::new(vec![
            Piece { z_lo: -2.0, z_hi: -1.0, slope: -3.0, intercept: -1.0 },
            Piece { z_lo: -1.0, z_hi: 0.5, slope: -1.0, intercept: 1.0 },
            Piece { z_lo: 0.5, z_hi: 3.0, slope: 0.25, intercept: 0.375 },
        ])
        .unwrap();
        for k in 0..=100 {
            let z = -2.0 + 5.0 * k as f64 / 100.0;
            assert!((f.eval(z).unwrap() - f.eval_max(z)).abs() < 1e-12);
        }
    }

    fn parabola(n: usize) -> PiecewiseLinearValue {
        // chords of z^2 on [-1, 1] after a flat piece on [-2, -1]
        let mut pieces = vec![Piece { z_lo: -2.0, z_hi: -1.0, slope: 0.0, intercept: 0.0 }];
        let h = 2.0 / n as f64;
        for k in 0..n {
            let (a, b) = (-1.0 + k as f64 * h, -1.0 + (k + 1) as f64 * h);
            let slope = b * b - a * a;
            let slope = slope / h + 2.0;
            pieces.push(Piece { z_lo: a, z_hi: b, slope, intercept: 0.0 });
        }
        let mut v = 0.0;
        for p in &mut pieces {
            p.intercept = v - p.slope * p.z_lo;
            v += p.slope * (p.z_hi - p.z_lo);
        }
        PiecewiseLinearValue::new(pieces).unwrap()
    }

    #[test]
    fn upper_chords_majorize_within_budget() {
        let f = parabola(40);
        for budget in [2, 3, 8, 20] {
            let (g, gap) = f.upper_chords(budget, 0.0);
            assert!(g.len() <= budget);
            assert!(g.slopes_nondecreasing());
            assert_eq!(g.domain(), f.domain());
            assert_eq!(g.pieces()[0].slope, 0.0);
            let mut seen = 0.0f64;
            for k in 0..=400 {
                let z = -2.0 + 3.0 * k as f64 / 400.0;
                let d = g.eval(z).unwrap() - f.eval(z).unwrap();
                assert!(d >= -1e-12, "budget {budget} z {z}");
                seen = seen.max(d);
            }
            assert!(seen <= gap + 1e-12);
        }
        let (g, gap) = f.upper_chords(64, 0.0);
        assert_eq!(g.len(), f.len());
        assert!(gap < 1e-12);
        for k in 0..=100 {
            let z = -2.0 + 3.0 * k as f64 / 100.0;
            assert!((g.eval(z).unwrap() - f.eval(z).unwrap()).abs() < 1e-12);
        }
    }
}
