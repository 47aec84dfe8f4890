//! Discrete time axis and real-valued paths sampled on it.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("time grid needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("time grid must start at 0, starts at {0}")]
    BadOrigin(f64),
    #[error("time grid must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("refinement factor must be at least 1")]
    BadFactor,
    #[error("path length {path} does not match grid length {grid}")]
    LengthMismatch { path: usize, grid: usize },
}

/// Strictly increasing times `0 = t_0 < t_1 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, GridError> {
        if points.len() < 2 {
            return Err(GridError::TooFewPoints(points.len()));
        }
        if points[0] != 0.0 {
            return Err(GridError::BadOrigin(points[0]));
        }
        for i in 1..points.len() {
            if !(points[i] > points[i - 1]) || !points[i].is_finite() {
                return Err(GridError::NotIncreasing(i));
            }
        }
        Ok(Self { points })
    }

    /// Uniform grid with `steps` intervals on `[0, horizon]`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self, GridError> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(GridError::BadHorizon(horizon));
        }
        if steps == 0 {
            return Err(GridError::TooFewPoints(1));
        }
        let h = horizon / steps as f64;
        let mut points: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
        points[steps] = horizon;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the last point, `N`.
    pub fn last(&self) -> usize {
        self.points.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.points[self.last()]
    }

    pub fn time(&self, i: usize) -> f64 {
        self.points[i]
    }

    /// Width of interval `[t_i, t_{i+1}]`.
    pub fn step(&self, i: usize) -> f64 {
        self.points[i + 1] - self.points[i]
    }

    pub fn mesh(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Splits every interval into `factor` equal pieces; original points keep
    /// their values and sit at indices `i * factor` of the result.
    pub fn refine(&self, factor: usize) -> Result<Self, GridError> {
        if factor == 0 {
            return Err(GridError::BadFactor);
        }
        let mut points = Vec::with_capacity(self.last() * factor + 1);
        for w in self.points.windows(2) {
            let h = (w[1] - w[0]) / factor as f64;
            points.push(w[0]);
            for m in 1..factor {
                points.push(w[0] + m as f64 * h);
            }
        }
        points.push(self.horizon());
        Ok(Self { points })
    }

    /// Index of a grid time, if `t` is (within 1e-12 relative) on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * (1.0 + self.horizon());
        let pos = self.points.partition_point(|&p| p < t - tol);
        (pos < self.points.len() && (self.points[pos] - t).abs() <= tol).then_some(pos)
    }
}

/// Real-valued function sampled on the points of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPath {
    values: Vec<f64>,
}

impl ScalarPath {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: grid.points().iter().map(|&t| f(t)).collect(),
        }
    }

    pub fn constant(grid: &TimeGrid, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
        }
    }

    pub fn check_against(&self, grid: &TimeGrid) -> Result<(), GridError> {
        if self.values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                path: self.values.len(),
                grid: grid.len(),
            });
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sup-norm distance to another path of the same length.
    pub fn sup_distance(&self, other: &ScalarPath) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Keeps every `factor`-th value (inverse of [`TimeGrid::refine`]).
    pub fn restrict(&self, factor: usize) -> Self {
        Self {
            values: self.values.iter().step_by(factor.max(1)).copied().collect(),
        }
    }

    /// Piecewise-linear interpolation of this path (sampled on `from`) at the
    /// points of `to`.
    pub fn interpolate(&self, from: &TimeGrid, to: &TimeGrid) -> Self {
        let pts = from.points();
        let values = to
            .points()
            .iter()
            .map(|&t| {
                let k = pts.partition_point(|&p| p <= t);
                if k == 0 {
                    self.values[0]
                } else if k >= pts.len() {
                    self.values[pts.len() - 1]
                } else {
                    let (t0, t1) = (pts[k - 1], pts[k]);
                    let w = (t - t0) / (t1 - t0);
                    self.values[k - 1] * (1.0 - w) + self.values[k] * w
                }
            })
            .collect();
        Self { values }
    }
}

impl std::ops::Index<usize> for ScalarPath {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_endpoints() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.mesh(), 0.25);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(TimeGrid::new(vec![0.0]), Err(GridError::TooFewPoints(1))));
        assert!(matches!(TimeGrid::new(vec![0.1, 1.0]), Err(GridError::BadOrigin(_))));
        assert!(matches!(
            TimeGrid::new(vec![0.0, 0.5, 0.5, 1.0]),
            Err(GridError::NotIncreasing(2))
        ));
        assert!(TimeGrid::uniform(0.0, 3).is_err());
        assert!(TimeGrid::uniform(1.0, 0).is_err());
    }

    #[test]
    fn refinement_keeps_original_points() {
        let g = TimeGrid::new(vec![0.0, 0.3, 1.0]).unwrap();
        let f = g.refine(4).unwrap();
        assert_eq!(f.len(), 9);
        for (i, &t) in g.points().iter().enumerate() {
            assert_eq!(f.time(i * 4), t);
        }
        assert!(f.mesh() <= g.mesh() / 4.0 + 1e-15);
    }

    #[test]
    fn restrict_inverts_refine() {
        let g = TimeGrid::uniform(1.0, 5).unwrap();
        let f = g.refine(3).unwrap();
        let p = ScalarPath::from_fn(&f, |t| t * t);
        let r = p.restrict(3);
        assert_eq!(r, ScalarPath::from_fn(&g, |t| t * t));
    }

    #[test]
    fn index_lookup() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        assert_eq!(g.index_of(0.5), Some(5));
        assert_eq!(g.index_of(0.55), None);
        assert_eq!(g.index_of(1.0), Some(10));
    }
}
