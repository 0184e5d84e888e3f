use crate::{Error, Result};

/// Natural cubic spline through `(x_i, y_i)`; C² so that interpolated
/// curvature is continuous across the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    // second derivatives at the nodes
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(Error::InvalidInput(format!(
                "spline abscissa/ordinate length mismatch: {} vs {}",
                n,
                y.len()
            )));
        }
        if n < 3 {
            return Err(Error::InvalidInput(format!(
                "spline needs at least 3 nodes, got {n}"
            )));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("spline nodes must be finite".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "spline abscissae must be strictly increasing".into(),
            ));
        }
        // tridiagonal system for the interior second derivatives (Thomas algorithm)
        let mut m = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            diag[i] = 2.0 * (h0 + h1);
            upper[i] = h1;
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        }
        for i in 2..n - 1 {
            let lower = x[i] - x[i - 1];
            let w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (1..n - 1).rev() {
            m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    fn locate(&self, t: f64) -> Result<usize> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return Err(Error::OutOfRange {
                what: "interpolation abscissa",
                value: t,
                lo,
                hi,
            });
        }
        let i = self.x.partition_point(|&xi| xi <= t);
        Ok(i.clamp(1, self.x.len() - 1) - 1)
    }

    /// Value, first and second derivative at `t`.
    pub fn eval_all(&self, t: f64) -> Result<(f64, f64, f64)> {
        let i = self.locate(t)?;
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d =
            (y1 - y0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        let dd = a * m0 + b * m1;
        Ok((v, d, dd))
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(self.eval_all(t)?.0)
    }
}
