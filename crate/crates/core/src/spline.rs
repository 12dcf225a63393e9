//! Natural cubic spline interpolation.
//!
//! Fitting solves the standard tridiagonal system for the second derivatives
//! at the knots with natural boundary conditions (zero curvature at both
//! ends). Evaluation uses the closed-form per-segment cubic. All arithmetic
//! is f64; the fitted curve is C2-continuous and interpolates every knot.

use crate::error::{Error, Result};

/// One dimension of a natural cubic spline: knot times, knot values, and the
/// solved second derivatives.
#[derive(Debug, Clone)]
pub struct NaturalSpline1D {
    ts: Vec<f64>,
    ys: Vec<f64>,
    second_derivs: Vec<f64>,
}

impl NaturalSpline1D {
    /// Fit through `(ts[i], ys[i])`. Requires at least two strictly
    /// increasing knot times.
    pub fn fit(ts: &[f64], ys: &[f64]) -> Result<Self> {
        if ts.len() != ys.len() {
            return Err(Error::Size(format!(
                "{} knot times vs {} values",
                ts.len(),
                ys.len()
            )));
        }
        if ts.len() < 2 {
            return Err(Error::InvalidKnots("need at least two knots".into()));
        }
        for pair in ts.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidKnots(format!(
                    "knot times must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }

        let n = ts.len();
        let mut second = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system over the interior knots (Thomas algorithm).
            // Row i (interior knot i+1):
            //   h[i] * m[i] + 2(h[i]+h[i+1]) * m[i+1] + h[i+1] * m[i+2] = rhs
            let m = n - 2;
            let h: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
            let mut diag = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                rhs[i] = 6.0
                    * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
            }
            // Forward elimination: sub/super diagonals are h[1..m].
            for i in 1..m {
                let factor = h[i] / diag[i - 1];
                diag[i] -= factor * h[i];
                rhs[i] -= factor * rhs[i - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                second[i + 1] = (rhs[i] - h[i + 1] * second[i + 2]) / diag[i];
            }
        }

        Ok(Self {
            ts: ts.to_vec(),
            ys: ys.to_vec(),
            second_derivs: second,
        })
    }

    pub fn knot_times(&self) -> &[f64] {
        &self.ts
    }

    fn segment_of(&self, t: f64) -> Result<usize> {
        let (t0, tn) = (self.ts[0], *self.ts.last().unwrap());
        if t < t0 || t > tn {
            return Err(Error::Domain(format!(
                "t = {} outside knot range [{}, {}]",
                t, t0, tn
            )));
        }
        // Last knot belongs to the final segment.
        let idx = match self
            .ts
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        Ok(idx.min(self.ts.len() - 2))
    }

    /// Evaluate at `t`; errors outside the knot range.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let i = self.segment_of(t)?;
        let h = self.ts[i + 1] - self.ts[i];
        let a = (self.ts[i + 1] - t) / h;
        let b = (t - self.ts[i]) / h;
        Ok(a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.second_derivs[i]
                + (b * b * b - b) * self.second_derivs[i + 1])
                * h
                * h
                / 6.0)
    }

    /// Analytic first derivative at `t`.
    pub fn deriv1(&self, t: f64) -> Result<f64> {
        let i = self.segment_of(t)?;
        let h = self.ts[i + 1] - self.ts[i];
        let a = (self.ts[i + 1] - t) / h;
        let b = (t - self.ts[i]) / h;
        Ok((self.ys[i + 1] - self.ys[i]) / h
            + ((3.0 * b * b - 1.0) * self.second_derivs[i + 1]
                - (3.0 * a * a - 1.0) * self.second_derivs[i])
                * h
                / 6.0)
    }

    /// Analytic second derivative at `t`.
    pub fn deriv2(&self, t: f64) -> Result<f64> {
        let i = self.segment_of(t)?;
        let h = self.ts[i + 1] - self.ts[i];
        let a = (self.ts[i + 1] - t) / h;
        let b = (t - self.ts[i]) / h;
        Ok(a * self.second_derivs[i] + b * self.second_derivs[i + 1])
    }
}
