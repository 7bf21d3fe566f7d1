use crate::error::{Error, Result};

/// Monotone piecewise cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Clone, Debug)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n || x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::BadInterpolationData);
        }
        let mut h = Vec::with_capacity(n - 1);
        let mut delta = Vec::with_capacity(n - 1);
        for k in 0..n - 1 {
            let hk = x[k + 1] - x[k];
            if hk <= 0.0 {
                return Err(Error::BadInterpolationData);
            }
            h.push(hk);
            delta.push((y[k + 1] - y[k]) / hk);
        }
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
            return Ok(Self { x, y, d });
        }
        for k in 1..n - 1 {
            let (s1, s2) = (delta[k - 1], delta[k]);
            if s1 == 0.0 || s2 == 0.0 || s1.signum() != s2.signum() {
                d[k] = 0.0;
            } else {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / s1 + w2 / s2);
            }
        }
        d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Ok(Self { x, y, d })
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn slopes(&self) -> &[f64] {
        &self.d
    }

    /// Index k of the cell [x_k, x_{k+1}] containing t (clamped to the ends).
    pub fn locate(&self, t: f64) -> usize {
        let n = self.x.len();
        if t <= self.x[0] {
            return 0;
        }
        if t >= self.x[n - 1] {
            return n - 2;
        }
        self.x.partition_point(|&v| v <= t) - 1
    }

    /// Value at t; outside the data range the end values are returned.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = self.locate(t);
        self.hermite(k, t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t < self.x[0] || t > self.x[n - 1] {
            return 0.0;
        }
        let k = self.locate(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (y0, y1, d0, d1) = (self.y[k], self.y[k + 1], self.d[k], self.d[k + 1]);
        let dh00 = 6.0 * s * s - 6.0 * s;
        let dh10 = 3.0 * s * s - 4.0 * s + 1.0;
        let dh01 = -dh00;
        let dh11 = 3.0 * s * s - 2.0 * s;
        (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1
    }

    fn hermite(&self, k: usize, t: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }

    /// Solve p(t) = v for non-decreasing data. Returns None when v is outside
    /// the range of the data.
    pub fn inverse(&self, v: f64) -> Option<f64> {
        let n = self.y.len();
        if !(v >= self.y[0] && v <= self.y[n - 1]) {
            return None;
        }
        // first node with y >= v
        let j = self.y.partition_point(|&w| w < v);
        if self.y[j] == v {
            return Some(self.x[j]);
        }
        let k = j - 1;
        let (mut lo, mut hi) = (self.x[k], self.x[k + 1]);
        let mut t = lo + (hi - lo) * (v - self.y[k]) / (self.y[k + 1] - self.y[k]);
        for _ in 0..100 {
            let r = self.hermite(k, t) - v;
            if r == 0.0 {
                return Some(t);
            }
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let dp = self.derivative(t);
            let newton = t - r / dp;
            t = if dp > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
                break;
            }
        }
        Some(t)
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_nodes_and_lines() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let p = Pchip::new(x.clone(), y.clone()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(p.eval(*a), *b);
        }
        assert!((p.eval(1.05) - 1.1).abs() < 1e-14);
        assert!((p.derivative(1.05) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Pchip::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Pchip::new(vec![0.0], vec![1.0]).is_err());
        assert!(Pchip::new(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn inverse_at_nodes_is_exact() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64).powf(1.3)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.ln_1p()).collect();
        let p = Pchip::new(x.clone(), y.clone()).unwrap();
        for (a, b) in x.iter().zip(&y).skip(1) {
            assert_eq!(p.inverse(*b), Some(*a));
        }
        assert!(p.inverse(10.0).is_none());
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(
            steps in proptest::collection::vec(0.0f64..1.0, 4..30),
            gaps in proptest::collection::vec(0.01f64..2.0, 30),
        ) {
            let n = steps.len();
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for k in 1..n {
                x.push(x[k - 1] + gaps[k]);
                y.push(y[k - 1] + steps[k]);
            }
            let p = Pchip::new(x.clone(), y.clone()).unwrap();
            let mut prev = f64::NEG_INFINITY;
            let m = 400;
            for i in 0..=m {
                let t = x[0] + (x[n - 1] - x[0]) * i as f64 / m as f64;
                let v = p.eval(t);
                prop_assert!(v >= prev - 1e-12);
                prop_assert!(v >= y[0] - 1e-12 && v <= y[n - 1] + 1e-12);
                prev = v;
            }
        }

        #[test]
        fn inverse_round_trips(v in 0.01f64..0.99) {
            let x: Vec<f64> = (0..30).map(|i| -3.0 + 0.2 * i as f64).collect();
            let y: Vec<f64> = x.iter().map(|t| 0.5 * (1.0 + (t / 1.3f64).tanh())).collect();
            let p = Pchip::new(x, y).unwrap();
            if let Some(t) = p.inverse(v) {
                prop_assert!((p.eval(t) - v).abs() < 1e-13);
            }
        }
    }
}
