use super::grid::GridFunction;
use crate::error::{Error, Result};

/// ∫_0^{x_i} c(y) dy at every node by the trapezoid rule, with the endpoint
/// derivative correction h²/12·(c'_i − c'_{i+1}) when derivatives are given.
/// `left_zero` carries the left limit (value, derivative) of c at zero.
pub fn cumulative_integral(
    nodes: &[f64],
    zero: usize,
    vals: &[f64],
    ders: Option<&[f64]>,
    left_zero: Option<(f64, f64)>,
) -> Vec<f64> {
    let n = nodes.len();
    let mut out = vec![0.0; n];
    let der = |i: usize| ders.map_or(0.0, |d| d[i]);
    for i in zero..n - 1 {
        let h = nodes[i + 1] - nodes[i];
        let corr = if ders.is_some() { h * h / 12.0 * (der(i) - der(i + 1)) } else { 0.0 };
        out[i + 1] = out[i] + 0.5 * h * (vals[i] + vals[i + 1]) + corr;
    }
    let (v0, d0) = left_zero.unwrap_or((vals[zero], der(zero)));
    for i in (1..=zero).rev() {
        let h = nodes[i] - nodes[i - 1];
        let (vr, dr) = if i == zero { (v0, d0) } else { (vals[i], der(i)) };
        let corr = if ders.is_some() { h * h / 12.0 * (der(i - 1) - dr) } else { 0.0 };
        out[i - 1] = out[i] - (0.5 * h * (vals[i - 1] + vr) + corr);
    }
    out
}

/// (1/x) ∫_0^x c(y) dy by the trapezoid rule on the grid nodes, closing the
/// last partial cell with the interpolated value; returns c(0) at x = 0.
pub fn cumulative_average(c: &GridFunction, x: f64) -> f64 {
    if x == 0.0 {
        return c.eval(0.0);
    }
    let nodes = c.grid().nodes();
    let vals = c.values();
    let zero = c.grid().zero_index();
    let mut acc = 0.0;
    if x > 0.0 {
        let mut i = zero;
        while i + 1 < nodes.len() && nodes[i + 1] <= x {
            acc += 0.5 * (nodes[i + 1] - nodes[i]) * (vals[i] + vals[i + 1]);
            i += 1;
        }
        if nodes[i] < x {
            acc += 0.5 * (x - nodes[i]) * (vals[i] + c.eval(x));
        }
    } else {
        let mut i = zero;
        let right = |k: usize| if k == zero { c.eval_left(0.0) } else { vals[k] };
        while i > 0 && nodes[i - 1] >= x {
            acc -= 0.5 * (nodes[i] - nodes[i - 1]) * (vals[i - 1] + right(i));
            i -= 1;
        }
        if nodes[i] > x {
            acc -= 0.5 * (nodes[i] - x) * (right(i) + c.eval(x));
        }
    }
    acc / x
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMode {
    /// log y against log x (power laws).
    LogLog,
    /// log y against log log x (powers of log x).
    LogLogLog,
}

#[derive(Clone, Copy, Debug)]
pub struct TailFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Weighted least-squares slope over the points with x in the top `decades`
/// decades of xs. The last five points get weight 0.1.
pub fn fit_tail_exponent(xs: &[f64], ys: &[f64], decades: f64, mode: FitMode) -> Result<TailFit> {
    let xmax = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cut = xmax / 10f64.powf(decades);
    let mut pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x >= cut && **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (*x, *y))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() < 8 {
        return Err(Error::TooFewPoints(pts.len()));
    }
    if mode == FitMode::LogLogLog && pts[0].0 <= 1.0 {
        return Err(Error::InvalidParameter("log-log-log fit needs x > 1".into()));
    }
    let n = pts.len();
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for (k, (x, y)) in pts.iter().enumerate() {
        u.push(match mode {
            FitMode::LogLog => x.ln(),
            FitMode::LogLogLog => x.ln().ln(),
        });
        v.push(y.ln());
        w.push(if k + 5 >= n { 0.1 } else { 1.0 });
    }
    let sw: f64 = w.iter().sum();
    let mu = u.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mv = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut suu = 0.0;
    let mut suv = 0.0;
    for k in 0..n {
        suu += w[k] * (u[k] - mu).powi(2);
        suv += w[k] * (u[k] - mu) * (v[k] - mv);
    }
    let slope = suv / suu;
    let intercept = mv - slope * mu;
    let rss: f64 = (0..n).map(|k| w[k] * (v[k] - intercept - slope * u[k]).powi(2)).sum();
    let stderr = if n > 2 { (rss / (sw * (n as f64 - 2.0) / n as f64) / suu).sqrt() } else { 0.0 };
    Ok(TailFit {
        slope,
        stderr,
        intercept,
        points: n,
        lo: pts[0].0,
        hi: pts[n - 1].0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Grid, GridParams};
    use statrs::function::erf::erf;
    use std::sync::Arc;

    #[test]
    fn cumulative_average_examples() {
        let g = Arc::new(Grid::new(&GridParams::default().with_tail_max(30.0), 1.0).unwrap());
        let ones = GridFunction::new(g.clone(), vec![1.0; g.len()]).unwrap();
        assert!((cumulative_average(&ones, 3.7) - 1.0).abs() < 1e-14);
        let id = GridFunction::new(g.clone(), g.nodes().to_vec()).unwrap();
        assert!((cumulative_average(&id, 2.0) - 1.0).abs() < 1e-13);
        assert!((cumulative_average(&id, -2.0) + 1.0).abs() < 1e-13);
        let e: Vec<f64> = g.nodes().iter().map(|y| erf(y / 2f64.sqrt())).collect();
        let ef = GridFunction::new(g.clone(), e).unwrap();
        // (1/3)[3 erf(3/√2) + √(2/π)(e^{-9/2} − 1)]
        let exact = 0.734_293_249_277_076_7;
        assert!((cumulative_average(&ef, 3.0) - exact).abs() < 2e-5);
        assert_eq!(cumulative_average(&ef, 0.0), 0.0);
    }

    #[test]
    fn average_lies_between_extremes() {
        let g = Arc::new(Grid::new(&GridParams::default().with_tail_max(30.0), 1.0).unwrap());
        let vals: Vec<f64> = g.nodes().iter().map(|y| (2.0 * y).sin() + 0.1 * y).collect();
        let f = GridFunction::new(g.clone(), vals.clone()).unwrap();
        for &x in &[0.3, 1.7, 5.0, -4.2, 20.0] {
            let a = cumulative_average(&f, x);
            let (lo, hi) = if x > 0.0 { (0.0, x) } else { (x, 0.0) };
            let inside: Vec<f64> = g
                .nodes()
                .iter()
                .zip(&vals)
                .filter(|(t, _)| **t >= lo - 0.02 && **t <= hi + 0.02)
                .map(|(_, v)| *v)
                .collect();
            let mn = inside.iter().cloned().fold(f64::INFINITY, f64::min);
            let mx = inside.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(a >= mn - 1e-12 && a <= mx + 1e-12);
        }
    }

    #[test]
    fn corrected_trapezoid_is_exact_for_cubics() {
        let g = Grid::new(&GridParams::default().with_tail_max(20.0), 1.0).unwrap();
        let c: Vec<f64> = g.nodes().iter().map(|y| y * y * y - y).collect();
        let d: Vec<f64> = g.nodes().iter().map(|y| 3.0 * y * y - 1.0).collect();
        let i = cumulative_integral(g.nodes(), g.zero_index(), &c, Some(&d), None);
        for (x, v) in g.nodes().iter().zip(&i) {
            let exact = x.powi(4) / 4.0 - x * x / 2.0;
            assert!((v - exact).abs() < 1e-9 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn cumulative_integral_of_sign() {
        let g = Grid::new(&GridParams::default().with_tail_max(20.0), 1.0).unwrap();
        let z = g.zero_index();
        let c: Vec<f64> = (0..g.len()).map(|i| if i >= z { 1.0 } else { -1.0 }).collect();
        let i = cumulative_integral(g.nodes(), z, &c, None, Some((-1.0, 0.0)));
        for (x, v) in g.nodes().iter().zip(&i) {
            assert!((v - x.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_fits() {
        let xs: Vec<f64> = (0..60).map(|i| 1e3 * 1.05f64.powi(i)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.powf(-0.5)).collect();
        let fit = fit_tail_exponent(&xs, &ys, 1.0, FitMode::LogLog).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 / x.ln()).collect();
        let fit = fit_tail_exponent(&xs, &ys, 1.0, FitMode::LogLogLog).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!(fit_tail_exponent(&xs[..5], &ys[..5], 1.0, FitMode::LogLog).is_err());
    }
}
