//! Gaussian smoothing of node data joined by cubic Hermite pieces.
//!
//! For node values g_i with monotone-limited slopes (optionally with a jump
//! at zero), ∫ q(σ, x − z) g(z) dz is a finite sum over cells of Gaussian
//! moments ∫ t^k q dz, t the local cell coordinate. The moments for every
//! node x_j are computed once per grid.

use super::quadrature::{gauss_legendre, QuadRule};
use super::{std_pdf, std_sf};
use rayon::prelude::*;

/// Continuation of node data beyond the first or last node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeRule {
    Clamp,
    Linear,
}

/// Node samples of a piecewise-cubic function.
#[derive(Clone, Copy, Debug)]
pub struct NodeCurve<'a> {
    pub values: &'a [f64],
    /// Left limit at the zero node when the function jumps there.
    pub left_zero: Option<f64>,
    pub lo: EdgeRule,
    pub hi: EdgeRule,
}

impl<'a> NodeCurve<'a> {
    pub fn clamped(values: &'a [f64]) -> Self {
        Self { values, left_zero: None, lo: EdgeRule::Clamp, hi: EdgeRule::Clamp }
    }
}

#[derive(Clone, Debug, Default)]
struct Row {
    first: usize,
    /// ∫_{cell} t^k q(σ, x − z) dz for k = 0..3.
    moments: Vec<[f64; 4]>,
    lo_tail: Option<(f64, f64)>,
    hi_tail: Option<(f64, f64)>,
}

/// Banded smoothing operator on a fixed node set.
#[derive(Clone, Debug)]
pub struct GaussianSmoother {
    nodes: Vec<f64>,
    zero: usize,
    sigma: f64,
    radius: f64,
    rule: QuadRule,
    rows: Vec<Row>,
}

/// Three-point slopes, clipped to 3·min of the adjacent chords where the data
/// is locally monotone (Hyman's filter), which keeps monotone data monotone.
pub(crate) fn limited_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
    if n == 2 {
        return vec![del[0]; 2];
    }
    for k in 1..n - 1 {
        let (h0, h1) = (x[k] - x[k - 1], x[k + 1] - x[k]);
        d[k] = (h1 * del[k - 1] + h0 * del[k]) / (h0 + h1);
        // five-point stencil where the spacing is uniform
        if k >= 2 && k + 2 < n {
            let (hm, hp) = (x[k - 1] - x[k - 2], x[k + 2] - x[k + 1]);
            let tol = 1e-9 * h0;
            if (hm - h0).abs() < tol && (h1 - h0).abs() < tol && (hp - h0).abs() < tol {
                d[k] = (y[k - 2] - 8.0 * y[k - 1] + 8.0 * y[k + 1] - y[k + 2]) / (12.0 * h0);
            }
        }
    }
    let (h0, h1) = (x[1] - x[0], x[2] - x[1]);
    d[0] = ((2.0 * h0 + h1) * del[0] - h0 * del[1]) / (h0 + h1);
    let (h0, h1) = (x[n - 1] - x[n - 2], x[n - 2] - x[n - 3]);
    d[n - 1] = ((2.0 * h0 + h1) * del[n - 2] - h0 * del[n - 3]) / (h0 + h1);
    for k in 0..n {
        let left = if k > 0 { Some(del[k - 1]) } else { None };
        let right = if k < n - 1 { Some(del[k]) } else { None };
        let (a, b) = (left.unwrap_or(del[0]), right.unwrap_or(del[n - 2]));
        if a * b > 0.0 {
            let cap = 3.0 * a.abs().min(b.abs());
            if d[k] * a <= 0.0 {
                d[k] = 0.0;
            } else if d[k].abs() > cap {
                d[k] = cap.copysign(a);
            }
        } else if a * b == 0.0 {
            d[k] = 0.0;
        } else if (k == 0 || k == n - 1) && a * b <= 0.0 && d[k] * (a + b) < 0.0 {
            d[k] = 0.0;
        }
    }
    d
}

impl GaussianSmoother {
    pub fn new(nodes: &[f64], zero: usize, sigma: f64) -> Self {
        let g = gauss_legendre(8);
        let rule = QuadRule {
            nodes: g.nodes.iter().map(|t| 0.5 * (t + 1.0)).collect(),
            weights: g.weights.iter().map(|w| 0.5 * w).collect(),
        };
        let mut s = Self {
            nodes: nodes.to_vec(),
            zero,
            sigma,
            radius: 10.0,
            rule,
            rows: Vec::new(),
        };
        let rows: Vec<Row> = nodes.par_iter().map(|&x| s.row(x)).collect();
        s.rows = rows;
        s
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// ∫_lo^hi (u − a)^k φ(u) du for k = 0..3, by Gauss–Legendre on pieces
    /// no wider than one standard deviation.
    fn cell_moments(&self, a: f64, lo: f64, hi: f64) -> [f64; 4] {
        let mut m = [0.0; 4];
        let pieces = ((hi - lo).ceil() as usize).max(1);
        let w = (hi - lo) / pieces as f64;
        for p in 0..pieces {
            let start = lo + p as f64 * w;
            for (t, wt) in self.rule.nodes.iter().zip(&self.rule.weights) {
                let u = start + w * t;
                let f = wt * w * std_pdf(u);
                let s = u - a;
                m[0] += f;
                m[1] += f * s;
                m[2] += f * s * s;
                m[3] += f * s * s * s;
            }
        }
        m
    }

    fn row(&self, x: f64) -> Row {
        let n = self.nodes.len();
        let r = self.radius;
        let lo = x - r * self.sigma;
        let hi = x + r * self.sigma;
        let first = self.nodes.partition_point(|&z| z <= lo).saturating_sub(1).min(n - 2);
        let last = self.nodes.partition_point(|&z| z < hi).min(n - 1).max(first + 1);
        let s = self.sigma;
        let mut row = Row { first, ..Row::default() };
        for c in first..last {
            let (z0, z1) = (self.nodes[c], self.nodes[c + 1]);
            let a = (z0 - x) / s;
            let b = (z1 - x) / s;
            let (ca, cb) = (a.max(-r), b.min(r));
            let mut m = if ca < cb { self.cell_moments(a, ca, cb) } else { [0.0; 4] };
            // moments of u − a → moments of t = (u − a)·σ/h
            let scale = s / (z1 - z0);
            let mut f = 1.0;
            for mk in m.iter_mut() {
                *mk *= f;
                f *= scale;
            }
            row.moments.push(m);
        }
        if first == 0 {
            let a = (self.nodes[0] - x) / s;
            let mass = std_sf(-a);
            // ∫_{z < z0} (z − z0) q dz
            let m1 = -s * (std_pdf(a) + a * mass);
            row.lo_tail = Some((mass, m1));
        }
        if last == n - 1 {
            let b = (self.nodes[n - 1] - x) / s;
            let mass = std_sf(b);
            let m1 = s * (std_pdf(b) - b * mass);
            row.hi_tail = Some((mass, m1));
        }
        row
    }

    /// Cell end values and slopes, taking the left limit at zero for the
    /// cell that ends there.
    fn slopes(&self, f: &NodeCurve) -> (Vec<f64>, Option<f64>) {
        match f.left_zero {
            None => (limited_slopes(&self.nodes, f.values), None),
            Some(lz) => {
                let z = self.zero;
                let mut left = f.values[..=z].to_vec();
                left[z] = lz;
                let dl = limited_slopes(&self.nodes[..=z], &left);
                let dr = limited_slopes(&self.nodes[z..], &f.values[z..]);
                let mut d = dl[..z].to_vec();
                d.extend_from_slice(&dr);
                (d, Some(dl[z]))
            }
        }
    }

    fn cell(&self, f: &NodeCurve, d: &[f64], dz: Option<f64>, c: usize) -> (f64, f64, f64, f64) {
        match f.left_zero {
            Some(lz) if c + 1 == self.zero => (f.values[c], lz, d[c], dz.unwrap_or(d[c + 1])),
            _ => (f.values[c], f.values[c + 1], d[c], d[c + 1]),
        }
    }

    fn edge_slopes(&self, f: &NodeCurve, d: &[f64], dz: Option<f64>) -> (f64, f64) {
        let n = self.nodes.len();
        let lo = match f.lo {
            EdgeRule::Clamp => 0.0,
            EdgeRule::Linear => {
                let (a, b, _, _) = self.cell(f, d, dz, 0);
                (b - a) / (self.nodes[1] - self.nodes[0])
            }
        };
        let hi = match f.hi {
            EdgeRule::Clamp => 0.0,
            EdgeRule::Linear => {
                let (a, b, _, _) = self.cell(f, d, dz, n - 2);
                (b - a) / (self.nodes[n - 1] - self.nodes[n - 2])
            }
        };
        (lo, hi)
    }

    fn apply_row(&self, row: &Row, f: &NodeCurve, d: &[f64], dz: Option<f64>, x: f64, edge: (f64, f64)) -> (f64, f64) {
        let n = self.nodes.len();
        let mut val = 0.0;
        let mut der = 0.0;
        for (k, t) in row.moments.iter().enumerate() {
            let c = row.first + k;
            let h = self.nodes[c + 1] - self.nodes[c];
            let (y0, y1, d0, d1) = self.cell(f, d, dz, c);
            val += y0 * (t[0] - 3.0 * t[2] + 2.0 * t[3])
                + y1 * (3.0 * t[2] - 2.0 * t[3])
                + h * d0 * (t[1] - 2.0 * t[2] + t[3])
                + h * d1 * (t[3] - t[2]);
            der += (y1 - y0) * 6.0 * (t[1] - t[2]) / h
                + d0 * (t[0] - 4.0 * t[1] + 3.0 * t[2])
                + d1 * (3.0 * t[2] - 2.0 * t[1]);
        }
        if let Some((mass, m1)) = row.lo_tail {
            val += f.values[0] * mass + edge.0 * m1;
            der += edge.0 * mass;
        }
        if let Some((mass, m1)) = row.hi_tail {
            val += f.values[n - 1] * mass + edge.1 * m1;
            der += edge.1 * mass;
        }
        if let Some(lz) = f.left_zero {
            let jump = f.values[self.zero] - lz;
            der += jump * std_pdf(x / self.sigma) / self.sigma;
        }
        (val, der)
    }

    /// Smoothed values and their x-derivatives at every node.
    pub fn apply(&self, f: &NodeCurve) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(f.values.len(), self.nodes.len());
        let (d, dz) = self.slopes(f);
        let edge = self.edge_slopes(f, &d, dz);
        self.rows
            .par_iter()
            .zip(self.nodes.par_iter())
            .map(|(row, &x)| self.apply_row(row, f, &d, dz, x, edge))
            .unzip()
    }

    /// Smoothed value and derivative at an arbitrary point.
    pub fn eval(&self, f: &NodeCurve, x: f64) -> (f64, f64) {
        let (d, dz) = self.slopes(f);
        let edge = self.edge_slopes(f, &d, dz);
        self.apply_row(&self.row(x), f, &d, dz, x, edge)
    }

    /// The cubic Hermite interpolant the smoother integrates, at z.
    pub fn interpolant(&self, f: &NodeCurve, z: f64) -> f64 {
        let (d, dz) = self.slopes(f);
        let n = self.nodes.len();
        let edge = self.edge_slopes(f, &d, dz);
        if z < self.nodes[0] {
            return f.values[0] + edge.0 * (z - self.nodes[0]);
        }
        if z >= self.nodes[n - 1] {
            return f.values[n - 1] + edge.1 * (z - self.nodes[n - 1]);
        }
        let c = self.nodes.partition_point(|&t| t <= z) - 1;
        let h = self.nodes[c + 1] - self.nodes[c];
        let t = (z - self.nodes[c]) / h;
        let (y0, y1, d0, d1) = self.cell(f, &d, dz, c);
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (1.0 - 3.0 * t2 + 2.0 * t3) + y1 * (3.0 * t2 - 2.0 * t3) + h * d0 * (t - 2.0 * t2 + t3) + h * d1 * (t3 - t2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate, std_cdf, Grid, GridParams};
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::new(&GridParams::default().with_tail_max(60.0), 1.0).unwrap()
    }

    #[test]
    fn constants_and_lines_are_preserved() {
        let g = grid();
        let op = GaussianSmoother::new(g.nodes(), g.zero_index(), 1.0);
        let ones = vec![1.0; g.len()];
        let (v, d) = op.apply(&NodeCurve::clamped(&ones));
        assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-13));
        assert!(d.iter().all(|x| x.abs() < 1e-13));
        let line: Vec<f64> = g.nodes().to_vec();
        let curve = NodeCurve { values: &line, left_zero: None, lo: EdgeRule::Linear, hi: EdgeRule::Linear };
        let (v, d) = op.apply(&curve);
        for (x, y) in g.nodes().iter().zip(&v) {
            assert!((x - y).abs() < 1e-11 * x.abs().max(1.0), "{x} {y}");
        }
        assert!(d.iter().all(|x| (x - 1.0).abs() < 1e-11));
    }

    #[test]
    fn sign_function_is_exact() {
        let g = grid();
        let op = GaussianSmoother::new(g.nodes(), g.zero_index(), 1.0);
        let z = g.zero_index();
        let vals: Vec<f64> = (0..g.len()).map(|i| if i >= z { 1.0 } else { -1.0 }).collect();
        let curve = NodeCurve { values: &vals, left_zero: Some(-1.0), lo: EdgeRule::Clamp, hi: EdgeRule::Clamp };
        let (v, _) = op.eval(&curve, 1.0);
        assert!((v - 0.682_689_492_137_086).abs() < 1e-14);
        let (v, d) = op.apply(&curve);
        for ((x, y), dy) in g.nodes().iter().zip(&v).zip(&d) {
            assert!((y - (2.0 * std_cdf(*x) - 1.0)).abs() < 1e-14);
            assert!((dy - 2.0 * crate::numerics::std_pdf(*x)).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_direct_quadrature_of_interpolant() {
        let g = grid();
        let op = GaussianSmoother::new(g.nodes(), g.zero_index(), 0.7);
        let vals: Vec<f64> = g.nodes().iter().map(|x| (x / 3.0).tanh()).collect();
        let curve = NodeCurve::clamped(&vals);
        let nodes = g.nodes().to_vec();
        for &x in &[-5.0, -0.33, 0.0, 1.01, 7.5] {
            // cell by cell so the quadrature never straddles a node
            let mut cuts: Vec<f64> = nodes.iter().cloned().filter(|t| (t - x).abs() < 9.0).collect();
            cuts.insert(0, x - 9.0);
            cuts.push(x + 9.0);
            let direct: f64 = cuts
                .windows(2)
                .map(|w| {
                    integrate(
                        |z| op.interpolant(&curve, z) * crate::numerics::gaussian_density(0.7, x - z),
                        w[0],
                        w[1],
                        1e-14,
                        1e-17,
                    )
                })
                .sum();
            let (v, _) = op.eval(&curve, x);
            assert!((v - direct).abs() < 1e-12, "{x}: {v} {direct}");
            // and the interpolant is close to the function itself
            let exact = integrate(|z| (z / 3.0).tanh() * crate::numerics::gaussian_density(0.7, x - z), x - 9.0, x + 9.0, 1e-14, 1e-17);
            assert!((v - exact).abs() < 1e-9, "{x}: {v} {exact}");
        }
    }

    #[test]
    fn fourth_order_on_smooth_data() {
        // monotone data, so the slope limiter stays inactive
        let f = |x: f64| 0.5 * x + 0.25 * x.sin();
        let exact = |x: f64| 0.5 * x + 0.25 * (-0.5f64).exp() * x.sin();
        let mut errs = Vec::new();
        for step in [0.2, 0.1] {
            let p = GridParams { core_step_sigmas: step, ..GridParams::default() }.with_tail_max(40.0);
            let g = Grid::new(&p, 1.0).unwrap();
            let op = GaussianSmoother::new(g.nodes(), g.zero_index(), 1.0);
            let vals: Vec<f64> = g.nodes().iter().map(|x| f(*x)).collect();
            let curve = NodeCurve { values: &vals, left_zero: None, lo: EdgeRule::Linear, hi: EdgeRule::Linear };
            let (v, _) = op.apply(&curve);
            let err = g
                .nodes()
                .iter()
                .zip(&v)
                .filter(|(x, _)| x.abs() < 5.0)
                .map(|(x, y)| (y - exact(*x)).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] < 1e-5, "{errs:?}");
        assert!(errs[0] / errs[1] > 12.0, "{errs:?}");
    }

    #[test]
    fn slopes_respect_monotone_data() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 0.0, 1.0, 2.0, 2.0];
        let d = limited_slopes(&x, &y);
        assert_eq!(d[1], 0.0);
        assert_eq!(d[3], 0.0);
        assert!(d[2] > 0.0 && d[2] <= 3.0);
    }

    proptest! {
        #[test]
        fn monotone_data_smooths_to_monotone_output(steps in proptest::collection::vec(0.0f64..1.0, 30)) {
            let g = Grid::new(&GridParams::default().with_tail_max(15.0), 1.0).unwrap();
            let op = GaussianSmoother::new(g.nodes(), g.zero_index(), 1.0);
            let mut vals = Vec::with_capacity(g.len());
            let mut acc = 0.0;
            for i in 0..g.len() {
                if i % 50 == 0 {
                    acc += steps[(i / 50) % steps.len()];
                }
                vals.push(acc);
            }
            let (v, d) = op.apply(&NodeCurve::clamped(&vals));
            for w in v.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-13);
            }
            prop_assert!(d.iter().all(|x| *x >= -1e-12));
        }
    }
}
