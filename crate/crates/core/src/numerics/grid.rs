use super::pchip::Pchip;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Grid layout in units of the noise scale σ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridParams {
    pub core_halfwidth_sigmas: f64,
    pub core_step_sigmas: f64,
    pub tail_ratio: f64,
    pub tail_max_sigmas: f64,
    pub hermite_nodes: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            core_halfwidth_sigmas: 12.0,
            core_step_sigmas: 0.02,
            tail_ratio: 1.05,
            tail_max_sigmas: 1e4,
            hermite_nodes: 64,
        }
    }
}

impl GridParams {
    /// Same layout with the geometric extension stopped at `tail_max_sigmas`.
    pub fn with_tail_max(mut self, tail_max_sigmas: f64) -> Self {
        self.tail_max_sigmas = tail_max_sigmas;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.core_halfwidth_sigmas >= 10.0
            && self.core_step_sigmas > 0.0
            && self.core_step_sigmas < self.core_halfwidth_sigmas
            && self.tail_ratio > 1.0
            && self.tail_max_sigmas.is_finite()
            && self.hermite_nodes >= 8;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("grid parameters {self:?}")))
        }
    }
}

/// Symmetric node set: uniform core around 0 plus a geometric tail on each side.
#[derive(Clone, Debug)]
pub struct Grid {
    nodes: Vec<f64>,
    zero: usize,
    sigma: f64,
    core_step: f64,
    core_half: usize,
}

impl Grid {
    pub fn new(params: &GridParams, sigma: f64) -> Result<Self> {
        params.validate()?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma}")));
        }
        let step = params.core_step_sigmas;
        let k = (params.core_halfwidth_sigmas / step).round() as usize;
        let mut right: Vec<f64> = (1..=k).map(|i| i as f64 * step).collect();
        let mut x = k as f64 * step;
        let mut h = step;
        let lmax = params.tail_max_sigmas;
        while x < lmax {
            h *= params.tail_ratio;
            x += h;
            if x >= lmax {
                if lmax - right[right.len() - 1] < 0.5 * h {
                    right.pop();
                }
                right.push(lmax);
                break;
            }
            right.push(x);
        }
        let mut nodes: Vec<f64> = right.iter().rev().map(|v| -v * sigma).collect();
        let zero = nodes.len();
        nodes.push(0.0);
        nodes.extend(right.iter().map(|v| v * sigma));
        Ok(Self {
            nodes,
            zero,
            sigma,
            core_step: step * sigma,
            core_half: k,
        })
    }

    /// Grid with the same layout at another noise scale.
    pub fn rescaled(&self, sigma: f64) -> Self {
        let f = sigma / self.sigma;
        Self {
            nodes: self.nodes.iter().map(|v| v * f).collect(),
            zero: self.zero,
            sigma,
            core_step: self.core_step * f,
            core_half: self.core_half,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn zero_index(&self) -> usize {
        self.zero
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn core_step(&self) -> f64 {
        self.core_step
    }

    /// Index range of the uniform core, inclusive at both ends.
    pub fn core_range(&self) -> std::ops::RangeInclusive<usize> {
        self.zero - self.core_half..=self.zero + self.core_half
    }

    pub fn core_halfwidth(&self) -> f64 {
        self.core_half as f64 * self.core_step
    }

    pub fn max_abs(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }
}

/// Leading-order tail law used to extend a curve past the last node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailLaw {
    /// F ≈ sign·a·|x|^rho (unbounded side).
    Growth { sign: f64, a: f64, rho: f64 },
    /// F ≈ endpoint − sign·c·|x|^rho with rho < 0 (bounded side).
    Approach { sign: f64, endpoint: f64, c: f64, rho: f64 },
}

impl TailLaw {
    /// Least-squares power law through the points (|x|, distance to the
    /// endpoint, or |F| when `endpoint` is infinite).
    pub fn fit(xs: &[f64], ys: &[f64], endpoint: f64) -> Option<Self> {
        let sign = if xs[xs.len() - 1] > 0.0 { 1.0 } else { -1.0 };
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for (x, y) in xs.iter().zip(ys) {
            let d = if endpoint.is_finite() { (endpoint - y) * sign } else { y * sign };
            if d > 0.0 && x.abs() > 0.0 {
                lx.push(x.abs().ln());
                ly.push(d.ln());
            }
        }
        if lx.len() < 2 {
            return None;
        }
        let n = lx.len() as f64;
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
        let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        if sxx <= 0.0 {
            return None;
        }
        let rho = sxy / sxx;
        let c = (my - rho * mx).exp();
        if endpoint.is_finite() {
            Some(TailLaw::Approach { sign, endpoint, c, rho })
        } else {
            Some(TailLaw::Growth { sign, a: c, rho })
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TailLaw::Growth { sign, a, rho } => sign * a * x.abs().powf(rho),
            TailLaw::Approach { sign, endpoint, c, rho } => endpoint - sign * c * x.abs().powf(rho),
        }
    }

    /// Abscissa where the law takes the value v, if any.
    pub fn invert(&self, v: f64) -> Option<f64> {
        let (sign, d, scale, rho) = match *self {
            TailLaw::Growth { sign, a, rho } => (sign, v * sign, a, rho),
            TailLaw::Approach { sign, endpoint, c, rho } => (sign, (endpoint - v) * sign, c, rho),
        };
        if d <= 0.0 || rho == 0.0 {
            return None;
        }
        Some(sign * (d / scale).powf(1.0 / rho))
    }
}

/// How a grid function continues beyond the last node on one side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extrapolation {
    Clamp,
    Linear,
    Asymptote(TailLaw),
}

/// Samples on a grid, optionally with a jump at zero, interpolated by PCHIP.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
    left_zero: Option<f64>,
    pub lo: Extrapolation,
    pub hi: Extrapolation,
    monotone: bool,
    pieces: Vec<Pchip>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        Self::build(grid, values, None)
    }

    /// Function with a jump at zero: `values[zero]` is the right limit and
    /// `left_zero` the left limit.
    pub fn with_jump(grid: Arc<Grid>, values: Vec<f64>, left_zero: f64) -> Result<Self> {
        Self::build(grid, values, Some(left_zero))
    }

    fn build(grid: Arc<Grid>, values: Vec<f64>, left_zero: Option<f64>) -> Result<Self> {
        if values.len() != grid.len() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadInterpolationData);
        }
        let pieces = match left_zero {
            None => vec![Pchip::new(grid.nodes().to_vec(), values.clone())?],
            Some(lz) => {
                let z = grid.zero_index();
                let mut left = values[..=z].to_vec();
                left[z] = lz;
                vec![
                    Pchip::new(grid.nodes()[..=z].to_vec(), left)?,
                    Pchip::new(grid.nodes()[z..].to_vec(), values[z..].to_vec())?,
                ]
            }
        };
        let monotone = values.windows(2).all(|w| w[1] >= w[0])
            && left_zero.is_none_or(|lz| {
                let z = grid.zero_index();
                lz >= values[z - 1] && values[z] >= lz
            });
        Ok(Self {
            grid,
            values,
            left_zero,
            lo: Extrapolation::Clamp,
            hi: Extrapolation::Clamp,
            monotone,
            pieces,
        })
    }

    pub fn with_extrapolation(mut self, lo: Extrapolation, hi: Extrapolation) -> Self {
        self.lo = lo;
        self.hi = hi;
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_zero(&self) -> Option<f64> {
        self.left_zero
    }

    /// Right limit minus left limit at zero.
    pub fn jump_at_zero(&self) -> f64 {
        self.left_zero.map_or(0.0, |lz| self.values[self.grid.zero_index()] - lz)
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn eval(&self, x: f64) -> f64 {
        let nodes = self.grid.nodes();
        let n = nodes.len();
        if x < nodes[0] {
            return match self.lo {
                Extrapolation::Clamp => self.values[0],
                Extrapolation::Linear => {
                    let s = (self.values[1] - self.values[0]) / (nodes[1] - nodes[0]);
                    self.values[0] + s * (x - nodes[0])
                }
                Extrapolation::Asymptote(law) => law.eval(x),
            };
        }
        if x > nodes[n - 1] {
            return match self.hi {
                Extrapolation::Clamp => self.values[n - 1],
                Extrapolation::Linear => {
                    let s = (self.values[n - 1] - self.values[n - 2]) / (nodes[n - 1] - nodes[n - 2]);
                    self.values[n - 1] + s * (x - nodes[n - 1])
                }
                Extrapolation::Asymptote(law) => law.eval(x),
            };
        }
        if self.pieces.len() == 2 && x < 0.0 {
            self.pieces[0].eval(x)
        } else {
            self.pieces[self.pieces.len() - 1].eval(x)
        }
    }

    /// Left limit at x (differs from `eval` only at a jump).
    pub fn eval_left(&self, x: f64) -> f64 {
        if x == 0.0 {
            if let Some(lz) = self.left_zero {
                return lz;
            }
        }
        self.eval(x)
    }

    /// Fit the leading tail law through the last `k` nodes of one side.
    pub fn fit_tail(&self, upper: bool, k: usize, endpoint: f64) -> Option<TailLaw> {
        let nodes = self.grid.nodes();
        let n = nodes.len();
        let k = k.min(n / 2);
        if upper {
            TailLaw::fit(&nodes[n - k..], &self.values[n - k..], endpoint)
        } else {
            let xs: Vec<f64> = nodes[..k].iter().rev().copied().collect();
            let ys: Vec<f64> = self.values[..k].iter().rev().copied().collect();
            TailLaw::fit(&xs, &ys, endpoint)
        }
    }
}
