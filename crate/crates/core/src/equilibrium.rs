//! Fixed-point engine for the marginal cost function F.
//!
//! One application of T builds the tail-expectation book φ_F from F, smooths
//! it with the Gaussian kernel, and mixes the smoothed curve c with its
//! running average: TF = c/N + (N−1)/N · (1/x)∫_0^x c.

use crate::error::{Error, Result};
use crate::numerics::{
    cumulative_integral, std_cdf, std_quantile, std_sf, EdgeRule, Extrapolation, GaussianSmoother, Grid, GridFunction,
    GridParams, NodeCurve, Pchip,
};
use crate::signals::{Side, SignalDistribution, TailRegime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Number of insiders and noise scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    #[serde(rename = "N")]
    pub n_insiders: usize,
    pub sigma: f64,
}

impl MarketParams {
    pub fn new(n_insiders: usize, sigma: f64) -> Self {
        Self { n_insiders, sigma }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_insiders == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma = {}", self.sigma)));
        }
        Ok(())
    }

    /// Whether N ≥ Ψ+ slope at infinity for an unbounded fat upper tail
    /// (always true on bounded sides). None when the slope is unknown.
    pub fn feasible_for(&self, dist: &SignalDistribution) -> Option<bool> {
        let mut ok = true;
        for side in [Side::Upper, Side::Lower] {
            let spec = dist.tail_spec(side);
            if spec.bounded() {
                continue;
            }
            if !spec.psi_slope.is_finite() {
                return None;
            }
            ok &= self.n_insiders as f64 >= spec.psi_slope;
        }
        Some(ok)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverControls {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Solve on the σ = 1 grid and rescale the abscissae afterwards.
    pub normalize: bool,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            damping: 0.0,
            normalize: true,
        }
    }
}

impl SolverControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidParameter(format!("solver controls {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Diverged,
}

/// Mixing weights of the plain and averaged kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    Insiders(usize),
    /// The N → ∞ operator, which keeps only the averaged term.
    Limit,
    /// Same-price liquidation with N insiders.
    SamePrice(usize),
}

impl Kernel {
    fn weights(self) -> (f64, f64) {
        match self {
            Kernel::Insiders(n) | Kernel::SamePrice(n) => {
                let n = n as f64;
                (1.0 / n, (n - 1.0) / n)
            }
            Kernel::Limit => (0.0, 1.0),
        }
    }
}

/// Smoothed tail sums at the nodes: q * (Π±∘F) and q * (Φ±∘F).
#[derive(Clone, Debug)]
pub(crate) struct TailSums {
    pub pp: Vec<f64>,
    pub ep: Vec<f64>,
    pub pm: Vec<f64>,
    pub em: Vec<f64>,
}

/// The book φ_F on the nodes, with its left limit at zero.
#[derive(Clone, Debug)]
pub(crate) struct Book {
    pub values: Vec<f64>,
    pub left_zero: f64,
    /// Nodes where a tail sum underflowed and the boundary value was used.
    pub underflow: usize,
}

/// Operator T on a fixed working grid.
#[derive(Debug)]
pub(crate) struct Engine {
    pub dist: Arc<SignalDistribution>,
    pub grid: Arc<Grid>,
    pub smoother: GaussianSmoother,
    pub kernel: Kernel,
}

impl Engine {
    pub fn new(dist: Arc<SignalDistribution>, grid: Arc<Grid>, kernel: Kernel) -> Self {
        let smoother = GaussianSmoother::new(grid.nodes(), grid.zero_index(), grid.sigma());
        Self { dist, grid, smoother, kernel }
    }

    pub fn sigma(&self) -> f64 {
        self.grid.sigma()
    }

    /// Abscissae u_k with F(u) < a_k ⇔ u < u_k, one per atom.
    fn atom_cuts(&self, f: &[f64], atoms: &[(f64, f64)]) -> Vec<f64> {
        let (m, big_m) = (self.dist.support_lo(), self.dist.support_hi());
        let nodes = self.grid.nodes();
        let n = f.len();
        let p = Pchip::new(nodes.to_vec(), f.to_vec()).ok();
        atoms
            .iter()
            .map(|&(a, _)| {
                if a >= big_m {
                    f64::INFINITY
                } else if a <= m {
                    f64::NEG_INFINITY
                } else if a <= f[0] {
                    f64::NEG_INFINITY
                } else if a >= f[n - 1] {
                    f64::INFINITY
                } else {
                    p.as_ref().and_then(|p| p.inverse(a)).unwrap_or(f64::NAN)
                }
            })
            .collect()
    }

    fn discrete_sums_at(&self, cuts: &[f64], atoms: &[(f64, f64)], y: f64) -> (f64, f64, f64, f64) {
        let s = self.sigma();
        let (mut pp, mut ep, mut pm, mut em) = (0.0, 0.0, 0.0, 0.0);
        for (&u, &(a, w)) in cuts.iter().zip(atoms) {
            // P(u_k > y − Z) and its complement
            let (above, below) = if u == f64::INFINITY {
                (1.0, 0.0)
            } else if u == f64::NEG_INFINITY {
                (0.0, 1.0)
            } else {
                (std_cdf((u - y) / s), std_sf((u - y) / s))
            };
            pp += w * above;
            ep += w * a * above;
            pm += w * below;
            em += w * a * below;
        }
        (pp, ep, pm, em)
    }

    /// Tail sums at every node for the candidate F given by its node values.
    pub fn tail_sums(&self, f: &[f64]) -> TailSums {
        if let Some(atoms) = self.dist.atoms() {
            let cuts = self.atom_cuts(f, &atoms);
            let rows: Vec<(f64, f64, f64, f64)> = self
                .grid
                .nodes()
                .par_iter()
                .map(|&y| self.discrete_sums_at(&cuts, &atoms, y))
                .collect();
            let mut t = TailSums { pp: vec![], ep: vec![], pm: vec![], em: vec![] };
            for (a, b, c, d) in rows {
                t.pp.push(a);
                t.ep.push(b);
                t.pm.push(c);
                t.em.push(d);
            }
            return t;
        }
        let raw: Vec<(f64, f64, f64, f64)> = f.par_iter().map(|&v| self.dist.tail_functionals(v)).collect();
        let col = |k: usize| -> Vec<f64> {
            raw.iter()
                .map(|r| match k {
                    0 => r.0,
                    1 => r.1,
                    2 => r.2,
                    _ => r.3,
                })
                .collect()
        };
        let smooth = |v: Vec<f64>| self.smoother.apply(&NodeCurve::clamped(&v)).0;
        TailSums {
            pp: smooth(col(0)),
            ep: smooth(col(1)),
            pm: smooth(col(2)),
            em: smooth(col(3)),
        }
    }

    /// Tail sums at an arbitrary point.
    pub fn tail_sums_at(&self, f: &[f64], y: f64) -> (f64, f64, f64, f64) {
        if let Some(atoms) = self.dist.atoms() {
            let cuts = self.atom_cuts(f, &atoms);
            return self.discrete_sums_at(&cuts, &atoms, y);
        }
        let raw: Vec<(f64, f64, f64, f64)> = f.par_iter().map(|&v| self.dist.tail_functionals(v)).collect();
        let at = |k: usize| {
            let v: Vec<f64> = raw
                .iter()
                .map(|r| match k {
                    0 => r.0,
                    1 => r.1,
                    2 => r.2,
                    _ => r.3,
                })
                .collect();
            self.smoother.eval(&NodeCurve::clamped(&v), y).0
        };
        (at(0), at(1), at(2), at(3))
    }

    /// Buy-side ratio E+/P+ with the boundary substitution on underflow.
    pub fn upper_ratio(&self, pp: f64, ep: f64, f_here: f64) -> (f64, bool) {
        let (m, big_m) = (self.dist.support_lo(), self.dist.support_hi());
        if pp > 1e-300 {
            ((ep / pp).clamp(m, big_m), false)
        } else if big_m.is_finite() {
            (big_m, true)
        } else {
            (self.dist.psi(Side::Upper, f_here), true)
        }
    }

    pub fn lower_ratio(&self, pm: f64, em: f64, f_here: f64) -> (f64, bool) {
        let (m, big_m) = (self.dist.support_lo(), self.dist.support_hi());
        if pm > 1e-300 {
            ((em / pm).clamp(m, big_m), false)
        } else if m.is_finite() {
            (m, true)
        } else {
            (self.dist.psi(Side::Lower, f_here), true)
        }
    }

    /// φ_F at the nodes: buy branch at and right of zero, sell branch left of it.
    pub fn book(&self, f: &[f64]) -> Book {
        let t = self.tail_sums(f);
        let z = self.grid.zero_index();
        let mut underflow = 0;
        let mut values = Vec::with_capacity(f.len());
        for i in 0..f.len() {
            let (v, u) = if i >= z {
                self.upper_ratio(t.pp[i], t.ep[i], f[i])
            } else {
                self.lower_ratio(t.pm[i], t.em[i], f[i])
            };
            underflow += u as usize;
            values.push(v);
        }
        let (left_zero, u) = self.lower_ratio(t.pm[z], t.em[z], f[z]);
        underflow += u as usize;
        Book { values, left_zero, underflow }
    }

    pub fn edge_rules(&self) -> (EdgeRule, EdgeRule) {
        let rule = |finite: bool| if finite { EdgeRule::Clamp } else { EdgeRule::Linear };
        (rule(self.dist.support_lo().is_finite()), rule(self.dist.support_hi().is_finite()))
    }

    /// Smoothed curve c = q * φ and the mixed value c/N + (N−1)/N·avg(c) at the nodes.
    pub fn mix(&self, phi: &[f64], left_zero: f64) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.edge_rules();
        let curve = NodeCurve { values: phi, left_zero: Some(left_zero), lo, hi };
        let (c, dc) = self.smoother.apply(&curve);
        let nodes = self.grid.nodes();
        let z = self.grid.zero_index();
        let integral = cumulative_integral(nodes, z, &c, Some(&dc), None);
        let (wl, wa) = self.kernel.weights();
        let out = (0..nodes.len())
            .map(|i| if i == z { c[i] } else { wl * c[i] + wa * integral[i] / nodes[i] })
            .collect();
        (c, out)
    }

    /// One application of T.
    pub fn apply(&self, f: &[f64]) -> (Vec<f64>, Book) {
        if let Kernel::SamePrice(n) = self.kernel {
            return crate::sameprice::same_price_step(self, f, n);
        }
        let book = self.book(f);
        let (_, tf) = self.mix(&book.values, book.left_zero);
        (tf, book)
    }

    /// One application of the comparison operator for the maximal (upper)
    /// or minimal (lower) envelope.
    pub fn apply_envelope(&self, r: &[f64], side: Side) -> Vec<f64> {
        let mean = self.dist.mean();
        let psi: Vec<f64> = r.par_iter().map(|&v| self.dist.psi(side, v)).collect();
        let (lo, hi) = self.edge_rules();
        let (s, _) = self.smoother.apply(&NodeCurve { values: &psi, left_zero: None, lo, hi });
        let z = self.grid.zero_index();
        let phi: Vec<f64> = (0..r.len())
            .map(|i| match side {
                Side::Upper if i >= z => s[i],
                Side::Lower if i < z => s[i],
                _ => mean,
            })
            .collect();
        let left_zero = if side == Side::Lower { s[z] } else { mean };
        self.mix(&phi, left_zero).1
    }

    /// Quantile-matched starting curve: F₀(x) = Q_V(Φ(x/σ)) on the bulk,
    /// continued beyond |x| = 4.75σ with the growth or decay the tail
    /// regime suggests.
    pub fn initial_guess(&self) -> Vec<f64> {
        let nodes = self.grid.nodes();
        let s = self.sigma();
        let d = &self.dist;
        let (m, big_m) = (d.support_lo(), d.support_hi());
        if d.is_discrete() {
            return nodes.iter().map(|x| m + (big_m - m) * std_cdf(x / s)).collect();
        }
        let xq = -std_quantile(1e-6);
        let q = |t: f64| if t >= 0.0 { d.upper_quantile(std_sf(t)) } else { d.lower_quantile(std_cdf(t)) };
        let h = 0.05;
        let (top, bot) = (q(xq), q(-xq));
        let sides = [
            (Side::Upper, top, (top - q(xq - h)) / h, big_m),
            (Side::Lower, bot, (q(-xq + h) - bot) / h, m),
        ];
        let shapes: Vec<_> = sides.iter().map(|&(side, edge, slope, end)| (edge, slope, end, self.tail_shape(side))).collect();
        nodes
            .par_iter()
            .map(|&x| {
                let t = x / s;
                if t.abs() <= xq {
                    return q(t);
                }
                let (edge, slope, end, rho) = shapes[(t < 0.0) as usize];
                let r = t.abs() / xq;
                if end.is_finite() {
                    // approach the endpoint like r^ρ, or like 1/(1 + log r) when ρ is 0
                    let w = if rho < 0.0 { r.powf(rho) } else { 1.0 / (1.0 + r.ln()) };
                    end + (edge - end) * w
                } else {
                    let g = if rho > 0.0 { (r.powf(rho) - 1.0) / rho } else { r.ln() };
                    edge + t.signum() * slope * xq * g
                }
            })
            .collect()
    }

    /// Exponent of the expected tail of F: growth exponent (capped at 1) on
    /// unbounded sides, decay exponent of |F − endpoint| (in [−1, 0)) on bounded
    /// ones, and 0 for logarithmic or unknown behaviour.
    fn tail_shape(&self, side: Side) -> f64 {
        let spec = self.dist.tail_spec(side);
        let s = spec.psi_slope;
        if spec.regime != TailRegime::PowerLaw || !s.is_finite() {
            return 0.0;
        }
        let rho = match self.kernel {
            Kernel::Insiders(n) | Kernel::SamePrice(n) if (n as f64) > s => (s - 1.0) / (1.0 - s / n as f64),
            Kernel::Insiders(_) | Kernel::SamePrice(_) => 1.0,
            Kernel::Limit => s - 1.0,
        };
        if spec.bounded() {
            rho.clamp(-1.0, -1e-3)
        } else {
            rho.clamp(0.0, 1.0)
        }
    }

    /// Upper bound on |F| over the core before a run is declared divergent.
    fn blowup_limit(&self) -> f64 {
        let d = &self.dist;
        let range = if d.is_discrete() {
            d.support_hi() - d.support_lo()
        } else {
            d.upper_quantile(1e-6) - d.lower_quantile(1e-6)
        };
        10.0 * range.abs().max(1e-12) + d.mean().abs()
    }
}

/// Output of one fixed-point iteration run on the working grid.
#[derive(Clone, Debug)]
pub(crate) struct Iteration {
    pub values: Vec<f64>,
    pub history: Vec<f64>,
    pub status: Status,
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, |acc, v| if v.is_nan() { f64::NAN } else { acc.max(v) })
}

/// Picard iteration F ← (1−θ)·TF + θ·F with divergence checks.
pub(crate) fn iterate<T>(engine: &Engine, start: Vec<f64>, controls: &SolverControls, step: T) -> Iteration
where
    T: Fn(&[f64]) -> Vec<f64>,
{
    let limit = engine.blowup_limit();
    let core = engine.grid.core_range();
    let theta = controls.damping;
    let mut f = start;
    let mut history: Vec<f64> = Vec::new();
    let mut rising = 0;
    for _ in 0..controls.max_iter {
        let tf = step(&f);
        let next: Vec<f64> = tf.iter().zip(&f).map(|(t, o)| (1.0 - theta) * t + theta * o).collect();
        let d = distance(&next, &f);
        history.push(d);
        if !d.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Iteration { values: f, history, status: Status::Diverged };
        }
        f = next;
        if d <= controls.tol {
            return Iteration { values: f, history, status: Status::Converged };
        }
        if f[core.clone()].iter().any(|v| v.abs() > limit) {
            return Iteration { values: f, history, status: Status::Diverged };
        }
        let k = history.len();
        rising = if k >= 2 && history[k - 1] > history[k - 2] { rising + 1 } else { 0 };
        if rising >= 20 {
            return Iteration { values: f, history, status: Status::Diverged };
        }
    }
    Iteration { values: f, history, status: Status::MaxIter }
}

/// Equilibrium marginal cost F on a grid, with the run's diagnostics.
#[derive(Clone, Debug)]
pub struct EquilibriumSolution {
    pub f: GridFunction,
    pub params: MarketParams,
    pub dist: Arc<SignalDistribution>,
    pub history: Vec<f64>,
    pub status: Status,
    pub iterations: usize,
    /// N ≥ Ψ+ slope at infinity for unbounded fat tails; None if unknown.
    pub feasible: Option<bool>,
    /// Nodes where the book fell back to the boundary value in the last step.
    pub underflow_nodes: usize,
    pub(crate) engine: Arc<Engine>,
    /// Ratio between the solution's abscissae and the engine's.
    pub(crate) scale: f64,
    pub(crate) tol: f64,
}

/// Builder for equilibrium solves.
#[derive(Clone, Debug)]
pub struct Solver {
    pub dist: Arc<SignalDistribution>,
    pub params: MarketParams,
    pub grid: GridParams,
    pub controls: SolverControls,
}

impl Solver {
    pub fn new(dist: SignalDistribution, params: MarketParams) -> Self {
        Self {
            dist: Arc::new(dist),
            params,
            grid: GridParams::default(),
            controls: SolverControls::default(),
        }
    }

    pub fn with_grid(mut self, grid: GridParams) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_controls(mut self, controls: SolverControls) -> Self {
        self.controls = controls;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.controls.tol = tol;
        self
    }

    fn engine(&self, kernel: Kernel) -> Result<(Engine, f64)> {
        self.params.validate()?;
        self.controls.validate()?;
        let work_sigma = if self.controls.normalize { 1.0 } else { self.params.sigma };
        let grid = Arc::new(Grid::new(&self.grid, work_sigma)?);
        let scale = self.params.sigma / work_sigma;
        Ok((Engine::new(self.dist.clone(), grid, kernel), scale))
    }

    /// Solve for F with N insiders.
    pub fn solve(&self) -> Result<EquilibriumSolution> {
        self.run(Kernel::Insiders(self.params.n_insiders))
    }

    /// Solve the N → ∞ limit equation (averaged kernel only).
    pub fn solve_limit(&self) -> Result<EquilibriumSolution> {
        self.run(Kernel::Limit)
    }

    /// Solve the same-price liquidation first-order condition.
    pub fn solve_same_price(&self) -> Result<EquilibriumSolution> {
        self.run(Kernel::SamePrice(self.params.n_insiders))
    }

    fn run(&self, kernel: Kernel) -> Result<EquilibriumSolution> {
        let (engine, scale) = self.engine(kernel)?;
        let start = engine.initial_guess();
        let it = iterate(&engine, start, &self.controls, |f| engine.apply(f).0);
        let underflow = engine.book(&it.values).underflow;
        let engine = Arc::new(engine);
        let f = finish(&engine, it.values, scale)?;
        Ok(EquilibriumSolution {
            f,
            params: self.params,
            dist: self.dist.clone(),
            iterations: it.history.len(),
            history: it.history,
            status: it.status,
            feasible: self.params.feasible_for(&self.dist),
            underflow_nodes: underflow,
            engine,
            scale,
            tol: self.controls.tol,
        })
    }

    /// Maximal solution R of the upper comparison equation and minimal
    /// solution l of the lower one. Bounded supports only.
    pub fn solve_envelopes(&self) -> Result<Envelopes> {
        let (m, big_m) = (self.dist.support_lo(), self.dist.support_hi());
        if !(m.is_finite() && big_m.is_finite()) {
            return Err(Error::Unsupported("envelopes need a bounded support".into()));
        }
        let (engine, scale) = self.engine(Kernel::Insiders(self.params.n_insiders))?;
        let n = engine.grid.len();
        let up = iterate(&engine, vec![big_m; n], &self.controls, |r| engine.apply_envelope(r, Side::Upper));
        let dn = iterate(&engine, vec![m; n], &self.controls, |l| engine.apply_envelope(l, Side::Lower));
        let engine = Arc::new(engine);
        Ok(Envelopes {
            upper_status: up.status,
            lower_status: dn.status,
            upper_iterations: up.history.len(),
            lower_iterations: dn.history.len(),
            upper: finish(&engine, up.values, scale)?,
            lower: finish(&engine, dn.values, scale)?,
        })
    }
}

/// Wrap working-grid values as a grid function in the caller's units, with
/// a fitted tail law on unbounded sides.
fn finish(engine: &Engine, values: Vec<f64>, scale: f64) -> Result<GridFunction> {
    let grid = if scale == 1.0 { engine.grid.clone() } else { Arc::new(engine.grid.rescaled(engine.sigma() * scale)) };
    let (m, big_m) = (engine.dist.support_lo(), engine.dist.support_hi());
    let f = GridFunction::new(grid, values)?;
    let lo = if m.is_finite() {
        Extrapolation::Clamp
    } else {
        f.fit_tail(false, 12, f64::INFINITY).map_or(Extrapolation::Linear, Extrapolation::Asymptote)
    };
    let hi = if big_m.is_finite() {
        Extrapolation::Clamp
    } else {
        f.fit_tail(true, 12, f64::INFINITY).map_or(Extrapolation::Linear, Extrapolation::Asymptote)
    };
    Ok(f.with_extrapolation(lo, hi))
}

/// Comparison solutions sandwiching every equilibrium F.
#[derive(Clone, Debug)]
pub struct Envelopes {
    pub upper: GridFunction,
    pub lower: GridFunction,
    pub upper_status: Status,
    pub lower_status: Status,
    pub upper_iterations: usize,
    pub lower_iterations: usize,
}

/// Optimal aggregate demand X* = F⁻¹(v).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Demand {
    pub x: f64,
    /// The value lay beyond the grid's range of F and the tail law was used.
    pub extrapolated: bool,
}

impl EquilibriumSolution {
    pub fn nodes(&self) -> &[f64] {
        self.f.grid().nodes()
    }

    pub fn values(&self) -> &[f64] {
        self.f.values()
    }

    pub fn sigma(&self) -> f64 {
        self.params.sigma
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// F at any x, using the tail extrapolation beyond the grid.
    pub fn eval(&self, x: f64) -> f64 {
        self.f.eval(x)
    }

    /// Strictly increasing at every pair of adjacent nodes.
    pub fn strictly_increasing(&self) -> bool {
        self.values().windows(2).all(|w| w[1] > w[0])
    }

    /// Non-decreasing up to rounding: no step down by more than 1e-12
    /// relative to the values involved.
    pub fn non_decreasing(&self) -> bool {
        self.values().windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0))
    }

    /// sup over nodes of |TF − F|/max(1, |F|), the metric the iteration
    /// stops on.
    pub fn residual(&self) -> f64 {
        let (tf, _) = self.engine.apply(self.values());
        distance(&tf, self.values())
    }

    /// X* = F⁻¹(v). Values outside the open support mean unbounded demand.
    pub fn invert(&self, v: f64) -> Result<Demand> {
        let (m, big_m) = (self.dist.support_lo(), self.dist.support_hi());
        if !(v > m && v < big_m) {
            return Err(Error::OutsideSupport(v, m, big_m));
        }
        let vals = self.values();
        let nodes = self.nodes();
        let n = vals.len();
        if v >= vals[0] && v <= vals[n - 1] {
            if let Some(k) = vals.iter().position(|&w| w == v) {
                return Ok(Demand { x: nodes[k], extrapolated: false });
            }
            let p = Pchip::new(nodes.to_vec(), vals.to_vec())?;
            let x = p.inverse(v).ok_or(Error::BadInterpolationData)?;
            return Ok(Demand { x, extrapolated: false });
        }
        let law = if v > vals[n - 1] { self.f.hi } else { self.f.lo };
        let endpoint = if v > vals[n - 1] { big_m } else { m };
        let fitted = match law {
            Extrapolation::Asymptote(l) => Some(l),
            _ => self.f.fit_tail(v > vals[n - 1], 12, endpoint),
        };
        let x = fitted
            .and_then(|l| l.invert(v))
            .ok_or_else(|| Error::Unsupported(format!("no tail law to invert F at {v}")))?;
        Ok(Demand { x, extrapolated: true })
    }

    /// Operator the solution is a fixed point of.
    pub fn kernel(&self) -> Kernel {
        self.engine.kernel
    }

    /// Regime of the registered tail on one side, if any.
    pub fn tail_regime(&self, side: Side) -> TailRegime {
        self.dist.tail_spec(side).regime
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{averaged_kernel, integrate};
    use crate::signals::DistributionSpec;

    fn small_grid() -> GridParams {
        GridParams::default().with_tail_max(200.0)
    }

    fn solver(spec: DistributionSpec, n: usize) -> Solver {
        Solver::new(spec.build().unwrap(), MarketParams::new(n, 1.0)).with_grid(small_grid())
    }

    #[test]
    fn bernoulli_is_one_step() {
        // h = sign gives TF(x) = c/N + (N−1)/N·avg(c) with c = erf(x/√2)
        for n in [1, 3] {
            let s = solver(DistributionSpec::new("bernoulli"), n);
            let sol = s.solve().unwrap();
            assert_eq!(sol.status, Status::Converged);
            assert!(sol.iterations <= 3, "{}", sol.iterations);
            for &x in &[0.5, 2.0, -1.3] {
                let c = |y: f64| 2.0 * std_cdf(y) - 1.0;
                let avg = integrate(c, 0.0, x, 1e-13, 1e-15) / x;
                let nn = n as f64;
                let want = c(x) / nn + (nn - 1.0) / nn * avg;
                assert!((sol.eval(x) - want).abs() < 1e-8, "{n} {x}: {} {want}", sol.eval(x));
            }
        }
    }

    #[test]
    fn trinomial_matches_closed_form() {
        let sol = solver(DistributionSpec::new("trinomial"), 1).solve().unwrap();
        assert!(sol.converged());
        assert!(sol.eval(0.0).abs() < 1e-12);
        // F(x) = ∫_0^∞ q₀(σ,x,z)/(1 + P(Z ≥ z)) dz with q₀(σ,x,z) = q(x−z) − q(x+z)
        for &x in &[0.4, 1.5, 3.0] {
            let g = |z: f64| {
                let q0 = crate::numerics::std_pdf(x - z) - crate::numerics::std_pdf(x + z);
                q0 / (1.0 + std_sf(z))
            };
            let want = integrate(g, 0.0, x + 12.0, 1e-13, 1e-15);
            assert!((sol.eval(x) - want).abs() < 1e-7, "{x}: {} {want}", sol.eval(x));
        }
    }

    #[test]
    fn constant_candidate_gives_conditional_means() {
        let d = DistributionSpec::new("gaussian").build().unwrap();
        let grid = Arc::new(Grid::new(&small_grid(), 1.0).unwrap());
        let e = Engine::new(Arc::new(d.clone()), grid.clone(), Kernel::Insiders(2));
        let f = vec![0.3; grid.len()];
        let b = e.book(&f);
        let z = grid.zero_index();
        assert!((b.values[z + 10] - d.psi(Side::Upper, 0.3)).abs() < 1e-12);
        assert!((b.values[z - 10] - d.psi(Side::Lower, 0.3)).abs() < 1e-12);
        assert!(b.values[z] > b.left_zero);
        // symmetric kernel at x = 0 averages the two branches
        let (tf, _) = e.apply(&vec![0.0; grid.len()]);
        let want = 0.5 * (d.psi(Side::Upper, 0.0) + d.psi(Side::Lower, 0.0));
        assert!((tf[z] - want).abs() < 1e-12);
    }

    #[test]
    fn averaged_kernel_form_agrees() {
        // avg(c)(x) = ∫ q̄(σ,x,z) φ(z) dz for φ = sign
        let x = 1.7;
        let direct = integrate(|z| averaged_kernel(1.0, x, z) * z.signum(), -15.0, 20.0, 1e-13, 1e-15);
        let c = |y: f64| 2.0 * std_cdf(y) - 1.0;
        let avg = integrate(c, 0.0, x, 1e-13, 1e-15) / x;
        assert!((direct - avg).abs() < 1e-10);
    }

    #[test]
    fn symmetric_gaussian_solution() {
        let sol = solver(DistributionSpec::new("gaussian").param("variance", 0.25), 3).solve().unwrap();
        assert!(sol.converged(), "{:?}", sol.status);
        assert!(sol.strictly_increasing());
        let v = sol.values();
        let n = v.len();
        for i in 0..n {
            assert!((v[i] + v[n - 1 - i]).abs() < 1e-9);
        }
        assert!(sol.residual() < 10.0 * sol.tol());
    }

    #[test]
    fn inversion() {
        let sol = solver(DistributionSpec::new("truncated_gaussian").param("variance", 0.25).param("bound", 1.0), 2)
            .solve()
            .unwrap();
        assert!(sol.converged());
        assert!(sol.invert(0.0).unwrap().x.abs() < 1e-12);
        let k = sol.f.grid().zero_index() + 37;
        assert_eq!(sol.invert(sol.values()[k]).unwrap().x, sol.nodes()[k]);
        let d = sol.invert(0.3).unwrap();
        assert!((sol.eval(d.x) - 0.3).abs() < 1e-12);
        assert!(sol.invert(1.0).is_err());
        assert!(sol.invert(-2.0).is_err());
    }

    #[test]
    fn envelopes_sandwich() {
        let s = solver(DistributionSpec::new("truncated_gaussian").param("variance", 0.25).param("bound", 1.0), 2);
        let sol = s.solve().unwrap();
        let env = s.solve_envelopes().unwrap();
        assert_eq!(env.upper_status, Status::Converged);
        assert_eq!(env.lower_status, Status::Converged);
        for ((f, r), l) in sol.values().iter().zip(env.upper.values()).zip(env.lower.values()) {
            assert!(l - 1e-9 <= *f && *f <= r + 1e-9, "{l} {f} {r}");
        }
        let r = env.upper.values();
        assert!(r[r.len() - 1] - r[0] > 0.1);
    }

    #[test]
    fn feasibility_flag() {
        let st = DistributionSpec::new("student").param("alpha", 3.0).build().unwrap();
        assert_eq!(MarketParams::new(1, 1.0).feasible_for(&st), Some(false));
        assert_eq!(MarketParams::new(2, 1.0).feasible_for(&st), Some(true));
        let tg = DistributionSpec::new("truncated_gaussian").build().unwrap();
        assert_eq!(MarketParams::new(1, 1.0).feasible_for(&tg), Some(true));
    }

    #[test]
    fn bad_inputs() {
        let d = DistributionSpec::new("gaussian").build().unwrap();
        assert!(Solver::new(d.clone(), MarketParams::new(0, 1.0)).solve().is_err());
        assert!(Solver::new(d.clone(), MarketParams::new(1, -1.0)).solve().is_err());
        assert!(Solver::new(d, MarketParams::new(2, 1.0)).solve_envelopes().is_err());
    }
}
