//! Economic quantities derived from a solved equilibrium: the limit order
//! book, execution prices, shortfall, profit and volume tails.

use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};
use crate::numerics::{
    convolve, cumulative_integral, gauss_hermite, gauss_legendre, integrate, std_cdf, std_pdf, std_sf, GridFunction, NodeCurve,
    QuadRule,
};
use crate::signals::Side;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{PI, SQRT_2};

/// Limit order book h(y) on the solution grid. The node at zero carries the
/// buy branch; the sell branch's limit at zero is stored separately.
#[derive(Clone, Debug)]
pub struct OrderBook {
    pub h: GridFunction,
    /// h(0+)
    pub best_ask: f64,
    /// h(0−)
    pub best_bid: f64,
    pub underflow_nodes: usize,
}

impl OrderBook {
    pub fn build(sol: &EquilibriumSolution) -> Result<Self> {
        let engine = &sol.engine;
        let f = sol.values();
        let book = engine.book(f);
        let h = GridFunction::with_jump(sol.f.grid().clone(), book.values, book.left_zero)?;
        // one-sided limits at zero: the two branch formulas disagree there
        let eps = engine.grid.core_step() / 10.0;
        let at = |y: f64| {
            let (pp, ep, pm, em) = engine.tail_sums_at(f, y);
            let fy = sol.eval(y * sol.scale);
            if y > 0.0 {
                engine.upper_ratio(pp, ep, fy).0
            } else {
                engine.lower_ratio(pm, em, fy).0
            }
        };
        let best_ask = 2.0 * at(eps) - at(2.0 * eps);
        let best_bid = 2.0 * at(-eps) - at(-2.0 * eps);
        Ok(Self { h, best_ask, best_bid, underflow_nodes: book.underflow })
    }

    pub fn spread(&self) -> f64 {
        self.best_ask - self.best_bid
    }

    /// h at y, taking the buy branch at zero.
    pub fn eval(&self, y: f64) -> f64 {
        self.h.eval(y)
    }

    /// Nodes y ≥ 0 and h there (the zero node holds h(0+) on the grid).
    pub fn buy_side(&self) -> (&[f64], &[f64]) {
        let z = self.h.grid().zero_index();
        (&self.h.grid().nodes()[z..], &self.h.values()[z..])
    }

    /// Nodes y < 0 and h there.
    pub fn sell_side(&self) -> (&[f64], &[f64]) {
        let z = self.h.grid().zero_index();
        (&self.h.grid().nodes()[..z], &self.h.values()[..z])
    }

    pub fn is_monotone(&self) -> bool {
        self.h.is_monotone()
    }

    /// Whether m ≤ h ≤ M at every node.
    pub fn within_support(&self, lo: f64, hi: f64) -> bool {
        self.h.values().iter().all(|v| *v >= lo && *v <= hi)
    }

    /// Primitive H(y) = ∫_0^y h on the nodes, by Gauss–Legendre on each
    /// interpolation cell.
    fn primitive(&self) -> Vec<f64> {
        let nodes = self.h.grid().nodes();
        let z = self.h.grid().zero_index();
        let rule = gauss_legendre(6);
        let cell = |a: f64, b: f64, left: bool| -> f64 {
            let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
            let s: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(t, w)| {
                    let y = c + r * t;
                    w * if left && y >= 0.0 { self.h.eval_left(0.0) } else { self.h.eval(y) }
                })
                .sum();
            s * r
        };
        let mut out = vec![0.0; nodes.len()];
        for i in z..nodes.len() - 1 {
            out[i + 1] = out[i] + cell(nodes[i], nodes[i + 1], false);
        }
        for i in (1..=z).rev() {
            out[i - 1] = out[i] - cell(nodes[i - 1], nodes[i], true);
        }
        out
    }
}

/// N ∫_0^1 F(xy) y^{N−1} dy, computed as (N/|x|) ∫_0^{|x|} F(±u) (u/|x|)^{N−1} du
/// by Gauss–Legendre on the grid cells. IS(0) = F(0).
pub fn implementation_shortfall(sol: &EquilibriumSolution, x: f64) -> f64 {
    if x == 0.0 {
        return sol.eval(0.0);
    }
    let n = sol.params.n_insiders as f64;
    let nodes = sol.nodes();
    let (ax, sign) = (x.abs(), x.signum());
    let mut cuts = vec![0.0];
    if x > 0.0 {
        cuts.extend(nodes.iter().filter(|&&u| u > 0.0 && u < ax));
    } else {
        cuts.extend(nodes.iter().rev().filter(|&&u| u < 0.0 && -u < ax).map(|u| -u));
    }
    let edge = if x > 0.0 { nodes[nodes.len() - 1] } else { -nodes[0] };
    if ax > edge {
        // extrapolated stretch: geometric pieces
        cuts.extend((1..16).map(|j| edge * (ax / edge).powf(j as f64 / 16.0)));
    }
    cuts.push(ax);
    let rule = gauss_legendre(8);
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        // pieces where (u/|x|)^{N−1} < 1e-18 contribute nothing visible
        if n > 1.0 && (w[1] / ax).powf(n - 1.0) < 1e-18 {
            continue;
        }
        let (c, r) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
            let u = c + r * t;
            acc += wt * r * sol.eval(sign * u) * (u / ax).powf(n - 1.0);
        }
    }
    acc * n / ax
}

/// E[h(x + Z)] = N F(x) − (N − 1) IS(x).
pub fn expected_exec_price(sol: &EquilibriumSolution, x: f64) -> f64 {
    let n = sol.params.n_insiders as f64;
    if n == 1.0 {
        return sol.eval(x);
    }
    n * sol.eval(x) - (n - 1.0) * implementation_shortfall(sol, x)
}

/// Aggregate insider profit π*(v) = X*(v − IS(X*)). At an atom on the
/// boundary of the support X* is infinite and the profit is
/// ∫_0^∞ (M − E h(y + Z)) dy (mirrored at the lower end).
pub fn aggregate_profit(sol: &EquilibriumSolution, book: &OrderBook, v: f64) -> Result<f64> {
    let (m, big_m) = (sol.dist.support_lo(), sol.dist.support_hi());
    if let Some(atoms) = sol.dist.atoms() {
        let on_atom = |e: f64| e.is_finite() && v == e && atoms.iter().any(|a| a.0 == e && a.1 > 0.0);
        if on_atom(big_m) || on_atom(m) {
            return Ok(boundary_profit(sol, book, v, v == big_m));
        }
    }
    let d = sol.invert(v)?;
    Ok(d.x * (v - implementation_shortfall(sol, d.x)))
}

fn boundary_profit(sol: &EquilibriumSolution, book: &OrderBook, v: f64, upper: bool) -> f64 {
    let rule = gauss_hermite(64);
    let s = sol.sigma();
    let g = |y: f64| convolve(&book.h, s, y, &rule);
    // the integrand decays like the Gaussian tail of the book's approach
    let reach = 40.0 * s;
    let f = |t: f64| if upper { v - g(t) } else { g(-t) - v };
    let mut acc = 0.0;
    let mut a = 0.0;
    while a < reach {
        acc += integrate(f, a, a + s, 1e-12, 1e-14);
        a += s;
    }
    acc
}

/// Tail probabilities of informed and total volume at one abscissa.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VolumeTail {
    /// P(X* > y) on the upper side, P(X* < y) on the lower.
    pub informed: f64,
    /// P(X* + Z > y) or P(X* + Z < y).
    pub total: f64,
}

pub fn volume_tail(sol: &EquilibriumSolution, y: f64, side: Side) -> VolumeTail {
    let fy = sol.eval(y);
    let (pp, _, pm, _) = sol.engine.tail_sums_at(sol.values(), y / sol.scale);
    match side {
        Side::Upper => VolumeTail { informed: sol.dist.pi_plus(fy), total: pp },
        Side::Lower => VolumeTail { informed: sol.dist.pi_minus(fy), total: pm },
    }
}

/// Volume tails at every node on one side of zero, outward.
pub fn volume_tails(sol: &EquilibriumSolution, side: Side) -> Vec<(f64, VolumeTail)> {
    let t = sol.engine.tail_sums(sol.values());
    let z = sol.f.grid().zero_index();
    let nodes = sol.nodes();
    let f = sol.values();
    let idx: Vec<usize> = match side {
        Side::Upper => (z + 1..nodes.len()).collect(),
        Side::Lower => (0..z).rev().collect(),
    };
    idx.into_iter()
        .map(|i| {
            let tail = match side {
                Side::Upper => VolumeTail { informed: sol.dist.pi_plus(f[i]), total: t.pp[i] },
                Side::Lower => VolumeTail { informed: sol.dist.pi_minus(f[i]), total: t.pm[i] },
            };
            (nodes[i], tail)
        })
        .collect()
}

/// E[∫_0^Y (h(y) − V) dy] with Y = X*(V) + Z, the aggregate profit of the
/// liquidity suppliers (zero in equilibrium). V is integrated by atom
/// enumeration or a 200-point Gauss–Legendre rule in its normal score
/// t = Φ⁻¹(P(V ≤ v)) on |t| ≤ 8, Z by Gauss–Hermite.
pub fn lp_profit_check(sol: &EquilibriumSolution, book: &OrderBook) -> Result<f64> {
    let nodes = sol.nodes();
    let prim = book.primitive();
    let hv = book.h.values();
    let z = sol.f.grid().zero_index();
    let left0 = book.h.eval_left(0.0);
    let jump = hv[z] - left0;
    let n = nodes.len();
    // H between nodes by cubic Hermite with the exact derivative h
    let big_h = |y: f64| -> f64 {
        if y >= nodes[n - 1] {
            return prim[n - 1] + hv[n - 1] * (y - nodes[n - 1]);
        }
        if y <= nodes[0] {
            return prim[0] + hv[0] * (y - nodes[0]);
        }
        let k = nodes.partition_point(|&t| t <= y) - 1;
        let (x0, x1) = (nodes[k], nodes[k + 1]);
        let d0 = hv[k];
        let d1 = if k + 1 == z { left0 } else { hv[k + 1] };
        let hh = x1 - x0;
        let t = (y - x0) / hh;
        let (t2, t3) = (t * t, t * t * t);
        prim[k] * (2.0 * t3 - 3.0 * t2 + 1.0)
            + prim[k + 1] * (3.0 * t2 - 2.0 * t3)
            + hh * d0 * (t3 - 2.0 * t2 + t)
            + hh * d1 * (t3 - t2)
    };
    let gh = gauss_hermite(64);
    let s = sol.sigma();
    // the jump of h puts a corner J·y⁺ in H; its Gaussian mean is exact
    let ez = |x: f64| -> f64 {
        let smooth: f64 = gh
            .nodes
            .iter()
            .zip(&gh.weights)
            .map(|(t, w)| {
                let y = x + SQRT_2 * s * t;
                w * (big_h(y) - jump * y.max(0.0))
            })
            .sum::<f64>()
            / PI.sqrt();
        smooth + jump * (x * std_cdf(x / s) + s * std_pdf(x / s))
    };
    let (m, big_m) = (sol.dist.support_lo(), sol.dist.support_hi());
    let term = |v: f64| -> Result<f64> {
        if v >= big_m {
            // X* = +∞: ∫_0^∞ (h − M)
            return Ok(prim[n - 1] - big_m * nodes[n - 1]);
        }
        if v <= m {
            return Ok(prim[0] - m * nodes[0]);
        }
        let x = sol.invert(v)?.x;
        Ok(ez(x) - v * x)
    };
    if let Some(atoms) = sol.dist.atoms() {
        let mut acc = 0.0;
        for (a, p) in atoms {
            acc += p * term(a)?;
        }
        return Ok(acc);
    }
    let rule: QuadRule = gauss_legendre(200);
    let reach = 8.0;
    let vals: Vec<Result<f64>> = rule
        .nodes
        .par_iter()
        .zip(&rule.weights)
        .map(|(t, w)| {
            let t = reach * t;
            let v = if t < 0.0 { sol.dist.lower_quantile(std_cdf(t)) } else { sol.dist.upper_quantile(std_sf(t)) };
            Ok(reach * w * std_pdf(t) * term(v)?)
        })
        .collect();
    vals.into_iter().sum()
}

/// sup over core nodes of |(1/N)(q*h)(x) + ((N−1)/N)(1/x)∫_0^x (q*h) − F(x)|,
/// with the book convolved by the solver's smoother. For N = 1 this is
/// |q*h − F|.
pub fn foc_residual(sol: &EquilibriumSolution, book: &OrderBook) -> f64 {
    let engine = &sol.engine;
    let (lo, hi) = engine.edge_rules();
    let curve = NodeCurve {
        values: book.h.values(),
        left_zero: book.h.left_zero(),
        lo,
        hi,
    };
    let (c, dc) = engine.smoother.apply(&curve);
    let wnodes = engine.grid.nodes();
    let z = engine.grid.zero_index();
    let integral = cumulative_integral(wnodes, z, &c, Some(&dc), None);
    let n = sol.params.n_insiders as f64;
    let f = sol.values();
    engine
        .grid
        .core_range()
        .map(|i| {
            let mixed = if i == z { c[i] } else { c[i] / n + (n - 1.0) / n * integral[i] / wnodes[i] };
            (mixed - f[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// The same identity for N = 1 with an independent convolution: monotone
/// cubic interpolation of h and Gauss–Hermite quadrature.
pub fn foc_residual_hermite(sol: &EquilibriumSolution, book: &OrderBook, nodes: usize) -> f64 {
    let rule = gauss_hermite(nodes);
    let s = sol.sigma();
    let grid = sol.f.grid();
    grid.core_range()
        .map(|i| {
            let x = grid.nodes()[i];
            (convolve(&book.h, s, x, &rule) - sol.values()[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// Error for quantities needing a converged solution.
pub fn require_converged(sol: &EquilibriumSolution) -> Result<()> {
    if sol.converged() {
        Ok(())
    } else {
        Err(Error::NotConverged(format!("{:?}", sol.status)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{MarketParams, Solver};
    use crate::numerics::GridParams;
    use crate::signals::DistributionSpec;

    fn solve(family: &str, n: usize, sigma: f64) -> EquilibriumSolution {
        let d = DistributionSpec::new(family).build().unwrap();
        Solver::new(d, MarketParams::new(n, sigma))
            .with_grid(GridParams::default().with_tail_max(40.0))
            .tol(1e-11)
            .solve()
            .unwrap()
    }

    #[test]
    fn bernoulli_book_is_sign() {
        let sol = solve("bernoulli", 1, 1.0);
        let b = OrderBook::build(&sol).unwrap();
        for (&y, &h) in sol.nodes().iter().zip(b.h.values()) {
            if y.abs() > 0.05 {
                assert!((h - y.signum()).abs() < 1e-4, "{y}: {h}");
            }
        }
        assert!((b.spread() - 2.0).abs() < 1e-6);
        assert!(b.is_monotone() && b.within_support(-1.0, 1.0));
    }

    #[test]
    fn bernoulli_profit_is_n_invariant() {
        let want = (2.0 / PI).sqrt();
        for n in [1, 2, 25] {
            let sol = solve("bernoulli", n, 1.0);
            let b = OrderBook::build(&sol).unwrap();
            let p = aggregate_profit(&sol, &b, 1.0).unwrap();
            assert!((p - want).abs() < 1e-6, "N={n}: {p}");
            let q = aggregate_profit(&sol, &b, -1.0).unwrap();
            assert!((q - want).abs() < 1e-6, "N={n}: {q}");
            assert!(lp_profit_check(&sol, &b).unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn trinomial_book_and_spread() {
        for sigma in [1.0, 3.0] {
            let sol = solve("trinomial", 1, sigma);
            let b = OrderBook::build(&sol).unwrap();
            assert!((b.spread() - 4.0 / 3.0).abs() < 1e-6, "{}", b.spread());
            for k in 1..=50 {
                let y = 0.1 * k as f64;
                let want = 1.0 / (1.0 + std_sf(y));
                assert!((b.eval(y * sigma) - want).abs() < 1e-6, "{y}");
            }
            let lp = lp_profit_check(&sol, &b).unwrap();
            assert!(lp.abs() < 1e-4, "{lp}");
        }
    }

    #[test]
    fn shortfall_matches_direct_integral() {
        for n in [1usize, 2, 7] {
            let sol = solve("gaussian", n, 1.0);
            for &x in &[0.3, 2.0, -1.7, 15.0] {
                let nn = n as f64;
                let direct = integrate(|y| nn * sol.eval(x * y) * y.powf(nn - 1.0), 0.0, 1.0, 1e-13, 1e-15);
                let is = implementation_shortfall(&sol, x);
                assert!((is - direct).abs() < 1e-10, "{n} {x}: {is} {direct}");
                if x > 0.0 {
                    assert!(n == 1 || is < sol.eval(x));
                } else if n > 1 {
                    assert!(is > sol.eval(x));
                }
            }
            assert_eq!(implementation_shortfall(&sol, 0.0), sol.eval(0.0));
        }
    }

    #[test]
    fn exec_price_identities() {
        let sol = solve("gaussian", 1, 1.0);
        assert_eq!(expected_exec_price(&sol, 1.3), sol.eval(1.3));
        // the last slice is priced at the value when N = 1
        let x = sol.invert(0.4).unwrap().x;
        assert!((expected_exec_price(&sol, x) - 0.4).abs() < 1e-12);
        let sol = solve("gaussian", 3, 1.0);
        for &x in &[0.5, 2.0, 6.0] {
            assert!(expected_exec_price(&sol, x) > sol.eval(x));
        }
        // E h(x + Z) computed from the book agrees with the identity
        let b = OrderBook::build(&sol).unwrap();
        let rule = gauss_hermite(64);
        for &x in &[0.5, 2.0] {
            let direct = convolve(&b.h, 1.0, x, &rule);
            assert!((direct - expected_exec_price(&sol, x)).abs() < 1e-4, "{x}");
        }
    }

    #[test]
    fn profit_vanishes_at_zero_demand() {
        let sol = solve("gaussian", 2, 1.0);
        let b = OrderBook::build(&sol).unwrap();
        let v0 = sol.eval(0.0);
        assert!(aggregate_profit(&sol, &b, v0).unwrap().abs() < 1e-12);
        assert!(aggregate_profit(&sol, &b, 0.8).unwrap() > 0.0);
        assert!(aggregate_profit(&sol, &b, -0.8).unwrap() > 0.0);
    }

    #[test]
    fn informed_tail_at_zero() {
        let sol = solve("gaussian", 2, 1.0);
        let t = volume_tail(&sol, 0.0, Side::Upper);
        assert!((t.informed - sol.dist.pi_plus(sol.eval(0.0))).abs() < 1e-15);
        assert!((t.informed - 0.5).abs() < 1e-9);
        assert!((t.total - 0.5).abs() < 1e-9);
        let tails = volume_tails(&sol, Side::Upper);
        assert!(tails.windows(2).all(|w| w[1].1.total <= w[0].1.total + 1e-15));
    }

    #[test]
    fn first_order_condition_holds() {
        for n in [1, 2] {
            let sol = solve("gaussian", n, 1.0);
            let b = OrderBook::build(&sol).unwrap();
            assert!(foc_residual(&sol, &b) < 5e-11, "{n}: {}", foc_residual(&sol, &b));
        }
        // independent quadrature agrees to interpolation accuracy
        let sol = solve("trinomial", 1, 1.0);
        let b = OrderBook::build(&sol).unwrap();
        assert!(foc_residual_hermite(&sol, &b, 128) < 1e-4);
    }

    #[test]
    fn lp_profit_is_zero_for_continuous_signal() {
        let d = DistributionSpec::new("gaussian").build().unwrap();
        let sol = Solver::new(d, MarketParams::new(2, 1.0)).solve().unwrap();
        let b = OrderBook::build(&sol).unwrap();
        let lp = lp_profit_check(&sol, &b).unwrap();
        assert!(lp.abs() < 1e-3, "{lp}");
    }
}
