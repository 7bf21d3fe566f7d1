//! Same-price liquidation: orders are merged into one block and every
//! participant receives the block's average execution price.
//!
//! With w = Z + x the first-order condition reads
//! F(x) = E[(x/N)·D(w) + h̄(w)], where h̄(w) = (1/w)∫_0^w h and
//! D(w) = (h(w) − h̄(w))/w, so both terms are Gaussian convolutions of
//! curves on the grid.

use crate::book::OrderBook;
use crate::equilibrium::{Book, Engine, EquilibriumSolution, Solver, Status};
use crate::error::Result;
use crate::numerics::{cumulative_integral, EdgeRule, NodeCurve};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SamePriceStatus {
    Converged,
    MaxIter,
    Diverged,
    /// Converged to a candidate that decreases somewhere.
    Nonmonotone,
}

pub struct SamePriceSolution {
    pub solution: EquilibriumSolution,
    pub status: SamePriceStatus,
    pub monotone_ok: bool,
}

impl SamePriceSolution {
    pub fn converged(&self) -> bool {
        self.status == SamePriceStatus::Converged
    }
}

/// h̄ at the nodes and its left limit at zero, by the cumulative trapezoid
/// rule. h̄(0±) = h(0±).
pub fn average_book(nodes: &[f64], zero: usize, h: &[f64], left_zero: f64) -> (Vec<f64>, f64) {
    let integral = cumulative_integral(nodes, zero, h, None, Some((left_zero, 0.0)));
    let avg = (0..nodes.len())
        .map(|i| if i == zero { h[i] } else { integral[i] / nodes[i] })
        .collect();
    (avg, left_zero)
}

/// h̄ for a built order book, on the solution's nodes.
pub fn averaged_book(book: &OrderBook) -> (Vec<f64>, f64) {
    let grid = book.h.grid();
    let left = book.h.left_zero().unwrap_or(book.h.values()[grid.zero_index()]);
    average_book(grid.nodes(), grid.zero_index(), book.h.values(), left)
}

/// One application of the same-price operator on the engine's grid.
pub(crate) fn same_price_step(engine: &Engine, f: &[f64], n: usize) -> (Vec<f64>, Book) {
    let book = engine.book(f);
    let nodes = engine.grid.nodes();
    let z = engine.grid.zero_index();
    let h = &book.values;
    let (hbar, hbar_left) = average_book(nodes, z, h, book.left_zero);
    let mut d: Vec<f64> = (0..nodes.len())
        .map(|i| if i == z { 0.0 } else { (h[i] - hbar[i]) / nodes[i] })
        .collect();
    // D(0±) = h'(0±)/2, continued linearly from the first two cells
    d[z] = 2.0 * d[z + 1] - d[z + 2];
    let d_left = 2.0 * d[z - 1] - d[z - 2];

    let (lo, hi) = engine.edge_rules();
    let (cd, _) = engine.smoother.apply(&NodeCurve {
        values: &d,
        left_zero: Some(d_left),
        lo: EdgeRule::Clamp,
        hi: EdgeRule::Clamp,
    });
    let (ch, _) = engine.smoother.apply(&NodeCurve { values: &hbar, left_zero: Some(hbar_left), lo, hi });
    let n = n as f64;
    let tf = (0..nodes.len()).map(|i| nodes[i] / n * cd[i] + ch[i]).collect();
    (tf, book)
}

/// Execution price, shortfall and profit at the nodes, computed from the
/// book rather than from identities in F.
#[derive(Clone, Debug)]
pub struct DirectCurves {
    /// g(x) = E[h(x + Z)].
    pub exec_price: Vec<f64>,
    /// IS(x) = (1/x)∫_0^x g.
    pub shortfall: Vec<f64>,
    /// x·(F(x) − E[h̄(x + Z)]), the insiders' profit when V = F(x).
    pub profit: Vec<f64>,
}

pub fn direct_curves(sol: &EquilibriumSolution, book: &OrderBook) -> DirectCurves {
    let engine = &sol.engine;
    let nodes = engine.grid.nodes();
    let z = engine.grid.zero_index();
    let h = book.h.values();
    let left = book.h.left_zero().unwrap_or(h[z]);
    let (lo, hi) = engine.edge_rules();
    let (g, dg) = engine.smoother.apply(&NodeCurve { values: h, left_zero: Some(left), lo, hi });
    let integral = cumulative_integral(nodes, z, &g, Some(&dg), None);
    let (hbar, hbar_left) = average_book(nodes, z, h, left);
    let (gbar, _) = engine.smoother.apply(&NodeCurve { values: &hbar, left_zero: Some(hbar_left), lo, hi });
    let f = sol.values();
    let x = sol.nodes();
    let shortfall = (0..nodes.len()).map(|i| if i == z { g[i] } else { integral[i] / nodes[i] }).collect();
    let profit = (0..nodes.len()).map(|i| x[i] * (f[i] - gbar[i])).collect();
    DirectCurves { exec_price: g, shortfall, profit }
}

/// Solve the same-price equation and audit monotonicity of the result.
pub fn solve_sameprice(solver: &Solver) -> Result<SamePriceSolution> {
    let solution = solver.solve_same_price()?;
    let monotone_ok = solution.non_decreasing();
    let status = match solution.status {
        Status::Converged if !monotone_ok => SamePriceStatus::Nonmonotone,
        Status::Converged => SamePriceStatus::Converged,
        Status::MaxIter => SamePriceStatus::MaxIter,
        Status::Diverged => SamePriceStatus::Diverged,
    };
    Ok(SamePriceSolution { solution, status, monotone_ok })
}

/// sup|F_a − F_b| / sup|F_b| over the core nodes of two solutions on the
/// same grid.
pub fn relative_sup_distance(a: &EquilibriumSolution, b: &EquilibriumSolution) -> f64 {
    let grid = b.f.grid();
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in grid.core_range() {
        num = num.max((a.values()[i] - b.values()[i]).abs());
        den = den.max(b.values()[i].abs());
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::MarketParams;
    use crate::numerics::GridParams;
    use crate::signals::DistributionSpec;

    fn solver(family: &str, n: usize) -> Solver {
        Solver::new(DistributionSpec::new(family).build().unwrap(), MarketParams::new(n, 1.0))
            .with_grid(GridParams::default().with_tail_max(30.0))
            .tol(1e-10)
    }

    #[test]
    fn average_of_linear_book() {
        let nodes: Vec<f64> = (-100..=100).map(|k| k as f64 / 10.0).collect();
        let h: Vec<f64> = nodes.iter().map(|x| 2.0 * x + 1.0).collect();
        let (avg, left) = average_book(&nodes, 100, &h, 1.0);
        assert_eq!(left, 1.0);
        for (x, a) in nodes.iter().zip(&avg) {
            assert!((a - (x + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_insider_matches_dealer() {
        let s = solver("gaussian", 1);
        let dealer = s.solve().unwrap();
        let same = solve_sameprice(&s).unwrap();
        assert_eq!(same.status, SamePriceStatus::Converged);
        assert!(same.solution.residual() <= 10.0 * s.controls.tol);
        let dist = relative_sup_distance(&same.solution, &dealer);
        assert!(dist < 0.05, "{dist}");
    }

    #[test]
    fn symmetric_signal_gives_odd_f() {
        let sol = solve_sameprice(&solver("truncated_gaussian", 2)).unwrap();
        assert!(sol.converged());
        let v = sol.solution.values();
        let n = v.len();
        let asym = (0..n).map(|i| (v[i] + v[n - 1 - i]).abs()).fold(0.0, f64::max);
        assert!(asym < 1e-8, "{asym}");
        let book = OrderBook::build(&sol.solution).unwrap();
        let (avg, left) = averaged_book(&book);
        assert!(avg.iter().all(|a| (-1.0..=1.0).contains(a)));
        let z = book.h.grid().zero_index();
        assert!((left - book.best_bid).abs() < 1e-6 && (avg[z] - book.best_ask).abs() < 1e-6);
        // h̄ is monotone on each side, running from the best quotes to ±1
        assert!(avg[z..].windows(2).all(|w| w[1] >= w[0]));
        assert!(avg[..z].windows(2).all(|w| w[1] >= w[0]) && avg[z - 1] <= left);
    }

    #[test]
    fn direct_curves_match_identities_for_dealer() {
        // on a dealer solution the direct shortfall agrees with N∫F(xu)u^{N−1}du
        let s = solver("truncated_gaussian", 3);
        let sol = s.solve().unwrap();
        let book = OrderBook::build(&sol).unwrap();
        let c = direct_curves(&sol, &book);
        for i in sol.f.grid().core_range().step_by(37) {
            let x = sol.nodes()[i];
            assert!((c.shortfall[i] - crate::book::implementation_shortfall(&sol, x)).abs() < 1e-6, "x = {x}");
            assert!((c.exec_price[i] - crate::book::expected_exec_price(&sol, x)).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn many_insiders_raise_buy_side_impact() {
        let s = solver("gaussian", 25);
        let dealer = s.solve().unwrap();
        let same = solve_sameprice(&s).unwrap();
        assert!(same.converged());
        let z = dealer.f.grid().zero_index();
        let core = dealer.f.grid().core_range();
        for i in z + 1..=*core.end() {
            assert!(same.solution.values()[i] >= dealer.values()[i] - 1e-9, "x = {}", dealer.nodes()[i]);
        }
    }
}
