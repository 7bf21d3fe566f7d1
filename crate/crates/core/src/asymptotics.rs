//! Predicted tail laws of F and of the volume distribution, and their
//! comparison against a solved equilibrium.

use crate::book::implementation_shortfall;
use crate::equilibrium::{EquilibriumSolution, MarketParams};
use crate::error::{Error, Result};
use crate::numerics::{fit_tail_exponent, FitMode};
use crate::signals::{Side, SignalDistribution, TailRegime, TailSpec};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    PowerLaw,
    LogLaw,
    Heuristic,
    None,
}

/// Leading-order tail law on one side.
///
/// Power law: |F| ~ x^ρ (unbounded) or |F − endpoint| ~ x^ρ (bounded).
/// Log law: the same distances ~ constant·(log x)^exponent, with exponent
/// 1/n when unbounded and −1/n when bounded.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymptoticPrediction {
    pub side: Side,
    pub regime: Regime,
    pub exponent: f64,
    pub constant: f64,
    /// ζ in P(Y* > y) ~ y^{−ζ}.
    pub vol_exponent: f64,
    /// Limit of (M − IS)/(M − F), or IS/F on an unbounded side.
    pub is_ratio: f64,
    pub endpoint: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl AsymptoticPrediction {
    fn none(side: Side, endpoint: f64, note: impl Into<String>) -> Self {
        Self {
            side,
            regime: Regime::None,
            exponent: f64::NAN,
            constant: f64::NAN,
            vol_exponent: f64::NAN,
            is_ratio: f64::NAN,
            endpoint,
            note: Some(note.into()),
        }
    }
}

/// ρ = (s − 1)/(1 − s/N).
pub fn rho(psi_slope: f64, n: f64) -> f64 {
    (psi_slope - 1.0) / (1.0 - psi_slope / n)
}

/// ζ = s/(1 − s/N).
pub fn zeta(psi_slope: f64, n: f64) -> f64 {
    psi_slope / (1.0 - psi_slope / n)
}

/// (N/(N−1)·n/k)^{1/n}, the log-law constant on an unbounded side; its
/// reciprocal is the constant on a bounded side.
pub fn log_constant(n_insiders: f64, n: u32, k: f64) -> f64 {
    (n_insiders / (n_insiders - 1.0) * n as f64 / k).powf(1.0 / n as f64)
}

pub fn predict(dist: &SignalDistribution, params: &MarketParams) -> (AsymptoticPrediction, AsymptoticPrediction) {
    let n = params.n_insiders;
    let is_discrete = dist.is_discrete();
    let side = |s: Side| {
        if is_discrete {
            AsymptoticPrediction::none(s, dist.tail_spec(s).endpoint, "F saturates at the extreme atoms")
        } else {
            predict_side(&dist.tail_spec(s), n)
        }
    };
    (side(Side::Upper), side(Side::Lower))
}

/// Prediction from the boundary behaviour of Ψ on one side.
pub fn predict_side(spec: &TailSpec, n_insiders: usize) -> AsymptoticPrediction {
    let n = n_insiders as f64;
    let s = spec.psi_slope;
    let bounded = spec.bounded();
    let base = AsymptoticPrediction {
        side: spec.side,
        regime: Regime::None,
        exponent: f64::NAN,
        constant: f64::NAN,
        vol_exponent: f64::NAN,
        is_ratio: f64::NAN,
        endpoint: spec.endpoint,
        note: None,
    };
    if !bounded && s > n {
        return AsymptoticPrediction {
            note: Some(format!("N = {n_insiders} is below the tail slope {s:.4}; no equilibrium expected")),
            ..base
        };
    }
    if n_insiders == 1 {
        let regime = if spec.regime == TailRegime::PowerLaw && s != 1.0 && !bounded {
            // the formula still applies when unbounded: ρ = (s − 1)/(1 − s)
            Regime::PowerLaw
        } else {
            Regime::Heuristic
        };
        let (exponent, vol, ratio) = if regime == Regime::PowerLaw {
            let r = rho(s, n);
            (r, zeta(s, n), n / (n + r))
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        return AsymptoticPrediction {
            regime,
            exponent,
            vol_exponent: vol,
            is_ratio: ratio,
            note: Some("tail theorems assume N > 1".into()),
            ..base
        };
    }
    match spec.regime {
        TailRegime::PowerLaw => {
            let r = rho(s, n);
            AsymptoticPrediction {
                regime: Regime::PowerLaw,
                exponent: r,
                constant: f64::NAN,
                vol_exponent: zeta(s, n),
                is_ratio: n / (n + r),
                ..base
            }
        }
        TailRegime::LogLaw => {
            let c = log_constant(n, spec.flatness_order, spec.flatness_const);
            let inv = 1.0 / spec.flatness_order as f64;
            AsymptoticPrediction {
                regime: Regime::LogLaw,
                exponent: if bounded { -inv } else { inv },
                constant: if bounded { 1.0 / c } else { c },
                vol_exponent: zeta(1.0, n),
                is_ratio: 1.0,
                ..base
            }
        }
        TailRegime::Unsupported => AsymptoticPrediction {
            regime: Regime::Heuristic,
            exponent: 0.5,
            vol_exponent: if s.is_finite() { zeta(s, n) } else { f64::NAN },
            note: Some(if bounded {
                "no theorem applies; fitting |F − endpoint| = exp(−k·√log x)".into()
            } else {
                "no theorem applies; fitting |F| = c·√log x".into()
            }),
            ..base
        },
    }
}

/// Comparison of a fitted tail law with its prediction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub side: Side,
    pub regime: Regime,
    /// Predicted exponent (power law) or constant (log law).
    pub predicted: f64,
    pub fitted: f64,
    pub rel_error: f64,
    pub window: [f64; 2],
    /// Log laws: the constant implied by the slope of the distance^{±n}
    /// against log x, which is less sensitive to lower-order terms.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted_slope: Option<f64>,
    pub points: usize,
}

/// Abscissae |x| and distances |F| or |F − endpoint| on one side, outward.
fn tail_points(sol: &EquilibriumSolution, side: Side, endpoint: f64) -> (Vec<f64>, Vec<f64>) {
    let nodes = sol.nodes();
    let vals = sol.values();
    let z = sol.f.grid().zero_index();
    let idx: Vec<usize> = match side {
        Side::Upper => (z + 1..nodes.len()).collect(),
        Side::Lower => (0..z).rev().collect(),
    };
    let sign = if side == Side::Upper { 1.0 } else { -1.0 };
    idx.into_iter()
        .map(|i| {
            let d = if endpoint.is_finite() { sign * (endpoint - vals[i]) } else { sign * vals[i] };
            (sign * nodes[i], d)
        })
        .unzip()
}

/// Indices of the top `decades` decades of xs, failing with fewer than 40
/// points or when the window leaves x ≤ 1.
fn window(xs: &[f64], decades: f64) -> Result<Vec<usize>> {
    let top = xs.iter().cloned().fold(0.0, f64::max);
    let lo = top / 10f64.powf(decades);
    let idx: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] >= lo).collect();
    if idx.len() < 40 {
        return Err(Error::InvalidParameter(format!("only {} nodes in the top {decades} decades", idx.len())));
    }
    if lo <= 1.0 {
        return Err(Error::InvalidParameter(format!("window [{lo}, {top}] reaches below x = 1")));
    }
    Ok(idx)
}

/// Weighted least squares through the origin-free line v = a + b·u, with
/// the last five points down-weighted.
fn line_fit(u: &[f64], v: &[f64]) -> (f64, f64) {
    let n = u.len();
    let w: Vec<f64> = (0..n).map(|k| if k + 5 >= n { 0.1 } else { 1.0 }).collect();
    let sw: f64 = w.iter().sum();
    let mu = u.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mv = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut suu, mut suv) = (0.0, 0.0);
    for k in 0..n {
        suu += w[k] * (u[k] - mu).powi(2);
        suv += w[k] * (u[k] - mu) * (v[k] - mv);
    }
    let b = suv / suu;
    (mv - b * mu, b)
}

/// Fit the predicted law on the top `decades` decades of one side.
pub fn validate(sol: &EquilibriumSolution, pred: &AsymptoticPrediction, decades: f64) -> Result<ValidationReport> {
    let (xs, ds) = tail_points(sol, pred.side, pred.endpoint);
    let idx = window(&xs, decades)?;
    let x: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
    let d: Vec<f64> = idx.iter().map(|&i| ds[i]).collect();
    if d.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Unsupported("tail distance is not positive on the window".into()));
    }
    let win = [x[0], x[x.len() - 1]];
    let rel = |fitted: f64, predicted: f64| ((fitted - predicted) / predicted).abs();
    let report = |predicted: f64, fitted: f64, fitted_slope: Option<f64>| ValidationReport {
        side: pred.side,
        regime: pred.regime,
        predicted,
        fitted,
        rel_error: rel(fitted, predicted),
        window: win,
        fitted_slope,
        points: x.len(),
    };
    match pred.regime {
        Regime::PowerLaw => {
            let fit = fit_tail_exponent(&x, &d, decades + 1e-9, FitMode::LogLog)?;
            Ok(report(pred.exponent, fit.slope, None))
        }
        Regime::LogLaw => {
            let e = pred.exponent;
            let ratio: Vec<f64> = x.iter().zip(&d).map(|(x, d)| d / x.ln().powf(e)).collect();
            let direct = ratio.iter().sum::<f64>() / ratio.len() as f64;
            // d^{1/e} ≈ C^{1/e}·log x
            let p: Vec<f64> = d.iter().map(|v| v.powf(1.0 / e)).collect();
            let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
            let (_, slope) = line_fit(&lx, &p);
            let from_slope = if slope > 0.0 { slope.powf(e) } else { f64::NAN };
            Ok(report(pred.constant, direct, Some(from_slope)))
        }
        Regime::Heuristic => {
            let sq: Vec<f64> = x.iter().map(|v| v.ln().sqrt()).collect();
            let fitted = if pred.endpoint.is_finite() {
                // −log d = a + k·√log x
                let v: Vec<f64> = d.iter().map(|v| -v.ln()).collect();
                line_fit(&sq, &v).1
            } else {
                let (_, c) = line_fit(&sq, &d);
                c
            };
            Ok(ValidationReport {
                side: pred.side,
                regime: pred.regime,
                predicted: f64::NAN,
                fitted,
                rel_error: f64::NAN,
                window: win,
                fitted_slope: None,
                points: x.len(),
            })
        }
        Regime::None => Err(Error::Unsupported(format!(
            "no tail law on the {:?} side{}",
            pred.side,
            pred.note.as_deref().map(|n| format!(": {n}")).unwrap_or_default()
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsRatioReport {
    pub side: Side,
    pub predicted: f64,
    pub measured: f64,
    pub rel_error: f64,
    pub window: [f64; 2],
}

/// Mean of (M − IS)/(M − F) (IS/F on an unbounded side) over the top decade
/// of one side, leaving out the last five nodes.
pub fn is_ratio_check(sol: &EquilibriumSolution, pred: &AsymptoticPrediction) -> Result<IsRatioReport> {
    let (xs, _) = tail_points(sol, pred.side, pred.endpoint);
    let idx = window(&xs, 1.0)?;
    let keep = &idx[..idx.len() - 5];
    let sign = if pred.side == Side::Upper { 1.0 } else { -1.0 };
    let e = pred.endpoint;
    let mut acc = 0.0;
    for &i in keep {
        let x = sign * xs[i];
        let f = sol.eval(x);
        let is = implementation_shortfall(sol, x);
        acc += if e.is_finite() { (e - is) / (e - f) } else { is / f };
    }
    let measured = acc / keep.len() as f64;
    Ok(IsRatioReport {
        side: pred.side,
        predicted: pred.is_ratio,
        measured,
        rel_error: ((measured - pred.is_ratio) / pred.is_ratio).abs(),
        window: [xs[keep[0]], xs[keep[keep.len() - 1]]],
    })
}

/// Tail behaviour of the families in the power-law and log-law tables,
/// with the asymptotics as printed there.
#[derive(Clone, Copy, Debug)]
pub struct CatalogRow {
    pub name: &'static str,
    /// Parameter names, drawn from the box `ranges`.
    pub params: &'static [&'static str],
    pub ranges: &'static [(f64, f64)],
    /// Tail spec of the upper side for the given parameters.
    pub tail: fn(&[f64]) -> TailSpec,
    /// Printed exponent (power-law rows) or constant (log-law rows) for N.
    pub printed: fn(&[f64], f64) -> f64,
}

fn fat(p: &[f64]) -> TailSpec {
    let alpha = p[0];
    TailSpec::power(Side::Upper, alpha / (alpha - 1.0), f64::INFINITY)
}

fn fat_printed(p: &[f64], n: f64) -> f64 {
    1.0 / ((n - 1.0) / n * p[0] - 1.0)
}

pub fn catalog() -> Vec<CatalogRow> {
    const ALPHA: &[(f64, f64)] = &[(1.5, 8.0)];
    let fat_row = |name| CatalogRow { name, params: &["alpha"], ranges: ALPHA, tail: fat, printed: fat_printed };
    vec![
        fat_row("beta_prime"),
        fat_row("frechet"),
        fat_row("lomax"),
        fat_row("pareto"),
        fat_row("student"),
        CatalogRow {
            name: "exponential",
            params: &["lambda"],
            ranges: &[(0.2, 5.0)],
            tail: |p| TailSpec::log(Side::Upper, 1, p[0], f64::INFINITY),
            printed: |p, n| n / (p[0] * (n - 1.0)),
        },
        CatalogRow {
            // the Σ column read as the variance
            name: "gaussian",
            params: &["variance"],
            ranges: &[(0.001, 4.0)],
            tail: |p| TailSpec::log(Side::Upper, 2, 1.0 / p[0], f64::INFINITY),
            printed: |p, n| (2.0 * p[0] * n / (n - 1.0)).sqrt(),
        },
        CatalogRow {
            name: "inverse_gaussian",
            params: &["mu", "lambda"],
            ranges: &[(0.2, 5.0), (0.2, 5.0)],
            // exponential tail with rate λ/(2μ²)
            tail: |p| TailSpec::log(Side::Upper, 1, p[1] / (2.0 * p[0] * p[0]), f64::INFINITY),
            printed: |p, n| 2.0 * n * p[0] * p[0] / (p[1] * (n - 1.0)),
        },
        CatalogRow {
            name: "weibull",
            params: &["lambda", "p"],
            ranges: &[(0.2, 5.0), (1.0, 4.0)],
            // Ψ(x) − x ~ x^{1−p}/(p λ^p)
            tail: |q| {
                // TailSpec carries an integer order; the catalog draws integer p
                let order = q[1].round();
                TailSpec::log(Side::Upper, order as u32, order * q[0].powf(order), f64::INFINITY)
            },
            printed: |q, n| {
                let p = q[1].round();
                (n / (q[0].powf(p) * (n - 1.0))).powf(1.0 / p)
            },
        },
    ]
}

/// Prediction for a catalog row: ρ for power-law rows, the constant for
/// log-law rows.
pub fn catalog_prediction(row: &CatalogRow, params: &[f64], n_insiders: usize) -> f64 {
    let p = predict_side(&(row.tail)(params), n_insiders);
    match p.regime {
        Regime::PowerLaw => p.exponent,
        _ => p.constant,
    }
}
