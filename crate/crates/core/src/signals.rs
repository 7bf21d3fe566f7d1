//! Signal distributions for the liquidation value V.
//!
//! Every law exposes the tail probabilities Π±, the partial means Φ± and the
//! conditional tail means Ψ± = Φ±/Π±, together with per-side tail metadata.

use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, integrate, mills_ratio, std_mass, std_pdf, std_sf, QuadRule};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRegime {
    PowerLaw,
    LogLaw,
    Unsupported,
}

/// Boundary behaviour of Ψ on one side of the support.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    pub side: Side,
    /// Slope of Ψ at the endpoint (bounded side) or at infinity.
    pub psi_slope: f64,
    pub flatness_order: u32,
    pub flatness_const: f64,
    pub regime: TailRegime,
    /// Support endpoint on this side (±∞ when unbounded).
    pub endpoint: f64,
}

impl TailSpec {
    pub fn bounded(&self) -> bool {
        self.endpoint.is_finite()
    }

    pub fn power(side: Side, psi_slope: f64, endpoint: f64) -> Self {
        Self {
            side,
            psi_slope,
            flatness_order: 0,
            flatness_const: 1.0 / (1.0 - psi_slope).abs(),
            regime: TailRegime::PowerLaw,
            endpoint,
        }
    }

    pub fn log(side: Side, n: u32, k: f64, endpoint: f64) -> Self {
        Self {
            side,
            psi_slope: 1.0,
            flatness_order: n,
            flatness_const: k,
            regime: TailRegime::LogLaw,
            endpoint,
        }
    }

    pub fn unsupported(side: Side, psi_slope: f64, endpoint: f64) -> Self {
        Self {
            side,
            psi_slope,
            flatness_order: 0,
            flatness_const: f64::NAN,
            regime: TailRegime::Unsupported,
            endpoint,
        }
    }
}

/// Distribution entry of a run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub family: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub shift: f64,
    #[serde(default = "unit")]
    pub scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl DistributionSpec {
    pub fn new(family: &str) -> Self {
        Self {
            family: family.to_string(),
            params: Map::new(),
            shift: 0.0,
            scale: 1.0,
        }
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), Value::from(value));
        self
    }

    pub fn build(&self) -> Result<SignalDistribution> {
        make_distribution(self)
    }
}

#[derive(Clone, Debug)]
enum Family {
    Discrete { atoms: Vec<(f64, f64)> },
    Gaussian { sd: f64 },
    TruncatedGaussian { sd: f64, bound: f64, norm: f64 },
    LogNormal { s: f64 },
    LogitNormal { s: f64 },
    Student { alpha: f64, log_c: f64 },
    Exponential { lambda: f64 },
    Pareto { alpha: f64, xm: f64 },
    Bump { sigma: f64, norm: f64 },
}

/// Law of V after an affine map v ↦ scale·v + shift of a base family.
#[derive(Clone, Debug)]
pub struct SignalDistribution {
    name: String,
    family: Family,
    scale: f64,
    shift: f64,
}

fn get(params: &Map<String, Value>, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::InvalidParameter(format!("`{key}` must be a number"))),
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("`{name}` must be positive and finite, got {v}")))
    }
}

/// Build a registered family from its configuration entry.
pub fn make_distribution(spec: &DistributionSpec) -> Result<SignalDistribution> {
    let p = &spec.params;
    let family = match spec.family.as_str() {
        "bernoulli" => Family::Discrete { atoms: vec![(-1.0, 0.5), (1.0, 0.5)] },
        "trinomial" => Family::Discrete {
            atoms: vec![(-1.0, 1.0 / 3.0), (0.0, 1.0 / 3.0), (1.0, 1.0 / 3.0)],
        },
        "discrete" => Family::Discrete { atoms: parse_atoms(p)? },
        "gaussian" => Family::Gaussian { sd: positive("variance", get(p, "variance", 1.0)?)?.sqrt() },
        "truncated_gaussian" => {
            let sd = positive("variance", get(p, "variance", 1.0)?)?.sqrt();
            let bound = positive("bound", get(p, "bound", 1.0)?)?;
            let norm = std_mass(-bound / sd, bound / sd);
            Family::TruncatedGaussian { sd, bound, norm }
        }
        "lognormal" => Family::LogNormal { s: positive("sigma2", get(p, "sigma2", 0.01)?)?.sqrt() },
        "logit_normal" => Family::LogitNormal { s: positive("sigma2", get(p, "sigma2", 1.0)?)?.sqrt() },
        "student" => {
            let alpha = positive("alpha", get(p, "alpha", 3.0)?)?;
            if alpha <= 1.0 {
                return Err(Error::InvalidParameter(format!("student alpha = {alpha} gives an infinite mean")));
            }
            let log_c = ln_gamma(0.5 * (alpha + 1.0)) - ln_gamma(0.5 * alpha) - 0.5 * (alpha * PI).ln();
            Family::Student { alpha, log_c }
        }
        "exponential" => Family::Exponential { lambda: positive("lambda", get(p, "lambda", 1.0)?)? },
        "pareto" => {
            let alpha = positive("alpha", get(p, "alpha", 3.0)?)?;
            if alpha <= 1.0 {
                return Err(Error::InvalidParameter(format!("pareto alpha = {alpha} gives an infinite mean")));
            }
            Family::Pareto { alpha, xm: positive("xm", get(p, "xm", 1.0)?)? }
        }
        "bump" => {
            let sigma = positive("sigma", get(p, "sigma", 1.0)?)?;
            let norm = 2.0 * (-sigma).exp() * bump_integrals(sigma, 0.0).0;
            Family::Bump { sigma, norm }
        }
        other => return Err(Error::UnknownFamily(other.to_string())),
    };
    let scale = spec.scale;
    if !(scale > 0.0 && scale.is_finite()) || !spec.shift.is_finite() {
        return Err(Error::InvalidParameter("scale must be positive and shift finite".into()));
    }
    let name = spec.family.clone();
    let student_scale = match family {
        Family::Student { .. } => positive("scale", get(p, "scale", 1.0)?)?,
        _ => 1.0,
    };
    Ok(SignalDistribution {
        name,
        family,
        scale: scale * student_scale,
        shift: spec.shift,
    })
}

fn parse_atoms(p: &Map<String, Value>) -> Result<Vec<(f64, f64)>> {
    let bad = || Error::InvalidParameter("`atoms` must be a list of [location, mass] pairs".into());
    let list = p.get("atoms").and_then(|v| v.as_array()).ok_or_else(bad)?;
    let mut atoms = Vec::new();
    for item in list {
        let pair = item.as_array().ok_or_else(bad)?;
        if pair.len() != 2 {
            return Err(bad());
        }
        let loc = pair[0].as_f64().ok_or_else(bad)?;
        let mass = pair[1].as_f64().ok_or_else(bad)?;
        if !(mass > 0.0) || !loc.is_finite() {
            return Err(bad());
        }
        atoms.push((loc, mass));
    }
    if atoms.len() < 2 {
        return Err(Error::InvalidParameter("a discrete law needs at least two atoms".into()));
    }
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    for a in atoms.iter_mut() {
        a.1 /= total;
    }
    Ok(atoms)
}

fn gl16() -> &'static QuadRule {
    static RULE: OnceLock<QuadRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Standard normal mass and first moment on [t0, t1].
fn normal_segment(t0: f64, t1: f64) -> (f64, f64) {
    if t1 <= t0 {
        return (0.0, 0.0);
    }
    if t1 - t0 < 0.5 {
        let r = gl16();
        let c = 0.5 * (t0 + t1);
        let h = 0.5 * (t1 - t0);
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        for (u, w) in r.nodes.iter().zip(&r.weights) {
            let t = c + h * u;
            let f = w * std_pdf(t);
            m0 += f;
            m1 += f * t;
        }
        (m0 * h, m1 * h)
    } else {
        (std_mass(t0, t1), std_pdf(t0) - std_pdf(t1))
    }
}

/// For the bump density exp(−σ/(1−t²)) on (−1, 1): with δ = 1 − y and
/// t = y + δr, returns (∫_0^1 w, ∫_0^1 r w) where w = p(t)/p(y).
fn bump_integrals(sigma: f64, y: f64) -> (f64, f64) {
    let w = |r: f64| {
        if r >= 1.0 {
            return 0.0;
        }
        let t = y + (1.0 - y) * r;
        (-sigma * r * (t + y) / ((1.0 - r) * (1.0 + t) * (1.0 - y * y))).exp()
    };
    let i0 = integrate(w, 0.0, 1.0, 1e-13, 0.0);
    let i1 = integrate(|r| r * w(r), 0.0, 1.0, 1e-13, 0.0);
    (i0, i1)
}

/// ∫_a^∞ 2φ(u)/(1 + e^{su}) du, the gap between Π+ and Φ+ for the
/// logit-normal generator.
fn logit_gap(s: f64, a: f64) -> f64 {
    let logistic2 = |x: f64| {
        if x > 0.0 {
            let e = (-x).exp();
            2.0 * e / (1.0 + e)
        } else {
            2.0 / (1.0 + x.exp())
        }
    };
    if a > 1.0 {
        let rmax = -a + (a * a + 120.0).sqrt();
        let inner = integrate(
            |r| (-a * r - 0.5 * r * r).exp() * logistic2(s * (a + r)),
            0.0,
            rmax,
            1e-13,
            0.0,
        );
        std_pdf(a) * inner
    } else {
        integrate(|u| std_pdf(u) * logistic2(s * u), a, 40.0, 1e-13, 1e-300)
    }
}

impl Family {
    fn symmetric(&self) -> bool {
        matches!(
            self,
            Family::Gaussian { .. }
                | Family::TruncatedGaussian { .. }
                | Family::LogitNormal { .. }
                | Family::Student { .. }
                | Family::Bump { .. }
        )
    }

    fn support(&self) -> (f64, f64) {
        match self {
            Family::Discrete { atoms } => (atoms[0].0, atoms[atoms.len() - 1].0),
            Family::TruncatedGaussian { bound, .. } => (-bound, *bound),
            Family::LogitNormal { .. } | Family::Bump { .. } => (-1.0, 1.0),
            Family::LogNormal { .. } => (-1.0, f64::INFINITY),
            Family::Exponential { lambda } => (-1.0 / lambda, f64::INFINITY),
            Family::Pareto { alpha, xm } => (xm - alpha * xm / (alpha - 1.0), f64::INFINITY),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn mean(&self) -> f64 {
        match self {
            Family::Discrete { atoms } => atoms.iter().map(|(a, p)| a * p).sum(),
            _ => 0.0,
        }
    }

    /// (Π+(y), Φ+(y)) for y ≥ 0 of a symmetric mean-zero family.
    fn upper_half(&self, y: f64) -> (f64, f64) {
        match *self {
            Family::Gaussian { sd } => (std_sf(y / sd), sd * std_pdf(y / sd)),
            Family::TruncatedGaussian { sd, bound, norm } => {
                if y >= bound {
                    return (0.0, 0.0);
                }
                let (m0, m1) = normal_segment(y / sd, bound / sd);
                (m0 / norm, sd * m1 / norm)
            }
            Family::Student { alpha, log_c } => {
                let pi = 0.5 * beta_reg(0.5 * alpha, 0.5, alpha / (alpha + y * y));
                let dens = (log_c - 0.5 * (alpha + 1.0) * (y * y / alpha).ln_1p()).exp();
                (pi, (alpha + y * y) / (alpha - 1.0) * dens)
            }
            Family::LogitNormal { s } => {
                if y >= 1.0 {
                    return (0.0, 0.0);
                }
                let a = ((1.0 + y) / (1.0 - y)).ln() / s;
                let pi = std_sf(a);
                (pi, pi - logit_gap(s, a))
            }
            Family::Bump { sigma, norm } => {
                if y >= 1.0 {
                    return (0.0, 0.0);
                }
                let d = 1.0 - y;
                let (i0, i1) = bump_integrals(sigma, y);
                let py = (-sigma / (1.0 - y * y)).exp();
                (py * d * i0 / norm, py * d * (y * i0 + d * i1) / norm)
            }
            _ => unreachable!("not a symmetric family"),
        }
    }

    /// (Π+, Φ+, Π−, Φ−) at y for the base law.
    fn functionals(&self, y: f64) -> (f64, f64, f64, f64) {
        if self.symmetric() {
            return if y >= 0.0 {
                let (pi, phi) = self.upper_half(y);
                (pi, phi, 1.0 - pi, -phi)
            } else {
                let (pi, phi) = self.upper_half(-y);
                (1.0 - pi, phi, pi, -phi)
            };
        }
        match *self {
            Family::Discrete { ref atoms } => {
                let (mut pp, mut fp, mut pm, mut fm) = (0.0, 0.0, 0.0, 0.0);
                for &(a, p) in atoms {
                    if a > y {
                        pp += p;
                        fp += p * a;
                    } else {
                        pm += p;
                        fm += p * a;
                    }
                }
                (pp, fp, pm, fm)
            }
            Family::LogNormal { s } => {
                if y <= -1.0 {
                    return (1.0, 0.0, 0.0, 0.0);
                }
                let w = y.ln_1p();
                let a = (w + 0.5 * s * s) / s;
                let b = a - s;
                let pp = std_sf(a);
                let pm = std_sf(-a);
                (pp, std_sf(b) - pp, pm, std_sf(-b) - pm)
            }
            Family::Exponential { lambda } => {
                let u = y + 1.0 / lambda;
                if u <= 0.0 {
                    return (1.0, 0.0, 0.0, 0.0);
                }
                let e = (-lambda * u).exp();
                (e, u * e, -(-lambda * u).exp_m1(), -u * e)
            }
            Family::Pareto { alpha, xm } => {
                let mu = alpha * xm / (alpha - 1.0);
                let p = y + mu;
                if p <= xm {
                    return (1.0, 0.0, 0.0, 0.0);
                }
                let lr = alpha * (xm / p).ln();
                let pp = lr.exp();
                let fp = pp * (p * alpha / (alpha - 1.0) - mu);
                (pp, fp, -lr.exp_m1(), -fp)
            }
            _ => unreachable!(),
        }
    }

    /// Ψ± of the base law on an unbounded side, far enough out that Π±
    /// underflows.
    fn psi_far(&self, upper: bool, y: f64) -> Option<f64> {
        let sign = if upper { 1.0 } else { -1.0 };
        match *self {
            Family::Gaussian { sd } => Some(sign * sd / mills_ratio(sign * y / sd)),
            Family::Student { alpha, .. } => Some(y * alpha / (alpha - 1.0)),
            Family::LogNormal { s } if upper => {
                // (P(W > w − s²)/P(W > w))·e^{…} − 1 through Mills ratios
                let a = (y.ln_1p() + 0.5 * s * s) / s;
                let b = a - s;
                Some((a * s - 0.5 * s * s).exp() * mills_ratio(b) / mills_ratio(a) - 1.0)
            }
            Family::Exponential { lambda } if upper => Some(y + 1.0 / lambda),
            Family::Pareto { alpha, xm } if upper => {
                let mu = alpha * xm / (alpha - 1.0);
                Some((y + mu) * alpha / (alpha - 1.0) - mu)
            }
            _ => None,
        }
    }

    fn tail_spec(&self, side: Side, endpoint: f64, scale: f64) -> TailSpec {
        let upper = side == Side::Upper;
        match *self {
            Family::Discrete { .. } => TailSpec::unsupported(side, f64::NAN, endpoint),
            Family::Gaussian { sd } => TailSpec::log(side, 2, 1.0 / (sd * sd * scale * scale), endpoint),
            Family::TruncatedGaussian { .. } => TailSpec::power(side, 0.5, endpoint),
            Family::LogNormal { .. } | Family::LogitNormal { .. } => TailSpec::unsupported(side, 1.0, endpoint),
            Family::Student { alpha, .. } => TailSpec::power(side, alpha / (alpha - 1.0), endpoint),
            Family::Exponential { lambda } => {
                if upper {
                    TailSpec::log(side, 1, lambda / scale, endpoint)
                } else {
                    TailSpec::power(side, 0.5, endpoint)
                }
            }
            Family::Pareto { alpha, .. } => {
                if upper {
                    TailSpec::power(side, alpha / (alpha - 1.0), endpoint)
                } else {
                    TailSpec::power(side, 0.5, endpoint)
                }
            }
            Family::Bump { sigma, .. } => TailSpec::log(side, 1, 0.5 * sigma * scale, endpoint),
        }
    }
}

impl SignalDistribution {
    pub fn name(&self) -> &str {
        &self.name
    }

    fn to_base(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }

    fn functionals(&self, y: f64) -> (f64, f64, f64, f64) {
        let (pp, fp, pm, fm) = self.family.functionals(self.to_base(y));
        (pp, self.scale * fp + self.shift * pp, pm, self.scale * fm + self.shift * pm)
    }

    /// P(V > y).
    pub fn pi_plus(&self, y: f64) -> f64 {
        self.functionals(y).0
    }

    /// E[V·1{V > y}].
    pub fn phi_plus(&self, y: f64) -> f64 {
        self.functionals(y).1
    }

    /// P(V ≤ y).
    pub fn pi_minus(&self, y: f64) -> f64 {
        self.functionals(y).2
    }

    /// E[V·1{V ≤ y}].
    pub fn phi_minus(&self, y: f64) -> f64 {
        self.functionals(y).3
    }

    /// (Π+, Φ+, Π−, Φ−) in one evaluation.
    pub fn tail_functionals(&self, y: f64) -> (f64, f64, f64, f64) {
        self.functionals(y)
    }

    pub fn support_lo(&self) -> f64 {
        self.family.support().0 * self.scale + self.shift
    }

    pub fn support_hi(&self) -> f64 {
        self.family.support().1 * self.scale + self.shift
    }

    pub fn mean(&self) -> f64 {
        self.family.mean() * self.scale + self.shift
    }

    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match &self.family {
            Family::Discrete { atoms } => Some(
                atoms
                    .iter()
                    .map(|&(a, p)| (a * self.scale + self.shift, p))
                    .collect(),
            ),
            _ => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.family, Family::Discrete { .. })
    }

    pub fn is_symmetric(&self) -> bool {
        self.shift == 0.0
            && match &self.family {
                Family::Discrete { atoms } => {
                    let n = atoms.len();
                    (0..n).all(|i| {
                        (atoms[i].0 + atoms[n - 1 - i].0).abs() < 1e-15
                            && (atoms[i].1 - atoms[n - 1 - i].1).abs() < 1e-15
                    })
                }
                f => f.symmetric(),
            }
    }

    /// Ψ±(y) = Φ±(y)/Π±(y) clamped to the support; the boundary value when
    /// the tail on that side is empty.
    pub fn psi(&self, side: Side, y: f64) -> f64 {
        let (m, big_m) = (self.support_lo(), self.support_hi());
        match side {
            Side::Upper => {
                if let Family::Bump { sigma, .. } = self.family {
                    let u = self.to_base(y);
                    if u >= 1.0 {
                        return big_m;
                    }
                    if u >= 0.0 {
                        let (i0, i1) = bump_integrals(sigma, u);
                        return self.scale * (u + (1.0 - u) * i1 / i0) + self.shift;
                    }
                }
                let (pp, fp, _, _) = self.functionals(y);
                if pp > 1e-280 {
                    (fp / pp).clamp(m.max(y), big_m)
                } else if let Some(v) = self.far(true, y) {
                    v.clamp(m.max(y), big_m)
                } else {
                    big_m
                }
            }
            Side::Lower => {
                if let Family::Bump { sigma, .. } = self.family {
                    let u = self.to_base(y);
                    if u <= -1.0 {
                        return m;
                    }
                    if u <= 0.0 {
                        let (i0, i1) = bump_integrals(sigma, -u);
                        return -self.scale * (-u + (1.0 + u) * i1 / i0) + self.shift;
                    }
                }
                let (_, _, pm, fm) = self.functionals(y);
                if pm > 1e-280 {
                    (fm / pm).clamp(m, big_m.min(y))
                } else if let Some(v) = self.far(false, y) {
                    v.clamp(m, big_m.min(y))
                } else {
                    m
                }
            }
        }
    }

    fn far(&self, upper: bool, y: f64) -> Option<f64> {
        let unbounded = if upper { self.support_hi().is_infinite() } else { self.support_lo().is_infinite() };
        if !unbounded {
            return None;
        }
        self.family.psi_far(upper, self.to_base(y)).map(|v| self.scale * v + self.shift)
    }

    /// Smallest y with P(V > y) ≤ q (upper tail quantile).
    pub fn upper_quantile(&self, q: f64) -> f64 {
        self.solve_monotone(|y| self.pi_plus(y) - q)
    }

    /// Smallest y with P(V ≤ y) ≥ q (lower tail quantile).
    pub fn lower_quantile(&self, q: f64) -> f64 {
        self.solve_monotone(|y| q - self.pi_minus(y))
    }

    /// Root of a non-increasing function g by bracketing and bisection.
    fn solve_monotone<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let (m, big_m) = (self.support_lo(), self.support_hi());
        let spread = self.scale.max(1e-300);
        let mut lo = if m.is_finite() { m } else { self.mean() - spread };
        let mut hi = if big_m.is_finite() { big_m } else { self.mean() + spread };
        let mut width = spread;
        while !m.is_finite() && g(lo) < 0.0 {
            width *= 2.0;
            lo = self.mean() - width;
            if width > 1e300 {
                break;
            }
        }
        width = spread;
        while !big_m.is_finite() && g(hi) > 0.0 {
            width *= 2.0;
            hi = self.mean() + width;
            if width > 1e300 {
                break;
            }
        }
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Standard deviation of V by quadrature over the quantile function.
    pub fn std_dev(&self) -> f64 {
        if let Some(atoms) = self.atoms() {
            let mu = self.mean();
            return atoms.iter().map(|(a, p)| p * (a - mu).powi(2)).sum::<f64>().sqrt();
        }
        // E[(V−μ)²] = 2∫_μ^∞ (y−μ)Π+(y)dy + 2∫_{-∞}^μ (μ−y)Π−(y)dy
        let mu = self.mean();
        let hi = self.upper_quantile(1e-16).min(self.support_hi());
        let lo = self.lower_quantile(1e-16).max(self.support_lo());
        let up = integrate(|y| (y - mu) * self.pi_plus(y), mu, hi, 1e-12, 0.0);
        let dn = integrate(|y| (mu - y) * self.pi_minus(y), lo, mu, 1e-12, 0.0);
        (2.0 * (up + dn)).sqrt()
    }

    /// Registered tail metadata for one side.
    pub fn tail_spec(&self, side: Side) -> TailSpec {
        let endpoint = match side {
            Side::Upper => self.support_hi(),
            Side::Lower => self.support_lo(),
        };
        self.family.tail_spec(side, endpoint, self.scale)
    }
}

/// Estimate of Ψ's slope at the endpoint (bounded side) or at infinity by
/// Richardson extrapolation of the difference quotient. Returns None when the
/// extrapolated sequence does not settle.
pub fn estimate_psi_slope(dist: &SignalDistribution, side: Side) -> Option<f64> {
    let sign = if side == Side::Upper { 1.0 } else { -1.0 };
    let end = if side == Side::Upper { dist.support_hi() } else { dist.support_lo() };
    let mut est = Vec::new();
    if end.is_finite() {
        let width = dist.support_hi().min(dist.mean() + 10.0 * dist.std_dev())
            - dist.support_lo().max(dist.mean() - 10.0 * dist.std_dev());
        let mut d = 0.05 * width;
        for _ in 0..6 {
            let x = end - sign * d;
            est.push((end - dist.psi(side, x)) / (end - x));
            d *= 0.5;
        }
    } else {
        // far enough out for the leading term, near enough that light tails do not underflow
        let q = if side == Side::Upper { dist.upper_quantile(1e-12) } else { dist.lower_quantile(1e-12) };
        let start = (100.0 * dist.std_dev().max(dist.scale)).min((q - dist.mean()).abs());
        let mut x = dist.mean() + sign * start;
        for _ in 0..6 {
            est.push(dist.psi(side, x) / x);
            x = dist.mean() + (x - dist.mean()) * 1.5;
        }
    }
    // error of order 1/x, with x growing by 1.5 (or 1/d, d halving) per step
    let ratio = if end.is_finite() { 2.0 } else { 1.5 };
    let r: Vec<f64> = est.windows(2).map(|w| (ratio * w[1] - w[0]) / (ratio - 1.0)).collect();
    let k = r.len();
    let spread = (r[k - 1] - r[k - 2]).abs();
    if r[k - 1].is_finite() && spread < 1e-3 * r[k - 1].abs().max(1.0) {
        Some(r[k - 1])
    } else {
        None
    }
}
