//! The energy `E(F) = P(F) + gamma NL_alpha(F)`, multi-ball configurations,
//! two-ball deficits, critical volumes and the explicit constants.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{ball_perimeter, ball_volume, radius_for_volume, GeodesicBall, HPoint, Params};
use crate::graph::{graph_perimeter, graph_volume};
use crate::kernel::{c3_bound, cross_monte_carlo, euclidean_nl_unit_ball, nl_ball, nl_radial_graph, McEstimate, QuadratureSpec, Shape};

pub use crate::graph::{graph_perimeter_gradient, graph_volume_gradient, RadialGraph};

/// Volume, perimeter and nonlocal term of a set, with `total = perimeter + gamma * nonlocal`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub volume: f64,
    pub perimeter: f64,
    pub nonlocal: f64,
    pub total: f64,
    /// Error estimate of `total`.
    pub error_estimate: f64,
}

impl EnergyReport {
    /// Assembles a report; `nl_error` is the error of the nonlocal term.
    pub fn from_parts(gamma: f64, volume: f64, perimeter: f64, nonlocal: f64, nl_error: f64) -> Self {
        Self {
            volume,
            perimeter,
            nonlocal,
            total: perimeter + gamma * nonlocal,
            error_estimate: gamma * nl_error,
        }
    }

    /// A report that carries only a volume (no boundary data).
    pub fn volume_only(volume: f64) -> Self {
        Self { volume, perimeter: f64::NAN, nonlocal: f64::NAN, total: f64::NAN, error_estimate: f64::NAN }
    }
}

/// Energy of a geodesic ball or a radial graph.
pub fn energy(params: &Params, shape: Shape<'_>, quad: &QuadratureSpec) -> Result<EnergyReport> {
    match shape {
        Shape::Ball(b) => {
            if b.dim() != params.n() {
                return Err(Error::DimensionMismatch { expected: params.n(), got: b.dim() });
            }
            ball_energy(params, b.radius(), quad)
        }
        Shape::Graph(g) => {
            let nl = nl_radial_graph(params, g, quad)?;
            Ok(EnergyReport::from_parts(params.gamma(), graph_volume(g), graph_perimeter(g), nl.value, nl.error))
        }
    }
}

/// Energy of the ball of radius `r`.
pub fn ball_energy(params: &Params, r: f64, quad: &QuadratureSpec) -> Result<EnergyReport> {
    let n = params.n();
    let nl = nl_ball(params, r, quad)?;
    Ok(EnergyReport::from_parts(params.gamma(), ball_volume(n, r)?, ball_perimeter(n, r)?, nl.value, nl.error))
}

/// Energy of the ball of volume `m`.
pub fn ball_energy_for_volume(params: &Params, m: f64, quad: &QuadratureSpec) -> Result<EnergyReport> {
    ball_energy(params, radius_for_volume(params.n(), m)?, quad)
}

/// Balls of the given volumes with centers `e^{R k} e_n`, `k = 0, 1, ...`;
/// `separation = None` places them infinitely far apart.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiBallConfig {
    pub volumes: Vec<f64>,
    pub separation: Option<f64>,
}

impl MultiBallConfig {
    pub fn new(volumes: Vec<f64>, separation: Option<f64>) -> Result<Self> {
        if volumes.is_empty() || volumes.iter().any(|&v| !(v > 0.0)) {
            return Err(invalid("volumes", "need at least one positive volume"));
        }
        if let Some(s) = separation {
            if !(s > 0.0) || !s.is_finite() {
                return Err(invalid("separation", "must be positive and finite"));
            }
        }
        Ok(Self { volumes, separation })
    }

    pub fn with_separation(&self, separation: f64) -> Result<Self> {
        Self::new(self.volumes.clone(), Some(separation))
    }

    /// The `k`-th ball at the given separation.
    pub fn ball(&self, n: usize, k: usize) -> Result<GeodesicBall> {
        let sep = self.separation.ok_or_else(|| invalid("separation", "configuration is at infinity"))?;
        let c = HPoint::on_axis(n, (sep * k as f64).exp())?;
        GeodesicBall::new(c, radius_for_volume(n, self.volumes[k])?)
    }
}

/// `N = max(1, ceil(m))` equal balls of volume `m / N <= 1`.
pub fn fhat_config(m: f64) -> Result<MultiBallConfig> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(invalid("m", "must be positive"));
    }
    let n = (m.ceil() as usize).max(1);
    MultiBallConfig::new(vec![m / n as f64; n], None)
}

/// Sum of the ball energies of a configuration at infinite separation.
pub fn config_energy_at_infinity(params: &Params, config: &MultiBallConfig, quad: &QuadratureSpec) -> Result<EnergyReport> {
    if config.separation.is_some() {
        return Err(Error::Precondition("finite separation: use config_energy_finite".into()));
    }
    let mut acc = EnergyReport { volume: 0.0, perimeter: 0.0, nonlocal: 0.0, total: 0.0, error_estimate: 0.0 };
    // equal volumes are common; evaluate each distinct volume once
    let mut cache: Vec<(f64, EnergyReport)> = Vec::new();
    for &v in &config.volumes {
        let e = match cache.iter().find(|c| c.0 == v) {
            Some(c) => c.1,
            None => {
                let e = ball_energy_for_volume(params, v, quad)?;
                cache.push((v, e));
                e
            }
        };
        acc.volume += e.volume;
        acc.perimeter += e.perimeter;
        acc.nonlocal += e.nonlocal;
        acc.error_estimate += e.error_estimate;
    }
    acc.total = acc.perimeter + params.gamma() * acc.nonlocal;
    Ok(acc)
}

/// Energy of a configuration at finite separation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FiniteConfigEnergy {
    /// `nonlocal` includes the cross terms.
    pub report: EnergyReport,
    /// `sum_{i != j} int_{B_i} int_{B_j} d^{-alpha}`.
    pub cross: f64,
    pub cross_stderr: f64,
}

/// Energy at finite separation, with Monte Carlo cross interactions.
pub fn config_energy_finite(params: &Params, config: &MultiBallConfig, quad: &QuadratureSpec) -> Result<FiniteConfigEnergy> {
    let sep = config.separation.ok_or_else(|| Error::Precondition("separation is infinite".into()))?;
    let n = params.n();
    let balls: Vec<GeodesicBall> = (0..config.volumes.len()).map(|k| config.ball(n, k)).collect::<Result<_>>()?;
    for i in 0..balls.len() {
        for j in i + 1..balls.len() {
            if sep * (j - i) as f64 <= balls[i].radius() + balls[j].radius() {
                return Err(Error::Precondition(format!("balls {i} and {j} overlap at separation {sep}")));
            }
        }
    }
    let at_inf = config_energy_at_infinity(params, &MultiBallConfig::new(config.volumes.clone(), None)?, quad)?;
    let pairs: Vec<(usize, usize)> = (0..balls.len()).flat_map(|i| (i + 1..balls.len()).map(move |j| (i, j))).collect();
    let ests: Vec<McEstimate> = pairs
        .par_iter()
        .enumerate()
        .map(|(p, &(i, j))| cross_monte_carlo(params, &balls[i], &balls[j], quad.mc_samples, quad.seed.wrapping_add(p as u64)))
        .collect();
    let cross: f64 = 2.0 * ests.iter().map(|e| e.estimate).sum::<f64>();
    let cross_stderr = 2.0 * ests.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt();
    let mut report = at_inf;
    report.nonlocal += cross;
    report.total = report.perimeter + params.gamma() * report.nonlocal;
    report.error_estimate += params.gamma() * 3.0 * cross_stderr;
    Ok(FiniteConfigEnergy { report, cross, cross_stderr })
}

/// One row of a two-ball deficit table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeficitRow {
    pub m: f64,
    pub radius: f64,
    pub e_ball: f64,
    pub e_split2: f64,
    /// `E(B(m)) - 2 E(B(m/2))`
    pub deficit: f64,
    pub deficit_err: f64,
}

/// `E(B(m)) - 2 E(B(m/2))`: positive when two far half-balls beat one ball.
pub fn two_ball_deficit(params: &Params, m: f64, quad: &QuadratureSpec) -> Result<DeficitRow> {
    if !(m > 0.0) {
        return Err(invalid("m", "must be positive"));
    }
    let radius = radius_for_volume(params.n(), m)?;
    let whole = ball_energy(params, radius, quad)?;
    let half = ball_energy_for_volume(params, 0.5 * m, quad)?;
    let deficit = whole.total - 2.0 * half.total;
    let round = 1e-14 * (whole.total.abs() + 2.0 * half.total.abs());
    Ok(DeficitRow {
        m,
        radius,
        e_ball: whole.total,
        e_split2: 2.0 * half.total,
        deficit,
        deficit_err: whole.error_estimate + 2.0 * half.error_estimate + round,
    })
}

/// `steps` log-spaced volumes from `m_min` to `m_max` inclusive.
pub fn log_grid(m_min: f64, m_max: f64, steps: usize) -> Result<Vec<f64>> {
    if !(m_min > 0.0 && m_max > m_min) || steps < 2 {
        return Err(invalid("grid", "need 0 < m_min < m_max and steps >= 2"));
    }
    let (a, b) = (m_min.ln(), m_max.ln());
    let mut g: Vec<f64> = (0..steps).map(|i| (a + (b - a) * i as f64 / (steps - 1) as f64).exp()).collect();
    g[0] = m_min;
    g[steps - 1] = m_max;
    Ok(g)
}

/// Deficit table on a log grid, evaluated in parallel and assembled by index.
pub fn deficit_scan(params: &Params, m_min: f64, m_max: f64, steps: usize, quad: &QuadratureSpec) -> Result<Vec<DeficitRow>> {
    log_grid(m_min, m_max, steps)?.par_iter().map(|&m| two_ball_deficit(params, m, quad)).collect()
}

/// Indices `i` with a sign change between rows `i` and `i + 1`.
pub fn sign_changes(rows: &[DeficitRow]) -> Vec<usize> {
    rows.windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0].deficit < 0.0) != (w[1].deficit < 0.0))
        .map(|(i, _)| i)
        .collect()
}

/// Result of the critical-volume search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalVolume {
    pub m_star: f64,
    pub deficit: f64,
    pub deficit_err: f64,
    /// Final bracket `(lo, hi)` with `deficit(lo) < 0 <= deficit(hi)`.
    pub bracket: (f64, f64),
    /// Scan volumes between which the deficit changes sign.
    pub sign_changes: Vec<(f64, f64)>,
    pub table: Vec<DeficitRow>,
}

/// Solves `E(B(m)) = 2 E(B(m/2))` by a geometric scan over `[1e-4, 1e6]` and bisection in `log m`.
pub fn critical_volume_hyperbolic(params: &Params, quad: &QuadratureSpec) -> Result<CriticalVolume> {
    let table = deficit_scan(params, 1e-4, 1e6, 31, quad)?;
    let changes = sign_changes(&table);
    let Some(&first) = changes.iter().find(|&&i| table[i].deficit < 0.0) else {
        let listing: Vec<String> = table.iter().map(|r| format!("{:?}:{:?}", r.m, r.deficit)).collect();
        return Err(Error::RootNotFound(format!("no sign change of the deficit on [1e-4, 1e6]; table {}", listing.join(","))));
    };
    let (mut lo, mut hi) = (table[first].m, table[first + 1].m);
    let mut best = table[first];
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let row = two_ball_deficit(params, mid, quad)?;
        best = row;
        if row.deficit.abs() <= row.deficit_err {
            break;
        }
        if row.deficit < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    Ok(CriticalVolume {
        m_star: best.m,
        deficit: best.deficit,
        deficit_err: best.deficit_err,
        bracket: (lo, hi),
        sign_changes: changes.iter().map(|&i| (table[i].m, table[i + 1].m)).collect(),
        table,
    })
}

/// Euclidean critical volume from the closed form, with `NL_alpha(B)` by Monte Carlo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EuclideanCriticalVolume {
    pub m_star: f64,
    /// Relative tolerance propagated from three Monte Carlo standard errors.
    pub rel_tol: f64,
    pub nl_unit_ball: McEstimate,
}

/// `m* = [((2^{1/n} - 1)/(1 - 2^{(alpha-n)/n})) omega / (gamma NL(B))]^{n/(n+1-alpha)} b_n`.
pub fn euclidean_critical_from_nl(params: &Params, nl_unit_ball: f64) -> f64 {
    let nf = params.n() as f64;
    let alpha = params.alpha();
    let ratio = (2f64.powf(1.0 / nf) - 1.0) / (1.0 - 2f64.powf((alpha - nf) / nf));
    (ratio * params.omega() / (params.gamma() * nl_unit_ball)).powf(nf / (nf + 1.0 - alpha)) * params.b_n()
}

pub fn critical_volume_euclidean(params: &Params, quad: &QuadratureSpec) -> Result<EuclideanCriticalVolume> {
    quad.validate()?;
    let nl = euclidean_nl_unit_ball(params.n(), params.alpha(), quad.mc_samples, quad.seed);
    let nf = params.n() as f64;
    let expo = nf / (nf + 1.0 - params.alpha());
    Ok(EuclideanCriticalVolume {
        m_star: euclidean_critical_from_nl(params, nl.estimate),
        rel_tol: expo * 3.0 * nl.stderr / nl.estimate,
        nl_unit_ball: nl,
    })
}

/// Constants made explicit in the existence theory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PaperConstants {
    pub m_bar: f64,
    /// `c_3(m_bar)`
    pub c3: f64,
    /// radius with `|B_rbar| = 1`
    pub rbar: f64,
    pub c5: f64,
    #[serde(rename = "C4")]
    pub big_c4: f64,
    #[serde(rename = "C5")]
    pub big_c5: f64,
    #[serde(rename = "Lambda1")]
    pub lambda1: f64,
    #[serde(rename = "Lambda2")]
    pub lambda2: f64,
    pub d1: f64,
    pub d2: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub epsilon: f64,
    pub d3: f64,
    pub c7: f64,
    pub c8: f64,
    #[serde(rename = "C5_prime")]
    pub c5_prime: f64,
    /// Fields that depend on the numerically derived `K`.
    pub derived: Vec<&'static str>,
}

/// `1.01 * max_{lambda in [2^{-1/(n-1)}, 1)} (lambda^{2-2n} - 1) / (lambda^{-1} - 1)` on a 1e4-point grid.
pub fn k_constant(n: usize) -> f64 {
    let lo = 2f64.powf(-1.0 / (n as f64 - 1.0));
    let pts = 10_000;
    let e = 2.0 - 2.0 * n as f64;
    let mut best = 0.0f64;
    for i in 0..pts {
        let lam = lo + (1.0 - lo) * i as f64 / pts as f64;
        best = best.max((lam.powf(e) - 1.0) / (1.0 / lam - 1.0));
    }
    1.01 * best
}

/// `min_{R > 0} a R^{alpha-n} + b R` in closed form.
pub fn interpolation_minimum(n: usize, alpha: f64, a: f64, b: f64) -> f64 {
    let nf = n as f64;
    let p = nf + 1.0 - alpha;
    let bracket = (nf - alpha).powf((alpha - nf) / p) + (nf - alpha).powf(1.0 / p);
    bracket * a.powf(1.0 / p) * b.powf((nf - alpha) / p)
}

/// `c_7 = c_8`, the minimum of `h(R) = a R^{alpha-n} + b R` with
/// `a = 2^alpha / ((2^n - 1) b_n)` and `b = 2^{alpha+1}`.
pub fn interpolation_constant(n: usize, alpha: f64) -> Result<f64> {
    let nf = n as f64;
    if n < 2 || !(alpha > 0.0 && alpha < nf) {
        return Err(Error::InvalidParams(format!("need n >= 2 and 0 < alpha < n, got n={n}, alpha={alpha}")));
    }
    let bn: f64 = crate::geometry::unit_ball_volume(n);
    Ok(interpolation_minimum(n, alpha, 2f64.powf(alpha) / ((2f64.powf(nf) - 1.0) * bn), 2f64.powf(alpha + 1.0)))
}

pub fn paper_constants(params: &Params, m_bar: f64) -> Result<PaperConstants> {
    let n = params.n();
    let nf = n as f64;
    let (alpha, gamma) = (params.alpha(), params.gamma());
    let bn = params.b_n();
    let c3 = c3_bound(params, m_bar)?;
    let c3_unit = c3_bound(params, 1.0)?;
    let rbar: f64 = radius_for_volume(n, 1.0)?;
    let c5 = 2.0 * nf * bn.powf(1.0 / nf) * rbar.cosh().powf((nf - 1.0) / nf) + 2.0 * gamma * c3_unit;
    let b1: f64 = ball_volume(n, 1.0)?;
    let ch1 = 1f64.cosh();
    let big_c4 = nf * bn * ch1.powf(nf - 1.0)
        + nf * bn.powf((nf + alpha) / nf) * gamma / (nf - alpha)
            * ch1.powf(nf)
            * (bn.powf(-1.0 / nf) * b1.powf(1.0 / nf)).cosh().powf(nf - 1.0)
            * b1.powf((nf - alpha) / nf);
    let big_c5 = (2.0 * big_c4 / (nf * bn)).powf(nf / (nf - 1.0));
    let lambda1 = 6.0 * big_c4 / bn;
    let lambda2 = (lambda1 + 14.0 * gamma * c3)
        .max(gamma * c3 * (2.0 * big_c5.powf(2.0 * (alpha + 1.0 - nf) / (nf - 1.0)) + big_c5 + 1.0));
    let d1 = 0.5 * nf * bn.powf(1.0 / nf);
    let k = k_constant(n);
    let d2 = k * c5;
    let epsilon = (d1 / (4.0 * d2)).powf(nf).min(1.0);
    let d3 = 2f64.powf(1.0 / nf).acosh().min((epsilon / (2.0 * bn * (1.0 + epsilon))).powf(1.0 / nf));
    let c7 = interpolation_constant(n, alpha)?;
    let c5_prime = (gamma / c5).powf(1.0 / alpha);
    Ok(PaperConstants {
        m_bar,
        c3,
        rbar,
        c5,
        big_c4,
        big_c5,
        lambda1,
        lambda2,
        d1,
        d2,
        k,
        epsilon,
        d3,
        c7,
        c8: c7,
        c5_prime,
        derived: vec!["K", "d2", "epsilon", "d3"],
    })
}

/// Outcome of the nonoptimality criterion for a partition `F = F1 u F2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NonoptimalityDecision {
    /// Both conditions hold, so `F` is not a minimizer.
    pub fires: bool,
    /// `P(F1) + P(F2) - P(F)`
    pub sigma: f64,
    /// `E(F2)/2 - sigma`
    pub sigma_margin: f64,
    /// `epsilon min{1, |F1|} - |F2|`
    pub volume_margin: f64,
    pub epsilon: f64,
}

/// Relative tolerance on `|F| = |F1| + |F2|`.
pub const VOLUME_ADDITIVITY_TOL: f64 = 1e-8;

pub fn nonoptimality_check(
    params: &Params,
    e_f: &EnergyReport,
    e_f1: &EnergyReport,
    e_f2: &EnergyReport,
) -> Result<NonoptimalityDecision> {
    for (name, e) in [("F", e_f), ("F1", e_f1), ("F2", e_f2)] {
        if !(e.volume > 0.0) || !e.perimeter.is_finite() || !e.total.is_finite() {
            return Err(Error::Precondition(format!("{name} lacks volume or perimeter data")));
        }
    }
    if (e_f1.volume + e_f2.volume - e_f.volume).abs() > VOLUME_ADDITIVITY_TOL * e_f.volume {
        return Err(Error::Precondition(format!(
            "volumes do not add: {} + {} != {}",
            e_f1.volume, e_f2.volume, e_f.volume
        )));
    }
    let epsilon = paper_constants(params, 1.0)?.epsilon;
    let sigma = e_f1.perimeter + e_f2.perimeter - e_f.perimeter;
    let sigma_margin = 0.5 * e_f2.total - sigma;
    let volume_margin = epsilon * e_f1.volume.min(1.0) - e_f2.volume;
    Ok(NonoptimalityDecision { fires: sigma_margin >= 0.0 && volume_margin >= 0.0, sigma, sigma_margin, volume_margin, epsilon })
}

/// Lower energy bound `gamma^{1/(n+1-alpha)} m / c_8` at volume `m`.
pub fn energy_lower_bound(params: &Params, m: f64) -> Result<f64> {
    let c8 = interpolation_constant(params.n(), params.alpha())?;
    Ok(params.gamma().powf(1.0 / (params.n() as f64 + 1.0 - params.alpha())) * m / c8)
}

/// Upper energy bound `c_5 max{m, m^{(n-1)/n}}`.
pub fn energy_upper_bound(params: &Params, m: f64) -> Result<f64> {
    let c5 = paper_constants(params, 1.0)?.c5;
    let nf = params.n() as f64;
    Ok(c5 * m.max(m.powf((nf - 1.0) / nf)))
}
