//! Registry of falsifiable checks. Each check samples a fixed family of sets
//! where both sides of an inequality are computable and reports the smallest
//! slack it observed.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{
    ball_energy_for_volume, config_energy_at_infinity, energy_lower_bound, energy_upper_bound, fhat_config,
    interpolation_constant, nonoptimality_check, paper_constants, EnergyReport, MultiBallConfig,
};
use crate::error::{invalid, Error, Result};
use crate::geometry::{
    ball_perimeter, ball_volume, distance, iso_xi, phi_lambda, radius_for_volume, random_direction, sphere_area,
    GeodesicBall, HPoint, Params,
};
use crate::graph::{graph_perimeter, graph_volume, RadialGraph};
use crate::kernel::{
    ball_potential, c3_bound, chunk_rng, chunked_mean, nl_ball, nl_graph_with_profile, v_ball_center, BallProfile,
    QuadratureSpec,
};
use crate::optimizer::{asymmetry, project_volume};
use crate::quadrature::{adaptive, Estimate};
use crate::scalar::acosh1p;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Passed,
    Failed,
    /// A numeric routine broke down; the inequality was not tested.
    Errored,
}

/// One evaluated instance: its inputs, both sides and the slack.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub label: String,
    pub inputs: BTreeMap<String, f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

impl Witness {
    fn new(label: impl Into<String>) -> Self {
        Self { label: label.into(), inputs: BTreeMap::new(), lhs: f64::NAN, rhs: f64::NAN, slack: f64::NAN }
    }
    fn input(mut self, key: &str, v: f64) -> Self {
        self.inputs.insert(key.to_string(), v);
        self
    }
    fn sides(mut self, lhs: f64, rhs: f64, slack: f64) -> Self {
        self.lhs = lhs;
        self.rhs = rhs;
        self.slack = slack;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub status: CheckStatus,
    /// Smallest slack observed, in the units documented for the check.
    pub margin: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub seed: u64,
    /// Worst instances first.
    pub witnesses: Vec<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CheckDescriptor {
    pub name: &'static str,
    pub statement: &'static str,
    /// Sets the check is evaluated on.
    pub family: &'static str,
}

/// Sample counts and resolutions shared by the checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AuditBudget {
    /// Monte Carlo samples per volume estimate.
    pub samples: usize,
    /// Random point pairs or parameter draws.
    pub pairs: usize,
    pub seed: u64,
    /// Angles (n = 2) or colatitudes (n = 3) of graph grids.
    pub grid: usize,
    pub quad: QuadratureSpec,
}

impl Default for AuditBudget {
    fn default() -> Self {
        Self { samples: 1_000_000, pairs: 10_000, seed: 0, grid: 64, quad: QuadratureSpec::default() }
    }
}

impl AuditBudget {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1000 || self.pairs < 100 {
            return Err(invalid("budget", "need samples >= 1000 and pairs >= 100"));
        }
        if self.grid < 8 {
            return Err(invalid("budget", "grid must be >= 8"));
        }
        self.quad.validate()
    }
}

type CheckFn = fn(&Params, &AuditBudget) -> Result<Tracker>;

const REGISTRY: [(CheckDescriptor, CheckFn); 17] = [
    (
        CheckDescriptor {
            name: "phi-distance",
            statement: "min{l^-2,1} d(x,y) <= d(Phi x, Phi y) <= max{l^-2,1} d(x,y)",
            family: "random point pairs",
        },
        check_phi_distance,
    ),
    (
        CheckDescriptor { name: "phi-volume", statement: "|Phi(F)| = l^{1-n} |F|", family: "ball r=1 and its images" },
        check_phi_volume,
    ),
    (
        CheckDescriptor {
            name: "phi-perimeter-balls",
            statement: "min{l^{2-2n},1} P(F) <= P(Phi F) <= max{l^{2-2n},1} P(F)",
            family: "balls and their ellipsoid images",
        },
        check_phi_perimeter,
    ),
    (
        CheckDescriptor {
            name: "xi-concavity",
            statement: "xi(a) + xi(b) > xi(a+b), xi' > 0 decreasing",
            family: "log grid of volumes",
        },
        check_xi_concavity,
    ),
    (
        CheckDescriptor {
            name: "euclid-like-iso",
            statement: "n b^{1/n} |B|^{(n-1)/n} <= P(B_r) <= n b^{1/n} (cosh r0 |B|)^{(n-1)/n}",
            family: "balls r <= r0",
        },
        check_euclid_like_iso,
    ),
    (
        CheckDescriptor { name: "v-bound", statement: "v_F(x) <= v_{B}(0) <= c3(m)", family: "balls, points at any distance" },
        check_v_bound,
    ),
    (
        CheckDescriptor {
            name: "nl-lipschitz",
            statement: "|NL(E) - NL(F)| <= 2 c3 |E d F|",
            family: "concentric ball pairs",
        },
        check_nl_lipschitz,
    ),
    (
        CheckDescriptor {
            name: "fuglede-nl",
            statement: "[NL(B) - NL(E_t)] / t^2 bounded and positive",
            family: "u = cos 3 theta graphs",
        },
        check_fuglede_nl,
    ),
    (
        CheckDescriptor {
            name: "fuglede-perimeter",
            statement: "[P(E_t) - P(B)] / t^2 bounded and positive",
            family: "u = cos 3 theta graphs",
        },
        check_fuglede_perimeter,
    ),
    (
        CheckDescriptor {
            name: "quantitative-iso",
            statement: "[P(E) - P(B)] sinh^{n+1} r / asym(E)^2 > 0, stable under refinement",
            family: "u = cos k theta, k = 2..5",
        },
        check_quantitative_iso,
    ),
    (
        CheckDescriptor {
            name: "c5-upper-bound",
            statement: "E(Fhat(m)) <= c5 max{m, m^{(n-1)/n}}",
            family: "unit-volume ball packings",
        },
        check_c5_upper,
    ),
    (
        CheckDescriptor {
            name: "nonoptimality",
            statement: "small far component: criterion fires and the Phi-rescaled big part is cheaper",
            family: "two far balls",
        },
        check_nonoptimality,
    ),
    (
        CheckDescriptor {
            name: "interpolation",
            statement: "|F| <= c8 P^{(n-a)/(n+1-a)} NL^{1/(n+1-a)}",
            family: "balls and Fourier graphs",
        },
        check_interpolation,
    ),
    (
        CheckDescriptor {
            name: "energy-bounds",
            statement: "g^{1/(n+1-a)} m / c8 <= min E <= c5 max{m, m^{(n-1)/n}}",
            family: "ball, split and packing candidates",
        },
        check_energy_bounds,
    ),
    (
        CheckDescriptor {
            name: "diameter-lower",
            statement: "NL(F) >= m^2 / diam^a, and diam >= (g/c5)^{1/a} m^{1/a} when E <= c5 m",
            family: "balls with m >= 1",
        },
        check_diameter_lower,
    ),
    (
        CheckDescriptor {
            name: "appendix-kernel-derivative",
            statement: "sup |d/dt f(r(1+t rho), r(1+t s))| / f(r,r) finite",
            family: "rho, s between values of a Lipschitz u",
        },
        check_kernel_derivative,
    ),
    (
        CheckDescriptor {
            name: "ball-extremality",
            statement: "P(E) >= P(B) and NL(E) <= NL(B) at equal volume",
            family: "Fourier graphs, modes k <= 6",
        },
        check_ball_extremality,
    ),
];

pub fn list_checks() -> Vec<CheckDescriptor> {
    REGISTRY.iter().map(|(d, _)| *d).collect()
}

/// Runs one check. Unknown names are an error; numeric failures give an errored report.
pub fn run_check(name: &str, params: &Params, budget: &AuditBudget) -> Result<CheckReport> {
    let (desc, f) = REGISTRY.iter().find(|(d, _)| d.name == name).ok_or_else(|| Error::UnknownCheck(name.to_string()))?;
    budget.validate()?;
    Ok(match f(params, budget) {
        Ok(t) => t.finish(desc.name, budget.seed),
        Err(e) => CheckReport {
            name: desc.name.to_string(),
            passed: false,
            status: CheckStatus::Errored,
            margin: f64::NAN,
            tolerance: f64::NAN,
            samples: 0,
            seed: budget.seed,
            witnesses: Vec::new(),
            error: Some(e.to_string()),
        },
    })
}

/// Every registered check, in registry order.
pub fn run_all(params: &Params, budget: &AuditBudget) -> Result<Vec<CheckReport>> {
    budget.validate()?;
    REGISTRY.par_iter().map(|(d, _)| run_check(d.name, params, budget)).collect()
}

pub fn all_passed(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

#[derive(Serialize)]
struct ParamsDoc {
    n: usize,
    alpha: f64,
    gamma: f64,
}

#[derive(Serialize)]
struct AuditDoc<'a> {
    params: ParamsDoc,
    seed: u64,
    passed: bool,
    checks: &'a [CheckReport],
}

/// The JSON audit document.
pub fn audit_json(params: &Params, seed: u64, reports: &[CheckReport]) -> Result<String> {
    let doc = AuditDoc {
        params: ParamsDoc { n: params.n(), alpha: params.alpha(), gamma: params.gamma() },
        seed,
        passed: all_passed(reports),
        checks: reports,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
}

const KEEP_WITNESSES: usize = 3;

/// Running minimum of the slack plus the worst witnesses.
struct Tracker {
    margin: f64,
    tolerance: f64,
    samples: usize,
    witnesses: Vec<Witness>,
}

impl Tracker {
    fn new() -> Self {
        Self { margin: f64::INFINITY, tolerance: 0.0, samples: 0, witnesses: Vec::new() }
    }

    fn tolerate(&mut self, tol: f64) {
        self.tolerance = self.tolerance.max(tol);
    }

    fn push(&mut self, w: Witness) -> Result<()> {
        if !w.slack.is_finite() {
            return Err(Error::Precondition(format!("non-finite slack at {}", w.label)));
        }
        self.margin = self.margin.min(w.slack);
        let pos = self.witnesses.partition_point(|x| x.slack <= w.slack);
        if pos < KEEP_WITNESSES {
            self.witnesses.insert(pos, w);
            self.witnesses.truncate(KEEP_WITNESSES);
        }
        Ok(())
    }

    fn finish(self, name: &str, seed: u64) -> CheckReport {
        let passed = self.margin >= -self.tolerance;
        CheckReport {
            name: name.to_string(),
            passed,
            status: if passed { CheckStatus::Passed } else { CheckStatus::Failed },
            margin: self.margin,
            tolerance: self.tolerance,
            samples: self.samples,
            seed,
            witnesses: self.witnesses,
            error: None,
        }
    }
}

const PHI_LAMBDAS: [f64; 5] = [0.3, 0.9, 1.5, 2.0, 4.0];

fn random_upper_point<R: Rng>(n: usize, rng: &mut R) -> HPoint {
    let mut c: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-2.0..2.0)).collect();
    c.push(rng.gen_range(-2.0f64..2.0).exp());
    HPoint::new(c).expect("positive height")
}

/// Relative slack of `d(Phi x, Phi y) / d(x, y)` inside its sandwich.
fn check_phi_distance(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    let n = params.n();
    let mut t = Tracker::new();
    t.tolerate(1e-12);
    for (li, &lam) in PHI_LAMBDAS.iter().enumerate() {
        let (lo, hi) = ((lam * lam).recip().min(1.0), (lam * lam).recip().max(1.0));
        let mut rng = chunk_rng(b.seed, li);
        for _ in 0..b.pairs {
            let x = random_upper_point(n, &mut rng);
            let y = random_upper_point(n, &mut rng);
            let d = distance(&x, &y)?;
            let dp = distance(&phi_lambda(lam, &x)?, &phi_lambda(lam, &y)?)?;
            let ratio = dp / d;
            let slack = (ratio - lo).min(hi - ratio);
            t.push(Witness::new("pair").input("lambda", lam).input("d", d).sides(dp, d, slack))?;
            t.samples += 1;
        }
    }
    Ok(t)
}

/// Monte Carlo volume of `{ y : Phi_{1/lambda}(y) in B }` from uniform points of its Euclidean box.
pub fn phi_image_volume_mc(ball: &GeodesicBall, lambda: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let n = ball.dim();
    let (c, rho) = crate::geometry::ball_to_euclidean(ball);
    let lo: Vec<f64> = c.iter().map(|x| x - rho).collect();
    let mut hi: Vec<f64> = c.iter().map(|x| x + rho).collect();
    let mut lo = lo;
    lo[n - 1] *= lambda;
    hi[n - 1] *= lambda;
    let box_vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let r = ball.radius();
    let inv = lambda.recip();
    let (mean, var) = chunked_mean(samples, seed, |rng| {
        let y: Vec<f64> = lo.iter().zip(&hi).map(|(&a, &b)| rng.gen_range(a..b)).collect();
        let yn = y[n - 1];
        let p = HPoint::new(y).expect("box lies in U^n");
        let pre = phi_lambda(inv, &p).expect("positive lambda");
        match distance(&pre, ball.center()) {
            Ok(d) if d <= r => yn.powi(-(n as i32)),
            _ => 0.0,
        }
    });
    Ok((box_vol * mean, box_vol * (var / samples as f64).sqrt()))
}

/// `3 - z` where `z` is the joint-standard-error distance of `|Phi B|` from `lambda^{1-n} |B|`.
fn check_phi_volume(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    let n = params.n();
    let ball = GeodesicBall::at_origin(n, 1.0)?;
    let mut t = Tracker::new();
    let (vb, sb) = phi_image_volume_mc(&ball, 1.0, b.samples, b.seed)?;
    t.samples += b.samples;
    for (li, &lam) in PHI_LAMBDAS.iter().enumerate() {
        let (vp, sp) = phi_image_volume_mc(&ball, lam, b.samples, b.seed.wrapping_add(1 + li as u64))?;
        t.samples += b.samples;
        let f = lam.powf(1.0 - n as f64);
        let joint = (sp * sp + f * f * sb * sb).sqrt();
        let z = (vp - f * vb).abs() / joint;
        t.push(
            Witness::new("ball r=1")
                .input("lambda", lam)
                .input("stderr_ball", sb)
                .input("stderr_image", sp)
                .input("exact_ball", ball.volume())
                .sides(vp, f * vb, 3.0 - z),
        )?;
    }
    Ok(t)
}

/// Hyperbolic area of `Phi_lambda(B_r(e_n))`, the Euclidean ellipsoid with
/// horizontal semi-axis `sinh r`, vertical `lambda sinh r` and center height `lambda cosh r`.
pub fn phi_ball_perimeter(n: usize, r: f64, lambda: f64, rel_tol: f64) -> Result<Estimate> {
    if n < 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    if !(r > 0.0 && lambda > 0.0) {
        return Err(invalid("r/lambda", "must be positive"));
    }
    let (a, c) = (r.sinh(), lambda * r.cosh());
    let bb = lambda * a;
    let k = n as i32 - 2;
    let (est, ok) = adaptive(
        |phi: f64| {
            let (s, co) = phi.sin_cos();
            (a * s).powi(k) * (a * a * co * co + bb * bb * s * s).sqrt() / (c + bb * co).powi(n as i32 - 1)
        },
        0.0,
        PI,
        0.0,
        rel_tol,
        400,
    );
    let w = sphere_area::<f64>(n - 1);
    if !ok {
        return Err(Error::QuadratureNonConvergence { value: w * est.value, previous: w * (est.value - est.error) });
    }
    Ok(Estimate { value: w * est.value, error: w * est.error })
}

/// Relative slack of `P(Phi B) / P(B)` inside the sandwich.
fn check_phi_perimeter(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    let n = params.n();
    let e = 2.0 - 2.0 * n as f64;
    let mut t = Tracker::new();
    for &r in &[0.3, 1.0, 2.0] {
        let p = ball_perimeter(n, r)?;
        let same = phi_ball_perimeter(n, r, 1.0, b.quad.rel_tol)?;
        if (same.value - p).abs() > 3.0 * same.error + 1e-9 * p {
            return Err(Error::Precondition(format!("ellipsoid area at lambda=1 is {} vs {p}", same.value)));
        }
        for &lam in &PHI_LAMBDAS {
            let img = phi_ball_perimeter(n, r, lam, b.quad.rel_tol)?;
            let (lo, hi) = (lam.powf(e).min(1.0), lam.powf(e).max(1.0));
            let q = img.value / p;
            t.tolerate(3.0 * img.error / p + 1e-12);
            t.push(Witness::new("ball").input("r", r).input("lambda", lam).sides(img.value, p, (q - lo).min(hi - q)))?;
            t.samples += 1;
        }
    }
    Ok(t)
}

/// Relative slack of subadditivity and of the monotone decrease of `xi'`.
fn check_xi_concavity(params: &Params, _b: &AuditBudget) -> Result<Tracker> {
    let n = params.n();
    let zs = crate::energy::log_grid(1e-3, 1e3, 40)?;
    let xi: Vec<_> = zs.iter().map(|&z| iso_xi(n, z)).collect::<Result<_>>()?;
    let mut t = Tracker::new();
    t.tolerate(1e-10);
    for (i, &a) in zs.iter().enumerate() {
        for &bz in &zs[i..] {
            let sum = iso_xi(n, a + bz)?.xi;
            let lhs = xi[i].xi + iso_xi(n, bz)?.xi;
            t.push(Witness::new("subadditive").input("a", a).input("b", bz).sides(lhs, sum, (lhs - sum) / sum))?;
            t.samples += 1;
        }
    }
    for (i, w) in xi.windows(2).enumerate() {
        t.push(
            Witness::new("xi' decreasing")
                .input("z", zs[i])
                .sides(w[0].xi_prime, w[1].xi_prime, (w[0].xi_prime - w[1].xi_prime) / w[0].xi_prime),
        )?;
        t.push(Witness::new("xi' positive").input("z", zs[i]).sides(w[0].xi_prime, 0.0, 1.0f64.min(w[0].xi_prime)))?;
        t.samples += 1;
    }
    Ok(t)
}

/// Relative slack on both sides for `r0 in {0.5, 1, 2}`.
fn check_euclid_like_iso(params: &Params, _b: &AuditBudget) -> Result<Tracker> {
    let n = params.n();
    let nf = n as f64;
    let c = nf * params.b_n().powf(1.0 / nf);
    let mut t = Tracker::new();
    t.tolerate(1e-12);
    for &r0 in &[0.5, 1.0, 2.0] {
        for r in crate::energy::log_grid(1e-3 * r0, r0, 30)? {
            let v = ball_volume(n, r)?;
            let p = ball_perimeter(n, r)?;
            let lower = c * v.powf((nf - 1.0) / nf);
            let upper = c * (r0.cosh() * v).powf((nf - 1.0) / nf);
            t.push(Witness::new("lower").input("r0", r0).input("r", r).sides(p, lower, (p - lower) / p))?;
            t.push(Witness::new("upper").input("r0", r0).input("r", r).sides(p, upper, (upper - p) / p))?;
            t.samples += 1;
        }
    }
    Ok(t)
}

/// Relative slack of `v_{B_r}(x) <= v_{B_r}(center) <= c3(m_bar)` for `x` in the ball.
fn check_v_bound(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    let n = params.n();
    let mut t = Tracker::new();
    for &m_bar in &[0.5, 1.0, 4.0] {
        let c3 = c3_bound(params, m_bar)?;
        let r_bar = radius_for_volume(n, m_bar)?;
        for &frac in &[0.25, 0.5, 1.0] {
            let r = frac * r_bar;
            let vc = v_ball_center(params, r)?;
            t.tolerate(3.0 * vc.error / c3);
            t.push(Witness::new("center").input("m_bar", m_bar).input("r", r).sides(vc.value, c3, (c3 - vc.value) / c3))?;
            for &q in &[0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
                let v = ball_potential(params, r, q * r, b.quad.rel_tol);
                t.tolerate(3.0 * (v.error + vc.error) / vc.value);
                t.push(
                    Witness::new("off-center")
                        .input("m_bar", m_bar)
                        .input("r", r)
                        .input("dist", q * r)
                        .sides(v.value, vc.value, (vc.value - v.value) / vc.value),
                )?;
                t.samples += 1;
            }
        }
    }
    Ok(t)
}

/// Relative slack of the Lipschitz bound on concentric ball pairs inside `|F| <= m_bar`.
fn check_nl_lipschitz(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    let n = params.n();
    let mut t = Tracker::new();
    for &m_bar in &[1.0, 4.0] {
        let c3 = c3_bound(params, m_bar)?;
        let balls: Vec<(f64, Estimate)> = (1..=8)
            .map(|i| {
                let v = m_bar * i as f64 / 8.0;
                Ok((v, nl_ball(params, radius_for_volume(n, v)?, &b.quad)?))
            })
            .collect::<Result<_>>()?;
        for (i, (vi, ni)) in balls.iter().enumerate() {
            for (vj, nj) in &balls[i + 1..] {
                let lhs = (nj.value - ni.value).abs();
                let rhs = 2.0 * c3 * (vj - vi);
                t.tolerate(3.0 * (ni.error + nj.error) / rhs);
                t.push(Witness::new("concentric").input("m_bar", m_bar).input("v1", *vi).input("v2", *vj).sides(lhs, rhs, (rhs - lhs) / rhs))?;
                t.samples += 1;
            }
        }
    }
    Ok(t)
}

/// Radial graph over the default grid of dimension `n`:
/// `r (1 + sum a_k Y_k + b_k Z_k)` with `Y_k = cos(k theta)`, `Z_k = sin(k theta)` on the circle
/// and zonal `cos(k colat)`, sectoral `sin^k(colat) cos(k lon)` on the sphere.
pub fn fourier_graph(n: usize, grid: usize, r: f64, modes: &[(usize, f64, f64)]) -> Result<RadialGraph> {
    match n {
        2 => RadialGraph::circle_from_fourier(grid, r, modes),
        3 => RadialGraph::sphere_from_fn(grid, 2 * grid, crate::graph::DerivMode::Spectral, |th, ph| {
            r * (1.0
                + modes
                    .iter()
                    .map(|&(k, a, b)| a * (k as f64 * th).cos() + b * th.sin().powi(k as i32) * (k as f64 * ph).cos())
                    .sum::<f64>())
        }),
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

/// Perimeter and nonlocal differences of a graph against the ball of equal volume on the same grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BallComparison {
    pub radius: f64,
    pub volume: f64,
    pub perimeter: f64,
    pub nonlocal: f64,
    /// `P(E) - P(B)`
    pub perimeter_excess: f64,
    /// `NL(B) - NL(E)`
    pub nonlocal_deficit: f64,
    /// Error of `nonlocal_deficit` (pair sums at two resolutions).
    pub nonlocal_deficit_err: f64,
}

/// Compares `graph` with the equal-volume ball through one shared ball profile.
pub fn compare_with_ball(params: &Params, graph: &RadialGraph, quad: &QuadratureSpec) -> Result<BallComparison> {
    let volume = graph_volume(graph);
    let radius = radius_for_volume(graph.dim(), volume)?;
    let (lo, hi) = (graph.min_radius().min(radius), graph.max_radius().max(radius));
    let mid = 0.5 * (lo + hi);
    let half = (0.5 * (hi - lo)).max(0.02 * mid) * 1.5;
    let profile = BallProfile::build(params, (mid - half).max(0.05 * mid), mid + half, quad)?;
    let nl = nl_graph_with_profile(params, graph, quad, &profile, true)?;
    let ball = RadialGraph::ball(graph.grid(), graph.mode(), radius)?;
    let nl_ball_same = nl_graph_with_profile(params, &ball, quad, &profile, false)?.value;
    let perimeter = graph_perimeter(graph);
    Ok(BallComparison {
        radius,
        volume,
        perimeter,
        nonlocal: nl.value,
        perimeter_excess: perimeter - graph_perimeter(&ball),
        nonlocal_deficit: nl_ball_same - nl.value,
        nonlocal_deficit_err: (nl.error - profile.error()).max(0.0) + 1e-13 * nl.value.abs(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FugledeRow {
    pub r: f64,
    pub t: f64,
    /// `[NL(B_r) - NL(E_t)] / t^2`
    pub nl_ratio: f64,
    pub nl_ratio_err: f64,
    /// `[P(E_t) - P(B_r)] / t^2`
    pub perimeter_ratio: f64,
    /// `nl_ratio / (sinh^{2n-alpha} r ||u||^2_{W^{1,2}})`
    pub nl_normalized: f64,
    /// `perimeter_ratio / (P(B_r) ||u||^2_{W^{1,2}})`
    pub perimeter_normalized: f64,
}

pub const FUGLEDE_TS: [f64; 3] = [0.02, 0.01, 0.005];
pub const FUGLEDE_RADII: [f64; 2] = [0.3, 1.0];

/// `||cos 3 theta||^2_{W^{1,2}}` on the circle, or of the zonal mode on the 2-sphere.
fn mode3_w12(n: usize) -> f64 {
    match n {
        // int cos^2 + 9 sin^2
        2 => 10.0 * PI,
        // int_0^pi (cos^2 3x + 9 sin^2 3x) sin x dx * 2 pi
        _ => 2.0 * PI * (34.0 / 35.0 + 9.0 * 36.0 / 35.0),
    }
}

/// Ratios for `E_t = (1 + t u) r` with `u = cos 3 theta`, re-projected to `|B_r|`.
pub fn fuglede_rows(params: &Params, r: f64, ts: &[f64], grid: usize, quad: &QuadratureSpec) -> Result<Vec<FugledeRow>> {
    let n = params.n();
    let m = ball_volume(n, r)?;
    let w12 = mode3_w12(n);
    ts.iter()
        .map(|&t| {
            let g = project_volume(&fourier_graph(n, grid, r, &[(3, t, 0.0)])?, m)?;
            let cmp = compare_with_ball(params, &g, quad)?;
            let t2 = t * t;
            let nl_ratio = cmp.nonlocal_deficit / t2;
            let perimeter_ratio = cmp.perimeter_excess / t2;
            Ok(FugledeRow {
                r,
                t,
                nl_ratio,
                nl_ratio_err: cmp.nonlocal_deficit_err / t2,
                perimeter_ratio,
                nl_normalized: nl_ratio / (r.sinh().powf(2.0 * n as f64 - params.alpha()) * w12),
                perimeter_normalized: perimeter_ratio / (ball_perimeter(n, r)? * w12),
            })
        })
        .collect()
}

/// `(max - min) / max |.|` of a set of ratios.
pub fn relative_spread(xs: &[f64]) -> f64 {
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = xs.iter().map(|x| x.abs()).fold(0.0, f64::max);
    (hi - lo) / scale
}

const FUGLEDE_SPREAD: f64 = 0.05;

fn fuglede_check(params: &Params, b: &AuditBudget, nonlocal: bool) -> Result<Tracker> {
    let mut t = Tracker::new();
    let n = params.n();
    let grid = graph_grid(n, b);
    let w12 = mode3_w12(n);
    for &r in &FUGLEDE_RADII {
        let (vals, errs, normalized): (Vec<f64>, Vec<f64>, Vec<f64>) = if nonlocal {
            let rows = fuglede_rows(params, r, &FUGLEDE_TS, grid, &b.quad)?;
            (rows.iter().map(|x| x.nl_ratio).collect(), rows.iter().map(|x| x.nl_ratio_err).collect(), rows.iter().map(|x| x.nl_normalized).collect())
        } else {
            let m = ball_volume(n, r)?;
            let vals = FUGLEDE_TS
                .iter()
                .map(|&t| {
                    let g = project_volume(&fourier_graph(n, grid, r, &[(3, t, 0.0)])?, m)?;
                    let ball = RadialGraph::ball(g.grid(), g.mode(), r)?;
                    Ok((graph_perimeter(&g) - graph_perimeter(&ball)) / (t * t))
                })
                .collect::<Result<Vec<f64>>>()?;
            let norm = ball_perimeter(n, r)? * w12;
            (vals.clone(), vec![0.0; vals.len()], vals.iter().map(|v| v / norm).collect())
        };
        for ((&tt, &v), &e) in FUGLEDE_TS.iter().zip(&vals).zip(&errs) {
            t.tolerate(3.0 * e / v.abs());
            // positivity, as a fraction of the ratio's own size
            t.push(Witness::new("sign").input("r", r).input("t", tt).sides(v, 0.0, v.signum()))?;
            t.samples += 1;
        }
        let spread = relative_spread(&vals);
        t.push(
            Witness::new("spread")
                .input("r", r)
                .input("ratio_t_max", vals[0])
                .input("ratio_t_min", vals[vals.len() - 1])
                .input("normalized", normalized[normalized.len() - 1])
                .sides(spread, FUGLEDE_SPREAD, FUGLEDE_SPREAD - spread),
        )?;
    }
    Ok(t)
}

fn check_fuglede_nl(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    fuglede_check(params, b, true)
}

fn check_fuglede_perimeter(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    fuglede_check(params, b, false)
}

/// `[P(E) - P(B_r)] sinh^{n+1} r / asym(E)^2` for `E = (1 + t cos k theta) r` projected to `|B_r|`.
pub fn quantitative_ratio(n: usize, r: f64, k: usize, t: f64, grid: usize) -> Result<f64> {
    let m = ball_volume(n, r)?;
    let g = project_volume(&fourier_graph(n, grid, r, &[(k, t, 0.0)])?, m)?;
    let ball = RadialGraph::ball(g.grid(), g.mode(), r)?;
    let d = graph_perimeter(&g) - graph_perimeter(&ball);
    let a = asymmetry(&g)?;
    Ok(d * r.sinh().powi(n as i32 + 1) / (a * a))
}

pub const QUANT_MODES: [usize; 4] = [2, 3, 4, 5];
pub const QUANT_RADII: [f64; 3] = [0.3, 0.6, 1.0];
pub const QUANT_T: f64 = 0.05;

/// Minimum of [`quantitative_ratio`] over the mode family at one grid.
pub fn quantitative_minimum(n: usize, grid: usize) -> Result<(f64, f64, usize)> {
    let mut best = (f64::INFINITY, 0.0, 0);
    for &r in &QUANT_RADII {
        for &k in &QUANT_MODES {
            let q = quantitative_ratio(n, r, k, QUANT_T, grid)?;
            if q < best.0 {
                best = (q, r, k);
            }
        }
    }
    Ok(best)
}

/// Slacks: the family minimum itself (must be > 0) and `0.1 - relative change` under grid doubling.
fn check_quantitative_iso(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    let n = params.n();
    let base = if n == 2 { b.grid } else { b.grid / 2 };
    let coarse = quantitative_minimum(n, base)?;
    let fine = quantitative_minimum(n, 2 * base)?;
    let change = (fine.0 - coarse.0).abs() / fine.0.abs();
    let mut t = Tracker::new();
    t.samples = 2 * QUANT_MODES.len() * QUANT_RADII.len();
    t.push(Witness::new("minimum").input("r", fine.1).input("k", fine.2 as f64).input("grid", 2.0 * base as f64).sides(fine.0, 0.0, fine.0))?;
    t.push(Witness::new("refinement").input("coarse", coarse.0).input("fine", fine.0).sides(change, 0.1, 0.1 - change))?;
    Ok(t)
}

pub const BOUND_VOLUMES: [f64; 4] = [0.1, 1.0, 5.0, 20.0];

/// Relative slack of the packing energy below `c5 max{m, m^{(n-1)/n}}`.
fn check_c5_upper(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    let mut t = Tracker::new();
    for &m in &[0.1, 0.5, 1.0, 2.5, 5.0, 20.0] {
        let e = config_energy_at_infinity(params, &fhat_config(m)?, &b.quad)?;
        let ub = energy_upper_bound(params, m)?;
        t.tolerate(3.0 * e.error_estimate / ub);
        t.push(Witness::new("fhat").input("m", m).sides(e.total, ub, (ub - e.total) / ub))?;
        t.samples += 1;
    }
    Ok(t)
}

/// `F = F1 u F2` far apart with `|F2|` below the volume threshold. Slacks: the criterion's
/// two margins as fractions of `E(F2)`, and `[E(F) - (P(Phi F1) + gamma lambda^{2-2n} NL(F1))] / E(F)`.
fn check_nonoptimality(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    let n = params.n();
    let eps = paper_constants(params, 1.0)?.epsilon;
    let mut t = Tracker::new();
    for &m1 in &[0.5f64, 1.0, 5.0] {
        for &frac in &[0.9, 0.5, 0.1] {
            let m2 = frac * eps * m1.min(1.0);
            let e1 = ball_energy_for_volume(params, m1, &b.quad)?;
            let e2 = ball_energy_for_volume(params, m2, &b.quad)?;
            let ef = config_energy_at_infinity(params, &MultiBallConfig::new(vec![m1, m2], None)?, &b.quad)?;
            let dec = nonoptimality_check(params, &ef, &e1, &e2)?;
            let w = Witness::new("criterion").input("m1", m1).input("m2", m2).input("epsilon", eps);
            t.push(w.clone().sides(dec.sigma, 0.5 * e2.total, dec.sigma_margin / e2.total))?;
            t.push(w.clone().sides(m2, eps * m1.min(1.0), dec.volume_margin / (eps * m1.min(1.0))))?;
            let lam = (1.0 + m2 / m1).powf(-1.0 / (n as f64 - 1.0));
            let r1 = radius_for_volume(n, m1)?;
            let p_img = phi_ball_perimeter(n, r1, lam, b.quad.rel_tol)?;
            let nl_bound = lam.powf(2.0 - 2.0 * n as f64) * e1.nonlocal;
            let upper = p_img.value + params.gamma() * nl_bound;
            t.tolerate(3.0 * (ef.error_estimate + p_img.error + 2.0 * e1.error_estimate) / ef.total);
            t.push(w.input("lambda", lam).sides(ef.total, upper, (ef.total - upper) / ef.total))?;
            t.samples += 1;
        }
    }
    Ok(t)
}

/// Relative slack `1 - |F| / (c8 P^{(n-a)/(n+1-a)} NL^{1/(n+1-a)})`.
pub fn interpolation_slack(params: &Params, volume: f64, perimeter: f64, nonlocal: f64) -> Result<f64> {
    let nf = params.n() as f64;
    let a = params.alpha();
    let c8 = interpolation_constant(params.n(), a)?;
    let rhs = c8 * perimeter.powf((nf - a) / (nf + 1.0 - a)) * nonlocal.powf(1.0 / (nf + 1.0 - a));
    Ok(1.0 - volume / rhs)
}

/// Deterministic equal-volume family of radial graphs: radii cycle through {0.3, 0.6, 1},
/// up to three modes `k <= 6` with total amplitude `<= 0.2`.
pub fn extremality_family(n: usize, count: usize, grid: usize, seed: u64) -> Result<Vec<RadialGraph>> {
    let mut rng = chunk_rng(seed, 7);
    (0..count)
        .map(|i| {
            let r = [0.3, 0.6, 1.0][i % 3];
            let nm = 1 + i % 3;
            let total: f64 = rng.gen_range(0.02..0.2);
            let raw: Vec<(usize, f64, f64)> =
                (0..nm).map(|_| (rng.gen_range(1..=6), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let l1: f64 = raw.iter().map(|m| m.1.abs() + m.2.abs()).sum();
            let modes: Vec<_> = raw.iter().map(|&(k, a, b)| (k, total * a / l1, total * b / l1)).collect();
            project_volume(&fourier_graph(n, grid, r, &modes)?, ball_volume(n, r)?)
        })
        .collect()
}

const AUDIT_FAMILY: usize = 9;

fn check_interpolation(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    let n = params.n();
    let mut t = Tracker::new();
    let expo = 1.0 / (n as f64 + 1.0 - params.alpha());
    for m in crate::energy::log_grid(1e-3, 1e3, 20)? {
        let r = radius_for_volume(n, m)?;
        let nl = nl_ball(params, r, &b.quad)?;
        let s = interpolation_slack(params, m, ball_perimeter(n, r)?, nl.value)?;
        t.tolerate(3.0 * expo * nl.error / nl.value);
        t.push(Witness::new("ball").input("m", m).sides(m, m / (1.0 - s), s))?;
        t.samples += 1;
    }
    for (i, g) in extremality_family(n, AUDIT_FAMILY, graph_grid(n, b), b.seed)?.iter().enumerate() {
        let c = compare_with_ball(params, g, &b.quad)?;
        let s = interpolation_slack(params, c.volume, c.perimeter, c.nonlocal)?;
        t.push(Witness::new("graph").input("index", i as f64).sides(c.volume, c.volume / (1.0 - s), s))?;
        t.samples += 1;
    }
    Ok(t)
}

fn graph_grid(n: usize, b: &AuditBudget) -> usize {
    if n == 2 {
        b.grid
    } else {
        (b.grid / 4).max(8)
    }
}

/// Candidate energies at volume `m`: one ball, two halves far apart, the unit packing.
pub fn candidate_energies(params: &Params, m: f64, quad: &QuadratureSpec) -> Result<Vec<EnergyReport>> {
    Ok(vec![
        ball_energy_for_volume(params, m, quad)?,
        config_energy_at_infinity(params, &MultiBallConfig::new(vec![0.5 * m; 2], None)?, quad)?,
        config_energy_at_infinity(params, &fhat_config(m)?, quad)?,
    ])
}

fn check_energy_bounds(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    let mut t = Tracker::new();
    for &m in &BOUND_VOLUMES {
        let cands = candidate_energies(params, m, &b.quad)?;
        let best = cands.iter().min_by(|a, c| a.total.total_cmp(&c.total)).expect("three candidates");
        let lb = energy_lower_bound(params, m)?;
        let ub = energy_upper_bound(params, m)?;
        t.tolerate(3.0 * best.error_estimate / best.total);
        t.push(Witness::new("lower").input("m", m).sides(best.total, lb, (best.total - lb) / best.total))?;
        t.push(Witness::new("upper").input("m", m).sides(best.total, ub, (ub - best.total) / ub))?;
        t.samples += cands.len();
    }
    Ok(t)
}

/// On balls with `m >= 1`: `NL >= m^2 / (2r)^alpha` everywhere, and
/// `2r >= (gamma / c5)^{1/alpha} m^{1/alpha}` on those with `E(B) <= c5 m`.
fn check_diameter_lower(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    let n = params.n();
    let alpha = params.alpha();
    let pc = paper_constants(params, 1.0)?;
    let mut t = Tracker::new();
    let mut competitive = 0;
    for &m in &[1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0] {
        let e = ball_energy_for_volume(params, m, &b.quad)?;
        let diam: f64 = 2.0 * radius_for_volume(n, m)?;
        let chain = m * m / diam.powf(alpha);
        t.tolerate(3.0 * e.error_estimate / (params.gamma() * e.nonlocal).max(f64::MIN_POSITIVE));
        t.push(Witness::new("nl >= m^2/d^a").input("m", m).sides(e.nonlocal, chain, (e.nonlocal - chain) / e.nonlocal))?;
        t.samples += 1;
        if e.total <= pc.c5 * m {
            competitive += 1;
            let lb = pc.c5_prime * m.powf(1.0 / alpha);
            t.push(Witness::new("diameter").input("m", m).input("energy", e.total).sides(diam, lb, (diam - lb) / diam))?;
        }
    }
    if competitive == 0 {
        return Err(Error::Precondition("no ball with E <= c5 m on the volume grid".into()));
    }
    Ok(t)
}

/// `f_theta(A, B) = (sinh A sinh B)^{n-1} d^{-alpha}` and its partials in `A`, `B`.
fn kernel_with_partials(k: i32, alpha: f64, theta: f64, a: f64, b: f64) -> (f64, f64, f64) {
    let h = ((a - b) * 0.5).sinh();
    let (sa, sb) = (a.sinh(), b.sinh());
    let delta = 2.0 * h * h + 0.5 * sa * sb * theta * theta;
    let d = acosh1p(delta);
    let sinh_d = (delta * (2.0 + delta)).sqrt();
    let f = (sa * sb).powi(k) * d.powf(-alpha);
    let dd_da = ((a - b).sinh() + 0.5 * a.cosh() * sb * theta * theta) / sinh_d;
    let dd_db = (-(a - b).sinh() + 0.5 * sa * b.cosh() * theta * theta) / sinh_d;
    let fa = f * (k as f64 / a.tanh() - alpha * dd_da / d);
    let fb = f * (k as f64 / b.tanh() - alpha * dd_db / d);
    (f, fa, fb)
}

/// One draw of the derivative ratio with its central-difference cross-check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelDerivativeSample {
    pub theta: f64,
    pub r: f64,
    pub rho: f64,
    pub s: f64,
    pub tau: f64,
    pub ratio: f64,
    /// relative difference of the analytic and finite-difference derivatives
    pub fd_mismatch: f64,
}

fn lipschitz_u(x: &[f64]) -> f64 {
    // 0.5 T_3(x_1)
    let c = x[0];
    0.5 * (4.0 * c * c * c - 3.0 * c)
}

/// Draws `r in [1e-2, 1]`, `x` uniform, `y` at a log-uniform angle from `x`, `rho, s` between
/// `u(x), u(y)` and `tau in (0, 1)`, so that `|tau u| <= 1/2`.
pub fn kernel_derivative_samples(params: &Params, count: usize, seed: u64) -> Vec<KernelDerivativeSample> {
    let n = params.n();
    let k = n as i32 - 1;
    let alpha = params.alpha();
    let mut rng = chunk_rng(seed, 11);
    (0..count)
        .map(|_| {
            let r = 10f64.powf(rng.gen_range(-2.0..0.0));
            let x = random_direction(n, &mut rng);
            let mut v = random_direction(n, &mut rng);
            let dot: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
            for (vi, xi) in v.iter_mut().zip(&x) {
                *vi -= dot * xi;
            }
            let vn = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
            let psi = 10f64.powf(rng.gen_range(-4.0..PI.log10()));
            let y: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a * psi.cos() + b / vn * psi.sin()).collect();
            let theta = 2.0 * (0.5 * psi).sin();
            let (ux, uy) = (lipschitz_u(&x), lipschitz_u(&y));
            let rho = ux + (uy - ux) * rng.gen::<f64>();
            let s = ux + (uy - ux) * rng.gen::<f64>();
            let tau: f64 = rng.gen_range(1e-3..1.0);
            let (a, b) = (r * (1.0 + tau * rho), r * (1.0 + tau * s));
            let (_, fa, fb) = kernel_with_partials(k, alpha, theta, a, b);
            let d_tau = r * (rho * fa + s * fb);
            // the distance varies on the tau scale theta / |rho - s|
            let width = tau.min(1.0 - tau).min(theta / (rho - s).abs().max(1e-300));
            let hstep = 1e-3 * width;
            let at = |tt: f64| kernel_with_partials(k, alpha, theta, r * (1.0 + tt * rho), r * (1.0 + tt * s)).0;
            let fd = (8.0 * (at(tau + hstep) - at(tau - hstep)) - (at(tau + 2.0 * hstep) - at(tau - 2.0 * hstep)))
                / (12.0 * hstep);
            let base = kernel_with_partials(k, alpha, theta, r, r).0;
            let scale = d_tau.abs().max(1e-3 * (rho.abs() + s.abs()) * at(tau));
            KernelDerivativeSample { theta, r, rho, s, tau, ratio: d_tau.abs() / base, fd_mismatch: (d_tau - fd).abs() / scale }
        })
        .collect()
}

/// Slack `0.1 - drift` of the sample supremum from `pairs` to `2 pairs` draws.
fn check_kernel_derivative(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    let draws = kernel_derivative_samples(params, 2 * b.pairs, b.seed);
    if let Some(bad) = draws.iter().find(|d| !(d.fd_mismatch <= 1e-4) || !d.ratio.is_finite()) {
        return Err(Error::Precondition(format!("derivative routes disagree: {bad:?}")));
    }
    let sup = |ds: &[KernelDerivativeSample]| ds.iter().max_by(|a, c| a.ratio.total_cmp(&c.ratio)).copied().expect("samples");
    let half = sup(&draws[..b.pairs]);
    let full = sup(&draws);
    let drift = (full.ratio - half.ratio) / full.ratio;
    let mut t = Tracker::new();
    t.samples = draws.len();
    t.push(
        Witness::new("sup drift")
            .input("theta", full.theta)
            .input("r", full.r)
            .input("rho", full.rho)
            .input("s", full.s)
            .input("tau", full.tau)
            .input("sup_half", half.ratio)
            .sides(drift, 0.1, 0.1 - drift),
    )?;
    Ok(t)
}

/// Relative slacks `(P(E) - P(B)) / P(B)` and `(NL(B) - NL(E)) / NL(B)`.
fn check_ball_extremality(params: &Params, b: &AuditBudget) -> Result<Tracker> {
    let n = params.n();
    let mut t = Tracker::new();
    t.tolerate(1e-12);
    for (i, g) in extremality_family(n, AUDIT_FAMILY, graph_grid(n, b), b.seed)?.iter().enumerate() {
        let c = compare_with_ball(params, g, &b.quad)?;
        let pb = c.perimeter - c.perimeter_excess;
        let nb = c.nonlocal + c.nonlocal_deficit;
        t.push(Witness::new("perimeter").input("index", i as f64).input("r", c.radius).sides(c.perimeter, pb, c.perimeter_excess / pb))?;
        t.tolerate(3.0 * c.nonlocal_deficit_err / nb);
        t.push(Witness::new("nonlocal").input("index", i as f64).input("r", c.radius).sides(c.nonlocal, nb, c.nonlocal_deficit / nb))?;
        t.samples += 1;
    }
    Ok(t)
}
