//! The interaction kernel and the nonlocal term
//! `NL_alpha(F) = int_F int_F d(x, y)^{-alpha} dx dy`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    distance, polar_point, radial_quantile, sample_ball_point, sinh_power_series, sphere_area, GeodesicBall, HPoint,
    Params,
};
use crate::graph::{graph_volume, RadialGraph, SphereGrid};
use crate::quadrature::{adaptive, gauss_legendre, Chebyshev, Estimate};
use crate::scalar::acosh1p;

/// Resolution of the deterministic and Monte Carlo integrators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureSpec {
    /// Gauss nodes per radial panel of the pair integrals.
    pub radial_order: usize,
    /// Gauss nodes per panel of the inner (near-diagonal) integrals.
    pub angular_order: usize,
    /// Minimum number of dyadic panels toward the diagonal `rho = s`.
    pub diagonal_levels: usize,
    pub mc_samples: usize,
    pub seed: u64,
    /// Relative tolerance of the adaptive ball integrals.
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            radial_order: 10,
            angular_order: 12,
            diagonal_levels: 2,
            mc_samples: 1_000_000,
            seed: 0,
            rel_tol: 1e-10,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.radial_order < 2 || self.angular_order < 2 {
            return Err(invalid("quad", "orders must be >= 2"));
        }
        if self.mc_samples < 1000 {
            return Err(invalid("quad", "mc_samples must be >= 1000"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-2) {
            return Err(invalid("quad", "rel_tol must lie in (0, 1e-2]"));
        }
        Ok(())
    }

    /// The same spec at roughly half the resolution.
    pub fn halved(&self) -> Self {
        Self {
            radial_order: (self.radial_order / 2).max(2),
            angular_order: (self.angular_order / 2).max(2),
            diagonal_levels: self.diagonal_levels.saturating_sub(1),
            rel_tol: (self.rel_tol * 1e3).min(1e-2),
            ..*self
        }
    }

    pub fn doubled(&self) -> Self {
        Self {
            radial_order: self.radial_order * 2,
            angular_order: self.angular_order * 2,
            diagonal_levels: self.diagonal_levels + 1,
            rel_tol: (self.rel_tol * 1e-2).max(1e-14),
            ..*self
        }
    }
}

/// Two points `rho x`, `s y` in geodesic polar coordinates with chord `theta = |x - y|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelPoint {
    pub theta: f64,
    pub rho: f64,
    pub s: f64,
}

impl KernelPoint {
    pub fn new(theta: f64, rho: f64, s: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&theta) {
            return Err(invalid("theta", format!("chord must lie in [0, 2], got {theta}")));
        }
        if !(rho >= 0.0 && s >= 0.0) {
            return Err(invalid("rho/s", "radii must be nonnegative"));
        }
        Ok(Self { theta, rho, s })
    }
}

#[inline]
fn chord_delta(theta: f64, rho: f64, s: f64) -> f64 {
    let h = ((rho - s) * 0.5).sinh();
    2.0 * h * h + 0.5 * rho.sinh() * s.sinh() * theta * theta
}

/// Geodesic distance between the polar points of `p` (hyperbolic law of cosines).
pub fn chord_distance(p: &KernelPoint) -> f64 {
    acosh1p(chord_delta(p.theta, p.rho, p.s))
}

#[inline]
fn f_theta(k: i32, alpha: f64, theta: f64, rho: f64, s: f64) -> f64 {
    let d = acosh1p(chord_delta(theta, rho, s));
    (rho.sinh() * s.sinh()).powi(k) * d.powf(-alpha)
}

/// `f_theta(rho, s) = sinh^{n-1} rho sinh^{n-1} s / d^alpha`.
pub fn kernel_f(p: &KernelPoint, params: &Params) -> Result<f64> {
    let d = chord_distance(p);
    if d == 0.0 {
        return Err(Error::SingularKernel);
    }
    let k = params.n() as i32 - 1;
    Ok((p.rho.sinh() * p.s.sinh()).powi(k) / d.powf(params.alpha()))
}

/// `G(R) = int_0^R sinh^{n-1} t t^{-alpha} dt`.
#[derive(Clone, Debug)]
pub(crate) struct RadialG {
    k: usize,
    alpha: f64,
    /// coefficients of t^{k + 2i} in sinh^k t
    coeffs: Vec<f64>,
    /// `G(G_SPLIT + j)` for `j = 0..=G_KNOTS`
    knots: Vec<f64>,
}

const G_SPLIT: f64 = 3.0;
const G_KNOTS: usize = 64;

impl RadialG {
    pub(crate) fn new(n: usize, alpha: f64) -> Self {
        let k = n - 1;
        let all = sinh_power_series::<f64>(k, 60);
        let coeffs: Vec<f64> = (0..=60).map(|i| all.get(k + 2 * i).copied().unwrap_or(0.0)).collect();
        let mut g = Self { k, alpha, coeffs, knots: Vec::with_capacity(G_KNOTS + 1) };
        let mut acc = g.series(G_SPLIT);
        g.knots.push(acc);
        for j in 0..G_KNOTS {
            let a = G_SPLIT + j as f64;
            acc += g.panel(a, a + 1.0);
            g.knots.push(acc);
        }
        g
    }

    fn series(&self, r: f64) -> f64 {
        let r2 = r * r;
        let e0 = self.k as f64 + 1.0 - self.alpha;
        let mut acc = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * r2 + c / (e0 + 2.0 * i as f64);
        }
        acc * r.powf(e0)
    }

    fn panel(&self, a: f64, b: f64) -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        gauss_legendre(16)
            .iter()
            .map(|&(x, w)| {
                let t = mid + half * x;
                half * w * t.sinh().powi(self.k as i32) * t.powf(-self.alpha)
            })
            .sum()
    }

    pub(crate) fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r <= G_SPLIT {
            return self.series(r);
        }
        let j = ((r - G_SPLIT).floor() as usize).min(G_KNOTS);
        let a = G_SPLIT + j as f64;
        let mut acc = self.knots[j];
        // beyond the table: unit panels, then the remainder
        let mut lo = a;
        while r - lo > 1.0 {
            acc += self.panel(lo, lo + 1.0);
            lo += 1.0;
        }
        if r > lo {
            acc += self.panel(lo, r);
        }
        acc
    }
}

/// Geodesic distance from a point at radius `rho` of `B_r` to the sphere `d B_r`
/// along a ray making angle `phi` with the outward radial direction.
#[inline]
fn exit_length(r: f64, rho: f64, phi: f64) -> f64 {
    let (a, sh) = (rho.cosh(), rho.sinh());
    let b = sh * phi.cos();
    let (s, c) = (0.5 * phi).sin_cos();
    // a -+ b without cancellation near phi = 0 and phi = pi
    let a_minus_b = (-rho).exp() + 2.0 * sh * s * s;
    let a_plus_b = (-rho).exp() + 2.0 * sh * c * c;
    let k = (a_minus_b * a_plus_b).sqrt();
    let ch = r.cosh();
    let d1 = 2.0 * ((r + rho) * 0.5).sinh() * ((r - rho) * 0.5).sinh();
    let num = d1.max(0.0) * (ch + a) + b * b;
    let delta = num / ((ch + k) * k);
    (acosh1p(delta) - 0.5 * (a_plus_b / a_minus_b).ln()).max(0.0)
}

/// `v(rho) = int_{B_r} d(x, y)^{-alpha} dy` for `|x| = rho <= r`, with its error estimate.
pub fn ball_potential(params: &Params, r: f64, rho: f64, rel_tol: f64) -> Estimate {
    let g = RadialG::new(params.n(), params.alpha());
    ball_potential_with(&g, params.n(), r, rho, rel_tol)
}

fn ball_potential_with(g: &RadialG, n: usize, r: f64, rho: f64, rel_tol: f64) -> Estimate {
    let sphere_k = sphere_area::<f64>(n - 1);
    if rho <= 0.0 {
        return Estimate { value: sphere_area::<f64>(n) * g.eval(r), error: 0.0 };
    }
    let m = n as i32 - 2;
    let (est, _) = adaptive(
        |phi: f64| {
            let w = if m == 0 { 1.0 } else { phi.sin().powi(m) };
            w * g.eval(exit_length(r, rho, phi))
        },
        0.0,
        PI,
        0.0,
        rel_tol,
        400,
    );
    Estimate { value: sphere_k * est.value, error: sphere_k * est.error }
}

/// `NL_alpha(B_r)` by nested adaptive quadrature of the ball potential.
pub fn nl_ball(params: &Params, r: f64, quad: &QuadratureSpec) -> Result<Estimate> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(invalid("r", format!("radius must be positive, got {r}")));
    }
    let n = params.n();
    let g = RadialG::new(n, params.alpha());
    let k = n as i32 - 1;
    let inner_tol = quad.rel_tol * 0.1;
    let mut worst_inner = 0.0f64;
    let (outer, ok) = adaptive(
        |rho: f64| {
            let v = ball_potential_with(&g, n, r, rho, inner_tol);
            if v.value > 0.0 {
                worst_inner = worst_inner.max(v.error / v.value);
            }
            rho.sinh().powi(k) * v.value
        },
        0.0,
        r,
        0.0,
        quad.rel_tol,
        400,
    );
    let omega = sphere_area::<f64>(n);
    let value = omega * outer.value;
    let error = omega * outer.error + worst_inner * value;
    if !ok {
        return Err(Error::QuadratureNonConvergence { value, previous: value - error });
    }
    Ok(Estimate { value, error })
}

/// `omega_{n-1} int_0^r sinh^{n-1} s / s^alpha ds`, the potential at the center of `B_r`.
pub fn v_ball_center(params: &Params, r: f64) -> Result<Estimate> {
    if !(r > 0.0) {
        return Err(invalid("r", "radius must be positive"));
    }
    let n = params.n();
    let (k, alpha) = (n as i32 - 1, params.alpha());
    let q = 1.0 / (n as f64 - alpha);
    // s = r w^q flattens the endpoint behaviour s^{n-1-alpha}
    let (est, ok) = adaptive(
        |w: f64| {
            if w <= 0.0 {
                return 0.0;
            }
            let s = r * w.powf(q);
            let sinc = s.sinh() / s;
            sinc.powi(k) * r.powf(n as f64 - alpha) * q
        },
        0.0,
        1.0,
        1e-13,
        1e-13,
        400,
    );
    let omega = sphere_area::<f64>(n);
    if !ok {
        return Err(Error::QuadratureNonConvergence { value: omega * est.value, previous: omega * (est.value - est.error) });
    }
    Ok(Estimate { value: omega * est.value, error: omega * est.error })
}

/// Explicit `L^infinity` bound `c_3(m_bar)` on `v_{F, alpha}` for `|F| <= m_bar`.
pub fn c3_bound(params: &Params, m_bar: f64) -> Result<f64> {
    if !(m_bar > 0.0) {
        return Err(invalid("m_bar", "must be positive"));
    }
    let nf = params.n() as f64;
    let alpha = params.alpha();
    let bn = params.b_n();
    let arg = bn.powf(-1.0 / nf) * m_bar.powf(1.0 / nf);
    Ok(nf * bn.powf(alpha / nf) / (nf - alpha) * arg.cosh().powf(nf - 1.0) * m_bar.powf((nf - alpha) / nf))
}

/// Chebyshev interpolant of `R -> NL_alpha(B_R)` on `[lo, hi]`.
#[derive(Clone, Debug)]
pub struct BallProfile {
    cheb: Chebyshev,
    error: f64,
}

const PROFILE_NODES: usize = 20;

impl BallProfile {
    pub fn build(params: &Params, lo: f64, hi: f64, quad: &QuadratureSpec) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) {
            return Err(invalid("profile", "need 0 < lo < hi"));
        }
        let nodes = Chebyshev::nodes(lo, hi, PROFILE_NODES);
        let evals: Vec<Result<Estimate>> = nodes.par_iter().map(|&r| nl_ball(params, r, quad)).collect();
        let mut vals = Vec::with_capacity(nodes.len());
        let mut err = 0.0f64;
        for e in evals {
            let e = e?;
            err = err.max(e.error);
            vals.push(e.value);
        }
        let cheb = Chebyshev::from_values(lo, hi, &vals);
        let error = err + cheb.tail();
        Ok(Self { cheb, error })
    }

    /// Profile covering the radii of `graph` with a relative margin.
    pub fn for_graph(params: &Params, graph: &RadialGraph, quad: &QuadratureSpec, margin: f64) -> Result<Self> {
        let (lo, hi) = (graph.min_radius(), graph.max_radius());
        let mid = 0.5 * (lo + hi);
        let half = (0.5 * (hi - lo)).max(margin * mid);
        Self::build(params, (mid - half * 1.5).max(mid * 0.05), mid + half * 1.5, quad)
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        let (a, b) = self.cheb.domain();
        lo >= a && hi <= b
    }
    pub fn value(&self, r: f64) -> f64 {
        self.cheb.eval(r)
    }
    pub fn deriv(&self, r: f64) -> f64 {
        self.cheb.deriv(r)
    }
    pub fn error(&self) -> f64 {
        self.error
    }
}

/// `int_0^len f_theta(rho0, rho0 + sign w) dw`, graded toward `w = 0`.
fn ray_integral(k: i32, alpha: f64, theta: f64, rho0: f64, sign: f64, len: f64, order: usize) -> f64 {
    if len <= 0.0 {
        return 0.0;
    }
    let c = (rho0.sinh() * theta).max(1e-300);
    let big_a = (len / c).asinh();
    let panels = (big_a / 3.0).ceil().max(1.0) as usize;
    let h = big_a / panels as f64;
    let rule = gauss_legendre(order);
    let mut acc = 0.0;
    for p in 0..panels {
        let (u0, u1) = (p as f64 * h, (p + 1) as f64 * h);
        let (mid, half) = (0.5 * (u0 + u1), 0.5 * (u1 - u0));
        for &(x, wt) in rule.iter() {
            let u = mid + half * x;
            let w = c * u.sinh();
            let jac = c * u.cosh();
            acc += wt * half * jac * f_theta(k, alpha, theta, rho0, rho0 + sign * w);
        }
    }
    acc
}

/// `Q(theta; a, b) = int_{[b,a]^2} f_theta`, the defect of the pair term relative to balls.
pub fn pair_defect(params: &Params, theta: f64, a: f64, b: f64, quad: &QuadratureSpec) -> f64 {
    let (a, b) = if a >= b { (a, b) } else { (b, a) };
    let h = a - b;
    if h == 0.0 {
        return 0.0;
    }
    let k = params.n() as i32 - 1;
    let alpha = params.alpha();
    let c = b.sinh() * theta;
    let need = if c > 0.0 { (h / c).log2().ceil() as i64 + 1 } else { 40 };
    let levels = need.clamp(quad.diagonal_levels as i64, 40) as usize;
    let rule = gauss_legendre(quad.radial_order);
    let mut acc = 0.0;
    let mut hi = a;
    for lvl in 0..=levels {
        let lo = if lvl == levels { b } else { b + h * 0.5f64.powi(lvl as i32 + 1) };
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for &(x, wt) in rule.iter() {
            let rho = mid + half * x;
            acc += wt * half * ray_integral(k, alpha, theta, rho, -1.0, rho - b, quad.angular_order);
        }
        hi = lo;
    }
    2.0 * acc
}

/// `(dQ/da, dQ/db)` for [`pair_defect`].
pub fn pair_defect_grad(params: &Params, theta: f64, a: f64, b: f64, quad: &QuadratureSpec) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let k = params.n() as i32 - 1;
    let alpha = params.alpha();
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    let h = hi - lo;
    let d_hi = 2.0 * ray_integral(k, alpha, theta, hi, -1.0, h, quad.angular_order.max(quad.radial_order));
    let d_lo = -2.0 * ray_integral(k, alpha, theta, lo, 1.0, h, quad.angular_order.max(quad.radial_order));
    if a > b {
        (d_hi, d_lo)
    } else {
        (d_lo, d_hi)
    }
}

fn chord(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn graph_dim_check(params: &Params, graph: &RadialGraph) -> Result<()> {
    if params.n() != graph.dim() {
        return Err(Error::DimensionMismatch { expected: params.n(), got: graph.dim() });
    }
    if !(2..=3).contains(&params.n()) {
        return Err(Error::UnsupportedDimension(params.n()));
    }
    Ok(())
}

/// `sum_{i<j} w_i w_j Q(theta_ij; R_i, R_j)`, summed in a fixed order.
fn pair_sum(params: &Params, graph: &RadialGraph, quad: &QuadratureSpec) -> f64 {
    let dirs = graph.directions();
    let w = graph.weights();
    let r = graph.values();
    let rows: Vec<f64> = (0..graph.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in i + 1..graph.len() {
                if r[i] != r[j] {
                    acc += w[j] * pair_defect(params, chord(&dirs[i], &dirs[j]), r[i], r[j], quad);
                }
            }
            w[i] * acc
        })
        .collect();
    rows.iter().sum()
}

/// `zeta(-beta)` for `beta > 0`, through the reflection formula and an Euler-Maclaurin tail for `zeta(1 + beta)`.
fn zeta_negative(beta: f64) -> f64 {
    let s = 1.0 + beta;
    let m: f64 = 20.0;
    let head: f64 = (1..20).map(|k| (k as f64).powf(-s)).sum();
    let tail = m.powf(1.0 - s) / (s - 1.0) + 0.5 * m.powf(-s) + s * m.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * m.powf(-s - 3.0) / 720.0
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * m.powf(-s - 5.0) / 30240.0;
    let z = head + tail;
    2f64.powf(-beta) * PI.powf(-beta - 1.0) * (-0.5 * PI * beta).sin() * statrs::function::gamma::gamma(s) * z
}

/// `c(p, sigma) = 2 sigma^2 int_0^p (p - t) (t^2 + sigma^2)^{-alpha/2} dt` and its partials in `p` and `sigma`.
fn diagonal_coefficient(alpha: f64, p: f64, sigma: f64) -> (f64, f64, f64) {
    if p == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let panels = (p / sigma).ceil().clamp(1.0, 64.0) as usize;
    let rule = gauss_legendre(8);
    let h = p / panels as f64;
    let s2 = sigma * sigma;
    let (mut c, mut cp, mut cs) = (0.0, 0.0, 0.0);
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * h;
        for &(x, w) in rule.iter() {
            let t = mid + 0.5 * h * x;
            let g = (t * t + s2).powf(-0.5 * alpha);
            let wt = 0.5 * h * w;
            c += wt * (p - t) * g;
            cp += wt * g;
            cs += wt * (p - t) * (2.0 * sigma * g - alpha * sigma * s2 * g / (t * t + s2));
        }
    }
    (2.0 * s2 * c, 2.0 * s2 * cp, 2.0 * cs)
}

/// Leading trapezoid error of [`pair_sum`] on the circle.
///
/// Near the diagonal `Q(theta; R(x), R(x + theta)) ~ c |theta|^{2-alpha}` with
/// `c = c(|R'|, sinh R)` from [`diagonal_coefficient`], and the punctured trapezoid
/// rule overshoots `int |theta|^b` by `2 zeta(-b) h^{1+b}`. Returns
/// `k = zeta(alpha - 2) h^{3-alpha}`, `R'` and the coefficients with their partials,
/// so that the corrected pair sum is `pairs - k sum_i w_i c_i`. `None` on the sphere.
fn diagonal_terms(params: &Params, graph: &RadialGraph) -> Option<(f64, Vec<f64>, Vec<(f64, f64, f64)>)> {
    let SphereGrid::Circle { n_theta } = *graph.grid() else { return None };
    let alpha = params.alpha();
    let h = 2.0 * PI / n_theta as f64;
    let k = zeta_negative(2.0 - alpha) * h.powf(3.0 - alpha);
    let dr = graph.tangential_derivatives().swap_remove(0);
    let c = dr.iter().zip(graph.values()).map(|(d, r)| diagonal_coefficient(alpha, d.abs(), r.sinh())).collect();
    Some((k, dr, c))
}

fn diagonal_correction(params: &Params, graph: &RadialGraph) -> f64 {
    diagonal_terms(params, graph).map_or(0.0, |(k, _, c)| k * c.iter().zip(graph.weights()).map(|(c, w)| c.0 * w).sum::<f64>())
}

/// Gradient of [`diagonal_correction`].
fn diagonal_correction_gradient(params: &Params, graph: &RadialGraph) -> Option<Vec<f64>> {
    let (k, dr, c) = diagonal_terms(params, graph)?;
    let w = graph.weights();
    let r = graph.values();
    let u: Vec<f64> = (0..graph.len()).map(|i| w[i] * c[i].1 * dr[i].signum()).collect();
    let through_deriv = graph.derivatives_transpose(&[u]);
    Some((0..graph.len()).map(|i| k * (through_deriv[i] + w[i] * c[i].2 * r[i].cosh())).collect())
}

/// `NL_alpha` of a radial graph given a precomputed ball profile.
///
/// Uses `NL(E) = (1/omega) sum_i w_i NL(B_{R_i}) - sum_{i<j} w_i w_j Q(theta_ij; R_i, R_j)`,
/// with the pair sum corrected for its diagonal singularity on the circle.
/// With `with_error`, the error estimate adds the change of the pair sum at half
/// quadrature resolution and the change of the whole value on the half-resolution grid.
pub fn nl_graph_with_profile(
    params: &Params,
    graph: &RadialGraph,
    quad: &QuadratureSpec,
    profile: &BallProfile,
    with_error: bool,
) -> Result<Estimate> {
    graph_dim_check(params, graph)?;
    if !profile.covers(graph.min_radius(), graph.max_radius()) {
        return Err(Error::Precondition("ball profile does not cover the graph radii".into()));
    }
    let omega = sphere_area::<f64>(graph.dim());
    let diag: f64 = graph.weights().iter().zip(graph.values()).map(|(w, &r)| w * profile.value(r)).sum::<f64>() / omega;
    let raw = pair_sum(params, graph, quad);
    let correction = diagonal_correction(params, graph);
    let pairs = raw - correction;
    let mut error = profile.error();
    let value = diag - pairs;
    if with_error && raw != 0.0 {
        let coarse = pair_sum(params, graph, &quad.halved());
        error += (raw - coarse).abs();
        // grid error, from the same surface at half resolution
        error += match graph.coarsened().filter(|g| profile.covers(g.min_radius(), g.max_radius())) {
            Some(g) => (value - nl_graph_with_profile(params, &g, quad, profile, false)?.value).abs(),
            None => correction.abs().max(1e-8 * value.abs()),
        };
    }
    Ok(Estimate { value, error: error + 1e-14 * value.abs() })
}

/// `NL_alpha` of a radial graph (n = 2 or 3).
pub fn nl_radial_graph(params: &Params, graph: &RadialGraph, quad: &QuadratureSpec) -> Result<Estimate> {
    graph_dim_check(params, graph)?;
    let profile = BallProfile::for_graph(params, graph, quad, 0.02)?;
    nl_graph_with_profile(params, graph, quad, &profile, true)
}

/// Gradient of [`nl_graph_with_profile`] with respect to the node values.
pub fn nl_graph_gradient(
    params: &Params,
    graph: &RadialGraph,
    quad: &QuadratureSpec,
    profile: &BallProfile,
) -> Result<Vec<f64>> {
    graph_dim_check(params, graph)?;
    let omega = sphere_area::<f64>(graph.dim());
    let dirs = graph.directions();
    let w = graph.weights();
    let r = graph.values();
    let n = graph.len();
    let grads: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                if j != i && r[i] != r[j] {
                    let (da, _) = pair_defect_grad(params, chord(&dirs[i], &dirs[j]), r[i], r[j], quad);
                    acc += w[j] * da;
                }
            }
            w[i] * (profile.deriv(r[i]) / omega - acc)
        })
        .collect();
    match diagonal_correction_gradient(params, graph) {
        Some(dc) => Ok(grads.iter().zip(dc).map(|(g, d)| g + d).collect()),
        None => Ok(grads),
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Set handed to the Monte Carlo oracle.
#[derive(Clone, Copy, Debug)]
pub enum Shape<'a> {
    Ball(&'a GeodesicBall),
    Graph(&'a RadialGraph),
}

const CHUNK: usize = 1 << 14;

/// Per-chunk RNG streams of a seed; results do not depend on scheduling.
pub(crate) fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64 + 1);
    rng
}

/// Mean and variance accumulated per chunk and merged in chunk order.
pub(crate) fn chunked_mean<F>(samples: usize, seed: u64, draw: F) -> (f64, f64)
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<(usize, f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let count = CHUNK.min(samples - c * CHUNK);
            let (mut mean, mut m2) = (0.0, 0.0);
            for i in 0..count {
                let x = draw(&mut rng);
                let d = x - mean;
                mean += d / (i + 1) as f64;
                m2 += d * (x - mean);
            }
            (count, mean, m2)
        })
        .collect();
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    for (cn, cm, cm2) in parts {
        let tot = n + cn;
        let d = cm - mean;
        mean += d * cn as f64 / tot as f64;
        m2 += cm2 + d * d * (n as f64) * (cn as f64) / tot as f64;
        n = tot;
    }
    (mean, m2 / (n as f64 - 1.0).max(1.0))
}

/// Draws uniform points of a radial graph by rejection from its bounding ball.
pub(crate) struct GraphSampler<'a> {
    graph: &'a RadialGraph,
    center: HPoint,
    r_max: f64,
    fourier: Option<(f64, Vec<(f64, f64)>)>,
    harmonics: Option<crate::graph::Harmonics>,
}

impl<'a> GraphSampler<'a> {
    pub(crate) fn new(graph: &'a RadialGraph) -> Self {
        let center = HPoint::on_axis(graph.dim(), 1.0).unwrap();
        let (fourier, harmonics) = match *graph.grid() {
            SphereGrid::Circle { n_theta } => {
                let v = graph.values();
                let m_max = n_theta / 2;
                let mean = v.iter().sum::<f64>() / n_theta as f64;
                let coeffs = (1..=m_max)
                    .map(|m| {
                        let fac = if 2 * m == n_theta { 1.0 } else { 2.0 } / n_theta as f64;
                        let (mut a, mut b) = (0.0, 0.0);
                        for (k, &x) in v.iter().enumerate() {
                            let t = 2.0 * PI * (m * k) as f64 / n_theta as f64;
                            a += x * t.cos();
                            b += x * t.sin();
                        }
                        let b = if 2 * m == n_theta { 0.0 } else { b };
                        (fac * a, fac * b)
                    })
                    .collect();
                (Some((mean, coeffs)), None)
            }
            SphereGrid::Sphere { .. } => (None, Some(graph.harmonics())),
        };
        // interpolant may exceed the largest node value slightly
        let r_max = graph.max_radius() * 1.05 + 1e-9;
        Self { graph, center, r_max, fourier, harmonics }
    }

    fn radius(&self, dir: &[f64]) -> f64 {
        if let Some((mean, coeffs)) = &self.fourier {
            let (c1, s1) = (dir[0], dir[1]);
            let norm = (c1 * c1 + s1 * s1).sqrt();
            let (c1, s1) = (c1 / norm, s1 / norm);
            let (mut c, mut s) = (1.0, 0.0);
            let mut acc = *mean;
            for &(a, b) in coeffs {
                let nc = c * c1 - s * s1;
                s = s * c1 + c * s1;
                c = nc;
                acc += a * c + b * s;
            }
            acc
        } else {
            let h = self.harmonics.as_ref().unwrap();
            h.eval(dir[2].clamp(-1.0, 1.0), dir[1].atan2(dir[0]))
        }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HPoint {
        let n = self.graph.dim();
        loop {
            let u: f64 = rng.gen();
            let rho = radial_quantile(n, self.r_max, u);
            let dir = crate::geometry::random_direction(n, rng);
            if rho <= self.radius(&dir) {
                return polar_point(&self.center, rho, &dir);
            }
        }
    }
}

/// `vol(F)^2 E[d(X, Y)^{-alpha}]` over independent uniform pairs in `F`.
pub fn nl_monte_carlo(params: &Params, shape: Shape<'_>, samples: usize, seed: u64) -> Result<McEstimate> {
    if samples < 1000 {
        return Err(invalid("samples", "need at least 1000 samples"));
    }
    let alpha = params.alpha();
    let (mean, var, vol) = match shape {
        Shape::Ball(ball) => {
            if ball.dim() != params.n() {
                return Err(Error::DimensionMismatch { expected: params.n(), got: ball.dim() });
            }
            let (m, v) = chunked_mean(samples, seed, |rng| {
                let x = sample_ball_point(ball, rng);
                let y = sample_ball_point(ball, rng);
                distance(&x, &y).unwrap().powf(-alpha)
            });
            (m, v, ball.volume())
        }
        Shape::Graph(graph) => {
            graph_dim_check(params, graph)?;
            let sampler = GraphSampler::new(graph);
            let (m, v) = chunked_mean(samples, seed, |rng| {
                let x = sampler.sample(rng);
                let y = sampler.sample(rng);
                distance(&x, &y).unwrap().powf(-alpha)
            });
            (m, v, graph_volume(graph))
        }
    };
    let scale = vol * vol;
    Ok(McEstimate { estimate: scale * mean, stderr: scale * (var / samples as f64).sqrt(), samples })
}

/// `int_{B_1} int_{B_2} d^{-alpha}` for two geodesic balls, by independent sampling.
pub fn cross_monte_carlo(params: &Params, b1: &GeodesicBall, b2: &GeodesicBall, samples: usize, seed: u64) -> McEstimate {
    let alpha = params.alpha();
    let (m, v) = chunked_mean(samples, seed, |rng| {
        let x = sample_ball_point(b1, rng);
        let y = sample_ball_point(b2, rng);
        distance(&x, &y).unwrap().powf(-alpha)
    });
    let scale = b1.volume() * b2.volume();
    McEstimate { estimate: scale * m, stderr: scale * (v / samples as f64).sqrt(), samples }
}

/// Euclidean `int_B int_B |x - y|^{-alpha}` over the unit ball of `R^n`, by Monte Carlo.
pub fn euclidean_nl_unit_ball(n: usize, alpha: f64, samples: usize, seed: u64) -> McEstimate {
    let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rad = rng.gen::<f64>().powf(1.0 / n as f64);
        v.into_iter().map(|x| x / norm * rad).collect()
    };
    let (m, v) = chunked_mean(samples, seed, |rng| {
        let x = point(rng);
        let y = point(rng);
        chord(&x, &y).powf(-alpha)
    });
    let bn: f64 = crate::geometry::unit_ball_volume(n);
    McEstimate { estimate: bn * bn * m, stderr: bn * bn * (v / samples as f64).sqrt(), samples }
}
