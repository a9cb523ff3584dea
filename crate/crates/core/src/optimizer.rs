//! Volume-constrained descent of the energy over radial graphs.

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::EnergyReport;
use crate::error::{invalid, Error, Result};
use crate::geometry::{radius_for_volume, sinh_power_integral, Params};
use crate::graph::{graph_perimeter, graph_perimeter_gradient, graph_volume, graph_volume_gradient, inverse_helmholtz, RadialGraph};
use crate::kernel::{nl_graph_gradient, nl_graph_with_profile, BallProfile, QuadratureSpec};

/// Shifts all radii by one constant so that the graph has volume `m`.
pub fn project_volume(graph: &RadialGraph, m: f64) -> Result<RadialGraph> {
    let (c, _) = volume_shift(graph, m)?;
    if c == 0.0 {
        return Ok(graph.clone());
    }
    graph.with_values(graph.values().iter().map(|r| r + c).collect())
}

/// `(c, |R + c|)` with `|R + c| = m`.
fn volume_shift(graph: &RadialGraph, m: f64) -> Result<(f64, f64)> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(invalid("m", "target volume must be positive"));
    }
    let k = graph.dim() - 1;
    let w = graph.weights();
    let r = graph.values();
    let vol = |c: f64| -> f64 { w.iter().zip(r).map(|(w, &ri)| w * sinh_power_integral(k, ri + c)).sum() };
    let dvol = |c: f64| -> f64 { w.iter().zip(r).map(|(w, &ri)| w * (ri + c).sinh().powi(k as i32)).sum() };
    let v0 = vol(0.0);
    if (v0 - m).abs() <= 1e-13 * m {
        return Ok((0.0, v0));
    }
    let lo_limit = -graph.min_radius();
    if vol(lo_limit) >= m {
        return Err(Error::Precondition(format!("volume {m} needs a shift making the minimal radius nonpositive")));
    }
    let (mut lo, mut hi) = if v0 < m { (0.0, 1.0f64) } else { (lo_limit, 0.0) };
    if v0 < m {
        while vol(hi) < m {
            lo = hi;
            hi *= 2.0;
        }
    }
    let mut c = if v0 < m { 0.0 } else { 0.5 * lo };
    for _ in 0..200 {
        let g = vol(c) - m;
        if g.abs() <= 1e-14 * m {
            break;
        }
        if g > 0.0 {
            hi = c;
        } else {
            lo = c;
        }
        let d = dvol(c);
        let mut next = if d > 0.0 { c - g / d } else { 0.5 * (lo + hi) };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == c {
            break;
        }
        c = next;
    }
    let v = vol(c);
    if (v - m).abs() > 1e-10 * m {
        return Err(Error::RootNotFound(format!("volume projection stalled at {v} for target {m}")));
    }
    Ok((c, v))
}

/// The discretized energy on radial graphs, with a fixed ball profile so that
/// values and gradients are consistent.
#[derive(Clone, Debug)]
pub struct DiscreteEnergy {
    params: Params,
    quad: QuadratureSpec,
    profile: Option<BallProfile>,
}

impl DiscreteEnergy {
    /// Profile sized for `graph` with room for the radii to move.
    pub fn new(params: &Params, graph: &RadialGraph, quad: &QuadratureSpec) -> Result<Self> {
        quad.validate()?;
        if graph.dim() != params.n() {
            return Err(Error::DimensionMismatch { expected: params.n(), got: graph.dim() });
        }
        let profile = if params.gamma() == 0.0 { None } else { Some(BallProfile::for_graph(params, graph, quad, 0.05)?) };
        Ok(Self { params: params.clone(), quad: quad.clone(), profile })
    }

    pub fn covers(&self, graph: &RadialGraph) -> bool {
        self.profile.as_ref().is_none_or(|p| p.covers(graph.min_radius(), graph.max_radius()))
    }

    pub fn energy(&self, graph: &RadialGraph) -> Result<f64> {
        let p = graph_perimeter(graph);
        match &self.profile {
            None => Ok(p),
            Some(prof) => Ok(p + self.params.gamma() * nl_graph_with_profile(&self.params, graph, &self.quad, prof, false)?.value),
        }
    }

    /// Energy with the nonlocal error estimate.
    pub fn report(&self, graph: &RadialGraph) -> Result<EnergyReport> {
        let p = graph_perimeter(graph);
        let v = graph_volume(graph);
        match &self.profile {
            None => Ok(EnergyReport::from_parts(0.0, v, p, 0.0, 0.0)),
            Some(prof) => {
                let nl = nl_graph_with_profile(&self.params, graph, &self.quad, prof, true)?;
                Ok(EnergyReport::from_parts(self.params.gamma(), v, p, nl.value, nl.error))
            }
        }
    }

    /// Energy of the same-grid ball with radius `r`.
    pub fn ball_energy(&self, graph: &RadialGraph, r: f64) -> Result<f64> {
        self.energy(&RadialGraph::ball(graph.grid(), graph.mode(), r)?)
    }

    pub fn gradient(&self, graph: &RadialGraph) -> Result<Vec<f64>> {
        let mut g = graph_perimeter_gradient(graph);
        if let Some(prof) = &self.profile {
            let nl = nl_graph_gradient(&self.params, graph, &self.quad, prof)?;
            let gamma = self.params.gamma();
            for (a, b) in g.iter_mut().zip(nl) {
                *a += gamma * b;
            }
        }
        Ok(g)
    }

    /// Central differences of [`DiscreteEnergy::energy`] with step `h`.
    pub fn fd_gradient(&self, graph: &RadialGraph, h: f64) -> Result<Vec<f64>> {
        let base = graph.values().to_vec();
        (0..graph.len())
            .into_par_iter()
            .map(|i| {
                let mut v = base.clone();
                v[i] = base[i] + h;
                let up = self.energy(&graph.with_values(v.clone())?)?;
                v[i] = base[i] - h;
                let down = self.energy(&graph.with_values(v)?)?;
                Ok((up - down) / (2.0 * h))
            })
            .collect()
    }
}

/// Gradient of the discrete energy with respect to the node radii.
pub fn energy_gradient(params: &Params, graph: &RadialGraph, quad: &QuadratureSpec) -> Result<Vec<f64>> {
    DiscreteEnergy::new(params, graph, quad)?.gradient(graph)
}

/// Analytic and finite-difference gradients side by side.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `max_i |analytic_i - numeric_i| / |numeric_i|`
    pub max_rel_err: f64,
}

pub fn gradient_check(params: &Params, graph: &RadialGraph, quad: &QuadratureSpec, step: f64) -> Result<GradientCheck> {
    let de = DiscreteEnergy::new(params, graph, quad)?;
    let analytic = de.gradient(graph)?;
    let numeric = de.fd_gradient(graph, step)?;
    let max_rel_err = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(GradientCheck { analytic, numeric, max_rel_err })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GradientMode {
    Analytic,
    FiniteDifference,
}

/// Backtracking parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRule {
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_shrinks: usize,
}

impl Default for StepRule {
    fn default() -> Self {
        Self { initial_step: 1.0, shrink: 0.5, armijo: 1e-4, max_shrinks: 60 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizeOptions {
    pub max_iterations: usize,
    pub step_rule: StepRule,
    pub gradient_mode: GradientMode,
    /// Stop when the projected gradient norm falls below this fraction of the full gradient norm.
    pub grad_tol: f64,
    /// Stop when an accepted step lowers the energy by less than this relative amount.
    pub stall_tol: f64,
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_rule: StepRule::default(),
            gradient_mode: GradientMode::Analytic,
            grad_tol: 1e-9,
            stall_tol: 1e-14,
            fd_step: 1e-5,
            seed: 0,
        }
    }
}

impl OptimizeOptions {
    pub fn validate(&self) -> Result<()> {
        let s = &self.step_rule;
        if !(self.grad_tol > 0.0 && self.stall_tol > 0.0 && self.fd_step > 0.0 && s.initial_step > 0.0 && s.armijo > 0.0) {
            return Err(invalid("options", "thresholds and steps must be positive"));
        }
        if !(s.shrink > 0.0 && s.shrink < 1.0) {
            return Err(invalid("shrink", "must lie in (0, 1)"));
        }
        if s.max_shrinks == 0 {
            return Err(invalid("max_shrinks", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub energy: f64,
    pub grad_norm: f64,
    /// `|vol - m| / m`
    pub vol_drift: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Termination {
    GradientNorm,
    EnergyStall,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    pub final_graph: RadialGraph,
    pub trace: Vec<TraceRow>,
    pub termination: Termination,
    /// radius of the ball of volume `m`
    pub ball_radius: f64,
    pub ball_energy: f64,
    /// `(E(final) - E(ball)) / E(ball)` on the same grid
    pub ball_gap: f64,
    /// `max |R / r - 1|`
    pub sup_deviation: f64,
    /// [`asymmetry`] divided by the volume
    pub asymmetry: f64,
}

/// Tangent (volume-preserving to first order) part of the gradient and its norm.
struct Direction {
    step: Vec<f64>,
    grad_norm: f64,
    slope: f64,
}

fn descent_direction(graph: &RadialGraph, grad: &[f64], r_bar: f64) -> Direction {
    let w = graph.weights();
    let dv = graph_volume_gradient(graph);
    // L2 densities
    let g: Vec<f64> = grad.iter().zip(w).map(|(a, w)| a / w).collect();
    let nu: Vec<f64> = dv.iter().zip(w).map(|(a, w)| a / w).collect();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(w).map(|((x, y), w)| w * x * y).sum() };
    let lam = dot(&g, &nu) / dot(&nu, &nu);
    let tangent: Vec<f64> = g.iter().zip(&nu).map(|(a, b)| a - lam * b).collect();
    let full = dot(&g, &g).sqrt();
    let grad_norm = dot(&tangent, &tangent).sqrt() / full.max(f64::MIN_POSITIVE);
    // H1 Riesz representative, scaled by the perimeter curvature of the sphere of radius r_bar
    let scale = r_bar.sinh().powi(3 - graph.dim() as i32);
    let mut p: Vec<f64> = inverse_helmholtz(graph, &tangent).into_iter().map(|v| scale * v).collect();
    let shift = p.iter().zip(&dv).map(|(a, b)| a * b).sum::<f64>() / dv.iter().sum::<f64>();
    for v in p.iter_mut() {
        *v -= shift;
    }
    let slope = p.iter().zip(grad).map(|(a, b)| a * b).sum();
    Direction { step: p, grad_norm, slope }
}

/// Projected-gradient descent of the discrete energy at fixed volume `m`.
pub fn minimize(
    params: &Params,
    m: f64,
    init: &RadialGraph,
    opts: &OptimizeOptions,
    quad: &QuadratureSpec,
) -> Result<OptimizationResult> {
    opts.validate()?;
    let v_init = graph_volume(init);
    if !(m > 0.0) || (v_init - m).abs() > 0.1 * m {
        return Err(Error::Precondition(format!("initial volume {v_init} is not within 10% of {m}")));
    }
    let r_bar = radius_for_volume(params.n(), m)?;
    let mut graph = project_volume(init, m)?;
    let mut de = DiscreteEnergy::new(params, &graph, quad)?;
    let mut energy = de.energy(&graph)?;
    let mut trace = Vec::new();
    let mut energies = Vec::new();
    let mut termination = Termination::MaxIterations;
    for iteration in 0..=opts.max_iterations {
        let grad = match opts.gradient_mode {
            GradientMode::Analytic => de.gradient(&graph)?,
            GradientMode::FiniteDifference => de.fd_gradient(&graph, opts.fd_step)?,
        };
        let dir = descent_direction(&graph, &grad, r_bar);
        trace.push(TraceRow { iteration, energy, grad_norm: dir.grad_norm, vol_drift: (graph_volume(&graph) - m).abs() / m });
        energies.push(energy);
        if dir.grad_norm <= opts.grad_tol {
            termination = Termination::GradientNorm;
            break;
        }
        if iteration == opts.max_iterations {
            break;
        }
        let mut t = opts.step_rule.initial_step;
        let mut accepted = None;
        for _ in 0..opts.step_rule.max_shrinks {
            let vals: Vec<f64> = graph.values().iter().zip(&dir.step).map(|(r, p)| r - t * p).collect();
            if vals.iter().all(|&v| v > 0.0) {
                if let Ok(trial) = graph.with_values(vals).and_then(|g| project_volume(&g, m)) {
                    if de.covers(&trial) {
                        let e = de.energy(&trial)?;
                        if e <= energy - opts.step_rule.armijo * t * dir.slope {
                            accepted = Some((trial, e));
                            break;
                        }
                    }
                }
            }
            t *= opts.step_rule.shrink;
        }
        let Some((next, e_next)) = accepted else {
            // the predicted decrease is below rounding of the energy
            if opts.step_rule.initial_step * dir.slope <= 1e3 * f64::EPSILON * energy.abs() {
                termination = Termination::EnergyStall;
                break;
            }
            return Err(Error::LineSearchFailed { iteration, shrinks: opts.step_rule.max_shrinks, energies });
        };
        let decrease = energy - e_next;
        graph = next;
        energy = e_next;
        if !de.covers(&graph) {
            de = DiscreteEnergy::new(params, &graph, quad)?;
            energy = de.energy(&graph)?;
        }
        if decrease <= opts.stall_tol * energy.abs() {
            let grad = de.gradient(&graph)?;
            let dir = descent_direction(&graph, &grad, r_bar);
            trace.push(TraceRow {
                iteration: iteration + 1,
                energy,
                grad_norm: dir.grad_norm,
                vol_drift: (graph_volume(&graph) - m).abs() / m,
            });
            termination = Termination::EnergyStall;
            break;
        }
    }
    let ball_energy = de.ball_energy(&graph, r_bar)?;
    let sup_deviation = graph.values().iter().map(|r| (r / r_bar - 1.0).abs()).fold(0.0, f64::max);
    let asym = asymmetry(&graph)? / m;
    Ok(OptimizationResult {
        ball_gap: (energy - ball_energy) / ball_energy,
        final_graph: graph,
        trace,
        termination,
        ball_radius: r_bar,
        ball_energy,
        sup_deviation,
        asymmetry: asym,
    })
}

/// Distance from the graph center to the sphere of radius `r` centered at distance `s`
/// along a direction making angle `psi` with the query direction.
fn shifted_ball_radius(r: f64, s: f64, cos_psi: f64) -> f64 {
    if s == 0.0 {
        return r;
    }
    let (a, b, c) = (s.cosh(), s.sinh() * cos_psi, r.cosh());
    // (a - b) y^2 - 2 c y + (a + b) = 0 with y = e^t
    let disc = (c * c - (a * a - b * b)).max(0.0);
    ((c + disc.sqrt()) / (a - b)).ln()
}

/// `sum_i w_i |S(R_i) - S(rho_i)|` for the ball `B_r(x)` described by radii `rho`.
fn symmetric_difference(graph: &RadialGraph, r: f64, center_dir: &[f64], s: f64) -> f64 {
    let k = graph.dim() - 1;
    graph
        .weights()
        .iter()
        .zip(graph.values())
        .zip(graph.directions())
        .map(|((w, &ri), d)| {
            let cos_psi: f64 = d.iter().zip(center_dir).map(|(a, b)| a * b).sum();
            let rho = shifted_ball_radius(r, s, cos_psi);
            w * (sinh_power_integral(k, ri) - sinh_power_integral(k, rho)).abs()
        })
        .sum()
}

/// Number of shifted centers tried on each side of the concentric ball.
pub const ASYMMETRY_SHIFTS: usize = 16;

/// `min |E Delta B_r(x)|` over the concentric ball and balls shifted along the
/// volume-weighted barycenter direction, where `|B_r| = |E|`.
pub fn asymmetry(graph: &RadialGraph) -> Result<f64> {
    let k = graph.dim() - 1;
    let r = radius_for_volume(graph.dim(), graph_volume(graph))?;
    let concentric = symmetric_difference(graph, r, &vec![0.0; graph.dim()], 0.0);
    let mut bary = vec![0.0; graph.dim()];
    for ((w, &ri), d) in graph.weights().iter().zip(graph.values()).zip(graph.directions()) {
        let v = w * sinh_power_integral(k, ri);
        for (b, x) in bary.iter_mut().zip(d) {
            *b += v * x;
        }
    }
    let norm = bary.iter().map(|x| x * x).sum::<f64>().sqrt();
    let spread = graph.values().iter().map(|ri| (ri - r).abs()).fold(0.0, f64::max);
    if norm == 0.0 || spread == 0.0 {
        return Ok(concentric);
    }
    let dir: Vec<f64> = bary.iter().map(|x| x / norm).collect();
    let h = spread.min(0.9 * r) / ASYMMETRY_SHIFTS as f64;
    let mut best = concentric;
    for j in 1..=ASYMMETRY_SHIFTS {
        for sign in [1.0, -1.0] {
            best = best.min(symmetric_difference(graph, r, &dir, sign * h * j as f64));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ball_volume, HPoint};
    use crate::graph::{DerivMode, SphereGrid};
    use approx::assert_relative_eq;

    fn params(g: f64) -> Params {
        Params::with_zero_gamma(2, 1.0, g).unwrap()
    }

    #[test]
    fn projection_fixed_point_and_ball() {
        let b = RadialGraph::ball(&SphereGrid::Circle { n_theta: 32 }, DerivMode::Spectral, 0.7).unwrap();
        let m = graph_volume(&b);
        assert_eq!(project_volume(&b, m).unwrap(), b);
        let target = ball_volume(2, 0.9).unwrap();
        let p = project_volume(&b, target).unwrap();
        for &v in p.values() {
            assert!((v - 0.9).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_matches_bisection() {
        let g = RadialGraph::circle_from_fourier(64, 1.0, &[(3, 0.2, 0.0)]).unwrap();
        let m = ball_volume(2, 1.0).unwrap();
        let p = project_volume(&g, m).unwrap();
        assert!((graph_volume(&p) - m).abs() <= 1e-10 * m);
        let vol = |c: f64| graph_volume(&g.with_values(g.values().iter().map(|r| r + c).collect()).unwrap());
        let (mut lo, mut hi) = (-0.5, 0.5);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if vol(mid) < m {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((p.values()[0] - g.values()[0] - lo).abs() < 1e-12);
        assert!(matches!(project_volume(&g, 1e-6), Err(Error::Precondition(_))));
    }

    #[test]
    fn ball_gradient_is_constant() {
        let b = RadialGraph::ball(&SphereGrid::Circle { n_theta: 32 }, DerivMode::Spectral, 0.6).unwrap();
        let g = energy_gradient(&params(1.0), &b, &QuadratureSpec::default()).unwrap();
        for v in &g {
            assert!((v - g[0]).abs() <= 1e-8 * g[0].abs());
        }
    }

    #[test]
    fn zero_gamma_gradient_is_perimeter_gradient() {
        let g = RadialGraph::circle_from_fourier(32, 0.8, &[(2, 0.1, 0.0)]).unwrap();
        assert_eq!(energy_gradient(&params(0.0), &g, &QuadratureSpec::default()).unwrap(), graph_perimeter_gradient(&g));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = RadialGraph::circle_from_fourier(24, 1.0, &[(2, 0.1, 0.0)]).unwrap();
        let c = gradient_check(&params(1.0), &g, &QuadratureSpec::default(), 1e-5).unwrap();
        assert!(c.max_rel_err < 1e-4, "{}", c.max_rel_err);
    }

    #[test]
    fn ball_init_terminates_immediately() {
        let m = 0.3;
        let r = radius_for_volume(2, m).unwrap();
        let b = RadialGraph::ball(&SphereGrid::Circle { n_theta: 32 }, DerivMode::Spectral, r).unwrap();
        let res = minimize(&params(1.0), m, &b, &OptimizeOptions::default(), &QuadratureSpec::default()).unwrap();
        assert_eq!(res.trace.len(), 1);
        assert_eq!(res.termination, Termination::GradientNorm);
        assert!(res.ball_gap.abs() < 1e-12);
    }

    #[test]
    fn small_run_is_monotone_and_conserves_volume() {
        let m = 0.3;
        let r = radius_for_volume(2, m).unwrap();
        let init = RadialGraph::circle_from_fourier(32, r, &[(3, 0.1, 0.0)]).unwrap();
        let res = minimize(&params(1.0), m, &init, &OptimizeOptions::default(), &QuadratureSpec::default()).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1].energy <= w[0].energy);
        }
        for row in &res.trace {
            assert!(row.vol_drift <= 1e-9);
        }
        assert!(res.sup_deviation < 1e-3, "{}", res.sup_deviation);
    }

    #[test]
    fn rejects_far_initial_volume() {
        let init = RadialGraph::circle_from_fourier(16, 1.0, &[]).unwrap();
        let m = 2.0 * graph_volume(&init);
        assert!(matches!(
            minimize(&params(1.0), m, &init, &OptimizeOptions::default(), &QuadratureSpec::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn shifted_ball_radius_matches_distance() {
        // the boundary point at distance t along the query direction is at distance r from the center
        let (r, s) = (0.8, 0.3);
        for &psi in &[0.0, 0.7, 2.0, std::f64::consts::PI] {
            let t = shifted_ball_radius(r, s, f64::cos(psi));
            let c = HPoint::on_axis(2, 1.0).unwrap();
            let center = crate::geometry::polar_point(&c, s, &[0.0, 1.0]);
            let boundary = crate::geometry::polar_point(&c, t, &[psi.sin(), psi.cos()]);
            assert_relative_eq!(crate::geometry::distance(&center, &boundary).unwrap(), r, max_relative = 1e-10);
        }
    }

    #[test]
    fn asymmetry_orderings() {
        let r = 0.7;
        let b = RadialGraph::circle_from_fourier(64, r, &[]).unwrap();
        assert!(asymmetry(&b).unwrap() < 1e-10);
        let t = 0.05;
        let shifted = RadialGraph::circle_from_fourier(64, r, &[(1, t, 0.0)]).unwrap();
        let rr = radius_for_volume(2, graph_volume(&shifted)).unwrap();
        let conc = symmetric_difference(&shifted, rr, &[0.0, 0.0], 0.0);
        assert!(asymmetry(&shifted).unwrap() < 0.5 * conc);
        let sym = RadialGraph::circle_from_fourier(64, r, &[(2, t, 0.0)]).unwrap();
        let rs = radius_for_volume(2, graph_volume(&sym)).unwrap();
        assert_eq!(asymmetry(&sym).unwrap(), symmetric_difference(&sym, rs, &[0.0, 0.0], 0.0));
    }
}
