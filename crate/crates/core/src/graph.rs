//! Star-shaped sets `{ exp_o(t x) : x in S^{n-1}, 0 <= t < R(x) }` about the
//! point `o = e_n`, sampled on a quadrature grid of the unit sphere.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geometry::sinh_power_integral;
use crate::quadrature::gauss_legendre;

/// How tangential derivatives of `R` are taken on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DerivMode {
    /// Trigonometric interpolation (n = 2) or spherical harmonics (n = 3).
    Spectral,
    /// Centered finite differences.
    FiniteDifference,
}

/// Angular node set on `S^{n-1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SphereGrid {
    /// `n_theta` equispaced angles on the circle.
    Circle { n_theta: usize },
    /// Gauss-Legendre colatitudes times equispaced longitudes.
    Sphere { n_colat: usize, n_lon: usize },
}

#[derive(Debug)]
struct GridData {
    grid: SphereGrid,
    dirs: Vec<Vec<f64>>,
    /// (theta) for circles, (colatitude, longitude) for spheres
    angles: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// colatitude cosines and Gauss weights (sphere only)
    colat_x: Vec<f64>,
    colat_w: Vec<f64>,
    ops: Vec<DerivOp>,
    mode: DerivMode,
}

/// Linear map on grid values, circulant in the longitude index:
/// `(D R)[i, k] = sum_{j, k'} ker[i][j][(k - k') mod n_lon] R[j, k']`.
#[derive(Debug, Clone)]
struct DerivOp {
    rings: usize,
    per_ring: usize,
    ker: Vec<f64>,
}

impl DerivOp {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let (nr, nl) = (self.rings, self.per_ring);
        let mut out = vec![0.0; v.len()];
        for i in 0..nr {
            for j in 0..nr {
                let base = (i * nr + j) * nl;
                let row = &self.ker[base..base + nl];
                if row.iter().all(|&c| c == 0.0) {
                    continue;
                }
                for k in 0..nl {
                    let mut acc = 0.0;
                    for kp in 0..nl {
                        acc += row[(k + nl - kp) % nl] * v[j * nl + kp];
                    }
                    out[i * nl + k] += acc;
                }
            }
        }
        out
    }

    fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        let (nr, nl) = (self.rings, self.per_ring);
        let mut out = vec![0.0; u.len()];
        for i in 0..nr {
            for j in 0..nr {
                let base = (i * nr + j) * nl;
                let row = &self.ker[base..base + nl];
                if row.iter().all(|&c| c == 0.0) {
                    continue;
                }
                for kp in 0..nl {
                    let mut acc = 0.0;
                    for k in 0..nl {
                        acc += row[(k + nl - kp) % nl] * u[i * nl + k];
                    }
                    out[j * nl + kp] += acc;
                }
            }
        }
        out
    }
}

/// Circulant kernel of the spectral derivative on `n` equispaced points
/// (Nyquist mode dropped).
fn spectral_diff_kernel(n: usize) -> Vec<f64> {
    let m_max = (n - 1) / 2;
    (0..n)
        .map(|d| {
            let x = 2.0 * PI * d as f64 / n as f64;
            -2.0 / n as f64 * (1..=m_max).map(|m| m as f64 * (m as f64 * x).sin()).sum::<f64>()
        })
        .collect()
}

fn fd_diff_kernel(n: usize) -> Vec<f64> {
    let h = 2.0 * PI / n as f64;
    let mut k = vec![0.0; n];
    k[n - 1] += 1.0 / (2.0 * h);
    k[1] -= 1.0 / (2.0 * h);
    k
}

/// Orthonormal associated Legendre functions `p_lm(x)` for `l = m..=l_max`
/// (`int_{-1}^{1} p_lm^2 dx = 1`, no Condon-Shortley phase).
pub(crate) fn legendre_column(m: usize, l_max: usize, x: f64) -> Vec<f64> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = (0.5f64).sqrt();
    for k in 1..=m {
        pmm *= ((2 * k + 1) as f64 / (2 * k) as f64).sqrt() * s;
    }
    let mut out = Vec::with_capacity(l_max + 1 - m);
    if l_max < m {
        return out;
    }
    out.push(pmm);
    if l_max == m {
        return out;
    }
    let mut p1 = ((2 * m + 3) as f64).sqrt() * x * pmm;
    out.push(p1);
    let mut p0 = pmm;
    for l in m + 2..=l_max {
        let (lf, mf) = (l as f64, m as f64);
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
        let p = a * (x * p1 - b * p0);
        p0 = p1;
        p1 = p;
        out.push(p);
    }
    out
}

/// `d p_lm / d phi` at `x = cos phi` from the column of [`legendre_column`].
pub(crate) fn legendre_dphi(m: usize, col: &[f64], x: f64) -> Vec<f64> {
    let s = (1.0 - x * x).sqrt();
    col.iter()
        .enumerate()
        .map(|(idx, &p)| {
            let l = m + idx;
            let prev = if idx == 0 { 0.0 } else { col[idx - 1] };
            let (lf, mf) = (l as f64, m as f64);
            let c = if l == 0 { 0.0 } else { ((2.0 * lf + 1.0) / (2.0 * lf - 1.0) * (lf - mf) * (lf + mf)).sqrt() };
            (lf * x * p - c * prev) / s
        })
        .collect()
}

impl GridData {
    fn circle(n_theta: usize, mode: DerivMode) -> Self {
        let h = 2.0 * PI / n_theta as f64;
        let angles: Vec<Vec<f64>> = (0..n_theta).map(|k| vec![k as f64 * h]).collect();
        let dirs = angles.iter().map(|a| vec![a[0].cos(), a[0].sin()]).collect();
        let ker = match mode {
            DerivMode::Spectral => spectral_diff_kernel(n_theta),
            DerivMode::FiniteDifference => fd_diff_kernel(n_theta),
        };
        Self {
            grid: SphereGrid::Circle { n_theta },
            dirs,
            angles,
            weights: vec![h; n_theta],
            colat_x: vec![],
            colat_w: vec![],
            ops: vec![DerivOp { rings: 1, per_ring: n_theta, ker }],
            mode,
        }
    }

    fn sphere(n_colat: usize, n_lon: usize, mode: DerivMode) -> Self {
        // colatitudes ordered from the north pole
        let gl: Vec<(f64, f64)> = gauss_legendre(n_colat).iter().rev().copied().collect();
        let colat_x: Vec<f64> = gl.iter().map(|p| p.0).collect();
        let colat_w: Vec<f64> = gl.iter().map(|p| p.1).collect();
        let hl = 2.0 * PI / n_lon as f64;
        let mut dirs = Vec::new();
        let mut angles = Vec::new();
        let mut weights = Vec::new();
        for (i, &x) in colat_x.iter().enumerate() {
            let phi = x.acos();
            let s = phi.sin();
            for k in 0..n_lon {
                let lam = k as f64 * hl;
                dirs.push(vec![s * lam.cos(), s * lam.sin(), x]);
                angles.push(vec![phi, lam]);
                weights.push(colat_w[i] * hl);
            }
        }
        let ops = match mode {
            DerivMode::Spectral => sphere_spectral_ops(&colat_x, &colat_w, n_lon),
            DerivMode::FiniteDifference => sphere_fd_ops(&colat_x, n_lon),
        };
        Self {
            grid: SphereGrid::Sphere { n_colat, n_lon },
            dirs,
            angles,
            weights,
            colat_x,
            colat_w,
            ops,
            mode,
        }
    }
}

fn sphere_spectral_ops(x: &[f64], w: &[f64], n_lon: usize) -> Vec<DerivOp> {
    let nr = x.len();
    let l_max = nr - 1;
    let m_max = l_max.min((n_lon - 1) / 2);
    let cols: Vec<Vec<Vec<f64>>> = (0..=m_max)
        .map(|m| x.iter().map(|&xi| legendre_column(m, l_max, xi)).collect())
        .collect();
    let mut ker_phi = vec![0.0; nr * nr * n_lon];
    for m in 0..=m_max {
        // D_m[i][j] = sum_l dp_lm(x_i) p_lm(x_j) w_j
        let dcols: Vec<Vec<f64>> = (0..nr).map(|i| legendre_dphi(m, &cols[m][i], x[i])).collect();
        for i in 0..nr {
            for j in 0..nr {
                let dm: f64 = dcols[i].iter().zip(&cols[m][j]).map(|(a, b)| a * b).sum::<f64>() * w[j];
                let fac = if m == 0 { 1.0 } else { 2.0 } / n_lon as f64;
                for d in 0..n_lon {
                    let ang = 2.0 * PI * (m * d) as f64 / n_lon as f64;
                    ker_phi[(i * nr + j) * n_lon + d] += fac * dm * ang.cos();
                }
            }
        }
    }
    let e = spectral_diff_kernel(n_lon);
    let mut ker_lam = vec![0.0; nr * nr * n_lon];
    for i in 0..nr {
        let s = (1.0 - x[i] * x[i]).sqrt();
        for d in 0..n_lon {
            ker_lam[(i * nr + i) * n_lon + d] = e[d] / s;
        }
    }
    vec![
        DerivOp { rings: nr, per_ring: n_lon, ker: ker_phi },
        DerivOp { rings: nr, per_ring: n_lon, ker: ker_lam },
    ]
}

fn sphere_fd_ops(x: &[f64], n_lon: usize) -> Vec<DerivOp> {
    assert!(n_lon % 2 == 0, "finite differences across the pole need an even longitude count");
    let nr = x.len();
    let phi: Vec<f64> = x.iter().map(|v| v.acos()).collect();
    let half = n_lon / 2;
    let mut ker_phi = vec![0.0; nr * nr * n_lon];
    for i in 0..nr {
        // neighbours: (ring, longitude shift away from k, colatitude as seen from ring i)
        let prev = if i == 0 { (0, half, -phi[0]) } else { (i - 1, 0, phi[i - 1]) };
        let next = if i + 1 == nr { (nr - 1, half, 2.0 * PI - phi[nr - 1]) } else { (i + 1, 0, phi[i + 1]) };
        let h1 = phi[i] - prev.2;
        let h2 = next.2 - phi[i];
        let cm = -h2 / (h1 * (h1 + h2));
        let c0 = (h2 - h1) / (h1 * h2);
        let cp = h1 / (h2 * (h1 + h2));
        // value at longitude k + shift enters with circulant index (k - k') = -shift
        let put = |ker: &mut Vec<f64>, j: usize, shift: usize, c: f64| {
            let d = (n_lon - shift % n_lon) % n_lon;
            ker[(i * nr + j) * n_lon + d] += c;
        };
        put(&mut ker_phi, prev.0, prev.1, cm);
        put(&mut ker_phi, i, 0, c0);
        put(&mut ker_phi, next.0, next.1, cp);
    }
    let e = fd_diff_kernel(n_lon);
    let mut ker_lam = vec![0.0; nr * nr * n_lon];
    for i in 0..nr {
        let s = phi[i].sin();
        for d in 0..n_lon {
            ker_lam[(i * nr + i) * n_lon + d] = e[d] / s;
        }
    }
    vec![
        DerivOp { rings: nr, per_ring: n_lon, ker: ker_phi },
        DerivOp { rings: nr, per_ring: n_lon, ker: ker_lam },
    ]
}

/// Radius function on a sphere grid. Grid data is shared between graphs
/// produced by [`RadialGraph::with_values`].
#[derive(Clone, Debug)]
pub struct RadialGraph {
    grid: Arc<GridData>,
    values: Vec<f64>,
}

impl PartialEq for RadialGraph {
    fn eq(&self, other: &Self) -> bool {
        self.grid.grid == other.grid.grid && self.grid.mode == other.grid.mode && self.values == other.values
    }
}

impl RadialGraph {
    fn checked(grid: Arc<GridData>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.weights.len() {
            return Err(Error::DimensionMismatch { expected: grid.weights.len(), got: values.len() });
        }
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(invalid("values", "radius function must be positive and finite"));
        }
        Ok(Self { grid, values })
    }

    /// Graph over `n_theta` equispaced angles of the circle (n = 2).
    pub fn circle(values: Vec<f64>, mode: DerivMode) -> Result<Self> {
        if values.len() < 4 {
            return Err(invalid("values", "need at least 4 nodes"));
        }
        Self::checked(Arc::new(GridData::circle(values.len(), mode)), values)
    }

    /// Circle graph sampled from `r(theta)`.
    pub fn circle_from_fn<F: Fn(f64) -> f64>(n_theta: usize, mode: DerivMode, r: F) -> Result<Self> {
        let h = 2.0 * PI / n_theta as f64;
        Self::circle((0..n_theta).map(|k| r(k as f64 * h)).collect(), mode)
    }

    /// Circle graph synthesized from a Fourier series
    /// `r0 (1 + sum_k a_k cos(k theta) + b_k sin(k theta))`, differentiated spectrally.
    pub fn circle_from_fourier(n_theta: usize, r0: f64, modes: &[(usize, f64, f64)]) -> Result<Self> {
        Self::circle_from_fn(n_theta, DerivMode::Spectral, |t| {
            r0 * (1.0 + modes.iter().map(|&(k, a, b)| a * (k as f64 * t).cos() + b * (k as f64 * t).sin()).sum::<f64>())
        })
    }

    /// Graph over a Gauss-Legendre x uniform grid of the 2-sphere (n = 3).
    pub fn sphere(n_colat: usize, n_lon: usize, values: Vec<f64>, mode: DerivMode) -> Result<Self> {
        if n_colat < 2 || n_lon < 4 {
            return Err(invalid("grid", "need n_colat >= 2 and n_lon >= 4"));
        }
        if mode == DerivMode::FiniteDifference && n_lon % 2 == 1 {
            return Err(invalid("grid", "finite differences need an even longitude count"));
        }
        Self::checked(Arc::new(GridData::sphere(n_colat, n_lon, mode)), values)
    }

    /// Sphere graph sampled from `r(colatitude, longitude)`.
    pub fn sphere_from_fn<F: Fn(f64, f64) -> f64>(n_colat: usize, n_lon: usize, mode: DerivMode, r: F) -> Result<Self> {
        if n_colat < 2 || n_lon < 4 {
            return Err(invalid("grid", "need n_colat >= 2 and n_lon >= 4"));
        }
        let grid = Arc::new(GridData::sphere(n_colat, n_lon, mode));
        let values = grid.angles.iter().map(|a| r(a[0], a[1])).collect();
        Self::checked(grid, values)
    }

    /// Constant radius on the given grid.
    pub fn ball(grid: &SphereGrid, mode: DerivMode, r: f64) -> Result<Self> {
        match *grid {
            SphereGrid::Circle { n_theta } => Self::circle(vec![r; n_theta], mode),
            SphereGrid::Sphere { n_colat, n_lon } => Self::sphere(n_colat, n_lon, vec![r; n_colat * n_lon], mode),
        }
    }

    /// Same grid, new node values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::checked(self.grid.clone(), values)
    }

    /// Same values on a freshly built grid with a different derivative mode.
    pub fn with_mode(&self, mode: DerivMode) -> Result<Self> {
        let grid = match self.grid.grid {
            SphereGrid::Circle { n_theta } => GridData::circle(n_theta, mode),
            SphereGrid::Sphere { n_colat, n_lon } => GridData::sphere(n_colat, n_lon, mode),
        };
        Self::checked(Arc::new(grid), self.values.clone())
    }

    pub fn dim(&self) -> usize {
        match self.grid.grid {
            SphereGrid::Circle { .. } => 2,
            SphereGrid::Sphere { .. } => 3,
        }
    }
    pub fn grid(&self) -> &SphereGrid {
        &self.grid.grid
    }
    pub fn mode(&self) -> DerivMode {
        self.grid.mode
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn weights(&self) -> &[f64] {
        &self.grid.weights
    }
    /// Unit direction of each node (tangent space at `e_n`).
    pub fn directions(&self) -> &[Vec<f64>] {
        &self.grid.dirs
    }
    /// Node angles: `[theta]` on the circle, `[colatitude, longitude]` on the sphere.
    pub fn angles(&self) -> &[Vec<f64>] {
        &self.grid.angles
    }
    pub fn max_radius(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
    pub fn min_radius(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Tangential derivative components at every node.
    pub fn tangential_derivatives(&self) -> Vec<Vec<f64>> {
        self.grid.ops.iter().map(|op| op.apply(&self.values)).collect()
    }

    /// `sum_c D_c^T u_c`.
    pub(crate) fn derivatives_transpose(&self, u: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (op, uc) in self.grid.ops.iter().zip(u) {
            for (o, v) in out.iter_mut().zip(op.apply_transpose(uc)) {
                *o += v;
            }
        }
        out
    }

    /// Radius in an arbitrary unit direction by band-limited interpolation of the node values.
    pub fn radius_at(&self, dir: &[f64]) -> f64 {
        match self.grid.grid {
            SphereGrid::Circle { n_theta } => {
                let t = dir[1].atan2(dir[0]);
                trig_interpolate(&self.values, n_theta, t)
            }
            SphereGrid::Sphere { .. } => {
                let x = dir[2].clamp(-1.0, 1.0);
                let lam = dir[1].atan2(dir[0]);
                self.harmonics().eval(x, lam)
            }
        }
    }

    /// The same surface on a grid of half the resolution: every other angle on the
    /// circle, band-limited interpolation on the sphere. `None` below 8 angles or 4 colatitudes.
    pub fn coarsened(&self) -> Option<RadialGraph> {
        match self.grid.grid {
            SphereGrid::Circle { n_theta } => {
                if n_theta % 2 != 0 || n_theta < 16 {
                    return None;
                }
                Self::circle(self.values.iter().step_by(2).cloned().collect(), self.mode()).ok()
            }
            SphereGrid::Sphere { n_colat, n_lon } => {
                if n_colat < 8 || n_lon < 16 {
                    return None;
                }
                let coarse = Self::ball(&SphereGrid::Sphere { n_colat: n_colat / 2, n_lon: n_lon / 2 }, self.mode(), 1.0).ok()?;
                let h = self.harmonics();
                let vals = coarse.angles().iter().map(|a| h.eval(a[0].cos(), a[1])).collect();
                coarse.with_values(vals).ok()
            }
        }
    }

    /// Spherical harmonic expansion of the node values (n = 3 only).
    pub fn harmonics(&self) -> Harmonics {
        let SphereGrid::Sphere { n_colat, n_lon } = self.grid.grid else {
            panic!("harmonics are defined for sphere grids only");
        };
        Harmonics::analyse(&self.values, &self.grid.colat_x, &self.grid.colat_w, n_colat, n_lon)
    }
}

fn trig_interpolate(values: &[f64], n: usize, t: f64) -> f64 {
    let m_max = (n - 1) / 2;
    let h = 2.0 * PI / n as f64;
    let mut acc = values.iter().sum::<f64>() / n as f64;
    for m in 1..=m_max {
        let (mut a, mut b) = (0.0, 0.0);
        for (k, &v) in values.iter().enumerate() {
            let x = m as f64 * k as f64 * h;
            a += v * x.cos();
            b += v * x.sin();
        }
        let mt = m as f64 * t;
        acc += 2.0 / n as f64 * (a * mt.cos() + b * mt.sin());
    }
    if n % 2 == 0 {
        let m = n / 2;
        let a: f64 = values.iter().enumerate().map(|(k, &v)| if k % 2 == 0 { v } else { -v }).sum();
        acc += a / n as f64 * (m as f64 * t).cos();
    }
    acc
}

/// Real spherical harmonic coefficients `(a_lm, b_lm)` of a function on the sphere grid,
/// `f = sum_m sum_l p_lm(cos phi) (a_lm cos(m lam) + b_lm sin(m lam))`.
#[derive(Clone, Debug)]
pub struct Harmonics {
    l_max: usize,
    m_max: usize,
    /// indexed [m][l - m]
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl Harmonics {
    fn analyse(values: &[f64], x: &[f64], w: &[f64], n_colat: usize, n_lon: usize) -> Self {
        let l_max = n_colat - 1;
        let m_max = l_max.min((n_lon - 1) / 2);
        let hl = 2.0 * PI / n_lon as f64;
        let mut a = vec![vec![]; m_max + 1];
        let mut b = vec![vec![]; m_max + 1];
        for m in 0..=m_max {
            a[m] = vec![0.0; l_max + 1 - m];
            b[m] = vec![0.0; l_max + 1 - m];
        }
        for i in 0..n_colat {
            let row = &values[i * n_lon..(i + 1) * n_lon];
            for m in 0..=m_max {
                let (mut c, mut s) = (0.0, 0.0);
                for (k, &v) in row.iter().enumerate() {
                    let ang = (m * k) as f64 * hl;
                    c += v * ang.cos();
                    s += v * ang.sin();
                }
                let fac = if m == 0 { 1.0 } else { 2.0 } / n_lon as f64;
                let col = legendre_column(m, l_max, x[i]);
                for (idx, p) in col.iter().enumerate() {
                    a[m][idx] += fac * c * p * w[i];
                    b[m][idx] += fac * s * p * w[i];
                }
            }
        }
        Self { l_max, m_max, a, b }
    }

    pub fn eval(&self, x: f64, lam: f64) -> f64 {
        let mut acc = 0.0;
        for m in 0..=self.m_max {
            let col = legendre_column(m, self.l_max, x);
            let (c, s) = (self.a[m].iter().zip(&col).map(|(u, v)| u * v).sum::<f64>(), self.b[m].iter().zip(&col).map(|(u, v)| u * v).sum::<f64>());
            let ml = m as f64 * lam;
            acc += c * ml.cos() + s * ml.sin();
        }
        acc
    }
}

/// Volume `sum_i w_i int_0^{R_i} sinh^{n-1}`.
pub fn graph_volume(graph: &RadialGraph) -> f64 {
    let k = graph.dim() - 1;
    graph.weights().iter().zip(graph.values()).map(|(w, &r)| w * sinh_power_integral(k, r)).sum()
}

/// `d graph_volume / d R_i = w_i sinh^{n-1} R_i`.
pub fn graph_volume_gradient(graph: &RadialGraph) -> Vec<f64> {
    let k = graph.dim() as i32 - 1;
    graph.weights().iter().zip(graph.values()).map(|(w, &r)| w * r.sinh().powi(k)).collect()
}

/// Hyperbolic area of the graph boundary,
/// `sum_i w_i sinh^{n-2}R_i sqrt(sinh^2 R_i + |grad R|_i^2)`.
pub fn graph_perimeter(graph: &RadialGraph) -> f64 {
    let g2 = grad_sq(graph);
    let k = graph.dim() as i32 - 2;
    graph
        .weights()
        .iter()
        .zip(graph.values())
        .zip(&g2)
        .map(|((w, &r), &g)| {
            let s = r.sinh();
            w * s.powi(k) * (s * s + g).sqrt()
        })
        .sum()
}

fn grad_sq(graph: &RadialGraph) -> Vec<f64> {
    let d = graph.tangential_derivatives();
    (0..graph.len()).map(|i| d.iter().map(|c| c[i] * c[i]).sum()).collect()
}

/// Exact gradient of [`graph_perimeter`] with respect to the node values.
pub fn graph_perimeter_gradient(graph: &RadialGraph) -> Vec<f64> {
    let d = graph.tangential_derivatives();
    let n = graph.len();
    let k = graph.dim() as i32 - 2;
    let w = graph.weights();
    let mut direct = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let r = graph.values[i];
        let (s, c) = (r.sinh(), r.cosh());
        let g: f64 = d.iter().map(|comp| comp[i] * comp[i]).sum();
        let root = (s * s + g).sqrt();
        // p = s^k root
        let dp_dr = if k == 0 { s * c / root } else { k as f64 * s.powi(k - 1) * c * root + s.powi(k) * s * c / root };
        direct[i] = w[i] * dp_dr;
        q[i] = w[i] * s.powi(k) / (2.0 * root);
    }
    let u: Vec<Vec<f64>> = d.iter().map(|comp| comp.iter().zip(&q).map(|(a, b)| 2.0 * a * b).collect()).collect();
    let back = graph.derivatives_transpose(&u);
    direct.iter().zip(back).map(|(a, b)| a + b).collect()
}

/// `(1 - Delta_S)^{-1}` applied to a node function, spectrally on both grids.
///
/// On the sphere the part of `f` not represented by the degree `<= l_max`
/// harmonics is damped by the first unresolved degree.
pub fn inverse_helmholtz(graph: &RadialGraph, f: &[f64]) -> Vec<f64> {
    assert_eq!(f.len(), graph.len());
    match graph.grid.grid {
        SphereGrid::Circle { n_theta } => {
            let h = 2.0 * PI / n_theta as f64;
            let mut out = vec![f.iter().sum::<f64>() / n_theta as f64; n_theta];
            for m in 1..=n_theta / 2 {
                let (mut a, mut b) = (0.0, 0.0);
                for (k, &v) in f.iter().enumerate() {
                    let x = (m * k) as f64 * h;
                    a += v * x.cos();
                    b += v * x.sin();
                }
                let nyquist = 2 * m == n_theta;
                let fac = if nyquist { 1.0 } else { 2.0 } / (n_theta as f64 * (1.0 + (m * m) as f64));
                for (k, o) in out.iter_mut().enumerate() {
                    let x = (m * k) as f64 * h;
                    *o += fac * (a * x.cos() + if nyquist { 0.0 } else { b * x.sin() });
                }
            }
            out
        }
        SphereGrid::Sphere { n_colat, n_lon } => {
            let g = &graph.grid;
            let full = Harmonics::analyse(f, &g.colat_x, &g.colat_w, n_colat, n_lon);
            let mut damped = full.clone();
            for m in 0..=damped.m_max {
                for (idx, (a, b)) in damped.a[m].iter_mut().zip(damped.b[m].iter_mut()).enumerate() {
                    let l = (m + idx) as f64;
                    let s = 1.0 / (1.0 + l * (l + 1.0));
                    *a *= s;
                    *b *= s;
                }
            }
            let lr = (full.l_max + 1) as f64;
            let rest = 1.0 / (1.0 + lr * (lr + 1.0));
            graph
                .angles()
                .iter()
                .zip(f)
                .map(|(ang, &v)| {
                    let x = ang[0].cos();
                    damped.eval(x, ang[1]) + rest * (v - full.eval(x, ang[1]))
                })
                .collect()
        }
    }
}

/// Total quadrature weight, which equals `omega_{n-1}` on a valid grid.
pub fn weight_sum(graph: &RadialGraph) -> f64 {
    graph.weights().iter().sum()
}
