//! Hyperbolic space in the upper half-space model `U^n = { x in R^n : x_n > 0 }`
//! with metric `|dx|^2 / x_n^2`.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::scalar::{acosh1p, Scalar};

/// Problem triple `(n, alpha, gamma)` with `n >= 2`, `0 < alpha < n`, `gamma > 0`.
///
/// `gamma = 0` is accepted by [`Params::with_zero_gamma`] for the pure perimeter problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Params<T = f64> {
    n: usize,
    alpha: T,
    gamma: T,
}

impl<T: Scalar> Params<T> {
    pub fn new(n: usize, alpha: T, gamma: T) -> Result<Self> {
        let p = Self::with_zero_gamma(n, alpha, gamma)?;
        if !(gamma > T::zero()) {
            return Err(Error::InvalidParams(format!("gamma must be > 0, got {gamma}")));
        }
        Ok(p)
    }

    /// Like [`Params::new`] but also admits `gamma == 0`.
    pub fn with_zero_gamma(n: usize, alpha: T, gamma: T) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams(format!("n must be >= 2, got {n}")));
        }
        if !(alpha > T::zero() && alpha < T::count(n)) {
            return Err(Error::InvalidParams(format!(
                "alpha must satisfy 0 < alpha < n = {n}, got {alpha}"
            )));
        }
        if !(gamma >= T::zero()) || !gamma.is_finite() {
            return Err(Error::InvalidParams(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        Ok(Self { n, alpha, gamma })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn alpha(&self) -> T {
        self.alpha
    }
    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// Copy with a different weight (may be zero).
    pub fn with_gamma(&self, gamma: T) -> Result<Self> {
        Self::with_zero_gamma(self.n, self.alpha, gamma)
    }

    /// Volume `b_n` of the Euclidean unit ball.
    pub fn b_n(&self) -> T {
        unit_ball_volume(self.n)
    }

    /// Area `omega_{n-1} = n b_n` of the Euclidean unit sphere.
    pub fn omega(&self) -> T {
        sphere_area(self.n)
    }
}

/// `b_n = pi^{n/2} / Gamma(n/2 + 1)`.
pub fn unit_ball_volume<T: Scalar>(n: usize) -> T {
    let h = n as f64 / 2.0;
    T::lit(std::f64::consts::PI.powf(h) / statrs::function::gamma::gamma(h + 1.0))
}

/// `omega_{k-1}`, area of the unit sphere in `R^k`; `omega_0 = 2`.
pub fn sphere_area<T: Scalar>(k: usize) -> T {
    match k {
        0 => T::zero(),
        1 => T::lit(2.0),
        2 => T::lit(2.0) * T::PI(),
        3 => T::lit(4.0) * T::PI(),
        _ => T::count(k) * unit_ball_volume::<T>(k),
    }
}

/// A point of `U^n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HPoint<T = f64> {
    coords: Vec<T>,
}

impl<T: Scalar> HPoint<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(invalid("coords", "need at least two coordinates"));
        }
        let last = *coords.last().unwrap();
        if !(last > T::zero()) || coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coords", "last coordinate must be positive and all finite"));
        }
        Ok(Self { coords })
    }

    /// The point `t e_n`.
    pub fn on_axis(n: usize, t: T) -> Result<Self> {
        let mut c = vec![T::zero(); n];
        if n > 0 {
            c[n - 1] = t;
        }
        Self::new(c)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
    pub fn coords(&self) -> &[T] {
        &self.coords
    }
    pub fn height(&self) -> T {
        self.coords[self.coords.len() - 1]
    }
}

/// Open geodesic ball `B_r(center)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeodesicBall<T = f64> {
    center: HPoint<T>,
    radius: T,
}

impl<T: Scalar> GeodesicBall<T> {
    pub fn new(center: HPoint<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(invalid("radius", format!("must be positive and finite, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// Ball of radius `r` about `e_n`.
    pub fn at_origin(n: usize, radius: T) -> Result<Self> {
        Self::new(HPoint::on_axis(n, T::one())?, radius)
    }

    pub fn center(&self) -> &HPoint<T> {
        &self.center
    }
    pub fn radius(&self) -> T {
        self.radius
    }
    pub fn dim(&self) -> usize {
        self.center.dim()
    }
    pub fn volume(&self) -> T {
        ball_volume(self.dim(), self.radius).expect("dim >= 2")
    }
}

/// Hyperbolic distance, `cosh d = 1 + |x-y|^2 / (2 x_n y_n)`.
pub fn distance<T: Scalar>(x: &HPoint<T>, y: &HPoint<T>) -> Result<T> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: y.dim() });
    }
    let sq = x
        .coords
        .iter()
        .zip(&y.coords)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
    Ok(acosh1p(sq / (T::lit(2.0) * x.height() * y.height())))
}

/// `Phi_lambda(x) = (x_1, ..., x_{n-1}, lambda x_n)`.
pub fn phi_lambda<T: Scalar>(lambda: T, x: &HPoint<T>) -> Result<HPoint<T>> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    let mut c = x.coords.clone();
    let n = c.len();
    c[n - 1] = c[n - 1] * lambda;
    HPoint::new(c)
}

fn check_dim(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::UnsupportedDimension(n))
    } else {
        Ok(())
    }
}

/// Power series coefficients of `sinh^k s` up to degree `k + 2 * terms`,
/// indexed by degree.
pub(crate) fn sinh_power_series<T: Scalar>(k: usize, terms: usize) -> Vec<T> {
    let deg = k + 2 * terms;
    let mut sinh = vec![T::zero(); deg + 1];
    let mut fact = T::one();
    for d in 1..=deg {
        fact = fact * T::count(d);
        if d % 2 == 1 {
            sinh[d] = T::one() / fact;
        }
    }
    let mut acc = vec![T::zero(); deg + 1];
    acc[0] = T::one();
    for _ in 0..k {
        let mut next = vec![T::zero(); deg + 1];
        for (i, &a) in acc.iter().enumerate() {
            if a == T::zero() {
                continue;
            }
            for (j, &b) in sinh.iter().enumerate().skip(1) {
                if i + j > deg {
                    break;
                }
                next[i + j] = next[i + j] + a * b;
            }
        }
        acc = next;
    }
    acc
}

const SERIES_TERMS: usize = 24;
const SERIES_TABLE_MAX_K: usize = 32;

fn integrated_series(k: usize) -> Vec<f64> {
    let c = sinh_power_series::<f64>(k, SERIES_TERMS);
    (0..=SERIES_TERMS).map(|i| c[k + 2 * i] / (k + 2 * i + 1) as f64).collect()
}

fn integrated_series_table() -> &'static [Vec<f64>] {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=SERIES_TABLE_MAX_K).map(integrated_series).collect())
}

/// `int_0^r sinh^k s ds` via its exact antiderivative (series below `r = 1`).
pub fn sinh_power_integral<T: Scalar>(k: usize, r: T) -> T {
    if r <= T::zero() {
        return T::zero();
    }
    let two = T::lit(2.0);
    match k {
        0 => return r,
        1 => {
            let s = (r / two).sinh();
            return two * s * s;
        }
        _ => {}
    }
    if r < T::one() {
        // integrated coefficients: degree k + 1 + 2i
        let eval = |c: &[f64]| {
            let r2 = r * r;
            let mut sum = T::zero();
            for &a in c.iter().rev() {
                sum = sum * r2 + T::lit(a);
            }
            sum * r.powi(k as i32 + 1)
        };
        return match integrated_series_table().get(k) {
            Some(c) => eval(c),
            None => eval(&integrated_series(k)),
        };
    }
    // sinh^k s = 2^-k sum_j C(k,j) (-1)^j e^{(k-2j)s}
    let mut sum = T::zero();
    let mut binom = T::one();
    for j in 0..=k {
        let sign = if j % 2 == 0 { T::one() } else { -T::one() };
        let e = k as i64 - 2 * j as i64;
        let term = if e == 0 {
            r
        } else {
            let ef = T::lit(e as f64);
            (ef * r).exp_m1() / ef
        };
        sum = sum + sign * binom * term;
        binom = binom * T::count(k - j) / T::count(j + 1);
    }
    sum / two.powi(k as i32)
}

/// `|B_r| = omega_{n-1} int_0^r sinh^{n-1} s ds`.
pub fn ball_volume<T: Scalar>(n: usize, r: T) -> Result<T> {
    check_dim(n)?;
    if r < T::zero() {
        return Err(invalid("r", "must be nonnegative"));
    }
    Ok(sphere_area::<T>(n) * sinh_power_integral(n - 1, r))
}

/// `P(B_r) = omega_{n-1} sinh^{n-1} r`.
pub fn ball_perimeter<T: Scalar>(n: usize, r: T) -> Result<T> {
    check_dim(n)?;
    if r < T::zero() {
        return Err(invalid("r", "must be nonnegative"));
    }
    Ok(sphere_area::<T>(n) * r.sinh().powi(n as i32 - 1))
}

/// Inverse of `r -> |B_r|`.
pub fn radius_for_volume<T: Scalar>(n: usize, m: T) -> Result<T> {
    check_dim(n)?;
    if !(m > T::zero()) || !m.is_finite() {
        return Err(invalid("m", format!("volume must be positive, got {m}")));
    }
    let omega = sphere_area::<T>(n);
    let vol = |r: T| sphere_area::<T>(n) * sinh_power_integral(n - 1, r);
    let mut hi = (m / omega).powf(T::one() / T::count(n));
    let mut lo = T::zero();
    let mut iters = 0;
    while vol(hi) < m {
        lo = hi;
        hi = hi * T::lit(2.0);
        iters += 1;
        if iters > 200 {
            return Err(Error::RootNotFound(format!("no bracket for volume {m}")));
        }
    }
    for _ in 0..60 {
        let mid = T::lit(0.5) * (lo + hi);
        if vol(mid) < m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut r = T::lit(0.5) * (lo + hi);
    for _ in 0..5 {
        let dv = omega * r.sinh().powi(n as i32 - 1);
        if dv <= T::zero() {
            break;
        }
        let next = r - (vol(r) - m) / dv;
        if next > T::zero() && next.is_finite() {
            r = next;
        }
    }
    Ok(r)
}

/// Isoperimetric profile `xi(z) = P(B_{g^{-1}(z)})` and its first two derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IsoXi<T = f64> {
    pub xi: T,
    pub xi_prime: T,
    pub xi_second: T,
}

pub fn iso_xi<T: Scalar>(n: usize, z: T) -> Result<IsoXi<T>> {
    if !(z > T::zero()) {
        return Err(invalid("z", format!("must be positive, got {z}")));
    }
    let r = radius_for_volume(n, z)?;
    let omega = sphere_area::<T>(n);
    let nm1 = T::count(n - 1);
    let sh = r.sinh();
    Ok(IsoXi {
        xi: omega * sh.powi(n as i32 - 1),
        xi_prime: nm1 / r.tanh(),
        xi_second: -nm1 / (omega * sh.powi(n as i32 + 1)),
    })
}

/// Euclidean center and radius of a geodesic ball in `U^n`.
pub fn ball_to_euclidean<T: Scalar>(ball: &GeodesicBall<T>) -> (Vec<T>, T) {
    let h = ball.center.height();
    let mut c = ball.center.coords.clone();
    let n = c.len();
    c[n - 1] = h * ball.radius.cosh();
    (c, h * ball.radius.sinh())
}

/// Point at geodesic distance `rho` from `center` in the unit direction `dir`
/// (directions are taken in the tangent space at `center`; `dir[n-1]` points up).
pub fn polar_point<T: Scalar>(center: &HPoint<T>, rho: T, dir: &[T]) -> HPoint<T> {
    let n = center.dim();
    debug_assert_eq!(dir.len(), n);
    // Poincare ball point p = tanh(rho/2) dir, then Cayley map sending 0 to e_n.
    let t = (rho / T::lit(2.0)).tanh();
    let p: Vec<T> = dir.iter().map(|&d| t * d).collect();
    let p2 = t * t;
    let pn = p[n - 1];
    let horiz: T = p[..n - 1].iter().fold(T::zero(), |a, &v| a + v * v);
    let den = horiz + (T::one() + pn) * (T::one() + pn);
    let h = center.height();
    let mut out = Vec::with_capacity(n);
    for i in 0..n - 1 {
        out.push(center.coords[i] + h * T::lit(2.0) * p[i] / den);
    }
    // 1 - |p|^2 > 0 for finite rho; clamp guards rounding at huge rho.
    let last = h * ((T::one() - p2) / den).max(T::min_positive_value());
    out.push(last);
    HPoint { coords: out }
}

fn sample_direction<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| T::lit(x / norm)).collect();
        }
    }
}

/// Uniform random direction on the unit sphere `S^{n-1}`.
pub fn random_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    sample_direction(n, rng)
}

/// Geodesic radius of a uniform point in `B_r`, by inverting the radial CDF at `u in [0,1)`.
pub fn radial_quantile<T: Scalar>(n: usize, r: T, u: T) -> T {
    if n == 2 {
        let s = (r / T::lit(2.0)).sinh();
        return acosh1p(u * T::lit(2.0) * s * s);
    }
    let k = n - 1;
    let target = u * sinh_power_integral(k, r);
    let (mut lo, mut hi) = (T::zero(), r);
    let mut x = r * u.powf(T::one() / T::count(n));
    for _ in 0..100 {
        let g = sinh_power_integral(k, x) - target;
        if g > T::zero() {
            hi = x;
        } else {
            lo = x;
        }
        let dg = x.sinh().powi(k as i32);
        let mut next = if dg > T::zero() { x - g / dg } else { T::lit(0.5) * (lo + hi) };
        if !(next > lo && next < hi) {
            next = T::lit(0.5) * (lo + hi);
        }
        if (next - x).abs() <= T::epsilon() * T::lit(4.0) * r {
            return next;
        }
        x = next;
    }
    x
}

/// Uniform sample from `ball` with respect to hyperbolic volume.
pub fn sample_ball_point<T: Scalar, R: Rng + ?Sized>(ball: &GeodesicBall<T>, rng: &mut R) -> HPoint<T> {
    let n = ball.dim();
    let u: f64 = rng.gen();
    let rho = radial_quantile(n, ball.radius, T::lit(u));
    let dir = sample_direction::<T, R>(n, rng);
    polar_point(&ball.center, rho, &dir)
}

#[cfg(test)]
mod tests {
    use super::{
        ball_perimeter, ball_to_euclidean, ball_volume, distance, iso_xi, phi_lambda, polar_point,
        radial_quantile, radius_for_volume, random_direction, sample_ball_point, sinh_power_integral,
        sphere_area, unit_ball_volume, Error, GeodesicBall, HPoint, Params,
    };
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(c: &[f64]) -> HPoint {
        HPoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(2, 1.0, 1.0).is_ok());
        assert!(Params::new(1, 0.5, 1.0).is_err());
        assert!(Params::new(2, 2.0, 1.0).is_err());
        assert!(Params::new(2, 0.0, 1.0).is_err());
        assert!(Params::new(2, 1.0, 0.0).is_err());
        assert!(Params::with_zero_gamma(2, 1.0, 0.0).is_ok());
        let p = Params::new(3, 1.0, 1.0).unwrap();
        assert_relative_eq!(p.b_n(), 4.0 / 3.0 * std::f64::consts::PI, max_relative = 1e-13);
        assert_relative_eq!(p.omega(), 4.0 * std::f64::consts::PI, max_relative = 1e-15);
        assert_relative_eq!(sphere_area::<f64>(5), 8.0 / 3.0 * std::f64::consts::PI.powi(2), max_relative = 1e-13);
    }

    #[test]
    fn hpoint_rejects_lower_half() {
        assert!(HPoint::new(vec![0.0, 0.0]).is_err());
        assert!(HPoint::new(vec![0.0, -1.0]).is_err());
        assert!(HPoint::new(vec![1.0]).is_err());
        assert!(GeodesicBall::new(pt(&[0.0, 1.0]), 0.0).is_err());
    }

    #[test]
    fn distance_examples() {
        assert_relative_eq!(distance(&pt(&[0.0, 1.0]), &pt(&[0.0, 2.0])).unwrap(), 2f64.ln(), max_relative = 1e-14);
        assert_eq!(distance(&pt(&[0.3, 1.0]), &pt(&[0.3, 1.0])).unwrap(), 0.0);
        assert_relative_eq!(distance(&pt(&[0.0, 1.0]), &pt(&[1.0, 1.0])).unwrap(), 1.5f64.acosh(), max_relative = 1e-14);
        assert!(matches!(
            distance(&pt(&[0.0, 1.0]), &pt(&[0.0, 0.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn horospheres_are_log_apart() {
        for &(t, s) in &[(1.0, 3.0), (0.2, 7.0), (5.0, 5.5)] {
            let d = distance(&pt(&[0.0, 0.0, t]), &pt(&[0.0, 0.0, s])).unwrap();
            assert_relative_eq!(d, (s / t).ln().abs(), max_relative = 1e-13);
        }
    }

    #[test]
    fn nearby_points_keep_precision() {
        let d = distance(&pt(&[0.0, 1.0]), &pt(&[1e-9, 1.0])).unwrap();
        assert_relative_eq!(d, 1e-9, max_relative = 1e-12);
    }

    #[test]
    fn phi_lambda_examples() {
        assert_eq!(phi_lambda(2.0, &pt(&[0.0, 1.0])).unwrap(), pt(&[0.0, 2.0]));
        let x = pt(&[0.25, -1.5, 0.75]);
        assert_eq!(phi_lambda(1.0, &x).unwrap(), x);
        assert_eq!(phi_lambda(0.5, &phi_lambda(2.0, &x).unwrap()).unwrap(), x);
        assert!(phi_lambda(0.0, &x).is_err());
        assert!(phi_lambda(-1.0, &x).is_err());
    }

    #[test]
    fn ball_volume_examples() {
        use std::f64::consts::PI;
        assert_relative_eq!(ball_volume(2, 1.0).unwrap(), 2.0 * PI * (1f64.cosh() - 1.0), max_relative = 1e-14);
        assert_relative_eq!(ball_volume(3, 1.0).unwrap(), PI * 2f64.sinh() - 2.0 * PI, max_relative = 1e-13);
        assert_relative_eq!(ball_volume(3, 1.0).unwrap(), 5.110932705708289, max_relative = 1e-12);
        for n in 2..8 {
            assert_eq!(ball_volume(n, 0.0).unwrap(), 0.0);
        }
        assert!(ball_volume(1, 1.0).is_err());
    }

    #[test]
    fn ball_volume_higher_dim_matches_quadrature() {
        // Simpson on a fine grid as an independent oracle.
        for n in 4..8 {
            for &r in &[0.01, 0.5, 0.999, 1.0, 2.5] {
                let m = 20000;
                let h = r / m as f64;
                let f = |s: f64| s.sinh().powi(n as i32 - 1);
                let mut acc = f(0.0) + f(r);
                for i in 1..m {
                    acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
                }
                let oracle = sphere_area::<f64>(n) * acc * h / 3.0;
                assert_relative_eq!(ball_volume(n, r).unwrap(), oracle, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn ball_perimeter_examples() {
        use std::f64::consts::PI;
        assert_relative_eq!(ball_perimeter(2, 1.0).unwrap(), 2.0 * PI * 1f64.sinh(), max_relative = 1e-15);
        assert_eq!(ball_perimeter(3, 0.0).unwrap(), 0.0);
        let s = 0.5f64.sinh();
        assert_relative_eq!(ball_perimeter(3, 0.5).unwrap(), 4.0 * PI * s * s, max_relative = 1e-14);
    }

    #[test]
    fn radius_for_volume_examples() {
        use std::f64::consts::PI;
        let r = radius_for_volume(2, 2.0 * PI * (1f64.cosh() - 1.0)).unwrap();
        assert!((r - 1.0).abs() < 1e-10);
        let r = radius_for_volume(3, PI * 2f64.sinh() - 2.0 * PI).unwrap();
        assert!((r - 1.0).abs() < 1e-10);
        let m = 1e-10;
        assert_relative_eq!(radius_for_volume(2, m).unwrap() / (m / PI).sqrt(), 1.0, max_relative = 1e-9);
        assert!(radius_for_volume(2, 0.0).is_err());
        assert!(radius_for_volume(2, -1.0).is_err());
    }

    #[test]
    fn radius_for_volume_meets_volume_tolerance() {
        for n in 2..7 {
            for &m in &[1e-6f64, 0.3, 1.0, 17.0, 1e4] {
                let r = radius_for_volume(n, m).unwrap();
                let v = ball_volume(n, r).unwrap();
                assert!((v - m).abs() <= 1e-12 * m.max(1.0), "n={n} m={m} v={v}");
            }
        }
    }

    #[test]
    fn iso_xi_examples() {
        use std::f64::consts::PI;
        for &z in &[1e-4, 0.5, 3.0, 100.0] {
            let x = iso_xi(2, z).unwrap();
            assert_relative_eq!(x.xi, (z * z + 4.0 * PI * z).sqrt(), max_relative = 1e-10);
            assert!(x.xi_second < 0.0);
        }
        let z = ball_volume(2, 1.0).unwrap();
        assert_relative_eq!(iso_xi(2, z).unwrap().xi_prime, 1.3130353, max_relative = 1e-7);
        assert!(iso_xi(3, 0.0).is_err());
    }

    #[test]
    fn ball_to_euclidean_examples() {
        let b = GeodesicBall::new(pt(&[0.0, 1.0]), 2f64.ln()).unwrap();
        let (c, rad) = ball_to_euclidean(&b);
        assert_relative_eq!(c[1], 1.25, max_relative = 1e-15);
        assert_relative_eq!(rad, 0.75, max_relative = 1e-15);
        let b = GeodesicBall::new(pt(&[0.0, 2.0]), 1.0).unwrap();
        let (c, rad) = ball_to_euclidean(&b);
        assert_relative_eq!(c[1], 2.0 * 1f64.cosh());
        assert_relative_eq!(rad, 2.0 * 1f64.sinh());
        let b = GeodesicBall::new(pt(&[0.5, 2.0]), 1e-9).unwrap();
        let (c, rad) = ball_to_euclidean(&b);
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] - 2.0).abs() < 1e-12 && rad < 1e-8);
    }

    #[test]
    fn polar_point_is_at_requested_distance() {
        let c = pt(&[0.3, -0.2, 1.7]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let dir = random_direction(3, &mut rng);
            let rho = rng.gen_range(0.0..4.0);
            let p = polar_point(&c, rho, &dir);
            assert_relative_eq!(distance(&c, &p).unwrap(), rho, epsilon = 1e-11, max_relative = 1e-11);
        }
    }

    #[test]
    fn sample_ball_point_mean_distance() {
        let ball = GeodesicBall::at_origin(2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let p = sample_ball_point(&ball, &mut rng);
            let d = distance(ball.center(), &p).unwrap();
            assert!(d <= 1.0 + 1e-12);
            s1 += d;
            s2 += d * d;
        }
        let mean = s1 / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        // int_0^1 s sinh s ds / (cosh 1 - 1) = (cosh 1 - sinh 1) / (cosh 1 - 1)
        let oracle = (1f64.cosh() - 1f64.sinh()) / (1f64.cosh() - 1.0);
        assert!((mean - oracle).abs() < 3.0 * se, "mean {mean} oracle {oracle} se {se}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let ball = GeodesicBall::at_origin(3, 0.7).unwrap();
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..50).map(|_| sample_ball_point(&ball, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn radial_quantile_inverts_cdf() {
        for n in 2..6 {
            for &u in &[0.0f64, 0.1, 0.5, 0.9, 0.999] {
                let r = 1.3f64;
                let rho = radial_quantile(n, r, u);
                let frac = sinh_power_integral(n - 1, rho) / sinh_power_integral(n - 1, r);
                assert!((frac - u).abs() < 1e-12, "n={n} u={u}");
            }
        }
    }

    #[test]
    fn generic_over_f32() {
        let x = HPoint::<f32>::new(vec![0.0, 1.0]).unwrap();
        let y = HPoint::<f32>::new(vec![0.0, 2.0]).unwrap();
        assert!((distance(&x, &y).unwrap() - 2f32.ln()).abs() < 1e-6);
        assert!((ball_volume::<f32>(3, 1.0).unwrap() - 5.1109327).abs() < 1e-5);
        assert!((radius_for_volume::<f32>(2, 3.4122657).unwrap() - 1.0).abs() < 1e-5);
    }

    fn upper_point(n: usize) -> impl Strategy<Value = HPoint> {
        (prop::collection::vec(-3.0..3.0f64, n - 1), 0.05..5.0f64).prop_map(|(mut h, t)| {
            h.push(t);
            HPoint::new(h).unwrap()
        })
    }

    proptest! {
        #[test]
        fn distance_symmetric_and_nonneg(x in upper_point(3), y in upper_point(3)) {
            let a = distance(&x, &y).unwrap();
            let b = distance(&y, &x).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn triangle_inequality(x in upper_point(2), y in upper_point(2), z in upper_point(2)) {
            let xy = distance(&x, &y).unwrap();
            let yz = distance(&y, &z).unwrap();
            let xz = distance(&x, &z).unwrap();
            prop_assert!(xz <= xy + yz + 1e-12);
        }

        #[test]
        fn isometry_invariance(x in upper_point(3), y in upper_point(3),
                               v in prop::collection::vec(-2.0..2.0f64, 2), c in 0.2..5.0f64) {
            let d = distance(&x, &y).unwrap();
            let shift = |p: &HPoint| {
                let mut k = p.coords().to_vec();
                k[0] += v[0];
                k[1] += v[1];
                HPoint::new(k).unwrap()
            };
            let dil = |p: &HPoint| HPoint::new(p.coords().iter().map(|a| a * c).collect()).unwrap();
            prop_assert!((distance(&shift(&x), &shift(&y)).unwrap() - d).abs() < 1e-12);
            prop_assert!((distance(&dil(&x), &dil(&y)).unwrap() - d).abs() < 1e-12);
        }

        #[test]
        fn phi_distance_sandwich(x in upper_point(2), y in upper_point(2),
                                 lam in prop::sample::select(vec![0.3, 0.9, 1.0, 1.5, 4.0])) {
            let d = distance(&x, &y).unwrap();
            let dl = distance(&phi_lambda(lam, &x).unwrap(), &phi_lambda(lam, &y).unwrap()).unwrap();
            let q = lam.powi(-2);
            prop_assert!(dl >= q.min(1.0) * d * (1.0 - 1e-12) - 1e-15);
            prop_assert!(dl <= q.max(1.0) * d * (1.0 + 1e-12) + 1e-15);
            if lam == 1.0 {
                prop_assert_eq!(dl, d);
            }
        }

        #[test]
        fn xi_strictly_superadditive(n in 2usize..5, a in 1e-3..50.0f64, b in 1e-3..50.0f64) {
            let xa = iso_xi(n, a).unwrap().xi;
            let xb = iso_xi(n, b).unwrap().xi;
            let xab = iso_xi(n, a + b).unwrap().xi;
            prop_assert!(xa + xb > xab);
        }

        #[test]
        fn euclid_like_sandwich(n in 2usize..5, r0 in 0.05..3.0f64, frac in 0.01..1.0f64) {
            let r = r0 * frac;
            let bn: f64 = unit_ball_volume(n);
            let v = ball_volume(n, r).unwrap();
            let p = ball_perimeter(n, r).unwrap();
            let e = (n as f64 - 1.0) / n as f64;
            let lower = n as f64 * bn.powf(1.0 / n as f64) * v.powf(e);
            let upper = n as f64 * bn.powf(1.0 / n as f64) * (r0.cosh() * v).powf(e);
            prop_assert!(lower <= p * (1.0 + 1e-12));
            prop_assert!(p <= upper * (1.0 + 1e-12));
        }

        #[test]
        fn radius_volume_roundtrip(n in 2usize..6, lr in -4.0..1.3f64) {
            let r = 10f64.powf(lr);
            let back = radius_for_volume(n, ball_volume(n, r).unwrap()).unwrap();
            prop_assert!((back - r).abs() <= 1e-10 * r);
        }
    }
}
