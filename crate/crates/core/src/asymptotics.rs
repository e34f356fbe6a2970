//! Generating-function evaluators and the asymptotic variance of averaged
//! gradients.
//!
//! The variance sequence of the running gradient mean has generating function
//! `sigma2(z)`, constrained by
//!
//! ```text
//! z (1 - z) sigma2''(z) - z sigma2'(z) = 0
//! ```
//!
//! whose general solution is `D + C log(1 / (1 - z))` with coefficients
//! `[z^n] = C / n`. Taking `C = gamma` gives the leading term of
//!
//! ```text
//! sigma2_n ~ gamma / n - 1 / n^2 - 1 / (2 n^3)
//! ```
//!
//! This module evaluates both the general ODE solution and the candidate
//! closed form `1 + z (1 + log((z - 1) / z))`. The closed form does *not*
//! satisfy the ODE; its residual is `-1 - z - z log((z - 1) / z)`, which
//! [`ode_residual`] reproduces numerically. Coefficients are extracted with
//! [`cauchy_coefficient`] and the reciprocal gamma function is evaluated
//! along a Hankel loop by [`reciprocal_gamma_hankel`].
//!
//! Conventions:
//! - the Hankel representation uses `(-t)^(-s)`; the exponent `+s` does not
//!   reproduce `1 / Gamma(s)` (see [`hankel_loop_integral`], which accepts
//!   either exponent);
//! - [`gaussian_gf_eval`] evaluates `exp(mu z - sigma^2 z^2 / 2)` literally,
//!   which is neither the moment generating function (`+ sigma^2 z^2 / 2`) nor
//!   the characteristic function of a Gaussian.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

/// Euler-Mascheroni constant, 20 significant digits.
#[allow(clippy::excessive_precision)]
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_61;

/// A point of the complex plane.
pub type ComplexValue = Complex64;

/// A value computed on a principal-branch cut, reported as the limit from the
/// upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchValue {
    pub value: Complex64,
    pub on_cut: bool,
}

fn domain(z: Complex64, reason: &'static str) -> Error {
    Error::Domain {
        re: z.re,
        im: z.im,
        reason,
    }
}

fn check_point(z: Complex64) -> Result<()> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(domain(z, "non-finite component"))
    }
}

/// `exp(mu z - sigma^2 z^2 / 2)`, evaluated exactly as written.
pub fn gaussian_gf_eval(z: Complex64, mu: f64, sigma: f64) -> Complex64 {
    debug_assert!(sigma >= 0.0);
    (z * mu - z * z * (0.5 * sigma * sigma)).exp()
}

/// The candidate closed form `1 + z (1 + log((z - 1) / z))`, principal branch.
///
/// The logarithm's cut is the segment `z in (0, 1)` of the real axis, where
/// `(z - 1) / z` is negative. Points on it are evaluated as the limit from
/// the upper half-plane (`log = ln|.| + i pi`) and flagged.
pub fn sigma2_closed_form(z: Complex64) -> Result<BranchValue> {
    check_point(z)?;
    if z == Complex64::new(0.0, 0.0) {
        return Err(domain(z, "logarithmic singularity at z = 0"));
    }
    if z == Complex64::new(1.0, 0.0) {
        return Err(domain(z, "logarithmic singularity at z = 1"));
    }
    let on_cut = z.im == 0.0 && z.re > 0.0 && z.re < 1.0;
    let log = if on_cut {
        let ratio = (z.re - 1.0) / z.re;
        Complex64::new((-ratio).ln(), PI)
    } else {
        ((z - 1.0) / z).ln()
    };
    Ok(BranchValue {
        value: 1.0 + z * (1.0 + log),
        on_cut,
    })
}

/// General solution `D + C log(1 / (1 - z))` of the variance ODE.
///
/// Its Taylor coefficients are `D` at `n = 0` and `C / n` for `n >= 1`.
pub fn sigma2_ode_solution(z: Complex64, c: f64, d: f64) -> Result<Complex64> {
    check_point(z)?;
    if z.im == 0.0 && z.re >= 1.0 {
        return Err(domain(z, "on the logarithm's cut [1, inf)"));
    }
    Ok(d - c * (1.0 - z).ln())
}

/// `z (1 - z) f''(z) - z f'(z)` for an evaluator `f`, with fourth-order
/// central differences of real step `h`.
pub fn ode_residual<F>(evaluator: F, z: Complex64, h: f64) -> Result<Complex64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid("h", format!("step must be > 0, got {h}")));
    }
    let f_m2 = evaluator(z - 2.0 * h)?;
    let f_m1 = evaluator(z - h)?;
    let f_0 = evaluator(z)?;
    let f_p1 = evaluator(z + h)?;
    let f_p2 = evaluator(z + 2.0 * h)?;
    let d1 = (-f_p2 + 8.0 * f_p1 - 8.0 * f_m1 + f_m2) / (12.0 * h);
    let d2 = (-f_p2 + 16.0 * f_p1 - 30.0 * f_0 + 16.0 * f_m1 - f_m2) / (12.0 * h * h);
    Ok(z * (1.0 - z) * d2 - z * d1)
}

/// Circle `|z| = radius` sampled at `nodes` equispaced points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleContour {
    radius: f64,
    nodes: usize,
}

impl CircleContour {
    pub const DEFAULT_NODES: usize = 512;

    pub fn new(radius: f64, nodes: usize) -> Result<Self> {
        if !(radius > 0.0 && radius < 1.0) {
            return Err(invalid(
                "radius",
                format!("must lie in (0, 1), got {radius}"),
            ));
        }
        if nodes < 16 || !nodes.is_multiple_of(2) {
            return Err(invalid(
                "nodes",
                format!("must be even and >= 16, got {nodes}"),
            ));
        }
        Ok(Self { radius, nodes })
    }

    pub fn with_radius(radius: f64) -> Result<Self> {
        Self::new(radius, Self::DEFAULT_NODES)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }
}

/// A coefficient recovered by contour quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientEstimate {
    pub value: f64,
    /// Imaginary part of the quadrature sum; zero for real-coefficient series.
    pub imag_residual: f64,
}

/// `[z^n] f` by the trapezoidal rule on a circle, which converges
/// geometrically for functions analytic on a neighbourhood of the disk.
pub fn cauchy_coefficient<F>(
    evaluator: F,
    n: usize,
    contour: &CircleContour,
) -> Result<CoefficientEstimate>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let q = contour.nodes;
    let r = contour.radius;
    let scale = r.powi(-(n as i32));
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 0..q {
        let theta = 2.0 * PI * k as f64 / q as f64;
        let z = Complex64::from_polar(r, theta);
        let f = evaluator(z)?;
        if !(f.re.is_finite() && f.im.is_finite()) {
            return Err(Error::NonFiniteEvaluation {
                context: format!("contour node {k} (z = {z})"),
            });
        }
        // z^-n = r^-n e^{-i n theta}; reduce n k mod q to keep the phase exact.
        let phase = 2.0 * PI * ((n % q) * k % q) as f64 / q as f64;
        sum += f * Complex64::from_polar(scale, -phase);
    }
    let c = sum / q as f64;
    Ok(CoefficientEstimate {
        value: c.re,
        imag_residual: c.im,
    })
}

/// Loop around the positive real axis: two legs at heights `+offset` and
/// `-offset` running from `truncation` to 0, joined by a half circle of
/// radius `offset` through the negative real axis.
///
/// The legs are split into panels that double in length away from the origin
/// (starting at `offset`, capped at length 1), each integrated with
/// `leg_nodes` Gauss-Legendre points; the arc uses `arc_nodes` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HankelPath {
    pub truncation: f64,
    pub offset: f64,
    pub leg_nodes: usize,
    pub arc_nodes: usize,
    /// Largest accepted change between the path and its refinement.
    pub tolerance: f64,
}

impl Default for HankelPath {
    fn default() -> Self {
        Self {
            truncation: 40.0,
            offset: 1e-3,
            leg_nodes: 16,
            arc_nodes: 64,
            tolerance: 1e-8,
        }
    }
}

impl HankelPath {
    pub fn validate(&self) -> Result<()> {
        if !(self.offset > 0.0 && self.offset <= 0.1) {
            return Err(invalid(
                "offset",
                format!("must lie in (0, 0.1], got {}", self.offset),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be > 0"));
        }
        if !(self.truncation > self.offset) || (-self.truncation).exp() >= self.tolerance {
            return Err(invalid(
                "truncation",
                format!(
                    "exp(-T) must be below the tolerance {:e}, got T = {}",
                    self.tolerance, self.truncation
                ),
            ));
        }
        if self.leg_nodes == 0 || self.arc_nodes == 0 {
            return Err(invalid("nodes", "quadrature orders must be positive"));
        }
        Ok(())
    }

    /// Leg breakpoints on `[0, truncation]`.
    fn panels(&self) -> Vec<f64> {
        let mut points = vec![0.0];
        let mut x = 0.0;
        let mut width = self.offset;
        while x < self.truncation {
            x = (x + width).min(self.truncation);
            points.push(x);
            width = (2.0 * width).min(1.0);
        }
        points
    }

    fn refined(&self) -> Self {
        Self {
            leg_nodes: 2 * self.leg_nodes,
            arc_nodes: 2 * self.arc_nodes,
            ..*self
        }
    }
}

fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(order).expect("order checked positive"));
    rule.as_node_weight_pairs().to_vec()
}

fn loop_integral_once(exponent: f64, path: &HankelPath) -> Complex64 {
    let integrand = |u: Complex64| (-u).powf(exponent) * (-u).exp();
    let delta = path.offset;

    let leg_rule = gauss_legendre(path.leg_nodes);
    let breaks = path.panels();
    let mut upper = Complex64::new(0.0, 0.0);
    let mut lower = Complex64::new(0.0, 0.0);
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for &(x, wt) in &leg_rule {
            let t = mid + half * x;
            upper += integrand(Complex64::new(t, delta)) * (wt * half);
            lower += integrand(Complex64::new(t, -delta)) * (wt * half);
        }
    }

    // Counter-clockwise half circle from +i delta through -delta to -i delta.
    let arc_rule = gauss_legendre(path.arc_nodes);
    let (a, b) = (0.5 * PI, 1.5 * PI);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut arc = Complex64::new(0.0, 0.0);
    for &(x, wt) in &arc_rule {
        let theta = mid + half * x;
        let u = Complex64::from_polar(delta, theta);
        arc += integrand(u) * Complex64::i() * u * (wt * half);
    }

    // Upper leg runs from +inf towards 0, lower leg from 0 back out.
    let total = -upper + arc + lower;
    -total / (2.0 * PI * Complex64::i())
}

/// `-(1 / 2 pi i) * integral over the loop of (-t)^exponent e^(-t) dt`,
/// principal branch.
///
/// With `exponent = -s` this equals `1 / Gamma(s)`. The integral is also
/// evaluated on a path with doubled quadrature orders; disagreement beyond
/// `path.tolerance` is reported as non-convergence.
pub fn hankel_loop_integral(exponent: f64, path: &HankelPath) -> Result<Complex64> {
    path.validate()?;
    if !exponent.is_finite() {
        return Err(invalid("exponent", "must be finite"));
    }
    let coarse = loop_integral_once(exponent, path);
    let fine = loop_integral_once(exponent, &path.refined());
    let difference = (fine - coarse).norm();
    if !(difference <= path.tolerance) {
        return Err(Error::NonConvergence {
            difference,
            tolerance: path.tolerance,
        });
    }
    Ok(fine)
}

/// `1 / Gamma(s)` from the Hankel loop integral of `(-t)^(-s) e^(-t)`.
pub fn reciprocal_gamma_hankel(s: f64, path: &HankelPath) -> Result<f64> {
    Ok(hankel_loop_integral(-s, path)?.re)
}

/// Three-term asymptotic variance `gamma / n - 1 / n^2 - 1 / (2 n^3)`.
///
/// Returned as-is for every `n >= 1`; it is negative for `n <= 2` and only
/// meaningful for large `n`.
pub fn asymptotic_variance(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let n = n as f64;
    Ok(EULER_GAMMA / n - 1.0 / (n * n) - 1.0 / (2.0 * n * n * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn gaussian_gf_examples() {
        assert_eq!(gaussian_gf_eval(c(0.0, 0.0), 0.3, 2.0), c(1.0, 0.0));
        assert_abs_diff_eq!(
            gaussian_gf_eval(c(1.0, 0.0), 0.0, 1.0).re,
            0.606_530_659_712_633_4,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            gaussian_gf_eval(c(2.0, 0.0), 1.0, 0.0).re,
            7.389_056_098_930_65,
            epsilon = 1e-13
        );
    }

    #[test]
    fn closed_form_examples() {
        let v = sigma2_closed_form(c(2.0, 0.0)).unwrap();
        assert!(!v.on_cut);
        assert_abs_diff_eq!(v.value.re, 3.0 - 2.0 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(v.value.im, 0.0);

        let v = sigma2_closed_form(c(-1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(v.value.re, -(2f64.ln()), epsilon = 1e-15);

        let v = sigma2_closed_form(c(0.5, 0.0)).unwrap();
        assert!(v.on_cut);
        assert_abs_diff_eq!(v.value.re, 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v.value.im, PI / 2.0, epsilon = 1e-15);

        // the flagged value is the limit from above
        let above = sigma2_closed_form(c(0.5, 1e-12)).unwrap();
        assert!(!above.on_cut);
        assert_abs_diff_eq!(above.value.im, PI / 2.0, epsilon = 1e-9);

        assert!(sigma2_closed_form(c(0.0, 0.0)).is_err());
        assert!(sigma2_closed_form(c(1.0, 0.0)).is_err());
    }

    #[test]
    fn ode_solution_examples() {
        assert_eq!(
            sigma2_ode_solution(c(0.0, 0.0), 3.0, -0.25).unwrap(),
            c(-0.25, 0.0)
        );
        let v = sigma2_ode_solution(c(0.5, 0.0), EULER_GAMMA, 0.0).unwrap();
        // gamma * ln 2
        assert_abs_diff_eq!(v.re, 0.400_095_410_701_531_65, epsilon = 1e-12);
        assert!(sigma2_ode_solution(c(1.0, 0.0), 1.0, 0.0).is_err());
        assert!(sigma2_ode_solution(c(2.0, 0.0), 1.0, 0.0).is_err());
        assert!(sigma2_ode_solution(c(2.0, 0.1), 1.0, 0.0).is_ok());
    }

    #[test]
    fn residual_examples() {
        let r = ode_residual(|_| Ok(c(4.2, -1.0)), c(0.3, 0.1), 1e-3).unwrap();
        assert!(r.norm() < 1e-10);

        let r = ode_residual(
            |z| sigma2_ode_solution(z, EULER_GAMMA, 0.0),
            c(0.3, 0.0),
            1e-3,
        )
        .unwrap();
        assert!(r.norm() < 1e-6);

        let r = ode_residual(|z| Ok(sigma2_closed_form(z)?.value), c(2.0, 0.0), 1e-3).unwrap();
        assert_abs_diff_eq!(r.re, -3.0 + 2.0 * 2f64.ln(), epsilon = 1e-6);

        // symbolic residual -1 - z - z log((z-1)/z) off the real axis
        let z = c(1.5, 0.7);
        let expected = -1.0 - z - z * ((z - 1.0) / z).ln();
        let r = ode_residual(|z| Ok(sigma2_closed_form(z)?.value), z, 1e-3).unwrap();
        assert!((r - expected).norm() < 1e-6);

        assert!(ode_residual(|z| sigma2_ode_solution(z, 1.0, 0.0), c(0.999, 0.0), 1e-3).is_err());
    }

    #[test]
    fn cauchy_coefficient_examples() {
        let contour = CircleContour::new(0.5, 256).unwrap();
        let geo = cauchy_coefficient(|z| Ok(1.0 / (1.0 - z)), 7, &contour).unwrap();
        assert_abs_diff_eq!(geo.value, 1.0, epsilon = 1e-10);
        assert!(geo.imag_residual.abs() < 1e-10);

        let exp = cauchy_coefficient(|z| Ok(z.exp()), 3, &contour).unwrap();
        assert_abs_diff_eq!(exp.value, 1.0 / 6.0, epsilon = 1e-10);

        let contour = CircleContour::with_radius(0.5).unwrap();
        let log =
            cauchy_coefficient(|z| sigma2_ode_solution(z, EULER_GAMMA, 0.0), 5, &contour).unwrap();
        assert_abs_diff_eq!(log.value, EULER_GAMMA / 5.0, epsilon = 1e-8);
    }

    #[test]
    fn cauchy_coefficient_is_contour_independent() {
        let small = CircleContour::with_radius(0.3).unwrap();
        let large = CircleContour::with_radius(0.6).unwrap();
        let fns: [fn(Complex64) -> Result<Complex64>; 3] = [
            |z| Ok(z.exp()),
            |z| Ok(1.0 / (1.0 - z) + (2.0 * z).sin()),
            |z| sigma2_ode_solution(z, 1.3, 0.4),
        ];
        for f in fns {
            for n in 0..=10 {
                let a = cauchy_coefficient(f, n, &small).unwrap().value;
                let b = cauchy_coefficient(f, n, &large).unwrap().value;
                assert!((a - b).abs() < 1e-8, "n = {n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn contour_validation() {
        assert!(CircleContour::new(1.0, 64).is_err());
        assert!(CircleContour::new(0.0, 64).is_err());
        assert!(CircleContour::new(0.5, 15).is_err());
        assert!(CircleContour::new(0.5, 17).is_err());
        assert!(CircleContour::new(0.5, 16).is_ok());
    }

    #[test]
    fn non_finite_contour_value_is_an_error() {
        let contour = CircleContour::new(0.5, 16).unwrap();
        let r = cauchy_coefficient(|_| Ok(c(f64::NAN, 0.0)), 1, &contour);
        assert!(matches!(r, Err(Error::NonFiniteEvaluation { .. })));
    }

    #[test]
    fn reciprocal_gamma_reference_values() {
        let path = HankelPath::default();
        let cases = [
            (0.0, 0.0),
            (0.5, 1.0 / PI.sqrt()),
            (1.0, 1.0),
            (2.0, 1.0),
            (3.0, 0.5),
        ];
        for (s, expected) in cases {
            let v = reciprocal_gamma_hankel(s, &path).unwrap();
            assert!((v - expected).abs() < 1e-6, "s = {s}: {v} vs {expected}");
        }
    }

    #[test]
    fn printed_exponent_misses_reciprocal_gamma() {
        let path = HankelPath::default();
        let v = hankel_loop_integral(0.5, &path).unwrap().re;
        assert!((v - 1.0 / PI.sqrt()).abs() > 0.1);
        // it is 1/Gamma(-1/2) = -1/(2 sqrt(pi))
        assert_abs_diff_eq!(v, -0.5 / PI.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn hankel_path_validation() {
        let bad_offset = HankelPath {
            offset: 0.5,
            ..HankelPath::default()
        };
        assert!(reciprocal_gamma_hankel(1.0, &bad_offset).is_err());
        let short = HankelPath {
            truncation: 5.0,
            ..HankelPath::default()
        };
        assert!(reciprocal_gamma_hankel(1.0, &short).is_err());
        let unresolved = HankelPath {
            leg_nodes: 1,
            arc_nodes: 1,
            ..HankelPath::default()
        };
        assert!(matches!(
            reciprocal_gamma_hankel(0.5, &unresolved),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn asymptotic_variance_examples() {
        assert_abs_diff_eq!(
            asymptotic_variance(10).unwrap(),
            EULER_GAMMA / 10.0 - 0.0105,
            epsilon = 1e-16
        );
        assert_abs_diff_eq!(
            asymptotic_variance(10).unwrap(),
            0.047_221_57,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            asymptotic_variance(1).unwrap(),
            EULER_GAMMA - 1.5,
            epsilon = 1e-16
        );
        assert!(asymptotic_variance(1).unwrap() < 0.0);
        let v = asymptotic_variance(1_000_000).unwrap();
        assert_abs_diff_eq!(v, 5.772_16e-7, epsilon = 5e-12);
        // corrections are 1/n^2 + 1/(2n^3) = 1.0000005e-12
        assert!((EULER_GAMMA * 1e-6 - v - 1.000_000_5e-12).abs() < 1e-18);
        assert!(asymptotic_variance(0).is_err());
    }

    #[test]
    fn asymptotic_variance_shape() {
        assert!(asymptotic_variance(2).unwrap() < 0.0);
        let mut prev = asymptotic_variance(3).unwrap();
        assert!(prev > 0.0);
        for n in 4..=1_000_000u64 {
            let v = asymptotic_variance(n).unwrap();
            assert!(v > 0.0);
            if n > 4 {
                assert!(v < prev, "not decreasing at n = {n}");
            }
            if n >= 10 {
                assert!((n as f64 * v - EULER_GAMMA).abs() < 2.0 / n as f64);
            }
            prev = v;
        }
    }
}
