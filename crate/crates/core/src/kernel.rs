//! Dimensional constants, the Poisson kernel of the unit ball, spherical cap
//! measures and the cone-exit harmonic function `h_β(x) = P^x(X_τ ∈ A_β)`.
//!
//! Also hosts the two closed-form inequalities that control `h_β` on the
//! left half-ball, with exhaustive grid checkers.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::{norm, MAX_DIM, MIN_DIM};
use crate::quadrature::{gauss_kronrod, trapezoid_doubling, QuadError};

/// Slack absorbed by every inequality check.
pub const INEQUALITY_SLACK: f64 = 1e-12;

const QUAD_BUDGET: usize = 4000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("dimension {0} outside supported range 2..=10")]
    UnsupportedDimension(usize),
    #[error("point must lie in the open unit ball (|x| = {0})")]
    OutsideBall(f64),
    #[error("point must lie on the unit sphere (|y| = {0})")]
    NotOnSphere(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("angle {value} outside {range}")]
    AngleOutOfRange { value: f64, range: &'static str },
    #[error("argument {name} = {value} outside [0, kappa_d = {kappa}]")]
    ArgumentOutOfRange {
        name: &'static str,
        value: f64,
        kappa: f64,
    },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

fn check_dim(d: usize) -> Result<(), KernelError> {
    if (MIN_DIM..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(KernelError::UnsupportedDimension(d))
    }
}

/// `Γ(n/2)` for a positive integer `n`.
fn gamma_half(n: usize) -> f64 {
    let (mut g, mut k) = if n % 2 == 0 { (1.0, 2) } else { (PI.sqrt(), 1) };
    while k < n {
        g *= k as f64 / 2.0;
        k += 2;
    }
    g
}

/// Surface area of the unit sphere in `R^n`, `2 π^{n/2} / Γ(n/2)`.
/// `n = 1` gives the two-point sphere `S^0` of measure 2.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma_half(n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionConstants {
    pub d: usize,
    /// `[4(d+2)]^{-1/2}`
    pub kappa_d: f64,
    /// `arcsin(kappa_d)`
    pub alpha_d: f64,
    /// Area of the unit sphere of `R^d`.
    pub omega_dm1: f64,
}

impl DimensionConstants {
    pub fn new(d: usize) -> Result<Self, KernelError> {
        check_dim(d)?;
        let kappa_d = (4.0 * (d as f64 + 2.0)).sqrt().recip();
        Ok(Self {
            d,
            kappa_d,
            alpha_d: kappa_d.asin(),
            omega_dm1: sphere_area(d),
        })
    }
}

/// The cap `A_β` of unit vectors within angle `β` of `e_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapSpec {
    pub beta: f64,
    pub d: usize,
    pub kappa_beta: f64,
    pub area: f64,
}

impl CapSpec {
    /// A cap with `β ∈ (0, α_d]`, the range where the left-half-ball bound holds.
    pub fn new(beta: f64, d: usize) -> Result<Self, KernelError> {
        let c = DimensionConstants::new(d)?;
        if !(beta > 0.0 && beta <= c.alpha_d) {
            return Err(KernelError::AngleOutOfRange {
                value: beta,
                range: "(0, alpha_d]",
            });
        }
        Self::unrestricted(beta, d)
    }

    /// Any cap with `β ∈ (0, π)`.
    pub fn unrestricted(beta: f64, d: usize) -> Result<Self, KernelError> {
        check_dim(d)?;
        if !(beta > 0.0 && beta < PI) {
            return Err(KernelError::AngleOutOfRange {
                value: beta,
                range: "(0, pi)",
            });
        }
        Ok(Self {
            beta,
            d,
            kappa_beta: beta.sin(),
            area: cap_area(beta, d)?,
        })
    }

    /// `h_β(0) = σ(A_β) / ω_{d-1}`.
    pub fn center_value(&self) -> f64 {
        self.area / sphere_area(self.d)
    }
}

/// Poisson kernel of the unit ball, `ω_{d-1}^{-1} (1 - |x|²) / |x - y|^d`.
pub fn poisson_eval(x: &[f64], y: &[f64], d: usize) -> Result<f64, KernelError> {
    check_dim(d)?;
    for got in [x.len(), y.len()] {
        if got != d {
            return Err(KernelError::DimensionMismatch { expected: d, got });
        }
    }
    let rx = norm(x);
    if rx >= 1.0 {
        return Err(KernelError::OutsideBall(rx));
    }
    let ry = norm(y);
    if (ry - 1.0).abs() > 1e-12 {
        return Err(KernelError::NotOnSphere(ry));
    }
    let dist2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((1.0 - rx * rx) / (sphere_area(d) * dist2.powf(d as f64 / 2.0)))
}

/// Surface measure of `{y ∈ S^{d-1} : angle(y, e_1) < β}` for `β ∈ (0, π]`.
pub fn cap_area(beta: f64, d: usize) -> Result<f64, KernelError> {
    check_dim(d)?;
    if !(beta > 0.0 && beta <= PI) {
        return Err(KernelError::AngleOutOfRange {
            value: beta,
            range: "(0, pi]",
        });
    }
    if d == 2 {
        return Ok(2.0 * beta);
    }
    if beta == PI {
        return Ok(sphere_area(d));
    }
    let m = (d - 2) as i32;
    let r = gauss_kronrod(|t: f64| t.sin().powi(m), 0.0, beta, 1e-15, QUAD_BUDGET)?;
    Ok(sphere_area(d - 1) * r.value)
}

/// `h_β(x) = ∫_{A_β} P_d(x, y) σ(dy)` by adaptive quadrature to absolute
/// tolerance `tol`.
///
/// `y` is parametrised by its polar angle `θ` from `e_1` and, for `d >= 3`,
/// the angle `φ` between its transverse part and that of `x`, so only a
/// two-dimensional integral remains whatever `d` is.
pub fn h_beta_quad(x: &[f64], cap: &CapSpec, tol: f64) -> Result<f64, KernelError> {
    let d = cap.d;
    if x.len() != d {
        return Err(KernelError::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let s = x.iter().map(|c| c * c).sum::<f64>();
    if s >= 1.0 {
        return Err(KernelError::OutsideBall(s.sqrt()));
    }
    let a = x[0];
    let b = (s - a * a).max(0.0).sqrt();
    let scale = (1.0 - s) / sphere_area(d);
    let half_d = d as f64 / 2.0;
    let kernel = move |c: f64| scale / c.max(f64::MIN_POSITIVE).powf(half_d);
    let beta = cap.beta;

    let value = if d == 2 {
        let f = |t: f64| kernel(1.0 + s - 2.0 * (a * t.cos() + b * t.sin()));
        // The integrand peaks near the polar angle of x; splitting at 0 keeps
        // the two halves comparable.
        gauss_kronrod(f, -beta, 0.0, tol / 2.0, QUAD_BUDGET)?.value
            + gauss_kronrod(f, 0.0, beta, tol / 2.0, QUAD_BUDGET)?.value
    } else if b == 0.0 {
        let m = (d - 2) as i32;
        let full = sphere_area(d - 1);
        let f = |t: f64| t.sin().powi(m) * full * kernel(1.0 + s - 2.0 * a * t.cos());
        gauss_kronrod(f, 0.0, beta, tol, QUAD_BUDGET)?.value
    } else {
        let m = (d - 2) as i32;
        let inner_w = sphere_area(d - 2);
        let inner_tol = 0.1 * tol / beta;
        let err = std::cell::Cell::new(None);
        let f = |t: f64| {
            let (st, ct) = t.sin_cos();
            let base = 1.0 + s - 2.0 * a * ct;
            let g = |p: f64| kernel(base - 2.0 * b * st * p.cos());
            let inner = if d == 3 {
                trapezoid_doubling(g, 0.0, PI, inner_tol, 22)
            } else {
                let k = (d - 3) as i32;
                gauss_kronrod(|p: f64| p.sin().powi(k) * g(p), 0.0, PI, inner_tol, QUAD_BUDGET)
            };
            match inner {
                Ok(r) => st.powi(m) * inner_w * r.value,
                Err(e) => {
                    err.set(Some(e));
                    0.0
                }
            }
        };
        let r = gauss_kronrod(f, 0.0, beta, 0.9 * tol, QUAD_BUDGET)?;
        if let Some(e) = err.take() {
            return Err(e.into());
        }
        r.value
    };
    Ok(value.clamp(0.0, 1.0))
}

fn check_unit_interval(name: &'static str, v: f64, kappa: f64) -> Result<(), KernelError> {
    if v >= 0.0 && v <= kappa {
        Ok(())
    } else {
        Err(KernelError::ArgumentOutOfRange {
            name,
            value: v,
            kappa,
        })
    }
}

/// `g(x) - f(x)` with `f(x) = (κ_d - x)/(κ_d + x)` and
/// `g(x) = [(1 + x² - 2xκ_d)/(1 + x² + 2xκ_d)]^{1 + d/2}`; non-negative on
/// `[0, κ_d]`.
pub fn lemma24_gap(d: usize, x: f64) -> Result<f64, KernelError> {
    let k = DimensionConstants::new(d)?.kappa_d;
    check_unit_interval("x", x, k)?;
    let f = (k - x) / (k + x);
    let g = ((1.0 + x * x - 2.0 * x * k) / (1.0 + x * x + 2.0 * x * k)).powf(1.0 + d as f64 / 2.0);
    Ok(g - f)
}

/// `(1-x²)/(1+x²-2xz)^{d/2} + (1-x²)/(1+x²+2xz)^{d/2}`, bounded by 2 on
/// `[0, κ_d]²`.
pub fn lemma25_f(d: usize, x: f64, z: f64) -> Result<f64, KernelError> {
    let k = DimensionConstants::new(d)?.kappa_d;
    check_unit_interval("x", x, k)?;
    check_unit_interval("z", z, k)?;
    let e = d as f64 / 2.0;
    let num = 1.0 - x * x;
    Ok(num / (1.0 + x * x - 2.0 * x * z).powf(e) + num / (1.0 + x * x + 2.0 * x * z).powf(e))
}

/// Worst case of an exhaustive grid check. `worst_gap >= -INEQUALITY_SLACK`
/// means the inequality held at every grid node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCheck {
    pub d: usize,
    pub grid_size: usize,
    pub worst_gap: f64,
    pub worst_at: (f64, f64),
}

impl GridCheck {
    pub fn pass(&self) -> bool {
        self.worst_gap >= -INEQUALITY_SLACK
    }
}

/// `min_x lemma24_gap` over `n` equispaced nodes of `[0, κ_d]`.
pub fn lemma24_grid(d: usize, n: usize) -> Result<GridCheck, KernelError> {
    let k = DimensionConstants::new(d)?.kappa_d;
    let mut worst = (f64::INFINITY, (0.0, 0.0));
    for i in 0..n {
        let x = k * (i as f64 / (n - 1).max(1) as f64);
        let g = lemma24_gap(d, x)?;
        if g < worst.0 {
            worst = (g, (x, 0.0));
        }
    }
    Ok(GridCheck {
        d,
        grid_size: n,
        worst_gap: worst.0,
        worst_at: worst.1,
    })
}

/// `min (2 - lemma25_f)` over an `n × n` grid of `[0, κ_d]²`.
pub fn lemma25_grid(d: usize, n: usize) -> Result<GridCheck, KernelError> {
    let k = DimensionConstants::new(d)?.kappa_d;
    let nodes: Vec<f64> = (0..n)
        .map(|i| k * (i as f64 / (n - 1).max(1) as f64))
        .collect();
    let mut worst = (f64::INFINITY, (0.0, 0.0));
    for &x in &nodes {
        for &z in &nodes {
            let g = 2.0 - lemma25_f(d, x, z)?;
            if g < worst.0 {
                worst = (g, (x, z));
            }
        }
    }
    Ok(GridCheck {
        d,
        grid_size: n * n,
        worst_gap: worst.0,
        worst_at: worst.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        let c = DimensionConstants::new(2).unwrap();
        assert_eq!(c.kappa_d, 0.25);
        assert!((c.omega_dm1 - 2.0 * PI).abs() < 1e-14);
        let c3 = DimensionConstants::new(3).unwrap();
        assert!((c3.omega_dm1 - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert_eq!(sphere_area(1), 2.0);
        for d in 2..=10 {
            let c = DimensionConstants::new(d).unwrap();
            assert!(c.kappa_d > 0.0 && c.kappa_d <= 0.25);
            assert!(c.alpha_d > 0.0 && c.alpha_d < PI / 2.0);
        }
        assert!(DimensionConstants::new(1).is_err());
    }

    #[test]
    fn poisson_at_center() {
        let v = poisson_eval(&[0.0, 0.0], &[0.6, 0.8], 2).unwrap();
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let v = poisson_eval(&[0.0; 3], &[0.0, 0.0, 1.0], 3).unwrap();
        assert!((v - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!(poisson_eval(&[1.0, 0.0], &[0.0, 1.0], 2).is_err());
        assert!(poisson_eval(&[0.1, 0.0], &[0.0, 0.9], 2).is_err());
    }

    #[test]
    fn poisson_integrates_to_one() {
        // Spherical coordinates about e_1 in d = 3; independent of h_beta_quad.
        let x = [0.3, 0.0, 0.0];
        let outer = gauss_kronrod(
            |t: f64| {
                let (st, ct) = t.sin_cos();
                let inner = gauss_kronrod(
                    |p: f64| {
                        let y = [ct, st * p.cos(), st * p.sin()];
                        poisson_eval(&x, &y, 3).unwrap()
                    },
                    0.0,
                    2.0 * PI,
                    1e-12,
                    200,
                )
                .unwrap();
                st * inner.value
            },
            0.0,
            PI,
            1e-11,
            500,
        )
        .unwrap();
        assert!((outer.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn cap_area_values() {
        assert!((cap_area(PI / 4.0, 2).unwrap() - PI / 2.0).abs() < 1e-15);
        for d in 2..=6 {
            assert!((cap_area(PI, d).unwrap() - sphere_area(d)).abs() < 1e-12);
        }
        let c = cap_area(PI / 3.0, 3).unwrap();
        assert!((c - 2.0 * PI * (1.0 - (PI / 3.0).cos())).abs() < 1e-13);
        assert!((c - PI).abs() < 1e-13);
        assert!(cap_area(0.0, 3).is_err());
        assert!(cap_area(4.0, 3).is_err());
    }

    #[test]
    fn cap_area_increasing() {
        for d in 2..=10 {
            let mut prev = 0.0;
            for i in 1..=50 {
                let a = cap_area(PI * i as f64 / 50.0, d).unwrap();
                assert!(a > prev);
                prev = a;
            }
        }
    }

    #[test]
    fn h_beta_center_is_cap_fraction() {
        for d in 2..=6 {
            let c = DimensionConstants::new(d).unwrap();
            let cap = CapSpec::new(c.alpha_d / 2.0, d).unwrap();
            let h = h_beta_quad(&vec![0.0; d], &cap, 1e-12).unwrap();
            assert!((h - cap.center_value()).abs() < 1e-11, "d={d}");
        }
        let cap = CapSpec::new(0.1, 2).unwrap();
        assert!((cap.center_value() - 0.1 / PI).abs() < 1e-15);
    }

    #[test]
    fn h_beta_matches_brute_force_3d() {
        // Off-axis point; brute-force product Gauss–Kronrod in (θ, φ ∈ [0, 2π)).
        let cap = CapSpec::unrestricted(0.7, 3).unwrap();
        let x = [0.2, -0.35, 0.25];
        let brute = gauss_kronrod(
            |t: f64| {
                let (st, ct) = t.sin_cos();
                st * gauss_kronrod(
                    |p: f64| poisson_eval(&x, &[ct, st * p.cos(), st * p.sin()], 3).unwrap(),
                    0.0,
                    2.0 * PI,
                    1e-13,
                    500,
                )
                .unwrap()
                .value
            },
            0.0,
            0.7,
            1e-12,
            500,
        )
        .unwrap()
        .value;
        let h = h_beta_quad(&x, &cap, 1e-12).unwrap();
        assert!((h - brute).abs() < 1e-10, "{h} vs {brute}");
    }

    #[test]
    fn h_beta_matches_brute_force_4d() {
        let cap = CapSpec::unrestricted(0.9, 4).unwrap();
        let x = [0.1, 0.3, 0.0, 0.2];
        // Full hyperspherical coordinates (θ, ψ, φ) on S^3.
        let brute = gauss_kronrod(
            |t: f64| {
                let (st, ct) = t.sin_cos();
                st * st
                    * gauss_kronrod(
                        |psi: f64| {
                            let (sp, cp) = psi.sin_cos();
                            sp * gauss_kronrod(
                                |phi: f64| {
                                    let y = [ct, st * cp, st * sp * phi.cos(), st * sp * phi.sin()];
                                    poisson_eval(&x, &y, 4).unwrap()
                                },
                                0.0,
                                2.0 * PI,
                                1e-12,
                                300,
                            )
                            .unwrap()
                            .value
                        },
                        0.0,
                        PI,
                        1e-11,
                        300,
                    )
                    .unwrap()
                    .value
            },
            0.0,
            0.9,
            1e-10,
            300,
        )
        .unwrap()
        .value;
        let h = h_beta_quad(&x, &cap, 1e-11).unwrap();
        assert!((h - brute).abs() < 1e-8, "{h} vs {brute}");
    }

    #[test]
    fn h_beta_axis_and_left_half() {
        for d in [2usize, 3] {
            let c = DimensionConstants::new(d).unwrap();
            let cap = CapSpec::new(c.alpha_d / 2.0, d).unwrap();
            let h0 = cap.center_value();
            for i in 1..10 {
                let mut x = vec![0.0; d];
                x[0] = i as f64 / 10.0;
                assert!(h_beta_quad(&x, &cap, 1e-10).unwrap() >= h0 - 1e-9);
                let mut y = vec![0.0; d];
                y[1] = i as f64 / 10.0;
                assert!(h_beta_quad(&y, &cap, 1e-10).unwrap() <= h0 + 1e-9);
            }
        }
    }

    #[test]
    fn h_beta_decreasing_in_transverse_coordinate() {
        for d in [2usize, 3] {
            let c = DimensionConstants::new(d).unwrap();
            let cap = CapSpec::new(c.alpha_d / 2.0, d).unwrap();
            let mut x2 = cap.kappa_beta + 1e-3;
            let mut prev = f64::INFINITY;
            while x2 < 0.99 {
                let mut x = vec![0.0; d];
                x[1] = x2;
                let h = h_beta_quad(&x, &cap, 1e-12).unwrap();
                assert!(h <= prev + 1e-11, "d={d} x2={x2}");
                prev = h;
                x2 += 0.02;
            }
        }
    }

    #[test]
    fn h_beta_is_harmonic() {
        let step = 1e-3;
        for d in [2usize, 3] {
            let cap = CapSpec::unrestricted(0.6, d).unwrap();
            let pts: [[f64; 3]; 4] = [
                [0.3, 0.1, 0.2],
                [-0.4, 0.3, -0.1],
                [0.6, -0.2, 0.1],
                [0.05, 0.55, 0.3],
            ];
            for p in pts {
                let x = &p[..d];
                let c = h_beta_quad(x, &cap, 1e-13).unwrap();
                let mut lap = 0.0;
                for k in 0..d {
                    let mut xp = x.to_vec();
                    let mut xm = x.to_vec();
                    xp[k] += step;
                    xm[k] -= step;
                    lap += h_beta_quad(&xp, &cap, 1e-13).unwrap()
                        + h_beta_quad(&xm, &cap, 1e-13).unwrap()
                        - 2.0 * c;
                }
                lap /= step * step;
                assert!(lap.abs() < 1e-4, "d={d} p={p:?} lap={lap}");
                assert!((0.0..=1.0).contains(&c));
            }
        }
    }

    #[test]
    fn lemma24_endpoints_and_errors() {
        for d in 2..=10 {
            let k = DimensionConstants::new(d).unwrap().kappa_d;
            assert_eq!(lemma24_gap(d, 0.0).unwrap(), 0.0);
            assert!(lemma24_gap(d, k).unwrap() > 0.0);
            assert!(lemma24_gap(d, k * 1.01).is_err());
            assert!(lemma24_gap(d, -1e-3).is_err());
        }
    }

    #[test]
    fn lemma25_values() {
        for d in 2..=10 {
            let k = DimensionConstants::new(d).unwrap().kappa_d;
            assert_eq!(lemma25_f(d, 0.0, 0.3 * k).unwrap(), 2.0);
        }
        let k = DimensionConstants::new(2).unwrap().kappa_d;
        assert!(lemma25_f(2, k, k).unwrap() < 2.0);
        assert!(lemma25_f(2, k, 2.0 * k).is_err());
    }

    #[test]
    fn small_grids_pass() {
        for d in 2..=10 {
            assert!(lemma24_grid(d, 1000).unwrap().pass());
            assert!(lemma25_grid(d, 60).unwrap().pass());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn scalar_inequalities_hold_off_grid(d in 2usize..=10, s in 0.0f64..=1.0, t in 0.0f64..=1.0) {
                let k = DimensionConstants::new(d).unwrap().kappa_d;
                prop_assert!(lemma24_gap(d, s * k).unwrap() >= -INEQUALITY_SLACK);
                prop_assert!(lemma25_f(d, s * k, t * k).unwrap() <= 2.0 + INEQUALITY_SLACK);
            }

            #[test]
            fn cap_area_is_increasing(d in 2usize..=7, a in 0.01f64..3.1, b in 0.01f64..3.1) {
                prop_assume!((a - b).abs() > 1e-6);
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                prop_assert!(cap_area(lo, d).unwrap() < cap_area(hi, d).unwrap());
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn h_beta_is_a_probability(
                d in 2usize..=3,
                r in 0.0f64..0.95,
                theta in 0.0f64..PI,
                frac in 0.05f64..=1.0,
            ) {
                let alpha = DimensionConstants::new(d).unwrap().alpha_d;
                let cap = CapSpec::new(frac * alpha, d).unwrap();
                let mut x = vec![0.0; d];
                x[0] = r * theta.cos();
                x[1] = r * theta.sin();
                let h = h_beta_quad(&x, &cap, 1e-8).unwrap();
                prop_assert!((-1e-8..=1.0 + 1e-8).contains(&h), "h = {h}");
            }
        }
    }
}
