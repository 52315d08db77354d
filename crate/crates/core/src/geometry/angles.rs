use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::gauss_kronrod;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
/// Largest acceptable imaginary residual of an angle integral.
const IMAG_TOL: f64 = 1e-8;

/// Dawson's integral `e^{-x^2} int_0^x e^{t^2} dt`.
///
/// Maclaurin series near the origin, Rybicki's exponentially convergent
/// sampling sum elsewhere.
pub fn dawson(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 0.2 {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term.abs() > 1e-18 * sum.abs() {
            n += 1.0;
            term *= -2.0 * x2 / (2.0 * n + 1.0);
            sum += term;
        }
        return sum;
    }
    if ax > 1e8 {
        return 0.5 / x * (1.0 + 0.5 / (x * x));
    }
    const H: f64 = 0.2;
    const TERMS: usize = 17;
    let n0 = 2.0 * (0.5 * ax / H).round();
    let xp = ax - n0 * H;
    let mut e1 = (2.0 * xp * H).exp();
    let e2 = e1 * e1;
    let mut d1 = n0 + 1.0;
    let mut d2 = d1 - 2.0;
    let mut sum = 0.0;
    for i in 0..TERMS {
        let odd = (2 * i + 1) as f64 * H;
        sum += (-odd * odd).exp() * (e1 / d1 + 1.0 / (d2 * e1));
        d1 += 2.0;
        d2 -= 2.0;
        e1 *= e2;
    }
    FRAC_1_SQRT_PI * x.signum() * (-xp * xp).exp() * sum
}

/// A real angle value together with the imaginary part its integral left
/// behind (zero in exact arithmetic).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleValue {
    pub value: f64,
    pub imag_residual: f64,
}

/// `(1/sqrt(pi)) int e^{-l^2} prod_i h_i(l) dl` with
/// `h_i(l) = sqrt(pi)/2 e^{-l^2/theta_i} + i D(l/sqrt(theta_i))`.
fn gaussian_product_integral(thetas: &[f64], log_prefactor: f64) -> Result<Complex64> {
    if thetas.is_empty() || thetas.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::domain("theta values must be positive and finite"));
    }
    let half_sqrt_pi = 0.5 * PI.sqrt();
    let roots: Vec<f64> = thetas.iter().map(|t| t.sqrt()).collect();
    let f = |l: f64| {
        let mut p = Complex64::new((-l * l).exp(), 0.0);
        for (&t, &r) in thetas.iter().zip(&roots) {
            p *= Complex64::new(half_sqrt_pi * (-l * l / t).exp(), dawson(l / r));
        }
        p
    };
    // |h_i| <= 1.04, so the tail past L stays below ~1e-17 after scaling
    let len = (40.0 + 0.04 * thetas.len() as f64 + log_prefactor.max(0.0)).sqrt();
    let smin = roots.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut breaks = vec![0.0];
    let mut b = smin;
    while b < len {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(len);
    let neg: Vec<f64> = breaks.iter().rev().map(|&v| -v).collect();
    let right = gauss_kronrod(f, &breaks, 1e-300, 1e-13, 4000);
    let left = gauss_kronrod(f, &neg, 1e-300, 1e-13, 4000);
    if !right.converged || !left.converged {
        return Err(Error::Numerical("angle integral did not converge".into()));
    }
    Ok((left.value + right.value) * FRAC_1_SQRT_PI)
}

/// `J(m', theta) = (1/sqrt(pi)) int (int_0^inf e^{-theta v^2 + 2 i v l} dv)^{m'} e^{-l^2} dl`.
pub fn j_integral(m_prime: usize, theta: f64) -> Result<Complex64> {
    if m_prime == 0 {
        return Err(Error::domain("m' must be at least 1"));
    }
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::domain(format!("theta = {theta} must be positive")));
    }
    let i = gaussian_product_integral(&vec![theta; m_prime], 0.0)?;
    Ok(i * theta.powf(-0.5 * m_prime as f64))
}

/// Internal angle `B(alpha', m')` of a cone spanned by `m'` unit vectors
/// with pairwise inner product `alpha'`.
pub fn internal_angle(alpha_prime: f64, m_prime: usize) -> Result<f64> {
    Ok(internal_angle_detailed(alpha_prime, m_prime)?.value)
}

/// [`internal_angle`] with the imaginary residual exposed.
pub fn internal_angle_detailed(alpha_prime: f64, m_prime: usize) -> Result<AngleValue> {
    if !(alpha_prime > 0.0 && alpha_prime < 1.0) {
        return Err(Error::domain(format!(
            "alpha' = {alpha_prime} outside (0, 1)"
        )));
    }
    let theta = (1.0 - alpha_prime) / alpha_prime;
    let mp = m_prime as f64;
    let j = j_integral(m_prime, theta)?;
    let scale =
        theta.powf(0.5 * (mp - 1.0)) * ((mp - 1.0) * alpha_prime + 1.0).sqrt() * PI.powf(-0.5 * mp)
            / alpha_prime.sqrt();
    checked(j * scale)
}

fn checked(v: Complex64) -> Result<AngleValue> {
    if v.im.abs() > IMAG_TOL || !v.re.is_finite() {
        return Err(Error::Numerical(format!(
            "angle integral left imaginary residual {:e}",
            v.im
        )));
    }
    Ok(AngleValue {
        value: v.re,
        imag_residual: v.im,
    })
}

/// Internal angle at a face `F` (the centroid of `k` unit vertices) inside
/// a face `G` whose remaining vertices are `C_i e_i`, given `theta_i = C_i^2 k`.
///
/// Equal `theta` reproduces `B(1/(1+theta), m')`; as one `theta_i` grows the
/// value approaches half of the angle without that coordinate.
pub fn internal_angle_weighted(thetas: &[f64]) -> Result<f64> {
    if thetas.is_empty() {
        return Ok(1.0);
    }
    let d = thetas.len() as f64;
    let s: f64 = thetas.iter().map(|t| 1.0 / t).sum();
    let log_pref = 0.5 * s.ln_1p();
    let i = gaussian_product_integral(thetas, log_pref)?;
    let v = i * (PI.powf(-0.5 * d) * log_pref.exp());
    Ok(checked(v)?.value)
}

/// Internal angle at the same face `F` inside the whole weighted
/// cross-polytope, where every coordinate outside `F` is free in sign:
/// `P(Z >= sum_i |g_i| / sqrt(theta_i))` for independent standard normals.
///
/// Evaluated by Gil-Pelaez inversion. The half-normal characteristic
/// function is `e^{-u^2/2} + i (2/sqrt(pi)) D(u/sqrt(2))`.
pub fn internal_angle_polytope(thetas: &[f64]) -> Result<f64> {
    if thetas.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::domain("theta values must be positive and finite"));
    }
    if thetas.is_empty() {
        return Ok(0.5);
    }
    let scales: Vec<f64> = thetas.iter().map(|t| 1.0 / t.sqrt()).collect();
    let two_over_sqrt_pi = 2.0 / PI.sqrt();
    let f = |t: f64| {
        let mut phi = Complex64::new((-0.5 * t * t).exp(), 0.0);
        for &a in &scales {
            let u = a * t;
            phi *= Complex64::new(
                (-0.5 * u * u).exp(),
                -two_over_sqrt_pi * dawson(u * FRAC_1_SQRT_2),
            );
        }
        Complex64::new(phi.im / t, 0.0)
    };
    // e^{-t^2/2} < 1e-17 past the last break
    let len = 80f64.sqrt();
    let mut breaks = vec![0.0];
    let amax = scales.iter().cloned().fold(0.0, f64::max);
    let mut b = (0.25 / amax).min(0.25);
    while b < len {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(len);
    let r = gauss_kronrod(f, &breaks, 1e-15, 1e-13, 4000);
    if !r.converged {
        return Err(Error::Numerical(
            "polytope angle integral did not converge".into(),
        ));
    }
    Ok((0.5 + r.value.re / PI).clamp(0.0, 1.0))
}

/// `1/(1 + C^2 k)`, the inner product between generators of the weighted
/// face cone.
pub fn inner_product_param(c: f64, k: f64) -> Result<f64> {
    if !(c >= 1.0) || !(k >= 0.0) {
        return Err(Error::domain("need C >= 1 and k >= 0"));
    }
    Ok(1.0 / (1.0 + c * c * k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dawson_series(x: f64, terms: usize) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..terms {
            term *= -2.0 * x * x / (2 * n + 1) as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn dawson_values() {
        assert_eq!(dawson(0.0), 0.0);
        assert_eq!(dawson(-1.3), -dawson(1.3));
        let oracle = dawson_series(1.0, 50);
        assert!((oracle - 0.538_079_506_9).abs() < 1e-10);
        assert!((dawson(1.0) / oracle - 1.0).abs() < 1e-10);
        for x in [0.05, 0.19, 0.21, 0.5, 1.5, 2.5] {
            let s = dawson_series(x, 120);
            assert!((dawson(x) / s - 1.0).abs() < 1e-10, "x={x}");
        }
        // large-argument asymptotics
        for x in [20.0f64, 150.0, 1e5] {
            let u = 1.0 / (2.0 * x * x);
            let a = 0.5 / x * (1.0 + u + 3.0 * u * u + 15.0 * u.powi(3) + 105.0 * u.powi(4));
            assert!((dawson(x) / a - 1.0).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn dawson_derivative_identity() {
        // D' = 1 - 2 x D
        for x in [0.3, 0.9, 2.0, 4.0] {
            let h = 1e-5;
            let d = (dawson(x + h) - dawson(x - h)) / (2.0 * h);
            assert!((d - (1.0 - 2.0 * x * dawson(x))).abs() < 1e-8);
        }
    }

    #[test]
    fn j_closed_form_at_one() {
        for theta in [0.5, 1.0, 2.0, 3.0] {
            let j = j_integral(1, theta).unwrap();
            let expect = 0.5 * (PI / (theta + 1.0)).sqrt();
            assert!((j.re - expect).abs() < 1e-8, "theta={theta}");
            assert!(j.im.abs() < 1e-8);
        }
        assert!(j_integral(1, 0.0).is_err());
        assert!(j_integral(0, 1.0).is_err());
    }

    #[test]
    fn j_imaginary_parts_vanish() {
        for m in 1..=6 {
            for theta in [0.5, 1.0, 2.0] {
                assert!(j_integral(m, theta).unwrap().im.abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn internal_angle_known_values() {
        for i in 1..10 {
            let a = i as f64 / 10.0;
            assert!((internal_angle(a, 1).unwrap() - 0.5).abs() < 1e-8);
        }
        // two unit vectors at 60 degrees
        assert!((internal_angle(0.5, 2).unwrap() - 1.0 / 6.0).abs() < 1e-9);
        // generic two-vector cone: angle / (2 pi)
        for a in [0.1f64, 0.3, 0.8] {
            let expect = a.acos() / (2.0 * PI);
            assert!((internal_angle(a, 2).unwrap() - expect).abs() < 1e-9);
        }
        // nearly orthogonal generators: quarter plane and octant
        assert!((internal_angle(0.001, 2).unwrap() - 0.25).abs() < 2e-3);
        assert!((internal_angle(0.001, 3).unwrap() - 0.125).abs() < 2e-3);
        // nearly parallel generators: vanishing angle
        assert!(internal_angle(0.999, 2).unwrap() < 0.01);
        assert!(internal_angle(0.0, 2).is_err());
        assert!(internal_angle(1.0, 2).is_err());
    }

    #[test]
    fn internal_angle_in_unit_interval() {
        for m in 1..=7 {
            for a in [0.05, 0.2, 0.5, 0.9] {
                let b = internal_angle(a, m).unwrap();
                assert!(b > 0.0 && b <= 1.0, "B({a},{m}) = {b}");
            }
        }
    }

    #[test]
    fn three_vector_cone_matches_spherical_triangle() {
        // solid angle of a cone over three unit vectors with pairwise cos a:
        // tan(Omega/2) = |det| / (1 + 3a)
        for a in [0.2f64, 0.5] {
            let det = (1.0 - a) * (1.0 - a) * (1.0 + 2.0 * a);
            let omega = 2.0 * (det.sqrt() / (1.0 + 3.0 * a)).atan();
            let expect = omega / (4.0 * PI);
            assert!((internal_angle(a, 3).unwrap() - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn weighted_matches_unweighted_for_equal_thetas() {
        for (a, m) in [(0.5, 2usize), (0.25, 4), (0.1, 6)] {
            let theta = (1.0 - a) / a;
            let w = internal_angle_weighted(&vec![theta; m]).unwrap();
            assert!((w - internal_angle(a, m).unwrap()).abs() < 1e-10);
        }
        assert_eq!(internal_angle_weighted(&[]).unwrap(), 1.0);
    }

    #[test]
    fn heavy_coordinates_halve_the_angle() {
        let big = crate::solver::W_INF * crate::solver::W_INF;
        for (k, k1, m) in [(1usize, 2usize, 2usize), (1, 3, 3), (2, 4, 2), (2, 3, 4)] {
            let theta = k as f64;
            let reduced = internal_angle_weighted(&vec![theta; m]).unwrap();
            let mut thetas = vec![big * k as f64; k1 - k];
            thetas.extend(vec![theta; m]);
            let full = internal_angle_weighted(&thetas).unwrap();
            let expect = reduced / 2f64.powi((k1 - k) as i32);
            assert!((full - expect).abs() < 1e-5 * expect, "{full} vs {expect}");
        }
    }

    #[test]
    fn inner_product_examples() {
        assert_eq!(inner_product_param(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(inner_product_param(2.0, 3.0).unwrap(), 1.0 / 13.0);
        let c = 1.0 / (1.0f64 - 0.5).sqrt();
        assert!((inner_product_param(c, 8.0).unwrap() - 1.0 / 17.0).abs() < 1e-16);
        let c = 1.0 / (1.0f64 - 0.75).sqrt();
        assert_eq!(inner_product_param(c, 3.0).unwrap(), 1.0 / 13.0);
        assert!(inner_product_param(0.5, 1.0).is_err());
    }

    #[test]
    fn polytope_angle_closed_forms() {
        assert_eq!(internal_angle_polytope(&[]).unwrap(), 0.5);
        // Z >= |g| is a right-angle wedge
        assert!((internal_angle_polytope(&[1.0]).unwrap() - 0.25).abs() < 1e-12);
        // Z >= |g| / sqrt(theta): half-angle atan(sqrt(theta)) on each side
        for theta in [0.25f64, 3.0, 100.0] {
            let want = 0.5 - (1.0 / theta.sqrt()).atan() / PI;
            let got = internal_angle_polytope(&[theta]).unwrap();
            assert!((got - want).abs() < 1e-12, "theta {theta}: {got} vs {want}");
        }
    }

    #[test]
    fn polytope_angle_matches_sampling() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        use rand_distr::StandardNormal;
        let thetas = [1.0f64, 1.0, 4.0, 1e4];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trials = 400_000;
        let hits = (0..trials)
            .filter(|_| {
                let z: f64 = rng.sample(StandardNormal);
                let s: f64 = thetas
                    .iter()
                    .map(|t| rng.sample::<f64, _>(StandardNormal).abs() / t.sqrt())
                    .sum();
                z >= s
            })
            .count();
        let p = hits as f64 / trials as f64;
        let got = internal_angle_polytope(&thetas).unwrap();
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((got - p).abs() < 4.0 * se, "{got} vs {p}");
    }
}
