//! Amplitude laws for the magnitudes of nonzero signal entries.
//!
//! Every built-in law is scaled to unit mean magnitude, so the partial first
//! moment `int_0^y x f(x) dx` tends to 1 as `y` grows. Each law also records
//! the order `t` of its first nonvanishing derivative at the origin, which
//! controls how fast support recovery degrades.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AmplitudeKind {
    HalfNormal,
    Uniform,
    /// Density proportional to `x^t` on a bounded interval.
    Power(u32),
    /// Every magnitude equals 1.
    PointMass,
}

/// A unit-mean law on `[0, inf)` for the magnitude of a nonzero entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AmplitudeDistribution {
    kind: AmplitudeKind,
    /// Half-normal: sigma. Uniform and power: upper end of the support.
    /// Point mass: the atom.
    scale: f64,
}

impl AmplitudeDistribution {
    pub fn new(kind: AmplitudeKind) -> Self {
        let scale = match kind {
            // sigma * sqrt(2/pi) = 1
            AmplitudeKind::HalfNormal => (PI / 2.0).sqrt(),
            AmplitudeKind::Uniform => 2.0,
            AmplitudeKind::Power(t) => (t as f64 + 2.0) / (t as f64 + 1.0),
            AmplitudeKind::PointMass => 1.0,
        };
        Self { kind, scale }
    }

    pub fn half_normal() -> Self {
        Self::new(AmplitudeKind::HalfNormal)
    }

    pub fn uniform() -> Self {
        Self::new(AmplitudeKind::Uniform)
    }

    pub fn power(t: u32) -> Self {
        Self::new(AmplitudeKind::Power(t))
    }

    pub fn point_mass() -> Self {
        Self::new(AmplitudeKind::PointMass)
    }

    pub fn kind(&self) -> AmplitudeKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Smallest `t` with `f^(t)(0) != 0`; `None` stands for "infinite"
    /// (point mass).
    pub fn t_order(&self) -> Option<u32> {
        match self.kind {
            AmplitudeKind::HalfNormal | AmplitudeKind::Uniform => Some(0),
            AmplitudeKind::Power(t) => Some(t),
            AmplitudeKind::PointMass => None,
        }
    }

    /// Right end of the support (infinite for the half-normal).
    pub fn support_end(&self) -> f64 {
        match self.kind {
            AmplitudeKind::HalfNormal => f64::INFINITY,
            _ => self.scale,
        }
    }

    pub fn pdf_at(&self, x: f64) -> Result<f64> {
        check_nonneg(x)?;
        let b = self.scale;
        Ok(match self.kind {
            AmplitudeKind::HalfNormal => {
                let s2 = b * b;
                (2.0 / (PI * s2)).sqrt() * (-x * x / (2.0 * s2)).exp()
            }
            AmplitudeKind::Uniform => {
                if x <= b {
                    1.0 / b
                } else {
                    0.0
                }
            }
            AmplitudeKind::Power(t) => {
                if x <= b {
                    let t = t as f64;
                    (t + 1.0) * x.powf(t) / b.powf(t + 1.0)
                } else {
                    0.0
                }
            }
            AmplitudeKind::PointMass => {
                if x == b {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
        })
    }

    pub fn cdf_at(&self, x: f64) -> Result<f64> {
        check_nonneg(x)?;
        let b = self.scale;
        Ok(match self.kind {
            AmplitudeKind::HalfNormal => erf(x / (b * 2f64.sqrt())),
            AmplitudeKind::Uniform => (x / b).min(1.0),
            AmplitudeKind::Power(t) => (x / b).min(1.0).powi(t as i32 + 1),
            AmplitudeKind::PointMass => {
                if x >= b {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }

    /// Generalized inverse `inf {x : F(x) >= p}`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("probability {p} outside [0, 1]")));
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        let b = self.scale;
        Ok(match self.kind {
            AmplitudeKind::HalfNormal => {
                if p == 1.0 {
                    return Ok(f64::INFINITY);
                }
                let mut x = b * 2f64.sqrt() * erf_inv(p);
                // one Newton step tightens erf_inv near the tails
                let f = self.pdf_at(x)?;
                if f > 0.0 {
                    x -= (self.cdf_at(x)? - p) / f;
                }
                x.max(0.0)
            }
            AmplitudeKind::Uniform => p * b,
            AmplitudeKind::Power(t) => b * p.powf(1.0 / (t as f64 + 1.0)),
            AmplitudeKind::PointMass => b,
        })
    }

    /// `int_0^y x f(x) dx`.
    pub fn partial_first_moment(&self, y: f64) -> Result<f64> {
        check_nonneg(y)?;
        let b = self.scale;
        Ok(match self.kind {
            AmplitudeKind::HalfNormal => {
                // sigma * sqrt(2/pi) * (1 - exp(-y^2 / 2 sigma^2)) with unit mean
                -(-y * y / (2.0 * b * b)).exp_m1()
            }
            AmplitudeKind::Uniform => {
                let y = y.min(b);
                y * y / (2.0 * b)
            }
            AmplitudeKind::Power(t) => {
                let y = y.min(b);
                let t = t as f64;
                (t + 1.0) / (t + 2.0) * y.powf(t + 2.0) / b.powf(t + 1.0)
            }
            AmplitudeKind::PointMass => {
                if y >= b {
                    b
                } else {
                    0.0
                }
            }
        })
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let b = self.scale;
        match self.kind {
            AmplitudeKind::HalfNormal => {
                let normal = Normal::new(0.0, b).expect("positive sigma");
                loop {
                    let v: f64 = normal.sample(rng).abs();
                    if v > 0.0 {
                        return v;
                    }
                }
            }
            AmplitudeKind::Uniform => {
                let u: f64 = Open01.sample(rng);
                u * b
            }
            AmplitudeKind::Power(t) => {
                let u: f64 = Open01.sample(rng);
                b * u.powf(1.0 / (t as f64 + 1.0))
            }
            AmplitudeKind::PointMass => b,
        }
    }
}

/// `count` i.i.d. magnitudes, reproducible from `seed`.
pub fn sample_amplitudes(dist: &AmplitudeDistribution, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| dist.sample_with(&mut rng)).collect()
}

fn check_nonneg(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        Err(Error::domain(format!("argument {x} must be nonnegative")))
    } else {
        Ok(())
    }
}

impl fmt::Display for AmplitudeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AmplitudeKind::HalfNormal => f.write_str("half_normal"),
            AmplitudeKind::Uniform => f.write_str("uniform"),
            AmplitudeKind::Power(t) => write!(f, "power:{t}"),
            AmplitudeKind::PointMass => f.write_str("point_mass"),
        }
    }
}

impl FromStr for AmplitudeDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let kind = match s {
            "half_normal" => AmplitudeKind::HalfNormal,
            "uniform" => AmplitudeKind::Uniform,
            "point_mass" => AmplitudeKind::PointMass,
            _ => match s.strip_prefix("power:") {
                Some(t) => AmplitudeKind::Power(
                    t.parse()
                        .map_err(|_| Error::Config(format!("bad power order in {s:?}")))?,
                ),
                None => return Err(Error::Config(format!("unknown distribution {s:?}"))),
            },
        };
        Ok(Self::new(kind))
    }
}

impl TryFrom<String> for AmplitudeDistribution {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AmplitudeDistribution> for String {
    fn from(d: AmplitudeDistribution) -> String {
        d.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;

    fn continuous() -> Vec<AmplitudeDistribution> {
        vec![
            AmplitudeDistribution::half_normal(),
            AmplitudeDistribution::uniform(),
            AmplitudeDistribution::power(1),
            AmplitudeDistribution::power(2),
            AmplitudeDistribution::power(3),
        ]
    }

    /// Integral over the support, mapping the half-normal tail with x = tan(u).
    fn integrate(d: &AmplitudeDistribution, g: impl Fn(f64) -> f64) -> f64 {
        let end = d.support_end();
        if end.is_finite() {
            adaptive_simpson(|x| g(x) * d.pdf_at(x).unwrap(), 0.0, end, 1e-12)
        } else {
            adaptive_simpson(
                |u| {
                    let x = u.tan();
                    let c = u.cos();
                    g(x) * d.pdf_at(x).unwrap() / (c * c)
                },
                0.0,
                std::f64::consts::FRAC_PI_2 - 1e-9,
                1e-12,
            )
        }
    }

    #[test]
    fn densities_normalized_to_unit_mass_and_mean() {
        for d in continuous() {
            let mass = integrate(&d, |_| 1.0);
            let mean = integrate(&d, |x| x);
            assert!((mass - 1.0).abs() < 1e-9, "{d}: mass {mass}");
            assert!((mean - 1.0).abs() < 1e-9, "{d}: mean {mean}");
        }
    }

    #[test]
    fn pdf_examples() {
        assert_eq!(AmplitudeDistribution::uniform().pdf_at(0.0).unwrap(), 0.5);
        let hn = AmplitudeDistribution::half_normal().pdf_at(0.0).unwrap();
        assert!((hn - 2.0 / PI).abs() < 1e-15);
        assert_eq!(AmplitudeDistribution::power(1).pdf_at(0.0).unwrap(), 0.0);
        let p1 = AmplitudeDistribution::power(1);
        assert_eq!(p1.scale(), 1.5);
        assert!((p1.pdf_at(0.9).unwrap() - 8.0 / 9.0 * 0.9).abs() < 1e-15);
        assert!(AmplitudeDistribution::uniform().pdf_at(-0.1).is_err());
    }

    #[test]
    fn half_normal_scale_by_quadrature() {
        // (2/pi) exp(-x^2/pi) is the unit-mean half-normal
        let d = AmplitudeDistribution::half_normal();
        for x in [0.0, 0.3, 1.0, 2.5] {
            let f = 2.0 / PI * (-x * x / PI).exp();
            assert!((d.pdf_at(x).unwrap() - f).abs() < 1e-15);
        }
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(AmplitudeDistribution::uniform().quantile(0.5).unwrap(), 1.0);
        for d in continuous() {
            assert_eq!(d.quantile(0.0).unwrap(), 0.0);
        }
        assert_eq!(
            AmplitudeDistribution::point_mass().quantile(0.0).unwrap(),
            0.0
        );
        let med = AmplitudeDistribution::half_normal().quantile(0.5).unwrap();
        // standard normal 0.75-quantile times sigma = sqrt(pi/2)
        assert!((med - 0.674_489_750_196_081_7 * (PI / 2.0).sqrt()).abs() < 1e-10);
        assert!((med - 0.8453).abs() < 1e-4);
        assert!(AmplitudeDistribution::uniform().quantile(1.5).is_err());
        assert!(AmplitudeDistribution::uniform().quantile(-0.1).is_err());
    }

    #[test]
    fn half_normal_median_by_bisection_on_quadrature() {
        let d = AmplitudeDistribution::half_normal();
        let cdf = |y: f64| adaptive_simpson(|x| d.pdf_at(x).unwrap(), 0.0, y, 1e-13);
        let (mut lo, mut hi) = (0.0, 3.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((d.quantile(0.5).unwrap() - 0.5 * (lo + hi)).abs() < 1e-9);
    }

    #[test]
    fn quantile_inverts_cdf_on_grid() {
        for d in continuous() {
            let end = d.support_end().min(4.0);
            for i in 0..=40 {
                let x = end * i as f64 / 40.0;
                let back = d.quantile(d.cdf_at(x).unwrap()).unwrap();
                assert!((back - x).abs() < 1e-8, "{d}: x={x} back={back}");
            }
        }
    }

    #[test]
    fn partial_first_moment_examples() {
        let u = AmplitudeDistribution::uniform();
        assert!((u.partial_first_moment(2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((u.partial_first_moment(1.0).unwrap() - 0.25).abs() < 1e-15);
        let hn = AmplitudeDistribution::half_normal();
        let y = hn.quantile(0.5).unwrap();
        let oracle = adaptive_simpson(|x| x * hn.pdf_at(x).unwrap(), 0.0, y, 1e-13);
        let v = hn.partial_first_moment(y).unwrap();
        assert!((v - oracle).abs() < 1e-10);
        assert!((v - 0.2034).abs() < 1e-4);
    }

    #[test]
    fn partial_first_moment_matches_quadrature() {
        for d in continuous() {
            for y in [0.1_f64, 0.5, 1.0, 1.4, 3.0] {
                let y = y.min(d.support_end());
                let oracle = adaptive_simpson(|x| x * d.pdf_at(x).unwrap(), 0.0, y, 1e-13);
                assert!((d.partial_first_moment(y).unwrap() - oracle).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn full_first_moment_is_one() {
        for d in continuous()
            .into_iter()
            .chain([AmplitudeDistribution::point_mass()])
        {
            let v = d.partial_first_moment(1e6).unwrap();
            assert!((v - 1.0).abs() < 1e-8, "{d}");
        }
    }

    #[test]
    fn small_argument_power_laws() {
        // cdf ~ y^(t+1), partial moment ~ y^(t+2) near the origin
        for t in 0..4u32 {
            let d = AmplitudeDistribution::power(t);
            let (y0, y1) = (1e-4_f64, 1e-2_f64);
            let slope = |g: &dyn Fn(f64) -> f64| (g(y1).ln() - g(y0).ln()) / (y1.ln() - y0.ln());
            let s_cdf = slope(&|y| d.cdf_at(y).unwrap());
            let s_pfm = slope(&|y| d.partial_first_moment(y).unwrap());
            let t = t as f64;
            assert!((s_cdf / (t + 1.0) - 1.0).abs() < 0.01);
            assert!((s_pfm / (t + 2.0) - 1.0).abs() < 0.01);
        }
        let hn = AmplitudeDistribution::half_normal();
        let s = (hn.cdf_at(1e-2).unwrap().ln() - hn.cdf_at(1e-4).unwrap().ln()) / (100f64).ln();
        assert!((s - 1.0).abs() < 0.01);
    }

    #[test]
    fn t_orders() {
        assert_eq!(AmplitudeDistribution::half_normal().t_order(), Some(0));
        assert_eq!(AmplitudeDistribution::power(2).t_order(), Some(2));
        assert_eq!(AmplitudeDistribution::point_mass().t_order(), None);
    }

    #[test]
    fn sampling_examples() {
        let u = AmplitudeDistribution::uniform();
        assert!(sample_amplitudes(&u, 0, 1).is_empty());
        let s = sample_amplitudes(&u, 100_000, 7);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 1.0).abs() < 0.01);
        assert_eq!(s, sample_amplitudes(&u, 100_000, 7));
        assert!(s.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn empirical_cdf_matches() {
        for d in continuous() {
            let mut s = sample_amplitudes(&d, 100_000, 11);
            s.sort_by(f64::total_cmp);
            let n = s.len() as f64;
            let ks = s
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f = d.cdf_at(x).unwrap();
                    (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks < 0.01, "{d}: KS distance {ks}");
        }
    }

    #[test]
    fn parse_and_display() {
        for s in ["half_normal", "uniform", "power:2", "point_mass"] {
            let d: AmplitudeDistribution = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert!("power:x".parse::<AmplitudeDistribution>().is_err());
        assert!("cauchy".parse::<AmplitudeDistribution>().is_err());
    }
}
