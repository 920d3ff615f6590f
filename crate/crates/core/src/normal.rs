//! Standard normal density, distribution function and quantile.
//!
//! `erfc` switches between two representations: the everywhere-convergent
//! series `erf(x) = 2/√π · e^{-x²} · Σ 2ⁿx^{2n+1}/(2n+1)!!` (no alternating
//! signs, so no cancellation) for `|x| < 1.5`, and the Laplace continued
//! fraction evaluated with modified Lentz above that, which keeps relative
//! accuracy deep in the tail.

use std::f64::consts::{PI, SQRT_2};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const SERIES_CUTOFF: f64 = 1.5;

fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term.abs() <= sum.abs() * 1e-17 {
            break;
        }
    }
    2.0 * FRAC_1_SQRT_PI * (-x2).exp() * sum
}

/// erfc(x) for x ≥ SERIES_CUTOFF.
fn erfc_continued_fraction(x: f64) -> f64 {
    FRAC_1_SQRT_PI * (-x * x).exp() / erfc_cf_denominator(x)
}

/// The continued fraction `f` with `erfc(x) = e^{-x²} / (√π f)`.
fn erfc_cf_denominator(x: f64) -> f64 {
    // x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..5000 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= SERIES_CUTOFF {
        erfc_continued_fraction(x)
    } else if x <= -SERIES_CUTOFF {
        2.0 - erfc_continued_fraction(-x)
    } else {
        1.0 - erf_series(x)
    }
}

pub fn erf(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        erf_series(x)
    } else {
        1.0 - erfc(x)
    }
}

pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

/// `e^{-z²/2}` with the rounding of `z²` compensated.
fn gauss(z: f64) -> f64 {
    let hi = z * z;
    let lo = z.mul_add(z, -hi);
    (-0.5 * hi).exp() * (-0.5 * lo).exp()
}

/// Φ(−t) for `t/√2 ≥ SERIES_CUTOFF`, with the Gaussian factor taken from
/// `t` itself rather than from the rounded `t/√2`.
fn lower_tail(t: f64) -> f64 {
    0.5 * FRAC_1_SQRT_PI * gauss(t) / erfc_cf_denominator(t / SQRT_2)
}

/// Φ(z).
pub fn cdf(z: f64) -> f64 {
    if -z / SQRT_2 >= SERIES_CUTOFF {
        return lower_tail(-z);
    }
    0.5 * erfc(-z / SQRT_2)
}

/// ln Φ(z), finite far below the point where Φ(z) underflows.
pub fn ln_cdf(z: f64) -> f64 {
    if z < -5.0 {
        let hi = z * z;
        let lo = z.mul_add(z, -hi);
        (0.5 * FRAC_1_SQRT_PI).ln() - 0.5 * hi - 0.5 * lo - erfc_cf_denominator(-z / SQRT_2).ln()
    } else {
        cdf(z).ln()
    }
}

/// 1 − Φ(z), computed without cancellation.
pub fn sf(z: f64) -> f64 {
    if z / SQRT_2 >= SERIES_CUTOFF {
        return lower_tail(z);
    }
    0.5 * erfc(z / SQRT_2)
}

/// Φ⁻¹(p). Returns ±∞ at the endpoints and NaN outside [0, 1].
pub fn quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -lower_tail_quantile(1.0 - p);
    }
    lower_tail_quantile(p)
}

/// Solves Φ(x) = q for q ≤ 1/2, working on the lower tail so small q keeps
/// its relative precision.
fn lower_tail_quantile(q: f64) -> f64 {
    if q == 0.5 {
        return 0.0;
    }
    // Abramowitz & Stegun 26.2.23 starting point, |error| < 4.5e-4.
    let t = (-2.0 * q.ln()).sqrt();
    let num = 2.515_517 + t * (0.802_853 + t * 0.010_328);
    let den = 1.0 + t * (1.432_788 + t * (0.189_269 + t * 0.001_308));
    let mut x = -(t - num / den);
    // Halley refinement on Φ(x) − q.
    for _ in 0..50 {
        let err = cdf(x) - q;
        let dens = pdf(x);
        if dens == 0.0 {
            break;
        }
        let u = err / dens;
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from a 40-digit mpmath evaluation.
    const REFERENCE_CDF: &[(f64, f64)] = &[
        (-1.0, 0.158_655_253_931_457_05),
        (-5.0, 2.866_515_718_791_939e-7),
        (-10.0, 7.619_853_024_160_526e-24),
        (-20.0, 2.753_624_118_606_233_7e-89),
        (0.3, 0.617_911_422_188_952_6),
        (-37.0, 5.725_571_222_524_577e-300),
    ];

    #[test]
    fn cdf_matches_reference_in_relative_terms() {
        for &(z, want) in REFERENCE_CDF {
            let got = cdf(z);
            assert!(((got - want) / want).abs() < 1e-13, "Φ({z}) = {got}, want {want}");
        }
    }

    #[test]
    fn cdf_absolute_accuracy_across_the_switch() {
        // Symmetry Φ(z) + Φ(−z) = 1 must hold across the series/fraction seam.
        let mut z = -4.0;
        while z <= 4.0 {
            assert!((cdf(z) + cdf(-z) - 1.0).abs() < 1e-14, "z = {z}");
            z += 0.013;
        }
        assert_eq!(cdf(0.0), 0.5);
    }

    #[test]
    fn quantile_975() {
        assert!((quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((quantile(0.025) + 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-300, 1e-20, 1e-8, 0.001, 0.02, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-12] {
            let x = quantile(p);
            let back = cdf(x);
            let rel = if p < 0.5 { (back - p).abs() / p } else { (back - p).abs() };
            assert!(rel < 1e-12, "p = {p}, x = {x}, Φ(x) = {back}");
        }
        assert_eq!(quantile(0.0), f64::NEG_INFINITY);
        assert!(quantile(1.5).is_nan());
    }

    #[test]
    fn erf_is_odd_and_bounded() {
        for &x in &[0.1, 0.7, 1.49, 1.51, 3.0, 6.0] {
            assert!((erf(x) + erf(-x)).abs() < 1e-15);
            assert!(erf(x) <= 1.0);
        }
    }

    #[test]
    fn ln_cdf_survives_underflow() {
        let cases = [
            (-4.9, -14.551_182_689_355_313),
            (-6.0, -20.736_768_949_974_706),
            (-40.0, -804.608_442_013_753_8),
            (-300.0, -45_006.622_732_118_66),
        ];
        for (z, want) in cases {
            let got = ln_cdf(z);
            assert!(((got - want) / want).abs() < 1e-13, "ln Φ({z}) = {got}, want {want}");
        }
    }
}
