//! Distribution tails behind the p-values, on top of `statrs`'s special
//! functions.

#[cfg(test)]
use std::f64::consts::PI;

pub use statrs::function::beta::beta_reg;
pub use statrs::function::erf::erfc;
pub use statrs::function::gamma::ln_gamma;

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `df`
/// degrees of freedom, `I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    beta_reg(0.5 * df, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Two-sided normal tail 2(1 - Φ(|z|)).
pub fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_gamma_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(35.5) - 90.35493026581838).abs() < 1e-10);
    }

    /// Composite Simpson on the t density from |t| to a far cutoff, plus the
    /// analytic Cauchy-like tail beyond it being negligible for df >= 3.
    fn t_tail_by_quadrature(t: f64, df: f64) -> f64 {
        let ln_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * PI).ln();
        let dens = |u: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + u * u / df).ln()).exp();
        // substitute u = |t| + s/(1-s) to map [0,1) onto [|t|, inf)
        let n = 200_000;
        let h = 1.0 / n as f64;
        let g = |s: f64| {
            if s >= 1.0 {
                return 0.0;
            }
            let u = t.abs() + s / (1.0 - s);
            dens(u) / ((1.0 - s) * (1.0 - s))
        };
        let mut acc = g(0.0) + g(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(i as f64 * h);
        }
        2.0 * acc * h / 3.0
    }

    #[test]
    fn t_tail_matches_quadrature() {
        for &(t, df) in &[(2.2689, 71.0), (0.5, 3.0), (3.5, 10.0), (1.0, 30.0), (5.0, 5.0)] {
            let exact = student_t_two_sided(t, df);
            let quad = t_tail_by_quadrature(t, df);
            assert!((exact - quad).abs() < 1e-10, "t={t} df={df}: {exact} vs {quad}");
        }
    }

    #[test]
    fn normal_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-10);
        assert!((normal_two_sided(1.0) - 0.31731050786291415).abs() < 1e-10);
        assert!((normal_cdf(-3.0) - 0.0013498980316300933).abs() < 1e-12);
    }
}
