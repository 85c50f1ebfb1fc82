//! Random-intercept linear mixed model fitted by restricted maximum
//! likelihood:
//!
//! ```text
//! y_ij = b0 + b1 * x_ij + u_j + e_ij,   u_j ~ N(0, s2_u),  e_ij ~ N(0, s2_e)
//! ```
//!
//! With `lambda = s2_u / s2_e` the marginal covariance of group `j` is
//! `s2_e * (I + lambda * 11')`, whose inverse and determinant are closed-form,
//! so every REML evaluation reduces to per-group sufficient statistics.
//! The fixed effects and `s2_e` are profiled out; `log(1 + lambda)` is
//! searched by golden section.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::special::normal_two_sided;

/// Upper end of the variance-ratio search.
pub const LAMBDA_MAX: f64 = 1e6;
/// Golden-section tolerance on `log(1 + lambda)`.
pub const SEARCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmeFit<T = f64> {
    pub beta0: T,
    pub beta1: T,
    pub sigma2_u: T,
    pub sigma2_e: T,
    pub se_beta1: T,
    /// Wald test with the normal reference distribution.
    pub p_beta1: T,
    /// Maximized restricted log-likelihood.
    pub loglik: T,
    pub lambda: T,
    pub n_obs: usize,
    pub n_groups: usize,
    /// Single group: the random intercept is not identifiable, fitted as OLS.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct GroupStats<T> {
    n: T,
    sx: T,
    sy: T,
    sxx: T,
    sxy: T,
    syy: T,
}

/// Sufficient statistics of a random-intercept regression problem, centred
/// on the grand means for numerical stability.
#[derive(Debug, Clone)]
pub struct LmeProblem<T> {
    groups: Vec<GroupStats<T>>,
    x_mean: T,
    y_mean: T,
    n_obs: usize,
}

/// Model quantities at a fixed variance ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmeEvaluation<T> {
    pub lambda: T,
    pub beta0: T,
    pub beta1: T,
    pub sigma2_e: T,
    /// `sigma2_e * [(X' H^-1 X)^-1]_11`.
    pub var_beta1: T,
    pub loglik: T,
}

impl<T: Scalar> LmeProblem<T> {
    pub fn new<G: Hash + Eq + Clone>(groups: &[G], x: &[T], y: &[T]) -> Result<Self> {
        if groups.len() != x.len() || x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len().min(groups.len()),
            });
        }
        let n_obs = x.len();
        if n_obs < 3 {
            return Err(Error::TooFewObservations {
                needed: 3,
                found: n_obs,
            });
        }
        let n = T::from_usize_lossy(n_obs);
        let x_mean = x.iter().copied().sum::<T>() / n;
        let y_mean = y.iter().copied().sum::<T>() / n;
        let mut index: HashMap<G, usize> = HashMap::new();
        let mut stats: Vec<GroupStats<T>> = Vec::new();
        for ((g, &xi), &yi) in groups.iter().zip(x).zip(y) {
            let k = *index.entry(g.clone()).or_insert_with(|| {
                stats.push(GroupStats::default());
                stats.len() - 1
            });
            let (xc, yc) = (xi - x_mean, yi - y_mean);
            let s = &mut stats[k];
            s.n += T::one();
            s.sx += xc;
            s.sy += yc;
            s.sxx += xc * xc;
            s.sxy += xc * yc;
            s.syy += yc * yc;
        }
        Ok(Self {
            groups: stats,
            x_mean,
            y_mean,
            n_obs,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Generalized least squares and the profiled REML log-likelihood at a
    /// given `lambda >= 0`.
    pub fn evaluate(&self, lambda: T) -> Result<LmeEvaluation<T>> {
        let (mut a00, mut a01, mut a11) = (T::zero(), T::zero(), T::zero());
        let (mut b0, mut b1, mut yy) = (T::zero(), T::zero(), T::zero());
        let mut logdet_h = T::zero();
        for g in &self.groups {
            let c = lambda / (T::one() + lambda * g.n);
            a00 += g.n - c * g.n * g.n;
            a01 += g.sx - c * g.n * g.sx;
            a11 += g.sxx - c * g.sx * g.sx;
            b0 += g.sy - c * g.n * g.sy;
            b1 += g.sxy - c * g.sx * g.sy;
            yy += g.syy - c * g.sy * g.sy;
            logdet_h += (lambda * g.n).ln_1p();
        }
        let det = a00 * a11 - a01 * a01;
        let scale = (a00 * a11).abs().max(T::min_positive_value());
        if !(det > scale * T::lit(1e-12)) {
            return Err(Error::SingularDesign);
        }
        let beta0c = (a11 * b0 - a01 * b1) / det;
        let beta1 = (a00 * b1 - a01 * b0) / det;
        let q = (yy - (b0 * beta0c + b1 * beta1)).max(T::zero());
        let dof = T::from_usize_lossy(self.n_obs - 2);
        let sigma2_e = q / dof;
        let two_pi = T::lit(std::f64::consts::TAU);
        let loglik = -T::lit(0.5)
            * (dof * (sigma2_e.ln() + T::one() + two_pi.ln()) + logdet_h + det.ln());
        Ok(LmeEvaluation {
            lambda,
            beta0: self.y_mean + beta0c - beta1 * self.x_mean,
            beta1,
            sigma2_e,
            var_beta1: sigma2_e * a00 / det,
            loglik,
        })
    }

    /// REML fit. With a single group the variance ratio is pinned at zero.
    pub fn fit(&self) -> Result<LmeFit<T>> {
        let best = if self.groups.len() < 2 {
            self.evaluate(T::zero())?
        } else {
            self.search()?
        };
        let se = best.var_beta1.max(T::zero()).sqrt();
        let z = (best.beta1 / se).to_f64_lossy();
        let p = if se > T::zero() {
            normal_two_sided(z)
        } else {
            0.0
        };
        Ok(LmeFit {
            beta0: best.beta0,
            beta1: best.beta1,
            sigma2_u: best.lambda * best.sigma2_e,
            sigma2_e: best.sigma2_e,
            se_beta1: se,
            p_beta1: T::lit(p),
            loglik: best.loglik,
            lambda: best.lambda,
            n_obs: self.n_obs,
            n_groups: self.groups.len(),
            degenerate: self.groups.len() < 2,
        })
    }

    fn search(&self) -> Result<LmeEvaluation<T>> {
        let lo0 = 0.0f64;
        let hi0 = LAMBDA_MAX.ln_1p();
        let at = |s: f64| -> Result<LmeEvaluation<T>> { self.evaluate(T::lit(s.exp_m1())) };
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (lo0, hi0);
        let mut c = hi - inv_phi * (hi - lo);
        let mut d = lo + inv_phi * (hi - lo);
        let mut fc = at(c)?;
        let mut fd = at(d)?;
        let mut iterations = 0;
        while hi - lo > SEARCH_TOL {
            iterations += 1;
            if iterations > 200 {
                return Err(Error::ConvergenceFailure { lo, hi });
            }
            if !(fc.loglik.is_finite() && fd.loglik.is_finite()) {
                return Err(Error::ConvergenceFailure { lo, hi });
            }
            if fc.loglik >= fd.loglik {
                hi = d;
                d = c;
                fd = fc;
                c = hi - inv_phi * (hi - lo);
                fc = at(c)?;
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + inv_phi * (hi - lo);
                fd = at(d)?;
            }
        }
        let interior = at(0.5 * (lo + hi))?;
        // the profile can be monotone; never return worse than a bracket end
        let mut best = interior;
        for cand in [fc, fd, at(lo0)?, at(hi0)?] {
            if cand.loglik > best.loglik {
                best = cand;
            }
        }
        if !best.loglik.is_finite() {
            return Err(Error::ConvergenceFailure { lo: lo0, hi: hi0 });
        }
        Ok(best)
    }
}

/// Fits `y ~ x + (1 | group)` by REML.
pub fn fit_lme<T: Scalar, G: Hash + Eq + Clone>(groups: &[G], x: &[T], y: &[T]) -> Result<LmeFit<T>> {
    LmeProblem::new(groups, x, y)?.fit()
}

/// Closed-form ordinary least squares `(intercept, slope)`.
pub fn ols<T: Scalar>(x: &[T], y: &[T]) -> Result<(T, T)> {
    let n = T::from_usize_lossy(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let sxx: T = x.iter().map(|&v| (v - mx) * (v - mx)).sum();
    if !(sxx > T::zero()) {
        return Err(Error::SingularDesign);
    }
    let sxy: T = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn simulate(seed: u64, groups: usize, per: usize, sd_u: f64, b1: f64) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n01 = Normal::new(0.0, 1.0).unwrap();
        let (mut g, mut x, mut y) = (vec![], vec![], vec![]);
        for j in 0..groups {
            let u = sd_u * n01.sample(&mut rng);
            let shift = n01.sample(&mut rng);
            for _ in 0..per {
                let xi = shift + n01.sample(&mut rng);
                g.push(j);
                x.push(xi);
                y.push(1.0 + b1 * xi + u + n01.sample(&mut rng));
            }
        }
        (g, x, y)
    }

    #[test]
    fn lambda_zero_is_ols() {
        let (g, x, y) = simulate(1, 10, 8, 0.7, 0.4);
        let p = LmeProblem::new(&g, &x, &y).unwrap();
        let at0 = p.evaluate(0.0).unwrap();
        let (b0, b1) = ols(&x, &y).unwrap();
        assert!((at0.beta0 - b0).abs() < 1e-12);
        assert!((at0.beta1 - b1).abs() < 1e-12);
    }

    #[test]
    fn optimum_beats_bracket_ends() {
        for seed in 0..5 {
            let (g, x, y) = simulate(seed, 12, 10, 0.8, -0.3);
            let p = LmeProblem::new(&g, &x, &y).unwrap();
            let fit = p.fit().unwrap();
            assert!(fit.loglik >= p.evaluate(0.0).unwrap().loglik);
            assert!(fit.loglik >= p.evaluate(LAMBDA_MAX).unwrap().loglik);
            assert!(fit.sigma2_u >= 0.0 && fit.sigma2_e > 0.0);
            assert!((0.0..=1.0).contains(&fit.p_beta1));
        }
    }

    /// REML log-likelihood from the dense formula, as an oracle for the
    /// closed-form group algebra.
    fn dense_reml(g: &[usize], x: &[f64], y: &[f64], lambda: f64) -> f64 {
        let n = x.len();
        let mut h = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                h[i][j] = if g[i] == g[j] { lambda } else { 0.0 } + if i == j { 1.0 } else { 0.0 };
            }
        }
        // invert H by Gauss-Jordan, accumulate log det
        let mut a = h.clone();
        let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let mut logdet = 0.0;
        for c in 0..n {
            let piv = a[c][c];
            logdet += piv.ln();
            for k in 0..n {
                a[c][k] /= piv;
                inv[c][k] /= piv;
            }
            for r in 0..n {
                if r != c {
                    let f = a[r][c];
                    for k in 0..n {
                        a[r][k] -= f * a[c][k];
                        inv[r][k] -= f * inv[c][k];
                    }
                }
            }
        }
        let xm: Vec<[f64; 2]> = x.iter().map(|&v| [1.0, v]).collect();
        let mut xhx = [[0.0; 2]; 2];
        let mut xhy = [0.0; 2];
        for i in 0..n {
            for j in 0..n {
                for p in 0..2 {
                    xhy[p] += xm[i][p] * inv[i][j] * y[j];
                    for q in 0..2 {
                        xhx[p][q] += xm[i][p] * inv[i][j] * xm[j][q];
                    }
                }
            }
        }
        let det = xhx[0][0] * xhx[1][1] - xhx[0][1] * xhx[1][0];
        let b = [
            (xhx[1][1] * xhy[0] - xhx[0][1] * xhy[1]) / det,
            (xhx[0][0] * xhy[1] - xhx[1][0] * xhy[0]) / det,
        ];
        let r: Vec<f64> = (0..n).map(|i| y[i] - b[0] - b[1] * x[i]).collect();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += r[i] * inv[i][j] * r[j];
            }
        }
        let dof = (n - 2) as f64;
        let s2 = q / dof;
        -0.5 * (dof * (s2.ln() + 1.0 + std::f64::consts::TAU.ln()) + logdet + det.ln())
    }

    #[test]
    fn closed_form_matches_dense_likelihood() {
        let (g, x, y) = simulate(9, 5, 6, 0.5, 0.2);
        let p = LmeProblem::new(&g, &x, &y).unwrap();
        for lambda in [0.0, 0.3, 2.0, 40.0] {
            let fast = p.evaluate(lambda).unwrap().loglik;
            let slow = dense_reml(&g, &x, &y, lambda);
            assert!((fast - slow).abs() < 1e-9, "lambda {lambda}: {fast} vs {slow}");
        }
    }

    #[test]
    fn single_group_is_ols_and_flagged() {
        let (g, x, y) = simulate(2, 1, 30, 0.0, 0.5);
        let fit = fit_lme(&g, &x, &y).unwrap();
        let (b0, b1) = ols(&x, &y).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.sigma2_u, 0.0);
        assert!((fit.beta0 - b0).abs() < 1e-12 && (fit.beta1 - b1).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor_is_singular() {
        let g = vec![0, 0, 1, 1];
        assert!(matches!(
            fit_lme(&g, &[1.0; 4], &[1.0, 2.0, 3.0, 4.0]),
            Err(Error::SingularDesign)
        ));
    }

    #[test]
    fn recovers_variance_components() {
        let (g, x, y) = simulate(4, 200, 20, 1.0, 0.5);
        let fit = fit_lme(&g, &x, &y).unwrap();
        assert!((fit.sigma2_u - 1.0).abs() < 0.3);
        assert!((fit.sigma2_e - 1.0).abs() < 0.1);
        assert!((fit.beta1 - 0.5).abs() < 4.0 * fit.se_beta1);
    }

    #[test]
    fn works_in_f32() {
        let (g, x, y) = simulate(5, 20, 10, 0.5, 0.8);
        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let y32: Vec<f32> = y.iter().map(|&v| v as f32).collect();
        let a = fit_lme(&g, &x, &y).unwrap();
        let b = fit_lme(&g, &x32, &y32).unwrap();
        assert!((a.beta1 - b.beta1 as f64).abs() < 1e-3);
    }
}
