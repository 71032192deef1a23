//! Inner solvers shared by the Newton-type methods: conjugate gradients for
//! `H p = g` and Armijo backtracking for the step size.

use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::CurvatureBounds;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    /// Stop once `|H p - g| <= tol |g|`.
    pub tol: f64,
    pub max_iters: usize,
}

impl CgConfig {
    pub const DEFAULT_TOL: f64 = 1e-8;
    pub const MAX_ITERS_CAP: usize = 250;

    /// Default settings for a `d`-dimensional system.
    pub fn for_dim(d: usize) -> Self {
        CgConfig {
            tol: Self::DEFAULT_TOL,
            max_iters: d.clamp(1, Self::MAX_ITERS_CAP),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::invalid(format!("cg tolerance must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("cg needs at least one iteration"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub p: Vec<f64>,
    /// Final residual norm `|H p - g|`.
    pub residual: f64,
    pub iters: usize,
}

/// Conjugate gradients from `p0 = 0` on the SPD operator `hvp`.
pub fn cg_solve<F>(mut hvp: F, g: &[f64], cfg: &CgConfig) -> Result<CgOutcome>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    cfg.validate()?;
    let d = g.len();
    let mut p = vec![0.0; d];
    let mut r = g.to_vec();
    let mut rr = linalg::dot(&r, &r);
    let g_norm = rr.sqrt();
    if !g_norm.is_finite() {
        return Err(Error::NonFinite("cg right-hand side"));
    }
    let target = cfg.tol * g_norm;
    if g_norm == 0.0 {
        return Ok(CgOutcome {
            p,
            residual: 0.0,
            iters: 0,
        });
    }
    let mut dir = r.clone();
    let mut iters = 0;
    while iters < cfg.max_iters {
        let hd = hvp(&dir);
        let curv = linalg::dot(&dir, &hd);
        if !(curv.is_finite() && curv > 0.0) {
            return Err(Error::NonFinite("cg curvature (operator not positive definite?)"));
        }
        let step = rr / curv;
        linalg::axpy(step, &dir, &mut p);
        linalg::axpy(-step, &hd, &mut r);
        iters += 1;
        let rr_next = linalg::dot(&r, &r);
        if !rr_next.is_finite() {
            return Err(Error::NonFinite("cg residual"));
        }
        if rr_next.sqrt() <= target {
            rr = rr_next;
            break;
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for (di, ri) in dir.iter_mut().zip(&r) {
            *di = ri + beta * *di;
        }
    }
    Ok(CgOutcome {
        p,
        residual: rr.sqrt(),
        iters,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig {
    /// Armijo slope parameter, in (0, 1/2].
    pub beta: f64,
    /// First trial step, at most 1.
    pub alpha_init: f64,
    /// Backtracking factor in (0, 1).
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Optional analytic cap on the step (see [`alpha_star`]).
    pub alpha_star_cap: Option<f64>,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            beta: 0.1,
            alpha_init: 1.0,
            shrink: 0.5,
            max_backtracks: 50,
            alpha_star_cap: None,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(Error::invalid(format!("beta must lie in (0, 1/2], got {}", self.beta)));
        }
        if !(self.alpha_init > 0.0 && self.alpha_init <= 1.0) {
            return Err(Error::invalid(format!("alpha_init must lie in (0, 1], got {}", self.alpha_init)));
        }
        if let Some(cap) = self.alpha_star_cap {
            if !(cap > 0.0 && cap <= 1.0) {
                return Err(Error::invalid(format!("step cap must lie in (0, 1], got {cap}")));
            }
        }
        validate_shrink(self.shrink)
    }

    /// First trial step: `alpha_init`, lowered to the cap when one is set.
    pub fn first_trial(&self) -> f64 {
        match self.alpha_star_cap {
            Some(cap) => self.alpha_init.min(cap),
            None => self.alpha_init,
        }
    }
}

fn validate_shrink(shrink: f64) -> Result<()> {
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(Error::invalid(format!("shrink factor must lie in (0, 1), got {shrink}")));
    }
    Ok(())
}

/// `f(w - alpha p) <= f(w) - alpha beta p.g`
#[inline]
pub fn armijo_holds(f_w: f64, f_trial: f64, alpha: f64, beta: f64, slope: f64) -> bool {
    f_trial <= f_w - alpha * beta * slope
}

/// Largest `alpha = alpha0 * shrink^k` satisfying the Armijo condition
/// for the descent direction `-p`.
///
/// `f_w` is `f(w)`, supplied by the caller who usually has it already.
#[allow(clippy::too_many_arguments)]
pub fn backtrack_from<F>(
    mut f_eval: F,
    w: &[f64],
    f_w: f64,
    p: &[f64],
    g: &[f64],
    alpha0: f64,
    beta: f64,
    shrink: f64,
    max_backtracks: usize,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    validate_shrink(shrink)?;
    let slope = linalg::dot(p, g);
    if !(slope > 0.0) {
        return Err(Error::invalid(format!("-p is not a descent direction (p.g = {slope:e})")));
    }
    let mut alpha = alpha0;
    for _ in 0..=max_backtracks {
        let trial = linalg::sub_scaled(w, alpha, p);
        let f_trial = f_eval(&trial)?;
        if armijo_holds(f_w, f_trial, alpha, beta, slope) {
            return Ok(alpha);
        }
        alpha *= shrink;
    }
    Err(Error::LineSearch {
        last_alpha: alpha / shrink,
    })
}

/// Armijo backtracking under `cfg`; trials are `first_trial() * shrink^k`.
pub fn armijo_backtrack<F>(f_eval: F, w: &[f64], f_w: f64, p: &[f64], g: &[f64], cfg: &LineSearchConfig) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    backtrack_from(f_eval, w, f_w, p, g, cfg.first_trial(), cfg.beta, cfg.shrink, cfg.max_backtracks)
}

/// Step cap under which the local Armijo condition is guaranteed:
/// `min{(1-beta) kappa / M, 2 beta kappa^2 / (3 M (M - kappa/4))}`, clamped to 1.
pub fn alpha_star(bounds: &CurvatureBounds, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let (kappa, m) = (bounds.kappa, bounds.smoothness);
    if !(kappa.is_finite() && m.is_finite() && kappa >= 0.0) {
        return Err(Error::NonFinite("curvature bounds"));
    }
    if m <= kappa / 4.0 {
        return Err(Error::invalid(format!("M = {m} must exceed kappa/4 = {}", kappa / 4.0)));
    }
    let first = (1.0 - beta) * kappa / m;
    let second = 2.0 * beta * kappa * kappa / (3.0 * m * (m - kappa / 4.0));
    Ok(first.min(second).min(1.0))
}

/// The alternative sufficient cap `2 (1-beta) kappa (1-eps) / (M (1+eps))`
/// from the line-search analysis, clamped to 1. Exposed for comparison.
pub fn alpha_star_sampled(bounds: &CurvatureBounds, beta: f64, epsilon: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(bounds.smoothness > 0.0) {
        return Err(Error::invalid("M must be positive"));
    }
    let cap = 2.0 * (1.0 - beta) * bounds.kappa * (1.0 - epsilon) / (bounds.smoothness * (1.0 + epsilon));
    Ok(cap.min(1.0))
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(Error::invalid(format!("beta must lie in (0, 1/2], got {beta}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds(kappa: f64, m: f64) -> CurvatureBounds {
        CurvatureBounds {
            kappa,
            smoothness: m,
            sample_curvature: m,
            grad_bound: 1.0,
        }
    }

    #[test]
    fn cg_scaled_identity() {
        let out = cg_solve(
            |v| v.iter().map(|x| 2.0 * x).collect(),
            &[2.0, 4.0],
            &CgConfig { tol: 1e-10, max_iters: 2 },
        )
        .unwrap();
        assert_eq!(out.p, vec![1.0, 2.0]);
        assert_eq!(out.iters, 1);
    }

    #[test]
    fn cg_eigenvector_rhs() {
        // H = [[3,1],[1,3]], eigenvector [1,1] with eigenvalue 4.
        let h = |v: &[f64]| vec![3.0 * v[0] + v[1], v[0] + 3.0 * v[1]];
        let out = cg_solve(h, &[2.0, 2.0], &CgConfig { tol: 1e-12, max_iters: 2 }).unwrap();
        assert_eq!(out.iters, 1);
        assert!((out.p[0] - 0.5).abs() < 1e-15 && (out.p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cg_zero_rhs_and_indefinite() {
        let out = cg_solve(|v| v.to_vec(), &[0.0, 0.0], &CgConfig::for_dim(2)).unwrap();
        assert_eq!((out.p, out.iters), (vec![0.0, 0.0], 0));
        let neg = cg_solve(|v| v.iter().map(|x| -x).collect(), &[1.0], &CgConfig::for_dim(1));
        assert!(matches!(neg, Err(Error::NonFinite(_))));
    }

    fn half_square(w: &[f64]) -> Result<f64> {
        Ok(0.5 * w[0] * w[0])
    }

    #[test]
    fn armijo_accepts_unit_step() {
        let cfg = LineSearchConfig {
            beta: 0.1,
            ..Default::default()
        };
        let a = armijo_backtrack(half_square, &[4.0], 8.0, &[4.0], &[4.0], &cfg).unwrap();
        assert_eq!(a, 1.0);
    }

    #[test]
    fn armijo_backtracks_overshoot() {
        let cfg = LineSearchConfig {
            beta: 0.45,
            shrink: 0.5,
            ..Default::default()
        };
        let a = armijo_backtrack(half_square, &[4.0], 8.0, &[40.0], &[4.0], &cfg).unwrap();
        assert_eq!(a, 0.0625);
    }

    #[test]
    fn armijo_rejects_non_descent() {
        let cfg = LineSearchConfig::default();
        assert!(armijo_backtrack(half_square, &[4.0], 8.0, &[0.0], &[4.0], &cfg).is_err());
        assert!(armijo_backtrack(half_square, &[4.0], 8.0, &[-1.0], &[4.0], &cfg).is_err());
    }

    #[test]
    fn armijo_exhaustion_reports_last_trial() {
        let cfg = LineSearchConfig {
            max_backtracks: 2,
            ..Default::default()
        };
        // Function that never decreases.
        let err = armijo_backtrack(|_| Ok(100.0), &[4.0], 8.0, &[4.0], &[4.0], &cfg).unwrap_err();
        match err {
            Error::LineSearch { last_alpha } => assert_eq!(last_alpha, 0.25),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn armijo_respects_cap() {
        let cfg = LineSearchConfig {
            alpha_star_cap: Some(0.3),
            ..Default::default()
        };
        let a = armijo_backtrack(half_square, &[4.0], 8.0, &[4.0], &[4.0], &cfg).unwrap();
        assert_eq!(a, 0.3);
    }

    #[test]
    fn alpha_star_values() {
        let a = alpha_star(&bounds(1.0, 1.0), 0.5).unwrap();
        assert!((a - 4.0 / 9.0).abs() < 1e-15);
        let tiny = alpha_star(&bounds(1e-12, 1.0), 0.5).unwrap();
        assert!(tiny < 1e-11);
        assert!(alpha_star(&bounds(4.0, 0.5), 0.5).is_err());
        assert!(alpha_star(&bounds(1.0, 1.0), 0.7).is_err());
        for (k, m) in [(0.1, 0.2), (1.0, 1.0), (0.5, 100.0)] {
            assert!(alpha_star(&bounds(k, m), 0.25).unwrap() <= 1.0);
        }
    }

    #[test]
    fn sampled_cap() {
        let a = alpha_star_sampled(&bounds(1.0, 2.0), 0.5, 0.5).unwrap();
        assert!((a - 2.0 * 0.5 * 0.5 / (2.0 * 1.5)).abs() < 1e-15);
    }
}
