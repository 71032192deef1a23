//! Loss models over index subsets of a dataset.
//!
//! Every evaluator takes the subset explicitly so the same model serves the
//! global objective `f`, a worker's local objective `f^k` and single-sample
//! terms. The data term is a mean over the subset; the ridge term
//! `(gamma/2)|w|^2` is added once per evaluation, which keeps
//! `f = (1/K) sum_k f^k` exact for equal shards.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `log(1 + exp(-y w.x))` plus ridge.
    LogisticL2,
    /// `(y - w.x)^2` plus ridge.
    LeastSquares,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::LogisticL2 => "logistic_l2",
            LossKind::LeastSquares => "least_squares",
        }
    }
}

/// `log(1 + exp(-z))` without overflow.
#[inline]
pub fn log1p_exp_neg(z: f64) -> f64 {
    (-z).max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Logistic sigmoid `1 / (1 + exp(-z))`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Largest value the ridge-free curvature `sigmoid(z) sigmoid(-z)` can take.
pub const LOGISTIC_MAX_CURVATURE: f64 = 0.25;

#[derive(Debug, Clone, Copy)]
pub struct ObjectiveModel<'a> {
    kind: LossKind,
    data: &'a Dataset,
    gamma: f64,
}

/// Curvature constants of a model: strong convexity `kappa`, smoothness
/// `smoothness` (M), per-sample Hessian bound `sample_curvature` (B) and
/// per-sample gradient bound `grad_bound` (Gamma).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureBounds {
    pub kappa: f64,
    pub smoothness: f64,
    pub sample_curvature: f64,
    pub grad_bound: f64,
}

impl CurvatureBounds {
    pub fn validate(&self) -> Result<()> {
        let all = [self.kappa, self.smoothness, self.sample_curvature, self.grad_bound];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("curvature bounds"));
        }
        if !(self.kappa > 0.0 && self.kappa <= self.smoothness) {
            return Err(Error::invalid(format!(
                "need 0 < kappa <= M, got kappa = {}, M = {}",
                self.kappa, self.smoothness
            )));
        }
        Ok(())
    }
}

impl<'a> ObjectiveModel<'a> {
    pub fn new(kind: LossKind, data: &'a Dataset, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("regularization must be finite and >= 0, got {gamma}")));
        }
        Ok(ObjectiveModel { kind, data, gamma })
    }

    pub fn logistic(data: &'a Dataset, gamma: f64) -> Result<Self> {
        Self::new(LossKind::LogisticL2, data, gamma)
    }

    pub fn least_squares(data: &'a Dataset, gamma: f64) -> Result<Self> {
        Self::new(LossKind::LeastSquares, data, gamma)
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.data.d()
    }

    fn check(&self, w: &[f64], subset: &[usize]) -> Result<()> {
        if subset.is_empty() {
            return Err(Error::invalid("empty sample subset"));
        }
        if w.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: w.len(),
            });
        }
        Ok(())
    }

    fn ridge_value(&self, w: &[f64]) -> f64 {
        0.5 * self.gamma * linalg::dot(w, w)
    }

    /// Data loss of sample `j` at margin/prediction `z = w.x_j`.
    #[inline]
    fn sample_loss(&self, j: usize, z: f64) -> f64 {
        let y = self.data.y(j);
        match self.kind {
            LossKind::LogisticL2 => log1p_exp_neg(y * z),
            LossKind::LeastSquares => (y - z) * (y - z),
        }
    }

    /// Derivative of the data loss of sample `j` with respect to `z`.
    #[inline]
    fn sample_slope(&self, j: usize, z: f64) -> f64 {
        let y = self.data.y(j);
        match self.kind {
            LossKind::LogisticL2 => -y * sigmoid(-y * z),
            LossKind::LeastSquares => -2.0 * (y - z),
        }
    }

    /// Second derivative of the data loss of sample `j` with respect to `z`.
    #[inline]
    fn sample_curvature(&self, j: usize, z: f64) -> f64 {
        match self.kind {
            LossKind::LogisticL2 => {
                let m = self.data.y(j) * z;
                sigmoid(m) * sigmoid(-m)
            }
            LossKind::LeastSquares => 2.0,
        }
    }

    pub fn value(&self, w: &[f64], subset: &[usize]) -> Result<f64> {
        self.check(w, subset)?;
        let terms: Vec<f64> = subset
            .iter()
            .map(|&j| self.sample_loss(j, linalg::dot(w, self.data.x(j))))
            .collect();
        Ok(linalg::pairwise_sum(&terms) / subset.len() as f64 + self.ridge_value(w))
    }

    pub fn gradient(&self, w: &[f64], subset: &[usize]) -> Result<Vec<f64>> {
        self.check(w, subset)?;
        let inv = 1.0 / subset.len() as f64;
        let mut g = vec![0.0; self.dim()];
        for &j in subset {
            let x = self.data.x(j);
            let c = self.sample_slope(j, linalg::dot(w, x));
            linalg::axpy(c * inv, x, &mut g);
        }
        linalg::axpy(self.gamma, w, &mut g);
        Ok(g)
    }

    /// Gradient of the single term `f_j`, ridge included.
    pub fn sample_gradient(&self, w: &[f64], j: usize) -> Vec<f64> {
        let x = self.data.x(j);
        let c = self.sample_slope(j, linalg::dot(w, x));
        let mut g: Vec<f64> = w.iter().map(|wi| self.gamma * wi).collect();
        linalg::axpy(c, x, &mut g);
        g
    }

    /// Freezes the per-sample curvature at `w` so repeated products
    /// (as in a CG solve) cost one pass over the subset each.
    pub fn hessian_at<'s>(&self, w: &[f64], subset: &'s [usize]) -> Result<HessianOperator<'a, 's>> {
        self.check(w, subset)?;
        let inv = 1.0 / subset.len() as f64;
        let weights = subset
            .iter()
            .map(|&j| self.sample_curvature(j, linalg::dot(w, self.data.x(j))) * inv)
            .collect();
        Ok(HessianOperator {
            data: self.data,
            subset,
            weights,
            gamma: self.gamma,
        })
    }

    pub fn hessian_vec(&self, w: &[f64], v: &[f64], subset: &[usize]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(self.hessian_at(w, subset)?.apply(v))
    }

    pub fn explicit_hessian(&self, w: &[f64], subset: &[usize]) -> Result<Matrix> {
        let op = self.hessian_at(w, subset)?;
        Ok(op.to_dense())
    }

    /// Curvature constants probed at the given iterates.
    ///
    /// `kappa` is the ridge weight for logistic models (the data term is
    /// PSD); least-squares models use the exact smallest eigenvalue when the
    /// dimension allows a dense solve.
    pub fn estimate_bounds(&self, probes: &[Vec<f64>]) -> Result<CurvatureBounds> {
        if probes.is_empty() {
            return Err(Error::invalid("need at least one probe iterate"));
        }
        let all: Vec<usize> = (0..self.data.n()).collect();
        let d = self.dim();

        let mut top = 0.0f64;
        for w in probes {
            let op = self.hessian_at(w, &all)?;
            let lam = linalg::power_iteration(d, 1e-6, 10_000, |v| op.apply(v));
            if !lam.is_finite() {
                return Err(Error::NonFinite("power iteration"));
            }
            top = top.max(lam);
        }

        let max_sq_norm = (0..self.data.n())
            .map(|j| linalg::dot(self.data.x(j), self.data.x(j)))
            .fold(0.0, f64::max);
        let per_sample = match self.kind {
            LossKind::LogisticL2 => LOGISTIC_MAX_CURVATURE * max_sq_norm,
            LossKind::LeastSquares => 2.0 * max_sq_norm,
        };

        let kappa = match self.kind {
            LossKind::LogisticL2 => self.gamma,
            LossKind::LeastSquares if d <= 500 => {
                let h = self.explicit_hessian(&probes[0], &all)?.to_nalgebra();
                let eig = nalgebra::SymmetricEigen::new(h);
                let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
                if !lo.is_finite() {
                    return Err(Error::NonFinite("symmetric eigensolve"));
                }
                lo.max(self.gamma)
            }
            LossKind::LeastSquares => self.gamma,
        };

        let mut grad_bound = 0.0f64;
        for w in probes {
            for j in 0..self.data.n() {
                grad_bound = grad_bound.max(linalg::norm(&self.sample_gradient(w, j)));
            }
        }

        Ok(CurvatureBounds {
            kappa,
            smoothness: top,
            sample_curvature: self.gamma + per_sample,
            grad_bound,
        })
    }
}

/// Hessian of a subset loss with curvature frozen at one iterate.
#[derive(Debug, Clone)]
pub struct HessianOperator<'a, 's> {
    data: &'a Dataset,
    subset: &'s [usize],
    weights: Vec<f64>,
    gamma: f64,
}

impl HessianOperator<'_, '_> {
    pub fn dim(&self) -> usize {
        self.data.d()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().map(|vi| self.gamma * vi).collect();
        for (&j, &c) in self.subset.iter().zip(&self.weights) {
            let x = self.data.x(j);
            let t = c * linalg::dot(x, v);
            linalg::axpy(t, x, &mut out);
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let d = self.dim();
        let mut h = Matrix::zeros(d, d);
        for i in 0..d {
            h[(i, i)] = self.gamma;
        }
        for (&j, &c) in self.subset.iter().zip(&self.weights) {
            let x = self.data.x(j);
            for a in 0..d {
                let ca = c * x[a];
                if ca == 0.0 {
                    continue;
                }
                for b in 0..d {
                    h[(a, b)] += ca * x[b];
                }
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;

    fn one(x: Vec<f64>, y: f64, task: Task) -> Dataset {
        Dataset::from_rows(&[x], vec![y], task).unwrap()
    }

    #[test]
    fn logistic_at_origin_is_log2() {
        let ds = Dataset::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]], vec![1.0, -1.0], Task::Binary).unwrap();
        let m = ObjectiveModel::logistic(&ds, 0.0).unwrap();
        let v = m.value(&[0.0, 0.0], &[0, 1]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logistic_single_sample() {
        let ds = one(vec![1.0], 1.0, Task::Binary);
        let m = ObjectiveModel::logistic(&ds, 0.0).unwrap();
        let v = m.value(&[1.0], &[0]).unwrap();
        // log(1 + e^-1)
        assert!((v - 0.313_261_687_518_222_8).abs() < 1e-15, "{v}");
    }

    #[test]
    fn least_squares_exact_fit_and_gradient() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0]], vec![1.0, 2.0], Task::Regression).unwrap();
        let m = ObjectiveModel::least_squares(&ds, 0.0).unwrap();
        assert_eq!(m.value(&[1.0], &[0, 1]).unwrap(), 0.0);
        // (-2/2) * (1*1 + 2*2) = -5
        assert_eq!(m.gradient(&[0.0], &[0, 1]).unwrap(), vec![-5.0]);
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let ds = Dataset::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]], vec![1.0, -1.0], Task::Binary).unwrap();
        let m = ObjectiveModel::logistic(&ds, 0.0).unwrap();
        let g = m.gradient(&[0.0, 0.0], &[0, 1]).unwrap();
        // -(1/2) * sum y_j x_j / 2
        let expect = [-(1.0 + 3.0) / 4.0, -(2.0 - 0.5) / 4.0];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hessian_vec_scalar_case() {
        let ds = one(vec![2.0], 1.0, Task::Binary);
        let m = ObjectiveModel::logistic(&ds, 0.0).unwrap();
        assert_eq!(m.hessian_vec(&[0.0], &[3.0], &[0]).unwrap(), vec![3.0]);
        assert_eq!(m.hessian_vec(&[0.7], &[0.0], &[0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn empty_subset_rejected() {
        let ds = one(vec![2.0], 1.0, Task::Binary);
        let m = ObjectiveModel::logistic(&ds, 0.0).unwrap();
        assert!(m.value(&[0.0], &[]).is_err());
        assert!(m.gradient(&[0.0], &[]).is_err());
        assert!(m.hessian_vec(&[0.0], &[1.0], &[]).is_err());
        assert!(m.value(&[0.0, 1.0], &[0]).is_err());
    }

    #[test]
    fn bounds_for_simple_models() {
        let ds = one(vec![2.0, 0.0], 1.0, Task::Binary);
        let m = ObjectiveModel::logistic(&ds, 0.0).unwrap();
        let b = m.estimate_bounds(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(b.sample_curvature, 1.0);
        assert!(b.smoothness <= b.sample_curvature + 1e-12);

        // H = diag(0.25 * 4, 0) + 0.3 I
        let m = ObjectiveModel::logistic(&ds, 0.3).unwrap();
        let b = m.estimate_bounds(&[vec![0.0, 0.0]]).unwrap();
        assert!((b.smoothness - 1.3).abs() < 1e-6, "{}", b.smoothness);
        assert_eq!((b.kappa, b.sample_curvature), (0.3, 1.3));

        let ds = Dataset::from_rows(
            &[vec![1.0, 0.2], vec![-0.4, 1.0], vec![0.3, 0.3]],
            vec![1.0, -1.0, 1.0],
            Task::Binary,
        )
        .unwrap();
        let m = ObjectiveModel::logistic(&ds, 0.01).unwrap();
        let b = m.estimate_bounds(&[vec![0.0, 0.0], vec![1.0, -1.0]]).unwrap();
        assert_eq!(b.kappa, 0.01);
        assert!(b.smoothness <= b.sample_curvature);
        b.validate().unwrap();
    }

    #[test]
    fn stable_softplus_extremes() {
        assert!((log1p_exp_neg(1000.0)).abs() < 1e-300);
        assert!((log1p_exp_neg(-1000.0) - 1000.0).abs() < 1e-9);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }
}
