use std::time::Duration;

use crate::error::{Error, Result};
use crate::image::{MultiEchoSet, RealImage};

/// Regularization weights, iteration budgets and tolerances shared by all
/// reconstruction pipelines.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconParams {
    /// Sparsity weight on the echo images (decoupled/joint) or on X0 (model-based).
    pub lambda1: f64,
    /// Sparsity weight on H0 = log X0 (on R2* for the model-based baseline).
    pub lambda2: f64,
    /// Sparsity weight on R2*.
    pub lambda3: f64,
    /// Weight of the decay-model term in the joint objective.
    pub lambda: f64,
    /// Augmented-Lagrangian penalty.
    pub rho: f64,
    pub outer_iters: usize,
    /// Proximal-gradient passes of the (phase, magnitude) block per outer iteration.
    pub inner_iters: usize,
    /// Dual iterations inside each l1 proximal step.
    pub fista_iters: usize,
    /// Alternating (H0, R2*) passes per fit.
    pub fit_iters: usize,
    pub tol_primal: f64,
    pub tol_change: f64,
    pub e_min: f64,
    /// Upper bound of E; `None` means ten times the largest recovered magnitude.
    pub e_max: Option<f64>,
    /// Upper clamp for R2* in 1/ms.
    pub r_max: f64,
    /// Budget of the cheap decoupled run that seeds the joint and model-based
    /// pipelines; zero starts them from zero images.
    pub warm_start_iters: usize,
    pub wavelet_levels: usize,
    pub power_iters: usize,
}

impl Default for ReconParams {
    fn default() -> Self {
        Self {
            lambda1: 1e-3,
            lambda2: 1e-3,
            lambda3: 1e-5,
            lambda: 1.0,
            rho: 1.0,
            outer_iters: 10,
            inner_iters: 4,
            fista_iters: 2,
            fit_iters: 10,
            tol_primal: 1e-4,
            tol_change: 1e-5,
            e_min: f64::EPSILON,
            e_max: None,
            r_max: 1.0,
            warm_start_iters: 20,
            wavelet_levels: crate::transforms::DEFAULT_LEVELS,
            power_iters: 50,
        }
    }
}

impl ReconParams {
    /// Zero regularization, generous budgets: for exact-recovery checks.
    pub fn unregularized() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            outer_iters: 50,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda", self.lambda),
            ("rho", self.rho),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        for (name, v) in [
            ("outer_iters", self.outer_iters),
            ("inner_iters", self.inner_iters),
            ("fista_iters", self.fista_iters),
            ("fit_iters", self.fit_iters),
            ("power_iters", self.power_iters),
        ] {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        if !(self.tol_primal > 0.0) || !(self.tol_change > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !(self.e_min > 0.0) {
            return Err(Error::InvalidInput("e_min must be positive".into()));
        }
        if let Some(e_max) = self.e_max {
            if !(e_max > self.e_min) || !e_max.is_finite() {
                return Err(Error::InvalidInput("e_max must be finite and exceed e_min".into()));
            }
        }
        if !(self.r_max > 0.0) {
            return Err(Error::InvalidInput("r_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// `sum_i ||X_i - E_i||_2` (zero for pipelines without a split).
    pub primal_residual: f64,
    pub objective: f64,
    pub relative_change: f64,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<IterationRecord>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

#[derive(Clone, Debug)]
pub struct ReconResult {
    pub x0: RealImage,
    /// 1/ms
    pub r2star: RealImage,
    pub h0: RealImage,
    /// Phase angles in [0, 2pi).
    pub theta: MultiEchoSet<f64>,
    pub xi: MultiEchoSet<f64>,
    pub trace: ConvergenceTrace,
    pub converged: bool,
}

impl ReconResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}
