use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by the solvers. All thresholds on matrices
/// are applied in the scale-aware form `tol * (1 + |M|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Mixed relative/absolute local error target of the Runge–Kutta integrator.
    pub ode: f64,
    /// Quadrature accuracy (Frobenius norm).
    pub quad: f64,
    /// Residual target for the algebraic Riccati solvers.
    pub are: f64,
    pub psd: f64,
    pub pd: f64,
    pub rank: f64,
    /// Slack on the monotone growth of the forward induction.
    pub mono: f64,
    /// Strict margin on the first sampling-threshold inequality.
    pub margin: f64,
    /// Increment threshold of the forward induction.
    pub stop: f64,
    pub max_iters: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ode: 1e-10,
            quad: 1e-12,
            are: 1e-11,
            psd: 1e-10,
            pd: 1e-10,
            rank: 1e-10,
            mono: 1e-9,
            margin: 1e-12,
            stop: 1e-13,
            max_iters: 1_000_000,
        }
    }
}

impl Tolerances {
    pub fn with_ode(mut self, ode: f64) -> Self {
        self.ode = ode;
        self
    }

    pub fn with_are(mut self, are: f64) -> Self {
        self.are = are;
        self
    }

    pub fn with_quad(mut self, quad: f64) -> Self {
        self.quad = quad;
        self
    }
}
