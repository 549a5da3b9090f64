//! Input-affine systems `x' = f(x) + g(x) u`, `y = h(x)` and the Lie-derivative
//! machinery used to compute and verify relative degrees.
//!
//! Every evaluator is a pure function of the state. Gradients of scalar fields
//! are taken analytically when the field supplies them and by central finite
//! differences otherwise, with step `cbrt(eps) * max(1, |x_i|)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};
use thiserror::Error;

pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type StatePredicate = Arc<dyn Fn(&DVector<f64>) -> bool + Send + Sync>;
pub type SingularityFn = Arc<dyn Fn(&DVector<f64>) -> Option<String> + Send + Sync>;

/// Order of nested finite differencing allowed by default.
pub const DEFAULT_FD_NESTING: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AffineError {
    #[error("{what} is not finite in component {index} at x = {state:?}")]
    NonFinite { what: &'static str, index: usize, state: Vec<f64> },
    #[error("{what} has shape {got:?}, expected {expected:?}")]
    Shape {
        what: &'static str,
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("Lie derivative of order {order} exceeds the finite-difference nesting limit {limit}; supply analytic inner derivatives")]
    NestingLimit { order: usize, limit: usize },
    #[error("unsupported relative-degree profile: {0}")]
    UnsupportedProfile(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

fn check_finite_vec(what: &'static str, v: &DVector<f64>, x: &DVector<f64>) -> Result<(), AffineError> {
    match v.iter().position(|c| !c.is_finite()) {
        Some(index) => Err(AffineError::NonFinite {
            what,
            index,
            state: x.iter().copied().collect(),
        }),
        None => Ok(()),
    }
}

/// Optional analytic Jacobians. `input_columns[j]` is the Jacobian of the
/// j-th column of `g`.
#[derive(Clone, Default)]
pub struct AnalyticJacobians {
    pub drift: Option<MatrixFn>,
    pub output: Option<MatrixFn>,
    pub input_columns: Option<Vec<MatrixFn>>,
}

/// A smooth input-affine system with its admissible region.
#[derive(Clone)]
pub struct AffineSystem {
    dim_state: usize,
    dim_input: usize,
    dim_output: usize,
    drift: VectorFn,
    input_matrix: MatrixFn,
    output: VectorFn,
    jacobians: AnalyticJacobians,
    admissible: Option<StatePredicate>,
    singularity: Option<SingularityFn>,
    fd_nesting_limit: usize,
}

impl fmt::Debug for AffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineSystem")
            .field("dim_state", &self.dim_state)
            .field("dim_input", &self.dim_input)
            .field("dim_output", &self.dim_output)
            .field("fd_nesting_limit", &self.fd_nesting_limit)
            .finish_non_exhaustive()
    }
}

impl AffineSystem {
    pub fn new<F, G, H>(dim_state: usize, dim_input: usize, dim_output: usize, drift: F, input_matrix: G, output: H) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        H: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        assert!(
            dim_state > 0 && dim_input > 0 && dim_output > 0,
            "system dimensions must be positive"
        );
        Self {
            dim_state,
            dim_input,
            dim_output,
            drift: Arc::new(drift),
            input_matrix: Arc::new(input_matrix),
            output: Arc::new(output),
            jacobians: AnalyticJacobians::default(),
            admissible: None,
            singularity: None,
            fd_nesting_limit: DEFAULT_FD_NESTING,
        }
    }

    pub fn with_drift_jacobian(mut self, jac: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jacobians.drift = Some(Arc::new(jac));
        self
    }

    pub fn with_output_jacobian(mut self, jac: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jacobians.output = Some(Arc::new(jac));
        self
    }

    pub fn with_input_column_jacobians(mut self, jacs: Vec<MatrixFn>) -> Self {
        assert_eq!(jacs.len(), self.dim_input, "one Jacobian per input column");
        self.jacobians.input_columns = Some(jacs);
        self
    }

    pub fn with_admissible_region(mut self, pred: impl Fn(&DVector<f64>) -> bool + Send + Sync + 'static) -> Self {
        self.admissible = Some(Arc::new(pred));
        self
    }

    /// Attach a monitor that reports proximity to a singular surface.
    pub fn with_singularity_monitor(mut self, mon: impl Fn(&DVector<f64>) -> Option<String> + Send + Sync + 'static) -> Self {
        self.singularity = Some(Arc::new(mon));
        self
    }

    pub fn with_fd_nesting_limit(mut self, limit: usize) -> Self {
        self.fd_nesting_limit = limit;
        self
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_input(&self) -> usize {
        self.dim_input
    }

    pub fn dim_output(&self) -> usize {
        self.dim_output
    }

    pub fn fd_nesting_limit(&self) -> usize {
        self.fd_nesting_limit
    }

    pub fn jacobians(&self) -> &AnalyticJacobians {
        &self.jacobians
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<(), AffineError> {
        if x.len() != self.dim_state {
            return Err(AffineError::Shape {
                what: "state",
                got: (x.len(), 1),
                expected: (self.dim_state, 1),
            });
        }
        check_finite_vec("state", x, x)
    }

    pub fn drift(&self, x: &DVector<f64>) -> Result<DVector<f64>, AffineError> {
        self.check_state(x)?;
        let f = (self.drift)(x);
        if f.len() != self.dim_state {
            return Err(AffineError::Shape {
                what: "f(x)",
                got: (f.len(), 1),
                expected: (self.dim_state, 1),
            });
        }
        check_finite_vec("f(x)", &f, x)?;
        Ok(f)
    }

    pub fn input_matrix(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, AffineError> {
        self.check_state(x)?;
        let g = (self.input_matrix)(x);
        if g.shape() != (self.dim_state, self.dim_input) {
            return Err(AffineError::Shape {
                what: "g(x)",
                got: g.shape(),
                expected: (self.dim_state, self.dim_input),
            });
        }
        if let Some(index) = g.iter().position(|c| !c.is_finite()) {
            return Err(AffineError::NonFinite {
                what: "g(x)",
                index,
                state: x.iter().copied().collect(),
            });
        }
        Ok(g)
    }

    pub fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>, AffineError> {
        self.check_state(x)?;
        let y = (self.output)(x);
        if y.len() != self.dim_output {
            return Err(AffineError::Shape {
                what: "h(x)",
                got: (y.len(), 1),
                expected: (self.dim_output, 1),
            });
        }
        check_finite_vec("h(x)", &y, x)?;
        Ok(y)
    }

    /// `f(x) + g(x) u`.
    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, AffineError> {
        if u.len() != self.dim_input {
            return Err(AffineError::Shape {
                what: "input",
                got: (u.len(), 1),
                expected: (self.dim_input, 1),
            });
        }
        Ok(self.drift(x)? + self.input_matrix(x)? * u)
    }

    /// True when the state lies in the declared admissible region (every
    /// finite state, when no region was declared).
    pub fn is_admissible(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim_state && x.iter().all(|c| c.is_finite()) && self.admissible.as_ref().is_none_or(|p| p(x))
    }

    pub fn singularity(&self, x: &DVector<f64>) -> Option<String> {
        self.singularity.as_ref().and_then(|m| m(x))
    }

    /// The i-th output component as a scalar field.
    pub fn output_field(&self, index: usize) -> Arc<dyn ScalarField> {
        assert!(index < self.dim_output, "output index out of range");
        Arc::new(OutputComponent { sys: self.clone(), index })
    }
}

/// A smooth scalar function of the state, optionally with an analytic gradient.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
}

impl<F> ScalarField for F
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync,
{
    fn value(&self, x: &DVector<f64>) -> f64 {
        self(x)
    }
}

/// Scalar field with a hand-written gradient.
pub struct GradientField<V, G> {
    value: V,
    gradient: G,
}

impl<V, G> GradientField<V, G>
where
    V: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(value: V, gradient: G) -> Self {
        Self { value, gradient }
    }
}

impl<V, G> ScalarField for GradientField<V, G>
where
    V: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some((self.gradient)(x))
    }
}

/// Hides any analytic gradient of the wrapped field, forcing finite differences.
pub struct NumericOnly<'a>(pub &'a dyn ScalarField);

impl ScalarField for NumericOnly<'_> {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.0.value(x)
    }
}

struct OutputComponent {
    sys: AffineSystem,
    index: usize,
}

impl ScalarField for OutputComponent {
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.sys.output)(x)[self.index]
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let jac = self.sys.jacobians.output.as_ref()?;
        Some(jac(x).row(self.index).transpose())
    }
}

/// `L_f` of an inner field, itself a scalar field. Its gradient is taken
/// numerically, which is what bounds the nesting depth.
pub struct LieDerivativeField {
    sys: AffineSystem,
    inner: Arc<dyn ScalarField>,
}

impl ScalarField for LieDerivativeField {
    fn value(&self, x: &DVector<f64>) -> f64 {
        lie_f(&self.sys, self.inner.as_ref(), x).unwrap_or(f64::NAN)
    }
}

/// Relative finite-difference step, `cbrt(machine epsilon)`.
pub fn fd_step() -> f64 {
    f64::EPSILON.cbrt()
}

/// Central-difference gradient, ignoring any analytic gradient.
pub fn numeric_gradient(field: &dyn ScalarField, x: &DVector<f64>) -> DVector<f64> {
    let eps = fd_step();
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |i, _| {
        let h = eps * x[i].abs().max(1.0);
        let xi = x[i];
        probe[i] = xi + h;
        let up = field.value(&probe);
        probe[i] = xi - h;
        let down = field.value(&probe);
        probe[i] = xi;
        (up - down) / (2.0 * h)
    })
}

/// Analytic gradient when available, central differences otherwise.
pub fn gradient(field: &dyn ScalarField, x: &DVector<f64>) -> Result<DVector<f64>, AffineError> {
    let grad = field.gradient(x).unwrap_or_else(|| numeric_gradient(field, x));
    if grad.len() != x.len() {
        return Err(AffineError::Shape {
            what: "gradient",
            got: (grad.len(), 1),
            expected: (x.len(), 1),
        });
    }
    check_finite_vec("gradient", &grad, x)?;
    Ok(grad)
}

/// `L_f ζ(x) = ∇ζ(x) · f(x)`.
pub fn lie_f(sys: &AffineSystem, field: &dyn ScalarField, at: &DVector<f64>) -> Result<f64, AffineError> {
    let f = sys.drift(at)?;
    let grad = gradient(field, at)?;
    Ok(grad.dot(&f))
}

/// `L_g ζ(x) = ∇ζ(x) · g(x)`, one entry per input channel.
pub fn lie_g(sys: &AffineSystem, field: &dyn ScalarField, at: &DVector<f64>) -> Result<RowDVector<f64>, AffineError> {
    let g = sys.input_matrix(at)?;
    let grad = gradient(field, at)?;
    Ok(grad.transpose() * g)
}

/// The field `L_f^order ζ`, built by nesting. Orders above the system's
/// finite-difference nesting limit are refused.
pub fn lie_f_power(sys: &AffineSystem, field: Arc<dyn ScalarField>, order: usize) -> Result<Arc<dyn ScalarField>, AffineError> {
    if order > sys.fd_nesting_limit {
        return Err(AffineError::NestingLimit {
            order,
            limit: sys.fd_nesting_limit,
        });
    }
    let mut current = field;
    for _ in 0..order {
        current = Arc::new(LieDerivativeField {
            sys: sys.clone(),
            inner: current,
        });
    }
    Ok(current)
}

/// `L_f^k ζ(x)`; `k = 0` returns the field value.
pub fn iterated_lie_f(sys: &AffineSystem, field: Arc<dyn ScalarField>, order: usize, at: &DVector<f64>) -> Result<f64, AffineError> {
    sys.check_state(at)?;
    if order == 0 {
        let v = field.value(at);
        return finite_scalar("field value", v, at);
    }
    if order > sys.fd_nesting_limit {
        return Err(AffineError::NestingLimit {
            order,
            limit: sys.fd_nesting_limit,
        });
    }
    let inner = lie_f_power(sys, field, order - 1)?;
    lie_f(sys, inner.as_ref(), at)
}

fn finite_scalar(what: &'static str, v: f64, x: &DVector<f64>) -> Result<f64, AffineError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(AffineError::NonFinite {
            what,
            index: 0,
            state: x.iter().copied().collect(),
        })
    }
}

/// Per-output relative degrees `ρ_i` and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeDegreeProfile {
    pub rho: Vec<usize>,
    pub total: usize,
    /// Probe states at which the profile was verified (empty until verified).
    pub verified_at: Vec<DVector<f64>>,
}

impl RelativeDegreeProfile {
    pub fn new(rho: Vec<usize>) -> Self {
        let total = rho.iter().sum();
        Self {
            rho,
            total,
            verified_at: Vec::new(),
        }
    }

    pub fn num_outputs(&self) -> usize {
        self.rho.len()
    }

    pub fn max_degree(&self) -> usize {
        self.rho.iter().copied().max().unwrap_or(0)
    }

    pub fn is_verified(&self) -> bool {
        !self.verified_at.is_empty()
    }

    /// Rejects empty profiles and zero entries. The linearizing construction
    /// stacks `h_i, …, L_f^{ρ_i-1} h_i`, which needs `ρ_i ≥ 1`.
    pub fn check_supported(&self) -> Result<(), AffineError> {
        if self.rho.is_empty() {
            return Err(AffineError::UnsupportedProfile("no outputs".into()));
        }
        if let Some(i) = self.rho.iter().position(|&r| r == 0) {
            return Err(AffineError::UnsupportedProfile(format!(
                "relative degree of output {} is zero",
                i + 1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    Vanishing,
    NonVanishing,
}

/// One `‖L_g L_f^j h_i‖` measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeEvidence {
    pub output: usize,
    pub probe: usize,
    pub order: usize,
    /// Norm divided by `max(1, ‖g(x)‖_F)`.
    pub scaled_magnitude: f64,
    pub expected: Expectation,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct RelativeDegreeReport {
    pub profile: RelativeDegreeProfile,
    pub evidence: Vec<DegreeEvidence>,
    pub tolerance: f64,
    pub passed: bool,
}

impl RelativeDegreeReport {
    pub fn failures(&self) -> impl Iterator<Item = &DegreeEvidence> {
        self.evidence.iter().filter(|e| !e.ok)
    }

    /// Largest magnitude among terms that should vanish.
    pub fn max_vanishing(&self) -> f64 {
        self.evidence
            .iter()
            .filter(|e| e.expected == Expectation::Vanishing)
            .map(|e| e.scaled_magnitude)
            .fold(0.0, f64::max)
    }

    /// Smallest magnitude among terms that must not vanish.
    pub fn min_nonvanishing(&self) -> f64 {
        self.evidence
            .iter()
            .filter(|e| e.expected == Expectation::NonVanishing)
            .map(|e| e.scaled_magnitude)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Checks `L_g L_f^j h_i = 0` for `j < ρ_i - 1` and `≠ 0` at `j = ρ_i - 1` at
/// every probe. On success the returned profile carries the probes.
pub fn verify_relative_degree(
    sys: &AffineSystem,
    claimed: &RelativeDegreeProfile,
    probes: &[DVector<f64>],
    tol: f64,
) -> Result<RelativeDegreeReport, AffineError> {
    if probes.is_empty() {
        return Err(AffineError::Argument("probe list is empty".into()));
    }
    if claimed.rho.len() != sys.dim_output {
        return Err(AffineError::Argument(format!(
            "profile has {} entries but the system has {} outputs",
            claimed.rho.len(),
            sys.dim_output
        )));
    }
    claimed.check_supported()?;

    let chains: Vec<Vec<Arc<dyn ScalarField>>> = (0..sys.dim_output)
        .map(|i| {
            let mut fields = vec![sys.output_field(i)];
            for j in 1..claimed.rho[i] {
                fields.push(lie_f_power(sys, sys.output_field(i), j)?);
            }
            Ok(fields)
        })
        .collect::<Result<_, AffineError>>()?;

    let mut evidence = Vec::new();
    for (p, x) in probes.iter().enumerate() {
        let scale = sys.input_matrix(x)?.norm().max(1.0);
        for (i, chain) in chains.iter().enumerate() {
            for (j, field) in chain.iter().enumerate() {
                let mag = lie_g(sys, field.as_ref(), x)?.norm() / scale;
                let expected = if j + 1 == claimed.rho[i] {
                    Expectation::NonVanishing
                } else {
                    Expectation::Vanishing
                };
                let ok = match expected {
                    Expectation::Vanishing => mag < tol,
                    Expectation::NonVanishing => mag > tol,
                };
                evidence.push(DegreeEvidence {
                    output: i,
                    probe: p,
                    order: j,
                    scaled_magnitude: mag,
                    expected,
                    ok,
                });
            }
        }
    }
    let passed = evidence.iter().all(|e| e.ok);
    let mut profile = RelativeDegreeProfile::new(claimed.rho.clone());
    if passed {
        profile.verified_at = probes.to_vec();
    }
    Ok(RelativeDegreeReport {
        profile,
        evidence,
        tolerance: tol,
        passed,
    })
}

/// Worst relative disagreement between supplied analytic Jacobians and
/// central finite differences over the given states.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JacobianCheck {
    pub drift: Option<f64>,
    pub output: Option<f64>,
    pub input_columns: Option<f64>,
}

impl JacobianCheck {
    pub fn worst(&self) -> f64 {
        [self.drift, self.output, self.input_columns]
            .into_iter()
            .flatten()
            .fold(0.0, f64::max)
    }
}

fn numeric_jacobian(map: &dyn Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let eps = fd_step();
    let rows = map(x).len();
    let mut jac = DMatrix::zeros(rows, x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let h = eps * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = map(&probe);
        probe[i] = x[i] - h;
        let down = map(&probe);
        probe[i] = x[i];
        jac.set_column(i, &((up - down) / (2.0 * h)));
    }
    jac
}

fn relative_mismatch(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}

pub fn check_jacobians(sys: &AffineSystem, states: &[DVector<f64>]) -> Result<JacobianCheck, AffineError> {
    let mut out = JacobianCheck::default();
    for x in states {
        sys.check_state(x)?;
        if let Some(jac) = &sys.jacobians.drift {
            let num = numeric_jacobian(&|s| (sys.drift)(s), x);
            let e = relative_mismatch(&jac(x), &num);
            out.drift = Some(out.drift.unwrap_or(0.0).max(e));
        }
        if let Some(jac) = &sys.jacobians.output {
            let num = numeric_jacobian(&|s| (sys.output)(s), x);
            let e = relative_mismatch(&jac(x), &num);
            out.output = Some(out.output.unwrap_or(0.0).max(e));
        }
        if let Some(cols) = &sys.jacobians.input_columns {
            for (j, jac) in cols.iter().enumerate() {
                let num = numeric_jacobian(&|s| (sys.input_matrix)(s).column(j).into_owned(), x);
                let e = relative_mismatch(&jac(x), &num);
                out.input_columns = Some(out.input_columns.unwrap_or(0.0).max(e));
            }
        }
    }
    Ok(out)
}
