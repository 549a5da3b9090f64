//! Input-output linearizing control `u = α(x) + γ(x)⁺ v` for square, wide and
//! tall plants.
//!
//! With `ξ = ψ(x)` the stacked output chains, the closed loop reads
//! `ξ' = A_c ξ + B_c Λ(x) v` wherever the drift stack `[L_f^{ρ_i} h_i]` lies in
//! the range of `γ(x)`, and `Λ(x) = γ(x) γ(x)⁺` is the orthogonal projection
//! onto that range. For tall plants `Λ` has rank at most `l_u`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::affine::{gradient, lie_f_power, AffineError, AffineSystem, RelativeDegreeProfile, ScalarField};
use crate::linalg::{pseudo_inverse_full, DEFAULT_PINV_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IolError {
    #[error(transparent)]
    Affine(#[from] AffineError),
    #[error("relative-degree profile has not been verified against the system")]
    UnverifiedProfile,
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Block-diagonal integrator chains.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionForm {
    pub a_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
    pub block_sizes: Vec<usize>,
}

pub fn companion_matrices(profile: &RelativeDegreeProfile) -> Result<CompanionForm, IolError> {
    profile.check_supported()?;
    let rho = profile.total;
    let ly = profile.rho.len();
    let mut a_c = DMatrix::zeros(rho, rho);
    let mut b_c = DMatrix::zeros(rho, ly);
    let mut offset = 0;
    for (i, &ri) in profile.rho.iter().enumerate() {
        for k in 0..ri - 1 {
            a_c[(offset + k, offset + k + 1)] = 1.0;
        }
        b_c[(offset + ri - 1, i)] = 1.0;
        offset += ri;
    }
    Ok(CompanionForm {
        a_c,
        b_c,
        block_sizes: profile.rho.clone(),
    })
}

/// `ψ(x)`: per output, `[h_i, L_f h_i, …, L_f^{ρ_i-1} h_i]`, stacked in output order.
#[derive(Clone)]
pub struct PsiMap {
    chains: Vec<Vec<Arc<dyn ScalarField>>>,
    dim: usize,
}

impl PsiMap {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, IolError> {
        let values: Vec<f64> = self.chains.iter().flatten().map(|f| f.value(x)).collect();
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(AffineError::NonFinite {
                what: "psi(x)",
                index,
                state: x.iter().copied().collect(),
            }
            .into());
        }
        Ok(DVector::from_vec(values))
    }

    fn top(&self, output: usize) -> &dyn ScalarField {
        self.chains[output].last().expect("chains are non-empty").as_ref()
    }
}

pub fn build_psi(sys: &AffineSystem, profile: &RelativeDegreeProfile) -> Result<PsiMap, IolError> {
    if !profile.is_verified() {
        return Err(IolError::UnverifiedProfile);
    }
    if profile.rho.len() != sys.dim_output() {
        return Err(IolError::Argument(format!(
            "profile has {} outputs, system has {}",
            profile.rho.len(),
            sys.dim_output()
        )));
    }
    profile.check_supported()?;
    if profile.max_degree() > sys.fd_nesting_limit() {
        return Err(AffineError::NestingLimit {
            order: profile.max_degree(),
            limit: sys.fd_nesting_limit(),
        }
        .into());
    }
    let chains = profile
        .rho
        .iter()
        .enumerate()
        .map(|(i, &ri)| {
            (0..ri)
                .map(|j| lie_f_power(sys, sys.output_field(i), j))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PsiMap {
        chains,
        dim: profile.total,
    })
}

/// `Λ(x) = γγ⁺` at one state, with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSnapshot {
    pub matrix: DMatrix<f64>,
    pub diagonal: DVector<f64>,
    pub rank: usize,
    pub time: f64,
    /// Frobenius norm of the off-diagonal part.
    pub offdiag_mass: f64,
    /// `‖Λ² − Λ‖_F`.
    pub idempotence_residual: f64,
    /// `‖Λ − Λᵀ‖_F`.
    pub symmetry_residual: f64,
}

impl LambdaSnapshot {
    fn new(matrix: DMatrix<f64>, rank: usize, time: f64) -> Self {
        let diagonal = matrix.diagonal();
        let mut off = matrix.clone();
        off.fill_diagonal(0.0);
        let idempotence_residual = (&matrix * &matrix - &matrix).norm();
        let symmetry_residual = (&matrix - matrix.transpose()).norm();
        Self {
            diagonal,
            rank,
            time,
            offdiag_mass: off.norm(),
            idempotence_residual,
            symmetry_residual,
            matrix,
        }
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Number of eigenvalues of the (symmetric) projection below one half.
    pub fn small_eigenvalue_count(&self) -> usize {
        let sym = (&self.matrix + self.matrix.transpose()) * 0.5;
        sym.symmetric_eigenvalues().iter().filter(|&&l| l < 0.5).count()
    }
}

/// `γ(x)` with an optional warning when the state is close to a singular surface.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaEvaluation {
    pub matrix: DMatrix<f64>,
    pub warning: Option<String>,
}

/// Everything computed for one control evaluation.
#[derive(Debug, Clone)]
pub struct ControlEvaluation {
    pub u: DVector<f64>,
    pub alpha: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub gamma_pinv: DMatrix<f64>,
    pub lf_rho: DVector<f64>,
    pub lambda: LambdaSnapshot,
    pub warning: Option<String>,
}

/// Immutable input-output linearizing controller.
#[derive(Clone)]
pub struct LinearizingController {
    system: AffineSystem,
    profile: RelativeDegreeProfile,
    psi: PsiMap,
    companion: CompanionForm,
    pinv_tol: f64,
}

impl LinearizingController {
    pub fn new(system: AffineSystem, profile: RelativeDegreeProfile, pinv_tol: f64) -> Result<Self, IolError> {
        if !(pinv_tol.is_finite() && pinv_tol >= 0.0) {
            return Err(IolError::Argument(format!(
                "pseudo-inverse tolerance {pinv_tol} must be finite and non-negative"
            )));
        }
        let psi = build_psi(&system, &profile)?;
        let companion = companion_matrices(&profile)?;
        Ok(Self {
            system,
            profile,
            psi,
            companion,
            pinv_tol,
        })
    }

    pub fn with_default_tolerance(system: AffineSystem, profile: RelativeDegreeProfile) -> Result<Self, IolError> {
        Self::new(system, profile, DEFAULT_PINV_TOL)
    }

    pub fn system(&self) -> &AffineSystem {
        &self.system
    }

    pub fn profile(&self) -> &RelativeDegreeProfile {
        &self.profile
    }

    pub fn companion(&self) -> &CompanionForm {
        &self.companion
    }

    pub fn pinv_tol(&self) -> f64 {
        self.pinv_tol
    }

    pub fn psi(&self, x: &DVector<f64>) -> Result<DVector<f64>, IolError> {
        self.psi.eval(x)
    }

    /// Rows `L_g L_f^{ρ_i-1} h_i` and entries `L_f^{ρ_i} h_i`, sharing gradients.
    fn gamma_and_lf(&self, x: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>), IolError> {
        let f = self.system.drift(x)?;
        let g = self.system.input_matrix(x)?;
        let ly = self.profile.rho.len();
        let mut gamma = DMatrix::zeros(ly, self.system.dim_input());
        let mut lf = DVector::zeros(ly);
        for i in 0..ly {
            let grad = gradient(self.psi.top(i), x)?;
            gamma.set_row(i, &(grad.transpose() * &g));
            lf[i] = grad.dot(&f);
        }
        Ok((gamma, lf))
    }

    pub fn gamma(&self, x: &DVector<f64>) -> Result<GammaEvaluation, IolError> {
        let (matrix, _) = self.gamma_and_lf(x)?;
        Ok(GammaEvaluation {
            matrix,
            warning: self.system.singularity(x),
        })
    }

    /// `[L_f^{ρ_1} h_1, …, L_f^{ρ_{l_y}} h_{l_y}]`.
    pub fn lf_rho(&self, x: &DVector<f64>) -> Result<DVector<f64>, IolError> {
        Ok(self.gamma_and_lf(x)?.1)
    }

    /// Full evaluation of `u = α + γ⁺ v` at time `t`.
    pub fn evaluate(&self, x: &DVector<f64>, v: &DVector<f64>, t: f64) -> Result<ControlEvaluation, IolError> {
        if v.len() != self.profile.rho.len() {
            return Err(IolError::Argument(format!(
                "command has length {}, expected {}",
                v.len(),
                self.profile.rho.len()
            )));
        }
        if let Some(index) = v.iter().position(|c| !c.is_finite()) {
            return Err(AffineError::NonFinite {
                what: "command v",
                index,
                state: x.iter().copied().collect(),
            }
            .into());
        }
        let (gamma, lf_rho) = self.gamma_and_lf(x)?;
        let pinv = pseudo_inverse_full(&gamma, self.pinv_tol);
        let alpha = &pinv.matrix * (-&lf_rho);
        let u = &alpha + &pinv.matrix * v;
        let lambda = LambdaSnapshot::new(&gamma * &pinv.matrix, pinv.rank, t);
        Ok(ControlEvaluation {
            u,
            alpha,
            gamma,
            gamma_pinv: pinv.matrix,
            lf_rho,
            lambda,
            warning: self.system.singularity(x),
        })
    }

    pub fn alpha(&self, x: &DVector<f64>) -> Result<DVector<f64>, IolError> {
        let (gamma, lf_rho) = self.gamma_and_lf(x)?;
        Ok(pseudo_inverse_full(&gamma, self.pinv_tol).matrix * (-lf_rho))
    }

    pub fn control(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>, IolError> {
        Ok(self.evaluate(x, v, 0.0)?.u)
    }

    pub fn lambda(&self, x: &DVector<f64>, t: f64) -> Result<LambdaSnapshot, IolError> {
        let (gamma, _) = self.gamma_and_lf(x)?;
        let pinv = pseudo_inverse_full(&gamma, self.pinv_tol);
        Ok(LambdaSnapshot::new(&gamma * &pinv.matrix, pinv.rank, t))
    }
}

pub fn gamma_matrix(sys: &AffineSystem, profile: &RelativeDegreeProfile, at: &DVector<f64>) -> Result<GammaEvaluation, IolError> {
    LinearizingController::with_default_tolerance(sys.clone(), profile.clone())?.gamma(at)
}

pub fn alpha_term(sys: &AffineSystem, profile: &RelativeDegreeProfile, at: &DVector<f64>, pinv_tol: f64) -> Result<DVector<f64>, IolError> {
    LinearizingController::new(sys.clone(), profile.clone(), pinv_tol)?.alpha(at)
}

pub fn iol_control(
    sys: &AffineSystem,
    profile: &RelativeDegreeProfile,
    at: &DVector<f64>,
    v: &DVector<f64>,
    pinv_tol: f64,
) -> Result<DVector<f64>, IolError> {
    LinearizingController::new(sys.clone(), profile.clone(), pinv_tol)?.control(at, v)
}

pub fn lambda_snapshot(
    sys: &AffineSystem,
    profile: &RelativeDegreeProfile,
    at: &DVector<f64>,
    pinv_tol: f64,
) -> Result<LambdaSnapshot, IolError> {
    LinearizingController::new(sys.clone(), profile.clone(), pinv_tol)?.lambda(at, 0.0)
}

/// Outer-loop policy producing the command `v` from the chain state `ξ`.
pub trait OuterLoop: Send + Sync {
    fn command(&self, t: f64, xi: &DVector<f64>) -> DVector<f64>;

    /// Nominal linear closed-loop matrix, when the policy is linear.
    fn design_matrix(&self, _companion: &CompanionForm) -> Option<DMatrix<f64>> {
        None
    }
}

impl<F> OuterLoop for F
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn command(&self, t: f64, xi: &DVector<f64>) -> DVector<f64> {
        self(t, xi)
    }
}

/// Linear feedback on each output's own chain: `v_i = Σ_j k_{i,j} ξ_{i,j}`.
/// Gains are listed in `ψ` order, so the three-output aircraft design
/// `(k1, k2, k3, k4)` gives `v = [k1 x1, k2 x2, k3 x3 + k4 x4]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFeedback {
    gains: Vec<f64>,
    block_sizes: Vec<usize>,
}

impl ChainFeedback {
    pub fn new(profile: &RelativeDegreeProfile, gains: Vec<f64>) -> Result<Self, IolError> {
        profile.check_supported()?;
        if gains.len() != profile.total {
            return Err(IolError::Argument(format!(
                "{} gains supplied for a chain state of dimension {}",
                gains.len(),
                profile.total
            )));
        }
        if let Some(k) = gains.iter().find(|k| !k.is_finite()) {
            return Err(IolError::Argument(format!("gain {k} is not finite")));
        }
        Ok(Self {
            gains,
            block_sizes: profile.rho.clone(),
        })
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// `l_y × ρ` block-diagonal gain matrix `K` with `v = K ξ`.
    pub fn gain_matrix(&self) -> DMatrix<f64> {
        let rho: usize = self.block_sizes.iter().sum();
        let mut k = DMatrix::zeros(self.block_sizes.len(), rho);
        let mut offset = 0;
        for (i, &ri) in self.block_sizes.iter().enumerate() {
            for j in 0..ri {
                k[(i, offset + j)] = self.gains[offset + j];
            }
            offset += ri;
        }
        k
    }

    /// `A_c + B_c K`, the nominal linear design with `Λ = I`.
    pub fn design_matrix(&self, companion: &CompanionForm) -> DMatrix<f64> {
        &companion.a_c + &companion.b_c * self.gain_matrix()
    }
}

impl OuterLoop for ChainFeedback {
    fn command(&self, _t: f64, xi: &DVector<f64>) -> DVector<f64> {
        outer_command_unchecked(xi, &self.gains, &self.block_sizes)
    }

    fn design_matrix(&self, companion: &CompanionForm) -> Option<DMatrix<f64>> {
        Some(ChainFeedback::design_matrix(self, companion))
    }
}

fn outer_command_unchecked(xi: &DVector<f64>, gains: &[f64], blocks: &[usize]) -> DVector<f64> {
    let mut v = DVector::zeros(blocks.len());
    let mut offset = 0;
    for (i, &ri) in blocks.iter().enumerate() {
        v[i] = (offset..offset + ri).map(|j| gains[j] * xi[j]).sum();
        offset += ri;
    }
    v
}

/// Per-chain linear feedback; errors on gain/profile length mismatch.
pub fn outer_command(xi: &DVector<f64>, profile: &RelativeDegreeProfile, gains: &[f64]) -> Result<DVector<f64>, IolError> {
    if xi.len() != profile.total {
        return Err(IolError::Argument(format!(
            "chain state has length {}, expected {}",
            xi.len(),
            profile.total
        )));
    }
    let fb = ChainFeedback::new(profile, gains.to_vec())?;
    Ok(fb.command(0.0, xi))
}
