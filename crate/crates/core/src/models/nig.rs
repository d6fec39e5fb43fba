use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};

use super::{wrong_kind, Dataset, GenerativeModel, ModelError};
use crate::numeric::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Draws an `N × P` pool of iid `Normal(0, scale²)` predictors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSampler {
    pub n_predictors: usize,
    pub scale: f64,
}

impl DesignSampler {
    pub fn sample(&self, rng: &mut dyn RngCore, n: usize) -> DMatrix<f64> {
        let normal = Normal::new(0.0, self.scale).expect("validated scale");
        DMatrix::from_fn(n, self.n_predictors, |_, _| normal.sample(rng))
    }
}

/// Normal-Inverse-Gamma linear regression:
/// `σ² ~ InvGamma(a₀, b₀)`, `β ~ N(μ₀, σ² Λ₀⁻¹)`, `y ~ N(Xβ, σ² I)`.
///
/// `X` is the subset `columns` of the shared predictor pool.
#[derive(Debug, Clone, PartialEq)]
pub struct NigRegressionModel {
    name: String,
    a0: f64,
    b0: f64,
    mu0: DVector<f64>,
    lambda0: DMatrix<f64>,
    lambda0_chol: DMatrix<f64>,
    columns: Vec<usize>,
    design: DesignSampler,
}

/// Posterior `NIG(a_n, b_n, μ_n, Λ_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NigPosterior {
    pub a_n: f64,
    pub b_n: f64,
    pub mu_n: DVector<f64>,
    pub lambda_n: DMatrix<f64>,
}

impl NigRegressionModel {
    pub fn new(
        name: impl Into<String>,
        a0: f64,
        b0: f64,
        mu0: DVector<f64>,
        lambda0: DMatrix<f64>,
        columns: Vec<usize>,
        design: DesignSampler,
    ) -> Result<Self, ModelError> {
        let p = mu0.len();
        if p == 0 {
            return Err(ModelError::InvalidParameter("need at least one coefficient".into()));
        }
        if !(a0 > 0.0 && b0 > 0.0 && a0.is_finite() && b0.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "a0 and b0 must be positive, got ({a0}, {b0})"
            )));
        }
        if lambda0.nrows() != p || lambda0.ncols() != p || columns.len() != p {
            return Err(ModelError::Shape(format!(
                "mu0 has {p} entries, lambda0 is {}x{}, {} columns selected",
                lambda0.nrows(),
                lambda0.ncols(),
                columns.len()
            )));
        }
        if (&lambda0 - lambda0.transpose()).amax() > 1e-10 {
            return Err(ModelError::InvalidParameter("lambda0 is not symmetric".into()));
        }
        let lambda0_chol = lambda0
            .clone()
            .cholesky()
            .ok_or_else(|| ModelError::InvalidParameter("lambda0 is not positive definite".into()))?
            .l();
        if let Some(&c) = columns.iter().find(|&&c| c >= design.n_predictors) {
            return Err(ModelError::Shape(format!(
                "column {c} outside a pool of {} predictors",
                design.n_predictors
            )));
        }
        if !(design.scale > 0.0 && design.scale.is_finite()) {
            return Err(ModelError::InvalidParameter("design scale must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            a0,
            b0,
            mu0,
            lambda0,
            lambda0_chol,
            columns,
            design,
        })
    }

    pub fn coefficients(&self) -> usize {
        self.mu0.len()
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn design(&self) -> DesignSampler {
        self.design
    }

    /// This model's design matrix taken from the predictor pool.
    pub fn design_matrix(&self, predictors: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        if let Some(&c) = self.columns.iter().find(|&&c| c >= predictors.ncols()) {
            return Err(ModelError::Shape(format!(
                "column {c} missing from a pool of {} predictors",
                predictors.ncols()
            )));
        }
        Ok(predictors.select_columns(&self.columns))
    }
}

/// Three models sharing `x₁, x₂` and each owning a distinct third
/// predictor, with `a₀ = b₀ = 1`, `μ₀ = 0`, `Λ₀ = diag(5)`.
pub fn experiment_one_models(design_scale: f64) -> Result<Vec<NigRegressionModel>, ModelError> {
    let design = DesignSampler {
        n_predictors: 5,
        scale: design_scale,
    };
    (0..3)
        .map(|j| {
            NigRegressionModel::new(
                format!("M{}", j + 1),
                1.0,
                1.0,
                DVector::zeros(3),
                DMatrix::from_diagonal_element(3, 3, 5.0),
                vec![0, 1, 2 + j],
                design,
            )
        })
        .collect()
}

fn check_shapes(model: &NigRegressionModel, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(), ModelError> {
    if x.ncols() != model.coefficients() || x.nrows() != y.len() {
        return Err(ModelError::Shape(format!(
            "design is {}x{}, response has {} entries, model has {} coefficients",
            x.nrows(),
            x.ncols(),
            y.len(),
            model.coefficients()
        )));
    }
    Ok(())
}

/// Conjugate update. `μ_n` uses `Λ_n⁻¹ (Xᵀy + Λ₀μ₀)`, which equals the
/// OLS-based form whenever `XᵀX` is invertible and stays defined when it
/// is not.
pub fn nig_posterior_update(
    model: &NigRegressionModel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<NigPosterior, ModelError> {
    check_shapes(model, x, y)?;
    let lambda_n = x.transpose() * x + &model.lambda0;
    let rhs = x.transpose() * y + &model.lambda0 * &model.mu0;
    let chol = lambda_n
        .clone()
        .cholesky()
        .expect("X'X + Λ₀ is SPD whenever Λ₀ is");
    let mu_n = chol.solve(&rhs);
    let a_n = model.a0 + y.len() as f64 / 2.0;
    let quad0 = model.mu0.dot(&(&model.lambda0 * &model.mu0));
    let quad_n = mu_n.dot(&(&lambda_n * &mu_n));
    let b_n = model.b0 + 0.5 * (y.dot(y) + quad0 - quad_n);
    Ok(NigPosterior {
        a_n,
        b_n,
        mu_n,
        lambda_n,
    })
}

fn ln_det_spd(m: &DMatrix<f64>) -> f64 {
    let l = m.clone().cholesky().expect("SPD").l();
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Closed-form `ln p(y | M)`:
/// `-n/2 ln 2π + ½ ln(|Λ₀|/|Λ_n|) + a₀ ln b₀ - a_n ln b_n + ln Γ(a_n) - ln Γ(a₀)`.
pub fn nig_log_marginal(
    model: &NigRegressionModel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<f64, ModelError> {
    let post = nig_posterior_update(model, x, y)?;
    let n = y.len() as f64;
    Ok(-0.5 * n * LN_2PI + 0.5 * (ln_det_spd(&model.lambda0) - ln_det_spd(&post.lambda_n))
        + model.a0 * model.b0.ln()
        - post.a_n * post.b_n.ln()
        + ln_gamma(post.a_n)
        - ln_gamma(model.a0))
}

impl GenerativeModel for NigRegressionModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn simulate(&self, rng: &mut dyn RngCore, n: usize) -> Result<Dataset, ModelError> {
        let predictors = self.design.sample(rng, n);
        let x = self.design_matrix(&predictors)?;
        let precision = Gamma::new(self.a0, 1.0 / self.b0)
            .map_err(|e| ModelError::InvalidParameter(e.to_string()))?
            .sample(rng);
        let sigma = precision.recip().sqrt();
        // β = μ₀ + σ L⁻ᵀ z has covariance σ² Λ₀⁻¹ for Λ₀ = L Lᵀ
        let z = DVector::from_fn(self.coefficients(), |_, _| StandardNormal.sample(rng));
        let offset = self
            .lambda0_chol
            .transpose()
            .solve_upper_triangular(&z)
            .expect("positive diagonal");
        let coef = &self.mu0 + offset * sigma;
        let noise = DVector::from_fn(n, |_, _| {
            let e: f64 = StandardNormal.sample(rng);
            sigma * e
        });
        let response = x * coef + noise;
        Ok(Dataset::Regression {
            predictors,
            response,
        })
    }

    fn log_marginal(&self, data: &Dataset) -> Result<f64, ModelError> {
        match data {
            Dataset::Regression {
                predictors,
                response,
            } => nig_log_marginal(self, &self.design_matrix(predictors)?, response),
            other => Err(wrong_kind(&self.name, "regression", other)),
        }
    }
}
