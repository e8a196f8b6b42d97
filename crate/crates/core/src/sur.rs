//! Zellner SUR on the balanced sample, by feasible GLS.
//!
//! The stacked system is never formed. Every equation's design is a common
//! base block (constant and factors, identical rows for all firms) plus
//! single-row dummy columns, so the blocks `sigma^{ij} X_i'X_j` of the GLS
//! normal matrix are assembled from `B'B`, rows of `B` and coincidences of
//! dummy days. The right-hand side uses the per-day precision-weighted
//! returns `Sigma^{-1} y_t`.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmark::{
    build_design, fit_ols, ArEstimate, BenchmarkModel, DesignConfig, DesignMatrix, Sampling,
};
use crate::data::{EventRecord, EventWindow, FactorSeries, FirmId, ReturnPanel};
use crate::error::{Error, Result};
use crate::format::sig6;

/// Eigenvalue floor (relative to `trace / n`) below which Sigma is repaired.
const PD_FLOOR: f64 = 1e-12;
/// Ridge added once (relative to `trace / n`) when the floor is violated.
const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SurSystem {
    pub firm_order: Vec<FirmId>,
    pub designs: Vec<DesignMatrix>,
    pub returns: Vec<DVector<f64>>,
    /// Residual covariance, divisor T.
    pub sigma_hat: DMatrix<f64>,
    /// Ridge added to `sigma_hat`, if a repair was needed.
    pub ridge: Option<f64>,
    /// Equation-by-equation OLS fits used to initialise `sigma_hat`.
    pub ols: Vec<ArEstimate>,
}

/// Residual covariance `E'E / T`, repaired once with a small ridge when
/// nearly singular.
pub fn residual_covariance(residuals: &[DVector<f64>]) -> Result<(DMatrix<f64>, Option<f64>)> {
    let n = residuals.len();
    let t = residuals[0].len() as f64;
    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = residuals[i].dot(&residuals[j]) / t;
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    repair_sigma(sigma)
}

fn repair_sigma(mut sigma: DMatrix<f64>) -> Result<(DMatrix<f64>, Option<f64>)> {
    let n = sigma.nrows();
    let scale = sigma.trace() / n as f64;
    if !(scale > 0.0) {
        return Err(Error::Numerical("residual covariance has zero trace".into()));
    }
    let min_eig = |s: &DMatrix<f64>| {
        SymmetricEigen::new(s.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    };
    let floor = PD_FLOOR * scale;
    if min_eig(&sigma) >= floor {
        return Ok((sigma, None));
    }
    let lambda = RIDGE * scale;
    for i in 0..n {
        sigma[(i, i)] += lambda;
    }
    let after = min_eig(&sigma);
    if after < floor {
        return Err(Error::Numerical(format!(
            "residual covariance not positive definite after ridge {lambda:.3e} (min eigenvalue {after:.3e})"
        )));
    }
    Ok((sigma, Some(lambda)))
}

impl SurSystem {
    /// Builds a system from prepared designs. All designs must share rows
    /// and benchmark model.
    pub fn from_designs(designs: Vec<DesignMatrix>, returns: Vec<DVector<f64>>) -> Result<Self> {
        if designs.is_empty() {
            return Err(Error::Contract("SUR system has no equations".into()));
        }
        if designs.len() != returns.len() {
            return Err(Error::Contract("one return vector per design required".into()));
        }
        let rows = &designs[0].rows;
        let model = designs[0].model;
        for (d, y) in designs.iter().zip(&returns) {
            if &d.rows != rows || d.model != model {
                return Err(Error::Contract(format!(
                    "equation {} does not share the common row calendar and model",
                    d.firm_id
                )));
            }
            if y.len() != rows.len() {
                return Err(Error::Contract(format!("equation {} response length", d.firm_id)));
            }
        }
        let ols: Vec<ArEstimate> = designs
            .par_iter()
            .zip(returns.par_iter())
            .map(|(d, y)| fit_ols(d, y))
            .collect::<Result<_>>()?;
        let residuals: Vec<DVector<f64>> = designs
            .iter()
            .zip(&returns)
            .zip(&ols)
            .map(|((d, y), e)| y - &d.values * DVector::from_column_slice(&e.coefficients))
            .collect();
        let (sigma_hat, ridge) = residual_covariance(&residuals)?;
        Ok(Self {
            firm_order: designs.iter().map(|d| d.firm_id.clone()).collect(),
            designs,
            returns,
            sigma_hat,
            ridge,
            ols,
        })
    }

    /// Replaces the residual covariance (must be symmetric positive definite).
    pub fn with_sigma(mut self, sigma: DMatrix<f64>) -> Result<Self> {
        let n = self.designs.len();
        if sigma.shape() != (n, n) {
            return Err(Error::Contract(format!("sigma must be {n}x{n}")));
        }
        if sigma.clone().cholesky().is_none() {
            return Err(Error::Numerical("sigma is not positive definite".into()));
        }
        self.sigma_hat = sigma;
        self.ridge = None;
        Ok(self)
    }

    /// Zeroes the off-diagonal of `sigma_hat`.
    pub fn diagonal_sigma(mut self) -> Self {
        let n = self.sigma_hat.nrows();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    self.sigma_hat[(i, j)] = 0.0;
                }
            }
        }
        self
    }

    pub fn n_equations(&self) -> usize {
        self.designs.len()
    }

    pub fn n_rows(&self) -> usize {
        self.designs[0].n_rows()
    }

    /// Column offset of each equation in the stacked coefficient vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.designs.len() + 1);
        let mut acc = 0;
        out.push(0);
        for d in &self.designs {
            acc += d.n_columns();
            out.push(acc);
        }
        out
    }

    /// Mean off-diagonal correlation implied by `sigma_hat`.
    pub fn mean_offdiag_correlation(&self) -> f64 {
        mean_offdiag_correlation(&self.sigma_hat)
    }
}

pub fn mean_offdiag_correlation(sigma: &DMatrix<f64>) -> f64 {
    let n = sigma.nrows();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += sigma[(i, j)] / (sigma[(i, i)] * sigma[(j, j)]).sqrt();
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

/// Stacks the balanced panel's firms with events into a SUR system.
pub fn assemble_system(
    limited_panel: &ReturnPanel,
    factors: &FactorSeries,
    events: &[EventRecord],
    window: EventWindow,
    model: BenchmarkModel,
    config: &DesignConfig,
) -> Result<SurSystem> {
    if !limited_panel.is_balanced() {
        return Err(Error::Contract(format!(
            "SUR needs a balanced panel; {} cells are missing",
            limited_panel.missing_cells()
        )));
    }
    let config = DesignConfig {
        sampling: Sampling::Balanced,
        ..config.clone()
    };
    let mut firms: Vec<&FirmId> = limited_panel
        .firm_ids()
        .iter()
        .filter(|f| events.iter().any(|e| &e.firm_id == *f))
        .collect();
    firms.sort();
    if firms.is_empty() {
        return Err(Error::Config("no firm in the balanced panel has events".into()));
    }
    let built: Vec<(DesignMatrix, DVector<f64>)> = firms
        .par_iter()
        .map(|f| {
            let d = build_design(f, limited_panel, factors, events, window, model, &config)?;
            let y = d.response(limited_panel)?;
            Ok((d, y))
        })
        .collect::<Result<_>>()?;
    let (designs, returns) = built.into_iter().unzip();
    SurSystem::from_designs(designs, returns)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurOptions {
    pub iterate: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SurOptions {
    fn default() -> Self {
        Self {
            iterate: false,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurEstimate {
    pub firm_order: Vec<FirmId>,
    /// Per-equation coefficients in each design's column order.
    pub coefficients: Vec<DVector<f64>>,
    /// Cholesky factor of the stacked GLS normal matrix `Z'(Sigma^{-1} x I)Z`.
    normal: Cholesky<f64, Dyn>,
    /// The Sigma used in the final GLS step.
    pub sigma_hat: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Per-firm view in the OLS layout (ARs, residuals, `s_i`, leverage).
    pub estimates: Vec<ArEstimate>,
}

impl SurEstimate {
    /// Covariance of the stacked coefficient vector, `(Z'(Sigma^{-1} x I)Z)^{-1}`.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        self.normal.inverse()
    }

    /// Coefficient covariance block of equation `i`.
    pub fn equation_covariance(&self, i: usize) -> DMatrix<f64> {
        let off: usize = self.coefficients[..i].iter().map(|c| c.len()).sum();
        let k = self.coefficients[i].len();
        let k_total: usize = self.coefficients.iter().map(|c| c.len()).sum();
        let mut unit = DMatrix::<f64>::zeros(k_total, k);
        for a in 0..k {
            unit[(off + a, a)] = 1.0;
        }
        self.normal.solve(&unit).rows(off, k).into_owned()
    }
}

/// Rows of the base block `B` on which each equation's dummies sit.
struct EquationLayout {
    n_base: usize,
    dummy_rows: Vec<usize>,
}

/// One GLS step for a given Sigma.
fn gls_step(system: &SurSystem, sigma: &DMatrix<f64>) -> Result<(Vec<DVector<f64>>, Cholesky<f64, Dyn>)> {
    let n = system.n_equations();
    let t_rows = system.n_rows();
    let precision = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("Sigma is not positive definite".into()))?
        .inverse();

    let layouts: Vec<EquationLayout> = system
        .designs
        .iter()
        .map(|d| EquationLayout {
            n_base: d.n_base(),
            dummy_rows: d.dummy_rows(),
        })
        .collect();
    let q = layouts[0].n_base;
    let base = system.designs[0].values.columns(0, q).into_owned();
    let gram = base.transpose() * &base;

    let offsets = system.offsets();
    let k_total = offsets[n];
    let mut normal = DMatrix::<f64>::zeros(k_total, k_total);
    for i in 0..n {
        for j in 0..=i {
            let s = precision[(i, j)];
            if s == 0.0 {
                continue;
            }
            let (oi, oj) = (offsets[i], offsets[j]);
            let (li, lj) = (&layouts[i], &layouts[j]);
            // base x base
            for a in 0..q {
                for b in 0..q {
                    normal[(oi + a, oj + b)] = s * gram[(a, b)];
                }
            }
            // base_i x dummy_j and dummy_i x base_j
            for (b, &r) in lj.dummy_rows.iter().enumerate() {
                for a in 0..q {
                    normal[(oi + a, oj + q + b)] = s * base[(r, a)];
                }
            }
            for (a, &r) in li.dummy_rows.iter().enumerate() {
                for b in 0..q {
                    normal[(oi + q + a, oj + b)] = s * base[(r, b)];
                }
            }
            // dummy x dummy: one where the dummy rows coincide
            for (a, &ra) in li.dummy_rows.iter().enumerate() {
                for (b, &rb) in lj.dummy_rows.iter().enumerate() {
                    if ra == rb {
                        normal[(oi + q + a, oj + q + b)] = s;
                    }
                }
            }
        }
    }
    for i in 0..k_total {
        for j in (i + 1)..k_total {
            normal[(i, j)] = normal[(j, i)];
        }
    }

    // Precision-weighted responses, day by day: w_t = Sigma^{-1} y_t.
    let weighted: Vec<Vec<f64>> = (0..t_rows)
        .into_par_iter()
        .map(|t| {
            (0..n)
                .map(|i| (0..n).map(|j| precision[(i, j)] * system.returns[j][t]).sum())
                .collect()
        })
        .collect();
    let mut rhs = DVector::<f64>::zeros(k_total);
    for i in 0..n {
        let oi = offsets[i];
        for (t, w) in weighted.iter().enumerate() {
            for a in 0..q {
                rhs[oi + a] += base[(t, a)] * w[i];
            }
        }
        for (a, &r) in layouts[i].dummy_rows.iter().enumerate() {
            rhs[oi + q + a] = weighted[r][i];
        }
    }

    let chol = normal.cholesky().ok_or_else(|| {
        Error::Numerical(format!("GLS normal matrix ({k_total}x{k_total}) is not positive definite"))
    })?;
    let beta = chol.solve(&rhs);
    let coefs = (0..n)
        .map(|i| beta.rows(offsets[i], offsets[i + 1] - offsets[i]).into_owned())
        .collect();
    Ok((coefs, chol))
}

fn equation_residuals(system: &SurSystem, coefs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    system
        .designs
        .iter()
        .zip(&system.returns)
        .zip(coefs)
        .map(|((d, y), b)| y - &d.values * b)
        .collect()
}

/// Feasible GLS on the stacked system; one step unless `options.iterate`.
///
/// When iterating, Sigma is re-estimated from the latest residuals until the
/// largest coefficient change (against the previous step, or the OLS start)
/// drops below `tol`.
pub fn fit_sur(system: &SurSystem, options: &SurOptions) -> Result<SurEstimate> {
    let mut previous: Vec<DVector<f64>> = system
        .ols
        .iter()
        .map(|e| DVector::from_column_slice(&e.coefficients))
        .collect();
    let mut sigma = system.sigma_hat.clone();
    let max_iter = if options.iterate { options.max_iter.max(1) } else { 1 };
    let mut iterations = 0;
    let mut converged = !options.iterate;
    let (mut coefs, mut normal);
    loop {
        (coefs, normal) = gls_step(system, &sigma)?;
        iterations += 1;
        if !options.iterate {
            break;
        }
        let delta = coefs
            .iter()
            .zip(&previous)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        if delta < options.tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        sigma = residual_covariance(&equation_residuals(system, &coefs))?.0;
        previous = coefs.clone();
    }

    let estimates = system
        .designs
        .iter()
        .zip(&system.returns)
        .zip(&coefs)
        .zip(&system.ols)
        .map(|(((d, y), b), ols)| ArEstimate::from_coefficients(d, y, b, ols.xtx_inverse.clone()))
        .collect::<Result<Vec<_>>>()?;

    Ok(SurEstimate {
        firm_order: system.firm_order.clone(),
        coefficients: coefs,
        normal,
        sigma_hat: sigma,
        iterations,
        converged,
        estimates,
    })
}

pub fn write_sur_diagnostics_tsv(mut w: impl Write, estimate: &SurEstimate) -> Result<()> {
    writeln!(w, "# mean_offdiag_correlation\t{}", sig6(mean_offdiag_correlation(&estimate.sigma_hat)))?;
    writeln!(w, "# iterations\t{}", estimate.iterations)?;
    crate::benchmark::write_diagnostics_tsv(w, &estimate.estimates)
}
