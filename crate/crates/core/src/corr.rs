//! Matrix-valued correlation models `r(n) = E[X_i X_{i+n}^T]` of stationary
//! Gaussian vector sequences, their double sums and the Condition H(m, D)
//! diagnostics.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{self, mat_pow, LinearOperator};

/// Slack factor of the bounded-ratio proxy for the Condition H sum bound.
pub const SUM_BOUND_SLACK: f64 = 4.0;
/// Tail-to-lag-zero norm ratio required by the decay check.
pub const DECAY_FRACTION: f64 = 0.05;
/// Relative Frobenius tolerance of the exact-asymptotic check.
pub const ASYMPTOTIC_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    /// Operator fractional Gaussian noise: increments of a time-reversible OFBM.
    Ofgn,
    /// Independent vectors with covariance `r(0)`.
    White,
    /// Explicit finite list of lags, zero beyond.
    Table,
}

#[derive(Debug, Clone)]
enum Lags {
    Ofgn,
    White,
    Explicit(Vec<DMatrix<f64>>),
}

/// A stationary correlation structure together with its target pair `(D, Γ)`.
#[derive(Debug, Clone)]
pub struct CorrelationModel {
    dim: usize,
    family: ModelFamily,
    r0: DMatrix<f64>,
    target_d: LinearOperator,
    target_gamma: DMatrix<f64>,
    lags: Lags,
}

/// JSON form of a correlation model. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    #[serde(rename = "Gamma")]
    pub gamma: Vec<f64>,
    pub family: ModelFamily,
    /// Explicit lags `r(0), r(1), ...` for the `table` family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lags: Option<Vec<Vec<f64>>>,
}

fn check_psd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let asym = (m - m.transpose()).norm();
    let scale = m.norm().max(1.0);
    if asym > 1e-12 * scale {
        return Err(Error::Input(format!("{name} is not symmetric")));
    }
    let min = linop::min_sym_eigenvalue(m);
    if min < -1e-12 * scale {
        return Err(Error::Input(format!(
            "{name} is not positive semi-definite (eigenvalue {min:e})"
        )));
    }
    Ok(())
}

fn matrix_from(dim: usize, values: &[f64], name: &str) -> Result<DMatrix<f64>> {
    if values.len() != dim * dim {
        return Err(Error::Input(format!(
            "{name} needs {} row-major entries, got {}",
            dim * dim,
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(format!("{name} has non-finite entries")));
    }
    Ok(DMatrix::from_row_slice(dim, dim, values))
}

/// Operator fractional Gaussian noise with exponent `d` and `Γ = gamma`:
/// `r(n) = ½[(n+1)^D Γ (n+1)^{D*} - 2 n^D Γ n^{D*} + (n-1)^D Γ (n-1)^{D*}]`.
///
/// The exponent must satisfy `1/2 <= λ_D <= Λ_D < 1`; the boundary
/// `λ_D = 1/2` admits Brownian increments.
pub fn ofgn_model(d: &LinearOperator, gamma: &DMatrix<f64>) -> Result<CorrelationModel> {
    let bounds = d.spectral_bounds();
    if bounds.lambda_min < 0.5 - 1e-12 || bounds.lambda_max >= 1.0 {
        return Err(Error::Model(format!(
            "oFGN exponent needs spectral bounds in [1/2, 1), got [{}, {}]",
            bounds.lambda_min, bounds.lambda_max
        )));
    }
    if gamma.nrows() != d.dim() || gamma.ncols() != d.dim() {
        return Err(Error::Input("Gamma dimension does not match D".into()));
    }
    check_psd("Gamma", gamma)?;
    Ok(CorrelationModel {
        dim: d.dim(),
        family: ModelFamily::Ofgn,
        r0: gamma.clone(),
        target_d: d.clone(),
        target_gamma: gamma.clone(),
        lags: Lags::Ofgn,
    })
}

/// Independent vectors with covariance `r0`, paired with a target exponent.
pub fn white_model(r0: &DMatrix<f64>, target_d: &LinearOperator) -> Result<CorrelationModel> {
    if r0.nrows() != target_d.dim() || r0.ncols() != target_d.dim() {
        return Err(Error::Input("r(0) dimension does not match D".into()));
    }
    check_psd("r(0)", r0)?;
    Ok(CorrelationModel {
        dim: target_d.dim(),
        family: ModelFamily::White,
        r0: r0.clone(),
        target_d: target_d.clone(),
        target_gamma: r0.clone(),
        lags: Lags::White,
    })
}

/// Explicit lags `r(0), ..., r(L)` with `r(n) = 0` for `n > L`.
pub fn table_model(
    lags: Vec<DMatrix<f64>>,
    target_d: &LinearOperator,
    target_gamma: &DMatrix<f64>,
) -> Result<CorrelationModel> {
    let dim = target_d.dim();
    let first = lags
        .first()
        .ok_or_else(|| Error::Input("table model needs at least r(0)".into()))?;
    if lags.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
        return Err(Error::Input("lag matrices do not match the dimension of D".into()));
    }
    check_psd("r(0)", first)?;
    check_psd("Gamma", target_gamma)?;
    Ok(CorrelationModel {
        dim,
        family: ModelFamily::Table,
        r0: first.clone(),
        target_d: target_d.clone(),
        target_gamma: target_gamma.clone(),
        lags: Lags::Explicit(lags),
    })
}

impl ModelSpec {
    pub fn build(&self) -> Result<CorrelationModel> {
        let d = LinearOperator::new(matrix_from(self.dim, &self.d, "D")?)?;
        let gamma = matrix_from(self.dim, &self.gamma, "Gamma")?;
        match self.family {
            ModelFamily::Ofgn => ofgn_model(&d, &gamma),
            ModelFamily::White => white_model(&gamma, &d),
            ModelFamily::Table => {
                let raw = self
                    .lags
                    .as_ref()
                    .ok_or_else(|| Error::Input("table family requires 'lags'".into()))?;
                let lags = raw
                    .iter()
                    .enumerate()
                    .map(|(i, v)| matrix_from(self.dim, v, &format!("lag {i}")))
                    .collect::<Result<Vec<_>>>()?;
                table_model(lags, &d, &gamma)
            }
        }
    }

    pub fn load(path: &Path) -> Result<CorrelationModel> {
        let spec: ModelSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.build()
    }
}

impl CorrelationModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn r0(&self) -> &DMatrix<f64> {
        &self.r0
    }

    pub fn target_d(&self) -> &LinearOperator {
        &self.target_d
    }

    pub fn target_gamma(&self) -> &DMatrix<f64> {
        &self.target_gamma
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            dim: self.dim,
            d: self.target_d.to_row_major(),
            gamma: linop::row_major(&self.target_gamma),
            family: self.family,
            lags: match &self.lags {
                Lags::Explicit(l) => Some(l.iter().map(linop::row_major).collect()),
                _ => None,
            },
        }
    }

    /// Short identifier used in metadata.
    pub fn id(&self) -> String {
        let fam = match self.family {
            ModelFamily::Ofgn => "ofgn",
            ModelFamily::White => "white",
            ModelFamily::Table => "table",
        };
        format!(
            "{fam}(D={:?},Gamma={:?})",
            self.target_d.to_row_major(),
            linop::row_major(&self.target_gamma)
        )
    }

    /// `n^D Γ n^{D*}`, zero at `n = 0`.
    fn scaled_gamma(&self, n: usize) -> DMatrix<f64> {
        if n == 0 {
            return DMatrix::zeros(self.dim, self.dim);
        }
        let p = mat_pow(n as f64, &self.target_d).expect("positive base");
        p.matrix() * &self.target_gamma * p.matrix().transpose()
    }

    /// `r(n)` for `n >= 0`.
    pub fn lag(&self, n: usize) -> DMatrix<f64> {
        match &self.lags {
            Lags::White => {
                if n == 0 {
                    self.r0.clone()
                } else {
                    DMatrix::zeros(self.dim, self.dim)
                }
            }
            Lags::Explicit(l) => l.get(n).cloned().unwrap_or_else(|| DMatrix::zeros(self.dim, self.dim)),
            Lags::Ofgn => {
                if n == 0 {
                    return self.r0.clone();
                }
                let up = self.scaled_gamma(n + 1);
                let mid = self.scaled_gamma(n);
                let down = self.scaled_gamma(n - 1);
                (up - mid * 2.0 + down) * 0.5
            }
        }
    }

    /// `r(n)` for signed lags, with `r(-n) = r(n)^T`.
    pub fn lag_signed(&self, n: i64) -> DMatrix<f64> {
        if n >= 0 {
            self.lag(n as usize)
        } else {
            self.lag(n.unsigned_abs() as usize).transpose()
        }
    }

    /// `r(0), ..., r(count - 1)`.
    pub fn lags(&self, count: usize) -> Vec<DMatrix<f64>> {
        match &self.lags {
            Lags::Ofgn => {
                let f: Vec<DMatrix<f64>> = (0..=count).map(|k| self.scaled_gamma(k)).collect();
                (0..count)
                    .map(|n| {
                        if n == 0 {
                            self.r0.clone()
                        } else {
                            (&f[n + 1] - &f[n] * 2.0 + &f[n - 1]) * 0.5
                        }
                    })
                    .collect()
            }
            _ => (0..count).map(|n| self.lag(n)).collect(),
        }
    }

    /// `sum_{i,j=1..n} r(i - j) = n r(0) + sum_{k=1}^{n-1} (n - k)(r(k) + r(k)^T)`.
    pub fn double_sum(&self, n: usize) -> Result<DMatrix<f64>> {
        if n == 0 {
            return Err(Error::Domain("double sum needs N >= 1".into()));
        }
        Ok(double_sum_from_lags(&self.lags(n), n))
    }

    /// The `nd x nd` block-Toeplitz covariance of `(X_1, ..., X_n)`.
    pub fn block_toeplitz(&self, n: usize) -> DMatrix<f64> {
        block_toeplitz_from_lags(&self.lags(n), self.dim)
    }

    /// Smallest eigenvalue of the window-`n` block-Toeplitz covariance.
    pub fn min_window_eigenvalue(&self, n: usize) -> f64 {
        linop::min_sym_eigenvalue(&self.block_toeplitz(n))
    }
}

pub(crate) fn double_sum_from_lags(lags: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let mut total = &lags[0] * n as f64;
    for (k, r) in lags.iter().enumerate().take(n).skip(1) {
        let w = (n - k) as f64;
        total += (r + r.transpose()) * w;
    }
    total
}

pub(crate) fn block_toeplitz_from_lags(lags: &[DMatrix<f64>], dim: usize) -> DMatrix<f64> {
    let n = lags.len();
    let mut cov = DMatrix::zeros(n * dim, n * dim);
    for i in 0..n {
        for j in 0..n {
            for a in 0..dim {
                for b in 0..dim {
                    // E[X_i X_j^T] = r(j - i) for j >= i, r(i - j)^T otherwise
                    cov[(i * dim + a, j * dim + b)] = if j >= i {
                        lags[j - i][(a, b)]
                    } else {
                        lags[i - j][(b, a)]
                    };
                }
            }
        }
    }
    cov
}

/// Outcome of the Condition H(m, D) diagnostics on a grid of window sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionHReport {
    pub m: u32,
    pub grid: Vec<usize>,
    /// `sum_{i,j} ||r(i,j)||^m / ||N^D Γ N^{D*}||` per grid point.
    pub sum_ratios: Vec<f64>,
    pub slack: f64,
    pub passes_sum_bound: bool,
    /// `(lag, ||r(lag)||)` samples over the last decade of lags.
    pub tail_norms: Vec<(usize, f64)>,
    pub passes_decay: bool,
    /// Relative Frobenius error of the double sum against `N^D Γ N^{D*}`.
    pub asymptotic_rel_errors: Vec<f64>,
    pub passes_exact_asymptotic: bool,
    pub note: String,
}

impl ConditionHReport {
    pub fn passes_all(&self) -> bool {
        self.passes_sum_bound && self.passes_decay && self.passes_exact_asymptotic
    }
}

pub fn check_condition_h(model: &CorrelationModel, m: u32, grid: &[usize]) -> Result<ConditionHReport> {
    if grid.is_empty() {
        return Err(Error::Input("Condition H check needs a non-empty N grid".into()));
    }
    if m == 0 {
        return Err(Error::Domain("Condition H needs m >= 1".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] == 0 {
        return Err(Error::Input("N grid must be positive and strictly increasing".into()));
    }
    let n_max = *grid.last().expect("non-empty");
    let lags = model.lags(n_max);
    let norms: Vec<f64> = lags.iter().map(linop::operator_norm).collect();
    let powered: Vec<f64> = norms.iter().map(|v| v.powi(m as i32)).collect();

    let mut sum_ratios = Vec::with_capacity(grid.len());
    let mut asymptotic_rel_errors = Vec::with_capacity(grid.len());
    for &n in grid {
        let mut s = n as f64 * powered[0];
        for (k, p) in powered.iter().enumerate().take(n).skip(1) {
            s += 2.0 * (n - k) as f64 * p;
        }
        let target = model.scaled_gamma(n);
        let target_norm = linop::operator_norm(&target);
        sum_ratios.push(if target_norm > 0.0 {
            s / target_norm
        } else {
            f64::INFINITY
        });
        let ds = double_sum_from_lags(&lags, n);
        asymptotic_rel_errors.push(linop::rel_frobenius(&ds, &target));
    }
    let bound = sum_ratios[0] * SUM_BOUND_SLACK;
    let passes_sum_bound = sum_ratios.iter().all(|r| r.is_finite() && *r <= bound);

    let last = n_max - 1;
    let first_tail = (last / 10).max(1).min(last);
    let tail_norms: Vec<(usize, f64)> = if last == 0 {
        vec![(0, norms[0])]
    } else {
        (first_tail..=last).map(|k| (k, norms[k])).collect()
    };
    let monotone = tail_norms.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9) + 1e-300);
    let passes_decay = last > 0 && norms[last] < DECAY_FRACTION * norms[0] && monotone;

    let passes_exact_asymptotic = *asymptotic_rel_errors.last().expect("non-empty") < ASYMPTOTIC_TOL;

    Ok(ConditionHReport {
        m,
        grid: grid.to_vec(),
        sum_ratios,
        slack: SUM_BOUND_SLACK,
        passes_sum_bound,
        tail_norms,
        passes_decay,
        asymptotic_rel_errors,
        passes_exact_asymptotic,
        note: format!(
            "sum bound checked by a bounded-ratio proxy (ratio <= {SUM_BOUND_SLACK} x ratio at N = {}); \
             the constant of the inequality is unspecified, so this is a finite-grid proxy",
            grid[0]
        ),
    })
}
