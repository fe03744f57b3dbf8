//! Verification statistics over path ensembles.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::approx::PathEnsemble;
use crate::error::{Error, Result};
use crate::hermite::factorial;
use crate::linop::{operator_norm, spectral_bounds, sym_sqrt_pair};
use crate::quadrature::gauss_hermite;
use crate::rng;

/// Smallest eigenvalue ratio of a whitening reference.
pub const WHITEN_FLOOR: f64 = 1e-10;
/// `δ` of the tightness bound.
pub const TIGHTNESS_DELTA: f64 = 0.05;
/// Normal quantile of the two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;
pub const DEFAULT_PERMUTATIONS: usize = 200;
pub const SIGNIFICANCE: f64 = 0.01;
/// Replicate groups of the tightness jackknife.
const JACKKNIFE_GROUPS: usize = 20;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub test: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub std_error: f64,
    pub replicates: usize,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl VerificationReport {
    /// Report passing iff `statistic <= threshold`.
    pub fn at_most(test: &str, statistic: f64, threshold: f64, std_error: f64, replicates: usize) -> Self {
        Self {
            test: test.into(),
            statistic,
            threshold,
            pass: statistic <= threshold,
            std_error,
            replicates,
            config_hash: String::new(),
            note: String::new(),
        }
    }

    pub fn with_hash(mut self, hash: &str) -> Self {
        self.config_hash = hash.into();
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

/// Fixed-width text table of reports.
pub fn render_table(reports: &[VerificationReport]) -> String {
    let width = reports.iter().map(|r| r.test.len()).max().unwrap_or(4).max(4);
    let mut out = format!(
        "{:<width$}  {:>13}  {:>13}  {:>11}  {:>10}  result\n",
        "test", "statistic", "threshold", "std_error", "replicates"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<width$}  {:>13.6e}  {:>13.6e}  {:>11.3e}  {:>10}  {}\n",
            r.test,
            r.statistic,
            r.threshold,
            r.std_error,
            r.replicates,
            if r.pass { "PASS" } else { "FAIL" }
        ));
    }
    out
}

/// Lowercase hex SHA-256.
pub fn hash_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

/// Sample covariance with jackknife standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    /// Entrywise jackknife standard errors of `cov`.
    pub std_error: DMatrix<f64>,
    pub replicates: usize,
}

/// Unbiased covariance of the rows of `values` (`R x k`).
pub fn covariance_of_rows(values: &DMatrix<f64>) -> Result<CovEstimate> {
    let r = values.nrows();
    let k = values.ncols();
    if r < 2 {
        return Err(Error::Domain("covariance needs at least two replicates".into()));
    }
    let mean: Vec<f64> = (0..k).map(|a| values.column(a).sum() / r as f64).collect();
    let centered = DMatrix::from_fn(r, k, |i, a| values[(i, a)] - mean[a]);
    let ss = centered.transpose() * &centered;
    let cov = &ss / (r - 1) as f64;
    let std_error = if r < 3 {
        DMatrix::from_element(k, k, f64::INFINITY)
    } else {
        // leave-one-out: SS_{-i} = SS - R/(R-1) c_i c_i^T, divided by R - 2
        let shrink = r as f64 / (r - 1) as f64;
        let mut sum = DMatrix::<f64>::zeros(k, k);
        let mut sum_sq = DMatrix::<f64>::zeros(k, k);
        for i in 0..r {
            let c = centered.row(i);
            let loo = (&ss - c.transpose() * c * shrink) / (r - 2) as f64;
            sum += &loo;
            sum_sq += loo.component_mul(&loo);
        }
        let rf = r as f64;
        let var = (sum_sq - sum.component_mul(&sum) / rf) * ((rf - 1.0) / rf);
        var.map(|v| v.max(0.0).sqrt())
    };
    Ok(CovEstimate {
        mean,
        cov,
        std_error,
        replicates: r,
    })
}

/// Covariance of the ensemble values at grid time `t`.
pub fn cov_estimate(ens: &PathEnsemble, t: f64) -> Result<CovEstimate> {
    covariance_of_rows(&ens.values_at(t)?)
}

/// Ratio `E||S||^{2α} / ||E S S^T||^α` with its Gaussian counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRatio {
    pub ratio: f64,
    pub std_error: f64,
    /// The same ratio for a Gaussian vector with the estimated second moment.
    pub gaussian_reference: f64,
    pub degenerate: bool,
}

/// `E (Z^T Z)^α` for `Z ~ N(0, C)`: exact for integer `α` through the
/// cumulants `2^{j-1} (j-1)! tr C^j`, tensor Gauss–Hermite otherwise.
pub fn gaussian_norm_moment(c: &DMatrix<f64>, alpha: f64) -> Result<f64> {
    let sym = (c + c.transpose()) * 0.5;
    let eig: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0)).collect();
    if alpha.fract() == 0.0 && alpha >= 0.0 {
        let n = alpha as usize;
        let kappa: Vec<f64> = (1..=n)
            .map(|j| 2f64.powi(j as i32 - 1) * factorial(j - 1) * eig.iter().map(|l| l.powi(j as i32)).sum::<f64>())
            .collect();
        let mut m = vec![1.0];
        for k in 1..=n {
            let mut acc = 0.0;
            let mut binom = 1.0;
            for j in 1..=k {
                // binom = C(k-1, j-1)
                acc += binom * kappa[j - 1] * m[k - j];
                binom *= (k - j) as f64 / j as f64;
            }
            m.push(acc);
        }
        return Ok(m[n]);
    }
    let d = eig.len();
    let nodes = match d {
        1 => 200,
        2 => 96,
        3 => 40,
        4 => 20,
        _ => {
            return Err(Error::Domain(
                "non-integer Gaussian moments are limited to dimension 4".into(),
            ))
        }
    };
    let rule = gauss_hermite(nodes);
    let total = nodes.pow(d as u32);
    let sum: f64 = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut q = 0.0;
            let mut w = 1.0;
            for l in &eig {
                let j = idx % nodes;
                idx /= nodes;
                q += l * rule.nodes[j] * rule.nodes[j];
                w *= rule.weights[j];
            }
            w * q.powf(alpha)
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(sum)
}

fn second_moment(values: &DMatrix<f64>) -> DMatrix<f64> {
    values.transpose() * values / values.nrows() as f64
}

/// Moment ratio of the ensemble values at time `t`.
pub fn moment_ratio(ens: &PathEnsemble, t: f64, alpha: f64) -> Result<MomentRatio> {
    moment_ratio_of_rows(&ens.values_at(t)?, alpha)
}

pub fn moment_ratio_of_rows(values: &DMatrix<f64>, alpha: f64) -> Result<MomentRatio> {
    if !(alpha >= 1.0) {
        return Err(Error::Domain(format!("alpha must be at least 1, got {alpha}")));
    }
    let r = values.nrows();
    if r < 2 {
        return Err(Error::Domain("moment ratio needs at least two replicates".into()));
    }
    let norms: Vec<f64> = (0..r).map(|i| values.row(i).norm_squared().powf(alpha)).collect();
    let m2 = second_moment(values);
    let scale = operator_norm(&m2);
    if scale == 0.0 {
        return Ok(MomentRatio {
            ratio: f64::INFINITY,
            std_error: f64::NAN,
            gaussian_reference: f64::NAN,
            degenerate: true,
        });
    }
    let numer: f64 = norms.iter().sum();
    let ratio = numer / r as f64 / scale.powf(alpha);
    let loo: Vec<f64> = (0..r)
        .map(|i| {
            let row = values.row(i);
            let m = (&m2 * r as f64 - row.transpose() * row) / (r - 1) as f64;
            (numer - norms[i]) / (r - 1) as f64 / operator_norm(&m).powf(alpha)
        })
        .collect();
    let mean_loo = loo.iter().sum::<f64>() / r as f64;
    let var = loo.iter().map(|v| (v - mean_loo).powi(2)).sum::<f64>() * (r - 1) as f64 / r as f64;
    let gaussian_reference = gaussian_norm_moment(&m2, alpha)? / scale.powf(alpha);
    Ok(MomentRatio {
        ratio,
        std_error: var.sqrt(),
        gaussian_reference,
        degenerate: false,
    })
}

/// Least-squares fit of `log E||Z(t) - Z(s)||^{2α}` against `log(t - s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_halfwidth: f64,
    pub alpha: f64,
    pub lambda_d: f64,
    pub delta: f64,
    /// `2α(λ_D - δ)`.
    pub bound: f64,
    pub pass: bool,
    /// `(t - s, mean increment moment)` per pair.
    pub points: Vec<(f64, f64)>,
    pub replicates: usize,
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Increment-moment scaling fit; `λ_D` comes from the ensemble exponent.
pub fn tightness_exponent(ens: &PathEnsemble, pairs: &[(f64, f64)], alpha: f64) -> Result<TightnessFit> {
    if pairs.len() < 3 {
        return Err(Error::Domain("tightness fit needs at least 3 pairs".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::Domain("alpha must be positive".into()));
    }
    let r = ens.replicates();
    if r < JACKKNIFE_GROUPS {
        return Err(Error::Domain(format!(
            "tightness fit needs at least {JACKKNIFE_GROUPS} replicates"
        )));
    }
    let mut columns = Vec::with_capacity(pairs.len());
    let mut log_h = Vec::with_capacity(pairs.len());
    for &(s, t) in pairs {
        if !(s < t) {
            return Err(Error::Domain(format!("pair ({s}, {t}) is not strictly ordered")));
        }
        if let Some(n) = ens.meta.n {
            if (n as f64) * (t - s) < 1.0 - 1e-9 {
                return Err(Error::Domain(format!(
                    "pair ({s}, {t}) spans less than one step of 1/{n}"
                )));
            }
        }
        let a = ens.values_at(s)?;
        let b = ens.values_at(t)?;
        let inc: Vec<f64> = (0..r)
            .map(|i| (b.row(i) - a.row(i)).norm_squared().powf(alpha))
            .collect();
        columns.push(inc);
        log_h.push((t - s).ln());
    }
    let distinct = log_h.iter().any(|v| (v - log_h[0]).abs() > 1e-12);
    if !distinct {
        return Err(Error::Domain("pairs need at least two distinct spacings".into()));
    }
    let fit = |skip: Option<(usize, usize)>| -> (f64, f64, Vec<f64>) {
        let means: Vec<f64> = columns
            .iter()
            .map(|col| {
                let (sum, count) = col.iter().enumerate().fold((0.0, 0usize), |(s, c), (i, v)| match skip {
                    Some((lo, hi)) if i >= lo && i < hi => (s, c),
                    _ => (s + v, c + 1),
                });
                sum / count as f64
            })
            .collect();
        let logs: Vec<f64> = means.iter().map(|m| m.ln()).collect();
        let (slope, intercept) = ols(&log_h, &logs);
        (slope, intercept, means)
    };
    let (slope, intercept, means) = fit(None);
    let g = JACKKNIFE_GROUPS;
    let group_slopes: Vec<f64> = (0..g).map(|k| fit(Some((k * r / g, (k + 1) * r / g))).0).collect();
    let mean_g = group_slopes.iter().sum::<f64>() / g as f64;
    let se = (group_slopes.iter().map(|v| (v - mean_g).powi(2)).sum::<f64>() * (g - 1) as f64 / g as f64).sqrt();
    let n = (ens.meta.d.len() as f64).sqrt().round() as usize;
    let lambda_d = spectral_bounds(&DMatrix::from_row_slice(n, n, &ens.meta.d)).lambda_min;
    let bound = 2.0 * alpha * (lambda_d - TIGHTNESS_DELTA);
    let ci_halfwidth = Z95 * se;
    Ok(TightnessFit {
        slope,
        intercept,
        ci_halfwidth,
        alpha,
        lambda_d,
        delta: TIGHTNESS_DELTA,
        bound,
        pass: slope >= bound - ci_halfwidth,
        points: pairs.iter().zip(means).map(|(&(s, t), m)| (t - s, m)).collect(),
        replicates: r,
    })
}

/// `samples C^{-1/2}` with `C^{-1/2}` the symmetric inverse square root.
pub fn whiten(samples: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = samples.ncols();
    if reference.shape() != (k, k) {
        return Err(Error::Domain(format!(
            "reference is {:?}, samples have {k} columns",
            reference.shape()
        )));
    }
    if *reference == DMatrix::identity(k, k) {
        return Ok(samples.clone());
    }
    let asym = (reference - reference.transpose()).abs().max();
    if asym > 1e-10 * reference.abs().max().max(1.0) {
        return Err(Error::Domain("whitening reference is not symmetric".into()));
    }
    let (_, inv_root) = sym_sqrt_pair(reference, WHITEN_FLOOR)?;
    Ok(samples * inv_root)
}

/// Two-sample energy test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTest {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
    pub n_a: usize,
    pub n_b: usize,
}

impl EnergyTest {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

fn pooled_distances(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let pooled: Vec<Vec<f64>> = a
        .row_iter()
        .chain(b.row_iter())
        .map(|r| r.iter().copied().collect())
        .collect();
    (0..pooled.len())
        .into_par_iter()
        .map(|i| {
            pooled
                .iter()
                .map(|q| {
                    pooled[i]
                        .iter()
                        .zip(q)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect()
}

/// `2 mean_AB - mean_AA - mean_BB` over the labelled pooled sample. Cross
/// pairs are summed from the `A` side only, so identical samples give an
/// exact zero.
fn energy_from_labels(dist: &[Vec<f64>], in_a: &[bool], n_a: usize) -> f64 {
    let n_b = in_a.len() - n_a;
    let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
    for (i, row) in dist.iter().enumerate() {
        if in_a[i] {
            let (mut raa, mut rab) = (0.0, 0.0);
            for (j, &v) in row.iter().enumerate() {
                if in_a[j] {
                    raa += v;
                } else {
                    rab += v;
                }
            }
            aa += raa;
            ab += rab;
        } else {
            bb += row.iter().zip(in_a).filter(|(_, a)| !**a).map(|(v, _)| *v).sum::<f64>();
        }
    }
    let (na, nb) = (n_a as f64, n_b as f64);
    (2.0 * ab / (na * nb) - aa / (na * na) - bb / (nb * nb)).max(0.0)
}

/// Energy statistic between the rows of `a` and `b` with a permutation
/// p-value `(1 + #{T_perm >= T}) / (1 + permutations)`.
pub fn energy_distance(a: &DMatrix<f64>, b: &DMatrix<f64>, permutations: usize, seed: u64) -> Result<EnergyTest> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::Domain("energy distance needs nonempty samples".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::Domain(format!(
            "sample dimensions differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    if permutations < DEFAULT_PERMUTATIONS {
        return Err(Error::Domain(format!(
            "at least {DEFAULT_PERMUTATIONS} permutations are required"
        )));
    }
    let (n_a, n_b) = (a.nrows(), b.nrows());
    let dist = pooled_distances(a, b);
    let labels: Vec<bool> = (0..n_a + n_b).map(|i| i < n_a).collect();
    let statistic = energy_from_labels(&dist, &labels, n_a);
    let exceed: usize = (0..permutations)
        .into_par_iter()
        .map(|k| {
            let mut perm = labels.clone();
            perm.shuffle(&mut rng::stream(seed, rng::DOMAIN_PERMUTATION, k as u64));
            usize::from(energy_from_labels(&dist, &perm, n_a) >= statistic)
        })
        .sum();
    Ok(EnergyTest {
        statistic,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        permutations,
        n_a,
        n_b,
    })
}
