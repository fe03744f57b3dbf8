//! The acceptance suite and the convergence sweep.
//!
//! Every random draw is derived from the suite seed, so output CSVs are
//! identical for equal settings regardless of the worker pool size.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{ensemble_banded, Band, EnsembleSpec, PathEnsemble};
use crate::corr::{ofgn_model, CorrelationModel};
use crate::error::{Error, Result};
use crate::hermite::{builtin_table, factorial, hermite_eval, HermiteCoefficientTable, NonlinearFunctional};
use crate::linop::{rel_frobenius, LinearOperator};
use crate::ofbm::{covariance, oss_covariance_check, OfbmSimulator, QuadConfig, SimConfig, SpectralSpec};
use crate::quadrature::gauss_hermite;
use crate::rng;
use crate::stats::{covariance_of_rows, energy_distance, tightness_exponent, whiten, VerificationReport, SIGNIFICANCE};

/// Settings of the acceptance suite. Defaults are the acceptance sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub n_list: Vec<usize>,
    /// Replicates of the covariance and reduction experiments.
    pub replicates: usize,
    pub mehler_samples: usize,
    pub tightness_n: usize,
    pub tightness_replicates: usize,
    pub energy_n: usize,
    pub energy_samples: usize,
    pub permutations: usize,
    pub sim: SimConfig,
    pub quad: QuadConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 20_261_015,
            n_list: vec![256, 1024, 4096],
            replicates: 2000,
            mehler_samples: 1_000_000,
            tightness_n: 1024,
            tightness_replicates: 5000,
            energy_n: 4096,
            energy_samples: 1000,
            permutations: 200,
            sim: SimConfig::default(),
            quad: QuadConfig::default(),
        }
    }
}

impl SuiteConfig {
    /// Small sizes for smoke and determinism runs.
    pub fn reduced() -> Self {
        Self {
            n_list: vec![64, 128, 256],
            replicates: 100,
            mehler_samples: 20_000,
            tightness_n: 128,
            tightness_replicates: 200,
            energy_n: 256,
            energy_samples: 100,
            sim: SimConfig {
                n_freq: 1 << 10,
                ..SimConfig::default()
            },
            ..Self::default()
        }
    }
}

/// Result of one acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    pub reports: Vec<VerificationReport>,
    /// Wall time; never written to CSV.
    pub seconds: f64,
}

impl CriterionOutcome {
    fn new(id: u32, name: &str, reports: Vec<VerificationReport>, started: Instant) -> Self {
        Self {
            id,
            name: name.into(),
            pass: reports.iter().all(|r| r.pass),
            reports,
            seconds: started.elapsed().as_secs_f64(),
        }
    }

    /// One line: `criterion <id> [<name>]: PASS|FAIL` plus each statistic.
    pub fn summary_line(&self) -> String {
        let parts: Vec<String> = self
            .reports
            .iter()
            .map(|r| format!("{}={:.6e} (threshold {:.6e})", r.test, r.statistic, r.threshold))
            .collect();
        format!(
            "criterion {} [{}]: {} {}",
            self.id,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            parts.join("; ")
        )
    }
}

fn criterion_seed(cfg: &SuiteConfig, id: u32) -> u64 {
    rng::derive_seed(cfg.seed, rng::DOMAIN_CHECK, u64::from(id))
}

/// The shipped correlation model: oFGN with `D = diag(0.6, 0.8)`, `Γ = I`.
pub fn shipped_model() -> CorrelationModel {
    ofgn_model(&shipped_exponent(), &DMatrix::identity(2, 2)).expect("valid shipped model")
}

pub fn shipped_exponent() -> LinearOperator {
    LinearOperator::diagonal(&[0.6, 0.8]).expect("square")
}

/// The shipped spectral target: `A_1 = I`, `A_2 = 0`, `D = diag(0.6, 0.8)`.
pub fn shipped_spec() -> SpectralSpec {
    SpectralSpec::standard(shipped_exponent()).expect("valid shipped spec")
}

/// The asymmetric negative control `A_1 = I`, `A_2 = [[0, 1], [-1, 0]]`.
pub fn skew_spec() -> SpectralSpec {
    SpectralSpec::new(
        DMatrix::identity(2, 2),
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        shipped_exponent(),
    )
    .expect("valid negative control")
}

/// Criterion 1: normalized scalar fBm covariance against
/// `(t^{2H} + s^{2H} - |t-s|^{2H}) / 2`.
pub fn fbm_covariance_oracle(quad: &QuadConfig) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let h = 0.75;
    let spec = SpectralSpec::standard(LinearOperator::diagonal(&[h])?)?;
    let var1 = covariance(&spec, 1.0, 1.0, quad)?[(0, 0)];
    let grid = [0.25, 0.5, 0.75, 1.0];
    let mut worst = 0.0f64;
    for &t in &grid {
        for &s in &grid {
            let got = covariance(&spec, t, s, quad)?[(0, 0)] / var1;
            let exact = 0.5 * (t.powf(2.0 * h) + s.powf(2.0 * h) - (t - s).abs().powf(2.0 * h));
            worst = worst.max((got - exact).abs());
        }
    }
    let r = VerificationReport::at_most("max_abs_err", worst, 1e-3, 0.0, 0);
    Ok(CriterionOutcome::new(1, "fbm_covariance_oracle", vec![r], started))
}

/// Criterion 2: `double_sum(N) = diag(N^1.2, N^1.6)`.
pub fn telescoping_identity() -> Result<CriterionOutcome> {
    let started = Instant::now();
    let model = shipped_model();
    let mut worst = 0.0f64;
    for n in [10usize, 100, 1000] {
        let nf = n as f64;
        let target = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![nf.powf(1.2), nf.powf(1.6)]));
        worst = worst.max(rel_frobenius(&model.double_sum(n)?, &target));
    }
    let r = VerificationReport::at_most("max_rel_frobenius", worst, 1e-8, 0.0, 0);
    Ok(CriterionOutcome::new(2, "telescoping_identity", vec![r], started))
}

/// Criterion 3: `E[H_k H_l] = δ_{kl} k!` for `k, l <= 10` by quadrature.
pub fn hermite_orthogonality() -> Result<CriterionOutcome> {
    let started = Instant::now();
    let rule = gauss_hermite(crate::hermite::DEFAULT_QUAD_NODES);
    let mut worst = 0.0f64;
    for k in 0..=10 {
        for l in 0..=10 {
            let v: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * hermite_eval(k, *x) * hermite_eval(l, *x))
                .sum();
            let exact = if k == l { factorial(k) } else { 0.0 };
            worst = worst.max((v - exact).abs());
        }
    }
    let r = VerificationReport::at_most("max_abs_err", worst, 1e-9, 0.0, 0);
    Ok(CriterionOutcome::new(3, "hermite_orthogonality", vec![r], started))
}

/// Criterion 4: Monte Carlo `E[H_k(U) H_k(V)] = k! ρ^k`, `ρ = 0.5`, `k <= 4`.
pub fn mehler_check(samples: usize, seed: u64) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let rho: f64 = 0.5;
    let chunk = 10_000usize;
    let chunks = samples.div_ceil(chunk);
    // per chunk: (sum, sum of squares) for k = 1..4
    let partial: Vec<[(f64, f64); 4]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut g = rng::stream(seed, rng::DOMAIN_CHECK, c as u64);
            let mut acc = [(0.0, 0.0); 4];
            let count = chunk.min(samples - c * chunk);
            for _ in 0..count {
                let z1: f64 = g.sample(StandardNormal);
                let z2: f64 = g.sample(StandardNormal);
                let u = z1;
                let v = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
                for (k, a) in acc.iter_mut().enumerate() {
                    let p = hermite_eval(k + 1, u) * hermite_eval(k + 1, v);
                    a.0 += p;
                    a.1 += p * p;
                }
            }
            acc
        })
        .collect();
    let n = samples as f64;
    let mut reports = Vec::new();
    for k in 0..4 {
        let (s, ss) = partial.iter().fold((0.0, 0.0), |a, p| (a.0 + p[k].0, a.1 + p[k].1));
        let mean = s / n;
        let se = ((ss / n - mean * mean) * n / (n - 1.0)).sqrt() / n.sqrt();
        let exact = factorial(k + 1) * rho.powi(k as i32 + 1);
        let z = (mean - exact).abs() / se;
        reports.push(VerificationReport::at_most(
            &format!("z_score_k{}", k + 1),
            z,
            3.0,
            se,
            samples,
        ));
    }
    Ok(CriterionOutcome::new(4, "mehler", reports, started))
}

fn identity_functional() -> NonlinearFunctional {
    NonlinearFunctional::Table(HermiteCoefficientTable::identity(2))
}

/// The acceptance functional: identity plus `0.5 (H_3(x_1), H_2(x_1) H_1(x_2))`.
pub fn acceptance_functional() -> NonlinearFunctional {
    NonlinearFunctional::Table(builtin_table("identity-plus-tail", 2).expect("builtin"))
}

/// Relative Frobenius error of the sample covariance of `values` against
/// `target`, with a standard error from the entrywise jackknife errors.
fn covariance_error(values: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<(f64, f64)> {
    let est = covariance_of_rows(values)?;
    Ok((rel_frobenius(&est.cov, target), est.std_error.norm() / target.norm()))
}

/// Criterion 5: covariance of `Z_N(1)` against `Γ` for identity `G`.
pub fn covariance_convergence(cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let model = shipped_model();
    let seed = criterion_seed(cfg, 5);
    let mut errs = Vec::new();
    let mut reports = Vec::new();
    for (k, &n) in cfg.n_list.iter().enumerate() {
        let spec = EnsembleSpec::new(
            identity_functional(),
            model.clone(),
            n,
            cfg.replicates,
            rng::derive_seed(seed, 0, k as u64),
        )
        .with_times(vec![1.0]);
        let ens = ensemble_banded(&spec, &[Band::Full])?.remove(0);
        let (err, se) = covariance_error(&ens.values_at(1.0)?, model.target_gamma())?;
        errs.push((err, se));
        reports.push(
            VerificationReport::at_most(&format!("cov_rel_err_N{n}"), err, f64::INFINITY, se, cfg.replicates)
                .with_note("informational"),
        );
    }
    let last = errs.last().expect("non-empty N list");
    reports.push(VerificationReport::at_most(
        "cov_rel_err_final",
        last.0,
        0.05,
        last.1,
        cfg.replicates,
    ));
    let worst_rise = errs
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) - 3.0 * (w[0].1 * w[0].1 + w[1].1 * w[1].1).sqrt())
        .fold(f64::NEG_INFINITY, f64::max);
    reports.push(
        VerificationReport::at_most("rise_beyond_3se", worst_rise, 0.0, 0.0, cfg.replicates)
            .with_note("largest increase of the error along N minus 3 standard errors of the difference"),
    );
    Ok(CriterionOutcome::new(5, "covariance_convergence", reports, started))
}

/// `E||tail(1)||^2`, `E||head(1)||^2` and their ratio for each `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailDecay {
    pub n: usize,
    pub tail_second_moment: f64,
    pub head_second_moment: f64,
    pub ratio: f64,
    pub ratio_std_error: f64,
}

fn mean_sq_norms(v: &DMatrix<f64>) -> Vec<f64> {
    (0..v.nrows()).map(|i| v.row(i).norm_squared()).collect()
}

/// Ratio of means with a delta-method standard error.
fn ratio_of_means(a: &[f64], b: &[f64]) -> (f64, f64, f64, f64) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let ratio = ma / mb;
    let resid: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ratio * y) / mb).collect();
    let var = resid.iter().map(|r| r * r).sum::<f64>() / (n - 1.0) / n;
    (ma, mb, ratio, var.sqrt())
}

pub fn tail_decay(
    model: &CorrelationModel,
    g: &NonlinearFunctional,
    m: usize,
    n_list: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<Vec<TailDecay>> {
    n_list
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let spec = EnsembleSpec::new(
                g.clone(),
                model.clone(),
                n,
                replicates,
                rng::derive_seed(seed, 1, k as u64),
            )
            .with_times(vec![1.0]);
            let ens = ensemble_banded(&spec, &[Band::Head(m), Band::Tail(m)])?;
            let head = mean_sq_norms(&ens[0].values_at(1.0)?);
            let tail = mean_sq_norms(&ens[1].values_at(1.0)?);
            let (mt, mh, ratio, se) = ratio_of_means(&tail, &head);
            Ok(TailDecay {
                n,
                tail_second_moment: mt,
                head_second_moment: mh,
                ratio,
                ratio_std_error: se,
            })
        })
        .collect()
}

/// Criterion 6: tail-to-head second-moment ratio for the acceptance `G`.
pub fn reduction_decay(cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let rows = tail_decay(
        &shipped_model(),
        &acceptance_functional(),
        1,
        &cfg.n_list,
        cfg.replicates,
        criterion_seed(cfg, 6),
    )?;
    let mut reports: Vec<VerificationReport> = rows
        .iter()
        .map(|r| {
            VerificationReport::at_most(
                &format!("tail_ratio_N{}", r.n),
                r.ratio,
                f64::INFINITY,
                r.ratio_std_error,
                cfg.replicates,
            )
            .with_note("informational")
        })
        .collect();
    let last = rows.last().expect("non-empty N list");
    reports.push(VerificationReport::at_most(
        "tail_ratio_final",
        last.ratio,
        0.1,
        last.ratio_std_error,
        cfg.replicates,
    ));
    let worst_step = rows
        .windows(2)
        .map(|w| w[1].ratio - w[0].ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut step = VerificationReport::at_most("largest_ratio_step", worst_step, 0.0, 0.0, cfg.replicates)
        .with_note("the ratio must strictly decrease along N");
    step.pass = worst_step < 0.0;
    reports.push(step);
    Ok(CriterionOutcome::new(6, "reduction_decay", reports, started))
}

/// Criterion 7: `Cov(2t, 2t) = 2^D Cov(t, t) 2^{D^T}` at `t = 0.5`.
pub fn self_similarity(quad: &QuadConfig) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let err = oss_covariance_check(&shipped_spec(), 2.0, 0.5, quad)?;
    let r = VerificationReport::at_most("oss_rel_err", err, 1e-6, 0.0, 0);
    Ok(CriterionOutcome::new(7, "operator_self_similarity", vec![r], started))
}

/// Criterion 8: increment-moment exponent of identity-`G` paths, `α = 1`.
pub fn tightness(cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let hs = [1.0 / 64.0, 1.0 / 16.0, 0.25, 0.5, 1.0];
    let mut times = vec![0.0];
    times.extend_from_slice(&hs);
    let spec = EnsembleSpec::new(
        identity_functional(),
        shipped_model(),
        cfg.tightness_n,
        cfg.tightness_replicates,
        criterion_seed(cfg, 8),
    )
    .with_times(times);
    let ens = ensemble_banded(&spec, &[Band::Full])?.remove(0);
    let pairs: Vec<(f64, f64)> = hs.iter().map(|&h| (0.0, h)).collect();
    let fit = tightness_exponent(&ens, &pairs, 1.0)?;
    let mut r = VerificationReport::at_most(
        "slope",
        fit.slope,
        fit.bound - fit.ci_halfwidth,
        fit.ci_halfwidth / crate::stats::Z95,
        fit.replicates,
    )
    .with_note(format!(
        "pass iff slope >= 2 alpha (lambda_D - delta) - CI half-width = {:.4}",
        fit.bound - fit.ci_halfwidth
    ));
    r.pass = fit.pass;
    Ok(CriterionOutcome::new(8, "tightness_exponent", vec![r], started))
}

fn block_diag(c: &DMatrix<f64>, blocks: usize) -> DMatrix<f64> {
    let d = c.nrows();
    let mut out = DMatrix::zeros(d * blocks, d * blocks);
    for b in 0..blocks {
        out.view_mut((b * d, b * d), (d, d)).copy_from(c);
    }
    out
}

/// Whitened energy test of `(Z_N(t_1), ..)` against `(X(t_1), ..)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawMatch {
    pub statistic: f64,
    pub p_value: f64,
    pub samples: usize,
    pub deficit: f64,
}

/// `approx` values are whitened by the model's `Γ`, OFBM values by the
/// quadrature `Cov(1, 1)`.
pub fn law_match(
    approx: &PathEnsemble,
    gamma: &DMatrix<f64>,
    target: &SpectralSpec,
    times: &[f64],
    samples: usize,
    cfg: &SuiteConfig,
    seed: u64,
) -> Result<LawMatch> {
    let samples = samples.min(approx.replicates());
    let a_all = approx.stacked_at(times)?;
    let a = a_all.rows(0, samples).into_owned();
    let sim = OfbmSimulator::new(target, times, &cfg.sim, &cfg.quad)?;
    let b = sim
        .ensemble(samples, rng::derive_seed(seed, rng::DOMAIN_SPECTRAL, 0))?
        .stacked_at(times)?;
    let ref_b = covariance(target, 1.0, 1.0, &cfg.quad)?;
    let wa = whiten(&a, &block_diag(gamma, times.len()))?;
    let wb = whiten(&b, &block_diag(&ref_b, times.len()))?;
    let test = energy_distance(
        &wa,
        &wb,
        cfg.permutations,
        rng::derive_seed(seed, rng::DOMAIN_PERMUTATION, 0),
    )?;
    Ok(LawMatch {
        statistic: test.statistic,
        p_value: test.p_value,
        samples,
        deficit: sim.deficit(),
    })
}

/// Criterion 9: the whitened law of `(Z_N(0.5), Z_N(1))` matches the OFBM
/// target, and the skew spec breaks covariance symmetry.
pub fn law_matching(cfg: &SuiteConfig) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let seed = criterion_seed(cfg, 9);
    let times = [0.5, 1.0];
    let model = shipped_model();
    let spec = EnsembleSpec::new(
        identity_functional(),
        model.clone(),
        cfg.energy_n,
        cfg.energy_samples,
        seed,
    )
    .with_times(times.to_vec());
    let ens = ensemble_banded(&spec, &[Band::Full])?.remove(0);
    let lm = law_match(
        &ens,
        model.target_gamma(),
        &shipped_spec(),
        &times,
        cfg.energy_samples,
        cfg,
        seed,
    )?;
    let mut law =
        VerificationReport::at_most("energy_pvalue", lm.p_value, SIGNIFICANCE, 0.0, lm.samples).with_note(format!(
            "passes when the test does not reject: p >= {SIGNIFICANCE}; statistic {:.6e}",
            lm.statistic
        ));
    law.pass = lm.p_value >= SIGNIFICANCE;
    let c = covariance(&skew_spec(), 0.3, 0.9, &cfg.quad)?;
    let asym = (&c - c.transpose()).norm() / c.norm();
    let mut control = VerificationReport::at_most("skew_asymmetry", asym, 1e-6, 0.0, 0)
        .with_note("negative control: the symmetry check must fail, i.e. asymmetry above threshold");
    control.pass = asym > 1e-6;
    Ok(CriterionOutcome::new(9, "law_matching", vec![law, control], started))
}

/// Criteria 1 through 9.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<CriterionOutcome>> {
    Ok(vec![
        fbm_covariance_oracle(&cfg.quad)?,
        telescoping_identity()?,
        hermite_orthogonality()?,
        mehler_check(cfg.mehler_samples, criterion_seed(cfg, 4))?,
        covariance_convergence(cfg)?,
        reduction_decay(cfg)?,
        self_similarity(&cfg.quad)?,
        tightness(cfg)?,
        law_matching(cfg)?,
    ])
}

fn csv_float(v: f64) -> String {
    format!("{v}")
}

/// `criterion,name,test,statistic,threshold,pass,std_error,replicates`.
pub fn write_acceptance_csv<W: Write>(mut w: W, outcomes: &[CriterionOutcome]) -> Result<()> {
    writeln!(w, "criterion,name,test,statistic,threshold,pass,std_error,replicates")?;
    for o in outcomes {
        for r in &o.reports {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                o.id,
                o.name,
                r.test,
                csv_float(r.statistic),
                csv_float(r.threshold),
                r.pass,
                csv_float(r.std_error),
                r.replicates
            )?;
        }
    }
    Ok(())
}

/// Criterion 10: the suite CSVs at `cfg` are byte-identical across worker
/// pools of the given sizes, each run twice.
pub fn determinism_check(cfg: &SuiteConfig, threads: &[usize]) -> Result<CriterionOutcome> {
    let started = Instant::now();
    let mut outputs: Vec<Vec<u8>> = Vec::new();
    for &t in threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
        for _ in 0..2 {
            let bytes = pool.install(|| -> Result<Vec<u8>> {
                let mut buf = Vec::new();
                write_acceptance_csv(&mut buf, &run_suite(cfg)?)?;
                let rows = converge(&ConvergeConfig::from_suite(cfg))?;
                write_converge_csv(&mut buf, &rows, false)?;
                Ok(buf)
            })?;
            outputs.push(bytes);
        }
    }
    let mismatches = outputs.iter().filter(|o| **o != outputs[0]).count();
    let mut r = VerificationReport::at_most("mismatched_runs", mismatches as f64, 0.0, 0.0, outputs.len());
    r.note = format!("thread counts {threads:?}, two runs each");
    Ok(CriterionOutcome::new(10, "determinism", vec![r], started))
}

/// One row of the convergence sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergeRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub cov_frob_rel_err: f64,
    pub tail_ratio: f64,
    pub energy_stat: f64,
    pub energy_pvalue: f64,
    pub wall_seconds: f64,
}

/// Inputs of the convergence sweep.
#[derive(Debug, Clone)]
pub struct ConvergeConfig {
    pub model: CorrelationModel,
    pub functional: NonlinearFunctional,
    pub rank: usize,
    pub target: SpectralSpec,
    pub n_list: Vec<usize>,
    pub replicates: usize,
    pub energy_times: Vec<f64>,
    pub suite: SuiteConfig,
}

impl ConvergeConfig {
    /// The acceptance functional on the shipped model with suite sizes.
    pub fn from_suite(cfg: &SuiteConfig) -> Self {
        Self {
            model: shipped_model(),
            functional: acceptance_functional(),
            rank: 1,
            target: shipped_spec(),
            n_list: cfg.n_list.clone(),
            replicates: cfg.replicates,
            energy_times: vec![0.5, 1.0],
            suite: cfg.clone(),
        }
    }
}

/// Per `N`: covariance error of `Z_N(1)` against `Γ`, tail-to-head ratio,
/// and the whitened energy test against the OFBM target.
pub fn converge(cfg: &ConvergeConfig) -> Result<Vec<ConvergeRow>> {
    let seed = rng::derive_seed(cfg.suite.seed, rng::DOMAIN_CHECK, 100);
    let mut times = cfg.energy_times.clone();
    if !times.iter().any(|t| (t - 1.0).abs() < 1e-12) {
        times.push(1.0);
    }
    cfg.n_list
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let started = Instant::now();
            let spec = EnsembleSpec::new(
                cfg.functional.clone(),
                cfg.model.clone(),
                n,
                cfg.replicates,
                rng::derive_seed(seed, 0, k as u64),
            )
            .with_times(times.clone());
            let ens = ensemble_banded(&spec, &[Band::Full, Band::Head(cfg.rank), Band::Tail(cfg.rank)])?;
            let (err, _) = covariance_error(&ens[0].values_at(1.0)?, cfg.model.target_gamma())?;
            let head = mean_sq_norms(&ens[1].values_at(1.0)?);
            let tail = mean_sq_norms(&ens[2].values_at(1.0)?);
            let (_, _, ratio, _) = ratio_of_means(&tail, &head);
            let lm = law_match(
                &ens[0],
                cfg.model.target_gamma(),
                &cfg.target,
                &cfg.energy_times,
                cfg.suite.energy_samples,
                &cfg.suite,
                rng::derive_seed(seed, 1, k as u64),
            )?;
            Ok(ConvergeRow {
                n,
                cov_frob_rel_err: err,
                tail_ratio: ratio,
                energy_stat: lm.statistic,
                energy_pvalue: lm.p_value,
                wall_seconds: started.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// `N,cov_frob_rel_err,tail_ratio,energy_stat,energy_pvalue,wall_seconds`;
/// the timing field is left empty unless `timing` is set.
pub fn write_converge_csv<W: Write>(mut w: W, rows: &[ConvergeRow], timing: bool) -> Result<()> {
    writeln!(
        w,
        "N,cov_frob_rel_err,tail_ratio,energy_stat,energy_pvalue,wall_seconds"
    )?;
    for r in rows {
        let wall = if timing {
            csv_float(r.wall_seconds)
        } else {
            String::new()
        };
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.n,
            csv_float(r.cov_frob_rel_err),
            csv_float(r.tail_ratio),
            csv_float(r.energy_stat),
            csv_float(r.energy_pvalue),
            wall
        )?;
    }
    Ok(())
}
