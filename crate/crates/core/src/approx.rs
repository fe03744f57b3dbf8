//! Normalized partial-sum paths `Z_N(t) = N^{-D} sum_{i <= floor(Nt)} G(X_i)`
//! and their Hermite-band splits into the rank-`m` reduced part and the tail.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corr::CorrelationModel;
use crate::error::{Error, Result};
use crate::gaussgen::{GaussianSequence, Method, SynthesisPlan};
use crate::hermite::{
    default_rank_tol, BandEvaluator, HermiteCoefficientTable, NonlinearFunctional, DEFAULT_MAX_ORDER,
    DEFAULT_QUAD_NODES,
};
use crate::linop::{mat_pow, LinearOperator};

/// Slack added to `N t` before flooring so grid times `k / N` land on `k`.
const FLOOR_SLACK: f64 = 1e-9;
/// Two grid times closer than this are the same time.
pub const TIME_MATCH_TOL: f64 = 1e-12;

/// Which part of the Hermite expansion of `G` is summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Band {
    Full,
    /// Orders exactly `m`.
    Head(usize),
    /// Orders above `m`.
    Tail(usize),
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Band::Full => write!(f, "full"),
            Band::Head(m) => write!(f, "head_{m}"),
            Band::Tail(m) => write!(f, "tail_{m}"),
        }
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Input(format!("unknown band '{s}'"));
        if s == "full" {
            return Ok(Band::Full);
        }
        let (kind, m) = s.split_once('_').ok_or_else(bad)?;
        let m: usize = m.parse().map_err(|_| bad())?;
        match kind {
            "head" => Ok(Band::Head(m)),
            "tail" => Ok(Band::Tail(m)),
            _ => Err(bad()),
        }
    }
}

impl From<Band> for String {
    fn from(b: Band) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for Band {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Step-function index `floor(N t)` for `t` in `[0, 1]`.
pub fn step_index(n: usize, t: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("time {t} outside [0, 1]")));
    }
    Ok(((n as f64 * t + FLOOR_SLACK).floor() as usize).min(n))
}

/// The default time grid `{k / N : k = 0..N}`.
pub fn default_times(n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

fn check_mean_zero_table(table: &HermiteCoefficientTable) -> Result<()> {
    let tol = default_rank_tol(table);
    let mean = table.mean_magnitude();
    if mean > tol {
        return Err(Error::Contract(format!(
            "functional is not mean-zero (order-0 coefficient {mean:e} exceeds {tol:e})"
        )));
    }
    Ok(())
}

fn check_mean_zero(g: &NonlinearFunctional) -> Result<()> {
    match g {
        NonlinearFunctional::Table(t) => check_mean_zero_table(t),
        NonlinearFunctional::Closure { .. } => {
            let mean = g.mean(DEFAULT_QUAD_NODES)?;
            let scale = g.second_moment(DEFAULT_QUAD_NODES)?.sqrt();
            let tol = 1e-8 * (1.0 + scale);
            let worst = mean.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if worst > tol {
                return Err(Error::Contract(format!(
                    "functional is not mean-zero (mean {worst:e} exceeds {tol:e})"
                )));
            }
            Ok(())
        }
    }
}

/// Summand `Y_i = G_band(X_i)`.
enum Summand {
    Band(BandEvaluator),
    Closure(NonlinearFunctional),
    Zero,
}

impl Summand {
    fn for_band(g: &NonlinearFunctional, band: Band, table: Option<&HermiteCoefficientTable>) -> Result<Self> {
        match band {
            Band::Full => match g {
                NonlinearFunctional::Table(t) => Ok(Summand::Band(BandEvaluator::new(t, 0, t.max_order())?)),
                NonlinearFunctional::Closure { .. } => Ok(Summand::Closure(g.clone())),
            },
            Band::Head(m) | Band::Tail(m) => {
                let table = table.expect("band operations need a coefficient table");
                if m == 0 {
                    return Err(Error::Domain("band order must be at least 1".into()));
                }
                let (from, to) = match band {
                    Band::Head(_) => (m, m),
                    _ => (m + 1, table.max_order()),
                };
                if from > to {
                    return match band {
                        Band::Tail(_) => Ok(Summand::Zero),
                        _ => Err(Error::Domain(format!(
                            "band {band} is empty: table max_order {}",
                            table.max_order()
                        ))),
                    };
                }
                let eval = BandEvaluator::new(table, from, to)?;
                if eval.is_empty() && matches!(band, Band::Head(_)) {
                    return Err(Error::Domain(format!("band {band} has no nonzero coefficient")));
                }
                Ok(Summand::Band(eval))
            }
        }
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Summand::Band(e) => e.eval_into(x, out),
            Summand::Closure(g) => out.copy_from_slice(&g.evaluate(x)?),
            Summand::Zero => out.iter_mut().for_each(|v| *v = 0.0),
        }
        Ok(())
    }
}

/// Normalized cumulative sums of the summand sampled at `times`
/// (a `T x d` matrix, one row per time).
fn path_from_summand(
    summand: &Summand,
    seq: &GaussianSequence,
    scale: &DMatrix<f64>,
    times: &[f64],
) -> Result<DMatrix<f64>> {
    let n = seq.len();
    let d = seq.dim();
    let mut targets: Vec<(usize, usize)> = times
        .iter()
        .enumerate()
        .map(|(j, &t)| step_index(n, t).map(|k| (k, j)))
        .collect::<Result<_>>()?;
    targets.sort_unstable();
    let mut out = DMatrix::zeros(times.len(), d);
    let mut acc = DVector::<f64>::zeros(d);
    let mut y = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut done = 0usize;
    let mut next = targets.iter().peekable();
    loop {
        while let Some(&&(k, j)) = next.peek() {
            if k != done {
                break;
            }
            let v = scale * &acc;
            out.row_mut(j).copy_from(&v.transpose());
            next.next();
        }
        if done == n || next.peek().is_none() {
            break;
        }
        for (a, xa) in x.iter_mut().enumerate() {
            *xa = seq.values[(done, a)];
        }
        summand.eval_into(&x, &mut y)?;
        for a in 0..d {
            acc[a] += y[a];
        }
        done += 1;
    }
    Ok(out)
}

fn normalizer(n: usize, d: &LinearOperator, seq: &GaussianSequence) -> Result<DMatrix<f64>> {
    if d.dim() != seq.dim() {
        return Err(Error::Domain(format!(
            "exponent has dimension {}, sequence has {}",
            d.dim(),
            seq.dim()
        )));
    }
    if n == 0 {
        return Err(Error::Domain("empty sequence".into()));
    }
    Ok(mat_pow(n as f64, &d.scaled(-1.0))?.into_matrix())
}

/// `Z_N(t)` for each `t` in `times`, with `N` the sequence length.
pub fn partial_sum_path(
    g: &NonlinearFunctional,
    seq: &GaussianSequence,
    d: &LinearOperator,
    times: &[f64],
) -> Result<DMatrix<f64>> {
    check_mean_zero(g)?;
    let scale = normalizer(seq.len(), d, seq)?;
    path_from_summand(&Summand::for_band(g, Band::Full, None)?, seq, &scale, times)
}

fn banded_path(
    table: &HermiteCoefficientTable,
    band: Band,
    seq: &GaussianSequence,
    d: &LinearOperator,
    times: &[f64],
) -> Result<DMatrix<f64>> {
    check_mean_zero_table(table)?;
    let scale = normalizer(seq.len(), d, seq)?;
    let g = NonlinearFunctional::Table(table.clone());
    path_from_summand(&Summand::for_band(&g, band, Some(table))?, seq, &scale, times)
}

/// `Z_{N,m}(t)`: the partial-sum path of the order-`m` band of `G`.
pub fn reduced_path(
    table: &HermiteCoefficientTable,
    m: usize,
    seq: &GaussianSequence,
    d: &LinearOperator,
    times: &[f64],
) -> Result<DMatrix<f64>> {
    banded_path(table, Band::Head(m), seq, d, times)
}

/// The tail path: orders above `m`. Zero when the table has no such orders.
pub fn tail_path(
    table: &HermiteCoefficientTable,
    m: usize,
    seq: &GaussianSequence,
    d: &LinearOperator,
    times: &[f64],
) -> Result<DMatrix<f64>> {
    banded_path(table, Band::Tail(m), seq, d, times)
}

/// Monte Carlo driver input.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub functional: NonlinearFunctional,
    pub model: CorrelationModel,
    pub d: LinearOperator,
    pub n: usize,
    pub times: Vec<f64>,
    pub replicates: usize,
    pub master_seed: u64,
}

impl EnsembleSpec {
    /// Spec normalizing by the model's own target exponent.
    pub fn new(
        functional: NonlinearFunctional,
        model: CorrelationModel,
        n: usize,
        replicates: usize,
        master_seed: u64,
    ) -> Self {
        let d = model.target_d().clone();
        Self {
            functional,
            model,
            d,
            n,
            times: default_times(n),
            replicates,
            master_seed,
        }
    }

    pub fn with_times(mut self, times: Vec<f64>) -> Self {
        self.times = times;
        self
    }
}

/// Provenance of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub source: String,
    pub n: Option<usize>,
    pub dim: usize,
    /// Row-major exponent `D`.
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    pub functional: Option<String>,
    pub model_id: Option<String>,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub band: Band,
    pub method: Option<Method>,
    pub warnings: Vec<String>,
}

/// Replicate paths on a common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    /// One `T x d` matrix per replicate.
    pub paths: Vec<DMatrix<f64>>,
    pub meta: EnsembleMeta,
}

impl PathEnsemble {
    pub fn replicates(&self) -> usize {
        self.paths.len()
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    /// Position of `t` in the grid.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= TIME_MATCH_TOL)
            .ok_or_else(|| Error::Domain(format!("time {t} is not on the ensemble grid")))
    }

    /// `R x d` matrix of path values at grid time `t`.
    pub fn values_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let j = self.time_index(t)?;
        Ok(DMatrix::from_fn(self.paths.len(), self.dim(), |r, a| {
            self.paths[r][(j, a)]
        }))
    }

    /// `R x (p d)` matrix stacking values at each of the given times.
    pub fn stacked_at(&self, ts: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let idx: Vec<usize> = ts.iter().map(|&t| self.time_index(t)).collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(self.paths.len(), idx.len() * d, |r, c| {
            self.paths[r][(idx[c / d], c % d)]
        }))
    }

    /// CSV with header `replicate,t,x1..xd`, one row per (replicate, time).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim()).map(|a| format!("x{a}")).collect();
        writeln!(w, "replicate,t,{}", header.join(","))?;
        for (r, path) in self.paths.iter().enumerate() {
            for (j, t) in self.times.iter().enumerate() {
                write!(w, "{r},{t}")?;
                for a in 0..self.dim() {
                    write!(w, ",{}", path[(j, a)])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// Synthesizes `R` input sequences and returns, for each requested band,
/// the ensemble of paths built from those same sequences.
pub fn ensemble_banded(spec: &EnsembleSpec, bands: &[Band]) -> Result<Vec<PathEnsemble>> {
    if spec.replicates == 0 {
        return Err(Error::Domain("replicates must be at least 1".into()));
    }
    if spec.functional.dim() != spec.model.dim() || spec.d.dim() != spec.model.dim() {
        return Err(Error::Domain("functional, model and exponent dimensions differ".into()));
    }
    for &t in &spec.times {
        step_index(spec.n, t)?;
    }
    let needs_table = bands.iter().any(|b| *b != Band::Full);
    let table = if needs_table {
        Some(spec.functional.to_table(DEFAULT_MAX_ORDER, DEFAULT_QUAD_NODES)?)
    } else {
        None
    };
    match &table {
        Some(t) => check_mean_zero_table(t)?,
        None => check_mean_zero(&spec.functional)?,
    }
    let summands: Vec<Summand> = bands
        .iter()
        .map(|&b| Summand::for_band(&spec.functional, b, table.as_ref()))
        .collect::<Result<_>>()?;
    let plan = SynthesisPlan::new(&spec.model, spec.n)?;
    let scale = mat_pow(spec.n as f64, &spec.d.scaled(-1.0))?.into_matrix();

    let per_replicate: Vec<(u64, Vec<DMatrix<f64>>)> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let seq = plan.sample_replicate(spec.master_seed, r as u64);
            let paths = summands
                .iter()
                .map(|s| path_from_summand(s, &seq, &scale, &spec.times))
                .collect::<Result<Vec<_>>>()?;
            Ok((seq.seed, paths))
        })
        .collect::<Result<_>>()?;

    let seeds: Vec<u64> = per_replicate.iter().map(|(s, _)| *s).collect();
    let mut columns: Vec<Vec<DMatrix<f64>>> = vec![Vec::with_capacity(spec.replicates); bands.len()];
    for (_, paths) in per_replicate {
        for (b, p) in paths.into_iter().enumerate() {
            columns[b].push(p);
        }
    }
    Ok(bands
        .iter()
        .zip(columns)
        .map(|(&band, paths)| PathEnsemble {
            times: spec.times.clone(),
            paths,
            meta: EnsembleMeta {
                source: "approx".into(),
                n: Some(spec.n),
                dim: spec.model.dim(),
                d: spec.d.to_row_major(),
                functional: Some(spec.functional.name()),
                model_id: Some(spec.model.id()),
                master_seed: spec.master_seed,
                seeds: seeds.clone(),
                band,
                method: Some(plan.method()),
                warnings: plan.warnings().to_vec(),
            },
        })
        .collect())
}

/// Ensemble of full partial-sum paths `Z_N`.
pub fn ensemble(spec: &EnsembleSpec) -> Result<PathEnsemble> {
    Ok(ensemble_banded(spec, &[Band::Full])?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::{ofgn_model, white_model};
    use crate::gaussgen::synthesize;
    use crate::hermite::builtin_table;

    fn shipped() -> CorrelationModel {
        ofgn_model(
            &LinearOperator::diagonal(&[0.6, 0.8]).unwrap(),
            &DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    fn ident() -> NonlinearFunctional {
        NonlinearFunctional::Table(HermiteCoefficientTable::identity(2))
    }

    #[test]
    fn empty_sum_before_first_step() {
        let model = shipped();
        let seq = synthesize(&model, 4, 1).unwrap();
        let p = partial_sum_path(&ident(), &seq, model.target_d(), &[0.0, 0.2, 0.25]).unwrap();
        assert_eq!(p.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert_eq!(p.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert_ne!(p.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_clt_scaling() {
        let d = LinearOperator::diagonal(&[0.5]).unwrap();
        let model = white_model(&DMatrix::identity(1, 1), &d).unwrap();
        let seq = synthesize(&model, 9, 4).unwrap();
        let g = NonlinearFunctional::Table(HermiteCoefficientTable::identity(1));
        let p = partial_sum_path(&g, &seq, &d, &[1.0]).unwrap();
        let direct: f64 = seq.values.column(0).iter().sum::<f64>() / 3.0;
        assert!((p[(0, 0)] - direct).abs() < 1e-14);
    }

    #[test]
    fn off_grid_times_follow_step_function() {
        let model = shipped();
        let seq = synthesize(&model, 8, 2).unwrap();
        let p = partial_sum_path(&ident(), &seq, model.target_d(), &[0.25, 0.3, 0.374, 0.375]).unwrap();
        assert_eq!(p.row(0), p.row(1));
        assert_eq!(p.row(0), p.row(2));
        assert_ne!(p.row(0), p.row(3));
    }

    #[test]
    fn times_in_any_order() {
        let model = shipped();
        let seq = synthesize(&model, 16, 2).unwrap();
        let a = partial_sum_path(&ident(), &seq, model.target_d(), &[1.0, 0.5, 0.0]).unwrap();
        let b = partial_sum_path(&ident(), &seq, model.target_d(), &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(a.row(0), b.row(2));
        assert_eq!(a.row(1), b.row(1));
    }

    #[test]
    fn band_partition_and_selection() {
        let model = shipped();
        let d = model.target_d().clone();
        let seq = synthesize(&model, 64, 5).unwrap();
        let table = builtin_table("identity-plus-tail", 2).unwrap();
        let g = NonlinearFunctional::Table(table.clone());
        let times = default_times(64);
        let full = partial_sum_path(&g, &seq, &d, &times).unwrap();
        let head = reduced_path(&table, 1, &seq, &d, &times).unwrap();
        let tail = tail_path(&table, 1, &seq, &d, &times).unwrap();
        assert!((&head + &tail - &full).abs().max() < 1e-12);
        // the order-1 band of this table is the identity
        let id = partial_sum_path(&ident(), &seq, &d, &times).unwrap();
        assert!((&head - &id).abs().max() < 1e-13);
    }

    #[test]
    fn identity_has_zero_tail_and_full_head() {
        let model = shipped();
        let seq = synthesize(&model, 32, 6).unwrap();
        let t = HermiteCoefficientTable::identity(2);
        let times = default_times(32);
        let tail = tail_path(&t, 1, &seq, model.target_d(), &times).unwrap();
        assert!(tail.iter().all(|v| *v == 0.0));
        let head = reduced_path(&t, 1, &seq, model.target_d(), &times).unwrap();
        let full = partial_sum_path(&ident(), &seq, model.target_d(), &times).unwrap();
        assert_eq!(head, full);
    }

    #[test]
    fn pure_order_three_tail_equals_full() {
        let model = shipped();
        let seq = synthesize(&model, 32, 6).unwrap();
        let t = HermiteCoefficientTable::new(2, 3).with(&[3, 0], 0, 1.0).unwrap();
        let times = default_times(32);
        let tail = tail_path(&t, 1, &seq, model.target_d(), &times).unwrap();
        let full = partial_sum_path(&NonlinearFunctional::Table(t.clone()), &seq, model.target_d(), &times).unwrap();
        assert_eq!(tail, full);
        assert!(matches!(
            reduced_path(&t, 1, &seq, model.target_d(), &times),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn non_centered_functional_rejected() {
        let model = shipped();
        let seq = synthesize(&model, 8, 1).unwrap();
        let t = HermiteCoefficientTable::identity(2).with(&[0, 0], 0, 0.1).unwrap();
        let g = NonlinearFunctional::Table(t.clone());
        assert!(matches!(
            partial_sum_path(&g, &seq, model.target_d(), &[1.0]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            reduced_path(&t, 1, &seq, model.target_d(), &[1.0]),
            Err(Error::Contract(_))
        ));
        let square = NonlinearFunctional::closure(2, "square", |x| vec![x[0] * x[0], x[1]]);
        assert!(matches!(
            partial_sum_path(&square, &seq, model.target_d(), &[1.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn closure_matches_table() {
        let model = shipped();
        let seq = synthesize(&model, 32, 8).unwrap();
        let closure = NonlinearFunctional::closure(2, "tail", |x| {
            vec![
                x[0] + 0.5 * (x[0].powi(3) - 3.0 * x[0]),
                x[1] + 0.5 * (x[0] * x[0] - 1.0) * x[1],
            ]
        });
        let table = NonlinearFunctional::Table(builtin_table("identity-plus-tail", 2).unwrap());
        let times = default_times(32);
        let a = partial_sum_path(&closure, &seq, model.target_d(), &times).unwrap();
        let b = partial_sum_path(&table, &seq, model.target_d(), &times).unwrap();
        assert!((a - b).abs().max() < 1e-12);
    }

    #[test]
    fn single_replicate_ensemble_reproduces_path() {
        let model = shipped();
        let spec = EnsembleSpec::new(ident(), model.clone(), 50, 1, 77);
        let ens = ensemble(&spec).unwrap();
        let plan = SynthesisPlan::new(&model, 50).unwrap();
        let seq = plan.sample_replicate(77, 0);
        let direct = partial_sum_path(&ident(), &seq, model.target_d(), &spec.times).unwrap();
        assert_eq!(ens.paths[0], direct);
        assert_eq!(ens.meta.seeds, vec![seq.seed]);
        assert!(ens.paths[0].row(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ensembles_are_deterministic() {
        let spec = EnsembleSpec::new(ident(), shipped(), 40, 6, 3).with_times(vec![0.0, 0.5, 1.0]);
        assert_eq!(ensemble(&spec).unwrap(), ensemble(&spec).unwrap());
        let banded = ensemble_banded(&spec, &[Band::Full, Band::Head(1), Band::Tail(1)]).unwrap();
        assert_eq!(banded[0].paths, banded[1].paths);
        assert_eq!(banded[2].meta.band, Band::Tail(1));
    }

    #[test]
    fn ensemble_values_and_csv() {
        let spec = EnsembleSpec::new(ident(), shipped(), 4, 2, 9).with_times(vec![0.0, 1.0]);
        let ens = ensemble(&spec).unwrap();
        let v = ens.values_at(1.0).unwrap();
        assert_eq!(v.nrows(), 2);
        assert_eq!(v[(1, 0)], ens.paths[1][(1, 0)]);
        assert!(matches!(ens.values_at(0.3), Err(Error::Domain(_))));
        let stacked = ens.stacked_at(&[0.0, 1.0]).unwrap();
        assert_eq!(stacked.ncols(), 4);
        assert_eq!(stacked[(0, 3)], ens.paths[0][(1, 1)]);
        let mut csv = Vec::new();
        ens.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "replicate,t,x1,x2");
        assert_eq!(lines.len(), 1 + 2 * 2);
        assert!(lines[1].starts_with("0,0,0,0"));
    }

    #[test]
    fn band_names_round_trip() {
        for b in [Band::Full, Band::Head(1), Band::Tail(3)] {
            assert_eq!(b.to_string().parse::<Band>().unwrap(), b);
        }
        assert!("middle_2".parse::<Band>().is_err());
    }

    #[test]
    fn bad_times_rejected() {
        let spec = EnsembleSpec::new(ident(), shipped(), 4, 1, 0).with_times(vec![1.5]);
        assert!(matches!(ensemble(&spec), Err(Error::Domain(_))));
    }
}
