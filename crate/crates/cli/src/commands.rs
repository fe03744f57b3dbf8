use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use ofbmlab::approx::default_times;
use ofbmlab::hermite::default_rank_tol;
use ofbmlab::stats::render_table;
use ofbmlab::verify::{self, ConvergeConfig, CriterionOutcome, SuiteConfig};
use ofbmlab::{
    check_condition_h, ensemble_banded, hermite_rank as rank_of, tightness_exponent, Band, EnsembleSpec, OfbmSimulator,
};

use crate::config::{ConfigError, ExperimentConfig, Target};

pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

pub enum Failure {
    Config(ConfigError),
    Runtime(ofbmlab::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<ofbmlab::Error> for Failure {
    fn from(e: ofbmlab::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = Result<Outcome, Failure>;

/// Default increment lengths of the tightness fit.
const TIGHTNESS_LENGTHS: [f64; 5] = [1.0 / 64.0, 1.0 / 16.0, 0.25, 0.5, 1.0];

fn output(cfg: &ExperimentConfig, name: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(&cfg.out_dir)?;
    Ok(cfg.out_dir.join(name))
}

/// `<stem>.meta.json` next to `path`, carrying the config and its hash.
fn write_sidecar(cfg: &ExperimentConfig, command: &str, path: &Path, extra: Value) -> Result<(), Failure> {
    let doc = json!({
        "command": command,
        "output": path.file_name().map(|f| f.to_string_lossy().into_owned()),
        "config_hash": cfg.hash(),
        "config": cfg,
        "version": env!("CARGO_PKG_VERSION"),
        "details": extra,
    });
    let meta = path.with_extension("meta.json");
    fs::write(
        &meta,
        serde_json::to_string_pretty(&doc).map_err(ofbmlab::Error::from)? + "\n",
    )?;
    Ok(())
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, Failure> {
    Ok(serde_json::to_value(v).map_err(ofbmlab::Error::from)?)
}

pub fn simulate_ofbm(cfg: &ExperimentConfig) -> CmdResult {
    cfg.validate(Target::Ofbm)?;
    let spec = cfg.spectral_spec()?;
    let times = cfg.times.clone().unwrap_or_else(|| default_times(64));
    let sim = OfbmSimulator::new(&spec, &times, &cfg.sim_config(), &cfg.quad_config())?;
    let ens = sim.ensemble(cfg.replicates, cfg.seed)?;
    let path = output(cfg, "ofbm_paths.csv")?;
    ens.save_csv(&path)?;
    write_sidecar(
        cfg,
        "simulate-ofbm",
        &path,
        json!({ "meta": to_value(&ens.meta)?, "deficit": sim.deficit() }),
    )?;
    println!("{}", path.display());
    Ok(Outcome::Pass)
}

pub fn simulate_approx(cfg: &ExperimentConfig, band: &str) -> CmdResult {
    cfg.validate(Target::Approximation)?;
    let band: Band = band.parse().map_err(|e: ofbmlab::Error| ConfigError(e.to_string()))?;
    let times = cfg.times.clone().unwrap_or_else(|| default_times(cfg.n));
    let spec = EnsembleSpec::new(cfg.functional()?, cfg.model()?, cfg.n, cfg.replicates, cfg.seed).with_times(times);
    let ens = ensemble_banded(&spec, &[band])?.remove(0);
    let path = output(cfg, "approx_paths.csv")?;
    ens.save_csv(&path)?;
    write_sidecar(cfg, "simulate-approx", &path, json!({ "meta": to_value(&ens.meta)? }))?;
    println!("{}", path.display());
    Ok(Outcome::Pass)
}

pub fn hermite_rank(cfg: &ExperimentConfig) -> CmdResult {
    cfg.validate(Target::FunctionalOnly)?;
    let table = cfg.functional_table()?;
    match rank_of(&table, default_rank_tol(&table)) {
        Ok(rank) => {
            println!("{rank}");
            println!("{}", table.to_json()?);
            Ok(Outcome::Pass)
        }
        Err(e @ ofbmlab::Error::RankUndetermined { .. }) => {
            println!(
                "{}",
                json!({ "status": "fail", "check": "hermite-rank", "message": e.to_string() })
            );
            Ok(Outcome::Fail)
        }
        Err(e) => Err(e.into()),
    }
}

fn functional_rank(cfg: &ExperimentConfig) -> Result<usize, Failure> {
    let table = cfg.functional_table()?;
    Ok(rank_of(&table, default_rank_tol(&table))?)
}

pub fn check_condition(cfg: &ExperimentConfig) -> CmdResult {
    cfg.validate(Target::Approximation)?;
    let m = match cfg.m {
        Some(m) => m,
        None => functional_rank(cfg)? as u32,
    };
    let report = check_condition_h(&cfg.model()?, m, &cfg.check_grid)?;
    let pass = report.passes_all();
    let doc = json!({ "pass": pass, "config_hash": cfg.hash(), "report": to_value(&report)? });
    let path = output(cfg, "condition_h.json")?;
    let text = serde_json::to_string_pretty(&doc).map_err(ofbmlab::Error::from)?;
    fs::write(&path, text.clone() + "\n")?;
    println!("{text}");
    Ok(Outcome::from_pass(pass))
}

pub fn tightness(cfg: &ExperimentConfig) -> CmdResult {
    cfg.validate(Target::Approximation)?;
    let lengths: Vec<f64> = match &cfg.times {
        Some(ts) => ts.iter().copied().filter(|t| *t > 0.0).collect(),
        None => TIGHTNESS_LENGTHS.to_vec(),
    };
    let mut times = vec![0.0];
    times.extend_from_slice(&lengths);
    let spec = EnsembleSpec::new(cfg.functional()?, cfg.model()?, cfg.n, cfg.replicates, cfg.seed).with_times(times);
    let ens = ensemble_banded(&spec, &[Band::Full])?.remove(0);
    let pairs: Vec<(f64, f64)> = lengths.iter().map(|&h| (0.0, h)).collect();
    let fit = tightness_exponent(&ens, &pairs, cfg.alpha)?;
    let doc = json!({ "pass": fit.pass, "config_hash": cfg.hash(), "fit": to_value(&fit)? });
    let path = output(cfg, "tightness.json")?;
    let text = serde_json::to_string_pretty(&doc).map_err(ofbmlab::Error::from)?;
    fs::write(&path, text.clone() + "\n")?;
    println!("{text}");
    Ok(Outcome::from_pass(fit.pass))
}

fn suite_config(cfg: &ExperimentConfig, quick: bool) -> SuiteConfig {
    if quick {
        return SuiteConfig {
            seed: cfg.seed,
            ..SuiteConfig::reduced()
        };
    }
    SuiteConfig {
        seed: cfg.seed,
        n_list: cfg.n_list.clone(),
        replicates: cfg.replicates,
        energy_samples: cfg.energy_samples,
        permutations: cfg.permutations,
        sim: cfg.sim_config(),
        quad: cfg.quad_config(),
        ..SuiteConfig::default()
    }
}

pub fn converge(cfg: &ExperimentConfig, timing: bool) -> CmdResult {
    cfg.validate(Target::Approximation)?;
    let rank = functional_rank(cfg)?;
    let run = ConvergeConfig {
        model: cfg.model()?,
        functional: cfg.functional()?,
        rank,
        target: cfg.spectral_spec()?,
        n_list: cfg.n_list.clone(),
        replicates: cfg.replicates,
        energy_times: cfg.times.clone().unwrap_or_else(|| vec![0.5, 1.0]),
        suite: suite_config(cfg, false),
    };
    let rows = verify::converge(&run)?;
    let path = output(cfg, "converge.csv")?;
    verify::write_converge_csv(BufWriter::new(fs::File::create(&path)?), &rows, timing)?;
    let timings: Vec<Value> = rows
        .iter()
        .map(|r| json!({ "N": r.n, "wall_seconds": r.wall_seconds }))
        .collect();
    write_sidecar(cfg, "converge", &path, json!({ "rank": rank, "timings": timings }))?;
    println!("{}", path.display());
    Ok(Outcome::Pass)
}

pub fn verify(cfg: &ExperimentConfig, quick: bool) -> CmdResult {
    let suite = suite_config(cfg, quick);
    let mut outcomes: Vec<CriterionOutcome> = verify::run_suite(&suite)?;
    outcomes.push(verify::determinism_check(&SuiteConfig::reduced(), &[1, 4])?);
    let hash = cfg.hash();
    for o in &mut outcomes {
        for r in &mut o.reports {
            r.config_hash = hash.clone();
        }
        println!("{}", o.summary_line());
    }
    let path = output(cfg, "acceptance.csv")?;
    verify::write_acceptance_csv(BufWriter::new(fs::File::create(&path)?), &outcomes)?;
    let timings: Vec<Value> = outcomes
        .iter()
        .map(|o| json!({ "criterion": o.id, "seconds": o.seconds }))
        .collect();
    write_sidecar(
        cfg,
        "verify",
        &path,
        json!({ "quick": quick, "suite": to_value(&suite)?, "timings": timings }),
    )?;
    let reports: Vec<_> = outcomes.iter().flat_map(|o| o.reports.clone()).collect();
    eprintln!("{}", render_table(&reports));
    let pass = outcomes.iter().all(|o| o.pass);
    if !pass {
        let failed: Vec<Value> = outcomes
            .iter()
            .filter(|o| !o.pass)
            .map(|o| json!({ "criterion": o.id, "name": o.name, "reports": o.reports }))
            .collect();
        println!("{}", json!({ "status": "fail", "failed": failed }));
    }
    Ok(Outcome::from_pass(pass))
}
