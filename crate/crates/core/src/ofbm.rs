//! Operator fractional Brownian motion through its real harmonizable
//! representation
//!
//! `X(t) = ∫_0^∞ G_1(x, t) W_1(dx) + ∫_0^∞ G_2(x, t) W_2(dx)` with
//! `G_1 = x^{-(D - I/2)} (a_t A_1 + b_t A_2)`, `G_2 = x^{-(D - I/2)} (a_t A_2 - b_t A_1)`,
//! `a_t = sin(tx) / x`, `b_t = (cos(tx) - 1) / x`.
//!
//! Second moments reduce to
//! `E[X(t) X(s)^T] = ∫ x^{-1} x^{-D} [c_1(x) S + c_2(x) K] x^{-D^T} dx` with
//! `S = A_1 A_1^T + A_2 A_2^T`, `K = A_1 A_2^T - A_2 A_1^T`,
//! `c_1 = 1 - cos tx - cos sx + cos (t-s)x`, `c_2 = sin (t-s)x - sin tx + sin sx`.
//! The `S` part splits as `V(t) + V(s) - V(t - s)` with
//! `V(u) = ∫ x^{-1} x^{-D} (1 - cos ux) S x^{-D^T} dx`, each finite on its own.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{step_index, Band, EnsembleMeta, PathEnsemble};
use crate::error::{Error, Result};
use crate::linop::{expm, mat_pow, max_abs_entry, rel_frobenius, row_major, solve_lyapunov, LinearOperator};
use crate::quadrature::gauss_legendre;
use crate::rng;

/// Tolerance of the time-reversibility test `A_2 A_1^T = A_1 A_2^T`.
pub const REVERSIBILITY_TOL: f64 = 1e-12;
/// Relative discretization deficit above which simulation metadata carries a warning.
pub const DEFICIT_WARNING: f64 = 0.02;

/// Spectral parameters `(A_1, A_2, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSpec {
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    d: LinearOperator,
}

/// Row-major JSON form of a [`SpectralSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSpecDoc {
    pub dim: usize,
    #[serde(rename = "A1")]
    pub a1: Vec<f64>,
    #[serde(rename = "A2")]
    pub a2: Vec<f64>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
}

impl SpectralSpec {
    pub fn new(a1: DMatrix<f64>, a2: DMatrix<f64>, d: LinearOperator) -> Result<Self> {
        let n = d.dim();
        if a1.shape() != (n, n) || a2.shape() != (n, n) {
            return Err(Error::Model(format!("A1 and A2 must be {n}x{n}")));
        }
        if a1.iter().chain(a2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite spectral matrix entry".into()));
        }
        let b = d.spectral_bounds();
        if !(b.lambda_min > 0.0 && b.lambda_max < 1.0) {
            return Err(Error::Model(format!(
                "spectral bounds [{}, {}] of D must lie in (0, 1)",
                b.lambda_min, b.lambda_max
            )));
        }
        Ok(Self { a1, a2, d })
    }

    pub fn from_doc(doc: &SpectralSpecDoc) -> Result<Self> {
        let n = doc.dim;
        let mat = |v: &[f64], name: &str| -> Result<DMatrix<f64>> {
            if v.len() != n * n {
                return Err(Error::Input(format!("{name} needs {} entries, got {}", n * n, v.len())));
            }
            Ok(DMatrix::from_row_slice(n, n, v))
        };
        Self::new(
            mat(&doc.a1, "A1")?,
            mat(&doc.a2, "A2")?,
            LinearOperator::from_row_slice(n, &doc.d)?,
        )
    }

    pub fn to_doc(&self) -> SpectralSpecDoc {
        SpectralSpecDoc {
            dim: self.dim(),
            a1: row_major(&self.a1),
            a2: row_major(&self.a2),
            d: self.d.to_row_major(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let doc: SpectralSpecDoc = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_doc(&doc)
    }

    /// `A_1 = I`, `A_2 = 0`.
    pub fn standard(d: LinearOperator) -> Result<Self> {
        let n = d.dim();
        Self::new(DMatrix::identity(n, n), DMatrix::zeros(n, n), d)
    }

    pub fn dim(&self) -> usize {
        self.d.dim()
    }

    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }

    pub fn a2(&self) -> &DMatrix<f64> {
        &self.a2
    }

    pub fn d(&self) -> &LinearOperator {
        &self.d
    }

    /// `A_1 A_1^T + A_2 A_2^T`.
    pub fn s_matrix(&self) -> DMatrix<f64> {
        &self.a1 * self.a1.transpose() + &self.a2 * self.a2.transpose()
    }

    /// `A_1 A_2^T - A_2 A_1^T`, zero exactly for time-reversible specs.
    pub fn k_matrix(&self) -> DMatrix<f64> {
        &self.a1 * self.a2.transpose() - &self.a2 * self.a1.transpose()
    }

    pub fn is_time_reversible(&self) -> bool {
        let scale = 1.0f64.max(self.a1.norm() * self.a2.norm());
        max_abs_entry(&self.k_matrix()) <= REVERSIBILITY_TOL * scale
    }
}

/// `x^{-D}` for many `x`, with a direct path for diagonal `D`.
struct NegPower {
    d: DMatrix<f64>,
    diagonal: Option<Vec<f64>>,
}

impl NegPower {
    fn new(d: &LinearOperator) -> Self {
        let m = d.matrix().clone();
        let n = m.nrows();
        let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
        let diagonal = is_diag.then(|| (0..n).map(|i| m[(i, i)]).collect());
        Self { d: m, diagonal }
    }

    fn at(&self, x: f64) -> DMatrix<f64> {
        match &self.diagonal {
            Some(h) => DMatrix::from_diagonal(&DVector::from_iterator(h.len(), h.iter().map(|hi| x.powf(-hi)))),
            None => expm(&(&self.d * (-x.ln()))),
        }
    }
}

/// Which kernel of the harmonizable representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    First,
    Second,
}

fn kernel_coefficients(x: f64, t: f64) -> (f64, f64) {
    ((t * x).sin() / x, ((t * x).cos() - 1.0) / x)
}

/// `G_1(x, t)` or `G_2(x, t)`.
pub fn kernel_eval(spec: &SpectralSpec, x: f64, t: f64, which: Kernel) -> Result<DMatrix<f64>> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("kernel frequency must be positive, got {x}")));
    }
    let shift = spec.d.matrix() - DMatrix::identity(spec.dim(), spec.dim()) * 0.5;
    let p = mat_pow(x, &LinearOperator::new(-shift)?)?.into_matrix();
    let (a, b) = kernel_coefficients(x, t);
    Ok(match which {
        Kernel::First => p * (&spec.a1 * a + &spec.a2 * b),
        Kernel::Second => p * (&spec.a2 * a - &spec.a1 * b),
    })
}

/// Covariance quadrature settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Upper end of the analytic head region for unit frequency.
    pub head: f64,
    /// Number of Taylor terms in the head region.
    pub head_terms: usize,
    /// Minimum cutoff of the panel region; the rest is handled analytically.
    pub x_max: f64,
    /// Minimum number of half-periods of the slowest frequency inside the panel region.
    pub min_half_periods: f64,
    /// Width in `ln x` of the logarithmic panels, before refinement.
    pub log_panel: f64,
    /// Gauss–Legendre nodes per panel.
    pub nodes: usize,
    /// Relative change between refinements accepted as converged.
    pub tol: f64,
    /// Maximum number of panel halvings.
    pub max_refine: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            head: 1e-2,
            head_terms: 8,
            x_max: 1e3,
            min_half_periods: 200.0,
            log_panel: 0.5,
            nodes: 16,
            tol: 1e-10,
            max_refine: 5,
        }
    }
}

/// One term `coef * trig(ω x)` of an oscillating weight.
#[derive(Debug, Clone, Copy)]
enum Trig {
    Cos,
    Sin,
}

/// `∫_0^∞ x^{-1} x^{-D} g(x) M x^{-D^T} dx` where
/// `g(x) = constant + Σ coef trig(ω x)` and, on `(0, head]`,
/// `g(x) = Σ_p head_coef[p] x^p`.
struct Weighted<'a> {
    m: &'a DMatrix<f64>,
    eval: Box<dyn Fn(f64) -> f64 + Sync + 'a>,
    constant: f64,
    waves: Vec<(f64, Trig, f64)>,
    taylor: Vec<(usize, f64)>,
}

impl Weighted<'_> {
    fn max_freq(&self) -> f64 {
        self.waves.iter().map(|w| w.0).fold(0.0, f64::max)
    }

    fn min_freq(&self) -> f64 {
        self.waves.iter().map(|w| w.0).fold(f64::INFINITY, f64::min)
    }
}

struct Integrator<'a> {
    d: &'a DMatrix<f64>,
    power: NegPower,
    cfg: &'a QuadConfig,
    legendre: crate::quadrature::Rule,
}

impl<'a> Integrator<'a> {
    fn new(d: &'a LinearOperator, cfg: &'a QuadConfig) -> Self {
        Self {
            d: d.matrix(),
            power: NegPower::new(d),
            cfg,
            legendre: gauss_legendre(cfg.nodes),
        }
    }

    /// `x^{-1} x^{-D} M x^{-D^T}`.
    fn frame(&self, x: f64, m: &DMatrix<f64>) -> DMatrix<f64> {
        let e = self.power.at(x);
        &e * m * e.transpose() / x
    }

    /// `∫_0^{x0} x^{p-1} x^{-D} M x^{-D^T} dx = x0^p x0^{-D} Z x0^{-D^T}`
    /// with `(p/2 - D) Z + Z (p/2 - D)^T = M`.
    fn head_moment(&self, p: usize, x0: f64, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.d.nrows();
        let b = DMatrix::identity(n, n) * (p as f64 / 2.0) - self.d;
        let z = solve_lyapunov(&b, m)?;
        let e = self.power.at(x0);
        Ok(&e * z * e.transpose() * x0.powi(p as i32))
    }

    /// `∫_X^∞ x^{-1} x^{-D} M x^{-D^T} dx = X^{-D} Y X^{-D^T}` with `D Y + Y D^T = M`.
    fn tail_constant(&self, x_end: f64, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let y = solve_lyapunov(self.d, m)?;
        let e = self.power.at(x_end);
        Ok(&e * y * e.transpose())
    }

    /// `∫_X^∞ trig(ω x) F(x) dx` for `F = x^{-1} x^{-D} M x^{-D^T}` by two
    /// integrations by parts; `F' = -(F + D F + F D^T) / x`.
    fn tail_wave(&self, x_end: f64, omega: f64, kind: Trig, m: &DMatrix<f64>) -> DMatrix<f64> {
        let f = self.frame(x_end, m);
        let fp = -(&f + self.d * &f + &f * self.d.transpose()) / x_end;
        let (s, c) = (omega * x_end).sin_cos();
        match kind {
            Trig::Cos => -(&f * (s / omega)) - &fp * (c / (omega * omega)),
            Trig::Sin => &f * (c / omega) - &fp * (s / (omega * omega)),
        }
    }

    fn panels(&self, a: f64, b: f64, count: usize, log: bool, w: &Weighted) -> DMatrix<f64> {
        let n = self.d.nrows();
        let (lo, hi) = if log { (a.ln(), b.ln()) } else { (a, b) };
        let width = (hi - lo) / count as f64;
        let rule = &self.legendre;
        (0..count)
            .into_par_iter()
            .map(|k| {
                let mid = lo + (k as f64 + 0.5) * width;
                let mut acc = DMatrix::zeros(n, n);
                for (z, wt) in rule.nodes.iter().zip(&rule.weights) {
                    let v = mid + 0.5 * width * z;
                    let (x, jac) = if log { (v.exp(), v.exp()) } else { (v, 1.0) };
                    let g = (w.eval)(x);
                    if g != 0.0 {
                        acc += self.frame(x, w.m) * (wt * 0.5 * width * jac * g);
                    }
                }
                acc
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(DMatrix::zeros(n, n), |a, b| a + b)
    }

    fn integrate(&self, w: &Weighted) -> Result<DMatrix<f64>> {
        let cfg = self.cfg;
        let n = self.d.nrows();
        if w.waves.is_empty() && w.constant == 0.0 {
            return Ok(DMatrix::zeros(n, n));
        }
        let wmax = w.max_freq();
        let wmin = w.min_freq();
        let x0 = cfg.head / wmax.max(1.0);
        let x1 = 1.0f64.max(1.0 / wmax);
        let half_period = std::f64::consts::PI / wmax;
        let lin_base = ((cfg.x_max - x1).max(0.0) / half_period)
            .max(cfg.min_half_periods * wmax / wmin)
            .ceil() as usize;
        let x_end = x1 + lin_base as f64 * half_period;
        let log_base = ((x1 / x0).ln() / cfg.log_panel).ceil().max(1.0) as usize;

        let mut fixed = DMatrix::zeros(n, n);
        for &(p, c) in &w.taylor {
            fixed += self.head_moment(p, x0, w.m)? * c;
        }
        if w.constant != 0.0 {
            fixed += self.tail_constant(x_end, w.m)? * w.constant;
        }
        for &(omega, kind, c) in &w.waves {
            fixed += self.tail_wave(x_end, omega, kind, w.m) * c;
        }

        let body = |level: usize| -> DMatrix<f64> {
            let k = 1usize << level;
            self.panels(x0, x1, log_base * k, true, w) + self.panels(x1, x_end, lin_base * k, false, w)
        };
        let mut prev = body(0);
        for level in 1..=cfg.max_refine {
            let cur = body(level);
            let total = &cur + &fixed;
            let change = (&cur - &prev).norm();
            if change <= cfg.tol * total.norm() || change == 0.0 {
                return Ok(total);
            }
            prev = cur;
        }
        Err(Error::Accuracy(format!(
            "covariance quadrature did not converge to {:e} after {} refinements",
            cfg.tol, cfg.max_refine
        )))
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `V(u) = ∫ x^{-1} x^{-D} (1 - cos ux) S x^{-D^T} dx`.
fn v_integral(integ: &Integrator, s: &DMatrix<f64>, u: f64) -> Result<DMatrix<f64>> {
    let u = u.abs();
    let n = s.nrows();
    if u == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    // 1 - cos ux = Σ_{k>=1} (-1)^{k+1} (ux)^{2k} / (2k)!
    let taylor = (1..=integ.cfg.head_terms)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            (2 * k, sign * u.powi(2 * k as i32) / factorial(2 * k))
        })
        .collect();
    let w = Weighted {
        m: s,
        eval: Box::new(move |x| 2.0 * (0.5 * u * x).sin().powi(2)),
        constant: 1.0,
        waves: vec![(u, Trig::Cos, -1.0)],
        taylor,
    };
    integ.integrate(&w)
}

/// `∫ x^{-1} x^{-D} c_2(x) K x^{-D^T} dx` for `c_2 = sin (t-s)x - sin tx + sin sx`.
fn k_integral(integ: &Integrator, k: &DMatrix<f64>, t: f64, s: f64) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    if t == 0.0 || s == 0.0 || t == s {
        return Ok(DMatrix::zeros(n, n));
    }
    let mut waves: Vec<(f64, Trig, f64)> = Vec::new();
    for (freq, coef) in [(t - s, 1.0), (t, -1.0), (s, 1.0)] {
        let (omega, c) = if freq < 0.0 { (-freq, -coef) } else { (freq, coef) };
        match waves.iter_mut().find(|w| w.0 == omega) {
            Some(w) => w.2 += c,
            None => waves.push((omega, Trig::Sin, c)),
        }
    }
    waves.retain(|w| w.2 != 0.0);
    // c_2 = Σ_{k>=1} (-1)^k x^{2k+1} / (2k+1)! [(t-s)^{2k+1} - t^{2k+1} + s^{2k+1}]
    let taylor = (1..=integ.cfg.head_terms)
        .map(|j| {
            let p = 2 * j + 1;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let e = p as i32;
            (p, sign * ((t - s).powi(e) - t.powi(e) + s.powi(e)) / factorial(p))
        })
        .collect();
    let w = Weighted {
        m: k,
        eval: Box::new(move |x| ((t - s) * x).sin() - (t * x).sin() + (s * x).sin()),
        constant: 0.0,
        waves,
        taylor,
    };
    integ.integrate(&w)
}

/// `E[X(t) X(s)^T]` by deterministic quadrature.
pub fn covariance(spec: &SpectralSpec, t: f64, s: f64, quad: &QuadConfig) -> Result<DMatrix<f64>> {
    if !t.is_finite() || !s.is_finite() {
        return Err(Error::Domain("covariance times must be finite".into()));
    }
    let integ = Integrator::new(&spec.d, quad);
    let sm = spec.s_matrix();
    let mut cov = v_integral(&integ, &sm, t)? + v_integral(&integ, &sm, s)? - v_integral(&integ, &sm, t - s)?;
    if !spec.is_time_reversible() {
        cov += k_integral(&integ, &spec.k_matrix(), t, s)?;
    }
    Ok(cov)
}

/// `||Cov(ct, ct) - c^D Cov(t, t) c^{D^T}||_F / ||c^D Cov(t, t) c^{D^T}||_F`.
pub fn oss_covariance_check(spec: &SpectralSpec, c: f64, t: f64, quad: &QuadConfig) -> Result<f64> {
    let cd = mat_pow(c, &spec.d)?.into_matrix();
    let lhs = covariance(spec, c * t, c * t, quad)?;
    let rhs = &cd * covariance(spec, t, t, quad)? * cd.transpose();
    Ok(rel_frobenius(&lhs, &rhs))
}

/// Spectral discretization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_freq: usize,
    pub x_max: f64,
    /// Lower end of the geometric sub-grid.
    pub x_min: f64,
    /// Fraction of cells placed on the geometric sub-grid `(x_min, 1]`.
    pub geometric_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_freq: 1 << 14,
            x_max: 1e3,
            x_min: 1e-6,
            geometric_fraction: 0.125,
        }
    }
}

/// Frequency cells `(midpoint, width)` of the hybrid grid.
pub fn frequency_cells(cfg: &SimConfig) -> Result<Vec<(f64, f64)>> {
    if cfg.n_freq < 2 {
        return Err(Error::Domain("n_freq must be at least 2".into()));
    }
    if !(cfg.x_max > 0.0) || !(cfg.x_min > 0.0) || cfg.x_min >= cfg.x_max.min(1.0) {
        return Err(Error::Domain("need 0 < x_min < min(1, x_max)".into()));
    }
    let mut cells = Vec::with_capacity(cfg.n_freq);
    if cfg.x_max <= 1.0 {
        let ratio = (cfg.x_max / cfg.x_min).ln() / cfg.n_freq as f64;
        for k in 0..cfg.n_freq {
            let a = cfg.x_min * (ratio * k as f64).exp();
            let b = cfg.x_min * (ratio * (k + 1) as f64).exp();
            cells.push(((a * b).sqrt(), b - a));
        }
        return Ok(cells);
    }
    let n_geo = ((cfg.n_freq as f64 * cfg.geometric_fraction).round() as usize).clamp(1, cfg.n_freq - 1);
    let n_lin = cfg.n_freq - n_geo;
    let ratio = (1.0 / cfg.x_min).ln() / n_geo as f64;
    for k in 0..n_geo {
        let a = cfg.x_min * (ratio * k as f64).exp();
        let b = if k + 1 == n_geo {
            1.0
        } else {
            cfg.x_min * (ratio * (k + 1) as f64).exp()
        };
        cells.push(((a * b).sqrt(), b - a));
    }
    let h = (cfg.x_max - 1.0) / n_lin as f64;
    for k in 0..n_lin {
        cells.push((1.0 + (k as f64 + 0.5) * h, h));
    }
    Ok(cells)
}

/// Precomputed spectral discretization for sampling paths at fixed times.
#[derive(Debug, Clone)]
pub struct OfbmSimulator {
    spec: SpectralSpec,
    cfg: SimConfig,
    times: Vec<f64>,
    /// `sqrt(Δx) x^{-(D - I/2)} A_1` and `... A_2` per cell.
    pa1: Vec<DMatrix<f64>>,
    pa2: Vec<DMatrix<f64>>,
    /// `(a_t, b_t)` per cell, per time.
    coef: Vec<Vec<(f64, f64)>>,
    deficit: f64,
    warnings: Vec<String>,
}

impl OfbmSimulator {
    pub fn new(spec: &SpectralSpec, times: &[f64], cfg: &SimConfig, quad: &QuadConfig) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("simulation times must be finite".into()));
        }
        let cells = frequency_cells(cfg)?;
        let n = spec.dim();
        let power = NegPower::new(&LinearOperator::new(spec.d.matrix() - DMatrix::identity(n, n) * 0.5)?);
        let mut pa1 = Vec::with_capacity(cells.len());
        let mut pa2 = Vec::with_capacity(cells.len());
        let mut coef = Vec::with_capacity(cells.len());
        for &(x, dx) in &cells {
            let p = power.at(x) * dx.sqrt();
            pa1.push(&p * &spec.a1);
            pa2.push(&p * &spec.a2);
            coef.push(times.iter().map(|&t| kernel_coefficients(x, t)).collect());
        }
        let mut sim = Self {
            spec: spec.clone(),
            cfg: cfg.clone(),
            times: times.to_vec(),
            pa1,
            pa2,
            coef,
            deficit: 0.0,
            warnings: Vec::new(),
        };
        let target = covariance(spec, 1.0, 1.0, quad)?;
        let discrete = sim.discrete_covariance_at(1.0);
        sim.deficit = rel_frobenius(&discrete, &target);
        if sim.deficit > DEFICIT_WARNING {
            sim.warnings.push(format!(
                "spectral discretization deficit {:.4} at t = 1 exceeds {DEFICIT_WARNING}",
                sim.deficit
            ));
        }
        Ok(sim)
    }

    /// Covariance at `(t, t)` of the discretized field.
    pub fn discrete_covariance_at(&self, t: f64) -> DMatrix<f64> {
        let n = self.spec.dim();
        let cells = frequency_cells(&self.cfg).expect("validated at construction");
        let mut acc = DMatrix::zeros(n, n);
        for (c, &(x, _)) in cells.iter().enumerate() {
            let (a, b) = kernel_coefficients(x, t);
            let g1 = &self.pa1[c] * a + &self.pa2[c] * b;
            let g2 = &self.pa2[c] * a - &self.pa1[c] * b;
            acc += &g1 * g1.transpose() + &g2 * g2.transpose();
        }
        acc
    }

    /// Relative Frobenius gap between discretized and quadrature `Cov(1, 1)`.
    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// One `T x d` path.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let n = self.spec.dim();
        let mut out = DMatrix::zeros(self.times.len(), n);
        let mut xi1 = DVector::<f64>::zeros(n);
        let mut xi2 = DVector::<f64>::zeros(n);
        for c in 0..self.pa1.len() {
            for a in 0..n {
                xi1[a] = rng.sample(StandardNormal);
            }
            for a in 0..n {
                xi2[a] = rng.sample(StandardNormal);
            }
            let u = &self.pa1[c] * &xi1 + &self.pa2[c] * &xi2;
            let v = &self.pa2[c] * &xi1 - &self.pa1[c] * &xi2;
            for (j, &(a, b)) in self.coef[c].iter().enumerate() {
                for k in 0..n {
                    out[(j, k)] += a * u[k] + b * v[k];
                }
            }
        }
        out
    }

    pub fn sample(&self, seed: u64) -> DMatrix<f64> {
        self.sample_with(&mut rng::seeded(seed))
    }

    pub fn sample_replicate(&self, master_seed: u64, index: u64) -> DMatrix<f64> {
        self.sample_with(&mut rng::stream(master_seed, rng::DOMAIN_SPECTRAL, index))
    }

    /// `replicates` independent paths from derived seeds.
    pub fn ensemble(&self, replicates: usize, master_seed: u64) -> Result<PathEnsemble> {
        if replicates == 0 {
            return Err(Error::Domain("replicates must be at least 1".into()));
        }
        for &t in &self.times {
            step_index(1, t)?;
        }
        let paths: Vec<DMatrix<f64>> = (0..replicates)
            .into_par_iter()
            .map(|r| self.sample_replicate(master_seed, r as u64))
            .collect();
        let seeds = (0..replicates as u64)
            .map(|r| rng::derive_seed(master_seed, rng::DOMAIN_SPECTRAL, r))
            .collect();
        let mut warnings = self.warnings.clone();
        warnings.push(format!("discretization deficit {:e}", self.deficit));
        Ok(PathEnsemble {
            times: self.times.clone(),
            paths,
            meta: EnsembleMeta {
                source: "ofbm".into(),
                n: None,
                dim: self.spec.dim(),
                d: self.spec.d.to_row_major(),
                functional: None,
                model_id: None,
                master_seed,
                seeds,
                band: Band::Full,
                method: None,
                warnings,
            },
        })
    }
}

/// One simulated path at `times`.
pub fn simulate(spec: &SpectralSpec, times: &[f64], n_freq: usize, x_max: f64, seed: u64) -> Result<DMatrix<f64>> {
    let cfg = SimConfig {
        n_freq,
        x_max,
        ..SimConfig::default()
    };
    Ok(OfbmSimulator::new(spec, times, &cfg, &QuadConfig::default())?.sample(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Γ(2 - 2H) for the exponents used below.
    const GAMMA_HALF: f64 = 1.772_453_850_905_516;
    const GAMMA_0_8: f64 = 1.164_229_713_725_303_4;
    const GAMMA_0_4: f64 = 2.218_159_543_757_688;

    /// Closed form of `∫_0^∞ (1 - cos x) x^{-1-2H} dx`.
    fn v1_scalar(h: f64, gamma_2m2h: f64) -> f64 {
        gamma_2m2h * (std::f64::consts::PI * h).cos() / (2.0 * h * (1.0 - 2.0 * h))
    }

    fn scalar(h: f64) -> SpectralSpec {
        SpectralSpec::standard(LinearOperator::diagonal(&[h]).unwrap()).unwrap()
    }

    fn shipped() -> SpectralSpec {
        SpectralSpec::standard(LinearOperator::diagonal(&[0.6, 0.8]).unwrap()).unwrap()
    }

    fn skew() -> SpectralSpec {
        SpectralSpec::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            LinearOperator::diagonal(&[0.6, 0.8]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn kernels_vanish_at_time_zero() {
        for which in [Kernel::First, Kernel::Second] {
            let g = kernel_eval(&skew(), 0.7, 0.0, which).unwrap();
            assert_eq!(g, DMatrix::zeros(2, 2));
        }
        assert!(matches!(
            kernel_eval(&skew(), 0.0, 1.0, Kernel::First),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn brownian_kernels() {
        let spec = scalar(0.5);
        for &(x, t) in &[(0.3, 0.9), (2.0, 0.4)] {
            let g1 = kernel_eval(&spec, x, t, Kernel::First).unwrap()[(0, 0)];
            let g2 = kernel_eval(&spec, x, t, Kernel::Second).unwrap()[(0, 0)];
            assert!((g1 - (t * x).sin() / x).abs() < 1e-15);
            assert!((g2 - (1.0 - (t * x).cos()) / x).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_time_parity() {
        let spec = skew();
        let plus = kernel_eval(&spec, 1.0, 0.3, Kernel::First).unwrap();
        let minus = kernel_eval(&spec, 1.0, -0.3, Kernel::First).unwrap();
        let p = mat_pow(
            1.0,
            &LinearOperator::new(-(spec.d.matrix() - DMatrix::identity(2, 2) * 0.5)).unwrap(),
        )
        .unwrap()
        .into_matrix();
        let odd = &p * spec.a1() * (0.3f64).sin();
        let even = &p * spec.a2() * ((0.3f64).cos() - 1.0);
        assert!((&plus - (&odd + &even)).abs().max() < 1e-15);
        assert!((&minus - (-&odd + &even)).abs().max() < 1e-15);
    }

    #[test]
    fn scalar_variance_matches_closed_form() {
        for (h, g) in [(0.75, GAMMA_HALF), (0.6, GAMMA_0_8), (0.8, GAMMA_0_4)] {
            let v = covariance(&scalar(h), 1.0, 1.0, &QuadConfig::default()).unwrap()[(0, 0)];
            let exact = 2.0 * v1_scalar(h, g);
            assert!((v - exact).abs() < 1e-9 * exact, "H={h}: {v} vs {exact}");
        }
        let bm = covariance(&scalar(0.5), 1.0, 1.0, &QuadConfig::default()).unwrap()[(0, 0)];
        assert!((bm - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn scalar_fbm_normalized_covariance() {
        let spec = scalar(0.75);
        let q = QuadConfig::default();
        let var1 = covariance(&spec, 1.0, 1.0, &q).unwrap()[(0, 0)];
        let r = covariance(&spec, 1.0, 0.75, &q).unwrap()[(0, 0)] / var1;
        assert!((r - 0.762_260).abs() < 1e-5, "{r}");
        let half = covariance(&spec, 0.5, 1.0, &q).unwrap()[(0, 0)] / var1;
        assert!((half - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_time_gives_zero() {
        let q = QuadConfig::default();
        assert_eq!(covariance(&skew(), 0.0, 0.6, &q).unwrap(), DMatrix::zeros(2, 2));
        assert_eq!(covariance(&skew(), 0.4, 0.0, &q).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn reversible_covariance_is_symmetric() {
        let q = QuadConfig::default();
        let spec = SpectralSpec::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.8]),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.15, -0.1, 0.4]),
            LinearOperator::from_row_slice(2, &[0.65, 0.1, -0.05, 0.75]).unwrap(),
        )
        .unwrap();
        assert!(spec.is_time_reversible());
        let c = covariance(&spec, 0.3, 0.9, &q).unwrap();
        let ct = covariance(&spec, 0.9, 0.3, &q).unwrap();
        assert!((&c - c.transpose()).abs().max() < 1e-10);
        assert!((&c - ct.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn skew_spec_breaks_symmetry_but_keeps_transpose_rule() {
        let q = QuadConfig::default();
        let spec = skew();
        assert!(!spec.is_time_reversible());
        let c = covariance(&spec, 0.3, 0.9, &q).unwrap();
        let ct = covariance(&spec, 0.9, 0.3, &q).unwrap();
        assert!((&c - c.transpose()).abs().max() > 1e-3);
        assert!((&c - ct.transpose()).abs().max() < 1e-10);
        let gamma = covariance(&spec, 1.0, 1.0, &q).unwrap();
        assert!((&gamma - gamma.transpose()).abs().max() < 1e-12);
    }

    /// Direct brute-force quadrature of the defining integral on a plain
    /// truncated grid; the skew part converges fast enough for a loose check.
    #[test]
    fn skew_part_against_brute_force() {
        let spec = skew();
        let (t, s) = (0.3, 0.9);
        let q = QuadConfig::default();
        let fast = covariance(&spec, t, s, &q).unwrap();
        let k = spec.k_matrix();
        let hi = [0.6, 0.8];
        // off-diagonal of x^{-D} K x^{-D}: exponent -(h1 + h2) = -1.4
        let mut acc = 0.0;
        let rule = gauss_legendre(32);
        let edges: Vec<f64> = (0..=4000).map(|i| 1e-6 * (2e9f64).powf(i as f64 / 4000.0)).collect();
        for win in edges.windows(2) {
            let (a, b) = (win[0], win[1]);
            for (z, w) in rule.nodes.iter().zip(&rule.weights) {
                let x = 0.5 * (a + b) + 0.5 * (b - a) * z;
                let c2 = ((t - s) * x).sin() - (t * x).sin() + (s * x).sin();
                acc += w * 0.5 * (b - a) * c2 * x.powf(-1.0 - hi[0] - hi[1]);
            }
        }
        let v_sym = covariance(&SpectralSpec::standard(spec.d.clone()).unwrap(), t, s, &q).unwrap() * 2.0;
        let expect01 = v_sym[(0, 1)] + acc * k[(0, 1)];
        assert!((fast[(0, 1)] - expect01).abs() < 1e-6, "{} vs {expect01}", fast[(0, 1)]);
    }

    #[test]
    fn operator_self_similarity() {
        let q = QuadConfig::default();
        for c in [0.5, 2.0] {
            assert!(oss_covariance_check(&shipped(), c, 0.5, &q).unwrap() < 1e-8);
        }
        assert!(oss_covariance_check(&shipped(), 1.0, 0.5, &q).unwrap() < 1e-15);
        let v1 = covariance(&scalar(0.75), 1.0, 1.0, &q).unwrap()[(0, 0)];
        let vh = covariance(&scalar(0.75), 0.5, 0.5, &q).unwrap()[(0, 0)];
        assert!((v1 - 2f64.powf(1.5) * vh).abs() < 1e-9 * v1);
    }

    #[test]
    fn non_diagonal_exponent_self_similarity() {
        let spec = SpectralSpec::standard(LinearOperator::from_row_slice(2, &[0.7, 0.1, 0.0, 0.7]).unwrap()).unwrap();
        assert!(oss_covariance_check(&spec, 2.0, 0.5, &QuadConfig::default()).unwrap() < 1e-8);
    }

    #[test]
    fn stationary_increments_at_covariance_level() {
        let q = QuadConfig::default();
        let spec = shipped();
        let gamma = covariance(&spec, 1.0, 1.0, &q).unwrap();
        let (t, s) = (0.9, 0.35);
        let inc = covariance(&spec, t, t, &q).unwrap()
            - covariance(&spec, t, s, &q).unwrap()
            - covariance(&spec, s, t, &q).unwrap()
            + covariance(&spec, s, s, &q).unwrap();
        let h = mat_pow(t - s, spec.d()).unwrap().into_matrix();
        let target = &h * gamma * h.transpose();
        assert!(rel_frobenius(&inc, &target) < 1e-8);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(matches!(
            SpectralSpec::standard(LinearOperator::diagonal(&[0.5, 1.0]).unwrap()),
            Err(Error::Model(_))
        ));
        let doc = shipped().to_doc();
        assert_eq!(SpectralSpec::from_doc(&doc).unwrap(), shipped());
    }

    #[test]
    fn hybrid_grid_layout() {
        let cfg = SimConfig::default();
        let cells = frequency_cells(&cfg).unwrap();
        assert_eq!(cells.len(), 1 << 14);
        let covered: f64 = cells.iter().map(|c| c.1).sum();
        assert!((covered - (cfg.x_max - cfg.x_min)).abs() < 1e-8);
        assert!(cells.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(frequency_cells(&SimConfig { n_freq: 1, ..cfg }).is_err());
    }

    #[test]
    fn simulated_paths_start_at_zero_and_are_reproducible() {
        let p = simulate(&shipped(), &[0.0, 0.5, 1.0], 256, 50.0, 3).unwrap();
        assert!(p.row(0).iter().all(|v| *v == 0.0));
        assert_eq!(p, simulate(&shipped(), &[0.0, 0.5, 1.0], 256, 50.0, 3).unwrap());
    }

    #[test]
    fn default_discretization_deficit_is_small() {
        let sim = OfbmSimulator::new(&scalar(0.75), &[1.0], &SimConfig::default(), &QuadConfig::default()).unwrap();
        assert!(sim.deficit() < 5e-3, "{}", sim.deficit());
        assert!(sim.warnings().is_empty());
        let coarse = SimConfig {
            n_freq: 16,
            x_max: 10.0,
            ..SimConfig::default()
        };
        let sim = OfbmSimulator::new(&scalar(0.75), &[1.0], &coarse, &QuadConfig::default()).unwrap();
        assert!(sim.deficit() > DEFICIT_WARNING);
        assert_eq!(sim.warnings().len(), 1);
    }
}
