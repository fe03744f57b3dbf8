//! Probabilists' Hermite polynomials, the tensor basis `e_L`, coefficient
//! tables of nonlinear functionals `G: R^d -> R^d`, Hermite rank and
//! order-band evaluation of truncated expansions.
//!
//! Coordinates and output slots are zero-based throughout the Rust API and
//! in the JSON table format.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_hermite;

pub const DEFAULT_MAX_ORDER: usize = 12;
pub const DEFAULT_QUAD_NODES: usize = 64;

/// Upper bound on the number of tensor quadrature points.
const MAX_TENSOR_POINTS: usize = 1 << 22;

/// `H_l(x)` by the three-term recurrence `H_{l+1} = x H_l - l H_{l-1}`.
pub fn hermite_eval(l: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if l == 0 {
        return prev;
    }
    let mut cur = x;
    for k in 1..l {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `[H_0(x), ..., H_max(x)]`.
pub fn hermite_values(max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    out.push(1.0);
    if max >= 1 {
        out.push(x);
    }
    for k in 1..max {
        let next = x * out[k] - k as f64 * out[k - 1];
        out.push(next);
    }
    out
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Multi-index `L = (l_1, ..., l_d)` of a tensor Hermite product.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(l: Vec<usize>) -> Self {
        Self(l)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total order `l_1 + ... + l_d`.
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    /// `l_1! ... l_d!`.
    pub fn factorial_product(&self) -> f64 {
        self.0.iter().map(|&l| factorial(l)).product()
    }

    /// `prod_n H_{l_n}(x_n)`.
    pub fn product_eval(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&l, &xn)| hermite_eval(l, xn)).product()
    }

    /// Unit index with a one in coordinate `k`.
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut l = vec![0; dim];
        l[k] = 1;
        Self(l)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, ")")
    }
}

/// All multi-indices of dimension `dim` with order at most `max_order`,
/// sorted by order and then lexicographically.
pub fn multi_indices(dim: usize, max_order: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for order in 0..=max_order {
        let mut current = vec![0; dim];
        compositions(order, 0, &mut current, &mut out);
    }
    out
}

fn compositions(remaining: usize, pos: usize, current: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex(current.clone()));
        return;
    }
    for v in (0..=remaining).rev() {
        current[pos] = v;
        compositions(remaining - v, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// Evaluates the basis vector with `prod_n H_{l_n}(x_n)` in output slot `slot`
/// and zeros elsewhere (`e_L` for slot 0, `ẽ_L` for slot 1).
pub fn basis_eval(index: &MultiIndex, x: &[f64], slot: usize) -> Result<DVector<f64>> {
    if index.dim() != x.len() {
        return Err(Error::Domain(format!(
            "multi-index has {} entries but the point has {}",
            index.dim(),
            x.len()
        )));
    }
    if slot >= x.len() {
        return Err(Error::Domain(format!(
            "slot {slot} out of range for dimension {}",
            x.len()
        )));
    }
    let mut v = DVector::zeros(x.len());
    v[slot] = index.product_eval(x);
    Ok(v)
}

/// Coefficients of a finite tensor-Hermite expansion of `G: R^d -> R^d`.
///
/// `coeffs[L][k]` multiplies `prod_n H_{l_n}(x_n)` in output coordinate `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteCoefficientTable {
    dim: usize,
    max_order: usize,
    coeffs: BTreeMap<MultiIndex, Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableDoc {
    dim: usize,
    max_order: usize,
    entries: Vec<TableEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableEntry {
    #[serde(rename = "L")]
    l: Vec<usize>,
    slot: usize,
    value: f64,
}

impl HermiteCoefficientTable {
    pub fn new(dim: usize, max_order: usize) -> Self {
        Self {
            dim,
            max_order,
            coeffs: BTreeMap::new(),
        }
    }

    /// Adds `value` to the coefficient of `(index, slot)`.
    pub fn add(&mut self, index: MultiIndex, slot: usize, value: f64) -> Result<()> {
        if index.dim() != self.dim || slot >= self.dim {
            return Err(Error::Domain(format!(
                "entry {index} slot {slot} does not fit a dimension-{} table",
                self.dim
            )));
        }
        if index.order() > self.max_order {
            return Err(Error::Domain(format!(
                "entry {index} exceeds max_order {}",
                self.max_order
            )));
        }
        if !value.is_finite() {
            return Err(Error::Input(format!("non-finite coefficient for {index}")));
        }
        let dim = self.dim;
        self.coeffs.entry(index).or_insert_with(|| vec![0.0; dim])[slot] += value;
        Ok(())
    }

    pub fn with(mut self, l: &[usize], slot: usize, value: f64) -> Result<Self> {
        self.add(MultiIndex::new(l.to_vec()), slot, value)?;
        Ok(self)
    }

    /// `G(x) = x`.
    pub fn identity(dim: usize) -> Self {
        let mut t = Self::new(dim, 1);
        for k in 0..dim {
            t.coeffs.insert(MultiIndex::unit(dim, k), unit_slot(dim, k, 1.0));
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn coefficient(&self, index: &MultiIndex, slot: usize) -> f64 {
        self.coeffs.get(index).map_or(0.0, |c| c[slot])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &[f64])> {
        self.coeffs.iter().map(|(l, c)| (l, c.as_slice()))
    }

    /// `C_G = sum_L (sum_k coeff_k(L)^2) l_1! ... l_d!`.
    pub fn c_g(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(l, c)| c.iter().map(|v| v * v).sum::<f64>() * l.factorial_product())
            .sum()
    }

    /// Largest absolute coefficient of total order zero.
    pub fn mean_magnitude(&self) -> f64 {
        self.coeffs
            .iter()
            .filter(|(l, _)| l.order() == 0)
            .flat_map(|(_, c)| c.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Copy without order-zero terms.
    pub fn centered(&self) -> Self {
        let mut t = self.clone();
        t.coeffs.retain(|l, _| l.order() > 0);
        t
    }

    /// Copy dropping coefficients with magnitude at most `tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        let mut t = self.clone();
        for c in t.coeffs.values_mut() {
            for v in c.iter_mut() {
                if v.abs() <= tol {
                    *v = 0.0;
                }
            }
        }
        t.coeffs.retain(|_, c| c.iter().any(|v| *v != 0.0));
        t
    }

    /// Matrix `C` with `C[k][j]` the coefficient of `x_j` in output slot `k`.
    pub fn linear_part(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.dim, self.dim, |k, j| {
            self.coefficient(&MultiIndex::unit(self.dim, j), k)
        })
    }

    /// Sum of the expansion restricted to orders in `[from_order, to_order]`.
    pub fn evaluate_truncated(&self, x: &[f64], from_order: usize, to_order: usize) -> Result<DVector<f64>> {
        if x.len() != self.dim {
            return Err(Error::Domain(format!(
                "point has dimension {}, table has {}",
                x.len(),
                self.dim
            )));
        }
        let eval = BandEvaluator::new(self, from_order, to_order)?;
        let mut out = vec![0.0; self.dim];
        eval.eval_into(x, &mut out);
        Ok(DVector::from_vec(out))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut entries = Vec::new();
        for (l, c) in &self.coeffs {
            for (slot, &value) in c.iter().enumerate() {
                if value != 0.0 {
                    entries.push(TableEntry {
                        l: l.as_slice().to_vec(),
                        slot,
                        value,
                    });
                }
            }
        }
        let doc = TableDoc {
            dim: self.dim,
            max_order: self.max_order,
            entries,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TableDoc = serde_json::from_str(text)?;
        if doc.dim == 0 {
            return Err(Error::Input("table dimension must be positive".into()));
        }
        let mut t = Self::new(doc.dim, doc.max_order);
        for e in doc.entries {
            t.add(MultiIndex::new(e.l), e.slot, e.value)?;
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn unit_slot(dim: usize, k: usize, value: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[k] = value;
    v
}

/// Fast evaluator of the order band `[from, to]` of a coefficient table.
#[derive(Debug, Clone)]
pub struct BandEvaluator {
    dim: usize,
    max_degree: usize,
    terms: Vec<(Vec<usize>, Vec<(usize, f64)>)>,
}

impl BandEvaluator {
    pub fn new(table: &HermiteCoefficientTable, from_order: usize, to_order: usize) -> Result<Self> {
        if from_order > to_order || to_order > table.max_order {
            return Err(Error::Domain(format!(
                "band [{from_order}, {to_order}] outside table orders [0, {}]",
                table.max_order
            )));
        }
        let mut terms = Vec::new();
        let mut max_degree = 0;
        for (l, c) in &table.coeffs {
            let order = l.order();
            if order < from_order || order > to_order {
                continue;
            }
            let slots: Vec<(usize, f64)> = c
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(k, v)| (k, *v))
                .collect();
            if slots.is_empty() {
                continue;
            }
            max_degree = max_degree.max(l.as_slice().iter().copied().max().unwrap_or(0));
            terms.push((l.as_slice().to_vec(), slots));
        }
        Ok(Self {
            dim: table.dim,
            max_degree,
            terms,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Overwrites `out` with the band value at `x`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if self.terms.is_empty() {
            return;
        }
        let h: Vec<Vec<f64>> = x.iter().map(|&xn| hermite_values(self.max_degree, xn)).collect();
        for (l, slots) in &self.terms {
            let mut prod = 1.0;
            for (n, &ln) in l.iter().enumerate() {
                prod *= h[n][ln];
            }
            for &(k, c) in slots {
                out[k] += c * prod;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

type Evaluator = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A measurable map `G: R^d -> R^d`, given either in closed form or as an
/// exact finite Hermite expansion.
#[derive(Clone)]
pub enum NonlinearFunctional {
    Table(HermiteCoefficientTable),
    Closure {
        dim: usize,
        name: String,
        eval: Arc<Evaluator>,
    },
}

impl fmt::Debug for NonlinearFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Table(t) => f.debug_tuple("Table").field(t).finish(),
            Self::Closure { dim, name, .. } => f.debug_struct("Closure").field("dim", dim).field("name", name).finish(),
        }
    }
}

impl NonlinearFunctional {
    pub fn closure<F>(dim: usize, name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::Closure {
            dim,
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Table(t) => t.dim,
            Self::Closure { dim, .. } => *dim,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Table(t) => Ok(t.evaluate_truncated(x, 0, t.max_order)?.as_slice().to_vec()),
            Self::Closure { dim, eval, name } => {
                let y = eval(x);
                if y.len() != *dim {
                    return Err(Error::Evaluation(format!(
                        "functional {name} returned {} coordinates, expected {dim}",
                        y.len()
                    )));
                }
                Ok(y)
            }
        }
    }

    /// `E[G(X)]` for standard normal `X`, by tensor Gauss–Hermite quadrature
    /// (exact for tables).
    pub fn mean(&self, quad_nodes: usize) -> Result<Vec<f64>> {
        match self {
            Self::Table(t) => Ok((0..t.dim)
                .map(|k| t.coefficient(&MultiIndex::new(vec![0; t.dim]), k))
                .collect()),
            Self::Closure { .. } => {
                let table = extract_coeffs(self, 0, quad_nodes.max(1))?;
                Ok((0..self.dim())
                    .map(|k| table.coefficient(&MultiIndex::new(vec![0; self.dim()]), k))
                    .collect())
            }
        }
    }

    /// `E ||G(X)||^2` by tensor Gauss–Hermite quadrature.
    pub fn second_moment(&self, quad_nodes: usize) -> Result<f64> {
        let grid = TensorGrid::new(self.dim(), quad_nodes)?;
        let mut total = 0.0;
        for (point, w) in grid.iter() {
            let y = self.evaluate(&point)?;
            let sq: f64 = y.iter().map(|v| v * v).sum();
            if !sq.is_finite() {
                return Err(Error::Evaluation(
                    "functional is not finite at a quadrature node".into(),
                ));
            }
            total += w * sq;
        }
        Ok(total)
    }

    /// Coefficient table: the table itself, or its quadrature projection.
    pub fn to_table(&self, max_order: usize, quad_nodes: usize) -> Result<HermiteCoefficientTable> {
        match self {
            Self::Table(t) => Ok(t.clone()),
            Self::Closure { .. } => extract_coeffs(self, max_order, quad_nodes),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Table(t) => format!(
                "table(dim={}, max_order={}, terms={})",
                t.dim,
                t.max_order,
                t.coeffs.len()
            ),
            Self::Closure { name, .. } => name.clone(),
        }
    }
}

/// Tensor product Gauss–Hermite grid in `d` dimensions.
struct TensorGrid {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl TensorGrid {
    fn new(dim: usize, n: usize) -> Result<Self> {
        let total = (n as f64).powi(dim as i32);
        if total > MAX_TENSOR_POINTS as f64 {
            return Err(Error::Domain(format!(
                "{n}^{dim} tensor quadrature points exceed the limit of {MAX_TENSOR_POINTS}"
            )));
        }
        let rule = gauss_hermite(n);
        Ok(Self {
            dim,
            nodes: rule.nodes,
            weights: rule.weights,
        })
    }

    fn len(&self) -> usize {
        self.nodes.len().pow(self.dim as u32)
    }

    /// Per-coordinate node positions of flat point `p`.
    fn positions(&self, mut p: usize, out: &mut [usize]) {
        let n = self.nodes.len();
        for slot in out.iter_mut().rev() {
            *slot = p % n;
            p /= n;
        }
    }

    fn iter(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        let mut pos = vec![0; self.dim];
        (0..self.len()).map(move |p| {
            self.positions(p, &mut pos);
            let point: Vec<f64> = pos.iter().map(|&i| self.nodes[i]).collect();
            let w: f64 = pos.iter().map(|&i| self.weights[i]).product();
            (point, w)
        })
    }
}

/// Projects `G` on the tensor Hermite basis up to total order `max_order`:
/// `coeff(L, k) = E[G_k(X) prod_n H_{l_n}(X_n)] / prod_n l_n!`.
pub fn extract_coeffs(
    functional: &NonlinearFunctional,
    max_order: usize,
    quad_nodes: usize,
) -> Result<HermiteCoefficientTable> {
    if quad_nodes < max_order + 1 {
        return Err(Error::Domain(format!(
            "{quad_nodes} quadrature nodes cannot resolve order {max_order}"
        )));
    }
    let dim = functional.dim();
    let grid = TensorGrid::new(dim, quad_nodes)?;

    // G at every tensor node, weighted.
    let mut weighted = Vec::with_capacity(grid.len());
    for (point, w) in grid.iter() {
        let y = functional.evaluate(&point)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation(format!(
                "functional is not finite at quadrature node {point:?}"
            )));
        }
        weighted.push(y.into_iter().map(|v| v * w).collect::<Vec<f64>>());
    }
    // h[j][l] = H_l(node_j)
    let h: Vec<Vec<f64>> = grid.nodes.iter().map(|&x| hermite_values(max_order, x)).collect();

    let indices = multi_indices(dim, max_order);
    let rows: Vec<(MultiIndex, Vec<f64>)> = indices
        .into_par_iter()
        .map(|index| {
            let l = index.as_slice();
            let mut acc = vec![0.0; dim];
            let mut pos = vec![0; dim];
            for (p, wy) in weighted.iter().enumerate() {
                grid.positions(p, &mut pos);
                let mut prod = 1.0;
                for (coord, &j) in pos.iter().enumerate() {
                    prod *= h[j][l[coord]];
                }
                for k in 0..dim {
                    acc[k] += wy[k] * prod;
                }
            }
            let norm = index.factorial_product();
            acc.iter_mut().for_each(|v| *v /= norm);
            (index, acc)
        })
        .collect();

    Ok(HermiteCoefficientTable {
        dim,
        max_order,
        coeffs: rows.into_iter().collect(),
    })
}

/// Default rank tolerance `1e-8 (1 + ||G||_{L^2})`.
pub fn default_rank_tol(table: &HermiteCoefficientTable) -> f64 {
    1e-8 * (1.0 + table.c_g().sqrt())
}

/// Smallest order `r >= 1` carrying a coefficient above `tol`.
pub fn hermite_rank(table: &HermiteCoefficientTable, tol: f64) -> Result<usize> {
    let mean = table.mean_magnitude();
    if mean > tol {
        return Err(Error::Contract(format!(
            "functional is not mean-zero (order-0 coefficient {mean:e} exceeds {tol:e})"
        )));
    }
    table
        .iter()
        .filter(|(l, c)| l.order() >= 1 && c.iter().any(|v| v.abs() > tol))
        .map(|(l, _)| l.order())
        .min()
        .ok_or(Error::RankUndetermined {
            max_order: table.max_order,
        })
}

/// Built-in functionals, addressable by name from configuration files.
pub fn builtin_table(name: &str, dim: usize) -> Result<HermiteCoefficientTable> {
    match name {
        "identity" => Ok(HermiteCoefficientTable::identity(dim)),
        // identity + 0.5 (H_3(x_1), H_2(x_1) H_1(x_2))
        "identity-plus-tail" => {
            if dim != 2 {
                return Err(Error::Input("identity-plus-tail is defined for dim = 2".into()));
            }
            let mut t = HermiteCoefficientTable::identity(2);
            t.max_order = 3;
            t.add(MultiIndex::new(vec![3, 0]), 0, 0.5)?;
            t.add(MultiIndex::new(vec![2, 1]), 1, 0.5)?;
            Ok(t)
        }
        // ((x_1)^2 - 1, x_1 x_2)
        "centered-square" => {
            if dim != 2 {
                return Err(Error::Input("centered-square is defined for dim = 2".into()));
            }
            HermiteCoefficientTable::new(2, 2)
                .with(&[2, 0], 0, 1.0)?
                .with(&[1, 1], 1, 1.0)
        }
        other => Err(Error::Input(format!("unknown builtin functional '{other}'"))),
    }
}
