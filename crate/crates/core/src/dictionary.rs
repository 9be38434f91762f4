//! NARX regressors and their polynomial basis expansion.
//!
//! A regressor `z_k` stacks the current and lagged outputs followed by the
//! current and lagged inputs, channel by channel:
//!
//! ```text
//! z_k = (y1[k], .., y1[k-n_a], .., u1[k], .., u1[k-n_b], u2[k], ..)
//! ```
//!
//! Each basis term is a monomial over the entries of `z_k`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of dictionary terms.
pub const DEFAULT_MAX_TERMS: usize = 500;
/// Largest supported monomial degree.
pub const MAX_DEGREE: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarxConfig {
    /// Output lags beyond the current sample.
    pub n_a: usize,
    /// Input lags beyond the current sample.
    pub n_b: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub degree: u32,
    pub include_bias: bool,
}

impl NarxConfig {
    /// Single-output model with the lag structure `[y_k, y_{k-1}, y_{k-2}, u_k]`.
    pub fn miso(n_u: usize) -> Self {
        Self { n_a: 2, n_b: 0, n_u, n_y: 1, degree: 2, include_bias: true }
    }

    pub fn n_z(&self) -> usize {
        (self.n_a + 1) * self.n_y + (self.n_b + 1) * self.n_u
    }

    pub fn max_lag(&self) -> usize {
        self.n_a.max(self.n_b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 || self.degree > MAX_DEGREE {
            return Err(Error::Config(format!("degree must be in 1..={MAX_DEGREE}, got {}", self.degree)));
        }
        if self.n_y == 0 {
            return Err(Error::Config("at least one output channel is required".into()));
        }
        Ok(())
    }

    /// Display names of the regressor entries, in `z` order.
    pub fn regressor_names(&self) -> Vec<String> {
        let lag = |j: usize| if j == 0 { "[k]".to_string() } else { format!("[k-{j}]") };
        let mut names = Vec::with_capacity(self.n_z());
        for c in 0..self.n_y {
            let base = if self.n_y == 1 { "y".to_string() } else { format!("y{}", c + 1) };
            names.extend((0..=self.n_a).map(|j| format!("{base}{}", lag(j))));
        }
        for c in 0..self.n_u {
            names.extend((0..=self.n_b).map(|j| format!("u{}{}", c + 1, lag(j))));
        }
        names
    }
}

/// Monomial `∏_j z_j^{e_j}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisTerm {
    pub name: String,
    pub exponents: Vec<u32>,
}

impl BasisTerm {
    pub fn new(exponents: Vec<u32>, regressor_names: &[String]) -> Self {
        let name = term_name(&exponents, regressor_names);
        Self { name, exponents }
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn is_bias(&self) -> bool {
        self.degree() == 0
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(z)
            .filter(|(e, _)| **e > 0)
            .map(|(e, v)| v.powi(*e as i32))
            .product()
    }
}

fn term_name(exponents: &[u32], names: &[String]) -> String {
    let factors: Vec<String> = exponents
        .iter()
        .enumerate()
        .filter(|(_, e)| **e > 0)
        .map(|(j, e)| {
            let base = names.get(j).cloned().unwrap_or_else(|| format!("z{}", j + 1));
            if *e == 1 {
                base
            } else {
                format!("{base}^{e}")
            }
        })
        .collect();
    if factors.is_empty() {
        "1".to_string()
    } else {
        factors.join("*")
    }
}

/// All monomials of total degree `1..=degree` (plus the bias when enabled),
/// ordered by degree and then lexicographically by variable index.
pub fn enumerate_terms(cfg: &NarxConfig) -> Result<Vec<BasisTerm>> {
    enumerate_terms_capped(cfg, DEFAULT_MAX_TERMS)
}

pub fn enumerate_terms_capped(cfg: &NarxConfig, cap: usize) -> Result<Vec<BasisTerm>> {
    cfg.validate()?;
    let n_z = cfg.n_z();
    let count = term_count(n_z, cfg.degree, cfg.include_bias);
    if count > cap {
        return Err(Error::DictionaryTooLarge { terms: count, cap });
    }
    let names = cfg.regressor_names();
    let mut terms = Vec::with_capacity(count);
    if cfg.include_bias {
        terms.push(BasisTerm::new(vec![0; n_z], &names));
    }
    for degree in 1..=cfg.degree as usize {
        if n_z == 0 {
            break;
        }
        // non-decreasing index tuples i_1 <= .. <= i_d in lexicographic order
        let mut idx = vec![0usize; degree];
        loop {
            let mut exps = vec![0u32; n_z];
            for &i in &idx {
                exps[i] += 1;
            }
            terms.push(BasisTerm::new(exps, &names));
            let Some(pos) = (0..degree).rev().find(|&p| idx[p] + 1 < n_z) else { break };
            let next = idx[pos] + 1;
            for slot in &mut idx[pos..] {
                *slot = next;
            }
        }
    }
    Ok(terms)
}

/// `C(n_z + degree, degree)` with the bias, one less without it.
pub fn term_count(n_z: usize, degree: u32, include_bias: bool) -> usize {
    let d = degree as usize;
    let mut c: u128 = 1;
    for i in 1..=d {
        c = c * (n_z + i) as u128 / i as u128;
    }
    let c = usize::try_from(c).unwrap_or(usize::MAX);
    if include_bias {
        c
    } else {
        c - 1
    }
}

/// Row `Φ_k` of the design matrix.
pub fn expand(z: &[f64], terms: &[BasisTerm]) -> Result<Vec<f64>> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "regressor".into() });
    }
    let row: Vec<f64> = terms.iter().map(|t| t.eval(z)).collect();
    if let Some(m) = row.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: format!("basis term {}", terms[m].name) });
    }
    Ok(row)
}

/// Training pairs `(y_{k+1}, z_k)` for every `k` with a full lag history.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSet {
    pub targets: Vec<f64>,
    pub regressors: Vec<Vec<f64>>,
    /// Time index `k` of each regressor.
    pub times: Vec<usize>,
}

/// Builds the regressor sequence from channel-major series: `y[c][k]`,
/// `u[c][k]`. The target is output channel `target`.
pub fn build_regressors(
    y: &[Vec<f64>],
    u: &[Vec<f64>],
    cfg: &NarxConfig,
    target: usize,
) -> Result<RegressorSet> {
    if y.len() != cfg.n_y || u.len() != cfg.n_u {
        return Err(Error::Dimension(format!(
            "expected {} output and {} input channels, got {} and {}",
            cfg.n_y,
            cfg.n_u,
            y.len(),
            u.len()
        )));
    }
    if target >= cfg.n_y {
        return Err(Error::Dimension(format!("target channel {target} out of range")));
    }
    let len = y[0].len();
    if y.iter().chain(u).any(|s| s.len() != len) {
        return Err(Error::Dimension("all series must have equal length".into()));
    }
    let required = cfg.max_lag() + 2;
    if len < required {
        return Err(Error::SeriesTooShort { len, required });
    }
    if y.iter().chain(u).flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("series contains NaN or infinite samples".into()));
    }

    let first = cfg.max_lag();
    let n = len - first - 1;
    let mut set = RegressorSet {
        targets: Vec::with_capacity(n),
        regressors: Vec::with_capacity(n),
        times: Vec::with_capacity(n),
    };
    for k in first..len - 1 {
        let mut z = Vec::with_capacity(cfg.n_z());
        for ch in y {
            z.extend((0..=cfg.n_a).map(|j| ch[k - j]));
        }
        for ch in u {
            z.extend((0..=cfg.n_b).map(|j| ch[k - j]));
        }
        set.targets.push(y[target][k + 1]);
        set.regressors.push(z);
        set.times.push(k);
    }
    Ok(set)
}

/// How regressor entries are transformed before expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    /// Zero mean, unit variance.
    #[default]
    Affine,
    /// Unit variance without shifting, so every monomial stays proportional
    /// to its raw counterpart and sparsity in the raw basis is preserved.
    ScaleOnly,
    None,
}

/// Per-entry affine map `z̃ = (z - mean) / scale` fitted on training regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n_z: usize) -> Self {
        Self { mean: vec![0.0; n_z], scale: vec![1.0; n_z] }
    }

    /// Zero-mean, unit-variance scaling; constant entries keep unit scale.
    pub fn fit(regressors: &[Vec<f64>]) -> Result<Self> {
        Self::fit_with(regressors, Scaling::Affine)
    }

    pub fn fit_with(regressors: &[Vec<f64>], scaling: Scaling) -> Result<Self> {
        let n = regressors.len();
        let Some(first) = regressors.first() else {
            return Err(Error::InvalidData("cannot standardize an empty regressor set".into()));
        };
        let n_z = first.len();
        let mut mean = vec![0.0; n_z];
        for z in regressors {
            for (m, v) in mean.iter_mut().zip(z) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; n_z];
        for z in regressors {
            for j in 0..n_z {
                var[j] += (z[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let s = (v / n as f64).sqrt();
                if s > 1e-12 * m.abs().max(1.0) {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        match scaling {
            Scaling::Affine => Ok(Self { mean, scale }),
            Scaling::ScaleOnly => Ok(Self { mean: vec![0.0; n_z], scale }),
            Scaling::None => Ok(Self::identity(n_z)),
        }
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn apply_into(&self, z: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (z[j] - self.mean[j]) / self.scale[j];
        }
    }
}

/// Dense `N x M` matrix of basis evaluations.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub column_names: Vec<String>,
}

impl DesignMatrix {
    pub fn build(regressors: &[Vec<f64>], terms: &[BasisTerm]) -> Result<Self> {
        let mut values = DMatrix::zeros(regressors.len(), terms.len());
        for (k, z) in regressors.iter().enumerate() {
            let row = expand(z, terms)?;
            for (m, v) in row.into_iter().enumerate() {
                values[(k, m)] = v;
            }
        }
        Ok(Self { values, column_names: terms.iter().map(|t| t.name.clone()).collect() })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }
}
