//! Simulation models, seeded Monte Carlo replicates and bias sweeps.
//!
//! Randomness: every replicate draws from its own ChaCha8 stream. The key
//! is derived from the master seed (`seed_from_u64`) and the 64-bit stream
//! id is `4·replicate + role`, so a replicate's draws never depend on which
//! other replicates ran or in what order. Normal variates use the ziggurat
//! sampler of `rand_distr::StandardNormal`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{standardize, Dataset, StandardizedDataset};
use crate::error::{Result, SdrError};
use crate::estimators::{kernel, leading_direction, lambda_corrected, lambda_n, v_n, Method};
use crate::linalg::{norm, Matrix, SymMatrix, DEFAULT_REL_FLOOR};
use crate::metrics::r2_single;
use crate::slicing::{slice_equal_count, slice_stats, Divisor};

/// Which random stream of a replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    Predictors = 0,
    Noise = 1,
}

pub fn substream(seed: u64, replicate: usize, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replicate as u64) * 4 + role as u64);
    rng
}

fn normals(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// One of the five single-index regression models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub id: u8,
    pub p: usize,
    pub beta: Vec<f64>,
}

impl ModelSpec {
    /// Model `id` in dimension `p` with `β = e₁`.
    pub fn new(id: u8, p: usize) -> Result<Self> {
        let mut beta = vec![0.0; p];
        if p > 0 {
            beta[0] = 1.0;
        }
        Self::with_beta(id, beta)
    }

    pub fn with_beta(id: u8, beta: Vec<f64>) -> Result<Self> {
        if !(1..=5).contains(&id) {
            return Err(SdrError::InvalidConfig(format!("model id {id} is not in 1..=5")));
        }
        if beta.is_empty() || (norm(&beta) - 1.0).abs() > 1e-12 {
            return Err(SdrError::InvalidConfig("β must be a unit vector".into()));
        }
        Ok(Self {
            id,
            p: beta.len(),
            beta,
        })
    }

    /// Response for index `u = βᵀz` and noise `e`.
    pub fn response(&self, u: f64, e: f64) -> f64 {
        match self.id {
            1 => u.powi(3) + e,
            2 => u * u + e,
            3 => u * e,
            4 => u.powi(3) + u * e,
            5 => u.cos() + e,
            _ => unreachable!("validated on construction"),
        }
    }

    pub fn true_basis(&self) -> Matrix {
        Matrix::new(self.p, 1, self.beta.clone()).expect("p×1")
    }
}

/// Builds a dataset from given predictor rows and noise.
pub fn gen_model_from(spec: &ModelSpec, x: Matrix, noise: &[f64]) -> Result<Dataset> {
    if x.cols() != spec.p || x.rows() != noise.len() {
        return Err(SdrError::DimensionMismatch(format!(
            "{}x{} predictors and {} noise draws for a p = {} model",
            x.rows(),
            x.cols(),
            noise.len(),
            spec.p
        )));
    }
    let y = (0..x.rows())
        .map(|i| spec.response(crate::linalg::dot(x.row(i), &spec.beta), noise[i]))
        .collect();
    Dataset::new(x, y)
}

/// Draws `x ~ N(0, Iₚ)` and `ε ~ N(0, 1)` from the replicate's substreams.
pub fn gen_model(spec: &ModelSpec, n: usize, seed: u64, replicate: usize) -> Result<Dataset> {
    let mut xr = substream(seed, replicate, StreamRole::Predictors);
    let mut er = substream(seed, replicate, StreamRole::Noise);
    let x = Matrix::new(n, spec.p, normals(&mut xr, n * spec.p))?;
    let eps = normals(&mut er, n);
    gen_model_from(spec, x, &eps)
}

fn prepare(d: &Dataset, re_standardize: bool) -> Result<StandardizedDataset> {
    if re_standardize {
        standardize(d, DEFAULT_REL_FLOOR)
    } else {
        Ok(StandardizedDataset::known_standard(d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub slices: usize,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Re-estimate mean and covariance and whiten (`ẑ`); otherwise the
    /// generator's known `N(0, Iₚ)` coordinates are used directly.
    pub standardize: bool,
    pub divisor: Divisor,
}

impl SimConfig {
    pub fn new(model: ModelSpec, n: usize, slices: usize, reps: usize, seed: u64) -> Self {
        Self {
            model,
            n,
            slices,
            reps,
            seed,
            methods: vec![Method::Save, Method::Sir, Method::Csave],
            standardize: false,
            divisor: Divisor::CountMinusOne,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(SdrError::InvalidConfig("reps must be at least 1".into()));
        }
        if self.slices < 1 || self.n < 2 * self.slices {
            return Err(SdrError::TooManySlices {
                n: self.n,
                slices: self.slices,
            });
        }
        if self.methods.is_empty() {
            return Err(SdrError::InvalidConfig("no methods requested".into()));
        }
        if let Some(m) = self
            .methods
            .iter()
            .find(|m| !matches!(m, Method::Sir | Method::Save | Method::Csave))
        {
            return Err(SdrError::InvalidConfig(format!("{m} is not a direction estimator")));
        }
        if self.standardize && self.n <= self.model.p {
            return Err(SdrError::InsufficientData {
                n: self.n,
                p: self.model.p,
            });
        }
        Ok(())
    }
}

/// Order statistics of a replicate sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub reps: usize,
}

/// Linearly interpolated sample quantile of sorted data (`q` in [0, 1]).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "summary of an empty sample");
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            median: quantile_sorted(&s, 0.5),
            q1: quantile_sorted(&s, 0.25),
            q3: quantile_sorted(&s, 0.75),
            min: s[0],
            max: s[s.len() - 1],
            reps: s.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: Method,
    /// R² per replicate, in replicate order.
    pub values: Vec<f64>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub config: SimConfig,
    pub results: Vec<MethodResult>,
}

impl McReport {
    pub fn result(&self, method: Method) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }

    pub fn median(&self, method: Method) -> Option<f64> {
        self.result(method).map(|r| r.summary.median)
    }
}

/// R² of each requested method's leading direction for one replicate.
pub fn run_replicate(cfg: &SimConfig, replicate: usize) -> Result<Vec<f64>> {
    let d = gen_model(&cfg.model, cfg.n, cfg.seed, replicate)?;
    let sd = prepare(&d, cfg.standardize)?;
    let a = slice_equal_count(&sd.y, cfg.slices)?;
    let truth = cfg.model.true_basis();
    cfg.methods
        .iter()
        .map(|&m| {
            let k = kernel(m, &sd.z, &a, cfg.divisor)?;
            r2_single(&leading_direction(&k)?, &truth, None)
        })
        .collect()
}

/// Runs all replicates (in parallel on the current rayon pool) and
/// summarizes per method. Output does not depend on scheduling.
pub fn run_mc(cfg: &SimConfig) -> Result<McReport> {
    cfg.validate()?;
    let per_rep: Vec<Vec<f64>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            run_replicate(cfg, r).map_err(|e| SdrError::Replicate {
                replicate: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let results = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let values: Vec<f64> = per_rep.iter().map(|row| row[j]).collect();
            MethodResult {
                method,
                summary: Summary::from_values(&values),
                values,
            }
        })
        .collect();
    Ok(McReport {
        config: cfg.clone(),
        results,
    })
}

/// One cell of a model × slice-count grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub model: u8,
    pub method: Method,
    pub slices: usize,
    pub summary: Summary,
}

/// Runs every (model, H) pair and lays rows out model by model, method by
/// method (in the order given), then by H.
pub fn run_grid(
    models: &[ModelSpec],
    slice_grid: &[usize],
    n: usize,
    reps: usize,
    seed: u64,
    methods: &[Method],
    re_standardize: bool,
) -> Result<Vec<GridRow>> {
    if models.is_empty() || slice_grid.is_empty() {
        return Err(SdrError::InvalidConfig("empty model or slice grid".into()));
    }
    let mut rows = Vec::new();
    for model in models {
        let reports = slice_grid
            .iter()
            .map(|&h| {
                let mut cfg = SimConfig::new(model.clone(), n, h, reps, seed);
                cfg.methods = methods.to_vec();
                cfg.standardize = re_standardize;
                run_mc(&cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        for &method in methods {
            for (report, &h) in reports.iter().zip(slice_grid) {
                rows.push(GridRow {
                    model: model.id,
                    method,
                    slices: h,
                    summary: report.result(method).expect("requested").summary.clone(),
                });
            }
        }
    }
    Ok(rows)
}

/// What a bias sweep samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepTarget {
    /// `z ~ N(0, Iₚ)` independent of `y ~ N(0, 1)`, so `Λ = Iₚ`.
    Null { p: usize },
    Model(ModelSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub target: SweepTarget,
    pub n_grid: Vec<usize>,
    pub c_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub standardize: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.c_grid.is_empty() {
            return Err(SdrError::InvalidConfig("sweep grids must be non-empty".into()));
        }
        if self.reps == 0 {
            return Err(SdrError::InvalidConfig("reps must be at least 1".into()));
        }
        if let SweepTarget::Null { p } = self.target {
            if !(1..=3).contains(&p) {
                return Err(SdrError::InvalidConfig(format!(
                    "null sweep supports p in 1..=3, got {p}"
                )));
            }
        }
        for &n in &self.n_grid {
            for &c in &self.c_grid {
                if c < 2 {
                    return Err(SdrError::InvalidSliceSize(c));
                }
                if n / c < 2 {
                    return Err(SdrError::DegenerateDesign(format!(
                        "n = {n} with c = {c} leaves fewer than 2 slices"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Error statistics of `Λₙ` and `Λ̃ₙ` against `Λ = Iₚ`. Errors are Frobenius
/// norms (absolute values when p = 1); means of matrices are reported as
/// `trace/p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullStats {
    pub mean_lambda: f64,
    pub mean_lambda_corrected: f64,
    pub mean_v: f64,
    pub mean_err_raw: f64,
    pub mean_err_corrected: f64,
    pub median_err_raw: f64,
    pub median_err_corrected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSweepStats {
    pub median_r2_save: f64,
    pub median_r2_csave: f64,
    pub median_r2_sir: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SweepStats {
    Null(NullStats),
    Model(ModelSweepStats),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    /// Requested slice size.
    pub c: usize,
    pub slices: usize,
    pub reps: usize,
    #[serde(flatten)]
    pub stats: SweepStats,
}

impl SweepRow {
    pub fn null_stats(&self) -> Option<&NullStats> {
        match &self.stats {
            SweepStats::Null(s) => Some(s),
            SweepStats::Model(_) => None,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    Summary::from_values(v).median
}

/// `(Λₙ, Λ̃ₙ, Vₙ)` for one null-model replicate.
pub fn null_replicate(
    p: usize,
    n: usize,
    c: usize,
    seed: u64,
    replicate: usize,
    re_standardize: bool,
) -> Result<(SymMatrix, SymMatrix, SymMatrix)> {
    let mut xr = substream(seed, replicate, StreamRole::Predictors);
    let mut yr = substream(seed, replicate, StreamRole::Noise);
    let x = Matrix::new(n, p, normals(&mut xr, n * p))?;
    let d = Dataset::new(x, normals(&mut yr, n))?;
    let sd = prepare(&d, re_standardize)?;
    let a = slice_equal_count(&sd.y, n / c)?;
    let stats = slice_stats(&sd.z, &a, Divisor::CountMinusOne)?;
    let lam = lambda_n(&stats)?;
    let v = v_n(&sd.z, &a)?;
    let corrected = lambda_corrected(&lam, &v, a.nominal_size())?;
    Ok((lam.matrix, corrected.matrix, v.matrix))
}

/// Tabulates how the raw and corrected `Λ` estimators (null target) or the
/// R² of SAVE/CSAVE/SIR (model target) move across `n` and `c`.
pub fn bias_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.n_grid {
        for &c in &cfg.c_grid {
            let slices = n / c;
            let tag = |e: SdrError, r: usize| SdrError::Replicate {
                replicate: r,
                source: Box::new(e),
            };
            let stats = match &cfg.target {
                SweepTarget::Null { p } => {
                    let p = *p;
                    let eye = SymMatrix::identity(p);
                    let reps: Vec<(SymMatrix, SymMatrix, SymMatrix)> = (0..cfg.reps)
                        .into_par_iter()
                        .map(|r| null_replicate(p, n, c, cfg.seed, r, cfg.standardize).map_err(|e| tag(e, r)))
                        .collect::<Result<_>>()?;
                    let tr = |m: &SymMatrix| m.trace() / p as f64;
                    let err_raw: Vec<f64> = reps.iter().map(|(l, _, _)| l.sub(&eye).frobenius_norm()).collect();
                    let err_cor: Vec<f64> = reps.iter().map(|(_, l, _)| l.sub(&eye).frobenius_norm()).collect();
                    SweepStats::Null(NullStats {
                        mean_lambda: mean(&reps.iter().map(|(l, _, _)| tr(l)).collect::<Vec<_>>()),
                        mean_lambda_corrected: mean(&reps.iter().map(|(_, l, _)| tr(l)).collect::<Vec<_>>()),
                        mean_v: mean(&reps.iter().map(|(_, _, v)| tr(v)).collect::<Vec<_>>()),
                        mean_err_raw: mean(&err_raw),
                        mean_err_corrected: mean(&err_cor),
                        median_err_raw: median(&err_raw),
                        median_err_corrected: median(&err_cor),
                    })
                }
                SweepTarget::Model(spec) => {
                    let mut sim = SimConfig::new(spec.clone(), n, slices, cfg.reps, cfg.seed);
                    sim.standardize = cfg.standardize;
                    let report = run_mc(&sim)?;
                    let med = |m| report.median(m).expect("default methods");
                    SweepStats::Model(ModelSweepStats {
                        median_r2_save: med(Method::Save),
                        median_r2_csave: med(Method::Csave),
                        median_r2_sir: med(Method::Sir),
                    })
                }
            };
            rows.push(SweepRow {
                n,
                c,
                slices,
                reps: cfg.reps,
                stats,
            });
        }
    }
    Ok(rows)
}
