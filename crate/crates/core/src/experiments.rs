//! Seeded Monte Carlo harness: concentration frequencies against bound curves,
//! eigenvalue boxplot statistics and the perturbation oracle suite.
//!
//! Every trial draws from its own subseed, so results do not depend on how
//! trials are scheduled across worker threads.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{self, LabelVector, ThetaMode};
use crate::bounds::{self, BoundContext, Statistic, ThetaSource, TheoremId};
use crate::dataset::{self, SampleSet};
use crate::error::{Error, Result};
use crate::kernel::{self, Geometry, KernelSpec, Scaling};
use crate::randmat;
use crate::spectral::{self, Spectrum};
use crate::stats::{self, FiveNumber};

pub const DEFAULT_GRID_POINTS: usize = 40;
pub const MIN_ORACLE_TRIALS: usize = 100;

/// 40 log-spaced points from `1e-4` to `1`.
pub fn default_epsilons() -> Vec<f64> {
    let k = DEFAULT_GRID_POINTS - 1;
    (0..=k)
        .map(|j| 10f64.powf(-4.0 + 4.0 * j as f64 / k as f64))
        .collect()
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `t`: `splitmix64(master ⊕ splitmix64(t))`.
pub fn subseed(master: u64, t: usize) -> u64 {
    splitmix64(master ^ splitmix64(t as u64))
}

pub const SUBSEED_RULE: &str = "splitmix64(seed xor splitmix64(trial))";

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::Config("workers must be at least 1".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Config(format!("thread pool: {e}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// i.i.d. `𝒩(0, I_p)`
    Gaussian { p: usize },
}

impl Generator {
    pub fn p(&self) -> usize {
        match *self {
            Generator::Gaussian { p } => p,
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleSet> {
        match *self {
            Generator::Gaussian { p } => dataset::gen_gaussian(n, p, seed),
        }
    }
}

/// A statistic tracked across trials: a spectral statistic or the alignment
/// with synthetic labels `y_i = sign(x_i1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Tracked {
    Spectral(Statistic),
    Kta,
}

impl Tracked {
    pub fn kind(&self) -> &'static str {
        match self {
            Tracked::Spectral(s) => s.kind(),
            Tracked::Kta => "kta",
        }
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            Tracked::Spectral(s) => Some(s.label_index()),
            Tracked::Kta => None,
        }
    }

    fn applies(&self, theorem: TheoremId, geometry: Geometry) -> bool {
        match self {
            Tracked::Spectral(s) => {
                bounds::theorems_for(s, geometry).contains(&theorem)
                    || (matches!(s, Statistic::Eigenvalue(_)) && theorem == TheoremId::SpectralGapScaled)
            }
            Tracked::Kta => matches!(
                theorem,
                TheoremId::KtaTheta
                    | TheoremId::KtaSpectral
                    | TheoremId::KtaSpectralBdiff
                    | TheoremId::KtaSpectralApprox
            ),
        }
    }
}

impl fmt::Display for Tracked {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tracked::Spectral(s) => s.fmt(f),
            Tracked::Kta => f.write_str("kta"),
        }
    }
}

impl FromStr for Tracked {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "kta" {
            return Ok(Tracked::Kta);
        }
        match s.parse()? {
            st @ (Statistic::Eigenvalue(_) | Statistic::TopkSum(_) | Statistic::TailSum(_)) => {
                Ok(Tracked::Spectral(st))
            }
            other => Err(Error::Config(format!(
                "statistic {other} is not supported in simulations (use eig, topk, tail or kta)"
            ))),
        }
    }
}

impl TryFrom<String> for Tracked {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Tracked> for String {
    fn from(t: Tracked) -> String {
        t.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub generator: Generator,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub centered: bool,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    pub statistics: Vec<Tracked>,
    #[serde(default)]
    pub bounds: Vec<TheoremId>,
    #[serde(default)]
    pub theta_mode: ThetaMode,
    /// Forces every trial onto this seed (identical trials).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_subseed: Option<u64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.trials < 2 {
            return Err(Error::Config(format!("trials must be at least 2, got {}", self.trials)));
        }
        if self.n < 2 || self.generator.p() < 1 {
            return Err(Error::Config(format!(
                "need n >= 2 and p >= 1 (got n={}, p={})",
                self.n,
                self.generator.p()
            )));
        }
        bounds::validate_epsilons(&self.epsilons)?;
        if self.statistics.is_empty() {
            return Err(Error::Config("no statistics requested".into()));
        }
        for st in &self.statistics {
            let ok = match *st {
                Tracked::Spectral(Statistic::Eigenvalue(i)) => i < self.n,
                Tracked::Spectral(Statistic::TopkSum(k)) => k >= 1 && k < self.n,
                Tracked::Spectral(Statistic::TailSum(k)) => k >= 1 && k <= self.n,
                Tracked::Kta => self.n >= 3,
                Tracked::Spectral(_) => false,
            };
            if !ok {
                return Err(Error::Config(format!("statistic {st} is out of range for n = {}", self.n)));
            }
        }
        let geometry = self.kernel.geometry();
        for th in &self.bounds {
            if !self.statistics.iter().any(|s| s.applies(*th, geometry)) {
                return Err(Error::Config(format!(
                    "bound {th} applies to none of the requested statistics"
                )));
            }
        }
        Ok(())
    }

    pub fn eigenvalue_orders(orders: impl IntoIterator<Item = usize>) -> Vec<Tracked> {
        orders
            .into_iter()
            .map(|i| Tracked::Spectral(Statistic::Eigenvalue(i - 1)))
            .collect()
    }
}

pub const PRESETS: [&str; 3] = ["example1-fig2-top", "example1-fig2-bottom", "fig1-boxplot"];

fn gaussian_config(name: &str, p: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        generator: Generator::Gaussian { p },
        n: 100,
        trials: 1000,
        seed,
        kernel: KernelSpec::gaussian(1.0).expect("sigma = 1 is valid"),
        centered: false,
        epsilons: default_epsilons(),
        statistics: ExperimentConfig::eigenvalue_orders(1..=3),
        bounds: vec![],
        theta_mode: ThetaMode::default(),
        fixed_subseed: None,
    }
}

/// Built-in configurations; `example1-fig2-bottom` expands to `p = 2` and `p = 5`.
pub fn preset(name: &str, seed: u64) -> Result<Vec<ExperimentConfig>> {
    match name {
        "example1-fig2-top" => {
            let mut c = gaussian_config("example1-fig2-top", 1, seed);
            c.bounds = vec![TheoremId::SpectralGap, TheoremId::SpectralGapScaled, TheoremId::UniformDiag];
            Ok(vec![c])
        }
        "example1-fig2-bottom" => Ok([2, 5]
            .into_iter()
            .map(|p| {
                let mut c = gaussian_config(&format!("example1-fig2-bottom-p{p}"), p, seed);
                c.bounds = vec![TheoremId::CovDistance, TheoremId::CovConservative, TheoremId::SpectralGap];
                c
            })
            .collect()),
        "fig1-boxplot" => {
            let mut c = gaussian_config("fig1-boxplot", 5, seed);
            c.statistics = ExperimentConfig::eigenvalue_orders(1..=15);
            Ok(vec![c])
        }
        other => Err(Error::Config(format!(
            "unknown preset {other:?}; available: {}",
            PRESETS.join(", ")
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsPoint {
    pub epsilon: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub epsilon: f64,
    pub mean: f64,
    pub stderr: f64,
    /// 10th percentile of the per-trial right-hand side.
    pub p10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSeries {
    pub theorem: TheoremId,
    /// Trials whose inputs were degenerate; excluded from `points`.
    pub flagged: usize,
    pub first_error: Option<String>,
    pub points: Vec<BoundPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticResult {
    pub statistic: Tracked,
    pub values: Vec<f64>,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub empirical_freq: Vec<EpsPoint>,
    pub bounds: Vec<BoundSeries>,
    pub boxplot: FiveNumber,
    pub iqr: f64,
    /// Mean of `s_i − s_{i+1}` for eigenvalue statistics.
    pub mean_gap: Option<f64>,
}

impl StatisticResult {
    pub fn series(&self, theorem: TheoremId) -> Option<&BoundSeries> {
        self.bounds.iter().find(|b| b.theorem == theorem)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub subseed_rule: String,
    pub subseeds: Vec<u64>,
    pub statistics: Vec<StatisticResult>,
    /// Spearman correlation of mean gap against IQR over eigenvalue statistics.
    pub spearman_gap_iqr: Option<f64>,
}

struct KtaTrial {
    n: usize,
    c: std::result::Result<f64, String>,
    d: std::result::Result<f64, String>,
    d_approx: std::result::Result<f64, String>,
}

impl KtaTrial {
    fn bound(&self, theorem: TheoremId, eps: f64) -> std::result::Result<f64, String> {
        match theorem {
            TheoremId::KtaTheta => self.c.clone().map(|c| alignment::kta_bound_jl(self.n, c, eps)),
            TheoremId::KtaSpectral => self.d.clone().map(|d| alignment::kta_bound_new(d, eps)),
            TheoremId::KtaSpectralBdiff => self.d.clone().map(|d| alignment::kta_bound_bdiff(self.n, d, eps)),
            TheoremId::KtaSpectralApprox => self.d_approx.clone().map(|d| alignment::kta_bound_new(d, eps)),
            other => Err(format!("{other} is not an alignment bound")),
        }
    }
}

struct Trial {
    values: Vec<f64>,
    gaps: Vec<Option<f64>>,
    ctx: Option<BoundContext>,
    kta: Option<KtaTrial>,
}

fn synthetic_labels(s: &SampleSet) -> Result<LabelVector> {
    LabelVector::new(
        (0..s.n())
            .map(|i| if s.matrix()[(i, 0)] >= 0.0 { 1.0 } else { -1.0 })
            .collect(),
    )
}

fn run_trial(cfg: &ExperimentConfig, seed: u64) -> Result<Trial> {
    let s = cfg.generator.sample(cfg.n, seed)?;
    let g = kernel::gram(&s, &cfg.kernel, Scaling::Raw)?;
    let n = cfg.n as f64;
    let geometry = cfg.kernel.geometry();
    let spectral_bounds = cfg.bounds.iter().any(|th| {
        cfg.statistics
            .iter()
            .any(|st| matches!(st, Tracked::Spectral(_)) && st.applies(*th, geometry))
    });
    let ev = spectral::eigenvalues_sym(&g.entries);
    let ctx = if spectral_bounds {
        let theta = if cfg.bounds.contains(&TheoremId::ThetaLambda1) {
            ThetaSource::Estimate(cfg.theta_mode)
        } else {
            ThetaSource::Skip
        };
        Some(BoundContext::from_gram(&s, &g, cfg.centered, theta, false)?)
    } else {
        None
    };
    let mut kta = None;
    let mut values = Vec::with_capacity(cfg.statistics.len());
    let mut gaps = Vec::with_capacity(cfg.statistics.len());
    for st in &cfg.statistics {
        let (v, gap) = match *st {
            Tracked::Spectral(Statistic::Eigenvalue(i)) => {
                (ev[i] / n, ev.get(i + 1).map(|next| (ev[i] - next) / n))
            }
            Tracked::Spectral(Statistic::TopkSum(k)) => (ev[..k].iter().sum::<f64>() / n, None),
            Tracked::Spectral(Statistic::TailSum(k)) => (ev[k - 1..].iter().sum::<f64>() / n, None),
            Tracked::Spectral(other) => {
                return Err(Error::Config(format!("statistic {other} is not supported in simulations")))
            }
            Tracked::Kta => {
                let y = synthetic_labels(&s)?;
                let a = alignment::kta(&g, &y)?;
                let frob = g.entries.norm();
                let l = alignment::middle_norm(&ev);
                let c = if cfg.bounds.contains(&TheoremId::KtaTheta) {
                    alignment::theta(&g, cfg.theta_mode)
                        .and_then(|t| alignment::c_theta(a, t, n, cfg.n, frob))
                        .map_err(|e| e.to_string())
                } else {
                    Err("kta_theta not requested".into())
                };
                kta = Some(KtaTrial {
                    n: cfg.n,
                    c,
                    d: alignment::kta_difference(a, cfg.n, frob / l, l).map_err(|e| e.to_string()),
                    d_approx: alignment::kta_difference(a, cfg.n, ev[0] / ev[1], l)
                        .map_err(|e| e.to_string()),
                });
                (a, None)
            }
        };
        values.push(v);
        gaps.push(gap);
    }
    Ok(Trial { values, gaps, ctx, kta })
}

fn trial_bound(t: &Trial, st: &Tracked, theorem: TheoremId, eps: f64) -> std::result::Result<f64, String> {
    match st {
        Tracked::Spectral(s) => {
            let ctx = t.ctx.as_ref().ok_or("bound context not computed")?;
            bounds::evaluate(ctx, s, theorem, eps).map_err(|e| e.to_string())
        }
        Tracked::Kta => t.kta.as_ref().ok_or("alignment not computed")?.bound(theorem, eps),
    }
}

/// `(1/T)·#{t : |s_t − mean| > ε}` for each `ε`, with binomial standard error.
pub fn empirical_frequencies(values: &[f64], mean: f64, epsilons: &[f64]) -> Vec<EpsPoint> {
    let t = values.len() as f64;
    epsilons
        .iter()
        .map(|&eps| {
            let hits = values.iter().filter(|v| (*v - mean).abs() > eps).count();
            let f = hits as f64 / t;
            EpsPoint {
                epsilon: eps,
                value: f,
                stderr: (f * (1.0 - f) / t).sqrt(),
            }
        })
        .collect()
}

fn bound_series(cfg: &ExperimentConfig, trials: &[Trial], st: &Tracked, theorem: TheoremId) -> BoundSeries {
    let mut flagged = 0;
    let mut first_error = None;
    let mut per_trial: Vec<Vec<f64>> = Vec::with_capacity(trials.len());
    for t in trials {
        match cfg
            .epsilons
            .iter()
            .map(|&eps| trial_bound(t, st, theorem, eps))
            .collect::<std::result::Result<Vec<f64>, String>>()
        {
            Ok(row) => per_trial.push(row),
            Err(e) => {
                flagged += 1;
                first_error.get_or_insert(e);
            }
        }
    }
    let points = if per_trial.is_empty() {
        vec![]
    } else {
        cfg.epsilons
            .iter()
            .enumerate()
            .map(|(j, &eps)| {
                let column: Vec<f64> = per_trial.iter().map(|row| row[j]).collect();
                BoundPoint {
                    epsilon: eps,
                    mean: stats::mean(&column),
                    stderr: stats::std_err(&column),
                    p10: stats::quantile(&column, 0.1),
                }
            })
            .collect()
    };
    BoundSeries {
        theorem,
        flagged,
        first_error,
        points,
    }
}

/// Runs the concentration experiment described by `cfg`.
pub fn run_concentration(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let subseeds: Vec<u64> = (0..cfg.trials)
        .map(|t| cfg.fixed_subseed.unwrap_or_else(|| subseed(cfg.seed, t)))
        .collect();
    let trials: Vec<Trial> = in_pool(workers, || {
        subseeds
            .par_iter()
            .map(|&s| run_trial(cfg, s))
            .collect::<Result<Vec<_>>>()
    })??;
    let geometry = cfg.kernel.geometry();
    let statistics: Vec<StatisticResult> = cfg
        .statistics
        .iter()
        .enumerate()
        .map(|(k, st)| {
            let values: Vec<f64> = trials.iter().map(|t| t.values[k]).collect();
            let mc_mean = stats::mean(&values);
            let boxplot = FiveNumber::of(&values);
            let gaps: Option<Vec<f64>> = trials.iter().map(|t| t.gaps[k]).collect();
            StatisticResult {
                statistic: *st,
                mc_mean,
                mc_stderr: stats::std_err(&values),
                empirical_freq: empirical_frequencies(&values, mc_mean, &cfg.epsilons),
                bounds: cfg
                    .bounds
                    .iter()
                    .filter(|th| st.applies(**th, geometry))
                    .map(|th| bound_series(cfg, &trials, st, *th))
                    .collect(),
                iqr: boxplot.iqr(),
                boxplot,
                mean_gap: gaps.map(|g| stats::mean(&g)),
                values,
            }
        })
        .collect();
    let (gap, iqr): (Vec<f64>, Vec<f64>) = statistics
        .iter()
        .filter_map(|s| s.mean_gap.map(|g| (g, s.iqr)))
        .unzip();
    let spearman_gap_iqr = (gap.len() >= 3).then(|| stats::spearman(&gap, &iqr));
    Ok(ExperimentResult {
        config: cfg.clone(),
        subseed_rule: SUBSEED_RULE.into(),
        subseeds,
        statistics,
        spearman_gap_iqr,
    })
}

/// Five-number summaries, mean gaps and their rank correlation for eigenvalue orders.
pub fn boxplot_stats(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentResult> {
    let mut c = cfg.clone();
    c.bounds.clear();
    run_concentration(&c, workers)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const CSV_HEADER: &str = "statistic,index,epsilon,theorem,kind,value,stderr,flags";

struct CsvRow<'a> {
    statistic: &'a str,
    index: Option<usize>,
    epsilon: Option<f64>,
    theorem: Option<TheoremId>,
    kind: &'a str,
    value: Option<f64>,
    stderr: Option<f64>,
    flags: Vec<String>,
}

impl CsvRow<'_> {
    fn write(&self, out: &mut String) {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let fields = [
            csv_field(self.statistic),
            self.index.map(|i| i.to_string()).unwrap_or_default(),
            opt(self.epsilon),
            self.theorem.map(|t| t.to_string()).unwrap_or_default(),
            self.kind.to_string(),
            opt(self.value),
            opt(self.stderr),
            csv_field(&self.flags.join(";")),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
}

impl ExperimentResult {
    /// Long-format CSV, one row per (statistic, ε, theorem, kind).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for s in &self.statistics {
            let row = |kind, epsilon, theorem, value, stderr, flags| CsvRow {
                statistic: s.statistic.kind(),
                index: s.statistic.index(),
                epsilon,
                theorem,
                kind,
                value,
                stderr,
                flags,
            };
            row("mc_mean", None, None, Some(s.mc_mean), Some(s.mc_stderr), vec![]).write(&mut out);
            for p in &s.empirical_freq {
                row("empirical_freq", Some(p.epsilon), None, Some(p.value), Some(p.stderr), vec![])
                    .write(&mut out);
            }
            for b in &s.bounds {
                let mut base_flags = vec![];
                if b.flagged > 0 {
                    base_flags.push(format!("flagged={}", b.flagged));
                }
                if b.points.is_empty() {
                    let mut flags = base_flags.clone();
                    if let Some(e) = &b.first_error {
                        flags.push(format!("skipped: {e}"));
                    }
                    row("bound_mean", None, Some(b.theorem), None, None, flags).write(&mut out);
                    continue;
                }
                for p in &b.points {
                    let mut flags = base_flags.clone();
                    if p.mean >= 1.0 {
                        flags.push("vacuous".into());
                    }
                    row("bound_mean", Some(p.epsilon), Some(b.theorem), Some(p.mean), Some(p.stderr), flags)
                        .write(&mut out);
                    row("bound_p10", Some(p.epsilon), Some(b.theorem), Some(p.p10), None, base_flags.clone())
                        .write(&mut out);
                }
            }
            let f = &s.boxplot;
            for (kind, v) in [
                ("min", f.min),
                ("q1", f.q1),
                ("median", f.median),
                ("q3", f.q3),
                ("max", f.max),
                ("iqr", s.iqr),
            ] {
                row(kind, None, None, Some(v), None, vec![]).write(&mut out);
            }
            if let Some(g) = s.mean_gap {
                row("mean_gap", None, None, Some(g), None, vec![]).write(&mut out);
            }
        }
        if let Some(rho) = self.spearman_gap_iqr {
            CsvRow {
                statistic: "eig",
                index: None,
                epsilon: None,
                theorem: None,
                kind: "spearman_gap_iqr",
                value: Some(rho),
                stderr: None,
                flags: vec![],
            }
            .write(&mut out);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub trials: usize,
    pub seed: u64,
    /// Kernel for every row except the inner-product one.
    pub kernel: KernelSpec,
    pub inner_kernel: KernelSpec,
    #[serde(default)]
    pub centered: bool,
    /// Replace each sample by itself, so `E = 0`.
    #[serde(default)]
    pub zero_perturbation: bool,
}

pub const ORACLE_PRESETS: [&str; 1] = ["gaussian-p5"];

pub fn oracle_preset(name: &str, seed: u64) -> Result<OracleConfig> {
    match name {
        "gaussian-p5" => Ok(OracleConfig {
            name: name.into(),
            n: 100,
            p: 5,
            trials: 500,
            seed,
            kernel: KernelSpec::gaussian(1.0)?,
            inner_kernel: KernelSpec::linear(),
            centered: false,
            zero_perturbation: false,
        }),
        other => Err(Error::Config(format!(
            "unknown oracle preset {other:?}; available: {}",
            ORACLE_PRESETS.join(", ")
        ))),
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.inner_kernel.validate()?;
        if self.trials < MIN_ORACLE_TRIALS {
            return Err(Error::Config(format!(
                "oracle trials must be at least {MIN_ORACLE_TRIALS}, got {}",
                self.trials
            )));
        }
        if self.n < 3 || self.p < 1 {
            return Err(Error::Config(format!("need n >= 3 and p >= 1 (got n={}, p={})", self.n, self.p)));
        }
        if self.kernel.geometry() != Geometry::Distance {
            return Err(Error::Config("oracle kernel must be distance-based".into()));
        }
        if self.inner_kernel.geometry() != Geometry::InnerProduct {
            return Err(Error::Config("inner_kernel must be inner-product based".into()));
        }
        Ok(())
    }
}

pub const ORACLE_ROWS: [&str; 7] = [
    "interlacing",
    "weyl",
    "error_norm_printed",
    "error_norm_conservative",
    "second_order_eigenvalue",
    "eigvec_quadratic_residual",
    "inner_error_norm_printed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub inequality: String,
    pub trials: usize,
    pub violations: usize,
    /// Largest excess of the left side over the right side; 0 without violations.
    pub max_violation: f64,
    /// Checks not run because their precondition failed.
    pub skipped: usize,
}

impl OracleRow {
    fn new(name: &str) -> Self {
        Self {
            inequality: name.into(),
            trials: 0,
            violations: 0,
            max_violation: 0.0,
            skipped: 0,
        }
    }

    fn record(&mut self, excess: f64) {
        self.trials += 1;
        if excess > 0.0 {
            self.violations += 1;
            self.max_violation = self.max_violation.max(excess);
        }
    }

    fn merge(&mut self, other: &OracleRow) {
        self.trials += other.trials;
        self.violations += other.violations;
        self.max_violation = self.max_violation.max(other.max_violation);
        self.skipped += other.skipped;
    }

    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.violations as f64 / self.trials as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTable {
    pub config: OracleConfig,
    pub subseed_rule: String,
    pub rows: Vec<OracleRow>,
}

impl OracleTable {
    pub fn row(&self, name: &str) -> Option<&OracleRow> {
        self.rows.iter().find(|r| r.inequality == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("inequality,trials,violations,rate,max_violation,skipped\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.inequality,
                r.trials,
                r.violations,
                r.rate(),
                r.max_violation,
                r.skipped
            ));
        }
        out
    }
}

pub const WEYL_TOL: f64 = 1e-9;
pub const SECOND_ORDER_TOL: f64 = 1e-9;
/// Required shrink factor of the residual when the perturbation is halved.
pub const RESIDUAL_RATIO: f64 = 0.35;
/// Residuals below this are round-off and carry no scaling information.
pub const RESIDUAL_FLOOR: f64 = 1e-11;

/// Residual `‖u_i(K + tE) − ũ_i‖` of the first-order prediction, sign-aligned.
pub fn first_order_residual(k: &DMatrix<f64>, base: &Spectrum, e: &DMatrix<f64>, i: usize, t: f64) -> Result<f64> {
    let te = e * t;
    let pred = spectral::eigvec_first_order(base, &(-&te), i)?;
    let truth = spectral::eig_sym_matrix(&(k + &te))?.eigenvector(i);
    let truth = spectral::align_sign(&truth, &pred.vector);
    Ok((truth - pred.vector).norm())
}

/// `r(t/2)/r(t)` with `t` chosen so that `‖tE‖ = min(‖E‖, ¼·min gap)`;
/// `None` when the residual is at round-off level.
fn residual_ratio(k: &DMatrix<f64>, base: &Spectrum, e: &DMatrix<f64>, norm_e: f64, i: usize) -> Result<Option<f64>> {
    let profile = spectral::gaps(base, i)?;
    if profile.degenerate || !(norm_e > 0.0) {
        return Ok(None);
    }
    let t = (0.25 * profile.min_gap / norm_e).min(1.0);
    let r_full = first_order_residual(k, base, e, i, t)?;
    if r_full < RESIDUAL_FLOOR {
        return Ok(None);
    }
    let r_half = first_order_residual(k, base, e, i, 0.5 * t)?;
    Ok(Some(r_half / r_full))
}

fn interlacing_excess(parent: &[f64], k: &DMatrix<f64>, drop: usize) -> Result<f64> {
    let child = spectral::eigenvalues_sym(&spectral::principal_submatrix_of(k, drop)?);
    let check = spectral::interlacing_check(parent, &child)?;
    Ok(if check.holds { 0.0 } else { check.max_violation.max(f64::MIN_POSITIVE) })
}

fn oracle_trial(cfg: &OracleConfig, seed: u64) -> Result<Vec<OracleRow>> {
    let mut rows: Vec<OracleRow> = ORACLE_ROWS.iter().map(|n| OracleRow::new(n)).collect();
    let s = dataset::gen_gaussian(cfg.n, cfg.p, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5EED_0F_0AC1E));
    let index = rng.gen_range(0..cfg.n);
    let replacement: Vec<f64> = if cfg.zero_perturbation {
        s.row(index).iter().copied().collect()
    } else {
        (0..cfg.p).map(|_| StandardNormal.sample(&mut rng)).collect()
    };

    let g = kernel::gram(&s, &cfg.kernel, Scaling::OneOverN)?;
    let spec = spectral::eig_sym(&g)?;
    let pair = spectral::perturb_replace_from(&g, &s, index, &replacement)?;
    let norm_e = pair.spectral_norm_e;
    let perturbed = spectral::eigenvalues_sym(&pair.perturbed.entries);
    let deltas: Vec<f64> = perturbed
        .iter()
        .zip(&spec.eigenvalues)
        .map(|(a, b)| (a - b).abs())
        .collect();

    rows[0].record(interlacing_excess(&spec.eigenvalues, &g.entries, index)?);

    let max_delta = deltas.iter().fold(0.0_f64, |m, d| m.max(*d));
    rows[1].record(max_delta - norm_e - WEYL_TOL);

    let cov = dataset::covariance_stats(&s, cfg.centered);
    match &cov {
        Ok(cov) => {
            let lip = cfg.kernel.lipschitz_on(&s)?;
            let b = bounds::error_norm_bound(Geometry::Distance, cov, lip, cfg.n);
            rows[2].record(norm_e - b.printed);
            rows[3].record(norm_e - b.conservative);
        }
        Err(_) => {
            rows[2].skipped += 1;
            rows[3].skipped += 1;
        }
    }

    for (i, delta) in deltas.iter().enumerate() {
        let profile = spectral::gaps(&spec, i)?;
        if !profile.degenerate && norm_e < 0.5 * profile.min_gap {
            rows[4].record(delta - norm_e - norm_e * norm_e * profile.resolvent_sum - SECOND_ORDER_TOL);
        } else {
            rows[4].skipped += 1;
        }
    }

    match residual_ratio(&g.entries, &spec, &pair.e, norm_e, 0)? {
        Some(ratio) => rows[5].record(ratio - RESIDUAL_RATIO),
        None => rows[5].skipped += 1,
    }

    match &cov {
        Ok(cov) => {
            let g_lin = kernel::gram(&s, &cfg.inner_kernel, Scaling::OneOverN)?;
            let pair_lin = spectral::perturb_replace_from(&g_lin, &s, index, &replacement)?;
            let lip = cfg.inner_kernel.lipschitz_on(&s)?;
            let b = bounds::error_norm_bound(Geometry::InnerProduct, cov, lip, cfg.n);
            rows[6].record(pair_lin.spectral_norm_e - b.printed);
        }
        Err(_) => rows[6].skipped += 1,
    }
    Ok(rows)
}

/// Brute-force checks of each perturbation inequality over seeded replace-one trials.
pub fn run_oracles(cfg: &OracleConfig, workers: Option<usize>) -> Result<OracleTable> {
    cfg.validate()?;
    let per_trial: Vec<Vec<OracleRow>> = in_pool(workers, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| oracle_trial(cfg, subseed(cfg.seed, t)))
            .collect::<Result<Vec<_>>>()
    })??;
    let mut rows: Vec<OracleRow> = ORACLE_ROWS.iter().map(|n| OracleRow::new(n)).collect();
    for trial in &per_trial {
        for (acc, r) in rows.iter_mut().zip(trial) {
            acc.merge(r);
        }
    }
    Ok(OracleTable {
        config: cfg.clone(),
        subseed_rule: SUBSEED_RULE.into(),
        rows,
    })
}

/// Interlacing on `count` random PSD matrices of size 3..=40, every drop index.
pub fn interlacing_sweep(count: usize, seed: u64, workers: Option<usize>) -> Result<OracleRow> {
    let parts: Vec<OracleRow> = in_pool(workers, || {
        (0..count)
            .into_par_iter()
            .map(|m| {
                let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, m));
                let n = rng.gen_range(3..=40);
                let a = randmat::random_psd(n, &mut rng);
                let parent = spectral::eigenvalues_sym(&a);
                let mut row = OracleRow::new("interlacing");
                for drop in 0..n {
                    row.record(interlacing_excess(&parent, &a, drop)?);
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut row = OracleRow::new("interlacing");
    parts.iter().for_each(|p| row.merge(p));
    Ok(row)
}

/// Quadratic-scaling check of the first-order eigenvector expansion on
/// `count` synthetic matrices with separated spectra and unit-norm `E`.
///
/// Each eigenvector of each matrix is one case; a case violates when
/// `r(t/2) > 0.35·r(t)` with `t = ¼·min gap`.
pub fn eigvec_residual_sweep(count: usize, seed: u64, workers: Option<usize>) -> Result<OracleRow> {
    let parts: Vec<OracleRow> = in_pool(workers, || {
        (0..count)
            .into_par_iter()
            .map(|m| {
                let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, m));
                let n = rng.gen_range(5..=20);
                let eigenvalues: Vec<f64> = (0..n)
                    .map(|k| (n - k) as f64 + rng.gen_range(-0.3..0.3))
                    .collect();
                let k = randmat::with_spectrum(&eigenvalues, &mut rng);
                let e = randmat::random_symmetric(n, &mut rng);
                let e = &e / spectral::dense_spectral_norm(&e);
                let base = spectral::eig_sym_matrix(&k)?;
                let mut row = OracleRow::new("eigvec_quadratic_residual");
                for i in 0..n {
                    match residual_ratio(&k, &base, &e, 1.0, i)? {
                        Some(ratio) => row.record(ratio - RESIDUAL_RATIO),
                        None => row.skipped += 1,
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut row = OracleRow::new("eigvec_quadratic_residual");
    parts.iter().for_each(|p| row.merge(p));
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(trials: usize) -> ExperimentConfig {
        let mut c = gaussian_config("test", 2, 11);
        c.n = 20;
        c.trials = trials;
        c.epsilons = default_epsilons();
        c
    }

    #[test]
    fn default_grid_spans_range() {
        let g = default_epsilons();
        assert_eq!(g.len(), 40);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert_eq!(g[39], 1.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn subseeds_differ_across_trials() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|t| subseed(7, t)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(subseed(7, 0), subseed(8, 0));
    }

    #[test]
    fn identical_trials_never_deviate() {
        let mut c = small(2);
        c.fixed_subseed = Some(99);
        let r = run_concentration(&c, Some(1)).unwrap();
        for s in &r.statistics {
            assert!(s.empirical_freq.iter().all(|p| p.value == 0.0));
            assert_eq!(s.iqr, 0.0);
        }
    }

    #[test]
    fn frequency_matches_scalar_loop() {
        let mut c = small(50);
        c.statistics = ExperimentConfig::eigenvalue_orders([1]);
        let r = run_concentration(&c, Some(1)).unwrap();
        let s = &r.statistics[0];
        let mut mean = 0.0;
        for v in &s.values {
            mean += v;
        }
        mean /= s.values.len() as f64;
        for p in &s.empirical_freq {
            let mut count = 0;
            for v in &s.values {
                if (v - mean).abs() > p.epsilon {
                    count += 1;
                }
            }
            assert_eq!(p.value, count as f64 / 50.0);
        }
    }

    #[test]
    fn frequencies_and_bound_means_nonincreasing() {
        let mut c = small(30);
        c.bounds = vec![TheoremId::SpectralGap, TheoremId::CovDistance, TheoremId::UniformDiag];
        let r = run_concentration(&c, Some(2)).unwrap();
        for s in &r.statistics {
            assert!(s.empirical_freq.windows(2).all(|w| w[1].value <= w[0].value));
            for b in s.bounds.iter().filter(|b| b.flagged == 0) {
                assert!(b.points.iter().all(|p| p.mean >= 0.0));
                assert!(b.points.windows(2).all(|w| w[1].mean <= w[0].mean));
            }
            let f = s.boxplot;
            assert!(f.min <= f.q1 && f.q1 <= f.median && f.median <= f.q3 && f.q3 <= f.max);
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let mut c = small(12);
        c.statistics.push("topk:2".parse().unwrap());
        c.statistics.push(Tracked::Kta);
        c.bounds = vec![TheoremId::SpectralGap, TheoremId::TopkGap, TheoremId::KtaSpectral];
        let a = run_concentration(&c, Some(1)).unwrap().to_csv();
        let b = run_concentration(&c, Some(3)).unwrap().to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn p1_covariance_bounds_are_flagged_not_fatal() {
        let mut c = small(5);
        c.generator = Generator::Gaussian { p: 1 };
        c.bounds = vec![TheoremId::CovDistance];
        let r = run_concentration(&c, Some(1)).unwrap();
        let b = r.statistics[0].series(TheoremId::CovDistance).unwrap();
        assert_eq!(b.flagged, 5);
        assert!(b.points.is_empty());
        assert!(r.to_csv().contains("flagged=5"));
    }

    #[test]
    fn config_validation() {
        let mut c = small(1);
        assert!(c.validate().is_err());
        c.trials = 5;
        c.bounds = vec![TheoremId::KtaSpectral];
        assert!(c.validate().is_err());
        c.bounds.clear();
        c.statistics = vec![Tracked::Spectral(Statistic::Eigenvalue(20))];
        assert!(c.validate().is_err());
        assert!("evec:1".parse::<Tracked>().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        for name in PRESETS {
            for c in preset(name, 3).unwrap() {
                c.validate().unwrap();
                let text = serde_json::to_string(&c).unwrap();
                let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
                assert_eq!(back, c);
            }
        }
        assert_eq!(preset("example1-fig2-bottom", 1).unwrap().len(), 2);
        assert!(preset("nope", 1).is_err());
    }

    #[test]
    fn spearman_reported_for_three_or_more_orders() {
        let mut c = small(20);
        c.statistics = ExperimentConfig::eigenvalue_orders(1..=5);
        let r = run_concentration(&c, Some(1)).unwrap();
        let rho = r.spearman_gap_iqr.unwrap();
        assert!((-1.0..=1.0).contains(&rho));
    }

    fn oracle_cfg(trials: usize) -> OracleConfig {
        let mut c = oracle_preset("gaussian-p5", 5).unwrap();
        c.n = 30;
        c.trials = trials;
        c
    }

    #[test]
    fn oracle_table_has_all_rows() {
        let t = run_oracles(&oracle_cfg(100), Some(2)).unwrap();
        assert_eq!(t.rows.len(), 7);
        assert_eq!(t.row("weyl").unwrap().trials, 100);
        assert_eq!(t.row("interlacing").unwrap().violations, 0);
        assert_eq!(t.row("weyl").unwrap().violations, 0);
        assert_eq!(t.row("error_norm_conservative").unwrap().violations, 0);
        assert_eq!(t.row("second_order_eigenvalue").unwrap().violations, 0);
    }

    #[test]
    fn zero_perturbation_has_no_violations() {
        let mut c = oracle_cfg(100);
        c.zero_perturbation = true;
        let t = run_oracles(&c, Some(1)).unwrap();
        assert!(t.rows.iter().all(|r| r.violations == 0), "{t:?}");
    }

    #[test]
    fn oracle_needs_enough_trials() {
        assert!(run_oracles(&oracle_cfg(99), None).is_err());
    }

    #[test]
    fn small_sweeps_pass() {
        assert_eq!(interlacing_sweep(10, 1, None).unwrap().violations, 0);
        let r = eigvec_residual_sweep(5, 1, None).unwrap();
        assert!(r.trials > 0);
        assert!(r.violations * 20 <= r.trials, "{r:?}");
    }
}
