use std::fs;
use std::path::{Path, PathBuf};

use kspec::alignment::{self, AlignmentReport, LabelVector, ThetaMode};
use kspec::bounds::{self, BoundContext, BoundReport, Statistic, ThetaSource};
use kspec::dataset::{self, CsvOptions};
use kspec::experiments::{self, ExperimentConfig, ExperimentResult, OracleConfig, Tracked};
use kspec::kernel::{self, KernelSpec, Scaling};
use kspec::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::output::{io_err, to_json, Outputs, RunManifest};
use crate::svg::{self, Series, DASHES, PALETTE};

pub struct BoundsArgs {
    pub data: PathBuf,
    pub header: bool,
    pub kernel: KernelSpec,
    pub stats: Vec<Statistic>,
    pub eps: Vec<f64>,
    pub theta: Option<f64>,
    pub theta_mode: ThetaMode,
    pub centered: bool,
    pub out: PathBuf,
}

pub struct SimulateArgs {
    pub preset: Option<String>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub no_svg: bool,
}

pub struct AlignArgs {
    pub data: PathBuf,
    pub header: bool,
    pub labels: Option<PathBuf>,
    pub label_col: Option<String>,
    pub kernel: KernelSpec,
    pub theta_mode: ThetaMode,
    pub eps: Vec<f64>,
    pub out: PathBuf,
}

pub struct AuditArgs {
    pub preset: Option<String>,
    pub config: Option<PathBuf>,
    pub oracle_trials: Option<usize>,
    pub zero_perturbation: bool,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn bounds_csv(report: &BoundReport) -> String {
    let mut out = String::from(experiments::CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},bound,{},,{}\n",
            r.statistic.kind(),
            r.statistic.label_index(),
            r.epsilon,
            r.theorem,
            fmt_opt(r.value.map(|v| v.raw)),
            csv_field(&r.flags.join(";"))
        ));
    }
    out
}

pub fn align_csv(report: &AlignmentReport) -> String {
    let mut out = String::from(experiments::CSV_HEADER);
    out.push('\n');
    for (kind, v) in [
        ("alignment", Some(report.a_kn)),
        ("theta", report.theta),
        ("middle_norm", Some(report.l)),
        ("frobenius", Some(report.frob)),
        ("ratio", Some(report.ratio)),
        ("ratio_approx", Some(report.ratio_approx)),
        ("c_theta", report.c_theta),
        ("d", report.d),
        ("d_approx", report.d_approx),
    ] {
        out.push_str(&format!("kta,,,,{kind},{},,\n", fmt_opt(v)));
    }
    for b in &report.per_eps {
        for (theorem, v) in [
            ("kta_theta", b.jl),
            ("kta_spectral", b.spectral),
            ("kta_spectral_bdiff", b.spectral_bdiff),
            ("kta_spectral_approx", b.spectral_approx),
        ] {
            let flags = match v {
                Some(v) if v.vacuous => "vacuous",
                Some(_) => "",
                None => "unavailable",
            };
            out.push_str(&format!(
                "kta,,{},{theorem},bound,{},,{flags}\n",
                b.epsilon,
                fmt_opt(v.map(|v| v.raw))
            ));
        }
    }
    out
}

pub fn cmd_bounds(a: &BoundsArgs) -> Result<PathBuf> {
    a.kernel.validate()?;
    bounds::validate_epsilons(&a.eps)?;
    let opts = CsvOptions { header: a.header, label_col: None };
    let (s, _) = dataset::load_csv_with(&a.data, &opts)?;
    let theta = match a.theta {
        Some(t) => ThetaSource::Supplied(t),
        None => ThetaSource::Estimate(a.theta_mode),
    };
    let needs_vectors = a
        .stats
        .iter()
        .any(|st| matches!(st, Statistic::EigvecPointwise(_) | Statistic::EigvecUniform(_)));
    let ctx = BoundContext::from_sample(&s, &a.kernel, a.centered, theta, needs_vectors)?;
    let report = bounds::report(&ctx, &a.stats, &a.eps)?;

    let mut out = Outputs::create(&a.out)?;
    out.write("bounds.csv", &bounds_csv(&report))?;
    out.write(
        "bounds.json",
        &to_json(&json!({ "n": s.n(), "p": s.p(), "report": report })),
    )?;
    let config = json!({
        "data": a.data.display().to_string(),
        "header": a.header,
        "kernel": a.kernel,
        "statistics": a.stats.iter().map(|st| st.to_string()).collect::<Vec<_>>(),
        "epsilons": a.eps,
        "theta": a.theta,
        "theta_mode": a.theta_mode,
        "centered": a.centered,
    });
    let mut manifest = RunManifest::new("bounds", None, config);
    manifest.add_input(&a.data)?;
    out.finish(manifest)
}

pub fn cmd_align(a: &AlignArgs) -> Result<PathBuf> {
    a.kernel.validate()?;
    bounds::validate_epsilons(&a.eps)?;
    let opts = CsvOptions {
        header: a.header,
        label_col: a.label_col.clone(),
    };
    let (s, col_labels) = dataset::load_csv_with(&a.data, &opts)?;
    let raw_labels = match (&a.labels, col_labels) {
        (Some(path), None) => {
            let l = dataset::load_csv(path)?;
            if l.p() != 1 {
                return Err(Error::Data(format!(
                    "{}: label file must have one column, found {}",
                    path.display(),
                    l.p()
                )));
            }
            l.matrix().column(0).iter().copied().collect()
        }
        (None, Some(labels)) => labels,
        (Some(_), Some(_)) => {
            return Err(Error::Config("give either --labels or --label-col, not both".into()))
        }
        (None, None) => return Err(Error::Data("labels missing: pass --labels or --label-col".into())),
    };
    if raw_labels.len() != s.n() {
        return Err(Error::Data(format!(
            "{} labels for {} samples",
            raw_labels.len(),
            s.n()
        )));
    }
    let y = LabelVector::new(raw_labels)?;
    let g = kernel::gram(&s, &a.kernel, Scaling::Raw)?;
    let report = alignment::alignment_report(&g, &y, a.theta_mode, &a.eps)?;

    let mut out = Outputs::create(&a.out)?;
    out.write("align.csv", &align_csv(&report))?;
    out.write("align.json", &to_json(&report))?;
    let config = json!({
        "data": a.data.display().to_string(),
        "header": a.header,
        "labels": a.labels.as_ref().map(|p| p.display().to_string()),
        "label_col": a.label_col,
        "kernel": a.kernel,
        "theta_mode": a.theta_mode,
        "epsilons": a.eps,
    });
    let mut manifest = RunManifest::new("align", None, config);
    manifest.add_input(&a.data)?;
    if let Some(p) = &a.labels {
        manifest.add_input(p)?;
    }
    out.finish(manifest)
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// A config file holds one object or an array of objects.
fn parse_configs<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let value = read_json(path)?;
    let items = match value {
        serde_json::Value::Array(items) => items,
        other => vec![other],
    };
    items
        .into_iter()
        .map(|v| serde_json::from_value(v).map_err(|e| Error::Config(format!("{}: {e}", path.display()))))
        .collect()
}

fn resolve_seed(explicit: Option<u64>) -> u64 {
    explicit.unwrap_or_else(|| {
        let seed = rand::random::<u64>();
        eprintln!("seed: {seed}");
        seed
    })
}

fn source<'a>(preset: &'a Option<String>, config: &'a Option<PathBuf>, default: Option<&'a str>) -> Result<Result<&'a str, &'a Path>> {
    match (preset, config) {
        (Some(_), Some(_)) => Err(Error::Config("give either --preset or --config, not both".into())),
        (Some(p), None) => Ok(Ok(p.as_str())),
        (None, Some(c)) => Ok(Err(c.as_path())),
        (None, None) => default
            .map(Ok)
            .ok_or_else(|| Error::Config("one of --preset or --config is required".into())),
    }
}

fn line_plot(r: &ExperimentResult) -> String {
    let mut series = Vec::new();
    for (k, s) in r.statistics.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        series.push(Series {
            label: format!("{} empirical", s.statistic),
            points: s.empirical_freq.iter().map(|p| (p.epsilon, p.value)).collect(),
            color,
            dash: None,
        });
        for (j, b) in s.bounds.iter().enumerate() {
            series.push(Series {
                label: format!("{} {}", s.statistic, b.theorem),
                points: b.points.iter().map(|p| (p.epsilon, p.mean)).collect(),
                color,
                dash: Some(DASHES[j % DASHES.len()]),
            });
        }
    }
    svg::line_plot(
        &format!("{}: deviation frequency and mean bound", r.config.name),
        "epsilon",
        "probability",
        &series,
    )
}

fn boxplot(r: &ExperimentResult) -> Option<String> {
    let eig: Vec<_> = r
        .statistics
        .iter()
        .filter(|s| matches!(s.statistic, Tracked::Spectral(Statistic::Eigenvalue(_))))
        .collect();
    if eig.is_empty() {
        return None;
    }
    let labels: Vec<String> = eig.iter().map(|s| s.statistic.index().unwrap_or(0).to_string()).collect();
    let boxes: Vec<_> = eig.iter().map(|s| s.boxplot).collect();
    Some(svg::boxplot(
        &format!("{}: eigenvalues of the Gram matrix / n", r.config.name),
        "lambda_i / n",
        &labels,
        &boxes,
    ))
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<PathBuf> {
    let (mut configs, input) = match source(&a.preset, &a.config, None)? {
        Ok(name) => (experiments::preset(name, resolve_seed(a.seed))?, None),
        Err(path) => {
            let mut cs: Vec<ExperimentConfig> = parse_configs(path)?;
            if let Some(seed) = a.seed {
                cs.iter_mut().for_each(|c| c.seed = seed);
            }
            (cs, Some(path))
        }
    };
    if configs.is_empty() {
        return Err(Error::Config("config file holds no experiments".into()));
    }
    for c in &mut configs {
        if let Some(t) = a.trials {
            c.trials = t;
        }
        c.validate()?;
    }
    let mut names: Vec<&str> = configs.iter().map(|c| c.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("experiment names must be unique".into()));
    }

    let mut out = Outputs::create(&a.out)?;
    for c in &configs {
        let r = experiments::run_concentration(c, a.workers)?;
        out.write(&format!("{}/results.csv", c.name), &r.to_csv())?;
        out.write(&format!("{}/results.json", c.name), &to_json(&r))?;
        if !a.no_svg {
            out.write(&format!("{}/plot.svg", c.name), &line_plot(&r))?;
            if let Some(b) = boxplot(&r) {
                out.write(&format!("{}/boxplot.svg", c.name), &b)?;
            }
        }
        if let Some(rho) = r.spearman_gap_iqr {
            eprintln!("{}: spearman(mean gap, IQR) = {rho}", c.name);
        }
    }
    out.write("config.json", &to_json(&configs))?;
    let seed = configs[0].seed;
    let mut manifest = RunManifest::new("simulate", Some(seed), serde_json::to_value(&configs).expect("config serializes"));
    if let Some(p) = input {
        manifest.add_input(p)?;
    }
    out.finish(manifest)
}

#[derive(Serialize)]
struct AuditJson<'a> {
    table: &'a experiments::OracleTable,
    notes: Vec<String>,
}

pub fn cmd_audit(a: &AuditArgs) -> Result<PathBuf> {
    let (mut cfg, input) = match source(&a.preset, &a.config, Some(experiments::ORACLE_PRESETS[0]))? {
        Ok(name) => (experiments::oracle_preset(name, resolve_seed(a.seed))?, None),
        Err(path) => {
            let mut cs: Vec<OracleConfig> = parse_configs(path)?;
            if cs.len() != 1 {
                return Err(Error::Config("audit takes exactly one oracle config".into()));
            }
            let mut c = cs.remove(0);
            if let Some(seed) = a.seed {
                c.seed = seed;
            }
            (c, Some(path))
        }
    };
    if let Some(t) = a.oracle_trials {
        cfg.trials = t;
    }
    cfg.zero_perturbation |= a.zero_perturbation;
    let table = experiments::run_oracles(&cfg, a.workers)?;

    let mut notes = vec![];
    if let Some(r) = table.row("error_norm_printed") {
        notes.push(format!(
            "error_norm_printed scales with the covariance gap lambda_1 - lambda_p, which vanishes for isotropic data although E does not; observed violation rate {}",
            r.rate()
        ));
    }
    let mut out = Outputs::create(&a.out)?;
    out.write("audit.csv", &table.to_csv())?;
    out.write("audit.json", &to_json(&AuditJson { table: &table, notes }))?;
    out.write("config.json", &to_json(&cfg))?;
    let mut manifest = RunManifest::new("audit", Some(cfg.seed), serde_json::to_value(&cfg).expect("config serializes"));
    if let Some(p) = input {
        manifest.add_input(p)?;
    }
    out.finish(manifest)
}
