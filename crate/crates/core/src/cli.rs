//! Command-line front end: argument parsing, run configuration files,
//! subcommands and report rendering.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::ate::{estimate_ate, AteConfig, AteResult, ForestLearner, NuisanceSpec, TuningGrid};
use crate::data::{Dataset, ForestConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    ate_replicates, compare_methods, diameter_rate, imse_rate, AteSimReport, AteSimSpec, CompareReport,
    CompareSpec, DiameterRateSpec, ImseRateSpec, RateReport,
};
use crate::forest::{DiameterReport, DiameterStats, FitSummary, Forest};
use crate::io::{read_table, write_dataset, GroupModel, ModelFile, Rescale, Table};
use crate::sim::{generate, DgpSpec};

#[derive(Debug, Parser)]
#[command(name = "asbf", version, about = "Adaptive split balancing forests")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Clamp query coordinates into [0, 1] instead of rejecting them.
    #[arg(long, global = true)]
    pub clamp: bool,
    /// Column whose values split the rows into independently fitted groups.
    #[arg(long, global = true)]
    pub group_by: Option<String>,
    /// Output file for the command's artifact.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report layout on stdout.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit forests on a CSV and write a model file.
    Fit { data: PathBuf },
    /// Predict query rows with a model file.
    Predict { model: PathBuf, query: PathBuf },
    /// Run the experiment described by the `[simulate]` section.
    Simulate,
    /// Cross-fitted average treatment effect.
    Ate {
        data: Option<PathBuf>,
        /// Draw the data from the `[dgp]` section instead of reading a CSV.
        #[arg(long)]
        simulate: bool,
    },
    /// Leaf geometry of a fitted model.
    DiagDiameter { model: PathBuf },
    /// Render a saved JSON report.
    Report { report: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Table,
    Delimited,
}

/// Optional validation tuning for `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    pub grid: TuningGrid,
    #[serde(default = "fifth")]
    pub val_fraction: f64,
}

fn fifth() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SimulateSpec {
    /// Write one dataset drawn from `dgp`.
    Generate { dgp: DgpSpec },
    Compare(CompareSpec),
    DiameterRate(DiameterRateSpec),
    ImseRate(ImseRateSpec),
    Ate(AteSimSpec),
}

/// Contents of a `--config` file. Flags given on the command line win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub clamp: bool,
    /// Min-max rescale training covariates into the unit cube; the map is
    /// stored with the model and applied to queries.
    #[serde(default)]
    pub rescale: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneSection>,
    #[serde(default)]
    pub ate: AteConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nuisance: Option<ForestLearner>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dgp: Option<DgpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSpec>,
}

impl RunConfig {
    pub fn from_toml(s: &str) -> Result<RunConfig> {
        toml::from_str(s).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config: {e}")))
    }

    /// Folds command-line flags into the configuration.
    pub fn merge_flags(mut self, cli: &Cli) -> RunConfig {
        if let Some(seed) = cli.seed.or(self.seed) {
            self.seed = Some(seed);
            self.forest.seed = seed;
            self.ate.seed = seed;
            if let Some(dgp) = self.dgp.as_mut() {
                dgp.seed = seed;
            }
            match self.simulate.as_mut() {
                Some(SimulateSpec::Generate { dgp }) => dgp.seed = seed,
                Some(SimulateSpec::Compare(c)) => c.seed = seed,
                Some(SimulateSpec::DiameterRate(c)) => c.seed = seed,
                Some(SimulateSpec::ImseRate(c)) => c.seed = seed,
                Some(SimulateSpec::Ate(c)) => c.seed = seed,
                None => {}
            }
        }
        if cli.threads.is_some() {
            self.threads = cli.threads;
        }
        self.clamp |= cli.clamp;
        if cli.group_by.is_some() {
            self.group_by = cli.group_by.clone();
        }
        if let Some(f) = cli.format {
            self.format = f;
        }
        self
    }

    fn learner(&self) -> ForestLearner {
        self.nuisance.clone().unwrap_or_else(|| ForestLearner {
            mu: NuisanceSpec::Fixed {
                config: self.forest.clone(),
            },
            pi: NuisanceSpec::Fixed {
                config: self.forest.clone(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitGroupReport {
    pub group: Option<String>,
    pub rows: usize,
    pub config: ForestConfig,
    pub summary: FitSummary,
    pub diameter: DiameterStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteGroupReport {
    pub group: Option<String>,
    pub result: AteResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiameterGroupReport {
    pub group: Option<String>,
    pub report: DiameterReport,
}

/// Everything a command can print, in a form `report` can re-render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Fit { groups: Vec<FitGroupReport> },
    Ate { groups: Vec<AteGroupReport> },
    Diameter { groups: Vec<DiameterGroupReport> },
    Compare(CompareReport),
    DiameterRate(RateReport),
    ImseRate(RateReport),
    AteSim(AteSimReport),
}

/// One rectangular block of a rendered report.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Section {
    fn new(name: &str, header: &[&str]) -> Section {
        Section {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt_group(g: &Option<String>) -> String {
    g.clone().unwrap_or_else(|| "-".into())
}

fn diameter_row(group: &Option<String>, s: &DiameterStats) -> Vec<String> {
    vec![
        opt_group(group),
        s.leaves.to_string(),
        num(s.mean_diam),
        num(s.max_diam),
        num(s.mean_diam2),
        num(s.max_diam2),
        num(s.volume_mean_diam),
        num(s.volume_mean_diam2),
    ]
}

const DIAM_HEADER: [&str; 8] = [
    "group",
    "leaves",
    "mean_diam",
    "max_diam",
    "mean_diam2",
    "max_diam2",
    "volume_mean_diam",
    "volume_mean_diam2",
];

fn rate_sections(r: &RateReport, xname: &str) -> Vec<Section> {
    let mut pts = Section::new("points", &["n", xname, "mean", "replicates"]);
    for p in &r.points {
        pts.push(vec![p.n.to_string(), num(p.x), num(p.mean), p.replicates.len().to_string()]);
    }
    let mut fit = Section::new("fit", &["slope", "slope_se", "intercept"]);
    fit.push(vec![num(r.fit.slope), num(r.fit.slope_se), num(r.fit.intercept)]);
    vec![pts, fit]
}

impl Report {
    pub fn sections(&self) -> Vec<Section> {
        match self {
            Report::Fit { groups } => {
                let mut fit = Section::new(
                    "fit",
                    &[
                        "group", "rows", "trees", "leaves", "k", "alpha", "w", "mtry", "q", "seed", "degenerate",
                        "singular_fallback", "j_fallback_splits", "kappa_median", "kappa_max",
                    ],
                );
                let mut hist = Section::new("leaf_sizes", &["group", "size", "count"]);
                let mut diam = Section::new("diameter", &DIAM_HEADER);
                for g in groups {
                    let c = &g.config;
                    let s = &g.summary;
                    let opt = |v: Option<f64>| v.map(num).unwrap_or_else(|| "-".into());
                    fit.push(vec![
                        opt_group(&g.group),
                        g.rows.to_string(),
                        s.trees.to_string(),
                        s.leaves.to_string(),
                        c.k.to_string(),
                        num(c.alpha),
                        num(c.w),
                        c.mtry.to_string(),
                        c.q.to_string(),
                        c.seed.to_string(),
                        s.degenerate_leaves.to_string(),
                        s.singular_fallback_leaves.to_string(),
                        s.j_fallback_splits.to_string(),
                        opt(s.kappa_median),
                        opt(s.kappa_max),
                    ]);
                    for (size, count) in &s.leaf_size_histogram {
                        hist.push(vec![opt_group(&g.group), size.to_string(), count.to_string()]);
                    }
                    diam.push(diameter_row(&g.group, &g.diameter));
                }
                vec![fit, hist, diam]
            }
            Report::Ate { groups } => {
                let mut est = Section::new(
                    "estimate",
                    &["group", "n", "theta_hat", "sigma_hat", "level", "ci_low", "ci_high", "pi_min", "pi_max", "overlap_flags", "clipped"],
                );
                let mut folds = Section::new(
                    "folds",
                    &["group", "fold", "size", "train_treated", "train_control", "score_mean", "pi_min", "pi_max"],
                );
                for g in groups {
                    let r = &g.result;
                    est.push(vec![
                        opt_group(&g.group),
                        r.n.to_string(),
                        num(r.theta_hat),
                        num(r.sigma_hat),
                        num(r.level),
                        num(r.ci_low),
                        num(r.ci_high),
                        num(r.overlap.min),
                        num(r.overlap.max),
                        r.overlap.flagged.len().to_string(),
                        r.overlap.clipped.to_string(),
                    ]);
                    for f in &r.folds {
                        folds.push(vec![
                            opt_group(&g.group),
                            f.fold.to_string(),
                            f.size.to_string(),
                            f.train_treated.to_string(),
                            f.train_control.to_string(),
                            num(f.score_mean),
                            num(f.pi_min),
                            num(f.pi_max),
                        ]);
                    }
                }
                vec![est, folds]
            }
            Report::Diameter { groups } => {
                let mut pooled = Section::new("pooled", &DIAM_HEADER);
                let mut header = vec!["group", "tree"];
                header.extend_from_slice(&DIAM_HEADER[1..]);
                let mut trees = Section::new("trees", &header);
                for g in groups {
                    pooled.push(diameter_row(&g.group, &g.report.pooled));
                    for (b, s) in g.report.per_tree.iter().enumerate() {
                        let mut row = diameter_row(&g.group, s);
                        row.insert(1, b.to_string());
                        trees.push(row);
                    }
                }
                vec![pooled, trees]
            }
            Report::Compare(c) => {
                let mut summary = Section::new("methods", &["method", "median_rmse", "replicates"]);
                for m in &c.methods {
                    summary.push(vec![m.name.clone(), num(m.median_rmse), m.rmse.len().to_string()]);
                }
                let mut header = vec!["replicate".to_string()];
                header.extend(c.methods.iter().map(|m| m.name.clone()));
                let mut reps = Section {
                    name: "rmse".into(),
                    header,
                    rows: Vec::new(),
                };
                let n = c.methods.first().map_or(0, |m| m.rmse.len());
                for r in 0..n {
                    let mut row = vec![r.to_string()];
                    row.extend(c.methods.iter().map(|m| num(m.rmse[r])));
                    reps.push(row);
                }
                let mut tests = Section::new("sign_tests", &["against", "wins", "losses", "ties", "p_value"]);
                for (name, t) in &c.sign_tests {
                    tests.push(vec![
                        name.clone(),
                        t.wins.to_string(),
                        t.losses.to_string(),
                        t.ties.to_string(),
                        num(t.p_value),
                    ]);
                }
                vec![summary, tests, reps]
            }
            Report::DiameterRate(r) => rate_sections(r, "n_over_k"),
            Report::ImseRate(r) => rate_sections(r, "n"),
            Report::AteSim(r) => {
                let mut s = Section::new(
                    "summary",
                    &["theta", "replicates", "median_bias", "median_abs_error", "median_ci_length", "coverage"],
                );
                s.push(vec![
                    num(r.theta),
                    r.replicates.len().to_string(),
                    num(r.median_bias),
                    num(r.median_abs_error),
                    num(r.median_ci_length),
                    num(r.coverage),
                ]);
                let mut reps = Section::new(
                    "replicates",
                    &["replicate", "theta_hat", "sigma_hat", "ci_low", "ci_high", "covered", "overlap_flags"],
                );
                for (i, r) in r.replicates.iter().enumerate() {
                    reps.push(vec![
                        i.to_string(),
                        num(r.theta_hat),
                        num(r.sigma_hat),
                        num(r.ci_low),
                        num(r.ci_high),
                        r.covered.to_string(),
                        r.overlap_flags.to_string(),
                    ]);
                }
                vec![s, reps]
            }
        }
    }

    pub fn render(&self, format: OutputFormat) -> String {
        let sections = self.sections();
        match format {
            OutputFormat::Table => render_table(&sections),
            OutputFormat::Delimited => render_delimited(&sections),
        }
    }
}

/// Fractional numbers shown with six decimals; integers and labels as is.
fn table_cell(c: &str) -> String {
    match c.parse::<f64>() {
        Ok(v) if c.contains(['.', 'e', 'E']) => format!("{v:.6}"),
        _ => c.to_string(),
    }
}

fn render_table(sections: &[Section]) -> String {
    let mut out = String::new();
    for s in sections {
        let s = &Section {
            name: s.name.clone(),
            header: s.header.clone(),
            rows: s.rows.iter().map(|r| r.iter().map(|c| table_cell(c)).collect()).collect(),
        };
        out.push_str(&format!("[{}]\n", s.name));
        let mut width: Vec<usize> = s.header.iter().map(|h| h.len()).collect();
        for r in &s.rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        for r in std::iter::once(&s.header).chain(&s.rows) {
            let cells: Vec<String> = r.iter().zip(&width).map(|(c, w)| format!("{c:>w$}")).collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Sections as CSV blocks separated by blank lines. Every row starts with
/// the section name so blocks can be filtered with ordinary tools.
fn render_delimited(sections: &[Section]) -> String {
    let mut blocks = Vec::new();
    for s in sections {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["section".to_string()];
        header.extend(s.header.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for r in &s.rows {
            let mut row = vec![s.name.clone()];
            row.extend(r.iter().cloned());
            w.write_record(&row).expect("in-memory write");
        }
        blocks.push(String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
    }
    blocks.join("\n")
}

/// Reads back the output of the delimited layout.
pub fn parse_delimited(s: &str) -> Result<Vec<Section>> {
    let mut out = Vec::new();
    for block in s.split("\n\n").filter(|b| !b.trim().is_empty()) {
        let mut rdr = csv::ReaderBuilder::new().from_reader(block.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(crate::io::csv_err)?
            .iter()
            .skip(1)
            .map(String::from)
            .collect();
        let mut name = String::new();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(crate::io::csv_err)?;
            name = rec.get(0).unwrap_or_default().to_string();
            rows.push(rec.iter().skip(1).map(String::from).collect());
        }
        out.push(Section { name, header, rows });
    }
    Ok(out)
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn open_table(path: &Path, group_by: Option<&str>) -> Result<Table> {
    let f = fs::File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    read_table(f, group_by)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::from_toml(&read_file(p)?)?,
        None => RunConfig::default(),
    }
    .merge_flags(cli);
    match cfg.threads {
        Some(0) => Err(Error::InvalidConfig("threads must be >= 1".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let mut buf = Vec::new();
            let r = pool.install(|| dispatch(cli, &cfg, &mut buf));
            stdout.write_all(&buf).map_err(|e| Error::Format(format!("stdout: {e}")))?;
            r
        }
        None => dispatch(cli, &cfg, stdout),
    }
}

fn emit(stdout: &mut dyn Write, s: &str) -> Result<()> {
    stdout
        .write_all(s.as_bytes())
        .map_err(|e| Error::Format(format!("stdout: {e}")))
}

fn finish_report(cli: &Cli, cfg: &RunConfig, report: &Report, stdout: &mut dyn Write) -> Result<()> {
    if let Some(out) = &cli.out {
        let json = serde_json::to_string(report).map_err(|e| Error::Format(e.to_string()))?;
        write_file(out, json.as_bytes())?;
    }
    emit(stdout, &report.render(cfg.format))
}

fn dispatch(cli: &Cli, cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Fit { data } => cmd_fit(cli, cfg, data, stdout),
        Command::Predict { model, query } => cmd_predict(cli, cfg, model, query, stdout),
        Command::Simulate => cmd_simulate(cli, cfg, stdout),
        Command::Ate { data, simulate } => cmd_ate(cli, cfg, data.as_deref(), *simulate, stdout),
        Command::DiagDiameter { model } => {
            no_grouping(cfg, "diag-diameter")?;
            let m = ModelFile::from_json(&read_file(model)?)?;
            let groups = m
                .models
                .iter()
                .map(|g| DiameterGroupReport {
                    group: g.group.clone(),
                    report: g.forest.diameter_report(),
                })
                .collect();
            finish_report(cli, cfg, &Report::Diameter { groups }, stdout)
        }
        Command::Report { report } => {
            let r: Report =
                serde_json::from_str(&read_file(report)?).map_err(|e| Error::Format(format!("report: {e}")))?;
            emit(stdout, &r.render(cfg.format))
        }
    }
}

fn no_grouping(cfg: &RunConfig, what: &str) -> Result<()> {
    if cfg.group_by.is_some() {
        return Err(Error::InvalidConfig(format!("--group-by does not apply to {what}")));
    }
    Ok(())
}

fn cmd_fit(cli: &Cli, cfg: &RunConfig, path: &Path, stdout: &mut dyn Write) -> Result<()> {
    let mut table = open_table(path, cfg.group_by.as_deref())?;
    let rescale = if cfg.rescale {
        let r = Rescale::fit(&table.x, table.d)?;
        r.apply(&mut table.x);
        Some(r)
    } else {
        None
    };
    let mut models = Vec::new();
    let mut reports = Vec::new();
    for (group, rows) in table.groups() {
        let data = table.dataset(&rows, false)?;
        let config = match &cfg.tune {
            Some(t) => crate::ate::tune_config(&data, &t.grid, &cfg.forest, t.val_fraction)?.config,
            None => cfg.forest.clone(),
        };
        let forest = Forest::fit(&data, &config)?;
        reports.push(FitGroupReport {
            group: group.clone(),
            rows: data.n(),
            config,
            summary: forest.summary(),
            diameter: forest.diameter_report().pooled,
        });
        models.push(GroupModel {
            group,
            rows: data.n(),
            forest,
        });
    }
    let model = ModelFile::new(table.d, rescale, cfg.group_by.clone(), models);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("model.json"));
    write_file(&out, model.to_json()?.as_bytes())?;
    emit(stdout, &Report::Fit { groups: reports }.render(cfg.format))
}

fn cmd_predict(cli: &Cli, cfg: &RunConfig, model: &Path, query: &Path, stdout: &mut dyn Write) -> Result<()> {
    let m = ModelFile::from_json(&read_file(model)?)?;
    if cfg.group_by.is_some() && cfg.group_by != m.group_by {
        return Err(Error::InvalidConfig(format!(
            "model was fitted with group column {:?}",
            m.group_by
        )));
    }
    let mut table = open_table(query, m.group_by.as_deref())?;
    if table.d != m.d {
        return Err(Error::DimensionMismatch {
            expected: m.d,
            found: table.d,
        });
    }
    if let Some(r) = &m.rescale {
        r.apply(&mut table.x);
    }
    if cfg.clamp {
        for v in table.x.iter_mut() {
            if !v.is_nan() {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }
    let mut preds = vec![0.0; table.n()];
    for (group, rows) in table.groups() {
        let forest = m.model_for(group.as_deref())?;
        let mut xs = Vec::with_capacity(rows.len() * table.d);
        for &i in &rows {
            xs.extend_from_slice(table.row(i));
        }
        let p = forest.predict_many(&xs).map_err(|e| match e {
            Error::QueryOutOfRange { col, value } => {
                let row = rows[xs.chunks(table.d).position(|r| r[col] == value || r[col].is_nan()).unwrap_or(0)];
                Error::Format(format!(
                    "line {}: x{} = {value} is outside [0, 1] (use --clamp)",
                    row + 1,
                    col + 1
                ))
            }
            other => other,
        })?;
        for (&i, v) in rows.iter().zip(p) {
            preds[i] = v;
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["prediction"]).map_err(crate::io::csv_err)?;
    for p in &preds {
        w.write_record([p.to_string()]).map_err(crate::io::csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    match &cli.out {
        Some(out) => write_file(out, &bytes),
        None => stdout.write_all(&bytes).map_err(|e| Error::Format(e.to_string())),
    }
}

fn cmd_simulate(cli: &Cli, cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    no_grouping(cfg, "simulate")?;
    let spec = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("simulate needs a [simulate] section".into()))?;
    let report = match spec {
        SimulateSpec::Generate { dgp } => {
            let data = generate(dgp)?;
            let mut buf = Vec::new();
            write_dataset(&mut buf, &data)?;
            return match &cli.out {
                Some(out) => write_file(out, &buf),
                None => stdout.write_all(&buf).map_err(|e| Error::Format(e.to_string())),
            };
        }
        SimulateSpec::Compare(c) => Report::Compare(compare_methods(c)?),
        SimulateSpec::DiameterRate(c) => Report::DiameterRate(diameter_rate(c)?),
        SimulateSpec::ImseRate(c) => Report::ImseRate(imse_rate(c)?),
        SimulateSpec::Ate(c) => Report::AteSim(ate_replicates(c)?),
    };
    finish_report(cli, cfg, &report, stdout)
}

fn cmd_ate(
    cli: &Cli,
    cfg: &RunConfig,
    path: Option<&Path>,
    simulate: bool,
    stdout: &mut dyn Write,
) -> Result<()> {
    let learner = cfg.learner();
    let run = |data: &Dataset| estimate_ate(data, &cfg.ate, &learner);
    let groups = match (path, simulate) {
        (Some(_), true) => {
            return Err(Error::InvalidConfig("give either a data file or --simulate".into()));
        }
        (None, false) => return Err(Error::InvalidConfig("ate needs a data file or --simulate".into())),
        (None, true) => {
            no_grouping(cfg, "simulated data")?;
            let dgp = cfg
                .dgp
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("--simulate needs a [dgp] section".into()))?;
            let data = generate(dgp)?;
            if data.treatment().is_none() {
                return Err(Error::InvalidConfig("the [dgp] design has no treatment".into()));
            }
            vec![AteGroupReport {
                group: None,
                result: run(&data)?,
            }]
        }
        (Some(p), false) => {
            let table = open_table(p, cfg.group_by.as_deref())?;
            if table.a.is_none() {
                return Err(Error::Format("ate needs a treatment column `a`".into()));
            }
            table
                .groups()
                .into_iter()
                .map(|(group, rows)| {
                    Ok(AteGroupReport {
                        group,
                        result: run(&table.dataset(&rows, true)?)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    finish_report(cli, cfg, &Report::Ate { groups }, stdout)
}
