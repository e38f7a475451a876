//! Subcommand implementations. Each returns the process exit status.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ctxrand::bounds::{self, BoundKind, BoundQuery, EntropyReport, SweepRow};
use ctxrand::extractor::{self, ToeplitzSpec};
use ctxrand::io::{self, LogFormat};
use ctxrand::kcbs::ScoreReport;
use ctxrand::protocol::{self, DistributionFlag, ProtocolConfig, ProtocolResult, QutritDevice, TrialRecord};
use ctxrand::stattests::{self, TestReport};
use ctxrand::{BitStream, Execution};
use serde::Serialize;

use crate::config::Config;
use crate::manifest::{self, FileDigest, RunManifest, SeedRecord, Summary};
use crate::InputError;

/// Process exit statuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    /// Failed statistical tests or another non-input failure.
    Failure = 1,
    /// Score at or below the classical threshold.
    Aborted = 2,
    NoNetRandomness = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

pub const CONFIG_FILE: &str = "config.resolved.toml";
pub const SCORE_FILE: &str = "score.json";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const EXTRACTED_FILE: &str = "extracted.bits";
pub const BATTERY_JSON: &str = "battery.json";
pub const BATTERY_TEXT: &str = "battery.txt";
pub const RAW_FILES: [(&str, &str); 3] = [
    ("raw_first.bits", "first"),
    ("raw_second.bits", "second"),
    ("raw_joint.bits", "joint"),
];

const EXEC: Execution = Execution::Parallel;

fn input<T>(r: ctxrand::Result<T>) -> Result<T> {
    r.map_err(|e| anyhow::Error::new(e).context(InputError))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

/// Collects output files of a run for its manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn bits(&mut self, name: &str, bits: &BitStream, role: &str) -> Result<()> {
        let p = self.path(name);
        io::write_bits(&p, bits, role)?;
        self.files.push(io::sidecar_path(&p));
        Ok(())
    }

    fn digests(&self) -> Result<Vec<FileDigest>> {
        self.files.iter().map(|f| manifest::digest(f, &self.dir)).collect()
    }
}

fn seeds(config: &Config) -> SeedRecord {
    SeedRecord {
        master: config.seeds.master.clone(),
        device: config.seeds.device().to_string(),
        extractor: config.seeds.extractor().to_string(),
    }
}

fn finish_manifest(
    command: &str,
    config: &Config,
    inputs: Vec<FileDigest>,
    outputs: &Outputs,
    started_unix: u64,
    summary: Summary,
) -> Result<PathBuf> {
    let m = RunManifest {
        command: command.to_string(),
        config: config.resolved().to_toml()?,
        seeds: seeds(config),
        versions: manifest::versions(),
        inputs,
        outputs: outputs.digests()?,
        started_unix,
        finished_unix: manifest::unix_now(),
        summary,
    };
    m.write(&outputs.dir)
}

/// The score file written by `simulate`, `expand` and `replay`.
#[derive(Serialize)]
pub struct ScoreFile<'a> {
    pub accepted: bool,
    pub n_rounds: u64,
    pub n_game_rounds: u64,
    pub input_entropy_bits: f64,
    pub score: Option<&'a ScoreReport>,
    pub distribution_flags: &'a [DistributionFlag],
}

impl<'a> ScoreFile<'a> {
    fn of(r: &'a ProtocolResult) -> Self {
        ScoreFile {
            accepted: r.accepted,
            n_rounds: r.trials.len() as u64,
            n_game_rounds: r.n_game_rounds,
            input_entropy_bits: r.input_entropy_bits,
            score: r.score_report.as_ref(),
            distribution_flags: &r.distribution_flags,
        }
    }
}

fn print_score(r: &ProtocolResult) {
    match &r.score_report {
        Some(s) => println!(
            "score: g = {:.5} ± {:.5} over {} game rounds ({})",
            s.g,
            s.sigma_g,
            s.n_game_rounds,
            if r.accepted { "accepted" } else { "aborted" }
        ),
        None => println!(
            "score: unavailable, some game settings never occurred ({} game rounds)",
            r.n_game_rounds
        ),
    }
    for f in &r.distribution_flags {
        println!(
            "warning: setting {} occurred {} times, expected {:.1} (z = {:.1})",
            f.setting, f.observed, f.expected, f.z
        );
    }
}

fn simulate_run(config: &Config) -> Result<ProtocolResult> {
    let device = QutritDevice::new(
        config.preset.geometry(),
        config.noise_model(),
        config.seeds.device().as_bytes(),
    )?;
    Ok(protocol::run(&config.protocol(), &device, EXEC)?)
}

fn write_run_outputs(out: &mut Outputs, config: &Config, result: &ProtocolResult) -> Result<()> {
    std::fs::write(out.path(CONFIG_FILE), config.resolved().to_toml()?)?;
    let format = LogFormat::for_len(result.trials.len());
    let log_name = match format {
        LogFormat::Jsonl => "trials.jsonl",
        LogFormat::Binary => "trials.bin",
    };
    let log_path = out.path(log_name);
    io::write_trial_log(&log_path, &result.trials, Some(format))?;
    write_json(&out.path(SCORE_FILE), &ScoreFile::of(result))?;
    let streams = [result.first_stream(), result.second_stream(), result.raw_output.clone()];
    for ((name, role), bits) in RAW_FILES.iter().zip(&streams) {
        out.bits(name, bits, role)?;
    }
    Ok(())
}

pub fn simulate(config: &Config, out_dir: &Path) -> Result<Status> {
    let started = manifest::unix_now();
    let result = simulate_run(config)?;
    let mut out = Outputs::new(out_dir)?;
    write_run_outputs(&mut out, config, &result)?;
    print_score(&result);
    let s = result.score_report.as_ref();
    let summary = Summary {
        accepted: Some(result.accepted),
        g: s.map(|s| s.g),
        sigma_g: s.map(|s| s.sigma_g),
        exit_status: Status::Success.code(),
        ..Summary::default()
    };
    let m = finish_manifest("simulate", config, Vec::new(), &out, started, summary)?;
    println!("wrote {}", m.display());
    Ok(Status::Success)
}

/// Certification of a score at a given size and spot-check rate.
#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub bound: BoundKind,
    pub g: f64,
    pub n_rounds: f64,
    pub q: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub report: EntropyReport,
}

fn certify_score(g: f64, n_rounds: f64, q: f64, config: &Config) -> Result<Certificate> {
    let base = BoundQuery::new(config.bound, g, n_rounds, q, 1.0, config.delta);
    let opt = input(bounds::optimize_epsilon(&base))?;
    Ok(Certificate {
        bound: config.bound,
        g,
        n_rounds,
        q,
        delta: config.delta,
        epsilon: opt.epsilon,
        report: opt.report,
    })
}

fn print_certificate(c: &Certificate) {
    let r = &c.report;
    println!(
        "{} bound, N = {:.6e}, q = {:.3e}, δ = {:.1e}, ε = {:.3e}: r_gen = {:.4e}, r_in = {:.4e}, r_exp = {:.4e}, net bits = {:.4e}",
        c.bound.to_string().to_uppercase(),
        c.n_rounds,
        c.q,
        c.delta,
        c.epsilon,
        r.r_gen,
        r.r_in,
        r.r_exp,
        r.net_bits
    );
}

/// Re-score a log. `q` is taken as the observed game-round fraction.
fn replay_log(log: &[TrialRecord], config: &Config) -> Result<ProtocolResult> {
    let n_game = log.iter().filter(|t| t.is_game_round).count();
    if n_game == 0 {
        return Err(anyhow::anyhow!("log has no game rounds").context(InputError));
    }
    let mut pc = ProtocolConfig::new(
        log.len() as u64,
        n_game as f64 / log.len() as f64,
        config.seeds.master.as_bytes(),
    );
    pc.score_threshold = config.protocol().score_threshold;
    input(protocol::replay(log, &pc))
}

pub fn certify(
    log_path: &Path,
    n_rounds: Option<f64>,
    q: Option<f64>,
    config: &Config,
    out_dir: Option<&Path>,
) -> Result<Status> {
    let log = input(io::read_trial_log(log_path))?;
    let result = replay_log(&log, config)?;
    print_score(&result);
    let score = result.score_report.as_ref().expect("replay scores every setting");
    if !result.accepted {
        println!("no certification: score does not exceed the classical threshold");
        return Ok(Status::Aborted);
    }
    let n = n_rounds.unwrap_or(log.len() as f64);
    let q = q.unwrap_or(result.n_game_rounds as f64 / log.len() as f64);
    let cert = certify_score(score.g, n, q, config)?;
    print_certificate(&cert);
    println!("{}", serde_json::to_string_pretty(&cert)?);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join(CERTIFICATE_FILE), &cert)?;
    }
    Ok(if cert.report.net_bits > 0.0 {
        Status::Success
    } else {
        Status::NoNetRandomness
    })
}

pub fn expand(config: &Config, out_dir: &Path) -> Result<Status> {
    let started = manifest::unix_now();
    let result = simulate_run(config)?;
    let mut out = Outputs::new(out_dir)?;
    write_run_outputs(&mut out, config, &result)?;
    print_score(&result);
    let s = result.score_report.as_ref();
    let mut summary = Summary {
        accepted: Some(result.accepted),
        g: s.map(|s| s.g),
        sigma_g: s.map(|s| s.sigma_g),
        ..Summary::default()
    };
    let done = |summary: Summary, status: Status, out: &Outputs| -> Result<Status> {
        let summary = Summary {
            exit_status: status.code(),
            ..summary
        };
        let m = finish_manifest("expand", config, Vec::new(), out, started, summary)?;
        println!("wrote {}", m.display());
        Ok(status)
    };
    let Some(score) = s.filter(|_| result.accepted) else {
        println!("aborted: no extraction");
        return done(summary, Status::Aborted, &out);
    };

    let cert = certify_score(score.g, config.n_rounds as f64, config.q, config)?;
    print_certificate(&cert);
    write_json(&out.path(CERTIFICATE_FILE), &cert)?;
    summary.certified_r_gen = Some(cert.report.r_gen);
    summary.certified_min_entropy = Some(cert.report.total_min_entropy.max(0.0));
    summary.net_bits = Some(cert.report.net_bits);

    let budget = match config.extract.assumed_rate {
        Some(rate) => {
            println!("extracting at an assumed, uncertified {rate} bits per round");
            summary.assumed_rate = Some(rate);
            rate * config.n_rounds as f64
        }
        None => cert.report.total_min_entropy,
    };
    let raw = &result.raw_output;
    let plan = input(extractor::plan(raw.len(), budget.max(0.0), config.epsilon_h))?;
    if plan.n_out == 0 {
        println!("no certified min-entropy: no extraction");
        return done(summary, Status::NoNetRandomness, &out);
    }
    let seed = extractor::fixture_seed(config.seeds.extractor().as_bytes(), plan.seed_bits);
    let extracted = extractor::extract(raw, &plan.with_seed(seed)?, EXEC)?;
    out.bits(EXTRACTED_FILE, &extracted, "extracted")?;
    println!("extracted {} bits from {} raw bits", extracted.len(), raw.len());

    let reports = stattests::run_battery(&extracted, config.extract.threshold, EXEC);
    let passed = stattests::battery_passed(&reports);
    write_json(&out.path(BATTERY_JSON), &reports)?;
    let table = stattests::render_table(&[("extracted", &reports)]);
    std::fs::write(out.path(BATTERY_TEXT), &table)?;
    print!("{table}");
    summary.extracted_bits = Some(extracted.len());
    summary.battery_passed = Some(passed);

    let status = if config.extract.assumed_rate.is_some() || cert.report.net_bits > 0.0 {
        Status::Success
    } else {
        Status::NoNetRandomness
    };
    done(summary, status, &out)
}

pub struct ExtractArgs<'a> {
    pub input: &'a Path,
    pub n_out: Option<usize>,
    pub min_entropy: Option<f64>,
    pub seed_file: Option<&'a Path>,
}

pub fn extract(args: &ExtractArgs, config: &Config, out_dir: &Path) -> Result<Status> {
    let started = manifest::unix_now();
    let (bits, _) = input(io::read_bits(args.input))?;
    let n_out = match (args.n_out, args.min_entropy) {
        (Some(m), None) => m,
        (None, Some(h)) => input(extractor::plan(bits.len(), h, config.epsilon_h))?.n_out,
        _ => return Err(anyhow::anyhow!("give exactly one of --n-out and --min-entropy").context(InputError)),
    };
    let seed_len = input(ToeplitzSpec::seed_len(bits.len(), n_out))?;
    let mut inputs = vec![manifest::digest(args.input, Path::new(""))?];
    let seed = match args.seed_file {
        Some(p) => {
            inputs.push(manifest::digest(p, Path::new(""))?);
            input(io::read_bits(p))?.0
        }
        None => extractor::fixture_seed(config.seeds.extractor().as_bytes(), seed_len),
    };
    let spec = input(ToeplitzSpec::new(bits.len(), n_out, seed))?;
    let extracted = extractor::extract(&bits, &spec, EXEC)?;
    let mut out = Outputs::new(out_dir)?;
    out.bits(EXTRACTED_FILE, &extracted, "extracted")?;
    println!("extracted {} bits from {} input bits", extracted.len(), bits.len());
    let summary = Summary {
        extracted_bits: Some(extracted.len()),
        exit_status: 0,
        ..Summary::default()
    };
    finish_manifest("extract", config, inputs, &out, started, summary)?;
    Ok(Status::Success)
}

pub fn test(path: &Path, threshold: f64, csv: bool, out_dir: Option<&Path>) -> Result<Status> {
    let (bits, sidecar) = input(io::read_bits(path))?;
    let reports: Vec<TestReport> = stattests::run_battery(&bits, threshold, EXEC);
    let name = sidecar.role.as_str();
    if csv {
        print!("{}", stattests::render_csv(&[(name, &reports)]));
    } else {
        print!("{}", stattests::render_table(&[(name, &reports)]));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join(BATTERY_JSON), &reports)?;
    }
    Ok(if stattests::battery_passed(&reports) {
        Status::Success
    } else {
        Status::Failure
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Curve {
    /// `r_exp` over a `(g, q)` grid.
    Surface,
    /// Minimum rounds for net randomness as a function of `g`.
    NMin,
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Grid {
    fn validate(&self, name: &str) -> Result<()> {
        if self.steps == 0
            || self.min.is_nan()
            || self.max.is_nan()
            || self.min > self.max
            || (self.steps == 1 && self.min != self.max)
        {
            return Err(anyhow::anyhow!(
                "{name} grid {}..{} with {} steps is empty or reversed",
                self.min,
                self.max,
                self.steps
            )
            .context(InputError));
        }
        Ok(())
    }

    pub fn linear(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps).map(|k| self.min + step * k as f64).collect()
    }

    pub fn log(&self) -> Vec<f64> {
        let g = Grid {
            min: self.min.log10(),
            max: self.max.log10(),
            steps: self.steps,
        };
        g.linear().into_iter().map(|x| 10f64.powf(x)).collect()
    }
}

pub fn sweep(curve: Curve, gs: &Grid, qs: &Grid, n_rounds: f64, config: &Config, out: Option<&Path>) -> Result<Status> {
    gs.validate("g")?;
    let text = match curve {
        Curve::Surface => {
            qs.validate("q")?;
            if qs.min <= 0.0 {
                return Err(anyhow::anyhow!("q grid must be positive").context(InputError));
            }
            let rows = input(bounds::sweep(
                &gs.linear(),
                &qs.log(),
                n_rounds,
                config.delta,
                config.bound,
                EXEC,
            ))?;
            let mut s = format!("{}\n", SweepRow::CSV_HEADER);
            for r in rows {
                s.push_str(&r.csv());
                s.push('\n');
            }
            s
        }
        Curve::NMin => {
            let rows = input(bounds::n_min_curve(&gs.linear(), config.delta, config.bound, EXEC))?;
            let mut s = "g,n_min\n".to_string();
            for (g, n) in rows {
                s.push_str(&format!("{g},{}\n", n.map(|n| format!("{n:e}")).unwrap_or_default()));
            }
            s
        }
    };
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(Status::Success)
}

/// Re-score a trial log.
pub fn replay(log_path: &Path, config: &Config) -> Result<Status> {
    let log = input(io::read_trial_log(log_path))?;
    let result = replay_log(&log, config)?;
    print_score(&result);
    println!("{}", serde_json::to_string_pretty(&ScoreFile::of(&result))?);
    Ok(if result.accepted {
        Status::Success
    } else {
        Status::Aborted
    })
}

/// Re-run the command recorded in a manifest into `out_dir` and compare
/// every output digest except the manifest's own timestamps.
pub fn replay_manifest(path: &Path, out_dir: &Path) -> Result<Status> {
    let original = manifest::verify_manifest(path).map_err(|e| e.context(InputError))?;
    let config = Config::from_toml(&original.config).map_err(|e| e.context(InputError))?;
    if out_dir.join(manifest::MANIFEST_FILE) == path {
        bail!("replay output directory must differ from the manifest's");
    }
    let status = match original.command.as_str() {
        "simulate" => simulate(&config, out_dir)?,
        "expand" => expand(&config, out_dir)?,
        other => return Err(anyhow::anyhow!("cannot replay a `{other}` manifest").context(InputError)),
    };
    let rerun = RunManifest::read(&out_dir.join(manifest::MANIFEST_FILE))?;
    let mut mismatches = Vec::new();
    for (a, b) in original.outputs.iter().zip(&rerun.outputs) {
        if a != b {
            mismatches.push(a.path.clone());
        }
    }
    if original.outputs.len() != rerun.outputs.len() {
        mismatches.push("output list".to_string());
    }
    if !mismatches.is_empty() {
        bail!("replay differs from the manifest in {}", mismatches.join(", "));
    }
    println!("replay reproduced all {} output digests", original.outputs.len());
    Ok(status)
}
