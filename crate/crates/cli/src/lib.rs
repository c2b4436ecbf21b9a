//! `smellhunter`: submit analyses to a SmellHunter gateway and browse the
//! context history.
//!
//! Exit codes: 0 success, 1 usage, local input, network or HTTP error,
//! 2 the run failed in the pipeline, 3 gave up waiting.

pub mod config;
pub mod render;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use reqwest::blocking::{multipart, Client, Response};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use config::{CliConfig, OutputFormat, Overrides};
use smellhunter_core::bus::CorrelationId;
use smellhunter_core::dsl::{parse_script, Severity};
use smellhunter_core::inputs::{parse_request, ArtifactError};
use smellhunter_core::persistence::{BoundingBox, DetectionFilter, DetectionPage, ExecutionPage};
use smellhunter_core::pipeline::{Stage, StatusView};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Error = 1,
    PipelineFailed = 2,
    Timeout = 3,
}

#[derive(Debug, Parser)]
#[command(name = "smellhunter", version, about = "Detect code smells with SmellDSL scripts")]
pub struct Cli {
    /// Gateway base URL [env: SMELLHUNTER_SERVER]
    #[arg(long, global = true)]
    pub server: Option<String>,
    /// Config file [env: SMELLHUNTER_CONFIG]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output as aligned tables or raw response documents
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Delay between status polls
    #[arg(long, global = true)]
    pub poll_interval_ms: Option<u64>,
    /// Give up waiting after this long
    #[arg(long, global = true)]
    pub timeout_ms: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Submit a script with its metrics, thresholds and metadata
    Analyze(AnalyzeArgs),
    /// List detection records
    Detections(FilterArgs),
    /// Count detections per smell
    Histogram(FilterArgs),
    /// List past executions, newest first
    History(HistoryArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub script: PathBuf,
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long)]
    pub thresholds: PathBuf,
    #[arg(long)]
    pub metadata: PathBuf,
    /// Poll until the run finishes and print the verdict
    #[arg(long)]
    pub wait: bool,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub smell: Option<String>,
    #[arg(long, value_parser = parse_severity)]
    pub severity: Option<Severity>,
    /// minLat,maxLat,minLon,maxLon
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    pub bbox: Option<BoundingBox>,
}

#[derive(Debug, Args)]
pub struct HistoryArgs {
    #[arg(long)]
    pub project: Option<String>,
}

fn parse_severity(s: &str) -> Result<Severity, String> {
    s.parse().map_err(|e: smellhunter_core::dsl::UnknownSeverity| e.to_string())
}

fn parse_bbox(s: &str) -> Result<BoundingBox, String> {
    BoundingBox::decode(s).map_err(|e| e.to_string())
}

impl FilterArgs {
    fn filter(&self) -> DetectionFilter {
        DetectionFilter {
            smell_name: self.smell.clone(),
            severity: self.severity,
            bounding_box: self.bbox,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct SubmitResponse {
    pub correlation_id: CorrelationId,
    pub accepted_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0}")]
    Message(String),
    #[error("request to {url} failed: {source}")]
    Network { url: String, source: reqwest::Error },
    #[error("server answered {status}: {body}")]
    Http { status: u16, body: String },
}

/// Where output goes; split so tests can capture both streams.
pub struct Io<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
    pub env: &'a dyn Fn(&str) -> Option<String>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run(args: impl IntoIterator<Item = OsString>, io: &mut Io) -> Exit {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let informational = matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            let _ = write!(if informational { &mut *io.out } else { &mut *io.err }, "{}", e.render());
            return if informational { Exit::Success } else { Exit::Error };
        }
    };
    let overrides = Overrides {
        config: cli.config.clone(),
        server: cli.server.clone(),
        poll_interval_ms: cli.poll_interval_ms,
        timeout_ms: cli.timeout_ms,
        format: cli.format,
    };
    let config = match CliConfig::resolve(&overrides, io.env) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            return Exit::Error;
        }
    };
    let session = Session { config, client: Client::new() };
    let outcome = match &cli.command {
        Command::Analyze(a) => session.analyze(a, io),
        Command::Detections(f) => session.detections(f, io),
        Command::Histogram(f) => session.histogram(f, io),
        Command::History(h) => session.history(h, io),
    };
    match outcome {
        Ok(exit) => exit,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            Exit::Error
        }
    }
}

struct Session {
    config: CliConfig,
    client: Client,
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::Message(format!("cannot read {}: {e}", path.display())))
}

fn write_out(io: &mut Io, text: &str) -> Result<(), Failure> {
    io.out.write_all(text.as_bytes()).map_err(|e| Failure::Message(e.to_string()))
}

fn document(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("JSON values serialize") + "\n"
}

impl Session {
    fn send(&self, request: reqwest::blocking::RequestBuilder, url: &str) -> Result<Response, Failure> {
        request.send().map_err(|source| Failure::Network { url: url.into(), source })
    }

    fn decode<T: DeserializeOwned>(&self, response: Response, url: &str) -> Result<(serde_json::Value, T), Failure> {
        let status = response.status();
        let body = response.text().map_err(|source| Failure::Network { url: url.into(), source })?;
        if !status.is_success() {
            return Err(Failure::Http { status: status.as_u16(), body });
        }
        let value: serde_json::Value =
            serde_json::from_str(&body).map_err(|e| Failure::Message(format!("unreadable response from {url}: {e}")))?;
        let typed = serde_json::from_value(value.clone())
            .map_err(|e| Failure::Message(format!("unexpected response from {url}: {e}")))?;
        Ok((value, typed))
    }

    fn get<T: DeserializeOwned>(&self, path: &str, query: &[(String, String)]) -> Result<(serde_json::Value, T), Failure> {
        let base = self.config.endpoint(path);
        let url = reqwest::Url::parse_with_params(&base, query)
            .map_err(|e| Failure::Message(format!("invalid URL {base}: {e}")))?
            .to_string();
        let response = self.send(self.client.get(&url), &url)?;
        self.decode(response, &url)
    }

    fn show<T>(&self, io: &mut Io, value: &serde_json::Value, typed: &T, table: fn(&T) -> String) -> Result<Exit, Failure> {
        let text = match self.config.format {
            OutputFormat::Table => table(typed),
            OutputFormat::Document => document(value),
        };
        write_out(io, &text)?;
        Ok(Exit::Success)
    }

    fn detections(&self, args: &FilterArgs, io: &mut Io) -> Result<Exit, Failure> {
        let (value, page): (_, DetectionPage) = self.get("/detections", &args.filter().to_query_pairs())?;
        self.show(io, &value, &page, render::detections)
    }

    fn histogram(&self, args: &FilterArgs, io: &mut Io) -> Result<Exit, Failure> {
        let (value, counts): (_, BTreeMap<String, usize>) = self.get("/detections/histogram", &args.filter().to_query_pairs())?;
        self.show(io, &value, &counts, render::histogram)
    }

    fn history(&self, args: &HistoryArgs, io: &mut Io) -> Result<Exit, Failure> {
        let query: Vec<(String, String)> = args.project.iter().map(|p| ("project".to_string(), p.clone())).collect();
        let (value, page): (_, ExecutionPage) = self.get("/executions", &query)?;
        self.show(io, &value, &page, render::history)
    }

    fn analyze(&self, args: &AnalyzeArgs, io: &mut Io) -> Result<Exit, Failure> {
        let script = read(&args.script)?;
        let metrics = read(&args.metrics)?;
        let thresholds = read(&args.thresholds)?;
        let metadata = read(&args.metadata)?;

        let mut local = String::new();
        if let Err(errors) = parse_request(&script, &metrics, &thresholds, &metadata, None) {
            local.push_str(&render::input_errors(&errors));
        }
        if let Ok(source) = std::str::from_utf8(&script) {
            if let Err(diagnostics) = parse_script(source) {
                local.push_str(&render::script_diagnostics(&args.script.display().to_string(), &diagnostics));
            }
        }
        if !local.is_empty() {
            let _ = io.err.write_all(local.as_bytes());
            return Ok(Exit::Error);
        }

        let file = |bytes: Vec<u8>, path: &Path| {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            multipart::Part::bytes(bytes).file_name(name)
        };
        let form = multipart::Form::new()
            .part("script", file(script, &args.script))
            .part("metrics", file(metrics, &args.metrics))
            .part("thresholds", file(thresholds, &args.thresholds))
            .part("metadata", file(metadata, &args.metadata));
        let url = self.config.endpoint("/analyses");
        let response = self.send(self.client.post(&url).multipart(form), &url)?;
        if response.status().as_u16() == 400 {
            let body = response.text().unwrap_or_default();
            #[derive(Deserialize)]
            struct Rejected {
                errors: Vec<ArtifactError>,
            }
            match serde_json::from_str::<Rejected>(&body) {
                Ok(r) => {
                    let _ = io.err.write_all(render::input_errors(&r.errors).as_bytes());
                    return Ok(Exit::Error);
                }
                Err(_) => return Err(Failure::Http { status: 400, body }),
            }
        }
        let (value, accepted): (_, SubmitResponse) = self.decode(response, &url)?;
        match self.config.format {
            OutputFormat::Table => write_out(io, &format!("{}\n", accepted.correlation_id))?,
            OutputFormat::Document => write_out(io, &document(&value))?,
        }
        if !args.wait {
            return Ok(Exit::Success);
        }
        self.wait(&accepted.correlation_id, io)
    }

    fn wait(&self, id: &CorrelationId, io: &mut Io) -> Result<Exit, Failure> {
        let deadline = Instant::now() + Duration::from_millis(self.config.timeout_ms);
        let mut last_stage = None;
        loop {
            let (value, view): (_, StatusView) = self.get(&format!("/analyses/{id}"), &[])?;
            if self.config.format == OutputFormat::Table && last_stage != Some(view.stage) && !view.terminal {
                let _ = io.err.write_all(render::progress(&view).as_bytes());
            }
            last_stage = Some(view.stage);
            if view.terminal {
                match self.config.format {
                    OutputFormat::Table => write_out(io, &render::verdict(&view))?,
                    OutputFormat::Document => write_out(io, &document(&value))?,
                }
                return Ok(if view.stage == Stage::Persisted { Exit::Success } else { Exit::PipelineFailed });
            }
            let now = Instant::now();
            if now >= deadline {
                let _ = writeln!(io.err, "timed out after {} ms waiting for run {id} (last stage: {:?})", self.config.timeout_ms, view.stage);
                return Ok(Exit::Timeout);
            }
            thread::sleep(Duration::from_millis(self.config.poll_interval_ms).min(deadline - now));
        }
    }
}
