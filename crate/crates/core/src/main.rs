use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use cgsim::analytics::{
    composed_error, find_min_kplus, mean_alignment_delay, p_at_least_one_rep, p_common_nack_recovery, p_shared_collision,
    p_unknown_detection, Arrival, DedicatedCgSummary, SharedPoolConfig, DEFAULT_K_MAX,
};
use cgsim::cg_core::{occasions_available_flexible, occasions_available_legacy};
use cgsim::gnb_model::{db_to_linear, fbl_error, LinkModel};
use cgsim::sim::{cg_uci_presence, compare_with_oracle, conformance_matrix, run_scenario, ScenarioConfig, ScenarioError};

const EXIT_INVALID: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(name = "cgsim", version, about = "NR uplink configured-grant simulator and analytics oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics.csv, summary.json and cdf.csv.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<u32>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate one closed-form expression and print it as a CSV row.
    Oracle {
        formula: String,
        /// Inputs as key=value, repeatable.
        #[arg(long = "arg", value_name = "KEY=VALUE")]
        args: Vec<String>,
    },
    /// Simulate a scenario and compare one metric with its closed form.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        metric: String,
    },
    /// Check every feature-matrix row.
    Conformance,
}

/// Error carrying the process exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Exit(EXIT_INVALID, msg.into()).into()
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::load(path).map_err(|e: ScenarioError| invalid(e.to_string()))
}

fn simulate(scenario: PathBuf, seed: Option<u64>, replications: Option<u32>, out: PathBuf) -> Result<()> {
    let mut cfg = load(&scenario)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = replications {
        cfg.replications = r;
    }
    cfg.validate().map_err(|e| invalid(e.to_string()))?;
    log::info!("running {} replication(s) of {}", cfg.replications, scenario.display());
    let report = run_scenario(&cfg);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    report.write_csv(BufWriter::new(File::create(out.join("metrics.csv"))?))?;
    report.write_cdf(BufWriter::new(File::create(out.join("cdf.csv"))?))?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(out.join("summary.json"))?), &report.summary())?;
    if cfg.trace {
        let traces: Vec<_> = report.replications.iter().map(|r| (&r.trace, &r.packets)).collect();
        serde_json::to_writer(BufWriter::new(File::create(out.join("trace.json"))?), &traces)?;
    }
    for a in &report.aggregates {
        println!(
            "ue {}: offered {} delivered {} reliability {} ({:?})",
            a.ue_id,
            a.pooled.offered,
            a.pooled.delivered_in_deadline,
            a.pooled.reliability().map_or("n/a".into(), |r| format!("{r:.6}")),
            a.five_nines
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

struct Args(BTreeMap<String, String>);

impl Args {
    fn parse(raw: &[String]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for a in raw {
            let (k, v) = a.split_once('=').ok_or_else(|| invalid(format!("argument '{a}' is not key=value")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.0.get(key).ok_or_else(|| invalid(format!("missing --arg {key}=...")))?;
        v.parse().map_err(|_| invalid(format!("cannot parse {key}={v}")))
    }

    fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        if self.0.contains_key(key) {
            self.get(key)
        } else {
            Ok(default)
        }
    }

    fn link(&self) -> Result<LinkModel> {
        Ok(LinkModel {
            p_e: self.get_or("p_e", 1.0)?,
            p_d: self.get_or("p_d", 1.0)?,
            p_md: self.get_or("p_md", 0.0)?,
            p_cn: self.get_or("p_cn", 1.0)?,
            p_t: self.get_or("p_t", 1.0)?,
            ..LinkModel::default()
        })
    }

    fn pool(&self) -> Result<SharedPoolConfig> {
        Ok(SharedPoolConfig { k_plus: self.get_or("k_plus", 1)?, n_ues: self.get("n_ues")?, activity_q: self.get("q")? })
    }

    fn dedicated(&self) -> Result<DedicatedCgSummary> {
        let arrival = match self.0.get("b").map(String::as_str) {
            None | Some("uniform") => Arrival::Uniform,
            Some(_) => Arrival::At { b: self.get("b")? },
        };
        Ok(DedicatedCgSummary {
            k: self.get("k")?,
            arrival,
            epsilon: self.get("epsilon")?,
            flexible_start: self.get_or("flexible", false)?,
            rv0_spacing: self.get_or("a", 1)?,
        })
    }
}

fn oracle(formula: &str, raw: &[String]) -> Result<()> {
    let a = Args::parse(raw)?;
    let domain = |e: cgsim::analytics::AnalyticsError| invalid(e.to_string());
    let value: String = match formula {
        "at_least_one_rep" => p_at_least_one_rep(a.get("k")?, a.get("n")?, a.get_or("t", 0)?).map_err(domain)?.to_string(),
        "occasions_legacy" => occasions_available_legacy(a.get("k")?, a.get("a")?, a.get("b")?).to_string(),
        "occasions_flexible" => occasions_available_flexible(a.get("k")?, a.get("b")?).to_string(),
        "unknown_detection" => p_unknown_detection(&a.link()?).to_string(),
        "common_nack_recovery" => p_common_nack_recovery(&a.link()?).to_string(),
        "shared_collision" => p_shared_collision(&a.pool()?).to_string(),
        "fbl_error" => fbl_error(db_to_linear(a.get("gamma_db")?), a.get("n")?, a.get("payload_bits")?).to_string(),
        "composed_error" => composed_error(&a.dedicated()?, &a.pool()?).map_err(domain)?.to_string(),
        "min_kplus" => find_min_kplus(&a.dedicated()?, &a.pool()?, a.get("target")?, a.get_or("k_max", DEFAULT_K_MAX)?)
            .map_err(domain)?
            .map_or_else(|| "none".to_string(), |k| k.to_string()),
        "alignment_delay" => mean_alignment_delay(a.get("p")?, a.get("m")?).map_err(domain)?.to_string(),
        other => {
            return Err(invalid(format!(
            "unknown formula '{other}' (known: at_least_one_rep, occasions_legacy, occasions_flexible, unknown_detection, \
             common_nack_recovery, shared_collision, fbl_error, composed_error, min_kplus, alignment_delay)"
            )))
        }
    };
    let inputs: Vec<String> = a.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("formula,inputs,value");
    println!("{formula},{},{value}", inputs.join(";"));
    Ok(())
}

fn compare(scenario: PathBuf, metric: &str) -> Result<()> {
    let cfg = load(&scenario)?;
    let c = compare_with_oracle(&cfg, metric).map_err(|e| invalid(e.to_string()))?;
    println!("{}", serde_json::to_string_pretty(&c)?);
    if !c.pass {
        return Err(Exit(EXIT_MISMATCH, format!("{metric}: simulated {} vs analytic {}", c.simulated, c.analytic)).into());
    }
    Ok(())
}

fn conformance() -> Result<()> {
    let mut failed = 0;
    for check in conformance_matrix() {
        let verdict = if check.pass() { "PASS" } else { "FAIL" };
        println!("{verdict} {}{}", check.row, if check.message.is_empty() { String::new() } else { format!(": {}", check.message) });
        failed += usize::from(!check.pass());
    }
    for (profile, ok) in cg_uci_presence() {
        println!("{} CG-UCI presence under {profile}", if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    if failed > 0 {
        return Err(Exit(EXIT_MISMATCH, format!("{failed} conformance check(s) failed")).into());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CGSIM_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { scenario, seed, replications, out } => simulate(scenario, seed, replications, out),
        Command::Oracle { formula, args } => oracle(&formula, &args),
        Command::Compare { scenario, metric } => compare(scenario, &metric),
        Command::Conformance => conformance(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Exit>() {
                Some(Exit(code, _)) => ExitCode::from(*code),
                None => ExitCode::FAILURE,
            }
        }
    }
}
