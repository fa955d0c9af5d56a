//! The `obagg` command line: sessions, audits, rate checks and the sum
//! leakage demonstration.
//!
//! Exit codes: 0 success, 1 protocol error, 2 configuration error,
//! 3 audit budget refusal, 4 failed audit or oracle mismatch.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use crate::auditor::{self, planted, AuditError, AuditPlan, AuditReport, Budget, LeakagePreset};
use crate::dealer::{Scheme, SessionParams, UserId};
use crate::field::{FieldSpec, FieldVector};
use crate::protocol::{AggregationScheme, StandardScheme, SurvivorSet};
use crate::rates::{self, RateError};
use crate::transport::{expected_sum, run_session_tcp, Delivery, DropPlan, SessionError, SimNetwork};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROTOCOL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_FAILED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "obagg", version, about = "Secure aggregation with an oblivious server")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one aggregation session and cross-check every decoded sum.
    Run(RunArgs),
    /// Exhaustively audit the security, entropy and correctness constraints.
    Audit(AuditArgs),
    /// Compare measured rates against the optimal region.
    Rates(RatesArgs),
    /// Show what a plain sum reveals about small-alphabet inputs.
    DemoLeakage(LeakageArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SessionArgs {
    /// Number of users K.
    #[arg(long = "k")]
    pub users: usize,
    /// Field modulus q (prime).
    #[arg(long, default_value_t = 257)]
    pub q: u64,
    /// Input length L.
    #[arg(long, default_value_t = 1)]
    pub len: usize,
    #[arg(long, default_value = "nodropout")]
    pub scheme: Scheme,
}

impl SessionArgs {
    fn params(&self) -> Result<SessionParams, Failure> {
        let field = FieldSpec::new(self.q).map_err(|e| Failure::config(e.to_string()))?;
        SessionParams::new(self.users, field, self.len, self.scheme).map_err(|e| Failure::config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransportKind {
    Sim,
    Stream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeliveryKind {
    Ordered,
    Shuffled,
    Concurrent,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    /// Users that drop before sending, e.g. `2,4`.
    #[arg(long, value_delimiter = ',')]
    pub drop: Vec<u32>,
    /// Users that send and then leave before the reply.
    #[arg(long, value_delimiter = ',')]
    pub drop_after: Vec<u32>,
    /// Seed for keys and generated inputs.
    #[arg(long, default_value_t = 0, conflicts_with = "entropy")]
    pub seed: u64,
    /// Draw the seed from the operating system instead.
    #[arg(long)]
    pub entropy: bool,
    /// Send the reply as one broadcast frame.
    #[arg(long)]
    pub broadcast: bool,
    #[arg(long, value_enum, default_value = "sim")]
    pub transport: TransportKind,
    #[arg(long, value_enum, default_value = "ordered")]
    pub delivery: DeliveryKind,
    /// Inputs, one vector per user: `1,2;3,4;5,6`. Random when omitted.
    #[arg(long)]
    pub inputs: Option<String>,
    /// Write the structured report here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlantedKind {
    NoiseReuse,
    ReplyMaskReuse,
    PaddedKey,
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    /// Survivor set to audit, e.g. `1,3`; repeatable. Defaults to every set the scheme serves.
    #[arg(long)]
    pub survivors: Vec<String>,
    /// Colluding users for the collusion check (no-dropout scheme only).
    #[arg(long, value_delimiter = ',')]
    pub collude: Vec<u32>,
    /// Maximum number of enumerated states.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Audit a deliberately flawed scheme instead of the shipped one.
    #[arg(long, value_enum)]
    pub planted: Option<PlantedKind>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RatesArgs {
    /// Number of users K.
    #[arg(long = "k")]
    pub users: usize,
    #[arg(long, default_value_t = 257)]
    pub q: u64,
    #[arg(long, default_value_t = 1)]
    pub len: usize,
    #[arg(long, default_value = "nodropout")]
    pub scheme: Scheme,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetKind {
    ThreeUser,
    BinaryF3,
}

#[derive(Debug, Clone, Args)]
pub struct LeakageArgs {
    #[arg(long, value_enum)]
    pub preset: Option<PresetKind>,
    /// Per-user alphabets: `0,1;0,1`. Needs `--q`.
    #[arg(long, conflicts_with = "preset", requires = "q")]
    pub alphabets: Option<String>,
    #[arg(long)]
    pub q: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        let code = match e {
            SessionError::Protocol(_) | SessionError::Wire(_) | SessionError::Io(_) => EXIT_PROTOCOL,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<AuditError> for Failure {
    fn from(e: AuditError) -> Self {
        let code = match e {
            AuditError::BudgetExceeded { .. } => EXIT_BUDGET,
            AuditError::Protocol(_) => EXIT_PROTOCOL,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<RateError> for Failure {
    fn from(e: RateError) -> Self {
        match e {
            RateError::Audit(a) => a.into(),
            RateError::Protocol(_) => Self {
                code: EXIT_PROTOCOL,
                message: e.to_string(),
            },
            _ => Self::config(e.to_string()),
        }
    }
}

fn write_output(path: &Option<PathBuf>, value: &serde_json::Value) -> Result<(), Failure> {
    if let Some(path) = path {
        let text = serde_json::to_string_pretty(value).expect("json value serializes");
        std::fs::write(path, text + "\n").map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn user_ids(raw: &[u32], params: &SessionParams) -> Result<BTreeSet<UserId>, Failure> {
    raw.iter()
        .map(|&u| {
            let id = UserId(u);
            params.check_user(id).map_err(|e| Failure::config(e.to_string()))?;
            Ok(id)
        })
        .collect()
}

fn parse_vectors(raw: &str) -> Result<Vec<Vec<u64>>, Failure> {
    raw.split(';')
        .map(|part| {
            part.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<u64>()
                        .map_err(|_| Failure::config(format!("bad number {x:?} in {raw:?}")))
                })
                .collect()
        })
        .collect()
}

/// Parses arguments and runs the command. Everything the command prints goes
/// to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, out),
        Command::Audit(a) => cmd_audit(&a, out),
        Command::Rates(a) => cmd_rates(&a, out),
        Command::DemoLeakage(a) => cmd_demo_leakage(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let params = a.session.params()?.with_broadcast_reply(a.broadcast);
    let seed = if a.entropy {
        rand::rngs::OsRng.next_u64()
    } else {
        a.seed
    };

    let inputs: Vec<FieldVector> = match &a.inputs {
        Some(raw) => parse_vectors(raw)?
            .into_iter()
            .map(|v| FieldVector::new(params.field(), v).map_err(|e| Failure::config(e.to_string())))
            .collect::<Result<_, _>>()?,
        None => {
            // inputs come from their own stream so they never overlap the keys
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(2);
            params
                .user_ids()
                .map(|_| FieldVector::sample_uniform(params.field(), params.len(), &mut rng))
                .collect()
        }
    };
    let plan = DropPlan::before_send(user_ids(&a.drop, &params)?).with_after_send(user_ids(&a.drop_after, &params)?);

    let outcome = match a.transport {
        TransportKind::Sim => {
            let delivery = match a.delivery {
                DeliveryKind::Ordered => Delivery::Ordered,
                DeliveryKind::Shuffled => Delivery::Shuffled,
                DeliveryKind::Concurrent => Delivery::Concurrent,
            };
            SimNetwork::new(params)
                .with_delivery(delivery)
                .run(&inputs, &plan, seed)?
        }
        TransportKind::Stream => run_session_tcp(&params, &inputs, &plan, seed)?,
    };

    let expected = expected_sum(&inputs, &outcome.survivors).map_err(|e| Failure {
        code: EXIT_PROTOCOL,
        message: e.to_string(),
    })?;
    let _ = writeln!(
        out,
        "session scheme={} K={} q={} L={} seed={}",
        params.scheme(),
        params.users(),
        params.field().modulus(),
        params.len(),
        seed
    );
    let _ = writeln!(out, "U={}", outcome.survivors);
    if !outcome.departed.is_empty() {
        let names: Vec<String> = outcome.departed.iter().map(|u| u.to_string()).collect();
        let _ = writeln!(out, "departed after sending: {}", names.join(","));
    }
    let _ = writeln!(out, "oracle sum over U: {expected}");

    let mut all_match = true;
    let mut rows = Vec::new();
    for (user, result) in &outcome.decoded {
        let (line, ok, value) = match result {
            Ok(sum) if *sum == expected => (format!("user {user}: decoded {sum} ok"), true, json!(sum.elems())),
            Ok(sum) => (
                format!("user {user}: decoded {sum} MISMATCH"),
                false,
                json!(sum.elems()),
            ),
            Err(e) => (format!("user {user}: decode failed: {e}"), false, json!(null)),
        };
        all_match &= ok;
        let _ = writeln!(out, "{line}");
        rows.push(json!({ "user": user.get(), "decoded": value, "ok": ok }));
    }
    let t = outcome.traffic;
    let _ = writeln!(
        out,
        "traffic: uplink {} frame(s) {} bytes, downlink {} frame(s) {} bytes",
        t.uplink_frames, t.uplink_bytes, t.downlink_frames, t.downlink_bytes
    );
    let _ = writeln!(
        out,
        "result: {}",
        if all_match { "all sums match" } else { "oracle mismatch" }
    );

    write_output(
        &a.output,
        &json!({
            "scheme": params.scheme().to_string(),
            "users": params.users(),
            "modulus": params.field().modulus(),
            "len": params.len(),
            "seed": seed,
            "broadcast": params.broadcast_reply(),
            "survivors": outcome.survivors.ids().iter().map(|u| u.get()).collect::<Vec<_>>(),
            "departed": outcome.departed.iter().map(|u| u.get()).collect::<Vec<_>>(),
            "expected": expected.elems(),
            "results": rows,
            "traffic": {
                "uplink_frames": t.uplink_frames,
                "uplink_bytes": t.uplink_bytes,
                "downlink_frames": t.downlink_frames,
                "downlink_bytes": t.downlink_bytes,
            },
            "ok": all_match,
        }),
    )?;
    Ok(if all_match { EXIT_OK } else { EXIT_FAILED })
}

fn audit_with<S: AggregationScheme>(scheme: &S, plan: &AuditPlan, budget: Budget) -> Result<AuditReport, Failure> {
    Ok(auditor::audit(scheme, plan, budget)?)
}

fn cmd_audit(a: &AuditArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let params = a.session.params()?;
    let budget = match a.budget {
        Some(b) => Budget(b),
        None => Budget::from_env()?,
    };
    let survivors = if a.survivors.is_empty() {
        None
    } else {
        let sets = a
            .survivors
            .iter()
            .map(|raw| {
                let ids = parse_vectors(raw)?.concat();
                let ids = ids
                    .into_iter()
                    .map(|u| u32::try_from(u).unwrap_or(0))
                    .collect::<Vec<_>>();
                let ids = user_ids(&ids, &params)?;
                SurvivorSet::new(ids, params.users()).map_err(|e| Failure::config(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Some(sets)
    };
    let colluders = if a.collude.is_empty() {
        None
    } else {
        Some(user_ids(&a.collude, &params)?)
    };
    let plan = AuditPlan { survivors, colluders };
    let report = match a.planted {
        None => audit_with(&StandardScheme::new(params), &plan, budget)?,
        Some(PlantedKind::NoiseReuse) => audit_with(&planted::noise_reuse(params), &plan, budget)?,
        Some(PlantedKind::ReplyMaskReuse) => audit_with(&planted::reply_mask_reuse(params), &plan, budget)?,
        Some(PlantedKind::PaddedKey) => audit_with(&planted::padded_key(params), &plan, budget)?,
    };
    let _ = write!(out, "{}", report.to_text());
    write_output(&a.output, &serde_json::to_value(&report).expect("report serializes"))?;
    Ok(if report.all_pass() { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_rates(a: &RatesArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let args = SessionArgs {
        users: a.users,
        q: a.q,
        len: a.len,
        scheme: a.scheme,
    };
    let report = rates::verify_optimality(&args.params()?)?;
    let _ = write!(out, "{}", report.to_text());
    write_output(&a.output, &serde_json::to_value(&report).expect("report serializes"))?;
    Ok(if report.is_optimal() { EXIT_OK } else { EXIT_FAILED })
}

fn cmd_demo_leakage(a: &LeakageArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let mut tables = Vec::new();
    match (&a.preset, &a.alphabets) {
        (Some(p), _) => {
            let preset = match p {
                PresetKind::ThreeUser => LeakagePreset::ThreeUser,
                PresetKind::BinaryF3 => LeakagePreset::BinaryF3,
            };
            tables.push((preset.name().to_string(), auditor::preset_leakage(preset)));
        }
        (None, Some(raw)) => {
            let q = a.q.expect("clap enforces --q");
            let table = auditor::sum_leakage(&parse_vectors(raw)?, q).map_err(|e| Failure::config(e.to_string()))?;
            tables.push(("custom".to_string(), table));
        }
        (None, None) => {
            for preset in [LeakagePreset::ThreeUser, LeakagePreset::BinaryF3] {
                tables.push((preset.name().to_string(), auditor::preset_leakage(preset)));
            }
        }
    }
    let mut records = Vec::new();
    for (name, table) in &tables {
        let _ = writeln!(out, "[{name}]");
        let _ = write!(out, "{}", table.to_text());
        let deterministic: Vec<u64> = table.rows.iter().filter(|r| r.deterministic).map(|r| r.sum).collect();
        let _ = writeln!(
            out,
            "{} of {} sum values determine the inputs",
            deterministic.len(),
            table.rows.len()
        );
        records.push(json!({ "name": name, "table": table }));
    }
    write_output(&a.output, &json!(records))?;
    Ok(EXIT_OK)
}
