//! Command-line front end. Exit status 0 on success, 2 on any validation error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::attacker::{objective, optimal_pair, FlipPair};
use crate::campaign::{
    analytic_rate, compare_pairs, message_bounds, simulate_bit, simulate_message, CampaignConfig,
    MessageSpec, Mode,
};
use crate::can::{
    attack_schedule, case_study_frame, census, encode_frame_with, frame_to_message_spec, AckSlot,
    BitStream, CanFrame,
};
use crate::error::{param, Error, Result};
use crate::grid::{grid_to_feasible, load_grid, resolve_fixture, GridRow, SusceptibilityGrid};
use crate::profiles::profile;
use crate::receiver::{flip_probability, ReceiverParams};
use crate::report::Report;
use crate::rng::split_seed;
use crate::signal::{
    decompose, inject_common_mode, subtractor_output, DifferentialPair, ModePair, SubtractorParams,
    Waveform,
};
use crate::sinad::sinad;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "emsi",
    version,
    about = "Common-mode signal injection simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a `d_plus,d_minus` CSV into `v_dm,v_cm`.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        sample_rate: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sweep the physics chain and write a susceptibility grid.
    SimulatePhysics(SimulateArgs),
    /// SINAD of the `v` column of a waveform CSV.
    Sinad {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        sample_rate: f64,
        #[arg(long)]
        fundamental: f64,
    },
    /// Pick the flip pair maximizing the weighted-sum objective.
    Optimize {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        g: f64,
        #[arg(long, value_parser = parse_bit)]
        target: u8,
    },
    /// Single-bit injection campaign.
    InjectBit {
        #[arg(long, value_parser = parse_bit)]
        intended: u8,
        #[arg(long, value_parser = parse_bit)]
        actual: u8,
        #[command(flatten)]
        campaign: CampaignArgs,
    },
    /// Message injection campaign onto an idle bus (or explicit line bits).
    InjectMessage {
        #[command(flatten)]
        message: MessageArgs,
        /// Line bits as a 0/1 string; defaults to all recessive.
        #[arg(long)]
        line: Option<String>,
        #[command(flatten)]
        campaign: CampaignArgs,
    },
    /// Encode a CAN base frame.
    CanEncode {
        #[command(flatten)]
        frame: FrameArgs,
        /// Seconds per bit for the radiation schedule.
        #[arg(long, default_value_t = 2e-6)]
        bit_time: f64,
        #[arg(long, value_enum, default_value_t = AckArg::Dominant)]
        ack: AckArg,
    },
    /// Independent and grouped success bounds for a message.
    Bounds {
        #[arg(long)]
        u: f64,
        #[command(flatten)]
        message: MessageArgs,
    },
    /// One-sided Welch test: are the success rates in A higher than in B?
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value = "nrf52833")]
    profile: String,
    /// JSON with optional `subtractor` / `receiver` objects replacing the profile's.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 10e6)]
    freq_start: f64,
    #[arg(long, default_value_t = 100e6)]
    freq_stop: f64,
    #[arg(long, default_value_t = 1e6)]
    freq_step: f64,
    /// Peak-to-peak drive levels in volts.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 4.0])]
    amplitudes: Vec<f64>,
    #[arg(long, default_value_t = 256)]
    trials: u64,
    #[arg(long)]
    seed: u64,
    /// Grid CSV destination.
    #[arg(long)]
    output: PathBuf,
    /// Optional CSV of bypassed amplitude and SINAD per setting.
    #[arg(long)]
    bypass_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CampaignArgs {
    #[arg(long, default_value_t = 1.0)]
    g: f64,
    #[arg(long)]
    u: f64,
    #[arg(long, default_value_t = 0.0)]
    v: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Independent)]
    mode: ModeArg,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Args)]
struct FrameArgs {
    /// Named frame; `case-study` is identifier 0x001 with no data.
    #[arg(long, value_enum)]
    frame: Option<NamedFrame>,
    /// Identifier, hex (0x...) or decimal.
    #[arg(long, value_parser = parse_id)]
    id: Option<u16>,
    #[arg(long)]
    dlc: Option<u8>,
    /// Data bytes as hex.
    #[arg(long, default_value = "")]
    data: String,
}

#[derive(Debug, Args)]
struct MessageArgs {
    #[command(flatten)]
    frame: FrameArgs,
    /// Raw intended bits as a 0/1 string instead of a frame.
    #[arg(long, conflicts_with_all = ["frame", "id"])]
    bits: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NamedFrame {
    CaseStudy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Independent,
    Grouped,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AckArg {
    Dominant,
    Recessive,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Independent => Mode::Independent,
            ModeArg::Grouped => Mode::GroupedApprox,
        }
    }
}

fn parse_bit(s: &str) -> std::result::Result<u8, String> {
    match s {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(format!("expected 0 or 1, got `{s}`")),
    }
}

fn parse_id(s: &str) -> std::result::Result<u16, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u16::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("bad identifier `{s}`: {e}"))
}

fn parse_hex_bytes(s: &str) -> Result<Vec<u8>> {
    let digits: String = s
        .trim_start_matches("0x")
        .chars()
        .filter(|c| !matches!(c, ':' | ' ' | '_' | '-'))
        .collect();
    if !digits.len().is_multiple_of(2) {
        return Err(param(format!("data `{s}` has an odd number of hex digits")));
    }
    (0..digits.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&digits[i..i + 2], 16)
                .map_err(|_| param(format!("data `{s}` is not hex")))
        })
        .collect()
}

fn parse_bit_string(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != '_')
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(param(format!("bit string contains `{c}`"))),
        })
        .collect()
}

impl FrameArgs {
    fn frame(&self) -> Result<Option<CanFrame>> {
        if let Some(NamedFrame::CaseStudy) = self.frame {
            return Ok(Some(case_study_frame()));
        }
        let Some(id) = self.id else {
            return Ok(None);
        };
        let data = parse_hex_bytes(&self.data)?;
        let dlc = self.dlc.unwrap_or(data.len() as u8);
        Ok(Some(CanFrame::new(id, dlc, data)?))
    }
}

#[derive(Debug, Serialize)]
struct MessageSource {
    frame: Option<CanFrame>,
    bits: String,
}

impl MessageArgs {
    fn resolve(&self) -> Result<(MessageSource, Vec<u8>)> {
        if let Some(b) = &self.bits {
            let bits = parse_bit_string(b)?;
            if bits.is_empty() {
                return Err(param("bit string is empty"));
            }
            return Ok((
                MessageSource {
                    frame: None,
                    bits: bits_to_string(&bits),
                },
                bits,
            ));
        }
        let frame = self
            .frame
            .frame()?
            .ok_or_else(|| param("give --frame, --id or --bits"))?;
        let bs = encode_frame_with(&frame, AckSlot::Dominant)?;
        Ok((
            MessageSource {
                frame: Some(frame),
                bits: bs.to_string(),
            },
            bs.bits,
        ))
    }
}

fn bits_to_string(bits: &[u8]) -> String {
    bits.iter()
        .map(|b| if *b == 0 { '0' } else { '1' })
        .collect()
}

/// Parse `argv` (including the program name) and run the command.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match run(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INVALID
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn emit(out: &mut dyn Write, report: &Report) -> Result<()> {
    out.write_all(report.to_json().as_bytes())
        .map_err(io_err(Path::new("<stdout>")))
}

fn report<C: Serialize, R: Serialize>(
    command: &str,
    seed: Option<u64>,
    config: &C,
    result: &R,
) -> Result<Report> {
    Report::new(command, seed, config, result).map_err(|e| param(e.to_string()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Load {
        path: path.to_path_buf(),
        row: e.position().map_or(0, |p| p.line()),
        msg: e.to_string(),
    }
}

#[derive(Debug, Deserialize)]
struct WireRow {
    d_plus: f64,
    d_minus: f64,
}

#[derive(Debug, Deserialize)]
struct VoltageRow {
    v: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    rdr.deserialize()
        .map(|r| r.map_err(csv_err(path)))
        .collect()
}

fn write_text(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(io_err(p)),
        None => out
            .write_all(text.as_bytes())
            .map_err(io_err(Path::new("<stdout>"))),
    }
}

fn read_samples(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut v = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()) {
            if tok.is_empty() {
                continue;
            }
            let x: f64 = tok.parse().map_err(|_| Error::Load {
                path: path.to_path_buf(),
                row: i as u64 + 1,
                msg: format!("`{tok}` is not a number"),
            })?;
            v.push(x);
        }
    }
    Ok(v)
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct PhysicsOverrides {
    subtractor: Option<SubtractorParams>,
    receiver: Option<ReceiverParams>,
}

fn run(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Decompose {
            input,
            sample_rate,
            output,
        } => {
            let rows: Vec<WireRow> = read_rows(&input)?;
            let (dp, dm) = rows.iter().map(|r| (r.d_plus, r.d_minus)).unzip();
            let pair = DifferentialPair::from_wires(
                Waveform::new(dp, sample_rate)?,
                Waveform::new(dm, sample_rate)?,
            )?;
            let m = decompose(&pair);
            let mut text = String::from("v_dm,v_cm\n");
            for (a, b) in m.v_dm.samples().iter().zip(m.v_cm.samples()) {
                text.push_str(&format!("{a},{b}\n"));
            }
            write_text(output.as_deref(), &text, out)
        }
        Command::SimulatePhysics(args) => simulate_physics(args, out),
        Command::Sinad {
            input,
            sample_rate,
            fundamental,
        } => {
            let rows: Vec<VoltageRow> = read_rows(&input)?;
            let w = Waveform::new(rows.into_iter().map(|r| r.v).collect(), sample_rate)?;
            let db = sinad(&w, fundamental)?;
            let cfg =
                json!({"input": input, "sample_rate": sample_rate, "fundamental": fundamental});
            emit(
                out,
                &report("sinad", None, &cfg, &json!({ "sinad_db": db }))?,
            )
        }
        Command::Optimize { grid, g, target } => {
            crate::attacker::check_g(g)?;
            let path = resolve_fixture(&grid);
            let fs = grid_to_feasible(&load_grid(&path)?);
            let best = optimal_pair(&fs, g, target);
            let cfg = json!({"grid": grid, "g": g, "target": target});
            let result = json!({
                "pair": best,
                "send_nothing": best.is_send_nothing(),
                "objective": objective(&best, g, target),
                "candidates": fs.pairs.len(),
            });
            emit(out, &report("optimize", None, &cfg, &result)?)
        }
        Command::InjectBit {
            intended,
            actual,
            campaign,
        } => {
            let cfg = campaign_config(&campaign)?;
            let result = simulate_bit(intended, actual, cfg.g, &cfg.pair, &cfg)?;
            let spec = MessageSpec::new(vec![intended], vec![actual])?;
            let config = json!({"campaign": cfg, "intended": intended, "actual": actual});
            let body = json!({
                "campaign": result,
                "analytic_rate": analytic_rate(&spec, &cfg)?,
            });
            emit(
                out,
                &report("inject-bit", Some(cfg.master_seed), &config, &body)?,
            )
        }
        Command::InjectMessage {
            message,
            line,
            campaign,
        } => {
            let cfg = campaign_config(&campaign)?;
            let (source, bits) = message.resolve()?;
            let spec = match &line {
                Some(l) => MessageSpec::new(bits.clone(), parse_bit_string(l)?)?,
                None => frame_to_message_spec(&BitStream {
                    annotations: Vec::new(),
                    bits: bits.clone(),
                })?,
            };
            let result = simulate_message(&spec, &cfg)?;
            let (lower, upper) = message_bounds(&bits, cfg.pair.u)?;
            let config = json!({
                "campaign": cfg,
                "message": source,
                "line": bits_to_string(&spec.line_bits),
            });
            let body = json!({
                "campaign": result,
                "analytic_rate": analytic_rate(&spec, &cfg)?,
                "bounds": {"lower": lower, "upper": upper},
            });
            emit(
                out,
                &report("inject-message", Some(cfg.master_seed), &config, &body)?,
            )
        }
        Command::CanEncode {
            frame,
            bit_time,
            ack,
        } => {
            let f = frame
                .frame()?
                .ok_or_else(|| param("give --frame or --id"))?;
            let ack = match ack {
                AckArg::Dominant => AckSlot::Dominant,
                AckArg::Recessive => AckSlot::Recessive,
            };
            let bs = encode_frame_with(&f, ack)?;
            let schedule = attack_schedule(&bs, bit_time)?;
            let (dominant, groups) = census(&bs);
            let config = json!({"frame": f, "bit_time": bit_time, "ack": ack});
            let annotated: Vec<_> = bs
                .bits
                .iter()
                .zip(&bs.annotations)
                .map(|(b, f)| json!({"bit": b, "field": f}))
                .collect();
            let body = json!({
                "crc": format!("{:#06x}", f.crc),
                "bits": bs.to_string(),
                "annotated": annotated,
                "dominant": dominant,
                "groups": groups,
                "schedule": schedule,
            });
            emit(out, &report("can-encode", None, &config, &body)?)
        }
        Command::Bounds { u, message } => {
            let (source, bits) = message.resolve()?;
            let (lower, upper) = message_bounds(&bits, u)?;
            let (dominant, groups) = crate::campaign::count_dominant_groups(&bits);
            let config = json!({"u": u, "message": source});
            let body = json!({
                "lower": lower,
                "upper": upper,
                "dominant": dominant,
                "groups": groups,
            });
            emit(out, &report("bounds", None, &config, &body)?)
        }
        Command::Compare { a, b, alpha } => {
            let sa = read_samples(&a)?;
            let sb = read_samples(&b)?;
            let verdict = compare_pairs(&sa, &sb, alpha)?;
            let w = crate::stats::welch_greater(&sa, &sb)?;
            let config = json!({"a": a, "b": b, "alpha": alpha});
            let body = json!({
                "verdict": verdict,
                "mean_a": crate::stats::mean(&sa),
                "mean_b": crate::stats::mean(&sb),
                "t": w.map(|w| w.t),
                "df": w.map(|w| w.df),
                "p": w.map(|w| w.p),
            });
            emit(out, &report("compare", None, &config, &body)?)
        }
    }
}

fn campaign_config(a: &CampaignArgs) -> Result<CampaignConfig> {
    let cfg = CampaignConfig {
        trials: a.trials,
        master_seed: a.seed,
        mode: a.mode.into(),
        g: a.g,
        pair: FlipPair::new(a.u, a.v)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Record length used for bypass and SINAD columns: 10 bit periods.
const BYPASS_BITS: usize = 10;

fn simulate_physics(a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let mut prof = profile(&a.profile)?;
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let o: PhysicsOverrides = serde_json::from_str(&text).map_err(|e| Error::Load {
            path: path.clone(),
            row: e.line() as u64,
            msg: e.to_string(),
        })?;
        if let Some(s) = o.subtractor {
            prof.subtractor = s;
        }
        if let Some(r) = o.receiver {
            prof.receiver = r;
        }
    }
    prof.subtractor.validate()?;
    prof.receiver.validate()?;
    if !(a.freq_step > 0.0 && a.freq_start > 0.0 && a.freq_stop >= a.freq_start) {
        return Err(param("need 0 < freq_start <= freq_stop and freq_step > 0"));
    }
    if a.amplitudes.is_empty() || a.amplitudes.iter().any(|x| x.is_nan() || *x <= 0.0) {
        return Err(param("amplitudes must be > 0"));
    }
    let steps = ((a.freq_stop - a.freq_start) / a.freq_step + 1e-9).floor() as u64;
    let freqs: Vec<f64> = (0..=steps)
        .map(|k| a.freq_start + k as f64 * a.freq_step)
        .collect();

    let sp = &prof.subtractor;
    let rp = &prof.receiver;
    let mut grid = SusceptibilityGrid {
        comments: vec![format!(
            "# simulated with profile {}, {} trials per bit value, seed {}",
            prof.name, a.trials, a.seed
        )],
        rows: Vec::new(),
    };
    let mut bypass = String::from("freq_hz,amplitude_vpp,g_cm_db,bypass_vpp,sinad_db\n");
    for (fi, &f) in freqs.iter().enumerate() {
        let u_seed = split_seed(a.seed, 2 * fi as u64 + 1);
        let v_seed = split_seed(a.seed, 2 * fi as u64);
        for &amp in &a.amplitudes {
            let u = flip_probability(1, amp, f, sp, rp, a.trials, u_seed)?;
            let v = flip_probability(0, amp, f, sp, rp, a.trials, v_seed)?;
            grid.rows.push(GridRow {
                freq_hz: f,
                amplitude_vpp: amp,
                u,
                v,
                n: a.trials,
            });
            if a.bypass_output.is_some() {
                let (vpp, db) = bypass_point(sp, rp, f, amp, split_seed(v_seed, 7))?;
                bypass.push_str(&format!(
                    "{f},{amp},{},{vpp},{}\n",
                    sp.g_cm_curve.gain_db(f, sp.corner_freq),
                    db.map_or(String::new(), |d| d.to_string())
                ));
            }
        }
    }
    grid.save(&a.output)?;
    if let Some(p) = &a.bypass_output {
        std::fs::write(p, &bypass).map_err(io_err(p))?;
    }
    let config = json!({
        "profile": prof,
        "freqs_hz": {"start": a.freq_start, "stop": a.freq_stop, "step": a.freq_step},
        "amplitudes_vpp": a.amplitudes,
        "trials": a.trials,
    });
    let body = json!({
        "rows": grid.rows.len(),
        "grid": a.output,
        "bypass": a.bypass_output,
    });
    emit(
        out,
        &report("simulate-physics", Some(a.seed), &config, &body)?,
    )
}

/// Peak-to-peak of the bypassed tone at the subtractor output and its SINAD.
fn bypass_point(
    sp: &SubtractorParams,
    rp: &ReceiverParams,
    f: f64,
    amp: f64,
    seed: u64,
) -> Result<(f64, Option<f64>)> {
    let n = rp.samples_per_bit() * BYPASS_BITS;
    let fs = rp.sample_rate;
    let idle = DifferentialPair::from_modes(ModePair::new(
        Waveform::constant(0.0, n, fs)?,
        Waveform::constant(0.0, n, fs)?,
    )?);
    let tone = Waveform::tone(0.5 * amp, f, 0.0, n, fs)?;
    let modes = inject_common_mode(&idle, &tone)?.modes().clone();
    let o = subtractor_output(&modes, sp, f, seed)?;
    Ok((o.peak_to_peak(), sinad(&o, f).ok()))
}
