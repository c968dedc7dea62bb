//! Command-line front end. Every command reads a system description, runs
//! one analysis and prints a [`Document`].
//!
//! Exit codes: 0 success, 1 domain failure (invalid system, failed verdict,
//! ill-posed loop), 2 parse, usage or I/O error.

pub mod document;
pub mod format;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::algebra::RMat;
use crate::bae::{self, CERT_TOL};
use crate::error::Error;
use crate::feedback::{self, OptomechParams};
use crate::kalman::{self, KalmanPartition, Part};
use crate::model::{quadrature_realization, QuadratureRealization, SystemParams};
use crate::qnd::{self, QndVariableReport, QND_TOL};
use crate::simulate::{self, InitialState, SimConfig};
use crate::transfer::{self, BlockSelector, Quad, ZeroBlockCertificate};

pub use document::{Document, Format, Value};
pub use format::{ParseError, SystemDescription};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {error}")]
    Parse { path: String, error: String },
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error(transparent)]
    Domain(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            _ => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "qbae",
    version,
    about = "BAE and QND analysis of linear quantum systems"
)]
struct Cli {
    /// Tolerance for the command's main verdict.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for stochastic commands; overrides the file's sim.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the physical constraints on (S, C_minus, C_plus, Omega_minus, Omega_plus).
    Validate { path: PathBuf },
    /// Structure profile, BAE predictions and certificates, QND and Kalman reports.
    Analyze {
        path: PathBuf,
        #[arg(long)]
        bae: bool,
        #[arg(long)]
        qnd: bool,
        #[arg(long)]
        kalman: bool,
    },
    /// Evaluate the quadrature transfer matrix.
    Transfer {
        path: PathBuf,
        /// Evaluation point `re,im`; repeatable. Defaults to three points
        /// right of the spectrum.
        #[arg(long = "s", value_parser = parse_complex)]
        points: Vec<Complex64>,
        /// Also print Markov parameters up to this index.
        #[arg(long)]
        markov: Option<usize>,
    },
    /// Zero-block certificates. `--block out:in`, e.g. `q:p` for (q_out, p_in).
    Certify {
        path: PathBuf,
        #[arg(long = "block", value_parser = parse_selector)]
        blocks: Vec<BlockSelector>,
    },
    /// QND interaction test and QND variables.
    Qnd { path: PathBuf },
    /// Subsystem dimensions, declared Kalman partition and BAE criteria.
    Kalman { path: PathBuf },
    /// Close the feedback loop of a plant through a beamsplitter.
    Compose {
        plant: PathBuf,
        beamsplitter: PathBuf,
        out: PathBuf,
    },
    /// QND analysis of the two-cavity optomechanical system.
    Optomech {
        /// File with an optomech section.
        path: Option<PathBuf>,
        /// Delta1,Delta2,omega_m,lambda1,lambda2,kappa
        #[arg(long, value_delimiter = ',')]
        params: Option<Vec<f64>>,
    },
    /// Moment flow, stochastic trajectories and the conditional filter.
    Simulate {
        path: PathBuf,
        /// Check that the measured q outputs are martingales (needs a QND system)
        #[arg(long)]
        martingale: bool,
        /// Inject a pulse on one input quadrature and watch one output
        /// quadrature, `in:out`.
        #[arg(long, value_parser = parse_injection)]
        inject: Option<(Quad, Quad)>,
        /// Write the cumulative output of the first trajectory here.
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
}

fn parse_quad(s: &str) -> std::result::Result<Quad, String> {
    match s.trim() {
        "q" | "Q" => Ok(Quad::Q),
        "p" | "P" => Ok(Quad::P),
        other => Err(format!("expected q or p, got {other:?}")),
    }
}

fn parse_pair(s: &str) -> std::result::Result<(Quad, Quad), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected two quadratures a:b, got {s:?}"))?;
    Ok((parse_quad(a)?, parse_quad(b)?))
}

fn parse_selector(s: &str) -> std::result::Result<BlockSelector, String> {
    parse_pair(s).map(|(output, input)| BlockSelector::new(output, input))
}

fn parse_injection(s: &str) -> std::result::Result<(Quad, Quad), String> {
    parse_pair(s)
}

fn parse_complex(s: &str) -> std::result::Result<Complex64, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    match parts.as_slice() {
        [re] => Ok(Complex64::new(num(re)?, 0.0)),
        [re, im] => Ok(Complex64::new(num(re)?, num(im)?)),
        _ => Err(format!("expected re,im, got {s:?}")),
    }
}

struct Context {
    tol: Option<f64>,
    seed: Option<u64>,
}

/// A rendered report and the exit status it implies.
struct Outcome {
    doc: Document,
    status: i32,
}

impl Outcome {
    fn ok(doc: Document) -> Self {
        Self { doc, status: 0 }
    }

    fn verdict(doc: Document, pass: bool) -> Self {
        Self {
            doc,
            status: if pass { 0 } else { 1 },
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    let ctx = Context {
        tol: cli.tol,
        seed: cli.seed,
    };
    match execute(&ctx, cli.command) {
        Ok(outcome) => {
            let _ = out.write_all(outcome.doc.render(cli.format).as_bytes());
            outcome.status
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(ctx: &Context, command: Command) -> CliResult<Outcome> {
    match command {
        Command::Validate { path } => cmd_validate(ctx, &path),
        Command::Analyze {
            path,
            bae,
            qnd,
            kalman,
        } => {
            let all = !(bae || qnd || kalman);
            cmd_analyze(ctx, &path, all || bae, all || qnd, all || kalman)
        }
        Command::Transfer {
            path,
            points,
            markov,
        } => cmd_transfer(&path, &points, markov),
        Command::Certify { path, blocks } => cmd_certify(ctx, &path, &blocks),
        Command::Qnd { path } => cmd_qnd(ctx, &path),
        Command::Kalman { path } => cmd_kalman(ctx, &path),
        Command::Compose {
            plant,
            beamsplitter,
            out,
        } => cmd_compose(&plant, &beamsplitter, &out),
        Command::Optomech { path, params } => cmd_optomech(ctx, path.as_deref(), params),
        Command::Simulate {
            path,
            martingale,
            inject,
            trajectories,
        } => cmd_simulate(ctx, &path, martingale, inject, trajectories.as_deref()),
    }
}

struct Loaded {
    desc: SystemDescription,
    sha256: String,
}

fn load(path: &Path) -> CliResult<Loaded> {
    let bytes = std::fs::read(path).map_err(|error| CliError::Io {
        path: path.display().to_string(),
        error,
    })?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        error: e.to_string(),
    })?;
    let desc = SystemDescription::parse(&text).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        error: e.to_string(),
    })?;
    Ok(Loaded {
        desc,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Converts the description to a model, treating shape problems as a
/// malformed file.
fn described<T>(path: &Path, r: crate::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        error: e.to_string(),
    })
}

fn header(doc: &mut Document, loaded: &Loaded, params: &SystemParams) {
    doc.put("input.name", loaded.desc.name.as_str());
    doc.put("input.sha256", loaded.sha256.as_str());
    doc.put("input.n", params.n());
    doc.put("input.m", params.m());
}

/// Loads and validates; on violations returns the failing outcome.
fn load_valid(
    ctx: &Context,
    path: &Path,
) -> CliResult<std::result::Result<(Loaded, SystemParams, Document), Outcome>> {
    let loaded = load(path)?;
    let params = described(path, loaded.desc.system())?;
    let mut doc = Document::new();
    header(&mut doc, &loaded, &params);
    let report = match ctx.tol {
        Some(t) => params.validate_with(t),
        None => params.validate(),
    };
    doc.put("validation.valid", report.is_valid());
    for (i, v) in report.violations.iter().enumerate() {
        doc.put(
            format!("validation.violation.{i}"),
            format!("{}: {} (residual {:.3e})", v.field, v.message, v.residual),
        );
    }
    if report.is_valid() {
        Ok(Ok((loaded, params, doc)))
    } else {
        Ok(Err(Outcome::verdict(doc, false)))
    }
}

macro_rules! valid_or_return {
    ($e:expr) => {
        match $e? {
            Ok(v) => v,
            Err(outcome) => return Ok(outcome),
        }
    };
}

fn cmd_validate(ctx: &Context, path: &Path) -> CliResult<Outcome> {
    let (_, _, doc) = valid_or_return!(load_valid(ctx, path));
    Ok(Outcome::ok(doc))
}

fn selector_key(s: BlockSelector) -> String {
    format!("{}_out.{}_in", s.output.name(), s.input.name())
}

fn put_certificate(doc: &mut Document, prefix: &str, c: &ZeroBlockCertificate) {
    let k = format!("{prefix}.{}", selector_key(c.selector));
    doc.put(format!("{k}.verdict"), c.verdict);
    doc.put(format!("{k}.max_residual"), c.max_residual);
    doc.put(format!("{k}.feedthrough_residual"), c.feedthrough_residual);
    doc.put(format!("{k}.horizon"), c.horizon);
    doc.put(format!("{k}.spot_check_max"), c.spot_check_max);
    doc.put(format!("{k}.consistent"), c.consistent);
}

fn put_variable(doc: &mut Document, prefix: &str, r: &QndVariableReport) {
    doc.put(format!("{prefix}.variable"), r.variable.label());
    doc.put(format!("{prefix}.uncontrollable"), r.uncontrollable);
    doc.put(format!("{prefix}.observable"), r.observable);
    doc.put(format!("{prefix}.reconstructible"), r.reconstructible);
    doc.put(format!("{prefix}.is_qnd"), r.is_qnd);
}

fn bae_section(
    doc: &mut Document,
    params: &SystemParams,
    real: &QuadratureRealization,
    tol: f64,
) -> CliResult<bool> {
    let report = bae::analyze_with(params, crate::algebra::CLASSIFY_TOL, tol)?;
    let p = &report.profile;
    doc.put("bae.profile.s_class", format!("{:?}", p.s_class));
    doc.put("bae.profile.c_class", format!("{:?}", p.c_class));
    doc.put("bae.profile.omega_class", format!("{:?}", p.omega_class));
    doc.put(
        "bae.profile.re_omega_relation",
        format!("{:?}", p.re_omega_relation),
    );
    doc.put(
        "bae.profile.coupling_pattern",
        format!("{:?}", p.coupling_pattern),
    );
    doc.put("bae.predictions", report.predictions.len());
    for (i, pred) in report.predictions.iter().enumerate() {
        doc.put(
            format!("bae.prediction.{i}.block"),
            pred.selector.to_string(),
        );
        doc.put(format!("bae.prediction.{i}.rule"), pred.rule.to_string());
    }
    for s in BlockSelector::ALL {
        let c = transfer::certify_zero_block(real, s, tol);
        put_certificate(doc, "bae.certificate", &c);
    }
    for (i, f) in report.qnd_flags.iter().enumerate() {
        doc.put(format!("bae.qnd_flag.{i}.variable"), f.variable);
        doc.put(format!("bae.qnd_flag.{i}.rule"), f.rule.to_string());
        doc.put(format!("bae.qnd_flag.{i}.observable"), f.observable);
    }
    let confirmed = report.confirmed();
    doc.put("bae.confirmed", confirmed);
    Ok(confirmed)
}

fn qnd_section(doc: &mut Document, params: &SystemParams, tol: f64) -> CliResult<()> {
    let test = qnd::qnd_interaction_test(params, tol);
    doc.put("qnd.pair_residual", test.pair_residual);
    doc.put("qnd.doubled_residual", test.doubled_residual);
    doc.put("qnd.pair_verdict", test.pair_verdict);
    doc.put("qnd.doubled_verdict", test.doubled_verdict);
    doc.put("qnd.tests_agree", test.agree());
    doc.put("qnd.interaction", test.verdict());
    if test.verdict() {
        let c = qnd::qnd_interaction_consequences(params, tol)?;
        doc.put("qnd.self_adjoint", c.self_adjoint);
        doc.put("qnd.self_adjoint_residual", c.self_adjoint_residual);
        doc.put("qnd.commuting", c.commuting);
        doc.put("qnd.commuting_residual", c.commuting_residual);
        doc.put("qnd.markov_max", c.markov_max);
        doc.put("qnd.transfer_is_feedthrough", c.transfer_is_feedthrough);
        doc.put("qnd.dl_vanishes", c.dl_vanishes);
    }
    let ch = qnd::qnd_characterize(params, tol)?;
    doc.put("qnd.case", format!("{:?}", ch.case));
    if let Some(r) = ch.closed_form_residual {
        doc.put("qnd.closed_form_residual", r);
    }
    if let Some([a, b]) = ch.pair_observability {
        doc.put("qnd.pair_observable.0", a);
        doc.put("qnd.pair_observable.1", b);
    }
    let variables: Vec<&QndVariableReport> = ch.qnd_variables().collect();
    doc.put("qnd.coordinates", "q_1..q_n then p_1..p_n");
    doc.put("qnd.variables", variables.len());
    for (i, r) in variables.iter().enumerate() {
        put_variable(doc, &format!("qnd.variable.{i}"), r);
    }
    Ok(())
}

fn optomech_section(doc: &mut Document, p: &OptomechParams) -> CliResult<()> {
    let r = feedback::optomech_qnd_report(p)?;
    doc.put("optomech.coordinates", "q1 p1 q2 p2 q3 p3");
    put_variable(doc, "optomech.combination", &r.combination);
    doc.put(
        "optomech.controllability_residual",
        r.controllability_residual,
    );
    put_variable(doc, "optomech.q1", &r.q1);
    put_variable(doc, "optomech.q2", &r.q2);
    if let Some(pair) = &r.closed_pair {
        put_variable(doc, "optomech.closed_pair", pair);
    }
    put_dimensions(doc, "optomech.dimensions", &r.dimensions);
    Ok(())
}

fn put_dimensions(doc: &mut Document, prefix: &str, d: &kalman::SubsystemDimensions) {
    doc.put(format!("{prefix}.n1_co"), d.n1_co);
    doc.put(format!("{prefix}.n2_cbar_obar"), d.n2_cbar_obar);
    doc.put(format!("{prefix}.n3_h"), d.n3_h);
    doc.put(format!("{prefix}.dim_controllable"), d.dim_controllable);
    doc.put(format!("{prefix}.dim_unobservable"), d.dim_unobservable);
}

/// Returns false when a declared partition is not in Kalman form.
fn kalman_section(
    doc: &mut Document,
    desc: &SystemDescription,
    real: &QuadratureRealization,
    tol: f64,
) -> CliResult<bool> {
    let dims = kalman::subsystem_dimensions(real)?;
    put_dimensions(doc, "kalman.dimensions", &dims);
    let (part, form_ok) = match desc.partition(real) {
        Some(p) => {
            let part = p?;
            let check = kalman::verify_kalman_form(&part);
            for (name, r) in &check.residuals {
                doc.put(format!("kalman.form.{name}"), *r);
            }
            if let Some(r) = check.h_coupling_residual {
                doc.put("kalman.form.h_coupling", r);
            }
            doc.put("kalman.form.verdict", check.verdict);
            (Some(part), check.verdict)
        }
        None if dims.n2_cbar_obar == 0 && dims.n3_h == 0 => {
            (Some(KalmanPartition::co_only(real)?), true)
        }
        None => {
            doc.put(
                "kalman.criteria",
                "skipped: no partition declared and the system is not fully co",
            );
            (None, true)
        }
    };
    if let Some(part) = part {
        let crit =
            kalman::kalman_bae_criteria(&part.c_block(Part::Co), &part.b_block(Part::Co), tol)?;
        doc.put("kalman.criteria.q_wrt_p", crit.q_wrt_p);
        doc.put("kalman.criteria.q_wrt_p_residual", crit.q_wrt_p_residual);
        doc.put("kalman.criteria.p_wrt_q", crit.p_wrt_q);
        doc.put("kalman.criteria.p_wrt_q_residual", crit.p_wrt_q_residual);
        doc.put("kalman.gamma.re_residual", crit.gamma_symmetry.re_residual);
        doc.put("kalman.gamma.im_residual", crit.gamma_symmetry.im_residual);
        doc.put(
            "kalman.gamma.combined_residual",
            crit.gamma_symmetry.combined_residual,
        );
    }
    Ok(form_ok)
}

fn cmd_analyze(
    ctx: &Context,
    path: &Path,
    bae: bool,
    qnd: bool,
    kalman: bool,
) -> CliResult<Outcome> {
    let (loaded, params, mut doc) = valid_or_return!(load_valid(ctx, path));
    let real = quadrature_realization(&params)?;
    if bae {
        bae_section(&mut doc, &params, &real, ctx.tol.unwrap_or(CERT_TOL))?;
    }
    if qnd {
        qnd_section(&mut doc, &params, ctx.tol.unwrap_or(QND_TOL))?;
        if let Some(p) = described(path, loaded.desc.optomech_params())? {
            optomech_section(&mut doc, &p)?;
        }
    }
    let mut ok = true;
    if kalman {
        ok = kalman_section(&mut doc, &loaded.desc, &real, ctx.tol.unwrap_or(CERT_TOL))?;
    }
    Ok(Outcome::verdict(doc, ok))
}

fn put_complex_matrix(doc: &mut Document, prefix: &str, g: &crate::algebra::CMat) {
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            doc.put(format!("{prefix}.{i}.{j}.re"), g[(i, j)].re);
            doc.put(format!("{prefix}.{i}.{j}.im"), g[(i, j)].im);
        }
    }
}

fn put_real_matrix(doc: &mut Document, prefix: &str, g: &RMat) {
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            doc.put(format!("{prefix}.{i}.{j}"), g[(i, j)]);
        }
    }
}

fn cmd_transfer(path: &Path, points: &[Complex64], markov: Option<usize>) -> CliResult<Outcome> {
    let loaded = load(path)?;
    let params = described(path, loaded.desc.system())?;
    let mut doc = Document::new();
    header(&mut doc, &loaded, &params);
    let real = quadrature_realization(&params)?;
    for (i, z) in transfer::spectrum(&real.a).iter().enumerate() {
        doc.put(format!("transfer.pole.{i}.re"), z.re);
        doc.put(format!("transfer.pole.{i}.im"), z.im);
    }
    let points = if points.is_empty() {
        transfer::spot_points(&real, 3)
    } else {
        points.to_vec()
    };
    for (k, s) in points.iter().enumerate() {
        let g = transfer::evaluate(&real, *s)?;
        doc.put(format!("transfer.point.{k}.s.re"), s.re);
        doc.put(format!("transfer.point.{k}.s.im"), s.im);
        put_complex_matrix(&mut doc, &format!("transfer.point.{k}.g"), &g);
    }
    if let Some(k_max) = markov {
        put_real_matrix(&mut doc, "transfer.feedthrough", &real.d);
        for (k, mk) in transfer::markov(&real, k_max).iter().enumerate() {
            put_real_matrix(&mut doc, &format!("transfer.markov.{k}"), mk);
        }
    }
    Ok(Outcome::ok(doc))
}

fn cmd_certify(ctx: &Context, path: &Path, blocks: &[BlockSelector]) -> CliResult<Outcome> {
    let (_, params, mut doc) = valid_or_return!(load_valid(ctx, path));
    let real = quadrature_realization(&params)?;
    let tol = ctx.tol.unwrap_or(CERT_TOL);
    let requested = !blocks.is_empty();
    let blocks = if requested {
        blocks
    } else {
        &BlockSelector::ALL[..]
    };
    doc.put("certify.tol", tol);
    let mut all = true;
    for &s in blocks {
        let c = transfer::certify_zero_block(&real, s, tol);
        all &= c.verdict;
        put_certificate(&mut doc, "certify", &c);
    }
    // Without explicit blocks the command only reports.
    Ok(Outcome::verdict(doc, all || !requested))
}

fn cmd_qnd(ctx: &Context, path: &Path) -> CliResult<Outcome> {
    let (loaded, params, mut doc) = valid_or_return!(load_valid(ctx, path));
    qnd_section(&mut doc, &params, ctx.tol.unwrap_or(QND_TOL))?;
    if let Some(p) = described(path, loaded.desc.optomech_params())? {
        optomech_section(&mut doc, &p)?;
    }
    Ok(Outcome::ok(doc))
}

fn cmd_kalman(ctx: &Context, path: &Path) -> CliResult<Outcome> {
    let (loaded, params, mut doc) = valid_or_return!(load_valid(ctx, path));
    let real = quadrature_realization(&params)?;
    let ok = kalman_section(&mut doc, &loaded.desc, &real, ctx.tol.unwrap_or(CERT_TOL))?;
    Ok(Outcome::verdict(doc, ok))
}

fn cmd_compose(plant_path: &Path, bs_path: &Path, out_path: &Path) -> CliResult<Outcome> {
    let plant_file = load(plant_path)?;
    let bs_file = load(bs_path)?;
    let plant = described(plant_path, plant_file.desc.plant())?;
    let bs = described(bs_path, bs_file.desc.beamsplitter())?;
    let red = feedback::reduce_network_detailed(&plant, &bs)?;
    let (reduced, fb) = feedback::verify_feedback_bae(&plant, &bs)?;
    let mut desc = SystemDescription::from_system(
        &format!("{} (closed loop)", plant_file.desc.name),
        &reduced,
    );
    desc.sim = plant_file.desc.sim.clone();
    let json = desc.to_json();
    std::fs::write(out_path, json.as_bytes()).map_err(|error| CliError::Io {
        path: out_path.display().to_string(),
        error,
    })?;

    let mut doc = Document::new();
    doc.put("input.plant", plant_file.desc.name.as_str());
    doc.put("input.plant_sha256", plant_file.sha256.as_str());
    doc.put("input.beamsplitter_sha256", bs_file.sha256.as_str());
    doc.put(
        "compose.output_sha256",
        hex::encode(Sha256::digest(json.as_bytes())),
    );
    doc.put("compose.n", reduced.n());
    doc.put("compose.m", reduced.m());
    doc.put("compose.loop_sigma_min", red.loop_sigma_min);
    doc.put("compose.hermitian_defect", red.hermitian_defect);
    doc.put("compose.symmetric_defect", red.symmetric_defect);
    doc.put("compose.valid", reduced.validate().is_valid());
    doc.put("feedback.omega_real_residual", fb.omega_real_residual);
    doc.put("feedback.omega_imaginary", fb.omega_imaginary);
    doc.put(
        "feedback.coupling_class",
        format!("{:?}", fb.coupling_class),
    );
    doc.put(
        "feedback.scattering_class",
        format!("{:?}", fb.scattering_class),
    );
    doc.put("feedback.bae_verdict", fb.verdict);
    for (i, pred) in fb.analysis.predictions.iter().enumerate() {
        doc.put(
            format!("feedback.prediction.{i}.block"),
            pred.selector.to_string(),
        );
        doc.put(
            format!("feedback.prediction.{i}.rule"),
            pred.rule.to_string(),
        );
    }
    for c in &fb.analysis.certificates {
        put_certificate(&mut doc, "feedback.certificate", c);
    }
    let qnd_vars = feedback::reduced_qnd_variables(&reduced)?;
    doc.put("feedback.qnd_variables", qnd_vars.len());
    Ok(Outcome::ok(doc))
}

fn cmd_optomech(
    ctx: &Context,
    path: Option<&Path>,
    params: Option<Vec<f64>>,
) -> CliResult<Outcome> {
    let mut doc = Document::new();
    let p = match (path, params) {
        (_, Some(v)) => match v.as_slice() {
            &[d1, d2, w, l1, l2, k] => OptomechParams::new(d1, d2, w, l1, l2, k)?,
            _ => {
                return Err(CliError::Usage(format!(
                    "--params takes 6 values, got {}",
                    v.len()
                )))
            }
        },
        (Some(path), None) => {
            let loaded = load(path)?;
            doc.put("input.name", loaded.desc.name.as_str());
            doc.put("input.sha256", loaded.sha256.as_str());
            described(path, loaded.desc.optomech_params())?.ok_or_else(|| CliError::Parse {
                path: path.display().to_string(),
                error: "missing optomech section".into(),
            })?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "optomech needs a file with an optomech section or --params".into(),
            ))
        }
    };
    doc.put("optomech.Delta1", p.delta1);
    doc.put("optomech.Delta2", p.delta2);
    doc.put("optomech.omega_m", p.omega_m);
    doc.put("optomech.lambda1", p.lambda1);
    doc.put("optomech.lambda2", p.lambda2);
    doc.put("optomech.kappa", p.kappa);
    let sys = feedback::optomech_system(&p);
    doc.put("optomech.valid", sys.validate().is_valid());
    optomech_section(&mut doc, &p)?;
    let test = qnd::qnd_interaction_test(&sys, ctx.tol.unwrap_or(QND_TOL));
    doc.put("optomech.qnd_interaction", test.verdict());
    Ok(Outcome::ok(doc))
}

/// Horizon and ensemble defaults: ten characteristic times, 200 paths, at
/// most about 1000 recorded points.
fn sim_config(
    ctx: &Context,
    desc: &SystemDescription,
    real: &QuadratureRealization,
    ensemble_default: usize,
) -> CliResult<SimConfig> {
    let sim = desc.sim.clone().unwrap_or_default();
    let horizon = sim
        .horizon
        .unwrap_or_else(|| 10.0 * simulate::characteristic_time(real));
    let seed = ctx.seed.or(sim.seed).unwrap_or(0);
    let ensemble = sim.ensemble.unwrap_or(ensemble_default);
    let cfg = match sim.dt {
        Some(dt) => SimConfig::new(dt, horizon, seed, ensemble)?,
        None => SimConfig::default_for(real, horizon, seed, ensemble)?,
    };
    let stride = sim.stride.unwrap_or_else(|| cfg.steps().div_ceil(1000));
    Ok(cfg.with_stride(stride))
}

fn initial_state(desc: &SystemDescription, dim: usize) -> CliResult<InitialState> {
    match desc.sim.as_ref().and_then(|s| s.initial_mean.clone()) {
        Some(mean) if mean.len() != dim => Err(CliError::Domain(Error::Config(format!(
            "sim.initial_mean has {} entries, expected {dim}",
            mean.len()
        )))),
        Some(mean) => Ok(InitialState::displaced_vacuum(simulate::RVec::from_vec(
            mean,
        ))),
        None => Ok(InitialState::vacuum(dim)),
    }
}

fn cmd_simulate(
    ctx: &Context,
    path: &Path,
    martingale: bool,
    inject: Option<(Quad, Quad)>,
    trajectories: Option<&Path>,
) -> CliResult<Outcome> {
    let (loaded, params, mut doc) = valid_or_return!(load_valid(ctx, path));
    let real = quadrature_realization(&params)?;
    let cfg = sim_config(ctx, &loaded.desc, &real, 200)?;
    let init = initial_state(&loaded.desc, real.a.nrows())?;
    let m = real.m();
    doc.put("sim.dt", cfg.dt);
    doc.put("sim.horizon", cfg.horizon);
    doc.put("sim.steps", cfg.steps());
    doc.put("sim.seed", cfg.seed);
    doc.put("sim.ensemble", cfg.ensemble);
    doc.put("sim.stride", cfg.stride);
    doc.put(
        "sim.characteristic_time",
        simulate::characteristic_time(&real),
    );

    // Integrated output mean from the moment flow, at full resolution.
    let flow = simulate::moment_flow(&real, &cfg.clone().with_stride(1), &init, None)?;
    let mut expected = simulate::RVec::zeros(2 * m);
    for w in flow.output_means.windows(2) {
        expected += (&w[0] + &w[1]) * (0.5 * cfg.dt);
    }
    let last = flow.covs.last().expect("non-empty flow");
    doc.put(
        "moments.final_mean_norm",
        flow.means.last().expect("non-empty flow").norm(),
    );
    doc.put("moments.final_cov_trace", last.trace());

    let paths = simulate::stochastic_trajectories(&real, &cfg, &init, None)?;
    let n = paths.records.len() as f64;
    let totals: Vec<simulate::RVec> = paths.records.iter().map(|r| r.column_sum()).collect();
    let mut max_z = 0.0f64;
    for ch in 0..2 * m {
        let vals: Vec<f64> = totals.iter().map(|t| t[ch]).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let se = (var / n).sqrt().max(1e-300);
        max_z = max_z.max((mean - expected[ch]).abs() / se);
    }
    doc.put("trajectories.output_mean_max_z", max_z);

    let filter = simulate::gaussian_filter(&real, &paths, &cfg, &init, None)?;
    doc.put("filter.min_uncertainty_eig", filter.min_uncertainty_eig);
    doc.put(
        "filter.uncertainty_compatible",
        filter.uncertainty_compatible(),
    );
    let white = simulate::whiteness(&filter.innovations, 5);
    doc.put("filter.innovation_samples", white.samples);
    for (i, v) in white.variances.iter().enumerate() {
        doc.put(format!("filter.innovation_variance.{i}"), *v);
    }
    doc.put("filter.variance_band", white.variance_band);
    doc.put("filter.max_autocorrelation", white.max_autocorrelation);
    doc.put("filter.autocorrelation_band", white.autocorrelation_band);
    doc.put("filter.whiteness_pass", white.pass);

    let mut ok = true;
    if martingale {
        let rep = simulate::martingale_check(&params, &cfg, &init)?;
        for (j, c) in rep.channels.iter().enumerate() {
            doc.put(format!("martingale.{j}.mean_initial"), c.mean_initial);
            doc.put(format!("martingale.{j}.mean_final"), c.mean_final);
            doc.put(format!("martingale.{j}.standard_error"), c.standard_error);
            doc.put(format!("martingale.{j}.pass"), c.pass);
        }
        doc.put("martingale.pass", rep.pass);
        ok &= rep.pass;
    }
    if let Some((input, output)) = inject {
        let pulse = simulate::gaussian_pulse(&cfg, 1.0, cfg.horizon / 4.0, cfg.horizon / 20.0);
        let res = simulate::injection_bae_test(&real, input, output, &pulse, &cfg)?;
        doc.put("inject.input", input.name());
        doc.put("inject.output", output.name());
        doc.put("inject.deviation", res.deviation);
        let cert = transfer::certify_zero_block(&real, BlockSelector::new(output, input), CERT_TOL);
        doc.put("inject.certificate", cert.verdict);
    }
    if let Some(out) = trajectories {
        let text = trajectory_table(&paths.records[0], cfg.dt, cfg.stride, m);
        std::fs::write(out, text.as_bytes()).map_err(|error| CliError::Io {
            path: out.display().to_string(),
            error,
        })?;
        doc.put("output.trajectories", out.display().to_string());
    }
    Ok(Outcome::verdict(doc, ok))
}

/// Cumulative output of one trajectory: a header line, then one row per
/// recorded time.
fn trajectory_table(record: &RMat, dt: f64, stride: usize, m: usize) -> String {
    let mut out = String::from("t");
    for q in [Quad::Q, Quad::P] {
        for j in 1..=m {
            let _ = write!(out, " {}_out_{j}", q.name());
        }
    }
    out.push('\n');
    let steps = record.ncols();
    let mut y = simulate::RVec::zeros(record.nrows());
    let row = |k: usize, y: &simulate::RVec, out: &mut String| {
        let _ = write!(out, "{:.16e}", k as f64 * dt);
        for v in y.iter() {
            let _ = write!(out, " {v:.16e}");
        }
        out.push('\n');
    };
    row(0, &y, &mut out);
    for k in 0..steps {
        y += record.column(k);
        if (k + 1) % stride == 0 || k + 1 == steps {
            row(k + 1, &y, &mut out);
        }
    }
    out
}
