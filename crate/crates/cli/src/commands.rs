//! Command dispatch.
//!
//! Grid commands write `<command>.csv`; check commands write
//! `<command>.json` holding every report, and their outcome passes only if
//! every report does. Randomized trials draw from one ChaCha8 stream seeded
//! by `--seed`, so identical inputs give byte-identical files.

use std::env;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use kp_rankone::baker::{grassmann_support, polynomiality_check, psi_time};
use kp_rankone::cases::IntertwiningData;
use kp_rankone::matkernel::{eigenvalues, DEFAULT_RANK_TOL};
use kp_rankone::sample::ComplexSampler;
use kp_rankone::tau::{tau_grid, u_field, Grid1D, TauEvaluator, TimeGrid};
use kp_rankone::verify::{
    bethe_check, complex_json, crosscheck_intertwining, crosscheck_wilson, gauge_link_residual, h3_residual,
    hbde_residual_with, kp_residual,
};
use kp_rankone::{CMatrix, Error, ScaledComplex, TimeVector, TripleReport, VerificationReport};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::output::{self, Row};
use crate::scenario::{CaseData, LoadedScenario, Scenario};
use crate::CliError;

/// Environment override for the default verification tolerance.
pub const TOL_ENV: &str = "KP_RANKONE_TOL";

const DEFAULT_T1: &str = "-5:5:101";
const DEFAULT_Z: &str = "2:20:10";
const SHIFT_GAP: f64 = 0.1;
const LATTICE: [[i32; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    TauGrid,
    UGrid,
    PsiGrid,
    VerifyHbde,
    VerifyKp,
    VerifyH3,
    Bethe,
    Spectral,
    Crosscheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::TauGrid => "tau-grid",
            Command::UGrid => "u-grid",
            Command::PsiGrid => "psi-grid",
            Command::VerifyHbde => "verify-hbde",
            Command::VerifyKp => "verify-kp",
            Command::VerifyH3 => "verify-h3",
            Command::Bethe => "bethe",
            Command::Spectral => "spectral",
            Command::Crosscheck => "crosscheck",
        }
    }

    fn default_trials(self) -> usize {
        match self {
            Command::VerifyH3 => 20,
            Command::VerifyHbde => 10,
            _ => 5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Flags {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub tol: Option<f64>,
    pub t1: Option<Grid1D>,
    pub t2: Option<Grid1D>,
    pub t3: Option<Grid1D>,
    pub z: Option<Grid1D>,
    pub truncation: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub pass: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            crate::EXIT_OK
        } else {
            crate::EXIT_FAILURE
        }
    }
}

/// Loads `path` and runs `cmd`. `validate` still writes its report when the
/// scenario is inadmissible.
pub fn execute(cmd: Command, path: &Path, flags: &Flags) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let scenario = Scenario::parse(&text)?;
    match scenario.materialize() {
        Ok(loaded) => run_command(cmd, &loaded, flags),
        Err(CliError::Inadmissible { reason, report }) if cmd == Command::Validate => {
            let tol = rank_tolerance(&scenario, flags);
            let r = validation_report(report.as_deref(), tol).with_context("reason", json!(reason));
            write_reports(cmd, &scenario, flags, vec![r], Vec::new())
        }
        Err(e) => Err(e),
    }
}

pub fn run_command(cmd: Command, sc: &LoadedScenario, flags: &Flags) -> Result<Outcome, CliError> {
    let ctx = Context::new(cmd, sc, flags)?;
    match cmd {
        Command::Validate => {
            let tol = rank_tolerance(&sc.scenario, flags);
            let mut r = validation_report(Some(&sc.triple.report(tol)), tol);
            if let Some(rank) = defect_rank(&sc.case) {
                r = r.with_context("defect_rank", json!(rank));
            }
            write_reports(cmd, &sc.scenario, flags, vec![r], Vec::new())
        }
        Command::TauGrid | Command::UGrid => {
            let grid = ctx.time_grid()?;
            let samples = if cmd == Command::TauGrid {
                tau_grid(&sc.triple, &grid, &ctx.base)?
            } else {
                u_field(&sc.triple, &grid, &ctx.base)?
            };
            let rows: Vec<Row> = samples
                .into_iter()
                .map(|s| Row {
                    coords: s.coords,
                    value: if cmd == Command::TauGrid {
                        Some(s.tau)
                    } else {
                        s.value.map(ScaledComplex::from_complex)
                    },
                    pole: s.pole,
                })
                .collect();
            let header = ["t1", "t2", "t3"];
            write_grid(cmd, flags, &header[..grid.dims()], &rows)
        }
        Command::PsiGrid => {
            let xs = ctx.grid(flags.t1, ctx.options().grids.t1, DEFAULT_T1)?.points();
            let zs = ctx.grid(flags.z, ctx.options().grids.z, DEFAULT_Z)?.points();
            let mut rows = Vec::with_capacity(xs.len() * zs.len());
            for &z in &zs {
                for &x in &xs {
                    let t = ctx.base.with_time(1, re(x));
                    let (value, pole) = match psi_time(&sc.triple, &t, re(z)) {
                        Ok(s) => (Some(s.value()), false),
                        Err(Error::Pole(_)) | Err(Error::SingularShift { .. }) => (None, true),
                        Err(e) => return Err(e.into()),
                    };
                    rows.push(Row {
                        coords: vec![x, z],
                        value,
                        pole,
                    });
                }
            }
            write_grid(cmd, flags, &["t1", "z"], &rows)
        }
        Command::VerifyHbde => {
            let ev = TauEvaluator::new(&sc.triple)?;
            let spectrum = eigenvalues(sc.triple.b())?;
            let mut s = ctx.sampler();
            let mut reports = Vec::new();
            for _ in 0..ctx.trials {
                let t = ctx.trial_times(&mut s);
                let c = ctx.shifts(&mut s, &spectrum)?;
                reports.push(worst_over_lattice("hbde", |k| hbde_residual_with(&ev, &t, c, k)));
            }
            ctx.finish(reports, Vec::new())
        }
        Command::VerifyKp => {
            let mut s = ctx.sampler();
            let reports = (0..ctx.trials)
                .map(|_| {
                    let t = ctx.trial_times(&mut s);
                    or_failed("kp", kp_residual(&sc.triple, &t))
                })
                .collect();
            ctx.finish(reports, Vec::new())
        }
        Command::VerifyH3 => {
            let mut s = ctx.sampler();
            let reports = match (sc.scenario.optional_matrix("P")?, sc.scenario.optional_matrix("Q")?) {
                (Some(p), Some(q)) => {
                    let c = match ctx.options().shifts {
                        Some(c) => c,
                        None => ctx.shifts(&mut s, &[])?,
                    };
                    vec![or_failed("h3", h3_residual(&p, &q, c))]
                }
                (None, None) => {
                    let n = sc.triple.n();
                    (0..ctx.trials)
                        .map(|_| {
                            let p = s.centered_matrix(n, n, 1.0);
                            let q = CMatrix::outer(&s.centered_vector(n, 1.0), &s.centered_vector(n, 1.0));
                            let c = s
                                .annulus_avoiding(3, 1.0, 3.0, &[], SHIFT_GAP)
                                .expect("three separated points fit in the annulus");
                            or_failed("h3", h3_residual(&p, &q, [c[0], c[1], c[2]]))
                        })
                        .collect()
                }
                _ => return Err(CliError::Usage("verify-h3 needs both P and Q, or neither".into())),
            };
            ctx.finish(reports, Vec::new())
        }
        Command::Bethe => {
            let CaseData::CalogeroMoser(d) = &sc.case else {
                return Err(CliError::Usage("bethe needs a calogero_moser scenario".into()));
            };
            let ms = ctx.options().bethe_m.clone().unwrap_or_else(|| vec![0, 1, 2]);
            let mut s = ctx.sampler();
            let fixed = ctx.options().bethe;
            let trials = if fixed.is_some() { 1 } else { ctx.trials };
            let mut reports = Vec::new();
            for _ in 0..trials {
                let [eta, l1, l2] = fixed.unwrap_or_else(|| [s.annulus(0.5, 1.5), s.centered(2.0), s.annulus(3.0, 4.0)]);
                for &m in &ms {
                    reports.push(
                        or_failed("bethe", bethe_check(d, eta, l1, l2, m)).with_context("parameters", json!([
                            complex_json(eta),
                            complex_json(l1),
                            complex_json(l2)
                        ])),
                    );
                }
            }
            ctx.finish(reports, Vec::new())
        }
        Command::Spectral => {
            let support = grassmann_support(&sc.triple)?;
            let report = or_failed("polynomiality", polynomiality_check(&sc.triple, &ctx.base));
            let extra = vec![("support".to_string(), serde_json::to_value(&support).expect("support serializes"))];
            ctx.finish(vec![report], extra)
        }
        Command::Crosscheck => {
            let mut s = ctx.sampler();
            let mut reports = Vec::new();
            match &sc.case {
                CaseData::CalogeroMoser(d) => {
                    for _ in 0..ctx.trials {
                        let t = ctx.trial_times(&mut s);
                        reports.push(or_failed("wilson", crosscheck_wilson(d, &t)));
                    }
                }
                CaseData::Intertwining(_) | CaseData::KdvPair(_) => {
                    let d = intertwining_view(sc)?;
                    for _ in 0..ctx.trials {
                        let t = ctx.trial_times(&mut s);
                        reports.push(or_failed("intertwining", crosscheck_intertwining(&d, &t)));
                    }
                }
                CaseData::General => {
                    let ev = TauEvaluator::new(&sc.triple)?;
                    let spectrum = eigenvalues(sc.triple.b())?;
                    for _ in 0..ctx.trials {
                        let t = ctx.trial_times(&mut s);
                        let c = ctx.shifts(&mut s, &spectrum)?;
                        reports.push(worst_over_lattice("gauge_link", |k| gauge_link_residual(&ev, &t, c, k)));
                    }
                }
            }
            ctx.finish(reports, Vec::new())
        }
    }
}

/// Resolved settings shared by the commands.
struct Context<'a> {
    cmd: Command,
    sc: &'a LoadedScenario,
    flags: &'a Flags,
    base: TimeVector,
    trials: usize,
    seed: u64,
    tol: Option<f64>,
}

impl<'a> Context<'a> {
    fn new(cmd: Command, sc: &'a LoadedScenario, flags: &'a Flags) -> Result<Self, CliError> {
        let opts = &sc.scenario.options;
        Ok(Context {
            cmd,
            sc,
            flags,
            base: sc.scenario.time_vector(flags.truncation)?,
            trials: flags.trials.or(opts.trials).unwrap_or(cmd.default_trials()),
            seed: flags.seed.or(opts.seed).unwrap_or(0),
            tol: verification_tolerance(&sc.scenario, flags)?,
        })
    }

    fn options(&self) -> &crate::scenario::ScenarioOptions {
        &self.sc.scenario.options
    }

    fn sampler(&self) -> ComplexSampler {
        ComplexSampler::new(self.seed)
    }

    fn grid(&self, flag: Option<Grid1D>, option: Option<Grid1D>, default: &str) -> Result<Grid1D, CliError> {
        let g = flag.or(option).unwrap_or_else(|| default.parse().expect("default grid parses"));
        // Grids read from JSON skip the constructor's checks.
        Ok(Grid1D::new(g.start, g.end, g.count)?)
    }

    fn optional_grid(&self, flag: Option<Grid1D>, option: Option<Grid1D>) -> Result<Option<Grid1D>, CliError> {
        flag.or(option)
            .map(|g| Grid1D::new(g.start, g.end, g.count).map_err(CliError::from))
            .transpose()
    }

    fn time_grid(&self) -> Result<TimeGrid, CliError> {
        let g = &self.options().grids;
        let t3 = self.optional_grid(self.flags.t3, g.t3)?;
        if t3.is_some() && self.base.len() < 3 {
            return Err(CliError::Usage("a t3 grid needs truncation K ≥ 3".into()));
        }
        Ok(TimeGrid {
            t1: self.grid(self.flags.t1, g.t1, DEFAULT_T1)?,
            t2: self.optional_grid(self.flags.t2, g.t2)?,
            t3,
        })
    }

    /// Scenario times plus an independent offset in the unit disc per entry.
    fn trial_times(&self, s: &mut ComplexSampler) -> TimeVector {
        let mut t = self.base.clone();
        for i in 1..=t.len() {
            t = t.offset(i, s.disc(1.0));
        }
        t
    }

    fn shifts(&self, s: &mut ComplexSampler, spectrum: &[Complex64]) -> Result<[Complex64; 3], CliError> {
        if let Some(c) = self.options().shifts {
            return Ok(c);
        }
        let c = s
            .annulus_avoiding(3, 1.0, 3.0, spectrum, SHIFT_GAP)
            .ok_or_else(|| CliError::Numerical(Error::Degenerate("no Miwa parameters clear of spec(B)".into())))?;
        Ok([c[0], c[1], c[2]])
    }

    fn finish(&self, reports: Vec<VerificationReport>, extra: Vec<(String, Value)>) -> Result<Outcome, CliError> {
        let reports = match self.tol {
            Some(tol) => reports.into_iter().map(|r| r.with_tolerance(tol)).collect(),
            None => reports,
        };
        let mut extra = extra;
        extra.push(("seed".into(), json!(self.seed)));
        write_reports(self.cmd, &self.sc.scenario, self.flags, reports, extra)
    }
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn positive(x: f64, source: &str) -> Result<f64, CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(CliError::Usage(format!("{source}: {x} is not a positive tolerance")))
    }
}

/// `--tol`, then the scenario's `tolerance`, then `KP_RANKONE_TOL`. `None`
/// keeps each check's built-in default.
fn verification_tolerance(sc: &Scenario, flags: &Flags) -> Result<Option<f64>, CliError> {
    if let Some(t) = flags.tol.or(sc.options.tolerance) {
        return positive(t, "tolerance").map(Some);
    }
    match env::var(TOL_ENV) {
        Ok(v) => match v.trim().parse::<f64>() {
            Ok(x) => positive(x, TOL_ENV).map(Some),
            Err(_) => Err(CliError::Usage(format!("{TOL_ENV}: '{v}' is not a number"))),
        },
        Err(_) => Ok(None),
    }
}

/// For `validate` the only tolerance is the one of the rank tests.
fn rank_tolerance(sc: &Scenario, flags: &Flags) -> f64 {
    flags.tol.or(sc.options.rank_tolerance).unwrap_or(DEFAULT_RANK_TOL)
}

fn validation_report(report: Option<&TripleReport>, tol: f64) -> VerificationReport {
    match report {
        Some(r) => {
            let mut v = VerificationReport::new("validate", r.second_singular_ratio, tol);
            v.pass = r.admissible;
            if let Value::Object(fields) = serde_json::to_value(r).expect("report serializes") {
                for (k, val) in fields {
                    v = v.with_context(&k, val);
                }
            }
            v
        }
        None => {
            let mut v = VerificationReport::new("validate", f64::NAN, tol);
            v.pass = false;
            v
        }
    }
}

fn defect_rank(case: &CaseData) -> Option<usize> {
    match case {
        CaseData::General => None,
        CaseData::Intertwining(d) => Some(d.defect_rank()),
        CaseData::CalogeroMoser(d) => Some(d.defect_rank()),
        CaseData::KdvPair(d) => Some(d.defect_rank()),
    }
}

fn intertwining_view(sc: &LoadedScenario) -> Result<IntertwiningData, CliError> {
    match &sc.case {
        CaseData::Intertwining(d) => {
            if sc.scenario.matrices.contains_key("C") {
                return Err(CliError::Usage("crosscheck compares against C = [I I]; drop the custom C".into()));
            }
            Ok(d.clone())
        }
        CaseData::KdvPair(d) => Ok(IntertwiningData::new(d.x().clone(), d.z().scale(re(-1.0)), d.z().clone())?),
        _ => unreachable!("caller matched the case"),
    }
}

/// A numerical error inside a check becomes a failing report.
fn or_failed(name: &str, r: kp_rankone::Result<VerificationReport>) -> VerificationReport {
    r.unwrap_or_else(|e| {
        let mut v = VerificationReport::new(name, f64::NAN, f64::NAN);
        v.pass = false;
        v.with_context("error", json!(e.to_string()))
    })
}

/// The worst report over the eight lattice points `{0,1}³`.
fn worst_over_lattice(
    name: &str,
    mut check: impl FnMut([i32; 3]) -> kp_rankone::Result<VerificationReport>,
) -> VerificationReport {
    let mut worst: Option<VerificationReport> = None;
    for k in LATTICE {
        let r = or_failed(name, check(k));
        let replace = match &worst {
            None => true,
            Some(w) => (!r.pass && w.pass) || r.residual > w.residual || r.residual.is_nan(),
        };
        if replace {
            worst = Some(r);
        }
        if worst.as_ref().is_some_and(|w| w.residual.is_nan()) {
            break;
        }
    }
    worst.expect("lattice is non-empty").with_context("lattice_points", json!(LATTICE.len()))
}

fn write_grid(cmd: Command, flags: &Flags, header: &[&str], rows: &[Row]) -> Result<Outcome, CliError> {
    let path = output::write_file(&flags.out, &format!("{}.csv", cmd.name()), &output::csv(header, rows))?;
    Ok(Outcome {
        files: vec![path],
        pass: true,
    })
}

fn write_reports(
    cmd: Command,
    sc: &Scenario,
    flags: &Flags,
    reports: Vec<VerificationReport>,
    extra: Vec<(String, Value)>,
) -> Result<Outcome, CliError> {
    let pass = reports.iter().all(|r| r.pass);
    let mut doc = serde_json::Map::new();
    doc.insert("command".into(), json!(cmd.name()));
    doc.insert("kind".into(), serde_json::to_value(sc.kind).expect("kind serializes"));
    doc.insert("pass".into(), json!(pass));
    doc.insert("reports".into(), serde_json::to_value(&reports).expect("reports serialize"));
    for (k, v) in extra {
        doc.insert(k, v);
    }
    let path = output::write_file(&flags.out, &format!("{}.json", cmd.name()), &output::json(&Value::Object(doc)))?;
    Ok(Outcome {
        files: vec![path],
        pass,
    })
}
