//! Scenario files: a TOML description of one solve plus the diagnostics to
//! run on its result, and the runner that writes the artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diagnostics::{
    detect_light_segments, growth_check, log_weighted_integrals, lorentzian_distance, second_fundamental_form_norm,
    Region,
};
use crate::energy::{energy_density, variational_inequality_gap};
use crate::exact::{radial_field, RadialParams};
use crate::expr::Expr;
use crate::field::{gradient_into, restrict_to_interior, BoundaryDatum, BoundaryForm, ScalarField};
use crate::grid::{admissibility_margin, build_grid, DomainSpec, Grid, Resolution};
use crate::solver::{continuation_solve, solve_from, SolveReport, SolverConfig, StageRecord, TracePoint, WarmStart};
use crate::sources::{
    bump, charge_separation_margin, mollify, MeasureSource, MollifiedSource, PointCharge,
};
use crate::{Error, Result};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "BORNINFELD_OUTPUT_ROOT";

pub const BUILTINS: [(&str, &str); 2] = [
    ("zero", include_str!("../scenarios/zero.toml")),
    ("radial-2d", include_str!("../scenarios/radial-2d.toml")),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    pub continuation: Option<ContinuationSpec>,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub diagnostics: Vec<DiagnosticRequest>,
    pub oracle: Option<OracleSpec>,
    /// Relative paths are taken under the output root.
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Also write the solution as CSV.
    #[serde(default)]
    pub export_csv: bool,
    /// Boundary nodes used as shortest-path sources in the admissibility
    /// check (64 by default).
    #[serde(default = "default_admissibility_sources")]
    pub admissibility_sources: Option<usize>,
    /// Directory of the scenario file; relative input paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_admissibility_sources() -> Option<usize> {
    Some(64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// `box`, `ball` or `lshape`.
    pub kind: String,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    /// Nodes per axis.
    pub nodes: Option<usize>,
    /// Target spacing, as an alternative to `nodes`.
    pub spacing: Option<f64>,
}

impl GridSpec {
    pub fn domain(&self) -> Result<DomainSpec> {
        let need = |v: &Option<Vec<f64>>, key: &str| {
            v.clone()
                .ok_or_else(|| Error::Config(format!("grid kind '{}' needs `grid.{key}`", self.kind)))
        };
        match self.kind.as_str() {
            "box" => Ok(DomainSpec::Box {
                lower: need(&self.lower, "lower")?,
                upper: need(&self.upper, "upper")?,
            }),
            "lshape" => Ok(DomainSpec::LShape {
                lower: need(&self.lower, "lower")?,
                upper: need(&self.upper, "upper")?,
            }),
            "ball" => Ok(DomainSpec::Ball {
                center: need(&self.center, "center")?,
                radius: self
                    .radius
                    .ok_or_else(|| Error::Config("grid kind 'ball' needs `grid.radius`".into()))?,
            }),
            k => Err(Error::Config(format!("unknown grid kind '{k}' (box, ball, lshape)"))),
        }
    }

    pub fn resolution(&self) -> Result<Resolution> {
        match (self.nodes, self.spacing) {
            (Some(n), None) => Ok(Resolution::Nodes(n)),
            (None, Some(h)) => Ok(Resolution::Spacing(h)),
            _ => Err(Error::Config("give exactly one of `grid.nodes` and `grid.spacing`".into())),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BoundarySpec {
    #[default]
    Zero,
    Affine {
        slope: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// A closed-form expression in the coordinates, see [`crate::expr`].
    Expression { expr: String },
    /// Boundary values taken from a field blob on the same grid.
    File { path: PathBuf },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    #[serde(default)]
    pub charges: Vec<PointCharge>,
    /// Closed-form density.
    pub density: Option<String>,
    /// Nodal density from a field blob on the same grid.
    pub density_file: Option<PathBuf>,
}

impl SourceSpec {
    pub fn is_empty(&self) -> bool {
        self.charges.is_empty() && self.density.is_none() && self.density_file.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSpec {
    /// Mollification widths, decreasing.
    pub widths: Option<Vec<f64>>,
    /// Widths in multiples of the grid spacing.
    pub widths_h: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitSpec {
    /// Discrete harmonic extension of the boundary data.
    #[default]
    Harmonic,
    /// Uniform noise in `[-amplitude, amplitude]` from the scenario seed.
    Random {
        #[serde(default = "half")]
        amplitude: f64,
    },
    File { path: PathBuf },
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiagnosticRequest {
    EnergyDensity,
    SecondFundamentalForm,
    LogIntegrals {
        #[serde(default = "one")]
        q0: f64,
        #[serde(default = "interior")]
        region: Region,
    },
    LightSegments {
        tolerance: Option<f64>,
    },
    LorentzianDistance {
        origin: Vec<f64>,
    },
    /// Growth-lemma margins at random `(y, s, t)`.
    Growth {
        #[serde(default = "twenty")]
        samples: usize,
    },
    /// Euler-Lagrange inequality against random feasible competitors.
    ViAudit {
        #[serde(default = "twenty")]
        competitors: usize,
    },
    ChargeSeparation,
}

fn one() -> f64 {
    1.0
}

fn twenty() -> usize {
    20
}

fn interior() -> Region {
    Region::Interior
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OracleSpec {
    /// Compare with the radial solution for a charge at the centre.
    Radial {
        #[serde(default = "one")]
        b: f64,
        #[serde(default = "one")]
        t_radius: f64,
        #[serde(default)]
        curvature: f64,
        /// Nodes within this many final mollification widths of the
        /// centre are excluded.
        #[serde(default = "three")]
        exclude: f64,
    },
}

fn three() -> f64 {
    3.0
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

impl Scenario {
    /// Parses scenario text; `origin` names the source in error messages
    /// and `base_dir` anchors relative paths.
    pub fn parse(text: &str, origin: &str, base_dir: &Path) -> Result<Scenario> {
        let mut sc: Scenario = toml::from_str(text).map_err(|e| {
            let (line, col) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            Error::Parse(format!("{origin}:{line}:{col}: {}", e.message().trim()))
        })?;
        sc.base_dir = base_dir.to_path_buf();
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Scenario::parse(&text, &path.display().to_string(), &base)
    }

    pub fn builtin(name: &str) -> Option<Scenario> {
        BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, text)| Scenario::parse(text, &format!("<builtin {n}>"), Path::new(".")).expect("built-in scenario"))
    }

    /// A scenario file path, or the name of a built-in scenario.
    pub fn resolve(arg: &str) -> Result<Scenario> {
        let path = Path::new(arg);
        if path.exists() {
            return Scenario::load(path);
        }
        Scenario::builtin(arg).ok_or_else(|| {
            let names: Vec<&str> = BUILTINS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("no scenario file '{arg}' and no built-in of that name ({})", names.join(", ")))
        })
    }

    fn input_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks dimensions and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config("`name` must be a non-empty plain name".into()));
        }
        let dom = self.grid.domain()?;
        self.grid.resolution()?;
        let m = dom.dim();
        let dims_ok = |v: &[f64]| v.len() == m;
        if let BoundarySpec::Affine { slope, .. } = &self.boundary {
            if !dims_ok(slope) {
                return Err(Error::Config(format!("boundary slope has {} entries, grid has dimension {m}", slope.len())));
            }
        }
        for (i, c) in self.source.charges.iter().enumerate() {
            if !dims_ok(&c.position) {
                return Err(Error::Config(format!("charge {i} has a position of the wrong dimension")));
            }
        }
        if self.source.density.is_some() && self.source.density_file.is_some() {
            return Err(Error::Config("give at most one of `source.density` and `source.density_file`".into()));
        }
        for e in [&self.source.density, &self.boundary_expr()].into_iter().flatten() {
            Expr::parse(e)?;
        }
        let files = [
            self.source.density_file.as_ref(),
            match &self.boundary {
                BoundarySpec::File { path } => Some(path),
                _ => None,
            },
            match &self.init {
                InitSpec::File { path } => Some(path),
                _ => None,
            },
        ];
        for f in files.into_iter().flatten() {
            if !self.input_path(f).is_file() {
                return Err(Error::Config(format!("referenced file {} does not exist", f.display())));
            }
        }
        if let Some(c) = &self.continuation {
            match (&c.widths, &c.widths_h) {
                (Some(w), None) | (None, Some(w)) if !w.is_empty() && w.iter().all(|v| *v > 0.0) => {}
                _ => {
                    return Err(Error::Config(
                        "`continuation` needs exactly one non-empty list of positive `widths` or `widths_h`".into(),
                    ))
                }
            }
        }
        for d in &self.diagnostics {
            if let DiagnosticRequest::LorentzianDistance { origin } = d {
                if !dims_ok(origin) {
                    return Err(Error::Config("lorentzian_distance origin has the wrong dimension".into()));
                }
            }
        }
        if let Some(OracleSpec::Radial { .. }) = &self.oracle {
            if !matches!(dom, DomainSpec::Ball { .. }) {
                return Err(Error::Config("the radial oracle needs a ball grid".into()));
            }
        }
        self.solver.validate()
    }

    fn boundary_expr(&self) -> Option<String> {
        match &self.boundary {
            BoundarySpec::Expression { expr } => Some(expr.clone()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Root under which relative output directories are placed.
    pub output_root: Option<PathBuf>,
    /// Forces deterministic reductions in the solver.
    pub deterministic: bool,
    /// Proceed when the boundary data are not strictly admissible.
    pub allow_marginal: bool,
}

impl RunOptions {
    /// The output root from the options, then the environment, then `runs`.
    pub fn root(&self) -> PathBuf {
        self.output_root
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleComparison {
    pub kind: String,
    pub relative_linf_error: f64,
    pub absolute_linf_error: f64,
    pub exclusion_radius: f64,
    pub compared_nodes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticResult {
    pub op: String,
    /// Side files written next to the report, relative to the output directory.
    pub files: Vec<String>,
    pub summary: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridSummary {
    pub dim: usize,
    pub kind: String,
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub domain_nodes: usize,
    pub interior_nodes: usize,
}

/// The JSON report of one scenario run.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub status: String,
    pub converged: bool,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub stationarity: f64,
    pub consistency: f64,
    pub weak_residual: f64,
    pub exceedances: usize,
    pub max_gradient: f64,
    pub action: f64,
    pub operator_norm: f64,
    pub max_sup_norm: f64,
    pub sup_bound: f64,
    pub tau: f64,
    pub sigma: f64,
    pub admissibility_margin: f64,
    pub seed: u64,
    pub deterministic: bool,
    pub grid: GridSummary,
    pub stages: Vec<StageRecord>,
    pub trace: Vec<TracePoint>,
    pub files: BTreeMap<String, String>,
    pub oracle: Option<OracleComparison>,
    pub diagnostics: Vec<DiagnosticResult>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub output_dir: PathBuf,
    pub solution: ScalarField,
}

impl RunOutcome {
    /// 0 when converged, 2 when the solve completed without converging.
    pub fn exit_code(&self) -> i32 {
        if self.report.converged {
            0
        } else {
            2
        }
    }
}

fn read_field(grid: &Arc<Grid>, path: &Path) -> Result<ScalarField> {
    let mut f = std::io::BufReader::new(fs::File::open(path)?);
    ScalarField::read_binary(grid.clone(), &mut f)
}

fn boundary(sc: &Scenario, g: &Arc<Grid>) -> Result<BoundaryDatum> {
    match &sc.boundary {
        BoundarySpec::Zero => Ok(BoundaryDatum::zero(g)),
        BoundarySpec::Affine { slope, offset } => BoundaryDatum::affine(g, slope, *offset),
        BoundarySpec::Expression { expr } => {
            let e = Expr::parse(expr)?;
            BoundaryDatum::from_fn(g, BoundaryForm::Sampled, |x| e.eval(x))
        }
        BoundarySpec::File { path } => BoundaryDatum::from_field(&read_field(g, &sc.input_path(path))?),
    }
}

fn density(sc: &Scenario, g: &Arc<Grid>) -> Result<Option<ScalarField>> {
    if let Some(e) = &sc.source.density {
        let e = Expr::parse(e)?;
        return Ok(Some(ScalarField::from_fn(g.clone(), |x| e.eval(x))));
    }
    match &sc.source.density_file {
        Some(p) => Ok(Some(read_field(g, &sc.input_path(p))?)),
        None => Ok(None),
    }
}

fn measure(sc: &Scenario, g: &Arc<Grid>) -> Result<MeasureSource> {
    let mut src = match density(sc, g)? {
        Some(d) => MeasureSource::from_density(d),
        None => MeasureSource::empty(),
    };
    src.charges = sc.source.charges.clone();
    Ok(src)
}

fn widths(sc: &Scenario, g: &Grid) -> Option<Vec<f64>> {
    let h = g.max_spacing();
    match &sc.continuation {
        Some(ContinuationSpec { widths: Some(w), .. }) => Some(w.clone()),
        Some(ContinuationSpec { widths_h: Some(w), .. }) => Some(w.iter().map(|k| k * h).collect()),
        // Point charges need mollification even without an explicit schedule.
        _ if !sc.source.charges.is_empty() => Some(vec![8.0 * h, 4.0 * h, 2.0 * h]),
        _ => None,
    }
}

fn initial_state(sc: &Scenario, g: &Arc<Grid>) -> Result<WarmStart> {
    let primal = match &sc.init {
        InitSpec::Harmonic => None,
        InitSpec::Random { amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
            let vals = (0..g.node_count()).map(|_| rng.random_range(-amplitude..=*amplitude)).collect();
            Some(ScalarField::from_values(g.clone(), vals)?)
        }
        InitSpec::File { path } => Some(read_field(g, &sc.input_path(path))?),
    };
    Ok(WarmStart { primal, dual: None })
}

fn domain_kind(d: &DomainSpec) -> &'static str {
    match d {
        DomainSpec::Box { .. } => "box",
        DomainSpec::Ball { .. } => "ball",
        DomainSpec::LShape { .. } => "lshape",
    }
}

/// Builds the grid, checks admissibility, solves and writes every artifact.
pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<RunOutcome> {
    sc.validate()?;
    let dom = sc.grid.domain()?;
    let g = Arc::new(build_grid(&dom, sc.grid.resolution()?)?);
    let phi = boundary(sc, &g)?;
    let margin = admissibility_margin(&g, phi.values(), sc.admissibility_sources)?;
    if margin <= 0.0 && !opts.allow_marginal {
        return Err(Error::Config(format!(
            "boundary data are not admissible (margin {margin:.3e} <= 0); rerun with --allow-marginal to proceed"
        )));
    }
    let mut cfg = sc.solver.clone();
    cfg.deterministic |= opts.deterministic;
    let start = initial_state(sc, &g)?;
    let src = measure(sc, &g)?;
    let (rep, final_source): (SolveReport, MollifiedSource) = match widths(sc, &g) {
        Some(w) => {
            let rep = continuation_solve(&g, &phi, &src, &w, &cfg, &start)?;
            let last = *w.last().expect("validated non-empty");
            (rep, mollify(&src, &g, last)?)
        }
        None => {
            let ms = match density(sc, &g)? {
                Some(d) => MollifiedSource::from_density(d),
                None => MollifiedSource::zero(g.clone()),
            };
            (solve_from(&g, &phi, &ms, &cfg, &start)?, ms)
        }
    };

    let out_dir = match &sc.output_dir {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => opts.root().join(p),
        None => opts.root().join(&sc.name),
    };
    fs::create_dir_all(&out_dir)?;
    let mut files = BTreeMap::new();
    {
        let mut f = BufWriter::new(fs::File::create(out_dir.join("solution.bin"))?);
        rep.solution.write_binary(&mut f)?;
        f.flush()?;
    }
    files.insert("solution".into(), "solution.bin".into());
    if sc.export_csv {
        let mut f = BufWriter::new(fs::File::create(out_dir.join("solution.csv"))?);
        rep.solution.write_csv(&mut f)?;
        f.flush()?;
        files.insert("solution_csv".into(), "solution.csv".into());
    }

    let oracle = match &sc.oracle {
        Some(o) => Some(compare_oracle(o, &rep.solution, &final_source)?),
        None => None,
    };
    let mut diagnostics = Vec::new();
    for (i, d) in sc.diagnostics.iter().enumerate() {
        diagnostics.push(run_diagnostic(d, i, sc, &rep.solution, &src, &final_source, &out_dir)?);
    }

    let report = RunReport {
        scenario: sc.name.clone(),
        status: if rep.converged { "converged" } else { "not_converged" }.into(),
        converged: rep.converged,
        iterations: rep.iterations,
        wall_time_s: rep.wall_time_s,
        stationarity: rep.stationarity,
        consistency: rep.consistency,
        weak_residual: rep.weak_residual,
        exceedances: rep.exceedances,
        max_gradient: rep.max_gradient,
        action: rep.action,
        operator_norm: rep.operator_norm,
        max_sup_norm: rep.max_sup_norm,
        sup_bound: rep.sup_bound,
        tau: rep.tau,
        sigma: rep.sigma,
        admissibility_margin: margin,
        seed: sc.seed,
        deterministic: cfg.deterministic,
        grid: GridSummary {
            dim: g.dim(),
            kind: domain_kind(&dom).into(),
            shape: g.shape().to_vec(),
            spacing: g.spacing().to_vec(),
            domain_nodes: g.domain_node_count(),
            interior_nodes: g.interior_nodes().len(),
        },
        stages: rep.stages.clone(),
        trace: rep.trace.clone(),
        files,
        oracle,
        diagnostics,
    };
    fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    fs::write(out_dir.join("summary.txt"), summary_text(&report))?;
    Ok(RunOutcome {
        report,
        output_dir: out_dir,
        solution: rep.solution,
    })
}

fn compare_oracle(o: &OracleSpec, u: &ScalarField, src: &MollifiedSource) -> Result<OracleComparison> {
    let OracleSpec::Radial {
        b,
        t_radius,
        curvature,
        exclude,
    } = o;
    let g = u.grid();
    let exact = radial_field(&RadialParams::new(g.dim(), *t_radius, *b, *curvature)?, g)?;
    let excl = exclude * if src.width > 0.0 { src.width } else { g.max_spacing() };
    let (mut err, mut scale, mut count): (f64, f64, usize) = (0.0, 0.0, 0);
    let mut x = vec![0.0; g.dim()];
    for n in 0..g.node_count() {
        if !g.is_domain_node(n) {
            continue;
        }
        g.node_position_into(n, &mut x);
        if x.iter().map(|v| v * v).sum::<f64>().sqrt() < excl {
            continue;
        }
        err = err.max((u.values()[n] - exact.values()[n]).abs());
        scale = scale.max(exact.values()[n].abs());
        count += 1;
    }
    Ok(OracleComparison {
        kind: "radial".into(),
        relative_linf_error: if scale > 0.0 { err / scale } else { err },
        absolute_linf_error: err,
        exclusion_radius: excl,
        compared_nodes: count,
    })
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn max_cell_slope(f: &ScalarField) -> f64 {
    let g = f.grid();
    let m = g.dim();
    let mut d = vec![0.0; g.cell_count() * m];
    gradient_into(g, f.values(), &mut d);
    g.active_cells()
        .iter()
        .map(|&c| d[c * m..(c + 1) * m].iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn run_diagnostic(
    d: &DiagnosticRequest,
    index: usize,
    sc: &Scenario,
    u: &ScalarField,
    measure: &MeasureSource,
    smooth: &MollifiedSource,
    out: &Path,
) -> Result<DiagnosticResult> {
    let g = u.grid();
    let policy = sc.solver.guard;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed.wrapping_add(index as u64));
    let mut files = Vec::new();
    let mut side = |suffix: &str| {
        let name = format!("diag{index:02}_{suffix}");
        files.push(name.clone());
        out.join(name)
    };
    let (op, summary) = match d {
        DiagnosticRequest::EnergyDensity => {
            let ed = energy_density(u, &policy);
            let nodal = ed.w.to_nodes();
            write_with(&side("energy_density.csv"), |w| nodal.write_csv(w))?;
            ("energy_density", json!({ "max_w": ed.w.max(), "capped": ed.capped, "w_max": ed.w_max }))
        }
        DiagnosticRequest::SecondFundamentalForm => {
            let s = second_fundamental_form_norm(u, &policy);
            write_with(&side("second_fundamental_form.csv"), |w| s.norm.write_csv(w))?;
            let max = s.norm.values().iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
            ("second_fundamental_form", json!({ "max": max, "evaluated": s.evaluated, "capped": s.capped }))
        }
        DiagnosticRequest::LogIntegrals { q0, region } => {
            let r = log_weighted_integrals(u, *q0, region, &policy)?;
            ("log_integrals", serde_json::to_value(r)?)
        }
        DiagnosticRequest::LightSegments { tolerance } => {
            let r = detect_light_segments(u, *tolerance)?;
            write_with(&side("light_segments.csv"), |w| r.write_csv(w))?;
            (
                "light_segments",
                json!({
                    "tolerance": r.tolerance,
                    "min_length": r.min_length,
                    "segments": r.segments.len(),
                    "seeds": r.seeds,
                    "sampled_null_fraction": r.sampled_null_fraction,
                    "globally_null": r.globally_null,
                }),
            )
        }
        DiagnosticRequest::LorentzianDistance { origin } => {
            let o = g.nearest_node(origin);
            let l = lorentzian_distance(u, o)?;
            write_with(&side("lorentzian_distance.csv"), |w| l.write_csv(w))?;
            ("lorentzian_distance", json!({ "origin_node": o, "max": l.max_abs() }))
        }
        DiagnosticRequest::Growth { samples } => {
            let h = g.max_spacing();
            // Ball masses of the mollified density, which is what was solved.
            let mass = MeasureSource::from_density(smooth.density.clone());
            let mut margins = Vec::new();
            let interior: Vec<usize> = g
                .interior_nodes()
                .iter()
                .copied()
                .filter(|&n| g.distance_to_boundary(&g.node_position(n)) >= 4.0 * h)
                .collect();
            if interior.is_empty() {
                return Err(Error::Config("growth check needs nodes at least 4h from the boundary".into()));
            }
            for _ in 0..*samples {
                let y = interior[rng.random_range(0..interior.len())];
                let dist = g.distance_to_boundary(&g.node_position(y));
                let t = rng.random_range(2.0 * h..dist - h);
                let s = rng.random_range(0.05 * t..0.95 * t);
                margins.push(growth_check(u, &mass, y, s, t, &policy)?.margin);
            }
            let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
            ("growth", json!({ "samples": margins.len(), "min_margin": min, "margins": margins }))
        }
        DiagnosticRequest::ViAudit { competitors } => {
            if max_cell_slope(u) > 1.0 {
                // Competitors must be weakly spacelike; none can be built
                // around a field that is not.
                ("vi_audit", json!({ "competitors": 0, "min_gap": null }))
            } else {
                let mut worst = f64::INFINITY;
                for _ in 0..*competitors {
                    let psi = random_competitor(u, &mut rng)?;
                    worst = worst.min(variational_inequality_gap(u, smooth, &psi, policy.w_max)?);
                }
                ("vi_audit", json!({ "competitors": competitors, "min_gap": worst }))
            }
        }
        DiagnosticRequest::ChargeSeparation => {
            let s = charge_separation_margin(measure, g.dim())?;
            let margin = if s.margin.is_finite() { json!(s.margin) } else { Value::Null };
            let threshold = if s.threshold.is_finite() { json!(s.threshold) } else { Value::Null };
            let sep = if s.min_separation.is_finite() { json!(s.min_separation) } else { Value::Null };
            (
                "charge_separation",
                json!({ "applicable": s.applicable, "margin": margin, "threshold": threshold, "min_separation": sep }),
            )
        }
    };
    Ok(DiagnosticResult {
        op: op.into(),
        files,
        summary,
    })
}

/// `u` moved toward a random smooth bump and pulled back into the
/// weakly spacelike class: the convex combination with the extension `u`
/// itself keeps the boundary values.
fn random_competitor(u: &ScalarField, rng: &mut ChaCha8Rng) -> Result<ScalarField> {
    let g = u.grid();
    let lo = g.origin().to_vec();
    let hi: Vec<f64> = (0..g.dim())
        .map(|k| g.origin()[k] + g.spacing()[k] * (g.shape()[k] - 1) as f64)
        .collect();
    let c: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.random_range(*a..*b)).collect();
    let r = rng.random_range(0.05..0.3) * g.bounding_diameter();
    let mut eta = ScalarField::from_fn(g.clone(), |x| bump(x.iter().zip(&c).map(|(p, q)| (p - q) * (p - q)).sum(), r));
    restrict_to_interior(g, eta.values_mut());
    let slope_u = max_cell_slope(u);
    let slope_eta = max_cell_slope(&eta).max(1e-300);
    // |D(u + d eta)| <= slope_u + d slope_eta; shrink d until feasible.
    let mut delta = rng.random_range(0.05..1.0) * (1.0 - slope_u).max(0.0) / slope_eta;
    loop {
        let psi = ScalarField::from_values(
            g.clone(),
            u.values().iter().zip(eta.values()).map(|(a, b)| a + delta * b).collect(),
        )?;
        if max_cell_slope(&psi) <= 1.0 {
            return Ok(psi);
        }
        delta *= 0.5;
    }
}

pub fn summary_text(r: &RunReport) -> String {
    let mut s = String::new();
    let g = &r.grid;
    s += &format!("scenario     {}\n", r.scenario);
    s += &format!(
        "grid         {} m={} shape {:?} h {:.4e}\n",
        g.kind,
        g.dim,
        g.shape,
        g.spacing.iter().copied().fold(0.0, f64::max)
    );
    s += &format!("status       {} after {} iterations, {:.2} s\n", r.status, r.iterations, r.wall_time_s);
    s += &format!("residuals    stationarity {:.3e}  consistency {:.3e}  weak {:.3e}\n", r.stationarity, r.consistency, r.weak_residual);
    s += &format!("action       {:.10}\n", r.action);
    s += &format!("max |Du|     {:.8}  ({} cells above 1)\n", r.max_gradient, r.exceedances);
    s += &format!("admissible   margin {:.4e}\n", r.admissibility_margin);
    for st in &r.stages {
        s += &format!(
            "  stage width {:.4e}: {} iterations, converged {}, action {:.8}\n",
            st.width, st.iterations, st.converged, st.action
        );
    }
    if let Some(o) = &r.oracle {
        s += &format!(
            "oracle       {}: relative Linf error {:.4e} (absolute {:.4e}) outside r = {:.4e}\n",
            o.kind, o.relative_linf_error, o.absolute_linf_error, o.exclusion_radius
        );
    }
    for d in &r.diagnostics {
        // Arrays stay in the JSON report.
        let scalars: Vec<String> = match &d.summary {
            Value::Object(map) => map
                .iter()
                .filter(|(_, v)| !v.is_array() && !v.is_object())
                .map(|(k, v)| format!("{k} {v}"))
                .collect(),
            v => vec![v.to_string()],
        };
        s += &format!("diagnostic   {}: {}\n", d.op, scalars.join(", "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario> {
        Scenario::parse(text, "test.toml", Path::new("."))
    }

    #[test]
    fn builtins_parse() {
        for (name, _) in BUILTINS {
            let sc = Scenario::builtin(name).unwrap();
            assert_eq!(sc.name, name);
        }
    }

    #[test]
    fn missing_grid_is_named() {
        let err = parse("name = \"x\"\n").unwrap_err().to_string();
        assert!(err.contains("grid"), "{err}");
        assert!(err.contains("test.toml:"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let err = parse("name = \"x\"\n[grid]\nkind = \"box\"\nnodes = = 3\n").unwrap_err().to_string();
        assert!(err.contains("test.toml:4:"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "name = \"x\"\n[grid]\nkind = \"box\"\nlower = [0.0, 0.0]\nupper = [1.0, 1.0]\nnodes = 9\n[solver]\ntolerence = 1e-6\n";
        let err = parse(text).unwrap_err().to_string();
        assert!(err.contains("tolerence"), "{err}");
        assert!(err.contains("test.toml:8:"), "{err}");
    }

    #[test]
    fn inconsistent_dimensions_are_rejected() {
        let text = "name = \"x\"\n[grid]\nkind = \"box\"\nlower = [0.0, 0.0]\nupper = [1.0, 1.0]\nnodes = 9\n[boundary]\nkind = \"affine\"\nslope = [0.1, 0.2, 0.3]\n";
        assert!(matches!(parse(text), Err(Error::Config(_))));
    }

    #[test]
    fn missing_files_are_rejected_at_parse_time() {
        let text = "name = \"x\"\n[grid]\nkind = \"box\"\nlower = [0.0, 0.0]\nupper = [1.0, 1.0]\nnodes = 9\n[init]\nkind = \"file\"\npath = \"does-not-exist.bin\"\n";
        let err = parse(text).unwrap_err().to_string();
        assert!(err.contains("does-not-exist.bin"), "{err}");
    }

    #[test]
    fn zero_scenario_runs() {
        let dir = std::env::temp_dir().join(format!("bi-scenario-{}", std::process::id()));
        let opts = RunOptions {
            output_root: Some(dir.clone()),
            deterministic: true,
            allow_marginal: false,
        };
        let out = run_scenario(&Scenario::builtin("zero").unwrap(), &opts).unwrap();
        assert_eq!(out.exit_code(), 0);
        assert!(out.solution.max_abs() == 0.0);
        assert!(out.output_dir.join("report.json").is_file());
        assert!(out.output_dir.join("solution.bin").is_file());
        fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn steep_boundary_needs_allow_marginal() {
        let text = "name = \"steep\"\n[grid]\nkind = \"box\"\nlower = [0.0, 0.0]\nupper = [1.0, 1.0]\nnodes = 9\n[boundary]\nkind = \"affine\"\nslope = [1.0, 0.0]\n";
        let sc = parse(text).unwrap();
        let dir = std::env::temp_dir().join(format!("bi-steep-{}", std::process::id()));
        let mut opts = RunOptions {
            output_root: Some(dir.clone()),
            ..Default::default()
        };
        assert!(matches!(run_scenario(&sc, &opts), Err(Error::Config(_))));
        opts.allow_marginal = true;
        assert!(run_scenario(&sc, &opts).is_ok());
        fs::remove_dir_all(dir).ok();
    }
}
