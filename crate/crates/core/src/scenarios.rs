//! Benchmark problems and the configuration format of the command-line runner.
//!
//! Configuration files are flat `key = value` text; `#` starts a comment and
//! lists are comma separated. Recognized keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `scenario` | `stokes-mms`, `kovasznay`, `backstep`, `chaotic` or `custom` |
//! | `resolutions` | cells per direction (backstep: cells across the channel) |
//! | `k` | cell velocity orders, one run each |
//! | `kbar`, `m`, `mbar` | other orders (default: `k`) |
//! | `nu`, `re` | viscosity, or Reynolds numbers (list) |
//! | `alpha`, `beta`, `chi`, `theta`, `dt` | scheme constants |
//! | `steps`, `seed`, `seeds` | time steps and random seeds (chaotic) |
//! | `tol`, `max_iters`, `relaxation` | fixed-point controls |
//! | `pin_pressure` | also pin the facet pressure in the backstep corner (off by default: the traction outflow already fixes the pressure level) |
//! | `mode` | custom only: `stokes`, `stationary-ns` or `transient-ns` |
//! | `domain`, `lid`, `force` | custom only: `x0,y0,x1,y1`, lid speed, body force |
//! | `fields` | also write `field_<run>.csv` |
//! | `output` | output directory |

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{
    divergence_error, error_degree, kinetic_energy, l2_error_pressure, l2_error_velocity, local_momentum_residual,
    max_mass_residual, max_momentum_residual, negative_shear_intervals, reattachment_length, write_field, Report,
    RunRecord,
};
use crate::forms::{Discretization, Forcing, Params, State};
use crate::mesh::{BoundaryTag, Mesh, Point, Rect};
use crate::solver::{Measure, Picard, Solver, ThetaSchedule};
use crate::spaces::{nearest_node, BoundaryCondition, BoundaryConditions, DofMap, SpaceSpec};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// manufactured Stokes solution

fn bump(x: f64) -> f64 {
    x * x * (1.0 - x) * (1.0 - x)
}

fn bump_d1(x: f64) -> f64 {
    2.0 * x - 6.0 * x * x + 4.0 * x * x * x
}

fn bump_d2(x: f64) -> f64 {
    2.0 - 12.0 * x + 12.0 * x * x
}

fn bump_d3(x: f64) -> f64 {
    -12.0 + 24.0 * x
}

pub fn mms_velocity(p: Point) -> [f64; 2] {
    let (x, y) = (p[0], p[1]);
    [bump(x) * bump_d1(y), -bump(y) * bump_d1(x)]
}

pub fn mms_pressure(p: Point) -> f64 {
    p[0] * (1.0 - p[0])
}

/// Mean of the manufactured pressure over the unit square.
pub const MMS_PRESSURE_MEAN: f64 = 1.0 / 6.0;

/// Body force `grad p - nu lap u` of the manufactured solution.
pub fn mms_forcing(nu: f64, p: Point) -> [f64; 2] {
    let (x, y) = (p[0], p[1]);
    let lap_x = bump_d2(x) * bump_d1(y) + bump(x) * bump_d3(y);
    let lap_y = -(bump_d2(y) * bump_d1(x) + bump(y) * bump_d3(x));
    [1.0 - 2.0 * x - nu * lap_x, -nu * lap_y]
}

fn tagged_rectangle(nx: usize, ny: usize, rect: Rect, tag: impl FnMut(Point) -> BoundaryTag) -> Result<Mesh> {
    let mut mesh = Mesh::rectangle(nx, ny, rect)?;
    mesh.tag_boundary(tag);
    Ok(mesh)
}

fn zero_velocity() -> BoundaryCondition {
    BoundaryCondition::Dirichlet(Arc::new(|_, _| [0.0, 0.0]))
}

/// Unit square with no-slip walls.
pub fn stokes_mms_discretization(n: usize, spec: SpaceSpec) -> Result<Discretization> {
    let mesh = tagged_rectangle(n, n, Rect::unit(), |_| BoundaryTag::from("wall"))?;
    let dofs = DofMap::new(&mesh, spec)?;
    Discretization::new(mesh, dofs, BoundaryConditions::new().with("wall", zero_velocity()))
}

// ---------------------------------------------------------------------------
// Kovasznay flow

pub const KOVASZNAY_DOMAIN: Rect = Rect { x0: -0.5, y0: -0.5, x1: 1.0, y1: 1.5 };

pub fn kovasznay_lambda(re: f64) -> f64 {
    re / 2.0 - (re * re / 4.0 + 4.0 * PI * PI).sqrt()
}

pub fn kovasznay_velocity(re: f64, p: Point) -> [f64; 2] {
    let l = kovasznay_lambda(re);
    let e = (l * p[0]).exp();
    [1.0 - e * (2.0 * PI * p[1]).cos(), l / (2.0 * PI) * e * (2.0 * PI * p[1]).sin()]
}

pub fn kovasznay_pressure(re: f64, p: Point) -> f64 {
    0.5 * (1.0 - (2.0 * kovasznay_lambda(re) * p[0]).exp())
}

/// Kovasznay domain, exact velocity on the whole boundary, facet pressure
/// pinned to the exact value at the lower-left corner.
pub fn kovasznay_discretization(n: usize, spec: SpaceSpec, re: f64) -> Result<Discretization> {
    let r = KOVASZNAY_DOMAIN;
    let mesh = tagged_rectangle(n, n, r, |_| BoundaryTag::from("boundary"))?;
    let dofs = DofMap::new(&mesh, spec)?;
    let corner = [r.x0, r.y0];
    let pin = nearest_node(&dofs.pressure_lattice, corner);
    let pin_value = kovasznay_pressure(re, dofs.pressure_lattice.coords()[pin]);
    let bcs = BoundaryConditions::new()
        .with("boundary", BoundaryCondition::Dirichlet(Arc::new(move |x, _| kovasznay_velocity(re, x))))
        .pin_pressure(pin, pin_value);
    Discretization::new(mesh, dofs, bcs)
}

// ---------------------------------------------------------------------------
// backward-facing step

pub const BACKSTEP_LENGTH: f64 = 15.0;
pub const BACKSTEP_STEP_HEIGHT: f64 = 0.5;

/// Parabolic inflow over the upper half of the left boundary, `U_max = 1`.
pub fn backstep_inflow(p: Point) -> [f64; 2] {
    let y = p[1];
    if y <= BACKSTEP_STEP_HEIGHT {
        [0.0, 0.0]
    } else {
        [16.0 * (y - 0.5) * (1.0 - y), 0.0]
    }
}

/// Viscosity for a Reynolds number based on two thirds of the peak inflow
/// speed and the channel height.
pub fn backstep_viscosity(re: f64) -> f64 {
    (2.0 / 3.0) / re
}

/// `(0, 15) x (0, 1)` with `10 n x n` cell pairs.
pub fn backstep_discretization(n: usize, spec: SpaceSpec, pin_pressure: bool) -> Result<Discretization> {
    let rect = Rect::new(0.0, 0.0, BACKSTEP_LENGTH, 1.0);
    let mesh = tagged_rectangle(10 * n, n, rect, |p| {
        if p[0] < 1e-12 {
            BoundaryTag::from(if p[1] > BACKSTEP_STEP_HEIGHT { "inflow" } else { "step" })
        } else if p[0] > BACKSTEP_LENGTH - 1e-12 {
            BoundaryTag::from("outflow")
        } else {
            BoundaryTag::from("wall")
        }
    })?;
    let dofs = DofMap::new(&mesh, spec)?;
    let mut bcs = BoundaryConditions::new()
        .with("inflow", BoundaryCondition::Dirichlet(Arc::new(|x, _| backstep_inflow(x))))
        .with("step", zero_velocity())
        .with("wall", zero_velocity())
        .with("outflow", BoundaryCondition::Neumann(Arc::new(|_, _| [0.0, 0.0])));
    if pin_pressure {
        bcs = bcs.pin_pressure(nearest_node(&dofs.pressure_lattice, [0.0, 0.0]), 0.0);
    }
    Discretization::new(mesh, dofs, bcs)
}

// ---------------------------------------------------------------------------
// chaotic advection

/// Unit square with free-slip walls and the facet pressure pinned at the node
/// nearest the centre.
pub fn chaotic_discretization(n: usize, spec: SpaceSpec) -> Result<(Discretization, usize)> {
    let mesh = tagged_rectangle(n, n, Rect::unit(), |_| BoundaryTag::from("wall"))?;
    let dofs = DofMap::new(&mesh, spec)?;
    let pin = nearest_node(&dofs.pressure_lattice, [0.5, 0.5]);
    let bcs = BoundaryConditions::new().with("wall", BoundaryCondition::FreeSlip).pin_pressure(pin, 0.0);
    Ok((Discretization::new(mesh, dofs, bcs)?, pin))
}

/// Independent uniform `[-1, 1]` draws per vertex and component.
pub fn random_vertex_forcing(mesh: &Mesh, seed: u64) -> Forcing {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..mesh.num_vertices())
        .map(|_| [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)])
        .collect();
    Forcing::Nodal(values)
}

/// Settings of a chaotic-advection run.
#[derive(Debug, Clone)]
pub struct ChaoticSetup {
    pub cells: usize,
    pub spec: SpaceSpec,
    pub alpha: f64,
    pub beta: f64,
    pub chi: f64,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    /// Viscosity of the first step; later steps are inviscid.
    pub startup_nu: f64,
    pub theta: ThetaSchedule,
}

impl ChaoticSetup {
    /// 31 x 31 cells, `dt = 0.2`, backward Euler for five steps then θ = ½.
    pub fn standard(k: usize, seed: u64, steps: usize) -> Result<Self> {
        Ok(ChaoticSetup {
            cells: 31,
            spec: SpaceSpec::equal_order(k)?,
            alpha: 6.0 * (k * k) as f64,
            beta: 1e-4,
            chi: 0.5,
            dt: 0.2,
            steps,
            seed,
            startup_nu: 1e-5,
            theta: ThetaSchedule(vec![(1, 1.0), (6, 0.5)]),
        })
    }
}

/// Histories of a chaotic-advection run; entry `i` of the per-step vectors
/// belongs to step `i + 1`.
#[derive(Debug, Clone)]
pub struct ChaoticOutcome {
    /// `∫|u|²` at steps `0..=steps`.
    pub kinetic_energy: Vec<f64>,
    pub theta: Vec<f64>,
    pub max_momentum_residual: Vec<f64>,
    pub max_mass_residual: Vec<f64>,
    pub pressure_pin: usize,
    pub global_dofs: usize,
    pub final_state: State,
}

pub fn run_chaotic_case(setup: &ChaoticSetup) -> Result<ChaoticOutcome> {
    let (disc, pin) = chaotic_discretization(setup.cells, setup.spec)?;
    let forcing = random_vertex_forcing(&disc.mesh, setup.seed);
    let params = Params {
        nu: setup.startup_nu,
        alpha: setup.alpha,
        beta: setup.beta,
        chi: setup.chi,
        theta: setup.theta.theta(1),
        dt: setup.dt,
    };
    let mut solver = Solver::new(&disc, params, forcing);
    let mut state = State::zeros(&disc.dofs);
    let mut out = ChaoticOutcome {
        kinetic_energy: vec![kinetic_energy(&disc, &state)],
        theta: Vec::new(),
        max_momentum_residual: Vec::new(),
        max_mass_residual: Vec::new(),
        pressure_pin: pin,
        global_dofs: 0,
        final_state: state.clone(),
    };
    for step in 1..=setup.steps {
        if step == 2 {
            solver.params.nu = 0.0;
            solver.forcing = Forcing::Zero;
        }
        solver.params.theta = setup.theta.theta(step);
        let next = solver.step_transient(&state, true)?;
        let r = local_momentum_residual(&disc, &solver.params, &solver.forcing, Some(&state), &next, Some(&state));
        out.max_momentum_residual.push(max_momentum_residual(&r));
        out.max_mass_residual.push(max_mass_residual(&disc, &solver.params, &next));
        out.theta.push(solver.params.theta);
        out.kinetic_energy.push(kinetic_energy(&disc, &next));
        state = next;
    }
    out.global_dofs = global_system_size(&disc);
    out.final_state = state;
    Ok(out)
}

/// Unknowns of the condensed system before constraints are removed.
pub fn global_system_size(disc: &Discretization) -> usize {
    disc.dofs.num_facet_dofs()
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    StokesMms,
    Kovasznay,
    Backstep,
    Chaotic,
    Custom,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::StokesMms => "stokes-mms",
            Scenario::Kovasznay => "kovasznay",
            Scenario::Backstep => "backstep",
            Scenario::Chaotic => "chaotic",
            Scenario::Custom => "custom",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "stokes-mms" => Scenario::StokesMms,
            "kovasznay" => Scenario::Kovasznay,
            "backstep" => Scenario::Backstep,
            "chaotic" => Scenario::Chaotic,
            "custom" => Scenario::Custom,
            _ => return Err(Error::Config(format!("unknown scenario '{s}'"))),
        })
    }
}

/// Problem type of the custom scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Stokes,
    StationaryNs,
    TransientNs,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "stokes" => Mode::Stokes,
            "stationary-ns" => Mode::StationaryNs,
            "transient-ns" => Mode::TransientNs,
            _ => return Err(Error::Config(format!("unknown mode '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub resolutions: Vec<usize>,
    pub orders: Vec<usize>,
    pub kbar: Option<usize>,
    pub m: Option<usize>,
    pub mbar: Option<usize>,
    pub nu: Option<f64>,
    pub re: Vec<f64>,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub chi: f64,
    pub theta: Option<f64>,
    pub dt: Option<f64>,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub tol: Option<f64>,
    pub max_iters: usize,
    pub relaxation: f64,
    pub pin_pressure: bool,
    pub mode: Mode,
    pub domain: Rect,
    pub lid: f64,
    pub force: [f64; 2],
    pub fields: bool,
    pub output: PathBuf,
}

/// Reads `key = value` lines.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_one(key, s)).collect()
}

const KEYS: [&str; 27] = [
    "scenario",
    "resolutions",
    "k",
    "kbar",
    "m",
    "mbar",
    "nu",
    "re",
    "alpha",
    "beta",
    "chi",
    "theta",
    "dt",
    "steps",
    "seed",
    "seeds",
    "tol",
    "max_iters",
    "relaxation",
    "pin_pressure",
    "mode",
    "domain",
    "lid",
    "force",
    "fields",
    "output",
    "order_k",
];

impl ScenarioConfig {
    /// Defaults of a named scenario.
    pub fn defaults(scenario: Scenario) -> Self {
        let mut c = ScenarioConfig {
            scenario,
            resolutions: vec![8, 16, 32, 64],
            orders: vec![1],
            kbar: None,
            m: None,
            mbar: None,
            nu: None,
            re: Vec::new(),
            alpha: None,
            beta: 1e-4,
            chi: 0.5,
            theta: None,
            dt: None,
            steps: 40,
            seeds: vec![0],
            tol: None,
            max_iters: 100,
            relaxation: 1.0,
            pin_pressure: false,
            mode: Mode::Stokes,
            domain: Rect::unit(),
            lid: 1.0,
            force: [0.0, 0.0],
            fields: false,
            output: PathBuf::from("out"),
        };
        match scenario {
            Scenario::StokesMms => c.nu = Some(1.0),
            Scenario::Kovasznay => {
                c.re = vec![40.0];
                c.tol = Some(1e-4);
            }
            Scenario::Backstep => {
                c.resolutions = vec![30];
                c.re = (1..=8).map(|i| 100.0 * i as f64).collect();
                c.tol = Some(1e-6);
            }
            Scenario::Chaotic => {
                c.resolutions = vec![31];
                c.dt = Some(0.2);
            }
            Scenario::Custom => {
                c.resolutions = vec![16];
                c.nu = Some(1.0);
                c.tol = Some(1e-6);
            }
        }
        c
    }

    /// Builds a configuration from `key = value` pairs; `scenario` picks the
    /// defaults.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        for k in map.keys() {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key '{k}'")));
            }
        }
        let scenario: Scenario = map
            .get("scenario")
            .ok_or_else(|| Error::Config("missing 'scenario'".into()))?
            .parse()?;
        let mut c = Self::defaults(scenario);
        for (key, v) in map {
            match key.as_str() {
                "scenario" => {}
                "resolutions" => c.resolutions = parse_list(key, v)?,
                "k" | "order_k" => c.orders = parse_list(key, v)?,
                "kbar" => c.kbar = Some(parse_one(key, v)?),
                "m" => c.m = Some(parse_one(key, v)?),
                "mbar" => c.mbar = Some(parse_one(key, v)?),
                "nu" => c.nu = Some(parse_one(key, v)?),
                "re" => c.re = parse_list(key, v)?,
                "alpha" => c.alpha = Some(parse_one(key, v)?),
                "beta" => c.beta = parse_one(key, v)?,
                "chi" => c.chi = parse_one(key, v)?,
                "theta" => c.theta = Some(parse_one(key, v)?),
                "dt" => c.dt = Some(parse_one(key, v)?),
                "steps" => c.steps = parse_one(key, v)?,
                "seed" | "seeds" => c.seeds = parse_list(key, v)?,
                "tol" => c.tol = Some(parse_one(key, v)?),
                "max_iters" => c.max_iters = parse_one(key, v)?,
                "relaxation" => c.relaxation = parse_one(key, v)?,
                "pin_pressure" => c.pin_pressure = parse_one(key, v)?,
                "mode" => c.mode = v.parse()?,
                "domain" => {
                    let d: Vec<f64> = parse_list(key, v)?;
                    if d.len() != 4 {
                        return Err(Error::Config("'domain' needs x0,y0,x1,y1".into()));
                    }
                    c.domain = Rect::new(d[0], d[1], d[2], d[3]);
                }
                "lid" => c.lid = parse_one(key, v)?,
                "force" => {
                    let f: Vec<f64> = parse_list(key, v)?;
                    if f.len() != 2 {
                        return Err(Error::Config("'force' needs two components".into()));
                    }
                    c.force = [f[0], f[1]];
                }
                "fields" => c.fields = parse_one(key, v)?,
                "output" => c.output = PathBuf::from(v),
                _ => unreachable!("keys are checked above"),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.resolutions.is_empty() || self.resolutions.contains(&0) {
            return bad("'resolutions' must be a nonempty list of positive integers");
        }
        if self.orders.is_empty() {
            return bad("'k' must list at least one order");
        }
        if self.seeds.is_empty() {
            return bad("'seeds' must not be empty");
        }
        if matches!(self.scenario, Scenario::Kovasznay | Scenario::Backstep) && self.re.is_empty() && self.nu.is_none() {
            return bad("a Reynolds number or viscosity is required");
        }
        if self.re.iter().any(|&r| !(r > 0.0)) {
            return bad("Reynolds numbers must be positive");
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return bad("'tol' must be positive");
            }
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return bad("'relaxation' must lie in (0, 1]");
        }
        if self.domain.x1 <= self.domain.x0 || self.domain.y1 <= self.domain.y0 {
            return bad("'domain' must have positive extent");
        }
        for &k in &self.orders {
            self.spec(k)?;
            self.params(k, 1.0)?.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn spec(&self, k: usize) -> Result<SpaceSpec> {
        SpaceSpec::new(k, self.kbar.unwrap_or(k), self.m.unwrap_or(k), self.mbar.unwrap_or(k))
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Scheme constants for order `k` and viscosity `nu`.
    pub fn params(&self, k: usize, nu: f64) -> Result<Params> {
        let mut p = Params::defaults(nu, k);
        if let Some(a) = self.alpha {
            p.alpha = a;
        }
        p.beta = self.beta;
        p.chi = self.chi;
        if let Some(t) = self.theta {
            p.theta = t;
        }
        if let Some(dt) = self.dt {
            p.dt = dt;
        }
        Ok(p)
    }

    fn viscosities(&self, from_re: fn(f64) -> f64) -> Vec<(Option<f64>, f64)> {
        if self.re.is_empty() {
            vec![(None, self.nu.unwrap_or(1.0))]
        } else {
            self.re.iter().map(|&r| (Some(r), from_re(r))).collect()
        }
    }

    fn fixed_point(&self, measure: Measure, default_tol: f64) -> Picard {
        let mut p = Picard::new(self.tol.unwrap_or(default_tol), measure);
        p.max_iters = self.max_iters;
        p.relaxation = self.relaxation;
        p
    }
}

// ---------------------------------------------------------------------------
// runners

fn base_record(cfg: &ScenarioConfig, run: String, n: usize, h: f64, spec: SpaceSpec, params: &Params) -> RunRecord {
    RunRecord {
        run,
        scenario: cfg.scenario.name().to_string(),
        n,
        h,
        k: spec.k,
        kbar: spec.kbar,
        m: spec.m,
        mbar: spec.mbar,
        nu: params.nu,
        alpha: params.alpha,
        beta: params.beta,
        chi: params.chi,
        theta: params.theta,
        dt: params.dt,
        ..Default::default()
    }
}

fn dump_field(cfg: &ScenarioConfig, run: &str, disc: &Discretization, state: &State) -> Result<()> {
    if cfg.fields {
        std::fs::create_dir_all(&cfg.output)?;
        let f = std::fs::File::create(cfg.output.join(format!("field_{run}.csv")))?;
        write_field(disc, state, std::io::BufWriter::new(f))?;
    }
    Ok(())
}

fn max_cell_size(mesh: &Mesh) -> f64 {
    (0..mesh.num_cells()).map(|c| mesh.cell_size(c)).fold(0.0, f64::max)
}

pub fn run_stokes_mms(cfg: &ScenarioConfig) -> Result<Report> {
    let mut report = Report::default();
    let nu = cfg.nu.unwrap_or(1.0);
    for &k in &cfg.orders {
        let spec = cfg.spec(k)?;
        let params = cfg.params(k, nu)?;
        for &n in &cfg.resolutions {
            let disc = stokes_mms_discretization(n, spec)?;
            let forcing = Forcing::Analytic(Arc::new(move |x, _| mms_forcing(nu, x)));
            let state = Solver::new(&disc, params, forcing).with_mean_pressure(MMS_PRESSURE_MEAN).solve_stokes()?;
            let deg = error_degree(&disc);
            let run = format!("stokes-mms-k{k}-n{n}");
            let mut rec = base_record(cfg, run.clone(), n, max_cell_size(&disc.mesh), spec, &params);
            rec.global_dofs = global_system_size(&disc);
            rec.l2_velocity = Some(l2_error_velocity(&disc, &state, mms_velocity, deg)?);
            rec.l2_pressure = Some(l2_error_pressure(&disc, &state, mms_pressure, deg, false)?);
            rec.div_error = Some(divergence_error(&disc, &state));
            rec.max_mass_residual = Some(max_mass_residual(&disc, &params, &state));
            dump_field(cfg, &run, &disc, &state)?;
            report.runs.push(rec);
        }
    }
    Ok(report)
}

/// Steady Kovasznay solve with the error-based stopping test.
pub fn solve_kovasznay(
    disc: &Discretization,
    params: Params,
    picard: &Picard,
) -> Result<crate::solver::PicardOutcome> {
    Solver::new(disc, params, Forcing::Zero).solve_stationary_ns(picard, None)
}

/// Fixed-point measure: velocity error against the Kovasznay solution.
pub fn kovasznay_error_measure(re: f64) -> Measure {
    Measure::Custom(Arc::new(move |disc, s| {
        l2_error_velocity(disc, s, |x| kovasznay_velocity(re, x), error_degree(disc)).unwrap_or(f64::NAN)
    }))
}

pub fn run_kovasznay(cfg: &ScenarioConfig) -> Result<Report> {
    let mut report = Report::default();
    for (re, nu) in cfg.viscosities(|r| 1.0 / r) {
        let re = re.unwrap_or(1.0 / nu);
        for &k in &cfg.orders {
            let spec = cfg.spec(k)?;
            let params = cfg.params(k, nu)?;
            for &n in &cfg.resolutions {
                let disc = kovasznay_discretization(n, spec, re)?;
                let picard = cfg.fixed_point(kovasznay_error_measure(re), 1e-4);
                let out = solve_kovasznay(&disc, params, &picard)?;
                let deg = error_degree(&disc);
                let run = format!("kovasznay-k{k}-n{n}-re{re}");
                let mut rec = base_record(cfg, run.clone(), n, max_cell_size(&disc.mesh), spec, &params);
                rec.re = Some(re);
                rec.global_dofs = global_system_size(&disc);
                rec.iterations = Some(out.iterations);
                rec.l2_velocity = Some(l2_error_velocity(&disc, &out.state, |x| kovasznay_velocity(re, x), deg)?);
                rec.l2_pressure =
                    Some(l2_error_pressure(&disc, &out.state, |x| kovasznay_pressure(re, x), deg, true)?);
                rec.div_error = Some(divergence_error(&disc, &out.state));
                rec.max_mass_residual = Some(max_mass_residual(&disc, &params, &out.state));
                rec.pressure_pin = disc.bcs.pressure_pins.first().map(|p| p.0);
                dump_field(cfg, &run, &disc, &out.state)?;
                report.runs.push(rec);
            }
        }
    }
    Ok(report)
}

/// Result of one backstep solve.
#[derive(Debug, Clone)]
pub struct BackstepOutcome {
    pub state: State,
    pub iterations: usize,
    /// Reattachment length on the lower wall in step heights.
    pub reattachment: Option<f64>,
    /// First closed region of reversed flow on the upper wall, in step heights.
    pub top_bubble: Option<(f64, f64)>,
}

/// Steady backstep solve at Reynolds number `re`; `initial` may carry the
/// solution of a nearby Reynolds number.
pub fn solve_backstep(
    disc: &Discretization,
    mut params: Params,
    re: f64,
    picard: &Picard,
    initial: Option<State>,
) -> Result<BackstepOutcome> {
    params.nu = backstep_viscosity(re);
    let out = Solver::new(disc, params, Forcing::Zero).solve_stationary_ns(picard, initial)?;
    let s = BACKSTEP_STEP_HEIGHT;
    let reattachment = reattachment_length(disc, &out.state, 0.0, s);
    let top_bubble = negative_shear_intervals(disc, &out.state, 1.0)
        .into_iter()
        .find_map(|iv| iv.end.map(|e| (iv.start / s, e / s)));
    Ok(BackstepOutcome { state: out.state, iterations: out.iterations, reattachment, top_bubble })
}

pub fn run_backstep(cfg: &ScenarioConfig) -> Result<Report> {
    let mut report = Report::default();
    let viscosities = cfg.viscosities(backstep_viscosity);
    for &k in &cfg.orders {
        let spec = cfg.spec(k)?;
        for &n in &cfg.resolutions {
            let disc = backstep_discretization(n, spec, cfg.pin_pressure)?;
            for &(re, nu) in &viscosities {
                let re = re.unwrap_or((2.0 / 3.0) / nu);
                let params = cfg.params(k, nu)?;
                let picard = cfg.fixed_point(Measure::VelocityNorm, 1e-6);
                let out = solve_backstep(&disc, params, re, &picard, None)?;
                let run = format!("backstep-k{k}-n{n}-re{re}");
                let mut rec = base_record(cfg, run.clone(), n, max_cell_size(&disc.mesh), spec, &params);
                rec.re = Some(re);
                rec.global_dofs = global_system_size(&disc);
                rec.iterations = Some(out.iterations);
                rec.div_error = Some(divergence_error(&disc, &out.state));
                rec.max_mass_residual = Some(max_mass_residual(&disc, &params, &out.state));
                rec.reattachment = out.reattachment;
                rec.top_bubble = out.top_bubble;
                rec.pressure_pin = disc.bcs.pressure_pins.first().map(|p| p.0);
                dump_field(cfg, &run, &disc, &out.state)?;
                report.runs.push(rec);
            }
        }
    }
    Ok(report)
}

pub fn run_chaotic(cfg: &ScenarioConfig) -> Result<Report> {
    let mut report = Report::default();
    for &k in &cfg.orders {
        for &n in &cfg.resolutions {
            for &seed in &cfg.seeds {
                let mut setup = ChaoticSetup::standard(k, seed, cfg.steps)?;
                setup.cells = n;
                setup.spec = cfg.spec(k)?;
                setup.alpha = cfg.alpha.unwrap_or(setup.alpha);
                setup.beta = cfg.beta;
                setup.chi = cfg.chi;
                setup.dt = cfg.dt.unwrap_or(setup.dt);
                if let Some(t) = cfg.theta {
                    setup.theta = ThetaSchedule(vec![(1, 1.0), (6, t)]);
                }
                let out = run_chaotic_case(&setup)?;
                let params = Params {
                    nu: 0.0,
                    alpha: setup.alpha,
                    beta: setup.beta,
                    chi: setup.chi,
                    theta: *out.theta.last().unwrap_or(&1.0),
                    dt: setup.dt,
                };
                let run = format!("chaotic-k{k}-n{n}-s{seed}");
                let mut rec = base_record(cfg, run.clone(), n, 1.0 / n as f64 * 2f64.sqrt(), setup.spec, &params);
                rec.seed = Some(seed);
                rec.global_dofs = out.global_dofs;
                rec.kinetic_energy = out.kinetic_energy.clone();
                rec.max_mass_residual = Some(out.max_mass_residual.iter().fold(0.0, |m: f64, v| m.max(*v)));
                rec.max_momentum_residual = Some(out.max_momentum_residual.iter().fold(0.0, |m: f64, v| m.max(*v)));
                rec.pressure_pin = Some(out.pressure_pin);
                if cfg.fields {
                    let (disc, _) = chaotic_discretization(n, setup.spec)?;
                    dump_field(cfg, &run, &disc, &out.final_state)?;
                }
                report.runs.push(rec);
            }
        }
    }
    Ok(report)
}

/// Rectangle with a moving lid on top, no-slip elsewhere, constant body force.
pub fn custom_discretization(cfg: &ScenarioConfig, n: usize, spec: SpaceSpec) -> Result<Discretization> {
    let r = cfg.domain;
    let mesh = tagged_rectangle(n, n, r, |p| {
        BoundaryTag::from(if (p[1] - r.y1).abs() < 1e-12 { "lid" } else { "wall" })
    })?;
    let dofs = DofMap::new(&mesh, spec)?;
    let lid = cfg.lid;
    let bcs = BoundaryConditions::new()
        .with("lid", BoundaryCondition::Dirichlet(Arc::new(move |_, _| [lid, 0.0])))
        .with("wall", zero_velocity())
        .pin_pressure(nearest_node(&dofs.pressure_lattice, [r.x0, r.y0]), 0.0);
    Discretization::new(mesh, dofs, bcs)
}

pub fn run_custom(cfg: &ScenarioConfig) -> Result<Report> {
    let mut report = Report::default();
    let force = cfg.force;
    for (re, nu) in cfg.viscosities(|r| 1.0 / r) {
        for &k in &cfg.orders {
            let spec = cfg.spec(k)?;
            let params = cfg.params(k, nu)?;
            for &n in &cfg.resolutions {
                let disc = custom_discretization(cfg, n, spec)?;
                let forcing = if force == [0.0, 0.0] {
                    Forcing::Zero
                } else {
                    Forcing::Analytic(Arc::new(move |_, _| force))
                };
                let mut solver = Solver::new(&disc, params, forcing);
                let run = format!("custom-k{k}-n{n}");
                let mut rec = base_record(cfg, run.clone(), n, max_cell_size(&disc.mesh), spec, &params);
                rec.re = re;
                rec.global_dofs = global_system_size(&disc);
                let state = match cfg.mode {
                    Mode::Stokes => solver.solve_stokes()?,
                    Mode::StationaryNs => {
                        let out = solver.solve_stationary_ns(&cfg.fixed_point(Measure::VelocityNorm, 1e-6), None)?;
                        rec.iterations = Some(out.iterations);
                        out.state
                    }
                    Mode::TransientNs => {
                        let mut s = State::zeros(&disc.dofs);
                        rec.kinetic_energy.push(kinetic_energy(&disc, &s));
                        for _ in 0..cfg.steps {
                            s = solver.step_transient(&s, true)?;
                            rec.kinetic_energy.push(kinetic_energy(&disc, &s));
                        }
                        s
                    }
                };
                rec.div_error = Some(divergence_error(&disc, &state));
                rec.max_mass_residual = Some(max_mass_residual(&disc, &params, &state));
                rec.pressure_pin = disc.bcs.pressure_pins.first().map(|p| p.0);
                dump_field(cfg, &run, &disc, &state)?;
                report.runs.push(rec);
            }
        }
    }
    Ok(report)
}

/// Runs the configured scenario and writes `report.csv` / `report.json`.
pub fn run(cfg: &ScenarioConfig) -> Result<Report> {
    let report = match cfg.scenario {
        Scenario::StokesMms => run_stokes_mms(cfg)?,
        Scenario::Kovasznay => run_kovasznay(cfg)?,
        Scenario::Backstep => run_backstep(cfg)?,
        Scenario::Chaotic => run_chaotic(cfg)?,
        Scenario::Custom => run_custom(cfg)?,
    };
    report.save(&cfg.output)?;
    Ok(report)
}
