use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use jellium::density::{
    check_jellium, check_wiener, designer_cutoff, make_band_limited_gaussian, make_band_limited_jellium,
    make_char_cube_power, IonDensity, DEFAULT_M_CUT, DESIGNER_BETA, DESIGNER_SEED,
};
use jellium::dynamics::{evolve_with, IntegratorConfig, Scheme};
use jellium::field::{Model, ModelParams, State, DEFAULT_ION_MASS};
use jellium::groundstate::{make_ground_state, structure_factor, IonArrangement, FLAT_TOL};
use jellium::hessian::{assemble_hessian, constrained_min_eig, spectrum, KERNEL_TOL};
use jellium::io::{fmt_f64, read_density, read_json, write_density, write_json, write_state, DensityFile};
use jellium::lattice::{build_mode_set, LatticeSpec};
use jellium::stability::{
    perturbed_ground_state, stability_experiment, StabilityConfig, DEFAULT_SCAN_DELTA, DEFAULT_SCAN_SAMPLES,
};
use jellium::Vec3;

#[derive(Parser)]
#[command(name = "jellium", version, about = "Ion-electron crystal in a periodic box: densities, dynamics, Hessian, stability")]
struct Cli {
    /// Worker threads for internal parallelism; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an ion density and audit the Jellium and Wiener conditions.
    DesignDensity(DesignArgs),
    /// Audit the flat-periodization condition of a density file.
    CheckJellium(CheckJelliumArgs),
    /// Scan the Σ(θ) matrices of a density file.
    CheckWiener(CheckWienerArgs),
    /// Build a ground state for an ion arrangement.
    GroundState(GroundStateArgs),
    /// Structure factor of an ion arrangement at one dual vector.
    StructureFactor(StructureFactorArgs),
    /// Integrate the coupled dynamics from a run config.
    Evolve(EvolveArgs),
    /// Assemble the Hessian at a periodic ground state and report its spectrum.
    Hessian(HessianArgs),
    /// Run an orbital-stability experiment.
    Stability(StabilityArgs),
}

#[derive(Args, Serialize)]
struct DesignArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    z: f64,
    #[arg(long, default_value_t = 1.0)]
    e: f64,
    /// jellium-wiener, gaussian or char-cube:K
    #[arg(long, default_value = "jellium-wiener")]
    profile: String,
    #[arg(long, default_value_t = DESIGNER_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DESIGNER_BETA)]
    beta: f64,
    /// Band cutoff of band-limited profiles [default: 2N²]
    #[arg(long)]
    band_cutoff: Option<u32>,
    /// Σ(θ) truncation radius for analytic profiles.
    #[arg(long, default_value_t = DEFAULT_M_CUT)]
    m_cut: u32,
    /// Exit with status 1 if the Wiener condition fails.
    #[arg(long)]
    require_wiener: bool,
    #[arg(long, default_value = "density.json")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct CheckJelliumArgs {
    #[arg(long)]
    density: PathBuf,
    #[arg(long, default_value_t = FLAT_TOL)]
    tol: f64,
    #[arg(long, default_value = "jellium.csv")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct CheckWienerArgs {
    #[arg(long)]
    density: PathBuf,
    #[arg(long, default_value_t = DEFAULT_M_CUT)]
    m_cut: u32,
    #[arg(long, default_value = "wiener.csv")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ModelArgs {
    #[arg(long)]
    density: PathBuf,
    /// Field cutoff m (modes with k·k ≤ m).
    #[arg(long, default_value_t = 2)]
    cutoff: u32,
    #[arg(long, default_value_t = DEFAULT_ION_MASS)]
    mass: f64,
}

#[derive(Args, Serialize)]
struct ArrangementArgs {
    /// periodic, staircase, or a JSON arrangement file
    #[arg(long, default_value = "periodic")]
    arrangement: String,
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,0")]
    r: Vec3,
    /// Staircase heights τ(n₁,n₂) listed in order n₁·N + n₂.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    tau: Vec<f64>,
}

#[derive(Args, Serialize)]
struct GroundStateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    arrangement: ArrangementArgs,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value_t = FLAT_TOL)]
    tol: f64,
    #[arg(long, default_value = "state.json")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct StructureFactorArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[command(flatten)]
    arrangement: ArrangementArgs,
    /// Dual vector in integer units of 2π/N.
    #[arg(long, value_parser = parse_k, allow_hyphen_values = true)]
    xi: [i32; 3],
    #[arg(long, default_value = "structure_factor.csv")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvolveArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "trajectory.csv")]
    out: PathBuf,
    /// Also write the final state.
    #[arg(long)]
    final_state: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct HessianArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,0")]
    r: Vec3,
    #[arg(long, default_value_t = KERNEL_TOL)]
    kernel_tol: f64,
    #[arg(long, default_value = "hessian.csv")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct StabilityArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_SCAN_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = IntegratorConfig::default().t_end)]
    t_end: f64,
    #[arg(long, default_value_t = IntegratorConfig::default().dt)]
    dt: f64,
    #[arg(long, value_enum, default_value = "strang")]
    scheme: SchemeArg,
    #[arg(long, default_value_t = IntegratorConfig::default().sample_every)]
    sample_every: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SCAN_SAMPLES)]
    scan_samples: usize,
    #[arg(long, default_value_t = DEFAULT_SCAN_DELTA)]
    scan_delta: f64,
    #[arg(long, default_value = "stability.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SchemeArg {
    Strang,
    Picard,
}

/// Contents of `evolve --config`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    density: DensitySource,
    /// Optional consistency checks against the density.
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    z: Option<f64>,
    #[serde(default)]
    e: Option<f64>,
    #[serde(default = "default_cutoff")]
    cutoff: u32,
    #[serde(default = "default_mass")]
    mass: f64,
    /// Cutoff of the charge ball that sets the dealiasing grid.
    #[serde(default)]
    charge_cutoff: Option<u32>,
    initial: InitialState,
    #[serde(default)]
    integrator: IntegratorConfig,
}

fn default_cutoff() -> u32 {
    2
}

fn default_mass() -> f64 {
    DEFAULT_ION_MASS
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum DensitySource {
    Path(PathBuf),
    Inline(DensityFile),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum InitialState {
    GroundState {
        #[serde(default)]
        alpha: f64,
        #[serde(default = "default_arrangement")]
        arrangement: IonArrangement,
        /// Size of a random perturbation normal to the manifold.
        #[serde(default)]
        delta: f64,
        #[serde(default)]
        seed: u64,
    },
    File {
        path: PathBuf,
    },
}

fn default_arrangement() -> IonArrangement {
    IonArrangement::Periodic { r: [0.0; 3] }
}

enum Failure {
    Usage(String),
    Compute(String),
}

impl From<jellium::Error> for Failure {
    fn from(e: jellium::Error) -> Self {
        match e {
            jellium::Error::InvalidParameter(_) => Failure::Usage(e.to_string()),
            _ => Failure::Compute(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

/// Files written so far; removed if the command fails.
#[derive(Default)]
struct Outputs(Vec<PathBuf>);

impl Outputs {
    fn text(&mut self, path: &Path, text: &str) -> Result<(), Failure> {
        self.0.push(path.to_path_buf());
        fs::write(path, text)?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<(), Failure> {
        self.0.push(path.to_path_buf());
        Ok(write_json(path, value)?)
    }

    fn density(&mut self, path: &Path, sigma: &IonDensity) -> Result<(), Failure> {
        self.0.push(path.to_path_buf());
        Ok(write_density(path, sigma)?)
    }

    fn state(&mut self, path: &Path, x: &State) -> Result<(), Failure> {
        self.0.push(path.to_path_buf());
        Ok(write_state(path, x)?)
    }

    /// `<out>.provenance.json` with everything needed to rerun the command.
    fn provenance<T: Serialize>(&mut self, out: &Path, command: &str, args: &T, extra: Option<serde_json::Value>) -> Result<(), Failure> {
        let mut name = out.as_os_str().to_owned();
        name.push(".provenance.json");
        let record = serde_json::json!({
            "tool": "jellium",
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": jellium::VERSION,
            "command": command,
            "args": args,
            "config": extra,
        });
        self.json(Path::new(&name), &record)
    }

    fn discard(&self) {
        for p in &self.0 {
            let _ = fs::remove_file(p);
        }
    }
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected three comma-separated numbers, got {s:?}"))
}

fn parse_k(s: &str) -> Result<[i32; 3], String> {
    let v: Vec<i32> = s.split(',').map(|t| t.trim().parse::<i32>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected three comma-separated integers, got {s:?}"))
}

fn load_density(path: &Path) -> Result<IonDensity, Failure> {
    if !path.exists() {
        return Err(Failure::Usage(format!("density file {} does not exist", path.display())));
    }
    Ok(read_density(path)?)
}

fn build_model(sigma: IonDensity, cutoff: u32, mass: f64, charge_cutoff: Option<u32>) -> Result<Model, Failure> {
    let params = ModelParams::new(sigma.e(), sigma.z(), mass, sigma.lattice().n())?;
    let field = Arc::new(build_mode_set(params.n, cutoff)?);
    Ok(match charge_cutoff {
        Some(c) => Model::with_charge_cutoff(params, sigma, field, c)?,
        None => Model::new(params, sigma, field)?,
    })
}

fn model_from(args: &ModelArgs) -> Result<Model, Failure> {
    build_model(load_density(&args.density)?, args.cutoff, args.mass, None)
}

fn arrangement_from(args: &ArrangementArgs, n: usize) -> Result<IonArrangement, Failure> {
    match args.arrangement.as_str() {
        "periodic" => Ok(IonArrangement::Periodic { r: args.r }),
        "staircase" => {
            let tau = if args.tau.is_empty() { vec![0.0; n * n] } else { args.tau.clone() };
            Ok(IonArrangement::Staircase { r: args.r, tau })
        }
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(Failure::Usage(format!("unknown arrangement {path:?} (not periodic, staircase or a file)")));
            }
            Ok(read_json(p)?)
        }
    }
}

/// Rounds components below `tiny` to zero and prints `a+bi` in shortest exact form.
fn display_complex(z: num_complex::Complex64, tiny: f64) -> String {
    let snap = |x: f64| if x.abs() <= tiny { 0.0 } else { x };
    let (re, im) = (snap(z.re), snap(z.im));
    let sign = if im < 0.0 { '-' } else { '+' };
    format!("{re}{sign}{}i", im.abs())
}

fn design_density(a: &DesignArgs, out: &mut Outputs) -> Result<bool, Failure> {
    let lattice = LatticeSpec::new(a.n)?;
    let band = || build_mode_set(a.n, a.band_cutoff.unwrap_or_else(|| designer_cutoff(lattice.n())));
    let sigma = match a.profile.as_str() {
        "jellium-wiener" => make_band_limited_jellium(&band()?, a.e, a.z, a.beta, a.seed)?,
        "gaussian" => make_band_limited_gaussian(&band()?, a.e, a.z, a.beta)?,
        p => match p.strip_prefix("char-cube:").map(str::parse::<u32>) {
            Some(Ok(k)) => make_char_cube_power(a.n, k, a.e, a.z)?,
            _ => return Err(Failure::Usage(format!("unknown profile {p:?}; expected jellium-wiener, gaussian or char-cube:K"))),
        },
    };
    let jel = check_jellium(&sigma, FLAT_TOL)?;
    let wie = check_wiener(&sigma, a.m_cut)?;
    out.density(&a.out, &sigma)?;
    out.provenance(&a.out, "design-density", a, None)?;
    println!("jellium: {} worst={}", verdict(jel.pass), fmt_f64(jel.worst_violation));
    println!("wiener: {} d={} min={}", verdict(wie.pass), wie.kernel_dim, fmt_f64(wie.global_min));
    Ok(wie.pass || !a.require_wiener)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn check_jellium_cmd(a: &CheckJelliumArgs, out: &mut Outputs) -> Result<bool, Failure> {
    let sigma = load_density(&a.density)?;
    let r = check_jellium(&sigma, a.tol)?;
    let k = r.worst_k.map(|k| format!("{},{},{}", k[0], k[1], k[2])).unwrap_or_else(|| ",,".into());
    let csv = format!(
        "pass,worst_violation,k1,k2,k3,flatness_deviation,imag_residual\n{},{},{k},{},{}\n",
        r.pass,
        fmt_f64(r.worst_violation),
        fmt_f64(r.flatness_deviation),
        fmt_f64(r.imag_residual)
    );
    out.text(&a.out, &csv)?;
    out.provenance(&a.out, "check-jellium", a, None)?;
    println!(
        "jellium: {} worst={} at ({k}) flatness={}",
        verdict(r.pass),
        fmt_f64(r.worst_violation),
        fmt_f64(r.flatness_deviation)
    );
    Ok(r.pass)
}

fn check_wiener_cmd(a: &CheckWienerArgs, out: &mut Outputs) -> Result<bool, Failure> {
    let sigma = load_density(&a.density)?;
    let r = check_wiener(&sigma, a.m_cut)?;
    let mut csv = String::from("theta1,theta2,theta3,min_eigenvalue,kernel_dim\n");
    for e in &r.entries {
        let _ = writeln!(csv, "{},{},{},{},{}", e.theta[0], e.theta[1], e.theta[2], fmt_f64(e.min_eigenvalue), e.kernel_dim);
    }
    out.text(&a.out, &csv)?;
    out.provenance(&a.out, "check-wiener", a, None)?;
    let tail = r.tail_change.map(|t| format!(" tail_change={}", fmt_f64(t))).unwrap_or_default();
    println!("wiener: {} d={} min={}{tail}", verdict(r.pass), r.kernel_dim, fmt_f64(r.global_min));
    Ok(r.pass)
}

fn ground_state_cmd(a: &GroundStateArgs, out: &mut Outputs) -> Result<bool, Failure> {
    let model = model_from(&a.model)?;
    let arr = arrangement_from(&a.arrangement, model.lattice().n())?;
    let s = make_ground_state(a.alpha, &arr, &model, a.tol)?;
    let e = model.energy(&s)?;
    out.state(&a.out, &s)?;
    out.provenance(&a.out, "ground-state", a, None)?;
    println!("energy={}", fmt_f64(e));
    Ok(true)
}

fn structure_factor_cmd(a: &StructureFactorArgs, out: &mut Outputs) -> Result<bool, Failure> {
    let lattice = LatticeSpec::new(a.n)?;
    let arr = arrangement_from(&a.arrangement, a.n)?;
    let s = structure_factor(&arr, lattice, a.xi)?;
    let csv = format!("k1,k2,k3,re,im\n{},{},{},{},{}\n", a.xi[0], a.xi[1], a.xi[2], fmt_f64(s.re), fmt_f64(s.im));
    out.text(&a.out, &csv)?;
    out.provenance(&a.out, "structure-factor", a, None)?;
    println!("{}", display_complex(s, 1e-12 * lattice.volume()));
    Ok(true)
}

fn check_matches(name: &str, given: Option<f64>, actual: f64) -> Result<(), Failure> {
    match given {
        Some(v) if v != actual => Err(Failure::Usage(format!("config {name} = {v} disagrees with the density ({actual})"))),
        _ => Ok(()),
    }
}

fn evolve_cmd(a: &EvolveArgs, out: &mut Outputs) -> Result<bool, Failure> {
    if !a.config.exists() {
        return Err(Failure::Usage(format!("config file {} does not exist", a.config.display())));
    }
    let text = fs::read_to_string(&a.config)?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("bad config: {e}")))?;
    let sigma = match &cfg.density {
        DensitySource::Path(p) => {
            let p = if p.is_relative() { a.config.parent().unwrap_or(Path::new(".")).join(p) } else { p.clone() };
            load_density(&p)?
        }
        DensitySource::Inline(d) => d.to_density()?,
    };
    check_matches("n", cfg.n.map(|n| n as f64), sigma.lattice().n() as f64)?;
    check_matches("z", cfg.z, sigma.z())?;
    check_matches("e", cfg.e, sigma.e())?;
    let model = build_model(sigma, cfg.cutoff, cfg.mass, cfg.charge_cutoff)?;
    let x0 = match &cfg.initial {
        InitialState::GroundState { alpha, arrangement, delta, seed } => {
            let s = make_ground_state(*alpha, arrangement, &model, FLAT_TOL)?;
            perturbed_ground_state(&model, &s, *delta, *seed)?
        }
        InitialState::File { path } => {
            let p = if path.is_relative() { a.config.parent().unwrap_or(Path::new(".")).join(path) } else { path.clone() };
            jellium::io::read_state(&p)?
        }
    };
    let mut csv = String::from("t,E,Q\n");
    let mut last = None;
    let drift = evolve_with(&model, &x0, &cfg.integrator, |s| {
        let _ = writeln!(csv, "{},{},{}", fmt_f64(s.t), fmt_f64(s.energy), fmt_f64(s.charge));
        last = Some(s.state.clone());
    })?;
    out.text(&a.out, &csv)?;
    if let (Some(path), Some(x)) = (&a.final_state, &last) {
        out.state(path, x)?;
    }
    out.provenance(&a.out, "evolve", a, Some(serde_json::to_value(&cfg).map_err(|e| Failure::Compute(e.to_string()))?))?;
    println!(
        "energy_drift={} charge_drift={}",
        fmt_f64(drift.relative_energy()),
        fmt_f64(drift.relative_charge())
    );
    Ok(true)
}

fn hessian_cmd(a: &HessianArgs, out: &mut Outputs) -> Result<bool, Failure> {
    let model = model_from(&a.model)?;
    let s = jellium::groundstate::periodic_ground_state(a.alpha, a.r, &model)?;
    let h = assemble_hessian(&model, &s)?;
    let sp = spectrum(&h, a.kernel_tol)?;
    let nu = constrained_min_eig(&h)?;
    let mut csv = String::from("index,eigenvalue\n");
    for (i, l) in sp.eigenvalues.iter().enumerate() {
        let _ = writeln!(csv, "{i},{}", fmt_f64(*l));
    }
    out.text(&a.out, &csv)?;
    out.provenance(&a.out, "hessian", a, None)?;
    let min_pos = sp.min_positive.map(fmt_f64).unwrap_or_else(|| "none".into());
    println!(
        "dim={} kernel_dim={} min_positive={min_pos} nu_constrained={} norm={}",
        h.dim(),
        sp.kernel_dim,
        fmt_f64(nu),
        fmt_f64(sp.norm)
    );
    Ok(true)
}

fn stability_cmd(a: &StabilityArgs, out: &mut Outputs) -> Result<bool, Failure> {
    let model = model_from(&a.model)?;
    let integrator = IntegratorConfig {
        scheme: match a.scheme {
            SchemeArg::Strang => Scheme::Strang,
            SchemeArg::Picard => Scheme::Picard,
        },
        dt: a.dt,
        t_end: a.t_end,
        sample_every: a.sample_every,
        ..Default::default()
    };
    let cfg = StabilityConfig {
        delta: a.delta,
        seed: a.seed,
        integrator,
        scan_samples: a.scan_samples,
        scan_delta: a.scan_delta,
    };
    let r = stability_experiment(&model, &cfg)?;
    let mut csv = String::from("t,d,alpha_star,r1,r2,r3,E,Q\n");
    for s in &r.samples {
        let f = &s.fit;
        let row = [s.t, f.distance, f.alpha, f.r[0], f.r[1], f.r[2], s.energy, s.charge].map(fmt_f64).join(",");
        csv.push_str(&row);
        csv.push('\n');
    }
    out.text(&a.out, &csv)?;
    out.provenance(&a.out, "stability", a, None)?;
    println!("sup_d={},bound={},pass={}", fmt_f64(r.sup_distance), fmt_f64(r.bound), r.pass);
    Ok(r.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let mut out = Outputs::default();
    let result = match &cli.command {
        Command::DesignDensity(a) => design_density(a, &mut out),
        Command::CheckJellium(a) => check_jellium_cmd(a, &mut out),
        Command::CheckWiener(a) => check_wiener_cmd(a, &mut out),
        Command::GroundState(a) => ground_state_cmd(a, &mut out),
        Command::StructureFactor(a) => structure_factor_cmd(a, &mut out),
        Command::Evolve(a) => evolve_cmd(a, &mut out),
        Command::Hessian(a) => hessian_cmd(a, &mut out),
        Command::Stability(a) => stability_cmd(a, &mut out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            out.discard();
            let (code, msg) = match f {
                Failure::Usage(m) => (2, m),
                Failure::Compute(m) => (1, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
