//! Experiment configs, the runner and report serialization.
//!
//! A config names a list of experiments, each a `run` block tagged by
//! `kind` plus optional gates on the metrics it produces. Reports carry
//! every metric as a 17-significant-digit float; the metric payload is
//! independent of the worker count.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::bm;
use crate::conditioned::{
    bridge_midpoint_verify, clt_verify, conditioned_endpoints, gaps, llt_fixed_verify, llt_uniform_verify, mc_survival,
    rejection_endpoints, sampler_path_probability, survival_series, survival_table, survival_table_exact,
    surviving_paths, weyl_a_gaps, CltTarget,
};
use crate::cone::Cone;
use crate::counting::{asymptotic_predict, tilt_identity, PathCountTable};
use crate::dp::Radius;
use crate::error::{Error, Result};
use crate::harmonic::{
    combined_sigma, corrector_f, harmonicity_residual, invariance_check, v_bounded_jump, v_limit_dp, v_one_dim,
    v_series_estimate, value_iteration,
};
use crate::special::SeriesControl;
use crate::stats::{fn_bound_best_y, loglog_slope, merge_small_cells, two_sample_chi2};
use crate::walk::{cramer_tilt, moments, norm_exceedances, parse_multiset, StepDistribution, WalkSpec};

/// A float written with 17 significant digits; non-finite values are null.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else {
            s.serialize_none()
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Num, D::Error> {
        Ok(Num(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN)))
    }
}

/// Steps given as a file path (relative to the config) or inline as a
/// multiset of vectors, each drawn with equal probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Steps {
    File(String),
    Multiset(Vec<Vec<i64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// |value - target| <= tol
    Abs,
    /// |value / target - 1| <= tol
    Rel,
    /// value <= target + tol
    Le,
    /// value >= target - tol
    Ge,
    /// value < target
    Lt,
    /// value > target
    Gt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gate {
    pub metric: String,
    pub check: Check,
    pub target: f64,
    #[serde(default)]
    pub tol: f64,
}

impl Gate {
    pub fn passes(&self, v: f64) -> bool {
        let t = self.target;
        match self.check {
            Check::Abs => (v - t).abs() <= self.tol,
            Check::Rel => (v / t - 1.0).abs() <= self.tol,
            Check::Le => v <= t + self.tol,
            Check::Ge => v >= t - self.tol,
            Check::Lt => v < t,
            Check::Gt => v > t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    Dp,
    Mc,
}

/// Where V(x) for the tail prediction comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VSource {
    /// Closed form in d = 1, value iteration otherwise.
    Auto,
    OneDim,
    ValueIteration,
    /// u(M x), exact when u is harmonic for the walk with no overshoot.
    U,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VMethod {
    Series,
    Limit,
    BoundedJump,
    ValueIteration,
    OneDim,
}

impl VMethod {
    fn name(&self) -> &'static str {
        match self {
            VMethod::Series => "series",
            VMethod::Limit => "limit",
            VMethod::BoundedJump => "bounded_jump",
            VMethod::ValueIteration => "value_iteration",
            VMethod::OneDim => "one_dim",
        }
    }
}

fn default_radius() -> Radius {
    Radius::Default
}
fn default_vi_horizon() -> usize {
    4096
}
fn default_samples() -> usize {
    100_000
}
fn default_cap() -> usize {
    10_000
}
fn default_t() -> f64 {
    0.5
}
fn default_enumerate() -> usize {
    12
}
fn default_workers() -> usize {
    1
}
fn default_v() -> VSource {
    VSource::Auto
}
fn default_truncation() -> usize {
    bm::DEFAULT_TRUNCATION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Run {
    /// Brownian survival and the cone constants.
    Bm {
        cone: String,
        x: Vec<f64>,
        t: f64,
        #[serde(default = "default_truncation")]
        truncation: usize,
    },
    /// max |P_wedge(pi/2)(tau > t) - P(tau_1 > t) P(tau_2 > t)| over a
    /// grid with |x|^2 <= t, the wedge computed by its series.
    BmFactorization { x1: Vec<f64>, x2: Vec<f64>, t: Vec<f64> },
    /// q_n(x) along a grid of n, its log-log slope and n^{p/2} q_n against kappa V(x).
    Tail {
        cone: String,
        steps: Steps,
        x: Vec<i64>,
        ns: Vec<usize>,
        #[serde(default = "tail_dp")]
        method: TailMethod,
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default = "default_radius")]
        radius: Radius,
        #[serde(default)]
        slope_window: Option<(f64, f64)>,
        #[serde(default = "default_v")]
        v: VSource,
        #[serde(default = "default_vi_horizon")]
        vi_horizon: usize,
    },
    /// V at a few points by several methods, with cross-method and
    /// (epsilon, a) consistency and the harmonicity residual.
    Harmonic {
        cone: String,
        steps: Steps,
        points: Vec<Vec<i64>>,
        methods: Vec<VMethod>,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_cap")]
        cap: usize,
        #[serde(default = "default_vi_horizon")]
        horizon: usize,
        #[serde(default)]
        x_star: Option<Vec<i64>>,
        /// (epsilon, a) pairs for the invariance check.
        #[serde(default)]
        invariance: Vec<(f64, f64)>,
        /// Points for the value-iteration residual; defaults to `points`.
        #[serde(default)]
        residual_points: Vec<Vec<i64>>,
    },
    /// Exact conditioned endpoints against a limit density, chi-square.
    Clt {
        cone: String,
        steps: Steps,
        x: Vec<i64>,
        n: usize,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        cells: Option<(usize, usize)>,
        #[serde(default = "default_radius")]
        radius: Radius,
        /// Also test against the Gaussian restricted to K.
        #[serde(default)]
        control: bool,
    },
    /// Exact sampler against rejection sampling, and exact path probabilities.
    Sampler {
        cone: String,
        steps: Steps,
        x: Vec<i64>,
        n: usize,
        #[serde(default = "default_samples")]
        samples: usize,
        /// Exact path-probability identity for every horizon up to this.
        #[serde(default = "default_enumerate")]
        enumerate_max: usize,
    },
    LltUniform {
        cone: String,
        steps: Steps,
        x: Vec<i64>,
        ns: Vec<usize>,
        #[serde(default = "default_radius")]
        radius: Radius,
        #[serde(default = "default_vi_horizon")]
        vi_horizon: usize,
    },
    LltFixed {
        cone: String,
        steps: Steps,
        x: Vec<i64>,
        y: Vec<i64>,
        ns: Vec<usize>,
        #[serde(default = "default_radius")]
        radius: Radius,
        #[serde(default = "default_vi_horizon")]
        vi_horizon: usize,
    },
    /// Exact bridge midpoints against u^2 e^{-|w|^2/2t(1-t)}.
    Bridge {
        cone: String,
        steps: Steps,
        x: Vec<i64>,
        y: Vec<i64>,
        n: usize,
        #[serde(default = "default_t")]
        t: f64,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        cells: Option<(usize, usize)>,
        /// Run on the gap walk of a W_A(d) walk.
        #[serde(default)]
        gaps: bool,
    },
    /// Exact path counts and their asymptotic fit.
    Count {
        cone: String,
        steps: Steps,
        x: Vec<i64>,
        y: Vec<i64>,
        n_max: usize,
        /// Known counts for n = 0, 1, ..., compared exactly.
        #[serde(default)]
        reference: Vec<String>,
    },
    /// Cramer tilt and the count/tilted-probability identity.
    Tilt {
        cone: String,
        steps: Steps,
        x: Vec<i64>,
        y: Vec<i64>,
        n: usize,
    },
    /// Empirical |S(n)| tails against the optimized d-dimensional bound.
    FnCheck {
        steps: Steps,
        dim: usize,
        ns: Vec<usize>,
        /// Levels x = m sqrt(n).
        x_multiples: Vec<f64>,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// MC survival of a walk, slope of log q_n.
    McTail {
        cone: String,
        steps: Steps,
        x: Vec<i64>,
        ns: Vec<usize>,
        samples: usize,
        #[serde(default)]
        slope_window: Option<(f64, f64)>,
    },
    /// The metric payload of another config at several worker counts.
    Determinism { config: String, workers: Vec<usize> },
}

fn tail_dp() -> TailMethod {
    TailMethod::Dp
}

impl Run {
    pub fn kind(&self) -> &'static str {
        match self {
            Run::Bm { .. } => "bm",
            Run::BmFactorization { .. } => "bm-factorization",
            Run::Tail { .. } => "tail",
            Run::Harmonic { .. } => "harmonic",
            Run::Clt { .. } => "clt",
            Run::Sampler { .. } => "sampler",
            Run::LltUniform { .. } => "llt-uniform",
            Run::LltFixed { .. } => "llt-fixed",
            Run::Bridge { .. } => "bridge",
            Run::Count { .. } => "count",
            Run::Tilt { .. } => "tilt",
            Run::FnCheck { .. } => "fn-check",
            Run::McTail { .. } => "mc-tail",
            Run::Determinism { .. } => "determinism",
        }
    }

    fn stochastic(&self) -> bool {
        match self {
            Run::Tail { method, .. } => *method == TailMethod::Mc,
            Run::Harmonic { methods, invariance, .. } => methods.contains(&VMethod::Series) || !invariance.is_empty(),
            Run::Clt { .. } | Run::Sampler { .. } | Run::Bridge { .. } | Run::FnCheck { .. } | Run::McTail { .. } => true,
            _ => false,
        }
    }

    fn steps(&self) -> Option<&Steps> {
        match self {
            Run::Tail { steps, .. }
            | Run::Harmonic { steps, .. }
            | Run::Clt { steps, .. }
            | Run::Sampler { steps, .. }
            | Run::LltUniform { steps, .. }
            | Run::LltFixed { steps, .. }
            | Run::Bridge { steps, .. }
            | Run::Count { steps, .. }
            | Run::Tilt { steps, .. }
            | Run::FnCheck { steps, .. }
            | Run::McTail { steps, .. } => Some(steps),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default)]
    pub label: Option<String>,
    pub run: Run,
    #[serde(default)]
    pub gates: Vec<Gate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub name: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub output: Option<String>,
    pub experiments: Vec<Experiment>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Config> {
        let mut c: Config = serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        c.base_dir = base_dir.to_path_buf();
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Config::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::ConfigInvalid("workers must be positive".into()));
        }
        for (i, e) in self.experiments.iter().enumerate() {
            if e.run.stochastic() && self.seed.is_none() {
                return Err(Error::ConfigInvalid(format!(
                    "experiment {i} ({}) is stochastic and needs a seed",
                    e.run.kind()
                )));
            }
            if let Some(Steps::File(f)) = e.run.steps() {
                let p = self.base_dir.join(f);
                if !p.is_file() {
                    return Err(Error::ConfigInvalid(format!("missing step file {}", p.display())));
                }
            }
            if let Run::Determinism { config, .. } = &e.run {
                let p = self.base_dir.join(config);
                if !p.is_file() {
                    return Err(Error::ConfigInvalid(format!("missing config {}", p.display())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metric {
    pub name: String,
    pub value: Num,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateResult {
    pub metric: String,
    pub check: Check,
    pub target: Num,
    pub tol: Num,
    pub value: Num,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub label: String,
    pub kind: String,
    pub seed: Option<u64>,
    pub config: Run,
    pub metrics: Vec<Metric>,
    pub gates: Vec<GateResult>,
    pub error: Option<String>,
    pub passed: bool,
    pub wall_clock_s: Num,
}

impl ExperimentReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub name: String,
    pub seed: Option<u64>,
    pub workers: usize,
    pub version: String,
    pub experiments: Vec<ExperimentReport>,
    pub passed: bool,
    pub wall_clock_s: Num,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::IoFailure(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Report> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// `label,kind,metric,value,check,target,tol,passed`, one metric per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,kind,metric,value,check,target,tol,passed\n");
        let f = |v: f64| if v.is_finite() { format!("{v:.16e}") } else { String::new() };
        for e in &self.experiments {
            for m in &e.metrics {
                let gate = e.gates.iter().find(|g| g.metric == m.name);
                let (check, target, tol, passed) = match gate {
                    Some(g) => (
                        serde_json::to_value(g.check).unwrap().as_str().unwrap_or("").to_string(),
                        f(g.target.0),
                        f(g.tol.0),
                        g.passed.to_string(),
                    ),
                    None => Default::default(),
                };
                out.push_str(&format!(
                    "{},{},{},{},{check},{target},{tol},{passed}\n",
                    e.label,
                    e.kind,
                    m.name,
                    f(m.value.0)
                ));
            }
        }
        out
    }

    /// Labels and metrics only: the part that must not depend on timing
    /// or worker count.
    pub fn payload(&self) -> String {
        let p: Vec<(&str, &Vec<Metric>)> = self.experiments.iter().map(|e| (e.label.as_str(), &e.metrics)).collect();
        serde_json::to_string(&p).unwrap_or_default()
    }
}

/// Seed for the i-th experiment (splitmix64 of seed + i).
fn derive_seed(seed: u64, i: usize) -> u64 {
    let mut z = seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run(config: &Config) -> Result<Report> {
    let t0 = Instant::now();
    let mut experiments = Vec::with_capacity(config.experiments.len());
    for (i, e) in config.experiments.iter().enumerate() {
        let seed = config.seed.map(|s| derive_seed(s, i));
        let t = Instant::now();
        let ctx = Ctx {
            seed: seed.unwrap_or(0),
            workers: config.workers,
            base: &config.base_dir,
        };
        let (metrics, error) = match run_one(&e.run, &ctx) {
            Ok(m) => (m, None),
            Err(err) => (Vec::new(), Some(err.to_string())),
        };
        let gates: Vec<GateResult> = e
            .gates
            .iter()
            .map(|g| {
                let v = metrics.iter().find(|m| m.name == g.metric).map(|m| m.value.0).unwrap_or(f64::NAN);
                GateResult {
                    metric: g.metric.clone(),
                    check: g.check,
                    target: Num(g.target),
                    tol: Num(g.tol),
                    value: Num(v),
                    passed: g.passes(v),
                }
            })
            .collect();
        let passed = error.is_none() && gates.iter().all(|g| g.passed);
        experiments.push(ExperimentReport {
            label: e.label.clone().unwrap_or_else(|| format!("{}-{i}", e.run.kind())),
            kind: e.run.kind().to_string(),
            seed,
            config: e.run.clone(),
            metrics,
            gates,
            error,
            passed,
            wall_clock_s: Num(t.elapsed().as_secs_f64()),
        });
    }
    let passed = experiments.iter().all(|e| e.passed);
    Ok(Report {
        name: config.name.clone(),
        seed: config.seed,
        workers: config.workers,
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiments,
        passed,
        wall_clock_s: Num(t0.elapsed().as_secs_f64()),
    })
}

struct Ctx<'a> {
    seed: u64,
    workers: usize,
    base: &'a Path,
}

#[derive(Default)]
struct Metrics(Vec<Metric>);

impl Metrics {
    fn put(&mut self, name: impl Into<String>, v: f64) {
        self.0.push(Metric {
            name: name.into(),
            value: Num(v),
        });
    }
}

fn at(z: &[i64]) -> String {
    z.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn load_steps(steps: &Steps, dim: usize, base: &Path) -> Result<StepDistribution> {
    match steps {
        Steps::File(f) => StepDistribution::from_file(&base.join(f), dim),
        Steps::Multiset(v) => StepDistribution::from_multiset(v),
    }
}

/// The raw multiset (for counting); a file must list steps without
/// probabilities, with repeats for multiplicity.
pub fn load_multiset(steps: &Steps, dim: usize, base: &Path) -> Result<Vec<Vec<i64>>> {
    match steps {
        Steps::File(f) => {
            let p = base.join(f);
            let text = std::fs::read_to_string(&p).map_err(|e| Error::IoFailure(format!("{}: {e}", p.display())))?;
            parse_multiset(&text, dim)
        }
        Steps::Multiset(v) => Ok(v.clone()),
    }
}

fn walk(cone: &str, steps: &Steps, base: &Path) -> Result<WalkSpec> {
    let cone = Cone::parse(cone)?;
    let dist = load_steps(steps, cone.dim(), base)?;
    WalkSpec::new(cone, dist)
}

/// V at x: closed form in d = 1, value iteration otherwise.
fn v_at(spec: &WalkSpec, x: &[i64], source: VSource, vi_horizon: usize) -> Result<f64> {
    let source = match source {
        VSource::Auto if spec.dim() == 1 => VSource::OneDim,
        VSource::Auto => VSource::ValueIteration,
        s => s,
    };
    match source {
        VSource::OneDim => Ok(v_one_dim(&spec.dist, x[0])?.normalized),
        VSource::ValueIteration => {
            let r = x.iter().map(|v| v.abs()).max().unwrap_or(0) + 1;
            let t = value_iteration(spec, r, vi_horizon)?;
            t.value(x).ok_or_else(|| Error::MissingNeighbor(x.to_vec()))
        }
        VSource::U | VSource::Auto => Ok(spec.u(x)),
    }
}

fn default_cells(d: usize) -> (usize, usize) {
    if d == 1 {
        (20, 1)
    } else {
        (6, 4)
    }
}

fn run_one(r: &Run, ctx: &Ctx) -> Result<Vec<Metric>> {
    let mut m = Metrics::default();
    match r {
        Run::Bm { cone, x, t, truncation } => {
            let cone = Cone::parse(cone)?;
            let c = bm::bm_constants(&cone, *truncation)?;
            m.put("survival", bm::bm_survival(&cone, x, *t, &SeriesControl::default())?);
            m.put("p", crate::cone::spectral_data(&cone, *truncation)?.p);
            m.put("kappa", c.kappa);
            m.put("h0", c.h0_const);
            m.put("rho", c.rho_const);
        }
        Run::BmFactorization { x1, x2, t } => {
            let wedge = Cone::wedge(std::f64::consts::FRAC_PI_2)?;
            let hl = Cone::half_line();
            let ctl = SeriesControl::default();
            let mut worst: f64 = 0.0;
            let mut points = 0;
            for &a in x1 {
                for &b in x2 {
                    for &s in t {
                        if a * a + b * b > s {
                            continue;
                        }
                        let w = bm::bm_survival(&wedge, &[a, b], s, &ctl)?;
                        let p = bm::bm_survival(&hl, &[a], s, &ctl)? * bm::bm_survival(&hl, &[b], s, &ctl)?;
                        worst = worst.max((w - p).abs());
                        points += 1;
                    }
                }
            }
            m.put("points", points as f64);
            m.put("max_abs_error", worst);
        }
        Run::Tail {
            cone,
            steps,
            x,
            ns,
            method,
            samples,
            radius,
            slope_window,
            v,
            vi_horizon,
        } => {
            let spec = walk(cone, steps, ctx.base)?;
            let qs: Vec<(usize, f64)> = match method {
                TailMethod::Dp => {
                    let s = survival_series(&spec.cone, &spec.dist, x, ns, *radius)?;
                    for (n, b) in &s {
                        m.put(format!("escaped@{n}"), b.escaped);
                    }
                    s.into_iter().map(|(n, b)| (n, b.value())).collect()
                }
                TailMethod::Mc => {
                    let total = samples.ok_or_else(|| Error::ConfigInvalid("mc tail needs samples".into()))?;
                    mc_survival(&spec.cone, &spec.dist, x, ns, total, ctx.seed, ctx.workers)?
                        .into_iter()
                        .map(|(n, c)| (n, c as f64 / total as f64))
                        .collect()
                }
            };
            for (n, q) in &qs {
                m.put(format!("q@{n}"), *q);
            }
            let series: Vec<(f64, f64)> = qs.iter().filter(|(_, q)| *q > 0.0).map(|&(n, q)| (n as f64, q)).collect();
            let fit = loglog_slope(&series, *slope_window)?;
            m.put("slope", fit.slope);
            m.put("slope_ci", fit.ci);
            let (n_last, q_last) = *qs.iter().max_by_key(|(n, _)| *n).unwrap();
            let scaled = (n_last as f64).powf(spec.p() / 2.0) * q_last;
            let vx = v_at(&spec, x, *v, *vi_horizon)?;
            let pred = spec.spectral.kappa * vx;
            m.put("scaled_last", scaled);
            m.put("v", vx);
            m.put("kappa", spec.spectral.kappa);
            m.put("prediction", pred);
            m.put("ratio", scaled / pred);
        }
        Run::McTail {
            cone,
            steps,
            x,
            ns,
            samples,
            slope_window,
        } => {
            let spec = walk(cone, steps, ctx.base)?;
            let c = mc_survival(&spec.cone, &spec.dist, x, ns, *samples, ctx.seed, ctx.workers)?;
            let mut series = Vec::new();
            for (n, k) in &c {
                let q = *k as f64 / *samples as f64;
                m.put(format!("q@{n}"), q);
                if *k > 0 {
                    series.push((*n as f64, q));
                }
            }
            let fit = loglog_slope(&series, *slope_window)?;
            m.put("slope", fit.slope);
            m.put("slope_ci", fit.ci);
            m.put("p", spec.p());
        }
        Run::Harmonic {
            cone,
            steps,
            points,
            methods,
            samples,
            cap,
            horizon,
            x_star,
            invariance,
            residual_points,
        } => {
            let spec = walk(cone, steps, ctx.base)?;
            let params = spec.default_params();
            let vi = if methods.contains(&VMethod::ValueIteration) {
                let r = points
                    .iter()
                    .chain(residual_points)
                    .flat_map(|p| p.iter().map(|v| v.abs()))
                    .max()
                    .unwrap_or(0)
                    + 2;
                Some(value_iteration(&spec, r, *horizon)?)
            } else {
                None
            };
            let x_star = match x_star {
                Some(s) => s.clone(),
                None => vec![spec.dist.max_norm().floor() as i64 + 1; spec.dim()],
            };
            let mut overall_z: f64 = 0.0;
            let mut max_f: f64 = 0.0;
            for (pi, p) in points.iter().enumerate() {
                let mut ests: Vec<(f64, f64)> = Vec::new();
                for (mi, meth) in methods.iter().enumerate() {
                    let (v, se) = match meth {
                        VMethod::Series => {
                            let seed = derive_seed(ctx.seed, 1000 * pi + mi);
                            let e = v_series_estimate(&spec, p, &params, *samples, *cap, seed, ctx.workers)?;
                            (e.value, e.stderr)
                        }
                        VMethod::Limit => {
                            let e = v_limit_dp(&spec, p, *horizon, Radius::Default)?;
                            (e.value, e.stderr)
                        }
                        VMethod::BoundedJump => {
                            let e = v_bounded_jump(&spec, p, &x_star, *horizon, Radius::Default)?;
                            (e.value, e.stderr)
                        }
                        VMethod::ValueIteration => {
                            let t = vi.as_ref().unwrap();
                            (t.value(p).ok_or_else(|| Error::MissingNeighbor(p.clone()))?, 0.0)
                        }
                        VMethod::OneDim => (v_one_dim(&spec.dist, p[0])?.normalized, 0.0),
                    };
                    m.put(format!("v.{}@{}", meth.name(), at(p)), v);
                    m.put(format!("se.{}@{}", meth.name(), at(p)), se);
                    ests.push((v, se));
                }
                let mut z: f64 = 0.0;
                for i in 0..ests.len() {
                    for j in i + 1..ests.len() {
                        z = z.max((ests[i].0 - ests[j].0).abs() / combined_sigma(&[ests[i], ests[j]]));
                    }
                }
                m.put(format!("max_pair_z@{}", at(p)), z);
                overall_z = overall_z.max(z);
                if !invariance.is_empty() {
                    let list: Vec<_> = invariance
                        .iter()
                        .map(|&(epsilon, a)| crate::cone::ExtensionParams { epsilon, a })
                        .collect();
                    let rep = invariance_check(&spec, p, &list, *samples, *cap, derive_seed(ctx.seed, 1000 * pi + 999), ctx.workers)?;
                    m.put(format!("invariance_z@{}", at(p)), rep.max_z);
                }
                max_f = max_f.max(corrector_f(&spec, p, &params)?.abs());
            }
            m.put("max_pair_z", overall_z);
            m.put("max_abs_corrector", max_f);
            if let Some(t) = &vi {
                let rp = if residual_points.is_empty() { points } else { residual_points };
                let mut worst: f64 = 0.0;
                for p in rp {
                    let v = t.value(p).ok_or_else(|| Error::MissingNeighbor(p.clone()))?;
                    worst = worst.max(harmonicity_residual(t, &spec, p)? / v);
                }
                m.put("vi_max_rel_residual", worst);
            }
        }
        Run::Clt {
            cone,
            steps,
            x,
            n,
            samples,
            cells,
            radius,
            control,
        } => {
            let spec = walk(cone, steps, ctx.base)?;
            let table = survival_table(&spec.cone, &spec.dist, x, *n, *radius)?;
            m.put("q_n", table.q(*n, x).unwrap_or(0.0));
            let ends = conditioned_endpoints(&table, x, *n, *samples, ctx.seed, ctx.workers)?;
            drop(table);
            let cells = cells.unwrap_or_else(|| default_cells(spec.dim()));
            let rep = clt_verify(&spec, x, &ends, *n, CltTarget::Meander, cells)?;
            m.put("h0", spec.spectral.h0_const);
            m.put("chi2", rep.chi2.statistic);
            m.put("p_value", rep.chi2.p_value);
            m.put("cells", rep.chi2.cells as f64);
            m.put("mean_radius", rep.mean_radius);
            m.put("mean_radius_se", rep.mean_radius_se);
            m.put("target_mean_radius", rep.target_mean_radius);
            if *control {
                let c = clt_verify(&spec, x, &ends, *n, CltTarget::Gaussian, cells)?;
                m.put("control_chi2", c.chi2.statistic);
                m.put("control_p_value", c.chi2.p_value);
            }
        }
        Run::Sampler {
            cone,
            steps,
            x,
            n,
            samples,
            enumerate_max,
        } => {
            let cone = Cone::parse(cone)?;
            let dist = load_steps(steps, cone.dim(), ctx.base)?;
            let table = survival_table(&cone, &dist, x, *n, Radius::Full)?;
            let a = conditioned_endpoints(&table, x, *n, *samples, derive_seed(ctx.seed, 0), ctx.workers)?;
            let (b, tried) = rejection_endpoints(&cone, &dist, x, *n, *samples, derive_seed(ctx.seed, 1), ctx.workers)?;
            let mut keys: Vec<&Vec<i64>> = a.iter().chain(&b).collect();
            keys.sort();
            keys.dedup();
            let idx = |z: &Vec<i64>| keys.binary_search(&z).unwrap();
            let mut ca = vec![0u64; keys.len()];
            let mut cb = vec![0u64; keys.len()];
            a.iter().for_each(|z| ca[idx(z)] += 1);
            b.iter().for_each(|z| cb[idx(z)] += 1);
            let pooled: Vec<f64> = ca.iter().zip(&cb).map(|(x, y)| (x + y) as f64).collect();
            let total: f64 = pooled.iter().sum();
            let map = merge_small_cells(&pooled, total, 2.0 * crate::stats::MIN_EXPECTED + 1.0);
            let k = map.iter().max().map_or(0, |v| v + 1);
            let (mut ma, mut mb) = (vec![0u64; k], vec![0u64; k]);
            for (i, &c) in map.iter().enumerate() {
                ma[c] += ca[i];
                mb[c] += cb[i];
            }
            let chi = two_sample_chi2(&ma, &mb)?;
            m.put("two_sample_chi2", chi.statistic);
            m.put("two_sample_p", chi.p_value);
            m.put("cells", chi.cells as f64);
            m.put("rejection_acceptance", *samples as f64 / tried as f64);
            let mut failures = 0usize;
            let mut checked = 0usize;
            for k in 1..=*enumerate_max {
                let t = survival_table_exact(&cone, &dist, x, k)?;
                let q = t.q(k, x).ok_or(Error::ZeroSurvival)?;
                for (path, p) in surviving_paths(&cone, &dist, x, k)? {
                    checked += 1;
                    if sampler_path_probability(&t, &path)? != p / &q {
                        failures += 1;
                    }
                }
            }
            m.put("identity_paths", checked as f64);
            m.put("identity_failures", failures as f64);
        }
        Run::LltUniform {
            cone,
            steps,
            x,
            ns,
            radius,
            vi_horizon,
        } => {
            let spec = walk(cone, steps, ctx.base)?;
            let vx = v_at(&spec, x, VSource::Auto, *vi_horizon)?;
            let rows = llt_uniform_verify(&spec, x, ns, vx, *radius)?;
            let mut monotone = true;
            for (i, r) in rows.iter().enumerate() {
                m.put(format!("sup_error@{}", r.n), r.sup_error);
                m.put(format!("rel_sup_error@{}", r.n), r.sup_error / r.sup_prediction);
                m.put(format!("escaped@{}", r.n), r.escaped);
                if i > 0 && r.sup_error > rows[i - 1].sup_error {
                    monotone = false;
                }
            }
            m.put("v", vx);
            m.put("decreasing", flag(monotone));
        }
        Run::LltFixed {
            cone,
            steps,
            x,
            y,
            ns,
            radius,
            vi_horizon,
        } => {
            let spec = walk(cone, steps, ctx.base)?;
            let back = spec.reflected()?;
            let vx = v_at(&spec, x, VSource::Auto, *vi_horizon)?;
            let vy = v_at(&back, y, VSource::Auto, *vi_horizon)?;
            let rows = llt_fixed_verify(&spec, x, y, ns, vx, vy, *radius)?;
            let mut toward_one = true;
            let mut glued_toward_one = true;
            for (i, r) in rows.iter().enumerate() {
                m.put(format!("probability@{}", r.n), r.probability);
                m.put(format!("predicted@{}", r.n), r.predicted);
                m.put(format!("ratio@{}", r.n), r.ratio);
                m.put(format!("glued_ratio@{}", r.n), r.glued_ratio);
                if i > 0 {
                    toward_one &= (r.ratio - 1.0).abs() < (rows[i - 1].ratio - 1.0).abs();
                    glued_toward_one &= (r.glued_ratio - 1.0).abs() < (rows[i - 1].glued_ratio - 1.0).abs();
                }
            }
            m.put("v_x", vx);
            m.put("v_prime_y", vy);
            m.put("ratio_last", rows.last().map_or(f64::NAN, |r| r.ratio));
            m.put("glued_ratio_last", rows.last().map_or(f64::NAN, |r| r.glued_ratio));
            m.put("monotone_toward_one", flag(toward_one));
            m.put("glued_monotone_toward_one", flag(glued_toward_one));
        }
        Run::Bridge {
            cone,
            steps,
            x,
            y,
            n,
            t,
            samples,
            cells,
            gaps: use_gaps,
        } => {
            let cone = Cone::parse(cone)?;
            let dist = load_steps(steps, cone.dim(), ctx.base)?;
            let (spec, x, y) = if *use_gaps {
                let g = weyl_a_gaps(&dist)?;
                let spec = WalkSpec::new(Cone::orthant(cone.dim() - 1)?, g)?;
                (spec, gaps(x), gaps(y))
            } else {
                (WalkSpec::new(cone, dist)?, x.clone(), y.clone())
            };
            let cells = cells.unwrap_or_else(|| default_cells(spec.dim()));
            let rep = bridge_midpoint_verify(&spec, &x, &y, *n, *t, *samples, cells, ctx.seed, ctx.workers)?;
            m.put("bridge_mass", rep.bridge_mass);
            m.put("chi2", rep.chi2.statistic);
            m.put("p_value", rep.chi2.p_value);
            m.put("cells", rep.chi2.cells as f64);
            if let Some(z) = rep.swap_z {
                m.put("swap_z", z);
            }
        }
        Run::Count {
            cone,
            steps,
            x,
            y,
            n_max,
            reference,
        } => {
            let cone = Cone::parse(cone)?;
            let ms = load_multiset(steps, cone.dim(), ctx.base)?;
            if !reference.is_empty() {
                let t = PathCountTable::build(&ms, &cone, x, y, reference.len() - 1)?;
                let bad = t.counts.iter().zip(reference).filter(|(c, r)| c.to_string() != r.trim()).count();
                m.put("reference_mismatches", bad as f64);
            }
            let f = asymptotic_predict(&ms, &cone, x, y, *n_max)?;
            m.put("growth", f.growth);
            m.put("poly_exponent", f.poly_exponent);
            m.put("exponent_ci", f.exponent_ci);
            m.put("theory_exponent", f.theory_exponent.unwrap_or(f64::NAN));
            m.put("c_estimate", f.c_estimate);
            m.put("c_last", f.c_last);
            m.put("residue_class", f.residue_class as f64);
            m.put("converged", flag(f.converged));
        }
        Run::Tilt { cone, steps, x, y, n } => {
            let cone = Cone::parse(cone)?;
            let ms = load_multiset(steps, cone.dim(), ctx.base)?;
            let tilt = cramer_tilt(&ms)?;
            for (i, h) in tilt.h0.iter().enumerate() {
                m.put(format!("h0[{i}]"), *h);
            }
            m.put("r_h0", tilt.r_h0);
            m.put("growth", tilt.n_steps as f64 * tilt.r_h0);
            let rows = tilt_identity(&ms, &cone, x, y, *n)?;
            m.put("identity_max_rel_error", rows.iter().map(|r| r.rel_error).fold(0.0, f64::max));
        }
        Run::FnCheck {
            steps,
            dim,
            ns,
            x_multiples,
            samples,
        } => {
            let dist = load_steps(steps, *dim, ctx.base)?;
            let d = dist.dim();
            let (_, cov) = moments(&dist);
            let variance = (0..d).map(|i| cov[(i, i)]).fold(0.0, f64::max);
            let norms: Vec<(f64, f64)> = dist
                .support()
                .iter()
                .zip(dist.probs())
                .map(|(s, &p)| (s.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt(), p))
                .collect();
            let tail = |y: f64| norms.iter().filter(|(r, _)| *r > y).map(|(_, p)| p).sum::<f64>().min(1.0);
            let mut levels = Vec::new();
            for &n in ns {
                let row: Vec<f64> = x_multiples.iter().map(|c| c * (n as f64).sqrt()).collect();
                levels.push(row);
            }
            let counts = norm_exceedances(&dist, ns, &levels, *samples, ctx.seed, ctx.workers)?;
            let mut worst = f64::NEG_INFINITY;
            let mut violations = 0;
            for (i, &n) in ns.iter().enumerate() {
                for (j, &x) in levels[i].iter().enumerate() {
                    let emp = counts[i][j] as f64 / *samples as f64;
                    let sigma = (emp * (1.0 - emp) / *samples as f64).sqrt();
                    let (y, bound) = fn_bound_best_y(n as u64, x, variance, d, tail)?;
                    let key = format!("{n},{}", x_multiples[j]);
                    m.put(format!("empirical@{key}"), emp);
                    m.put(format!("bound@{key}"), bound);
                    m.put(format!("y@{key}"), y);
                    let excess = emp - bound - 4.0 * sigma;
                    worst = worst.max(excess);
                    if excess > 0.0 {
                        violations += 1;
                    }
                }
            }
            m.put("max_excess", worst);
            m.put("violations", violations as f64);
        }
        Run::Determinism { config, workers } => {
            let path = ctx.base.join(config);
            let mut cfg = Config::from_file(&path)?;
            let mut payloads = Vec::new();
            for &w in workers {
                cfg.workers = w;
                payloads.push(run(&cfg)?.payload());
            }
            let same = payloads.windows(2).all(|p| p[0] == p[1]);
            m.put("runs", payloads.len() as f64);
            m.put("identical", flag(same && !payloads.is_empty()));
        }
    }
    Ok(m.0)
}
