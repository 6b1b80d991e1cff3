//! Acceptance suite: one check per criterion, each driven by the shipped
//! config under `configs/` and compared against oracles computed here.
//! Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

use std::f64::consts::{LN_2, PI, SQRT_2};
use std::path::PathBuf;
use std::time::Instant;

use num_bigint::BigUint;
use statrs::distribution::{ContinuousCDF, Normal};

use conewalk::bm::bm_survival;
use conewalk::cone::Cone;
use conewalk::counting::count_paths;
use conewalk::experiment::{self, Config, ExperimentReport, Report};
use conewalk::special::SeriesControl;

struct Outcome {
    id: u32,
    name: &'static str,
    failures: Vec<String>,
    notes: Vec<String>,
    seconds: f64,
}

type Criterion = (u32, &'static str, fn(&mut Checks));

#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: String) {
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    fn close(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        let ok = (got - want).abs() <= tol;
        self.check(ok, format!("{what}={got:.7} (want {want:.7} +- {tol:e})"));
    }

    fn rel(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        let ok = ((got - want) / want).abs() <= tol;
        self.check(ok, format!("{what}={got:.6} (want {want:.6} within {:.0}%)", tol * 100.0));
    }

    fn at_most(&mut self, what: &str, got: f64, bound: f64) {
        self.check(got <= bound, format!("{what}={got:.3e} (<= {bound:e})"));
    }

    fn above(&mut self, what: &str, got: f64, bound: f64) {
        self.check(got > bound, format!("{what}={got:.4} (> {bound:e})"));
    }

    fn below(&mut self, what: &str, got: f64, bound: f64) {
        self.check(got < bound, format!("{what}={got:.3e} (< {bound:e})"));
    }

    fn runtime(&mut self, e: &ExperimentReport, budget: f64) {
        let s = e.wall_clock_s.0;
        self.check(s < budget, format!("{} runtime {s:.2}s (< {budget}s)", e.label));
    }
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(file: &str) -> Config {
    let config = Config::from_file(&configs_dir().join(file)).unwrap_or_else(|e| panic!("{file}: {e}"));
    config.validate().unwrap_or_else(|e| panic!("{file}: {e}"));
    config
}

fn run(file: &str) -> Report {
    experiment::run(&load(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

fn exp<'a>(report: &'a Report, label: &str) -> &'a ExperimentReport {
    let e = report
        .experiments
        .iter()
        .find(|e| e.label == label)
        .unwrap_or_else(|| panic!("no experiment {label} in {}", report.name));
    if let Some(err) = &e.error {
        panic!("{label}: {err}");
    }
    e
}

fn metric(e: &ExperimentReport, name: &str) -> f64 {
    e.metric(name).unwrap_or_else(|| panic!("{}: missing metric {name}", e.label))
}

/// P(B_t > 0 for all t <= T | B_0 = x) in one dimension, by reflection.
fn reflection(x: f64, t: f64) -> f64 {
    let normal = Normal::standard();
    2.0 * normal.cdf(x / t.sqrt()) - 1.0
}

fn catalan(m: u64) -> BigUint {
    let mut binom = BigUint::from(1u32);
    for k in 0..m {
        binom = binom * BigUint::from(2 * m - k) / BigUint::from(k + 1);
    }
    binom / BigUint::from(m + 1)
}

fn c01(c: &mut Checks) {
    let r = run("criterion_01_bm_closed_forms.json");
    let half = exp(&r, "halfline");
    let quad = exp(&r, "quadrant");
    c.close("halfline", metric(half, "survival"), reflection(1.0, 1.0), 1e-6);
    c.close("halfline literal", metric(half, "survival"), 0.682689, 1e-6);
    c.close("quadrant", metric(quad, "survival"), reflection(1.0, 1.0).powi(2), 1e-6);
    c.close("quadrant literal", metric(quad, "survival"), 0.466065, 1e-6);
    c.runtime(half, 1.0);
    c.runtime(quad, 1.0);
}

fn c02(c: &mut Checks) {
    let r = run("criterion_02_bm_factorization.json");
    let e = exp(&r, "grid");
    c.at_most("max_abs_error", metric(e, "max_abs_error"), 1e-6);
    c.check(metric(e, "points") == 75.0, format!("points={} (want 75)", metric(e, "points")));
    // Same grid, series for the right-angle wedge against the reflection product.
    let wedge = Cone::wedge(PI / 2.0).unwrap();
    let ctl = SeriesControl::default();
    let grid = [0.1, 0.25, 0.4, 0.55, 0.7];
    let mut worst: f64 = 0.0;
    let mut inside = 0;
    for &t in &[1.0, 2.0, 4.0] {
        for &a in &grid {
            for &b in &grid {
                if a * a + b * b > t {
                    continue;
                }
                inside += 1;
                let series = bm_survival(&wedge, &[a, b], t, &ctl).unwrap();
                worst = worst.max((series - reflection(a, t) * reflection(b, t)).abs());
            }
        }
    }
    c.check(inside == 75, format!("grid points with |x|^2 <= t: {inside}"));
    c.at_most("oracle max error", worst, 1e-6);
}

fn c03(c: &mut Checks) {
    let r = run("criterion_03_kappa_ladder.json");
    c.close("kappa halfline", metric(exp(&r, "halfline"), "kappa"), (2.0 / PI).sqrt(), 1e-9);
    c.close("kappa half-plane", metric(exp(&r, "half-plane"), "kappa"), 1.0, 1e-6);
    c.close("kappa quadrant", metric(exp(&r, "quadrant"), "kappa"), 1.0 / (2.0 * PI.sqrt()), 1e-6);
}

fn c04(c: &mut Checks) {
    let r = run("criterion_04_tail_srw.json");
    let e = exp(&r, "srw-x3");
    c.close("slope", metric(e, "slope"), -0.5, 0.02);
    let n = 16384.0_f64;
    let scaled = n.sqrt() * metric(e, "q@16384");
    c.rel("n^1/2 q_n", scaled, (2.0 / PI).sqrt() * 3.0, 0.02);
    c.check(metric(e, "escaped@16384") == 0.0, "table exact (no escaped mass)".into());
    c.runtime(e, 10.0);
}

fn c05(c: &mut Checks) {
    let r = run("criterion_05_tail_quadrant.json");
    let e = exp(&r, "lazy-nsew-x33");
    // Lazy NSEW has covariance I/4, whitening 2I, and V(x) = u(2x) exactly
    // with u(y) = 4 y1 y2 / sqrt(pi); kappa of the quadrant is 1/(2 sqrt(pi)).
    let v = 4.0 * 6.0 * 6.0 / PI.sqrt();
    c.rel("V value iteration", metric(e, "v"), v, 1e-6);
    let scaled = 4096.0 * metric(e, "q@4096");
    c.rel("n q_n", scaled, v / (2.0 * PI.sqrt()), 0.05);
    c.runtime(e, 300.0);
}

fn c06(c: &mut Checks) {
    let r = run("criterion_06_v_consistency.json");
    let e = exp(&r, "lazy-nsew");
    c.at_most("max pairwise z", metric(e, "max_pair_z"), 3.0);
    for p in ["1,1", "3,3", "5,2"] {
        let names = ["series", "limit", "bounded_jump"].map(|m| format!("v.{m}@{p}"));
        let vs: Vec<String> = names.iter().map(|n| format!("{:.3}", metric(e, n))).collect();
        c.notes.push(format!("V({p}) = {}", vs.join(" / ")));
        c.at_most(&format!("invariance z at {p}"), metric(e, &format!("invariance_z@{p}")), 3.0);
    }
}

fn c07(c: &mut Checks) {
    let r = run("criterion_07_harmonicity.json");
    let e = exp(&r, "lazy-nsew-vi");
    c.at_most("max relative residual", metric(e, "vi_max_rel_residual"), 1e-3);
}

fn c08(c: &mut Checks) {
    let r = run("criterion_08_conditioned_clt.json");
    let half = exp(&r, "halfline-lazy");
    c.above("halfline p", metric(half, "p_value"), 0.01);
    c.below("gaussian control p", metric(half, "control_p_value"), 1e-6);
    let quad = exp(&r, "quadrant-lazy");
    c.above("quadrant p", metric(quad, "p_value"), 0.01);
    c.close("quadrant H0", metric(quad, "h0"), PI.sqrt() / 4.0, 1e-12);
}

fn c09(c: &mut Checks) {
    let r = run("criterion_09_sampler_exactness.json");
    let e = exp(&r, "srw-n10");
    c.above("two-sample p", metric(e, "two_sample_p"), 0.01);
    c.check(
        metric(e, "identity_failures") == 0.0 && metric(e, "identity_paths") > 0.0,
        format!(
            "path identity exact on {} paths, {} failures",
            metric(e, "identity_paths"),
            metric(e, "identity_failures")
        ),
    );
}

fn c10(c: &mut Checks) {
    let r = run("criterion_10_llt_fixed.json");
    let e = exp(&r, "halfline-lazy");
    let ns = [1024, 2048, 4096, 8192];
    let ratios: Vec<f64> = ns.iter().map(|n| metric(e, &format!("ratio@{n}"))).collect();
    c.close("ratio at 8192", ratios[3], 1.0, 0.1);
    let monotone = ratios.windows(2).all(|w| (w[1] - 1.0).abs() < (w[0] - 1.0).abs());
    c.check(monotone, format!("ratios {ratios:.4?} monotone toward 1: {monotone}"));
    let glued: Vec<f64> = ns.iter().map(|n| metric(e, &format!("glued_ratio@{n}"))).collect();
    c.notes.push(format!("ratios with lattice and covariance factors: {glued:.5?}"));
}

fn c11(c: &mut Checks) {
    let t = Instant::now();
    let r = run("criterion_11_catalan.json");
    let e = exp(&r, "dyck");
    let srw = vec![vec![1], vec![-1]];
    let half = Cone::half_line();
    let mismatches = (0..=16u64)
        .filter(|&m| count_paths(&srw, &half, &[1], &[1], 2 * m as usize).unwrap() != catalan(m))
        .count();
    c.check(mismatches == 0, format!("Catalan numbers m <= 16: {mismatches} mismatches"));
    c.check(metric(e, "reference_mismatches") == 0.0, "config reference table matches".into());
    c.close("growth", metric(e, "growth"), 2.0, 1e-3);
    c.close("exponent", metric(e, "poly_exponent"), 1.5, 0.05);
    // C_m ~ 4^m m^{-3/2} / sqrt(pi), so at n = 2m the constant is 2 sqrt(2/pi).
    c.rel("C(1,1)", metric(e, "c_estimate"), 2.0 * (2.0 / PI).sqrt(), 0.05);
    c.rel("C(1,1) literal", metric(e, "c_estimate"), 1.596, 0.05);
    let s = t.elapsed().as_secs_f64();
    c.check(s < 30.0, format!("runtime {s:.2}s (< 30s)"));
}

fn c12(c: &mut Checks) {
    let r = run("criterion_12_tilt.json");
    let e = exp(&r, "drift-ppm");
    // Minimize 2e^h + e^{-h}: h0 = -ln2/2 and R = 2 sqrt(2) / 3 after normalizing by 3 steps.
    c.close("h0", metric(e, "h0[0]"), -LN_2 / 2.0, 1e-9);
    c.close("R", metric(e, "r_h0"), 2.0 * SQRT_2 / 3.0, 1e-9);
    c.at_most("tilt identity rel error (n <= 10)", metric(e, "identity_max_rel_error"), 1e-10);
}

fn c13(c: &mut Checks) {
    let r = run("criterion_13_fuk_nagaev.json");
    for label in ["srw", "lazy-nsew"] {
        let e = exp(&r, label);
        let cells = e.metrics.iter().filter(|m| m.name.starts_with("empirical@")).count();
        c.check(cells == 16, format!("{label}: {cells} grid cells"));
        c.at_most(&format!("{label} max excess over bound + 4 sigma"), metric(e, "max_excess"), 0.0);
        c.check(metric(e, "violations") == 0.0, format!("{label}: no violations"));
    }
}

fn c14(c: &mut Checks) {
    let r = run("criterion_14_weyl_chamber.json");
    c.at_most("max |corrector|", metric(exp(&r, "corrector"), "max_abs_corrector"), 1e-14);
    c.close("MC tail slope", metric(exp(&r, "mc-tail"), "slope"), -1.5, 0.05);
    c.above("bridge midpoint p", metric(exp(&r, "bridge"), "p_value"), 0.01);
}

fn c15(c: &mut Checks) {
    let r = run("criterion_15_determinism.json");
    for label in ["tail-srw", "conditioned-clt"] {
        c.check(metric(exp(&r, label), "identical") == 1.0, format!("{label} payload identical at workers 1 and 8"));
    }
    // Direct byte comparison of the fast configuration as a second route.
    let mut one = load("criterion_04_tail_srw.json");
    let mut eight = one.clone();
    one.workers = 1;
    eight.workers = 8;
    let a = experiment::run(&one).unwrap().payload();
    let b = experiment::run(&eight).unwrap().payload();
    c.check(a == b, "direct payload comparison (criterion 4)".into());
}

fn main() {
    let criteria: [Criterion; 15] = [
        (1, "Brownian closed forms", c01),
        (2, "quadrant factorization", c02),
        (3, "kappa ladder", c03),
        (4, "tail exponent, simple walk", c04),
        (5, "tail constant, quadrant", c05),
        (6, "V cross-method consistency", c06),
        (7, "harmonicity residual", c07),
        (8, "conditioned CLT", c08),
        (9, "sampler exactness", c09),
        (10, "fixed-endpoint local limit", c10),
        (11, "Catalan ground truth", c11),
        (12, "Cramer tilt", c12),
        (13, "Fuk-Nagaev validity", c13),
        (14, "Weyl chamber A3", c14),
        (15, "determinism", c15),
    ];
    // Sequential on purpose: runtime budgets are per criterion.
    let mut failed = 0;
    for &(id, name, f) in &criteria {
        let start = Instant::now();
        let mut checks = Checks::default();
        if let Err(p) = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f(&mut checks))) {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            checks.failures.push(msg);
        }
        let o = Outcome { id, name, failures: checks.failures, notes: checks.notes, seconds: start.elapsed().as_secs_f64() };
        let status = if o.failures.is_empty() { "PASS" } else { "FAIL" };
        let detail = if o.failures.is_empty() { o.notes.join("; ") } else { o.failures.join("; ") };
        println!("criterion {:>2} {status} [{:.1}s] {}: {detail}", o.id, o.seconds, o.name);
        failed += usize::from(!o.failures.is_empty());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
