//! `spnf`: command-line driver for the `spnf` library.
//!
//! Every subcommand resolves and validates its configuration (file, then flag
//! overrides) before doing any work, then writes its artifacts together with a
//! `run-<subcommand>.json` manifest under `--out`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use spnf::bounds::run_bound_suite;
use spnf::dynamics::{run_experiment, Scheme, SimConfig};
use spnf::gevrey::{FourierState, GevreyParams};
use spnf::modespace::{check_mu3_bound, verify_appendix_inequalities, AppendixGrid, LemmaReport};
use spnf::rational_nf::rational_normal_form;
use spnf::resonance_sampler::{
    certify_mod_freq, measure_delta_bound, measure_fraction, proba_experiment, random_phased_data, BallSampler,
    MeasureConfig, ProbaConfig,
};
use spnf::resonant_nf::{resonant_normal_form, NfOptions, NfStatus};

/// Keys accepted in the configuration file.
const KEYS: &[&str] = &[
    "sigma",
    "theta",
    "eps",
    "M",
    "N",
    "L",
    "r",
    "gamma",
    "delta",
    "kappa",
    "dt",
    "T",
    "n_samples",
    "seed",
    "budget_terms",
    "cap",
    "a_max",
    "grid",
    "output_every",
];

#[derive(Parser)]
#[command(
    name = "spnf",
    version,
    about = "Normal forms and simulation for a Schrödinger–Poisson model"
)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(flatten)]
    keys: KeyFlags,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flag forms of the configuration keys; they override the file.
#[derive(Args, Default)]
struct KeyFlags {
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long = "M", global = true)]
    m: Option<u64>,
    #[arg(long = "N", global = true)]
    n: Option<u64>,
    #[arg(long = "L", global = true)]
    l: Option<u64>,
    #[arg(long, global = true)]
    r: Option<usize>,
    /// A number, or `auto`.
    #[arg(long, global = true)]
    gamma: Option<String>,
    /// A number, or `auto`.
    #[arg(long, global = true)]
    delta: Option<String>,
    #[arg(long, global = true)]
    kappa: Option<f64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long = "T", global = true)]
    t: Option<f64>,
    #[arg(long = "n-samples", global = true)]
    n_samples: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "budget-terms", global = true)]
    budget_terms: Option<usize>,
    #[arg(long, global = true)]
    cap: Option<usize>,
    #[arg(long = "a-max", global = true)]
    a_max: Option<u64>,
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long = "output-every", global = true)]
    output_every: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the resonant and rational normal forms for (M, r, gamma).
    Nf {
        /// Also run the randomized bound suite and the exactness checks.
        #[arg(long)]
        check: bool,
        /// Trials per randomized bound check.
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Integrate the model from random phased data of norm eps.
    Simulate {
        #[arg(long, value_enum, default_value_t = SchemeArg::Yoshida4)]
        scheme: SchemeArg,
        /// Initial state CSV (`a,re,im`) instead of random data.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Monte-Carlo estimates of the non-resonant set.
    Sample {
        #[arg(long, value_enum)]
        mode: SampleMode,
        #[arg(long, value_enum, default_value_t = SamplerArg::Dirichlet)]
        sampler: SamplerArg,
    },
    /// Finite-range certification reports.
    Verify(VerifyArgs),
    /// Write a matplotlib script plotting trajectory CSVs.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Args, Clone, Copy)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Lemma::All)]
    lemma: Lemma,
    #[arg(long, default_value_t = 3)]
    mmax: usize,
    #[arg(long = "Mmax", default_value_t = 15)]
    big_m_max: u64,
    #[arg(long, default_value_t = 15)]
    ellmax: u64,
    #[arg(long, default_value_t = 10)]
    mu1max: u64,
    /// Trials per randomized bound check.
    #[arg(long, default_value_t = 500)]
    trials: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Strang,
    Yoshida4,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleMode {
    Measure,
    Proba,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Dirichlet,
    Rejection,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Lemma {
    Mu3,
    Scalar,
    Expdecay,
    ModFreq,
    Bounds,
    All,
}

/// Bad configuration or exhausted budget (exit code 2).
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Resolved key-value configuration.
struct Settings(BTreeMap<String, String>);

impl Settings {
    fn load(path: Option<&Path>, flags: &KeyFlags) -> anyhow::Result<Self> {
        let mut map = BTreeMap::new();
        if let Some(p) = path {
            let text = fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            for (no, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| config_err(format!("{}:{}: expected key = value", p.display(), no + 1)))?;
                let (k, v) = (k.trim(), v.trim());
                if !KEYS.contains(&k) {
                    return Err(config_err(format!(
                        "{}:{}: unknown key {k:?}; known keys: {}",
                        p.display(),
                        no + 1,
                        KEYS.join(", ")
                    )));
                }
                map.insert(k.to_string(), v.to_string());
            }
        }
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        let s = |v: Option<f64>| v.map(|x| x.to_string());
        put("sigma", s(flags.sigma));
        put("theta", s(flags.theta));
        put("eps", s(flags.eps));
        put("M", flags.m.map(|x| x.to_string()));
        put("N", flags.n.map(|x| x.to_string()));
        put("L", flags.l.map(|x| x.to_string()));
        put("r", flags.r.map(|x| x.to_string()));
        put("gamma", flags.gamma.clone());
        put("delta", flags.delta.clone());
        put("kappa", s(flags.kappa));
        put("dt", s(flags.dt));
        put("T", s(flags.t));
        put("n_samples", flags.n_samples.map(|x| x.to_string()));
        put("seed", flags.seed.map(|x| x.to_string()));
        put("budget_terms", flags.budget_terms.map(|x| x.to_string()));
        put("cap", flags.cap.map(|x| x.to_string()));
        put("a_max", flags.a_max.map(|x| x.to_string()));
        put("grid", flags.grid.map(|x| x.to_string()));
        put("output_every", flags.output_every.map(|x| x.to_string()));
        Ok(Self(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> anyhow::Result<T> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| config_err(format!("{key} = {v:?} is not a valid value"))),
        }
    }

    /// `None` for `auto`.
    fn get_auto(&self, key: &str, default: Option<f64>) -> anyhow::Result<Option<f64>> {
        match self.0.get(key).map(String::as_str) {
            None => Ok(default),
            Some("auto") => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| config_err(format!("{key} = {v:?} is neither a number nor auto"))),
        }
    }

    fn params(&self) -> anyhow::Result<GevreyParams> {
        let (sigma, theta) = (self.get("sigma", 1.0)?, self.get("theta", 0.5)?);
        GevreyParams::new(sigma, theta).map_err(|e| config_err(e.to_string()))
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> anyhow::Result<()> {
    if ok {
        Ok(())
    } else {
        Err(config_err(msg()))
    }
}

/// Exit code for an error: 1 when the run itself found a violation, 2 otherwise.
fn exit_code(e: &anyhow::Error) -> u8 {
    use spnf::Error as E;
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<E>() {
        Some(
            E::ResonanceCrossing { .. } | E::StepCollapse { .. } | E::Instability { .. } | E::VanishingDenominator(_),
        ) => 1,
        Some(E::NotResonant(_)) => 1,
        _ => 2,
    }
}

fn sha256(path: &Path) -> anyhow::Result<String> {
    let mut h = Sha256::new();
    std::io::copy(&mut BufReader::new(File::open(path)?), &mut h)?;
    Ok(format!("{:x}", h.finalize()))
}

/// Artifacts written by one run, relative to the output directory.
struct Run {
    out: PathBuf,
    files: Vec<String>,
}

impl Run {
    fn new(out: &Path, sub: &str) -> anyhow::Result<Self> {
        fs::create_dir_all(out.join(sub)).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            out: out.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn json(&mut self, rel: &str, v: &impl serde::Serialize) -> anyhow::Result<()> {
        let mut w = BufWriter::new(File::create(self.path(rel))?);
        serde_json::to_writer_pretty(&mut w, v)?;
        writeln!(w)?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn manifest(&self, sub: &str, config: Value, seed: u64, start: Instant) -> anyhow::Result<()> {
        let outputs = self
            .files
            .iter()
            .map(|f| Ok(json!({ "path": f, "sha256": sha256(&self.path(f))? })))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let man = json!({
            "subcommand": sub,
            "config": config,
            "seed": seed,
            "version": env!("CARGO_PKG_VERSION"),
            "outputs": outputs,
            "wall_time_s": start.elapsed().as_secs_f64(),
        });
        let mut w = BufWriter::new(File::create(self.out.join(format!("run-{sub}.json")))?);
        serde_json::to_writer_pretty(&mut w, &man)?;
        writeln!(w)?;
        Ok(())
    }
}

fn summarize(reports: &[LemmaReport]) -> bool {
    for r in reports {
        let status = if r.passed() { "ok" } else { "VIOLATED" };
        eprintln!(
            "{:<16} {:>9} checks  min margin {:>10.3e}  {status}",
            r.lemma, r.checked, r.min_margin
        );
        for v in r.violations.iter().take(5) {
            eprintln!("    {v}");
        }
    }
    reports.iter().all(LemmaReport::passed)
}

fn cmd_nf(cfg: &Settings, out: &Path, check: bool, trials: usize) -> anyhow::Result<bool> {
    let start = Instant::now();
    let m: u64 = cfg.get("M", 3)?;
    let r: usize = cfg.get("r", 3)?;
    let gamma = cfg.get_auto("gamma", Some(0.1))?.unwrap_or(0.1);
    let budget_terms: usize = cfg.get("budget_terms", NfOptions::default().budget_terms)?;
    // Exact remainder terms dominate the cost beyond r = 3.
    let cap: usize = cfg.get("cap", if r <= 3 { NfOptions::default().cap } else { 0 })?;
    let seed: u64 = cfg.get("seed", 0)?;
    ensure(m >= 1, || format!("M must be >= 1, got {m}"))?;
    ensure(r >= 2, || format!("r must be >= 2, got {r}"))?;
    ensure(gamma > 0.0 && gamma < 1.0, || {
        format!("gamma must lie in (0,1), got {gamma}")
    })?;
    ensure(budget_terms >= 1, || "budget_terms must be >= 1".into())?;
    ensure(trials >= 1, || "trials must be >= 1".into())?;
    let config = json!({ "M": m, "r": r, "gamma": gamma, "budget_terms": budget_terms, "cap": cap, "seed": seed, "check": check, "trials": trials });

    let opts = NfOptions { cap, budget_terms };
    let budget_msg = |kind: &str, s: &NfStatus| match s {
        NfStatus::Complete => None,
        NfStatus::BudgetExceeded { step, terms, budget } => Some(format!(
            "{kind} normal form stopped at step {step}: a term needs {terms} monomials, budget_terms = {budget}; \
             lower M or r, or raise budget_terms"
        )),
    };
    let mut run = Run::new(out, "nf")?;
    let res = resonant_normal_form(m, r, opts)?;
    if let Some(msg) = budget_msg("resonant", &res.status) {
        return Err(config_err(msg));
    }
    for f in res.save(&run.path("nf/resonant"))? {
        run.files.push(format!("nf/resonant/{f}"));
    }
    let rat = if r >= 3 {
        let rat = rational_normal_form(&res, r, gamma, opts)?;
        if let Some(msg) = budget_msg("rational", &rat.status) {
            return Err(config_err(msg));
        }
        for f in rat.save(&run.path("nf/rational"))? {
            run.files.push(format!("nf/rational/{f}"));
        }
        Some(rat)
    } else {
        None
    };
    eprintln!(
        "resonant normal form: M = {m}, r = {r}, minimal C = {:.3e}",
        res.minimal_c()
    );

    let mut passed = true;
    if check {
        let mut reports = run_bound_suite(trials, seed)?;
        let mut hom = LemmaReport::new("homological", format!("resonant steps, M = {m}, r = {r}"));
        for (step, &ok) in res.homological_exact.iter().enumerate() {
            hom.record_exact(ok, if ok { 0.0 } else { -1.0 }, || {
                format!("step {} not exact", step + 1)
            });
        }
        reports.push(hom);
        if let Some(rat) = &rat {
            let mut st = LemmaReport::new("rational-stats", format!("rational steps, M = {m}, r = {r}"));
            let ok = rat.stats_within_budget;
            st.record_exact(ok, if ok { 0.0 } else { -1.0 }, || format!("stats {:?}", rat.stats));
            reports.push(st);
        }
        passed = summarize(&reports);
        run.json("nf/check.json", &reports)?;
    }
    run.manifest("nf", config, seed, start)?;
    Ok(passed)
}

fn cmd_simulate(cfg: &Settings, out: &Path, scheme: SchemeArg, init: Option<&Path>) -> anyhow::Result<bool> {
    let start = Instant::now();
    let params = cfg.params()?;
    let eps: f64 = cfg.get("eps", 0.1)?;
    let m: u64 = cfg.get("M", 8)?;
    let dt: f64 = cfg.get("dt", 1e-3)?;
    let t: f64 = cfg.get("T", 100.0)?;
    let seed: u64 = cfg.get("seed", 0)?;
    let every: usize = cfg.get("output_every", 100)?;
    ensure(eps > 0.0 && eps.is_finite(), || format!("eps must be > 0, got {eps}"))?;
    ensure((1..=4096).contains(&m), || format!("M must lie in [1, 4096], got {m}"))?;
    ensure(every >= 1, || "output_every must be >= 1".into())?;
    let mut sim = SimConfig::new(m, dt, t, params).map_err(|e| config_err(e.to_string()))?;
    ensure(t / dt <= 1e9, || format!("T/dt = {:.3e} steps exceeds 1e9", t / dt))?;
    sim.output_every = every;
    sim.scheme = match scheme {
        SchemeArg::Strang => Scheme::Strang,
        SchemeArg::Yoshida4 => Scheme::Yoshida4,
    };

    let z0 = match init {
        Some(p) => {
            let f = File::open(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            FourierState::read_csv(BufReader::new(f), params)?.resize(m)
        }
        None => random_phased_data(params, m, seed).scaled(eps),
    };
    let config = json!({
        "sigma": params.sigma, "theta": params.theta, "eps": eps, "M": m, "dt": dt, "T": t,
        "seed": seed, "output_every": every, "scheme": sim.scheme,
        "init": init.map(|p| p.display().to_string()),
    });

    let mut run = Run::new(out, "simulate")?;
    z0.write_csv(BufWriter::new(File::create(run.path("simulate/initial.csv"))?))?;
    run.files.push("simulate/initial.csv".into());
    let (traj, verdicts) = run_experiment(&z0, &sim)?;
    traj.write_csv(BufWriter::new(File::create(run.path("simulate/trajectory.csv"))?))?;
    run.files.push("simulate/trajectory.csv".into());
    run.json("simulate/verdicts.json", &verdicts)?;
    run.manifest("simulate", config, seed, start)?;
    eprintln!(
        "sup norm {:.4e} (<= {:.4e}: {}), max action distance {:.4e} (<= {:.4e}: {})",
        verdicts.sup_norm,
        2.0 * verdicts.eps,
        verdicts.norm_ok,
        verdicts.max_action_distance,
        verdicts.eps.powf(1.5),
        verdicts.actions_ok
    );
    Ok(verdicts.norm_ok && verdicts.actions_ok)
}

fn cmd_sample(cfg: &Settings, out: &Path, mode: SampleMode, sampler: SamplerArg) -> anyhow::Result<bool> {
    let start = Instant::now();
    let params = cfg.params()?;
    let seed: u64 = cfg.get("seed", 0)?;
    let mut run = Run::new(out, "sample")?;
    match mode {
        SampleMode::Measure => {
            let m: u64 = cfg.get("M", 6)?;
            let l: u64 = cfg.get("L", m)?;
            let r: usize = cfg.get("r", 6)?;
            let eps: f64 = cfg.get("eps", 1.0)?;
            let kappa: f64 = cfg.get("kappa", 0.1)?;
            let n: usize = cfg.get("n_samples", 10_000)?;
            ensure(m >= 1 && l >= 1 && l <= m, || {
                format!("need 1 <= L <= M, got L = {l}, M = {m}")
            })?;
            ensure(r >= 2, || format!("r must be >= 2, got {r}"))?;
            ensure(eps > 0.0 && eps.is_finite(), || format!("eps must be > 0, got {eps}"))?;
            ensure(kappa > 0.0 && kappa < 1.0, || {
                format!("kappa must lie in (0,1), got {kappa}")
            })?;
            ensure(n >= 1, || "n_samples must be >= 1".into())?;
            let explicit = cfg.get_auto("delta", None)?;
            let delta = explicit.unwrap_or_else(|| measure_delta_bound(kappa, eps, m, r, l, params.sigma));
            ensure(delta > 0.0, || format!("delta must be > 0, got {delta}"))?;
            let mc = MeasureConfig {
                m,
                l,
                r,
                delta,
                eps,
                n,
                seed,
                params,
                sampler: match sampler {
                    SamplerArg::Dirichlet => BallSampler::Dirichlet,
                    SamplerArg::Rejection => BallSampler::Rejection { floor: 1e-4 },
                },
            };
            let rep = measure_fraction(&mc)?;
            // Only the automatic δ carries a guaranteed lower bound.
            let passed = explicit.is_some() || rep.ci_low >= 1.0 - kappa;
            eprintln!(
                "delta {delta:.3e}: fraction {:.4}, 95% CI [{:.4}, {:.4}], n = {}",
                rep.fraction, rep.ci_low, rep.ci_high, rep.n
            );
            run.json(
                "sample/measure.json",
                &json!({ "report": rep, "delta": delta, "delta_auto": explicit.is_none(), "kappa": kappa, "passed": passed }),
            )?;
            run.manifest("sample", serde_json::to_value(mc)?, seed, start)?;
            Ok(passed)
        }
        SampleMode::Proba => {
            let eps0: f64 = cfg.get("eps", 0.3)?;
            let n: usize = cfg.get("n_samples", 2000)?;
            let a_max: u64 = cfg.get("a_max", 16)?;
            let r: usize = cfg.get("r", 1)?;
            let l: u64 = cfg.get("L", 4)?;
            let gamma = cfg.get_auto("gamma", Some(1e-5))?;
            let grid: usize = cfg.get("grid", 20)?;
            ensure(eps0 > 0.0 && eps0 < 1.0, || {
                format!("eps must lie in (0,1), got {eps0}")
            })?;
            ensure(n >= 1 && grid >= 1, || "n_samples and grid must be >= 1".into())?;
            ensure(r >= 1 && l >= 1 && a_max >= 1, || "r, L and a_max must be >= 1".into())?;
            if let Some(g) = gamma {
                ensure(g > 0.0, || format!("gamma must be > 0, got {g}"))?;
            }
            let pc = ProbaConfig {
                eps0,
                n,
                a_max,
                r,
                l,
                gamma,
                grid,
                seed,
                params,
            };
            let rep = proba_experiment(&pc)?;
            let sd = (rep.fraction * (1.0 - rep.fraction) / rep.n as f64).sqrt();
            let bound = pc.target() - 3.0 * sd;
            let passed = rep.fraction >= bound;
            eprintln!(
                "fraction {:.4} (target {:.4}, 3-sigma bound {bound:.4})",
                rep.fraction,
                pc.target()
            );
            run.json(
                "sample/proba.json",
                &json!({ "report": rep, "target": pc.target(), "bound": bound, "passed": passed }),
            )?;
            run.manifest("sample", serde_json::to_value(pc)?, seed, start)?;
            Ok(passed)
        }
    }
}

fn cmd_verify(cfg: &Settings, out: &Path, args: &VerifyArgs) -> anyhow::Result<bool> {
    let start = Instant::now();
    let VerifyArgs {
        lemma,
        mmax,
        big_m_max,
        ellmax,
        mu1max,
        trials,
    } = *args;
    let seed: u64 = cfg.get("seed", 0)?;
    ensure((1..=4).contains(&mmax), || {
        format!("mmax must lie in [1, 4], got {mmax}")
    })?;
    ensure(big_m_max <= 64 && ellmax <= 1024 && mu1max <= 64, || {
        "Mmax, mu1max <= 64 and ellmax <= 1024".into()
    })?;
    ensure(trials >= 1, || "trials must be >= 1".into())?;
    let want = |l: Lemma| lemma == l || lemma == Lemma::All;
    let mut reports = Vec::new();
    if want(Lemma::Mu3) {
        reports.push(check_mu3_bound(mmax, big_m_max, ellmax)?);
    }
    if want(Lemma::Scalar) || lemma == Lemma::Expdecay {
        let all = verify_appendix_inequalities(&AppendixGrid::default())?;
        reports.extend(
            all.into_iter()
                .filter(|r| lemma != Lemma::Expdecay || r.lemma.contains("expdecay")),
        );
    }
    if want(Lemma::ModFreq) {
        reports.push(certify_mod_freq(mmax, mu1max)?);
    }
    if want(Lemma::Bounds) {
        reports.extend(run_bound_suite(trials, seed)?);
    }
    let passed = summarize(&reports);
    let name = lemma
        .to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default();
    let mut run = Run::new(out, "verify")?;
    run.json(&format!("verify/{name}.json"), &reports)?;
    let config = json!({ "lemma": name, "mmax": mmax, "Mmax": big_m_max, "ellmax": ellmax, "mu1max": mu1max, "trials": trials, "seed": seed });
    run.manifest("verify", config, seed, start)?;
    Ok(passed)
}

fn plot_script(inputs: &[PathBuf]) -> String {
    let files: Vec<String> = inputs
        .iter()
        .map(|p| format!("    {:?},", p.display().to_string()))
        .collect();
    format!(
        r#"import csv
import sys

import matplotlib.pyplot as plt

FILES = [
{}
]
COLUMNS = ["norm_sigma", "energy", "mass", "momentum", "action_distance"]


def load(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {{k: [float(r[k]) for r in rows] for k in rows[0]}}


fig, axes = plt.subplots(len(COLUMNS), 1, sharex=True, figsize=(8, 2.2 * len(COLUMNS)))
for path in FILES:
    d = load(path)
    for ax, col in zip(axes, COLUMNS):
        ax.plot(d["t"], d[col], label=path)
        ax.set_ylabel(col)
axes[-1].set_xlabel("t")
axes[0].legend(fontsize="small")
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "trajectories.png", dpi=150)
"#,
        files.join("\n")
    )
}

fn cmd_plot(out: &Path, inputs: &[PathBuf]) -> anyhow::Result<bool> {
    let start = Instant::now();
    for p in inputs {
        let head = fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
        let first = head.lines().next().unwrap_or("");
        ensure(first.starts_with("t,"), || {
            format!("{}: not a trajectory CSV (header {first:?})", p.display())
        })?;
    }
    let mut run = Run::new(out, "plot")?;
    fs::write(run.path("plot/plot.py"), plot_script(inputs))?;
    run.files.push("plot/plot.py".into());
    let names: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
    run.manifest("plot", json!({ "inputs": names }), 0, start)?;
    Ok(true)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.threads {
        ensure(n >= 1, || "threads must be >= 1".into())?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    let cfg = Settings::load(cli.config.as_deref(), &cli.keys)?;
    match cli.cmd {
        Cmd::Nf { check, trials } => cmd_nf(&cfg, &cli.out, check, trials),
        Cmd::Simulate { scheme, init } => cmd_simulate(&cfg, &cli.out, scheme, init.as_deref()),
        Cmd::Sample { mode, sampler } => cmd_sample(&cfg, &cli.out, mode, sampler),
        Cmd::Verify(args) => cmd_verify(&cfg, &cli.out, &args),
        Cmd::Plot { inputs } => {
            if inputs.is_empty() {
                bail!(ConfigError("plot needs at least one CSV".into()));
            }
            cmd_plot(&cli.out, &inputs)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("violation found");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
