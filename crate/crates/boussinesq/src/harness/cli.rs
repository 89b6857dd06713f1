//! Command-line front end.
//!
//! Four subcommands share one flag vocabulary (`--config`, `--seed`,
//! `--out`, `--replicas`) and one exit convention: 0 on success, 2 when a
//! validation check fails (a bound violated, an oracle mismatch, a run
//! that blew up), 1 on operational errors such as an unreadable config,
//! and 64 for command-line misuse.

use crate::harness::config::{ConfigMap, ExperimentConfig};
use crate::harness::ensemble::{
    render_ensemble_csv, render_trajectory_csv, write_atomic, EnsembleRow, ScenarioRunner,
};
use crate::harness::scaling::{
    epsilon_scaling, fit_tail, pathwise_scaling_check, probe_constants, tail_experiment,
};
use crate::oracle1d::validate_convolution;
use crate::Result;
use std::path::PathBuf;

pub const USAGE: &str = "\
usage: boussinesq <subcommand> [flags]

subcommands:
  simulate         one run of the configured scenario; writes trajectory.csv
                   and a one-row ensemble.csv
  mc-scaling       ensemble per intensity in eps_list; writes per-intensity
                   ensemble CSVs and scaling.csv, checks the survival bound
  validate-1d      interval convolution against its closed-form oracle;
                   writes validation.csv
  probe-constants  unit-intensity calibration (tail constant, supremum
                   quantiles, solver stability); writes constants.txt

flags:
  --config <path>    experiment config (key = value lines)
  --seed <u64>       override base_seed
  --out <dir>        override out_dir
  --replicas <n>     override replicas
exit codes: 0 success, 2 validation failure, 1 error, 64 usage error";

/// Built-in defaults for `validate-1d` without a config file: the interval
/// scenario at a truncation heavy enough to be meaningful but quick.
const DEFAULT_1D: &str = "\
scenario = interval
replicas = 400
base_seed = 31415926
out_dir = runs/validate1d
noise.modes = 256
noise.eps = 1.0
z.alpha = 0.3
z.t_list = 0.1, 0.5
z.steps = 512
coupled.t_final = 0.5
coupled.dt = 0.0009765625
";

struct Flags {
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    replicas: Option<usize>,
}

enum FlagError {
    Usage(String),
}

fn parse_flags(args: &[String]) -> std::result::Result<Flags, FlagError> {
    let mut flags = Flags { config: None, seed: None, out: None, replicas: None };
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let mut take = |name: &str| {
            it.next()
                .cloned()
                .ok_or_else(|| FlagError::Usage(format!("flag {name} needs a value")))
        };
        match arg.as_str() {
            "--config" => flags.config = Some(PathBuf::from(take("--config")?)),
            "--seed" => {
                let v = take("--seed")?;
                flags.seed = Some(v.parse().map_err(|_| {
                    FlagError::Usage(format!("--seed expects an unsigned integer, got `{v}`"))
                })?);
            }
            "--out" => flags.out = Some(PathBuf::from(take("--out")?)),
            "--replicas" => {
                let v = take("--replicas")?;
                flags.replicas = Some(v.parse().map_err(|_| {
                    FlagError::Usage(format!("--replicas expects a count, got `{v}`"))
                })?);
            }
            other => return Err(FlagError::Usage(format!("unknown flag `{other}`"))),
        }
    }
    Ok(flags)
}

fn load_experiment(flags: &Flags, default_text: Option<&str>) -> Result<ExperimentConfig> {
    let mut map = match (&flags.config, default_text) {
        (Some(path), _) => ConfigMap::load(path)?,
        (None, Some(text)) => ConfigMap::parse(text)?,
        (None, None) => {
            return Err(crate::Error::Usage(
                "this subcommand needs --config <path>".into(),
            ))
        }
    };
    if let Some(seed) = flags.seed {
        map.set("base_seed", &seed.to_string());
    }
    if let Some(out) = &flags.out {
        map.set("out_dir", &out.to_string_lossy());
    }
    if let Some(replicas) = flags.replicas {
        map.set("replicas", &replicas.to_string());
    }
    ExperimentConfig::from_map(&map)
}

/// Dispatches one invocation; returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    let Some(sub) = args.first() else {
        eprintln!("{USAGE}");
        return 64;
    };
    if sub == "--help" || sub == "-h" || sub == "help" {
        println!("{USAGE}");
        return 0;
    }
    let flags = match parse_flags(&args[1..]) {
        Ok(f) => f,
        Err(FlagError::Usage(msg)) => {
            eprintln!("error: {msg}\n{USAGE}");
            return 64;
        }
    };
    let verdict = match sub.as_str() {
        "simulate" => cmd_simulate(&flags),
        "mc-scaling" => cmd_scaling(&flags),
        "validate-1d" => cmd_validate_1d(&flags),
        "probe-constants" => cmd_probe_constants(&flags),
        other => {
            eprintln!("error: unknown subcommand `{other}`\n{USAGE}");
            return 64;
        }
    };
    match verdict {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(crate::Error::Usage(msg)) => {
            eprintln!("error: {msg}\n{USAGE}");
            64
        }
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}

fn cmd_simulate(flags: &Flags) -> Result<bool> {
    let exp = load_experiment(flags, None)?;
    let runner = ScenarioRunner::build(&exp, exp.eps)?;
    let report = runner.run(exp.base_seed, 0)?;
    let rows = runner.run_trajectories(exp.base_seed, 0)?;
    write_atomic(&exp.out_dir.join("trajectory.csv"), &render_trajectory_csv(&rows))?;
    write_atomic(
        &exp.out_dir.join("ensemble.csv"),
        &render_ensemble_csv(&[EnsembleRow::from_report(&report)]),
    )?;
    println!(
        "scenario {} seed {}: tau = {:.6}, hit = {}, ||u||_E = {:.6e}, ||theta||_C = {:.6e}",
        exp.scenario.name(),
        report.seed,
        report.tau,
        report.hit,
        report.norm_u_e,
        report.norm_theta_c
    );
    for w in &report.warnings {
        println!("warning: {w}");
    }
    if let Some(reason) = &report.failure {
        println!("run failed: {reason}");
        return Ok(false);
    }
    println!("wrote {}", exp.out_dir.join("trajectory.csv").display());
    Ok(true)
}

fn cmd_scaling(flags: &Flags) -> Result<bool> {
    let exp = load_experiment(flags, None)?;
    let (table, _) = epsilon_scaling(&exp, Some(&exp.out_dir), true)?;
    print!("{}", table.render_csv());
    if let Some(slope) = table.slope {
        println!("# failure-rate log-log slope = {slope:.3}");
    }
    if table.uninformative {
        println!("# note: hit counts are all-zero or all-one; the grid brackets no transition");
    }
    for v in &table.violations {
        eprintln!("bound violated: {v}");
    }
    println!("wrote {}", exp.out_dir.join("scaling.csv").display());
    Ok(table.passes())
}

fn cmd_validate_1d(flags: &Flags) -> Result<bool> {
    let exp = load_experiment(flags, Some(DEFAULT_1D))?;
    let mut ok = true;
    let mut csv = String::from("alpha,t,closed_form,mc_estimate,rel_err,verdict\n");
    for (idx, &t) in exp.z_t_list.iter().enumerate() {
        let dt = t / exp.z_steps as f64;
        let report = validate_convolution(
            exp.noise_modes,
            exp.z_alpha,
            exp.eps,
            dt,
            &[exp.z_steps],
            exp.replicas,
            exp.base_seed.wrapping_add(idx as u64),
        )?;
        for row in &report.rows {
            let pass = (row.simulated - row.truncated_oracle).abs()
                <= 0.02 * row.truncated_oracle + 2.0 * row.std_error;
            ok &= pass;
            let rel = (row.simulated - row.truncated_oracle).abs() / row.truncated_oracle;
            csv.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.3e},{}\n",
                exp.z_alpha,
                row.t,
                row.truncated_oracle,
                row.simulated,
                rel,
                if pass { "pass" } else { "FAIL" }
            ));
            println!(
                "alpha = {} t = {}: oracle {:.6e}, simulated {:.6e} ({})",
                exp.z_alpha,
                row.t,
                row.truncated_oracle,
                row.simulated,
                if pass { "pass" } else { "FAIL" }
            );
        }
    }
    // Sub-threshold order: estimates must keep growing as the truncation
    // doubles instead of saturating.
    let divergent_alpha = 0.2;
    let t_probe = 0.25;
    let steps = 128;
    let mut prev: Option<f64> = None;
    let mut grew = true;
    for (k, n) in [64usize, 128, 256].into_iter().enumerate() {
        let report = validate_convolution(
            n,
            divergent_alpha,
            exp.eps,
            t_probe / steps as f64,
            &[steps],
            exp.replicas.min(300),
            exp.base_seed.wrapping_add(1000 + k as u64),
        )?;
        let estimate = report.rows[0].simulated;
        if let Some(p) = prev {
            grew &= estimate > 1.10 * p;
        }
        println!("alpha = {divergent_alpha} truncation {n}: estimate {estimate:.6e}");
        prev = Some(estimate);
    }
    if !grew {
        println!("FAIL: sub-threshold estimates saturated under doubling");
    }
    ok &= grew;
    write_atomic(&exp.out_dir.join("validation.csv"), &csv)?;
    println!("wrote {}", exp.out_dir.join("validation.csv").display());
    Ok(ok)
}

fn cmd_probe_constants(flags: &Flags) -> Result<bool> {
    let exp = load_experiment(flags, None)?;
    let report = probe_constants(&exp, true, true)?;
    let fit = fit_tail(&exp, true)?;
    let check = pathwise_scaling_check(&exp, 1e-2, 100, exp.base_seed ^ 0x3C)?;
    let tail = tail_experiment(&exp, &fit, 1e-2, exp.replicas, true)?;
    let mut text = report.render();
    text.push_str(&format!(
        "# pathwise scaling: max coeff gap {:.3e}, indicator mismatches {}\n",
        check.max_rel_coeff_gap, check.indicator_mismatches
    ));
    text.push_str(&format!(
        "# out-of-sample tail at eps = 1e-2: {} of {} thresholds violated\n",
        tail.violations,
        tail.rows.len()
    ));
    print!("{text}");
    write_atomic(&exp.out_dir.join("constants.txt"), &text)?;
    write_atomic(&exp.out_dir.join("tail.csv"), &tail.render_csv())?;
    println!("wrote {}", exp.out_dir.join("constants.txt").display());
    Ok(check.indicator_mismatches == 0 && tail.violations == 0)
}
