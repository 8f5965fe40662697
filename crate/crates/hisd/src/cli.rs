//! Command-line front end: loads an experiment config, dispatches the run /
//! table / comparison / residual / check modes and writes CSV (and optional
//! SVG) outputs.
//!
//! Exit codes: 0 success, 1 failed check or out-of-band rate under
//! `--strict`, 2 configuration error, 3 numerical failure (divergence,
//! degeneracy, evaluation).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Experiment, ExperimentConfig, Mode};
use crate::error::{HisdError, Result};
use crate::lab::{
    convergence_table, difference_series_between, residual_order_study, scheme_difference_series,
};
use crate::manifold::{orthonormalize_frame, sphere_retract, svd_projection_retract,
    tangent_project, Frame};
use crate::model::{dimer_hv, finite_difference_check, DimerParams, EnergyModel};
use crate::report::{
    format_sci, residual_order_label, svg_difference, svg_trajectory, write_convergence_csv,
    write_difference_csv, write_residual_csv, write_trajectory_csv,
};
use crate::scheme::{run, Scheme};

/// Saddle-point search and convergence experiments for high-index saddle
/// dynamics.
#[derive(Debug, Parser)]
#[command(name = "hisd", version, about)]
pub struct CliArgs {
    /// Path of the JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Exit non-zero when a convergence rate leaves [0.8, 1.3].
    #[arg(long)]
    pub strict: bool,
    /// Also emit SVG line plots next to the CSVs.
    #[arg(long)]
    pub svg: bool,
}

pub fn main_entry(args: CliArgs) -> i32 {
    match dispatch(&args) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn exit_code_for(err: &HisdError) -> i32 {
    match err {
        HisdError::Config(_) | HisdError::Io(_) => 2,
        HisdError::Divergence { .. }
        | HisdError::DegenerateDirection { .. }
        | HisdError::Evaluation(_) => 3,
    }
}

fn dispatch(args: &CliArgs) -> Result<i32> {
    let config = ExperimentConfig::from_path(&args.config)?;
    let mode = config.mode;
    let experiment = config.load()?;
    let out_dir = args
        .output
        .clone()
        .unwrap_or_else(|| experiment.config.output_dir.clone());
    fs::create_dir_all(&out_dir)?;
    match mode {
        Mode::Run => cmd_run(&experiment, &out_dir, args.svg),
        Mode::Converge => cmd_converge(&experiment, &out_dir, args.strict),
        Mode::Compare => cmd_compare(&experiment, &out_dir, args.svg),
        Mode::Residual => cmd_residual(&experiment, &out_dir),
        Mode::Check => cmd_check(&experiment),
    }
}

fn write_file(path: &Path, writer: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writer(&mut file)?;
    file.flush()?;
    Ok(())
}

fn cmd_run(exp: &Experiment, out_dir: &Path, svg: bool) -> Result<i32> {
    let traj = run(exp.model.as_ref(), &exp.init, &exp.scheme_config)?;
    write_file(&out_dir.join("trajectory.csv"), |w| {
        write_trajectory_csv(&traj, w)
    })?;
    if svg {
        fs::write(out_dir.join("trajectory.svg"), svg_trajectory(&traj))?;
    }
    let last = traj.final_state();
    let grad_norm = exp.model.neg_gradient(&last.x).norm();
    let coords: Vec<String> = last.x.iter().map(|&a| format_sci(a)).collect();
    println!("final t = {}", format_sci(last.time));
    println!("final x = [{}]", coords.join(", "));
    println!("final |F(x)| = {}", format_sci(grad_norm));
    Ok(0)
}

fn cmd_converge(exp: &Experiment, out_dir: &Path, strict: bool) -> Result<i32> {
    let report = convergence_table(
        exp.model.as_ref(),
        &exp.init,
        &exp.scheme_config,
        &exp.taus,
        exp.config.ref_tau,
    )?;
    write_file(&out_dir.join("table.csv"), |w| {
        write_convergence_csv(&report, w)
    })?;
    let fmt_rates = |rates: &[f64]| {
        rates
            .iter()
            .map(|r| format!("{r:.3}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("CR(x): {}", fmt_rates(&report.rates_x));
    for i in 0..report.directions() {
        let per_dir: Vec<f64> = report.rates_v.iter().map(|row| row[i]).collect();
        println!("CR(v{}): {}", i + 1, fmt_rates(&per_dir));
    }
    if strict {
        let mut all_rates: Vec<f64> = report.rates_x.clone();
        all_rates.extend(report.rates_v.iter().flatten());
        if let Some(bad) = all_rates.iter().find(|r| !(0.8..=1.3).contains(*r)) {
            eprintln!("strict: convergence rate {bad:.3} outside [0.8, 1.3]");
            return Ok(1);
        }
    }
    Ok(0)
}

fn cmd_compare(exp: &Experiment, out_dir: &Path, svg: bool) -> Result<i32> {
    if exp.scheme_config.scheme.is_constrained() {
        return Err(HisdError::Config(
            "compare mode is defined for the unconstrained scheme pair only".into(),
        ));
    }
    for &tau in &exp.taus {
        let series = if exp.config.gs_vs_gs {
            difference_series_between(
                exp.model.as_ref(),
                &exp.init,
                &exp.scheme_config,
                tau,
                Scheme::UnconstrainedGs,
                Scheme::UnconstrainedGs,
            )?
        } else {
            scheme_difference_series(exp.model.as_ref(), &exp.init, &exp.scheme_config, tau)?
        };
        let name = format!("difference_{tau}.csv");
        write_file(&out_dir.join(&name), |w| write_difference_csv(&series, w))?;
        if svg {
            fs::write(
                out_dir.join(format!("difference_{tau}.svg")),
                svg_difference(&series),
            )?;
        }
        println!(
            "tau = {}: max |x_n - X_n| = {}, max |v_1,n - V_1,n| = {}",
            format_sci(tau),
            format_sci(series.max_dx()),
            format_sci(series.max_dv1())
        );
    }
    Ok(0)
}

fn cmd_residual(exp: &Experiment, out_dir: &Path) -> Result<i32> {
    let study = residual_order_study(
        exp.model.as_ref(),
        &exp.init,
        &exp.scheme_config,
        &exp.taus,
    )?;
    write_file(&out_dir.join("residual.csv"), |w| {
        write_residual_csv(&study, w)
    })?;
    println!("residual order (x): {}", residual_order_label(study.order_x));
    println!("residual order (v): {}", residual_order_label(study.order_v));
    Ok(0)
}

struct CheckOutcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0))
}

fn check_gradients(model: &dyn EnergyModel) -> (CheckOutcome, CheckOutcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5add1e);
    let mut grad_max = 0.0f64;
    let mut hess_max = 0.0f64;
    for _ in 0..100 {
        let x = random_point(&mut rng, model.dim());
        match finite_difference_check(model, &x, 1e-4) {
            Ok(report) => {
                grad_max = grad_max.max(report.gradient_discrepancy);
                hess_max = hess_max.max(report.hessian_discrepancy);
            }
            Err(_) => {
                grad_max = f64::INFINITY;
                hess_max = f64::INFINITY;
            }
        }
    }
    (
        CheckOutcome {
            name: "gradient_consistency",
            passed: grad_max <= 1e-6,
            detail: format!("max discrepancy {} (tol 1e-6)", format_sci(grad_max)),
        },
        CheckOutcome {
            name: "hessian_consistency",
            passed: hess_max <= 1e-6,
            detail: format!("max discrepancy {} (tol 1e-6)", format_sci(hess_max)),
        },
    )
}

fn check_symmetry(model: &dyn EnergyModel) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5add2e);
    let mut max = 0.0f64;
    for _ in 0..50 {
        let x = random_point(&mut rng, model.dim());
        let u = random_point(&mut rng, model.dim());
        let w = random_point(&mut rng, model.dim());
        let asym = u.dot(&model.neg_hessian_apply(&x, &w))
            - w.dot(&model.neg_hessian_apply(&x, &u));
        max = max.max(asym.abs());
    }
    CheckOutcome {
        name: "hessian_symmetry",
        passed: max <= 1e-10,
        detail: format!("max |u.Jw - w.Ju| = {} (tol 1e-10)", format_sci(max)),
    }
}

fn check_dimer_order(model: &dyn EnergyModel, half_length: f64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5add3e);
    let mut err_at = |l: f64| -> f64 {
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let x = random_point(&mut rng, model.dim());
            let v = random_point(&mut rng, model.dim());
            if v.norm() == 0.0 {
                continue;
            }
            let exact = model.neg_hessian_apply(&x, &v);
            match dimer_hv(model, &x, &v, DimerParams { half_length: l }) {
                Ok(approx) => worst = worst.max((approx - exact).norm()),
                Err(_) => worst = f64::INFINITY,
            }
        }
        worst
    };
    let e_full = err_at(half_length);
    let e_half = err_at(half_length / 2.0);
    let (passed, note) = if e_full < 1e-12 && e_half < 1e-12 {
        (true, "exact (quadratic energy)".to_owned())
    } else {
        let ratio = e_full / e_half;
        ((3.2..=4.8).contains(&ratio), format!("ratio {ratio:.3} (expect 4 +- 20%)"))
    };
    CheckOutcome {
        name: "dimer_order",
        passed,
        detail: format!(
            "err_l={} err_half={} {note}",
            format_sci(e_full),
            format_sci(e_half)
        ),
    }
}

fn check_manifold_kernels(dim: usize) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5add4e);
    let dim = dim.max(2);
    let k = dim.min(3);
    let mut worst_defect = 0.0f64;
    let mut worst_idem = 0.0f64;
    for _ in 0..20 {
        let raw: Vec<DVector<f64>> = (0..k).map(|_| random_point(&mut rng, dim)).collect();
        let Ok(frame) = orthonormalize_frame(&raw, 1e-10) else {
            continue;
        };
        worst_defect = worst_defect.max(frame.orthonormality_defect());
        let cols: Vec<DVector<f64>> = frame.columns().collect();
        if let Ok(again) = orthonormalize_frame(&cols, 1e-10) {
            worst_idem = worst_idem.max((frame.as_matrix() - again.as_matrix()).abs().max());
        }
        if let Ok(polar) = svd_projection_retract(&Frame::from_vectors_unchecked(&raw)
            .as_matrix()
            .clone(), 1e-10)
        {
            worst_defect = worst_defect.max(polar.orthonormality_defect());
        }
        let x = match sphere_retract(&random_point(&mut rng, dim)) {
            Ok(x) => x,
            Err(_) => continue,
        };
        let v = random_point(&mut rng, dim);
        let once = tangent_project(&v, &x);
        let twice = tangent_project(&once, &x);
        worst_idem = worst_idem.max((once - twice).norm());
    }
    CheckOutcome {
        name: "manifold_kernels",
        passed: worst_defect <= 1e-12 && worst_idem <= 1e-14,
        detail: format!(
            "max orthonormality defect {}, max idempotence drift {}",
            format_sci(worst_defect),
            format_sci(worst_idem)
        ),
    }
}

fn cmd_check(exp: &Experiment) -> Result<i32> {
    let model = exp.model.as_ref();
    let dimer_l = exp.config.dimer_half_length;
    let (grad, hess) = check_gradients(model);
    let outcomes = vec![
        grad,
        hess,
        check_symmetry(model),
        check_dimer_order(model, dimer_l),
        check_manifold_kernels(model.dim()),
    ];
    let mut all_passed = true;
    for outcome in &outcomes {
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {}: {}", outcome.name, outcome.detail);
        all_passed &= outcome.passed;
    }
    Ok(if all_passed { 0 } else { 1 })
}
