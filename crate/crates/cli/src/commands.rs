//! Subcommand implementations. Numerics live in the core crate; this module
//! resolves configurations, dispatches and writes files.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use shockstab_core::energy::{dissipation_monitor, EnergyFrame, InterfaceSide};
use shockstab_core::green::{
    apply_linear_propagator, Geometry, GreenKernelSet, Grid, LinearData, QuadratureConfig, SideField,
};
use shockstab_core::linalg::{c, RMat, RVec};
use shockstab_core::lopatinskii::{
    best_certificate_constant, best_certificate_ibvp, best_certificate_shock, certify_gap, certify_gap_constant,
    certify_gap_ibvp, lax_check, GapCertificate,
};
use shockstab_core::simulate::{
    fit_decay_rate, measure_norms, simulate_constant, simulate_ibvp, simulate_shock, Profile, Trajectory,
};
use shockstab_core::spectral::{fourier_symbol_spectrum, SpectralDecomposition};
use shockstab_core::symmetrizer::{separation_report, two_by_two_equivalence};
use shockstab_core::system_model::{
    compatibility_residuals, evaluate_linearization, linearize_constant, ConstantLinearization, SplitField,
};
use shockstab_core::{Error, Result};

use crate::config::{Command, Model, RunConfig, Setting};
use crate::output::{ensure_dir, num, write_csv, write_json};

/// Result of a command: exit code and the summary document.
pub struct Outcome {
    pub code: i32,
    pub summary: Value,
}

/// Exit code for a library error (1 is reserved for a negative verdict).
pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        "Config" => 2,
        "InvalidModel" | "DimensionMismatch" | "Precondition" => 3,
        "NotStrictlyHyperbolic" => 4,
        "Characteristic" => 5,
        "NoDichotomy" | "EssentialSpectrumIntrusion" => 6,
        "InvalidBoundaryMap" | "SingularBoundaryMatrix" | "IllPosedBoundary" => 7,
        "DegenerateJump" | "ShockDisintegration" => 8,
        "ZeroOnContour" | "RefinementBudgetExceeded" => 9,
        "ExpansionFailure" | "QuadratureFailure" => 10,
        "StepRejected" | "AmplitudeEscape" | "BoundaryTraceFailure" | "ShockTraceFailure" => 11,
        "OutOfChart" | "InsufficientSampling" | "FitUnreliable" | "Degenerate" => 12,
        _ => 13,
    }
}

pub fn error_json(e: &Error) -> Value {
    json!({ "error": e.kind(), "message": e.to_string(), "exit_code": exit_code(e) })
}

pub struct Context {
    pub out: PathBuf,
    /// Directory against which relative paths in the config are resolved.
    pub base: PathBuf,
    pub jobs: usize,
}

/// Runs a configuration, writing the manifest first and `error.json` on failure.
pub fn run(cfg: &RunConfig, ctx: &Context) -> std::result::Result<Outcome, Error> {
    ensure_dir(&ctx.out)?;
    write_json(
        &ctx.out.join("manifest.json"),
        &json!({ "program": "shockstab", "version": env!("CARGO_PKG_VERSION"), "config": cfg }),
    )?;
    let res = match cfg.command {
        Command::Analyze => analyze(cfg, ctx),
        Command::Simulate => simulate(cfg, ctx),
        Command::Green => green(cfg, ctx),
        Command::Symmetrizer => symmetrizer(cfg, ctx),
        Command::Report => report(cfg, ctx),
    };
    if let Err(e) = &res {
        write_json(&ctx.out.join("error.json"), &error_json(e))?;
    }
    res
}

fn constant_lin(model: &Model, ubar: &RVec, with_boundary: bool) -> Result<ConstantLinearization> {
    let mut lin = linearize_constant(&model.sys, ubar)?;
    if !with_boundary {
        lin.b = None;
    } else if lin.b.is_none() {
        return Err(Error::InvalidBoundaryMap("the half-line setting needs a boundary map".into()));
    }
    Ok(lin)
}

fn certificate(cfg: &RunConfig, model: &Model, setting: Setting) -> Result<GapCertificate> {
    match setting {
        Setting::Constant => {
            let lin = constant_lin(model, &model.equilibrium()?, false)?;
            match cfg.alpha {
                Some(a) => certify_gap_constant(&lin.a, &lin.g, a),
                None => best_certificate_constant(&lin.a, &lin.g),
            }
        }
        Setting::HalfLine => {
            let lin = constant_lin(model, &model.equilibrium()?, true)?;
            match cfg.alpha {
                Some(a) => certify_gap_ibvp(&lin, a, &cfg.contour),
                None => best_certificate_ibvp(&lin, &cfg.contour),
            }
        }
        Setting::Shock => {
            let shock = model.shock()?;
            shock.validate(&model.sys, 1e-10)?;
            let lin = evaluate_linearization(&model.sys, &shock)?;
            match cfg.alpha {
                Some(a) => certify_gap(&lin, a, &cfg.contour),
                None => best_certificate_shock(&lin, &cfg.contour),
            }
        }
    }
}

fn xi_grid() -> Vec<f64> {
    (0..=400).map(|k| -50.0 + 0.25 * k as f64).collect()
}

fn side_report(a: &RMat, g: &RMat, label: &str, rows: &mut Vec<Vec<f64>>, side: f64) -> Result<Value> {
    let dec = SpectralDecomposition::new(a, g)?;
    let spec = fourier_symbol_spectrum(a, g, &xi_grid())?;
    for cur in &spec.curves {
        let mut row = vec![side, cur.xi];
        row.extend(cur.re.iter());
        rows.push(row);
    }
    Ok(json!({
        "side": label,
        "speeds": dec.d,
        "gamma": dec.gamma,
        "compensator_residual": dec.compensator_residual(),
        "q_identity_residual": dec.q_identity_residual(),
        "fourier_max_re": spec.max_re,
        "fourier_hf_limit": spec.hf_limit,
    }))
}

fn analyze(cfg: &RunConfig, ctx: &Context) -> Result<Outcome> {
    let model = cfg.model(&ctx.base)?;
    let setting = cfg.setting()?;
    let mut rows = Vec::new();
    let mut sides = Vec::new();
    let mut lax = Value::Null;
    match setting {
        Setting::Constant | Setting::HalfLine => {
            let lin = constant_lin(&model, &model.equilibrium()?, setting == Setting::HalfLine)?;
            sides.push(side_report(&lin.a, &lin.g, "whole", &mut rows, 0.0)?);
        }
        Setting::Shock => {
            let shock = model.shock()?;
            shock.validate(&model.sys, 1e-10)?;
            let lin = evaluate_linearization(&model.sys, &shock)?;
            sides.push(side_report(&lin.a_plus, &lin.g_plus, "plus", &mut rows, 1.0)?);
            sides.push(side_report(&lin.a_minus, &lin.g_minus, "minus", &mut rows, -1.0)?);
            lax = serde_json::to_value(lax_check(&lin)?).unwrap_or(Value::Null);
        }
    }
    let cert = certificate(cfg, &model, setting)?;
    let n = model.sys.n();
    let mut header: Vec<String> = vec!["side".into(), "xi".into()];
    header.extend((1..=n).map(|j| format!("re_{j}")));
    let hdr: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    write_csv(&ctx.out.join("fourier.csv"), &hdr, rows)?;
    let summary = json!({
        "command": "analyze",
        "system": model.sys.name,
        "setting": setting,
        "n": n,
        "sides": sides,
        "lax": lax,
        "certificate": cert,
        "granted": cert.granted,
    });
    write_json(&ctx.out.join("analysis.json"), &summary)?;
    Ok(Outcome { code: if cert.granted { 0 } else { 1 }, summary })
}

fn profile_sum(profiles: &[Profile], n: usize) -> Result<impl Fn(f64) -> RVec + Clone> {
    if profiles.iter().any(|p| match p {
        Profile::Bump { direction, .. } | Profile::Gaussian { direction, .. } => direction.len() != n,
    }) {
        return Err(Error::DimensionMismatch(format!("initial profile directions must have {n} entries")));
    }
    let ps = profiles.to_vec();
    Ok(move |x: f64| ps.iter().fold(RVec::zeros(n), |acc, p| acc + p.eval(x)))
}

fn trajectory_files(traj: &Trajectory, out: &Path, n: usize) -> Result<()> {
    let rows = (0..traj.times.len()).map(|k| {
        let nm = traj.norms[k];
        vec![
            traj.times[k],
            nm.l2,
            nm.linf,
            nm.w1inf,
            nm.h2,
            traj.psi.get(k).copied().unwrap_or(0.0),
            traj.psi_rate.get(k).copied().unwrap_or(0.0),
            traj.psi_accel.get(k).copied().unwrap_or(0.0),
            traj.trace[k],
            traj.interface_residual[k],
        ]
    });
    write_csv(
        &out.join("norms.csv"),
        &["t", "l2", "linf", "w1inf", "h2", "psi", "psi_rate", "psi_accel", "trace", "interface_residual"],
        rows,
    )?;
    if let Some(last) = traj.snapshots.last() {
        let mut header: Vec<String> = vec!["side".into(), "x".into()];
        header.extend((1..=n).map(|j| format!("v_{j}")));
        let hdr: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let side_tags: Vec<f64> = match traj.geometry {
            Geometry::Shock => vec![1.0, -1.0],
            _ => vec![0.0],
        };
        let mut rows = Vec::new();
        for (f, tag) in last.fields.iter().zip(side_tags) {
            for k in 0..f.grid.len {
                let mut row = vec![tag, f.grid.x(k)];
                row.extend(f.comps.iter().map(|c| c[k]));
                rows.push(row);
            }
        }
        write_csv(&out.join("final_state.csv"), &hdr, rows)?;
    }
    Ok(())
}

fn simulate(cfg: &RunConfig, ctx: &Context) -> Result<Outcome> {
    let model = cfg.model(&ctx.base)?;
    let setting = cfg.setting()?;
    let sec = cfg.simulation.as_ref().ok_or_else(|| Error::Config("'simulation' section is required".into()))?;
    let g = &sec.grid;
    let n = model.sys.n();
    let mut warnings: Vec<String> = Vec::new();
    let raw_plus = profile_sum(&sec.initial, n)?;
    let raw_minus = profile_sum(sec.initial_minus.as_deref().unwrap_or(&[]), n)?;
    let (traj, frames) = match setting {
        Setting::Constant | Setting::HalfLine => {
            let ubar = model.equilibrium()?;
            let grid = match setting {
                Setting::Constant => Grid::spanning(g.x_min.unwrap_or(-g.length), g.length, g.h)?,
                _ => Grid::spanning(0.0, g.length, g.h)?,
            };
            let scale = match sec.h2_size {
                Some(s) => s / nonzero(measure_norms(&[SideField::from_fn(grid, n, &raw_plus)]).h2)?,
                None => 1.0,
            };
            let v0 = move |x: f64| raw_plus(x) * scale;
            if setting == Setting::Constant {
                let frame = EnergyFrame::of_system(&model.sys, &ubar, 0.0, InterfaceSide::None)?;
                (simulate_constant(&model.sys, &ubar, &v0, g)?, vec![frame])
            } else {
                let b = model.sys.boundary.as_ref().ok_or_else(|| Error::InvalidBoundaryMap("no boundary map".into()))?;
                let defect = b.eval(&(&ubar + v0(0.0))) - b.eval(&ubar) - sec.forcing.at(0.0, b.rows());
                if defect.norm() > 1e-8 {
                    warnings.push(format!("boundary compatibility residual {:.3e} at t = 0", defect.norm()));
                }
                let frame = EnergyFrame::of_system(&model.sys, &ubar, 0.0, InterfaceSide::Left)?;
                (simulate_ibvp(&model.sys, &ubar, &sec.forcing, &v0, g)?, vec![frame])
            }
        }
        Setting::Shock => {
            let shock = model.shock()?;
            let plus = Grid::spanning(0.0, g.length, g.h)?;
            let minus = Grid::spanning(-g.length, 0.0, g.h)?;
            let scale = match sec.h2_size {
                Some(s) => {
                    let f = [SideField::from_fn(plus, n, &raw_plus), SideField::from_fn(minus, n, &raw_minus)];
                    s / nonzero(measure_norms(&f).h2)?
                }
                None => 1.0,
            };
            let v0 = move |x: f64, side: i32| if side > 0 { raw_plus(x) * scale } else { raw_minus(x) * scale };
            let split = SplitField::from_fn(g.h, 8, &v0);
            let comp = compatibility_residuals(&model.sys, &shock, &split)?;
            if comp.r1.norm() > 1e-8 || comp.r2.norm() > 1e-8 {
                warnings.push(format!(
                    "initial data not compatible with the jump relations: |r1| = {:.3e}, |r2| = {:.3e}",
                    comp.r1.norm(),
                    comp.r2.norm()
                ));
            }
            let frames = vec![
                EnergyFrame::of_system(&model.sys, &shock.up(), shock.sigma, InterfaceSide::Left)?,
                EnergyFrame::of_system(&model.sys, &shock.um(), shock.sigma, InterfaceSide::Right)?,
            ];
            (simulate_shock(&model.sys, &shock, &v0, shock.psi0, g)?, frames)
        }
    };
    trajectory_files(&traj, &ctx.out, n)?;
    let window = sec.fit_window.unwrap_or([0.25 * g.t_final, g.t_final]);
    let h2: Vec<f64> = traj.norms.iter().map(|m| m.h2).collect();
    let (alpha_fit, r2) = match fit_decay_rate(&traj.times, &h2, (window[0], window[1])) {
        Ok(f) => (Some(f.alpha), Some(f.r2)),
        Err(e) => {
            warnings.push(format!("decay fit: {e}"));
            (None, None)
        }
    };
    let energy = match &sec.energy {
        Some(ecfg) => {
            let rep = dissipation_monitor(&traj, &frames, ecfg)?;
            let rows = (0..rep.times.len()).map(|k| vec![rep.times[k], rep.energy[k], rep.e1[k], rep.e2[k], rep.remainder[k], rep.residual[k]]);
            write_csv(&ctx.out.join("energy.csv"), &["t", "energy", "e1", "e2", "remainder", "residual"], rows)?;
            json!({
                "alpha_prime": rep.alpha_prime,
                "vartheta": rep.vartheta,
                "theta_prime": rep.theta_prime,
                "c_fit": num(rep.c_fit),
                "max_violation": num(rep.max_violation),
                "pass": rep.pass,
            })
        }
        None => Value::Null,
    };
    let summary = json!({
        "command": "simulate",
        "system": model.sys.name,
        "setting": setting,
        "alpha_fit": alpha_fit,
        "r2": r2,
        "fit_window": window,
        "psi_inf": traj.psi_inf,
        "max_W1inf": traj.max_w1inf,
        "dt": traj.dt,
        "steps": traj.times.len().saturating_sub(1),
        "rejected_steps": traj.rejected_steps,
        "max_interface_residual": traj.interface_residual.iter().cloned().fold(0.0, f64::max),
        "energy": energy,
        "warnings": warnings,
    });
    write_json(&ctx.out.join("summary.json"), &summary)?;
    let code = match summary["energy"]["pass"].as_bool() {
        Some(false) => 1,
        _ => 0,
    };
    Ok(Outcome { code, summary })
}

fn nonzero(x: f64) -> Result<f64> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(Error::Config("initial profile vanishes on the grid".into()))
    }
}

fn green(cfg: &RunConfig, ctx: &Context) -> Result<Outcome> {
    let model = cfg.model(&ctx.base)?;
    let setting = cfg.setting()?;
    let sec = cfg.green.as_ref().ok_or_else(|| Error::Config("'green' section is required".into()))?;
    let n = model.sys.n();
    let cert = certificate(cfg, &model, setting)?;
    let kernels = match setting {
        Setting::Constant | Setting::HalfLine => {
            GreenKernelSet::constant(&constant_lin(&model, &model.equilibrium()?, setting == Setting::HalfLine)?)?
        }
        Setting::Shock => GreenKernelSet::shock(&evaluate_linearization(&model.sys, &model.shock()?)?)?,
    };
    let [a, b] = sec.x_range;
    let grids = match setting {
        Setting::Constant => vec![Grid::spanning(a, b, sec.h)?],
        Setting::HalfLine => vec![Grid::spanning(0.0, b, sec.h)?],
        Setting::Shock => vec![Grid::spanning(0.0, b, sec.h)?, Grid::spanning(-b, 0.0, sec.h)?],
    };
    let v0 = profile_sum(&sec.initial, n)?;
    let data = LinearData { fields: grids.iter().map(|g| SideField::from_fn(*g, n, &v0)).collect(), forcing: sec.forcing.clone() };
    let min_speed = kernels
        .sides
        .iter()
        .flat_map(|s| s.dec.d.iter())
        .map(|d| d.abs())
        .fold(f64::INFINITY, f64::min)
        .max(1e-3);
    let width = grids.iter().map(|g| g.end() - g.x0).fold(0.0, f64::max);
    let t_max = sec.times.iter().cloned().fold(0.0, f64::max);
    let qcfg = QuadratureConfig::for_run(cert.alpha, t_max, width / min_speed, sec.omega_max);
    let states = apply_linear_propagator(&kernels, &data, &sec.times, &qcfg)?;
    let rows = states.iter().map(|s| {
        vec![
            s.t,
            s.singular_l2,
            s.remainder_l1,
            s.remainder_l2,
            shockstab_core::green::fields_l2(&s.fields),
            s.error_estimate,
            s.phase_rate.unwrap_or(0.0),
        ]
    });
    write_csv(
        &ctx.out.join("remainder.csv"),
        &["t", "singular_l2", "remainder_l1", "remainder_l2", "total_l2", "error_estimate", "phase_rate"],
        rows,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut residual_rows = Vec::new();
    let mut worst = 0.0_f64;
    for _ in 0..sec.residual_samples {
        let lam = c(rng.random_range(-0.9 * cert.alpha..2.0), rng.random_range(-10.0..10.0));
        let r = kernels.resolvent_residual(lam, 12.0, 0.01)?;
        worst = worst.max(r.field_defect).max(r.boundary_residual).max(r.phase_defect);
        residual_rows.push(vec![r.re, r.im, r.field_defect, r.boundary_residual, r.phase_defect]);
    }
    write_csv(&ctx.out.join("residuals.csv"), &["re", "im", "field_defect", "boundary_residual", "phase_defect"], residual_rows)?;
    let times: Vec<f64> = states.iter().map(|s| s.t).collect();
    let rem: Vec<f64> = states.iter().map(|s| s.remainder_l1).collect();
    let fit = fit_decay_rate(&times, &rem, (times.first().copied().unwrap_or(0.0), t_max)).ok();
    let summary = json!({
        "command": "green",
        "system": model.sys.name,
        "setting": setting,
        "alpha": cert.alpha,
        "quadrature": qcfg,
        "remainder_fit": fit,
        "max_remainder_l1": rem.iter().cloned().fold(0.0, f64::max),
        "max_error_estimate": states.iter().map(|s| s.error_estimate).fold(0.0, f64::max),
        "max_resolvent_residual": worst,
    });
    write_json(&ctx.out.join("summary.json"), &summary)?;
    Ok(Outcome { code: 0, summary })
}

fn symmetrizer(cfg: &RunConfig, ctx: &Context) -> Result<Outcome> {
    let mut rep = separation_report(cfg.seed)?;
    if let Some(sec) = &cfg.symmetrizer {
        if sec.samples != rep.two_by_two.samples {
            let two = two_by_two_equivalence(cfg.seed, sec.samples)?;
            let agree = two.agree_fourier == two.samples && two.agree_symmetrizer == two.samples;
            rep.pass = rep.pass && agree;
            rep.two_by_two = two;
        }
    }
    let summary = serde_json::to_value(&rep).map_err(|e| Error::Config(format!("serialize: {e}")))?;
    write_json(&ctx.out.join("symmetrizer.json"), &summary)?;
    Ok(Outcome { code: if rep.pass { 0 } else { 1 }, summary })
}

/// Runs the sub-configurations on a bounded pool of worker threads.
fn report(cfg: &RunConfig, ctx: &Context) -> Result<Outcome> {
    if cfg.runs.is_empty() {
        return Err(Error::Config("'report' needs a non-empty 'runs' list".into()));
    }
    let mut names = std::collections::BTreeSet::new();
    for r in &cfg.runs {
        if r.config.command == Command::Report {
            return Err(Error::Config(format!("run '{}': nested reports are not supported", r.name)));
        }
        if r.name.is_empty() || r.name.contains(['/', '\\']) || r.name.starts_with('.') || !names.insert(r.name.clone()) {
            return Err(Error::Config(format!("invalid or duplicate run name '{}'", r.name)));
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Value>>> = Mutex::new(vec![None; cfg.runs.len()]);
    let workers = ctx.jobs.clamp(1, cfg.runs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(r) = cfg.runs.get(i) else { break };
                let sub = Context { out: ctx.out.join(&r.name), base: ctx.base.clone(), jobs: 1 };
                let mut sub_cfg = r.config.clone();
                if sub_cfg.seed == 0 {
                    sub_cfg.seed = cfg.seed;
                }
                let entry = match run(&sub_cfg, &sub) {
                    Ok(o) => json!({ "name": r.name, "command": sub_cfg.command, "exit_code": o.code, "summary": o.summary }),
                    Err(e) => json!({ "name": r.name, "command": sub_cfg.command, "exit_code": exit_code(&e), "error": error_json(&e) }),
                };
                log::info!("run '{}' finished", r.name);
                results.lock().expect("report results")[i] = Some(entry);
            });
        }
    });
    let entries: Vec<Value> = results.into_inner().expect("report results").into_iter().map(|e| e.unwrap_or(Value::Null)).collect();
    let failed = entries.iter().filter(|e| e["exit_code"].as_i64() != Some(0)).count();
    let summary = json!({ "command": "report", "runs": entries, "failed": failed });
    write_json(&ctx.out.join("report.json"), &summary)?;
    Ok(Outcome { code: if failed == 0 { 0 } else { 1 }, summary })
}
