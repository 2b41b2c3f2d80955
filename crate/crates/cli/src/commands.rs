//! One function per subcommand. Each reads the resolved scene, runs the
//! library, writes its files through [`OutputDir`] and fills in the report.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use serde_json::json;

use scatter_core::continuum::{schrodinger_residual, solve_continuum_with, ContinuumOptions};
use scatter_core::em::{plane_wave_field, CVec3, PlaneWave, Point};
use scatter_core::ensemble::{place_particles, regime_report, DensityField, Ensemble, REGIME_THRESHOLD};
use scatter_core::many_body::{self, SolveMethod};
use scatter_core::materials::{curlcurl_residual, density_for_target, material_spec};
use scatter_core::radiation::fibonacci_directions;
use scatter_core::reduction::{cube_averages, partition, reduced_solve_with};
use scatter_core::single_body::{
    amplitude_from_q, assemble_bie, asymptotic_q, compute_q, mesh_surface, scattered_field, solve_current,
    ParticleShape,
};
use scatter_core::Error;

use crate::output::{num, table_csv, vector_csv, vector_header, OutputDir, RunReport, Timing};
use crate::scene::{Resolved, Scene};

/// Directions in the far-field amplitude tables.
const AMPLITUDE_DIRECTIONS: usize = 64;

pub struct Context<'a> {
    pub scene: &'a Scene,
    pub resolved: &'a Resolved,
    /// Directory that relative paths in the scene are resolved against.
    pub base: &'a Path,
    pub out: &'a OutputDir,
    pub method: SolveMethod,
    pub override_regime: bool,
}

fn time<T>(report: &mut RunReport, phase: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    report.timings.push(Timing {
        phase: phase.into(),
        seconds: start.elapsed().as_secs_f64(),
    });
    out
}

fn relative(a: &CVec3, b: &CVec3) -> f64 {
    let d = b.norm();
    if d > 0.0 {
        (a - b).norm() / d
    } else {
        a.norm()
    }
}

fn probe_table(ctx: &Context, report: &mut RunReport, field: impl Fn(&Point) -> Result<CVec3>) -> Result<()> {
    let Some(grid) = &ctx.scene.probes else {
        return Ok(());
    };
    let points = grid.points();
    let values = time(report, "probes", || points.iter().map(&field).collect::<Result<Vec<_>>>())?;
    ctx.out.write(report, "field.csv", vector_csv(&["E"], &points, &[&values]).as_bytes())
}

fn amplitude_table(amplitude: impl Fn(&Point) -> Vec<CVec3>, names: &[&str]) -> String {
    let dirs = fibonacci_directions(AMPLITUDE_DIRECTIONS);
    let mut header = vec!["beta_x".to_string(), "beta_y".into(), "beta_z".into()];
    for n in names {
        header.extend(vector_header(n));
    }
    let mut out = header.join(",");
    out.push('\n');
    for beta in &dirs {
        let mut row: Vec<String> = beta.iter().map(|v| num(*v)).collect();
        for a in amplitude(beta) {
            for c in a.iter() {
                row.push(num(c.re));
                row.push(num(c.im));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn single_body(ctx: &Context, report: &mut RunReport) -> Result<()> {
    let wave = &ctx.resolved.wave;
    let shape = &ctx.resolved.shape;
    let k = wave.k();
    report.regime = Some(regime_report(k, shape.size(), f64::INFINITY));
    let mesh = time(report, "mesh", || mesh_surface(shape, ctx.scene.single_body.level))?;
    let system = time(report, "assemble", || assemble_bie(&mesh, wave))?;
    let (current, solve) = time(report, "solve", || solve_current(&system))?;
    let q = compute_q(&current, &mesh);
    let q_asym = asymptotic_q(wave, shape, &mesh.center);
    let err = relative(&q, &q_asym);
    let tangential = current.tangentiality(&mesh.normals);
    let cond = solve.condition.unwrap_or(f64::NAN);
    report.diag("nodes", mesh.len());
    report.diag("ka", k * shape.size());
    report.diag("rel_err_q", err);
    report.diag("tangentiality", tangential);
    report.solver = Some(solve);

    ctx.out.write(
        report,
        "q.csv",
        table_csv(
            &["ka", "abs_q_bie", "abs_q_asym", "rel_err", "cond_estimate"],
            &[vec![k * shape.size(), q.norm(), q_asym.norm(), err, cond]],
        )
        .as_bytes(),
    )?;
    ctx.out.write(report, "currents.csv", vector_csv(&["J"], &mesh.nodes, &[&current.values]).as_bytes())?;
    let amps = amplitude_table(|b| vec![amplitude_from_q(k, b, &q), amplitude_from_q(k, b, &q_asym)], &["A", "A_asym"]);
    ctx.out.write(report, "amplitude.csv", amps.as_bytes())?;
    probe_table(ctx, report, |x| Ok(plane_wave_field(wave, x) + scattered_field(&mesh, &current, k, x)?))
}

fn ensemble(ctx: &Context, report: &mut RunReport) -> Result<Ensemble> {
    let density = ctx.scene.density(ctx.base)?;
    let ens = time(report, "placement", || place_particles(&density, &ctx.resolved.shape))?;
    report.diag("particles", ens.len());
    report.diag("spacing", ens.spacing);
    let regime = ens.require_regime(ctx.resolved.wave.k(), ctx.override_regime);
    if let Ok(r) = &regime {
        if !r.pass {
            report.warn(format!(
                "regime score ka + a/d = {:.4} exceeds {REGIME_THRESHOLD}; continuing because --override-regime was given",
                r.score
            ));
        }
    }
    report.regime = Some(scatter_core::ensemble::validate_regime(&ens, ctx.resolved.wave.k()));
    regime?;
    Ok(ens)
}

fn particle_csv(points: &[Point], curls: &[CVec3], moments: &[CVec3]) -> String {
    vector_csv(&["A", "Q"], points, &[curls, moments])
}

pub fn many_body(ctx: &Context, report: &mut RunReport) -> Result<()> {
    let ens = ensemble(ctx, report)?;
    let opts = ctx.scene.solver.options();
    let sol = time(report, "solve", || many_body::solve_with(&ens, &ctx.resolved.wave, ctx.resolved.c0, ctx.method, &opts))?;
    report.solver = Some(sol.report.clone());
    ctx.out.write(report, "particles.csv", particle_csv(&sol.system.points, &sol.curls, &sol.moments()).as_bytes())?;
    let amps = amplitude_table(|b| vec![sol.far_field_amplitude(b)], &["A"]);
    ctx.out.write(report, "amplitude.csv", amps.as_bytes())?;
    probe_table(ctx, report, |x| Ok(sol.field_at(x)?))
}

pub fn reduce(ctx: &Context, report: &mut RunReport) -> Result<()> {
    let ens = ensemble(ctx, report)?;
    let spec = ctx.scene.reduce;
    let part = partition(&ens, spec.cubes_per_side)?;
    for w in &part.warnings {
        report.warn(w.clone());
    }
    report.diag("cubes", part.len());
    report.diag("mass_mismatch", part.mass_mismatch());
    let opts = ctx.scene.solver.options();
    let (wave, c0) = (&ctx.resolved.wave, ctx.resolved.c0);
    let sol = time(report, "reduced_solve", || reduced_solve_with(&part, wave, c0, ctx.method, &opts))?;
    report.solver = Some(sol.report.clone());

    let mut header = vec!["x".to_string(), "y".into(), "z".into(), "weight".into(), "count".into()];
    header.extend(vector_header("A"));
    let mut csv = header.join(",");
    csv.push('\n');
    for (p, c) in sol.curls.iter().enumerate() {
        let mut row: Vec<String> = part.centers[p].iter().map(|v| num(*v)).collect();
        row.push(num(part.weights[p]));
        row.push(part.counts[p].to_string());
        for z in c.iter() {
            row.push(num(z.re));
            row.push(num(z.im));
        }
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    ctx.out.write(report, "reduced.csv", csv.as_bytes())?;

    if ens.len() <= spec.compare_limit {
        let full = time(report, "full_solve", || many_body::solve_with(&ens, wave, c0, ctx.method, &opts))?;
        let averages = cube_averages(&part, &full);
        let num: f64 = sol.curls.iter().zip(&averages).map(|(r, f)| (r - f).norm_squared()).sum();
        let den: f64 = averages.iter().map(|f| f.norm_squared()).sum();
        let rel = (num / den).sqrt();
        let far: Vec<f64> = fibonacci_directions(AMPLITUDE_DIRECTIONS)
            .iter()
            .map(|b| relative(&sol.far_field_amplitude(b), &full.far_field_amplitude(b)))
            .collect();
        let far_max = far.iter().cloned().fold(0.0, f64::max);
        report.diag("reduced_vs_full_curls", rel);
        report.diag("reduced_vs_full_amplitude", far_max);
        let body = json!({
            "particles": ens.len(),
            "cubes": part.len(),
            "relative_curl_difference": rel,
            "max_relative_amplitude_difference": far_max,
            "full_solver": full.report,
        });
        ctx.out.write(report, "comparison.json", serde_json::to_string_pretty(&body)?.as_bytes())?;
    } else {
        report.warn(format!(
            "full solve skipped: {} particles exceed reduce.compare_limit = {}",
            ens.len(),
            spec.compare_limit
        ));
    }
    probe_table(ctx, report, |x| Ok(sol.field_at(x)?))
}

/// Regime score of the lattice a density implies at its densest point.
fn continuum_regime(ctx: &Context, density: &DensityField, report: &mut RunReport) -> Result<()> {
    let a = ctx.resolved.shape.size();
    let n_max = density.max_value();
    let spacing = if n_max > 0.0 { a / n_max.cbrt() } else { f64::INFINITY };
    let r = regime_report(ctx.resolved.wave.k(), a, spacing);
    report.regime = Some(r);
    if !r.pass {
        if !ctx.override_regime {
            return Err(Error::RegimeViolation {
                score: r.score,
                threshold: r.threshold,
                ka: r.ka,
                a_over_d: r.a_over_d,
            }
            .into());
        }
        report.warn(format!(
            "regime score ka + a/d = {:.4} exceeds {REGIME_THRESHOLD}; continuing because --override-regime was given",
            r.score
        ));
    }
    Ok(())
}

pub fn continuum(ctx: &Context, report: &mut RunReport) -> Result<()> {
    let density = ctx.scene.density(ctx.base)?;
    continuum_regime(ctx, &density, report)?;
    let dims = ctx.scene.continuum_dims(&density.domain())?;
    report.diag("dims", dims);
    let opts = ContinuumOptions {
        self_voxel: ctx.scene.continuum.self_voxel,
        solver: ctx.scene.solver.options(),
    };
    let (wave, c0, k) = (&ctx.resolved.wave, ctx.resolved.c0, ctx.resolved.wave.k());
    let sol = time(report, "solve", || solve_continuum_with(&density, wave, c0, dims, &opts))?;
    report.solver = Some(sol.report.clone());
    let points = sol.electric.centers();
    ctx.out.write(report, "E.csv", vector_csv(&["E"], &points, &[&sol.electric.values]).as_bytes())?;
    ctx.out.write(report, "W.csv", vector_csv(&["W"], &points, &[&sol.curl.values]).as_bytes())?;

    let mut residuals = serde_json::Map::new();
    residuals.insert("spacing".into(), json!(sol.spacing()));
    if dims.iter().all(|n| *n >= 3) {
        let (s, cc) = time(report, "residuals", || {
            (schrodinger_residual(&sol.electric, &density, c0, k), curlcurl_residual(&sol.electric, &density, c0, k))
        });
        residuals.insert("schrodinger".into(), json!(s?));
        residuals.insert("curlcurl".into(), json!(cc?));
    } else {
        report.warn("grid has fewer than 3 voxels on some axis; PDE residuals skipped");
    }
    residuals.insert("condition_estimate".into(), json!(sol.report.condition));
    for (key, v) in &residuals {
        report.diagnostics.insert(key.clone(), v.clone());
    }
    ctx.out.write(report, "residuals.json", serde_json::to_string_pretty(&residuals)?.as_bytes())?;
    probe_table(ctx, report, |x| Ok(sol.field_at(x)?))
}

pub fn design(ctx: &Context, report: &mut RunReport) -> Result<()> {
    let target = ctx.scene.target_grid(ctx.base)?;
    let c0 = ctx.resolved.c0;
    match density_for_target(&target, c0) {
        Ok(density) => {
            let DensityField::Tabulated { grid } = &density else {
                unreachable!("design always yields a tabulated density")
            };
            let spec = material_spec(&density, c0, ctx.scene.design.mu0)?;
            let n_max = density.max_value();
            let body = json!({
                "feasible": true,
                "voxels": target.len(),
                "infeasible_voxels": [],
                "max_density": n_max,
                "min_mu": spec.mu.values.iter().cloned().fold(f64::INFINITY, f64::min),
            });
            report.diag("max_density", n_max);
            ctx.out.write(report, "density.json", grid.to_json().as_bytes())?;
            ctx.out.write(report, "materials.json", serde_json::to_string(&spec)?.as_bytes())?;
            ctx.out.write(report, "feasibility.json", serde_json::to_string_pretty(&body)?.as_bytes())?;
            Ok(())
        }
        Err(Error::InfeasibleTarget { voxels }) => {
            let listed: Vec<_> = voxels
                .iter()
                .map(|(i, v)| json!({"voxel": i, "index": target.unravel(*i), "n2": v}))
                .collect();
            let body = json!({
                "feasible": false,
                "voxels": target.len(),
                "infeasible_voxels": listed,
                "reachable": "0 < n^2 <= 1",
            });
            ctx.out.write(report, "feasibility.json", serde_json::to_string_pretty(&body)?.as_bytes())?;
            Err(Error::InfeasibleTarget { voxels }.into())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn convergence(ctx: &Context, report: &mut RunReport) -> Result<()> {
    let spec = &ctx.scene.convergence;
    let wave: &PlaneWave = &ctx.resolved.wave;
    let k = wave.k();
    if spec.ka.is_empty() || spec.ka.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(crate::scene::SceneError("scene field `convergence.ka`: values must be positive and finite".into()).into());
    }
    // largest ka first, so a converging study reads as decreasing errors
    let mut kas = spec.ka.clone();
    kas.sort_by(|a, b| b.total_cmp(a));
    let mut rows = Vec::new();
    for ka in kas {
        let shape: ParticleShape = ctx.resolved.shape.with_size(ka / k);
        let mesh = mesh_surface(&shape, spec.level)?;
        let (current, _) = time(report, &format!("ka={ka}"), || solve_current(&assemble_bie(&mesh, wave)?))?;
        let q = compute_q(&current, &mesh);
        let q_asym = asymptotic_q(wave, &shape, &mesh.center);
        rows.push(vec![ka, relative(&q, &q_asym)]);
    }
    let errors: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    report.diag("rel_err_q", &errors);
    report.diag("monotone", decreasing);
    if !decreasing {
        report.warn("relative error in Q does not decrease monotonically with ka");
    }
    ctx.out.write(report, "convergence.csv", table_csv(&["ka", "rel_err_q"], &rows).as_bytes())
}
