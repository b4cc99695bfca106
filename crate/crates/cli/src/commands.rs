//! Subcommand bodies. Each returns whether its checks passed.

use crate::config::ExperimentConfig;
use anyhow::{anyhow, bail, Context, Result};
use osgood_lab::alpha::AlphaScaledDrift;
use osgood_lab::audit::{assumption_audit, default_alpha, AuditConfig};
use osgood_lab::drift::DriftSpec;
use osgood_lab::grid::GridSpec;
use osgood_lab::io::{self, Raster};
use osgood_lab::noise::{dalang_integral, growth_stat, validate_covariance, NoiseModel, NoisePath};
use osgood_lab::solver::{evolve, monitor_weighted, picard_solve, Scheme, SolutionTrace, SolverConfig};
use osgood_lab::transform::{OsgoodTransform, TransformConfig};
use osgood_lab::uniqueness::{lip_growth_check, select_k, uniqueness_experiment, UniquenessParams};
use osgood_lab::weight::{supersolution_residual, CheckStatus, DynamicWeight, Estimator, FdSteps, WeightField};
use rayon::prelude::*;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

pub struct Ctx {
    pub out: PathBuf,
    pub seed: u64,
    pub cfg: ExperimentConfig,
    pub outputs: Vec<String>,
}

impl Ctx {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let f = File::create(self.out.join(name)).with_context(|| format!("cannot create {name}"))?;
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn raster(&mut self, name: &str, grid: GridSpec, t: f64, data: Vec<f64>) -> Result<()> {
        let r = Raster::new(grid, t, self.seed, data)?;
        let mut w = self.create(name)?;
        io::write_raster(&mut w, &r)?;
        w.flush()?;
        Ok(())
    }

    fn field_csv(&mut self, name: &str, grid: &GridSpec, col: &str, values: &[f64]) -> Result<()> {
        let mut w = self.create(name)?;
        io::write_field_csv(&mut w, grid, col, values)?;
        w.flush()?;
        Ok(())
    }

    fn rows_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = self.create(name)?;
        io::write_rows_csv(&mut w, rows)?;
        w.flush()?;
        Ok(())
    }
}

fn transform(spec: &DriftSpec, u_cap: f64) -> Result<Arc<OsgoodTransform>> {
    Ok(Arc::new(OsgoodTransform::build(spec, TransformConfig::with_u_cap(u_cap))?))
}

fn estimator(name: &str, nodes: usize, paths: usize, seed: u64) -> Result<Estimator> {
    Ok(match name {
        "gh" => Estimator::GaussHermite { nodes },
        "mc" => Estimator::MonteCarlo { paths, seed },
        other => bail!("unknown weight estimator '{other}'"),
    })
}

pub fn audit(ctx: &mut Ctx) -> Result<bool> {
    let spec = ctx.cfg.drift.spec()?;
    let a = &ctx.cfg.audit;
    let ac = AuditConfig { x_max: a.x_max, u_cap: a.u_cap, grid_points: a.grid_points, epsilon: a.epsilon, horizon: a.horizon, seed: ctx.seed };
    let mut report = assumption_audit(&spec, a.alpha.unwrap_or(1.2), &ac);
    if a.alpha.is_none() {
        if let Some(nu) = report.nu_at_2t() {
            let alpha = default_alpha(nu);
            if alpha != report.alpha {
                report = assumption_audit(&spec, alpha, &ac);
            }
        }
    }
    for e in &report.entries {
        println!("{:<28} {} {}", e.check, if e.pass { "PASS" } else { "FAIL" }, e.detail);
    }
    ctx.json("audit.json", &report)?;
    Ok(report.all_pass())
}

fn axis_points(d: usize, radii: &[f64]) -> Vec<Vec<f64>> {
    radii
        .iter()
        .map(|r| {
            let mut x = vec![0.0; d];
            x[0] = *r;
            x
        })
        .collect()
}

pub fn weight(ctx: &mut Ctx) -> Result<bool> {
    let spec = ctx.cfg.drift.spec()?;
    let w = ctx.cfg.weight.clone();
    let d = ctx.cfg.grid.d;
    let drift = AlphaScaledDrift::new(w.alpha, transform(&spec, 1e12)?)?;
    let dw = DynamicWeight::new(drift, d, w.horizon, estimator(&w.estimator, w.nodes, w.mc_paths, ctx.seed)?)?;
    let points = axis_points(d, &w.radii);
    let mut times = vec![0.0];
    times.extend(w.times.iter().copied());
    let field = WeightField::tabulate(&dw, &times, &points)?;
    let mut out = ctx.create("weight.csv")?;
    io::write_weight_csv(&mut out, &field)?;
    out.flush()?;

    let mut checks = Vec::new();
    for &t in &w.times {
        for x in &points {
            checks.push(supersolution_residual(&dw, t, x, FdSteps::default())?);
        }
    }
    let fails = checks.iter().filter(|c| c.status == CheckStatus::Fail).count();
    let inconclusive = checks.iter().filter(|c| c.status == CheckStatus::Inconclusive).count();
    println!("supersolution: {} checks, {fails} fail, {inconclusive} inconclusive", checks.len());
    ctx.json(
        "supersolution.json",
        &serde_json::json!({ "alpha": w.alpha, "checks": checks, "fail": fails, "inconclusive": inconclusive }),
    )?;
    Ok(fails == 0)
}

fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    let n = (horizon / dt).round();
    if !(dt > 0.0) || n < 1.0 || ((n * dt - horizon).abs() > 1e-9 * horizon.max(1.0)) {
        bail!("horizon {horizon} is not a positive multiple of dt {dt}");
    }
    Ok(n as usize)
}

fn noise_model(cfg: &ExperimentConfig, sigma: f64) -> Result<Arc<NoiseModel>> {
    Ok(Arc::new(NoiseModel::new(cfg.grid.spec()?, cfg.noise.measure()?, sigma)?))
}

pub fn noise(ctx: &mut Ctx) -> Result<bool> {
    let n = ctx.cfg.noise.clone();
    let grid = ctx.cfg.grid.spec()?;
    let model = noise_model(&ctx.cfg, n.sigma)?;
    let steps = steps_for(n.horizon, n.dt)?;
    let d = grid.d;
    let dalang: Vec<_> = (1..10)
        .map(|k| {
            let eta = k as f64 / 10.0;
            dalang_integral(&model.measure, eta, d).map(|v| serde_json::json!({ "eta": eta, "value": v }))
        })
        .collect::<std::result::Result<_, _>>()?;

    let total = n.paths.max(n.covariance_paths).max(1);
    let seed = ctx.seed;
    let runs: Vec<(f64, Option<Vec<f64>>)> = (0..total as u64)
        .into_par_iter()
        .map(|p| {
            let path = NoisePath::generate(model.clone(), seed, p, n.dt, steps)?;
            let stat = growth_stat(&path, n.horizon);
            let keep = p == 0 || (p as usize) < n.covariance_paths;
            Ok((stat, keep.then(|| path.field(steps))))
        })
        .collect::<osgood_lab::Result<_>>()?;

    #[derive(Serialize)]
    struct GrowthRow {
        path: usize,
        growth: f64,
    }
    let growth: Vec<GrowthRow> = runs.iter().take(n.paths).enumerate().map(|(path, r)| GrowthRow { path, growth: r.0 }).collect();
    ctx.rows_csv("growth.csv", &growth)?;
    let z0 = runs[0].1.clone().ok_or_else(|| anyhow!("missing path 0"))?;
    ctx.field_csv("noise_z.csv", &grid, "z", &z0)?;
    ctx.raster("noise_z.bin", grid, n.horizon, z0)?;

    let covariance = if n.covariance_paths >= 1000 {
        let fields: Vec<Vec<f64>> = runs.iter().take(n.covariance_paths).filter_map(|r| r.1.clone()).collect();
        Some(validate_covariance(&model, n.horizon, &fields)?)
    } else {
        None
    };
    let max_growth = growth.iter().map(|g| g.growth).fold(0.0, f64::max);
    let pass = covariance.as_ref().is_none_or(|c| c.pass);
    println!("noise: {} paths, {steps} steps, max growth {max_growth:.4}, covariance {}", n.paths, match &covariance {
        Some(c) => format!("chi2 {:.3} ({})", c.chi2, if c.pass { "pass" } else { "fail" }),
        None => "skipped".into(),
    });
    ctx.json(
        "noise.json",
        &serde_json::json!({
            "measure": model.measure, "sigma": n.sigma, "dt": n.dt, "steps": steps,
            "dalang": dalang, "max_growth": max_growth, "covariance": covariance,
        }),
    )?;
    Ok(pass)
}

#[derive(Serialize)]
struct SolveRow {
    path: u64,
    blowup: bool,
    t_flag: Option<f64>,
    sup_u: f64,
    m_realized: f64,
    sup_ratio: Option<f64>,
    k: Option<String>,
    bound_pass: Option<bool>,
}

fn tower_str(k: &osgood_lab::Tower) -> String {
    if k.is_finite_f64() {
        k.to_f64().to_string()
    } else {
        k.to_string()
    }
}

fn trace_csv(tr: &SolutionTrace, k: Option<&osgood_lab::Tower>) -> osgood_lab::Result<Vec<u8>> {
    let mut buf = Vec::new();
    io::write_trace_csv(&mut buf, tr, k)?;
    Ok(buf)
}

pub fn solve(ctx: &mut Ctx) -> Result<bool> {
    let s = ctx.cfg.solve.clone();
    let grid = ctx.cfg.grid.spec()?;
    let spec = ctx.cfg.drift.spec()?;
    let mut sc = SolverConfig::new(grid, s.dt, s.horizon, spec.clone(), s.initial.clone());
    sc.blowup_threshold = s.threshold;
    if let Some(l) = s.limiter {
        sc = sc.with_limiter(l);
    }
    if let Some(c) = s.cutoff {
        sc = sc.with_cutoff(c);
    }
    let picard = match s.scheme.as_str() {
        "exp-euler" => false,
        "picard" => {
            sc.scheme = Scheme::Picard { tol: 1e-10, max_sweeps: 200 };
            true
        }
        other => bail!("unknown scheme '{other}'"),
    };
    sc.validate()?;
    let steps = sc.steps()?;

    // The weighted monitor needs an Osgood drift; without one only blow-up flags are checked.
    let mut monitor_note = None;
    let weight = if picard {
        monitor_note = Some("weighted monitor not available with the picard scheme".to_string());
        None
    } else {
        let built = transform(&spec, 1e12).and_then(|tf| {
            let drift = AlphaScaledDrift::new(s.alpha, tf)?;
            let w = DynamicWeight::new(drift, grid.d, s.horizon, Estimator::GaussHermite { nodes: s.nodes })?;
            let wf = WeightField::tabulate(&w, &sc.snapshot_times()?, &grid.points())?;
            Ok((w, wf))
        });
        match built {
            Ok(v) => Some(v),
            Err(e) => {
                monitor_note = Some(format!("weighted monitor unavailable: {e}"));
                None
            }
        }
    };
    let model = if s.sigma > 0.0 { Some(noise_model(&ctx.cfg, s.sigma)?) } else { None };
    let seed = ctx.seed;

    let runs: Vec<(SolveRow, Vec<u8>, Option<Vec<f64>>)> = (0..s.paths.max(1) as u64)
        .into_par_iter()
        .map(|p| {
            let path = model.as_ref().map(|m| NoisePath::generate(m.clone(), seed, p, s.dt, steps)).transpose()?;
            let tr = if picard { picard_solve(&sc, path.as_ref())? } else { evolve(&sc, path.as_ref(), weight.as_ref().map(|w| &w.1))? };
            let mon = weight.as_ref().map(|w| monitor_weighted(&tr, w.0.alpha_drift())).transpose()?;
            let csv = trace_csv(&tr, mon.as_ref().map(|m| &m.k))?;
            let row = SolveRow {
                path: p,
                blowup: tr.blowup.is_some(),
                t_flag: tr.blowup.map(|b| b.t),
                sup_u: tr.sup_abs_u(),
                m_realized: tr.m_realized,
                sup_ratio: mon.as_ref().map(|m| m.sup_ratio),
                k: mon.as_ref().map(|m| tower_str(&m.k)),
                bound_pass: mon.as_ref().map(|m| m.bound_pass),
            };
            Ok((row, csv, (p == 0).then(|| tr.final_u().to_vec())))
        })
        .collect::<osgood_lab::Result<_>>()?;

    let mut rows = Vec::new();
    let mut u_final = None;
    for (row, csv, u) in runs {
        let mut w = ctx.create(&format!("trace_{:04}.csv", row.path))?;
        w.write_all(&csv)?;
        w.flush()?;
        if u.is_some() {
            u_final = u;
        }
        rows.push(row);
    }
    ctx.rows_csv("solve_summary.csv", &rows)?;
    if let Some(u) = u_final {
        ctx.field_csv("u_final.csv", &grid, "u", &u)?;
        ctx.raster("u_final.bin", grid, s.horizon, u)?;
    }
    let flags = rows.iter().filter(|r| r.blowup).count();
    let bound_fail = rows.iter().filter(|r| r.bound_pass == Some(false)).count();
    let sup_u = rows.iter().map(|r| r.sup_u).fold(0.0, f64::max);
    println!("solve: {} paths, {flags} blow-up flags, {bound_fail} bound failures, max sup|u| {sup_u:.4}", rows.len());
    if let Some(n) = &monitor_note {
        println!("{n}");
    }
    ctx.json(
        "solve.json",
        &serde_json::json!({
            "paths": rows.len(), "steps": steps, "blowup_flags": flags, "bound_failures": bound_fail,
            "max_sup_u": sup_u, "monitor": monitor_note.unwrap_or_else(|| "weighted".into()),
        }),
    )?;
    Ok(flags == 0 && bound_fail == 0)
}

pub fn blowup_scan(ctx: &mut Ctx) -> Result<bool> {
    let b = ctx.cfg.blowup_scan.clone();
    let grid = ctx.cfg.grid.spec()?;
    let spec = ctx.cfg.drift.spec()?;
    let mut sc = SolverConfig::new(grid, b.dt, b.horizon, spec, b.initial.clone());
    if let Some(l) = b.limiter {
        sc = sc.with_limiter(l);
    }
    sc.validate()?;
    let steps = sc.steps()?;
    let model = if b.sigma > 0.0 { Some(noise_model(&ctx.cfg, b.sigma)?) } else { None };
    let seed = ctx.seed;

    #[derive(Serialize)]
    struct Row {
        path: u64,
        flagged: bool,
        t_flag: Option<f64>,
        sup_u: f64,
    }
    let rows: Vec<Row> = (0..b.paths.max(1) as u64)
        .into_par_iter()
        .map(|p| {
            let path = model.as_ref().map(|m| NoisePath::generate(m.clone(), seed, p, b.dt, steps)).transpose()?;
            let tr = evolve(&sc, path.as_ref(), None)?;
            Ok(Row { path: p, flagged: tr.blowup.is_some(), t_flag: tr.blowup.map(|e| e.t), sup_u: tr.sup_abs_u() })
        })
        .collect::<osgood_lab::Result<_>>()?;
    ctx.rows_csv("blowup.csv", &rows)?;
    let flagged = rows.iter().filter(|r| r.flagged).count();
    let t_max = rows.iter().filter_map(|r| r.t_flag).fold(f64::NAN, f64::max);
    println!("blowup-scan: {flagged}/{} paths flagged before t = {}", rows.len(), b.horizon);
    ctx.json(
        "blowup.json",
        &serde_json::json!({ "paths": rows.len(), "flagged": flagged, "latest_flag": (flagged > 0).then_some(t_max), "horizon": b.horizon }),
    )?;
    Ok(true)
}

pub fn uniq(ctx: &mut Ctx) -> Result<bool> {
    let u = ctx.cfg.uniq.clone();
    let grid = ctx.cfg.grid.spec()?;
    let spec = ctx.cfg.drift.spec()?;
    let cfg = SolverConfig::new(grid, u.dt, u.horizon, spec.clone(), u.initial.clone());
    cfg.validate()?;
    let fine = u.dt / 2f64.powi(u.refinements as i32);
    let path = if u.sigma > 0.0 {
        Some(NoisePath::generate(noise_model(&ctx.cfg, u.sigma)?, ctx.seed, 0, fine, steps_for(u.horizon, fine)?)?)
    } else {
        None
    };
    let base = evolve(&cfg, path.as_ref(), None)?;
    let sup_u = base.sup_abs_u();
    let c_lip = u.c_lip.unwrap_or_else(|| spec.lipschitz(sup_u));
    let p0 = UniquenessParams::new(u.epsilon, u.nu, u.nu2, 1.0, u.horizon)?;
    let lip = lip_growth_check(&spec, u.epsilon, &osgood_lab::alpha::geometric_grid(10.0, 1e8, 57));

    let sel = match select_k(&p0, base.m_realized, c_lip, &grid) {
        Ok(s) => s,
        Err(e) => {
            println!("uniq: {e}");
            ctx.json("uniq.json", &serde_json::json!({ "error": e.to_string(), "c_lip": c_lip, "lip_trend": lip, "pass": false }))?;
            return Ok(false);
        }
    };
    let p = p0.with_k(sel.k)?;
    let rows = uniqueness_experiment(&cfg, path.as_ref(), u.level, u.refinements, &p)?;
    let mut w = ctx.create("decay.csv")?;
    io::write_decay_csv(&mut w, &rows)?;
    w.flush()?;

    // Cutoff levels above the realized sup must agree exactly; below it the pair is only reported.
    let level_norm = rows.iter().filter(|r| r.level_pair.starts_with('N')).map(|r| r.norm).fold(0.0, f64::max);
    let level_ok = u.level <= sup_u || level_norm <= 1e-10;
    let ends: Vec<f64> = rows.iter().filter(|r| r.t == u.horizon && r.level_pair.starts_with("dt")).map(|r| r.norm).collect();
    let ratios: Vec<f64> = ends.windows(2).map(|w| w[1] / w[0]).collect();
    let refine_ok = ratios.iter().all(|r| *r < 1.0);
    println!(
        "uniq: K = 2^{}, level distance {level_norm:.3e}, refinement ratios {ratios:.3?}, lip trend {}",
        sel.exponent,
        if lip.pass { "pass" } else { "fail" }
    );
    ctx.json(
        "uniq.json",
        &serde_json::json!({
            "k_selection": sel, "params": p, "sup_u": sup_u, "level_distance": level_norm,
            "refinement_ratios": ratios, "lip_trend": lip, "pass": level_ok && refine_ok,
        }),
    )?;
    Ok(level_ok && refine_ok)
}
