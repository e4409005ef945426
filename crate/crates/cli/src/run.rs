//! Stage orchestration and atomic bundle writing.

use crate::config::LoadedRun;
use crate::export::{fmt_f64, GridTable};
use anyhow::{bail, Context, Result};
use multigame_core::flow::ControlField;
use multigame_core::gamespec::{check_cic, CicReport, SpecBoundsReport};
use multigame_core::hamiltonian::{
    build_repr_homogeneous, build_repr_lipschitz, sample_costates, verify_repr, CostateMatrix,
    HamiltonianEval, QOperator, ReprReport, ReprResolution,
};
use multigame_core::pde::{
    equal_split_terminal, generating_residual, pde_residual, reconstruct_value, solve_dhjiu,
    GeneratingField, PdeSchemeConfig, ResidualReport,
};
use multigame_core::expr::ScalarExpr;
use multigame_core::values::{
    certify_value_bounds, dpp_residual, solve_lower, solve_upper, volume_split_diagnostic,
    DppReport, ValueBoundsReport, ValueGrid,
};
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

/// Which solver pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Cic,
    Lower,
    Upper,
    Pde,
    Hamiltonian,
    Repr,
    Bounds,
    All,
}

#[derive(Debug, Default, Serialize)]
pub struct Reports {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cic: Option<CicReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec_bounds: Option<SpecBoundsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dpp_lower: Option<DppReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dpp_upper: Option<DppReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_bounds: Option<ValueBoundsReport>,
    /// Smallest upper-minus-lower over the grids (ordering margin).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_order_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub isaacs_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pde_upper: Option<ResidualReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pde_lower: Option<ResidualReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruct: Option<ReconstructReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repr_lipschitz: Option<ReprReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repr_homogeneous: Option<ReprHomogeneousReport>,
}

/// Cross-check of the generating-field reconstruction against the value
/// grids at the origin node and the central state node.
#[derive(Debug, Clone, Serialize)]
pub struct ReconstructReport {
    pub upper_reconstructed: f64,
    pub upper_grid: f64,
    pub upper_difference: f64,
    pub lower_reconstructed: f64,
    pub lower_grid: f64,
    pub lower_difference: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReprHomogeneousReport {
    pub max_error: f64,
    pub tol: f64,
    pub pass: bool,
    pub rejected_inhomogeneous_probe: bool,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub versions: Versions,
    pub stage: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub warnings: Vec<String>,
    /// Worst gap between a tail box and its one-cell diagonal split.
    pub volume_split_gap: f64,
    pub timings_ms: Vec<(String, u128)>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub config: crate::config::RunConfig,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub cli: String,
    pub core: String,
}

pub struct OutputBundle {
    pub manifest: Manifest,
    pub reports: Reports,
    pub grids: Vec<(String, GridTable)>,
    pub extra_files: Vec<(String, String)>,
}

fn now_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Cic => "cic",
        Stage::Lower => "lower",
        Stage::Upper => "upper",
        Stage::Pde => "pde",
        Stage::Hamiltonian => "hamiltonian",
        Stage::Repr => "repr",
        Stage::Bounds => "bounds",
        Stage::All => "all",
    }
}

fn parse_terminal_components(run: &LoadedRun) -> Result<Vec<ScalarExpr>> {
    match &run.config.pde.g_terminal {
        Some(srcs) => {
            if srcs.len() != run.spec.m() {
                bail!("config error: pde.g_terminal needs {} expressions", run.spec.m());
            }
            srcs.iter()
                .enumerate()
                .map(|(i, src)| {
                    ScalarExpr::parse(src, run.spec.vars())
                        .with_context(|| format!("config error: pde.g_terminal[{i}]"))
                })
                .collect()
        }
        None => Ok(equal_split_terminal(run.spec.terminal_cost_expr(), run.spec.m())),
    }
}

/// Executes the selected stage and assembles the bundle in memory.
pub fn execute(run: &LoadedRun, stage: Stage, threads: Option<usize>) -> Result<OutputBundle> {
    let started = now_ms();
    let mut timings: Vec<(String, u128)> = Vec::new();
    let mut reports = Reports::default();
    let mut grids: Vec<(String, GridTable)> = Vec::new();
    let mut extra_files: Vec<(String, String)> = Vec::new();

    let spec = &run.spec;
    let lat = &run.lattice;
    let sgrid = &run.state_grid;
    let tols = &run.config.tolerances;

    reports.spec_bounds = Some(run.spec_bounds.clone());

    let timed = |name: &str, timings: &mut Vec<(String, u128)>, f: &mut dyn FnMut() -> Result<()>| -> Result<()> {
        let t0 = Instant::now();
        f()?;
        timings.push((name.to_string(), t0.elapsed().as_millis()));
        Ok(())
    };

    let want = |s: Stage| stage == s || stage == Stage::All;

    if want(Stage::Cic) {
        timed("cic", &mut timings, &mut || {
            let ctrl = ControlField::constant(lat, 0, 0);
            reports.cic = Some(check_cic(spec, &ctrl, lat, tols.cic)?);
            Ok(())
        })?;
    }

    let mut lower_grid: Option<ValueGrid> = None;
    let mut upper_grid: Option<ValueGrid> = None;
    if want(Stage::Lower) {
        timed("solve_lower", &mut timings, &mut || {
            let (vg, _) = solve_lower(spec, lat, sgrid)?;
            reports.dpp_lower =
                Some(dpp_residual(spec, lat, sgrid, &vg, run.config.dpp.h_cells, run.config.dpp.budget)?);
            grids.push(("lower_values".into(), GridTable::from_value_grid(&vg, lat)));
            lower_grid = Some(vg);
            Ok(())
        })?;
    }
    if want(Stage::Upper) {
        timed("solve_upper", &mut timings, &mut || {
            let (vg, _) = solve_upper(spec, lat, sgrid)?;
            reports.dpp_upper =
                Some(dpp_residual(spec, lat, sgrid, &vg, run.config.dpp.h_cells, run.config.dpp.budget)?);
            grids.push(("upper_values".into(), GridTable::from_value_grid(&vg, lat)));
            upper_grid = Some(vg);
            Ok(())
        })?;
    }

    if let (Some(lower), Some(upper)) = (&lower_grid, &upper_grid) {
        timed("value_checks", &mut timings, &mut || {
            let margin = lower
                .values()
                .iter()
                .zip(upper.values())
                .map(|(l, u)| u - l)
                .fold(f64::INFINITY, f64::min);
            reports.value_order_margin = Some(margin);
            reports.value_bounds = Some(certify_value_bounds(
                spec,
                lat,
                sgrid,
                lower,
                upper,
                run.config.bounds_check.pairs,
                run.config.seed,
            )?);
            Ok(())
        })?;
    }

    if want(Stage::Hamiltonian) {
        timed("hamiltonian_scan", &mut timings, &mut || {
            let samples = sample_costates(
                spec,
                run.config.hamiltonian.samples,
                run.config.hamiltonian.costate_radius,
                run.config.seed,
            );
            let mut table = String::new();
            table.push_str("# kind: hamiltonian-scan\n");
            let m = spec.m();
            let n = spec.n();
            let mut cols: Vec<String> = (1..=m).map(|a| format!("t{a}")).collect();
            cols.extend((1..=n).map(|i| format!("x{i}")));
            for i in 1..=n {
                for a in 1..=m {
                    cols.push(format!("p{i}_{a}"));
                }
            }
            cols.push("h_upper".into());
            cols.push("h_lower".into());
            table.push_str(&cols.join(","));
            table.push('\n');
            let mut gap = 0.0f64;
            for (t, x, p) in &samples {
                let up = multigame_core::hamiltonian::h_upper(spec, t, x, p)?;
                let lo = multigame_core::hamiltonian::h_lower(spec, t, x, p)?;
                gap = gap.max(up - lo);
                let mut row: Vec<String> = t.iter().chain(x.iter()).map(|&c| fmt_f64(c)).collect();
                row.extend(p.data().iter().map(|&c| fmt_f64(c)));
                row.push(fmt_f64(up));
                row.push(fmt_f64(lo));
                table.push_str(&row.join(","));
                table.push('\n');
            }
            reports.isaacs_gap = Some(gap);
            extra_files.push(("hamiltonian_scan.csv".into(), table));
            Ok(())
        })?;
    }

    let mut field_upper: Option<GeneratingField> = None;
    let mut field_lower: Option<GeneratingField> = None;
    if want(Stage::Pde) {
        timed("pde", &mut timings, &mut || {
            let g_terminal = parse_terminal_components(run)?;
            let cfg = PdeSchemeConfig {
                theta: run.config.pde.theta.clone(),
                sigma: run.config.pde.sigma,
                terminal: run.config.terminal_layer().expect("validated at load"),
                theta_seed: run.config.seed,
                ..Default::default()
            };
            let h_up = HamiltonianEval::Upper(spec);
            let h_low = HamiltonianEval::Lower(spec);
            let up = solve_dhjiu(&h_up, &g_terminal, lat, sgrid, &cfg)?;
            let low = solve_dhjiu(&h_low, &g_terminal, lat, sgrid, &cfg)?;
            reports.pde_upper = Some(pde_residual(&up, &h_up, lat, &g_terminal)?);
            reports.pde_lower = Some(pde_residual(&low, &h_low, lat, &g_terminal)?);
            grids.push(("field_upper".into(), GridTable::from_field(&up, lat, "field-upper")));
            grids.push(("field_lower".into(), GridTable::from_field(&low, lat, "field-lower")));
            field_upper = Some(up);
            field_lower = Some(low);
            Ok(())
        })?;
    }

    // Cross-checks between the PDE fields and the value grids.
    if let (Some(fu), Some(fl), Some(ug), Some(lg)) =
        (&field_upper, &field_lower, &upper_grid, &lower_grid)
    {
        timed("cross_checks", &mut timings, &mut || {
            let ctrl = ControlField::constant(lat, 0, 0);
            let origin = vec![0usize; spec.m()];
            let mid_state = sgrid.node_count() / 2;
            let x0 = sgrid.node_coords(mid_state);
            let up_rec = reconstruct_value(fu, spec, lat, &ctrl, &origin, &x0)?;
            let low_rec = reconstruct_value(fl, spec, lat, &ctrl, &origin, &x0)?;
            let origin_idx = lat.node_index(&origin);
            let up_grid = ug.value(origin_idx, mid_state);
            let low_grid = lg.value(origin_idx, mid_state);
            reports.reconstruct = Some(ReconstructReport {
                upper_reconstructed: up_rec,
                upper_grid: up_grid,
                upper_difference: (up_rec - up_grid).abs(),
                lower_reconstructed: low_rec,
                lower_grid: low_grid,
                lower_difference: (low_rec - low_grid).abs(),
            });
            if let Some(r) = reports.pde_upper.as_mut() {
                r.generating_identity_residual = Some(generating_residual(
                    fu,
                    ug,
                    spec,
                    lat,
                    run.config.pde.identity_trials,
                    run.config.seed,
                )?);
            }
            if let Some(r) = reports.pde_lower.as_mut() {
                r.generating_identity_residual = Some(generating_residual(
                    fl,
                    lg,
                    spec,
                    lat,
                    run.config.pde.identity_trials,
                    run.config.seed,
                )?);
            }
            Ok(())
        })?;
    }

    if want(Stage::Repr) {
        timed("repr", &mut timings, &mut || {
            // Representation checks run at desk shapes where the sampled
            // ball grids stay small: the Lipschitz shape at n = m = 1 and
            // the homogeneous shape at n = 1, m = 2, both against the
            // Frobenius-norm Hamiltonian.
            let rc = &run.config.repr;
            let h = HamiltonianEval::custom(|_, _, p: &CostateMatrix| p.norm(), 1.0);
            let q = QOperator::banded(1, 1, rc.k);
            let pieces = build_repr_lipschitz(
                &h,
                1,
                1,
                rc.k,
                rc.p_radius,
                q,
                ReprResolution { u_res: rc.u_res, v_res: rc.v_res },
            )?;
            use rand::Rng;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(run.config.seed);
            let ps: Vec<CostateMatrix> = (0..20)
                .map(|_| CostateMatrix::new(1, 1, vec![rng.random_range(-rc.p_radius..=rc.p_radius)]))
                .collect::<multigame_core::Result<_>>()?;
            let spacing = 2.0 * rc.p_radius / (rc.v_res - 1) as f64;
            reports.repr_lipschitz = Some(verify_repr(&pieces, &[0.0], &[0.0], &ps, 2.0 * spacing)?);

            // Homogeneous shape: the squared norm must be rejected, the
            // norm accepted and represented on unit costates.
            let h_bad = HamiltonianEval::custom(|_, _, p: &CostateMatrix| p.norm() * p.norm(), 1.0);
            let rejected = build_repr_homogeneous(
                &h_bad,
                1,
                2,
                rc.k,
                None,
                ReprResolution { u_res: rc.u_res, v_res: 9 },
                run.config.seed,
            )
            .is_err();
            let hom = build_repr_homogeneous(
                &h,
                1,
                2,
                rc.k,
                None,
                ReprResolution { u_res: rc.u_res, v_res: 9 },
                run.config.seed,
            )?;
            let hom_spacing = 2.0 / 8.0;
            let mut worst = 0.0f64;
            for _ in 0..20 {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let p = CostateMatrix::new(1, 2, vec![angle.cos(), angle.sin()])?;
                let got = hom.maxmin(&[0.0, 0.0], &[0.0], &p)?;
                worst = worst.max((got - 1.0).abs());
            }
            reports.repr_homogeneous = Some(ReprHomogeneousReport {
                max_error: worst,
                tol: 3.0 * hom_spacing,
                pass: worst <= 3.0 * hom_spacing,
                rejected_inhomogeneous_probe: rejected,
            });
            Ok(())
        })?;
    }

    let manifest = Manifest {
        tool: "multigame".into(),
        versions: Versions {
            cli: env!("CARGO_PKG_VERSION").into(),
            core: multigame_core::VERSION.into(),
        },
        stage: stage_name(stage).into(),
        seed: run.config.seed,
        threads,
        warnings: run.warnings.clone(),
        volume_split_gap: volume_split_diagnostic(lat),
        timings_ms: timings,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        config: run.config.clone(),
    };

    Ok(OutputBundle { manifest, reports, grids, extra_files })
}

/// True when any produced report misses its tolerance; drives the strict
/// exit code.
pub fn verification_failed(bundle: &OutputBundle, tols: &crate::config::Tolerances) -> bool {
    let r = &bundle.reports;
    let cic_bad = r.cic.as_ref().map(|c| !c.pass).unwrap_or(false);
    let spec_bad = r.spec_bounds.as_ref().map(|b| !b.pass()).unwrap_or(false);
    let dpp_bad = [&r.dpp_lower, &r.dpp_upper]
        .iter()
        .any(|d| d.as_ref().map(|d| d.max_residual > tols.dpp).unwrap_or(false));
    let order_bad = r.value_order_margin.map(|m| m < -tols.value_order).unwrap_or(false);
    let vb_bad = r
        .value_bounds
        .as_ref()
        .map(|b| !b.bounded || b.continuity_violations > 0)
        .unwrap_or(false);
    let pde_bad = [&r.pde_lower, &r.pde_upper]
        .iter()
        .any(|p| p.as_ref().map(|p| p.max_terminal_mismatch > tols.pde).unwrap_or(false));
    let repr_bad = r.repr_lipschitz.as_ref().map(|p| !p.pass).unwrap_or(false)
        || r.repr_homogeneous
            .as_ref()
            .map(|p| !p.pass || !p.rejected_inhomogeneous_probe)
            .unwrap_or(false);
    cic_bad || spec_bad || dpp_bad || order_bad || vb_bad || pde_bad || repr_bad
}

/// Writes the bundle atomically: everything goes into a staging directory
/// next to the target, then one rename publishes it. Refuses to overwrite.
pub fn write_bundle(bundle: &OutputBundle, out: &Path) -> Result<()> {
    if out.exists() {
        bail!("config error: output directory {} already exists", out.display());
    }
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(parent) = parent {
        std::fs::create_dir_all(parent)?;
    }
    let stem = out.file_name().context("config error: output path needs a name")?;
    let staging = out.with_file_name(format!(".{}.tmp-{}", stem.to_string_lossy(), std::process::id()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir_all(&staging)?;
    let result = (|| -> Result<()> {
        std::fs::write(staging.join("manifest.json"), serde_json::to_string_pretty(&bundle.manifest)?)?;
        std::fs::write(staging.join("reports.json"), serde_json::to_string_pretty(&bundle.reports)?)?;
        for (name, table) in &bundle.grids {
            std::fs::write(staging.join(format!("{name}.csv")), table.to_csv())?;
            std::fs::write(staging.join(format!("{name}.json")), table.to_json())?;
        }
        for (name, content) in &bundle.extra_files {
            std::fs::write(staging.join(name), content)?;
        }
        Ok(())
    })();
    match result {
        Ok(()) => {
            std::fs::rename(&staging, out)?;
            Ok(())
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}
