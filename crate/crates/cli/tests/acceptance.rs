//! Acceptance suite: one test per shipped verification criterion, each
//! printing a PASS/FAIL line with the measured numbers (run with
//! `cargo test -p multigame-cli --test acceptance -- --nocapture` to see
//! every line).

use multigame_core::catalog;
use multigame_core::expr::{ScalarExpr, VarSpace};
use multigame_core::flow::{integrate_mflow, path_independence_residual, ControlField};
use multigame_core::gamespec::GameSpec;
use multigame_core::hamiltonian::{
    build_repr_homogeneous, build_repr_lipschitz, verify_repr, CostateMatrix, HamiltonianEval,
    QOperator, ReprResolution,
};
use multigame_core::lattice::TimeLattice;
use multigame_core::pde::{
    equal_split_terminal, pde_residual, reconstruct_value, solve_dhjiu, PdeSchemeConfig,
};
use multigame_core::values::{
    certify_value_bounds, dpp_residual, solve_lower, solve_upper, StateGrid,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shipped_games() -> Vec<(&'static str, GameSpec)> {
    vec![
        ("zero", catalog::zero_game(2)),
        ("frozen", catalog::frozen_state_game(2)),
        ("linear", catalog::linear_game(2)),
        ("bilinear", catalog::bilinear_game(2)),
        ("cic_pass", catalog::cic_pass_game()),
        ("cic_fail", catalog::cic_fail_game()),
    ]
}

fn grids(spec: &GameSpec, steps: usize, nodes: usize) -> (TimeLattice, StateGrid) {
    (
        catalog::standard_lattice(spec, steps).unwrap(),
        catalog::standard_state_grid(spec, nodes).unwrap(),
    )
}

#[test]
fn criterion_01_path_independence() {
    let pass_game = catalog::cic_pass_game();
    let mut pass_res = Vec::new();
    for n in [8usize, 16, 32] {
        let lat = catalog::standard_lattice(&pass_game, n).unwrap();
        let ctrl = ControlField::constant(&lat, 0, 0);
        let end = vec![n, n];
        pass_res
            .push(path_independence_residual(&pass_game, &lat, &ctrl, &[0, 0], &end, &[1.0]).unwrap());
    }
    let fail_game = catalog::cic_fail_game();
    let lat = catalog::standard_lattice(&fail_game, 32).unwrap();
    let ctrl = ControlField::constant(&lat, 0, 0);
    let fail32 =
        path_independence_residual(&fail_game, &lat, &ctrl, &[0, 0], &[32, 32], &[1.0]).unwrap();

    let decays =
        pass_res[1] <= pass_res[0] / 3.5 && pass_res[2] <= pass_res[1] / 3.5;
    let separated = fail32 > 10.0 * pass_res[2];
    println!(
        "criterion 01 path independence: {} — passing-game residuals {:?} (each <= prev/3.5), failing-game N=32 residual {:.3e} > 10x {:.3e}",
        if decays && separated { "PASS" } else { "FAIL" },
        pass_res,
        fail32,
        pass_res[2],
    );
    assert!(decays, "residual series {pass_res:?} misses the 3.5x decay");
    assert!(separated, "failing game {fail32} vs passing {}", pass_res[2]);
}

#[test]
fn criterion_02_mflow_accuracy() {
    let spec = catalog::cic_pass_game();
    let lat = catalog::standard_lattice(&spec, 32).unwrap();
    let ctrl = ControlField::constant(&lat, 0, 0);
    let field = integrate_mflow(&spec, &lat, &ctrl, &[0, 0], &[32, 32], &[1.0]).unwrap();
    let exact = (2.0f64).exp();
    let err = (field.value(&[32, 32])[0] - exact).abs();
    let ok = err <= 0.01 * exact;
    println!(
        "criterion 02 m-flow accuracy: {} — |x(1,1) - e^2| = {err:.3e} <= {:.3e}",
        if ok { "PASS" } else { "FAIL" },
        0.01 * exact
    );
    assert!(ok);
}

#[test]
fn criterion_03_dynamic_programming_residuals() {
    // One-cell recursion residual is the definition: exactly zero.
    let linear = catalog::linear_game(2);
    let (lat8, sg8) = {
        let lat = catalog::standard_lattice(&linear, 8).unwrap();
        let sg = StateGrid::new(linear.state_box().clone(), vec![5 * 8 + 1]).unwrap();
        (lat, sg)
    };
    let (up8, _) = solve_upper(&linear, &lat8, &sg8).unwrap();
    let (low8, _) = solve_lower(&linear, &lat8, &sg8).unwrap();
    let one_up = dpp_residual(&linear, &lat8, &sg8, &up8, 1, 0).unwrap().max_residual;
    let one_low = dpp_residual(&linear, &lat8, &sg8, &low8, 1, 0).unwrap().max_residual;

    // Frozen state: the per-cell optima compose exactly for any horizon.
    let frozen = catalog::frozen_state_game(2);
    let (flat, fsg) = grids(&frozen, 8, 9);
    let (fup, _) = solve_upper(&frozen, &flat, &fsg).unwrap();
    let frozen2 = dpp_residual(&frozen, &flat, &fsg, &fup, 2, 0).unwrap().max_residual;
    let frozen3 = dpp_residual(&frozen, &flat, &fsg, &fup, 3, 0).unwrap().max_residual;

    // Linear game, misaligned state grid: two-cell residual tracks the
    // interpolation error and halves with refinement.
    let mut two_cell = Vec::new();
    for n in [16usize, 32] {
        let lat = catalog::standard_lattice(&linear, n).unwrap();
        let sg = StateGrid::new(linear.state_box().clone(), vec![5 * n + 1]).unwrap();
        let (up, _) = solve_upper(&linear, &lat, &sg).unwrap();
        let (low, _) = solve_lower(&linear, &lat, &sg).unwrap();
        let ru = dpp_residual(&linear, &lat, &sg, &up, 2, 0).unwrap().max_residual;
        let rl = dpp_residual(&linear, &lat, &sg, &low, 2, 0).unwrap().max_residual;
        two_cell.push(ru.max(rl));
    }
    let delta16 = 1.0 / 16.0;
    let ratio = two_cell[0] / two_cell[1];
    let ok = one_up == 0.0
        && one_low == 0.0
        && frozen2 == 0.0
        && frozen3 == 0.0
        && two_cell[0] <= 5.0 * delta16
        && (1.5..=2.5).contains(&ratio);
    println!(
        "criterion 03 dynamic programming: {} — one-cell {one_up:.1e}/{one_low:.1e}, frozen multi-cell {frozen2:.1e}/{frozen3:.1e}, linear 2-cell {:.3e} <= {:.3e} halving ratio {ratio:.3}",
        if ok { "PASS" } else { "FAIL" },
        two_cell[0],
        5.0 * delta16
    );
    assert_eq!(one_up, 0.0);
    assert_eq!(one_low, 0.0);
    assert_eq!(frozen2, 0.0);
    assert_eq!(frozen3, 0.0);
    assert!(two_cell[0] <= 5.0 * delta16, "{two_cell:?}");
    assert!((1.5..=2.5).contains(&ratio), "halving ratio {ratio}");
}

#[test]
fn criterion_04_value_ordering_and_gap() {
    let mut worst_order = f64::INFINITY;
    for (name, spec) in shipped_games() {
        let (lat, sg) = grids(&spec, 8, 17);
        let (low, _) = solve_lower(&spec, &lat, &sg).unwrap();
        let (up, _) = solve_upper(&spec, &lat, &sg).unwrap();
        let margin = low
            .values()
            .iter()
            .zip(up.values())
            .map(|(l, u)| u - l)
            .fold(f64::INFINITY, f64::min);
        worst_order = worst_order.min(margin);
        assert!(margin >= -1e-9, "{name}: ordering margin {margin}");
    }

    let frozen = catalog::frozen_state_game(2);
    let (lat, sg) = grids(&frozen, 8, 9);
    let (low, _) = solve_lower(&frozen, &lat, &sg).unwrap();
    let (up, _) = solve_upper(&frozen, &lat, &sg).unwrap();
    let origin = lat.node_index(&[0, 0]);
    let mut frozen_gap_err = 0.0f64;
    for s in 0..sg.node_count() {
        frozen_gap_err = frozen_gap_err.max((up.value(origin, s) - low.value(origin, s) - 1.0).abs());
    }

    let bilinear = catalog::bilinear_game(2);
    let (blat, bsg) = grids(&bilinear, 8, 9);
    let (blow, _) = solve_lower(&bilinear, &blat, &bsg).unwrap();
    let (bup, _) = solve_upper(&bilinear, &blat, &bsg).unwrap();
    let bilinear_gap = blow
        .values()
        .iter()
        .zip(bup.values())
        .map(|(l, u)| (u - l).abs())
        .fold(0.0f64, f64::max);

    let ok = worst_order >= -1e-9 && frozen_gap_err <= 1e-9 && bilinear_gap <= 1e-9;
    println!(
        "criterion 04 ordering and value gap: {} — worst ordering margin {worst_order:.3e}, frozen gap error {frozen_gap_err:.3e}, bilinear gap {bilinear_gap:.3e}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(frozen_gap_err <= 1e-9);
    assert!(bilinear_gap <= 1e-9);
}

/// Per-game value grids plus the bound certificate at 10^4 sampled pairs.
fn bounds_reports() -> Vec<(&'static str, multigame_core::values::ValueBoundsReport)> {
    let mut out = Vec::new();
    for (name, spec) in [
        ("zero", catalog::zero_game(2)),
        ("frozen", catalog::frozen_state_game(2)),
        ("linear", catalog::linear_game(2)),
        ("bilinear", catalog::bilinear_game(2)),
    ] {
        let (lat, sg) = grids(&spec, 8, 17);
        let (low, _) = solve_lower(&spec, &lat, &sg).unwrap();
        let (up, _) = solve_upper(&spec, &lat, &sg).unwrap();
        let report = certify_value_bounds(&spec, &lat, &sg, &low, &up, 10_000, 42).unwrap();
        out.push((name, report));
    }
    out
}

#[test]
fn criterion_05_boundedness() {
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, report) in bounds_reports() {
        ok &= report.bounded;
        lines.push(format!(
            "{name}: max|lower|={:.3e}, max|upper|={:.3e}, D={:.3e}",
            report.max_abs_lower, report.max_abs_upper, report.d
        ));
    }
    println!(
        "criterion 05a value boundedness |value| <= D: {} — {}",
        if ok { "PASS" } else { "FAIL" },
        lines.join("; ")
    );
    assert!(ok);
}

#[test]
fn criterion_05_continuity_estimate() {
    // The sampled estimate |V(t1,x1) - V(t2,x2)| <= E vol(box(t1,t2)) +
    // D |x1 - x2| over 10^4 comparable pairs per game, zero violations.
    //
    // Known defect: for m >= 2 the box between comparable nodes sharing a
    // time coordinate has zero volume while the remaining-box shells (and
    // the values built on them) still differ, so any game whose value
    // varies along a time axis admits sampled pairs that violate the
    // estimate; the frozen-state game does. The criterion is asserted as
    // stated and fails honestly on such games.
    let mut all_zero = true;
    let mut lines = Vec::new();
    for (name, report) in bounds_reports() {
        all_zero &= report.continuity_violations == 0;
        lines.push(format!(
            "{name}: {} violations / {} pairs (worst margin {:.3e})",
            report.continuity_violations, report.pairs_tested, report.worst_margin
        ));
    }
    println!(
        "criterion 05b value continuity estimate: {} — {}",
        if all_zero { "PASS" } else { "FAIL" },
        lines.join("; ")
    );
    assert!(
        all_zero,
        "continuity estimate violated: {}. The bound charges time variation only through \
         vol(box(t1,t2)), which vanishes whenever the two nodes share a coordinate, while the \
         value still changes with the remaining-box volume; see README (limitations).",
        lines.join("; ")
    );
}

#[test]
fn criterion_06_lipschitz_representation() {
    let h = HamiltonianEval::custom(|_, _, p: &CostateMatrix| p.norm(), 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ps: Vec<CostateMatrix> = (0..20)
        .map(|_| CostateMatrix::new(1, 1, vec![rng.random_range(-2.0..=2.0)]).unwrap())
        .collect();
    let mut errors = Vec::new();
    let mut tols = Vec::new();
    for v_res in [17usize, 33] {
        let q = QOperator::banded(1, 1, 1.0);
        let pieces =
            build_repr_lipschitz(&h, 1, 1, 1.0, 2.0, q, ReprResolution { u_res: 9, v_res }).unwrap();
        let spacing = 4.0 / (v_res - 1) as f64;
        let report = verify_repr(&pieces, &[0.0], &[0.0], &ps, 2.0 * spacing).unwrap();
        errors.push(report.max_error);
        tols.push(report.tol);
        assert!(report.pass, "v_res {v_res}: error {} > {}", report.max_error, report.tol);
    }
    // Halving check; when both errors sit at machine exactness (the norm's
    // admissible value plateaus, so the grid attains it) the ratio is
    // degenerate and the clause is vacuous.
    let degenerate = errors[0] <= 1e-12 && errors[1] <= 1e-12;
    let ratio = errors[0] / errors[1];
    let halves = degenerate || (1.4..=2.6).contains(&ratio);
    println!(
        "criterion 06 Lipschitz representation: {} — errors {:?} within {:?}; halving {}",
        if halves { "PASS" } else { "FAIL" },
        errors,
        tols,
        if degenerate { "vacuous (grid-exact)".to_string() } else { format!("ratio {ratio:.3}") }
    );
    assert!(halves, "errors {errors:?}");
}

#[test]
fn criterion_07_homogeneous_representation() {
    let h_sq = HamiltonianEval::custom(|_, _, p: &CostateMatrix| p.norm() * p.norm(), 1.0);
    let rejected = matches!(
        build_repr_homogeneous(&h_sq, 1, 2, 1.0, None, ReprResolution { u_res: 9, v_res: 9 }, 7),
        Err(multigame_core::Error::NotHomogeneous { .. })
    );

    let h = HamiltonianEval::custom(|_, _, p: &CostateMatrix| p.norm(), 1.0);
    let pieces =
        build_repr_homogeneous(&h, 1, 2, 1.0, None, ReprResolution { u_res: 9, v_res: 9 }, 7).unwrap();
    let spacing = 2.0 / 8.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let p = CostateMatrix::new(1, 2, vec![angle.cos(), angle.sin()]).unwrap();
        let got = pieces.maxmin(&[0.0, 0.0], &[0.0], &p).unwrap();
        worst = worst.max((got - 1.0).abs());
    }
    let ok = rejected && worst <= 3.0 * spacing;
    println!(
        "criterion 07 homogeneous representation: {} — squared norm rejected: {rejected}, unit-costate error {worst:.3e} <= {:.3e}",
        if ok { "PASS" } else { "FAIL" },
        3.0 * spacing
    );
    assert!(rejected);
    assert!(worst <= 3.0 * spacing);
}

#[test]
fn criterion_08_dhjiu_solver() {
    // Constant Hamiltonian: exact linear solution.
    let vars = VarSpace { m: 2, n: 1, p: 1, q: 1 };
    let zero = ScalarExpr::parse("0", vars).unwrap();
    let g0 = equal_split_terminal(&zero, 2);
    let c = 0.8;
    let h_const = HamiltonianEval::custom(move |_, _, _| c, 0.0);
    let spec = catalog::zero_game(2);
    let (lat, sg) = grids(&spec, 8, 17);
    let field = solve_dhjiu(&h_const, &g0, &lat, &sg, &PdeSchemeConfig::default()).unwrap();
    let const_res = pde_residual(&field, &h_const, &lat, &g0).unwrap();

    // Linear drift against the characteristics oracle.
    let a = 0.5;
    let drift = HamiltonianEval::custom(
        move |_, _, p: &CostateMatrix| {
            a * (0..p.m()).map(|al| p.get(0, al)).sum::<f64>() / p.m() as f64
        },
        1.0,
    );
    let phi = ScalarExpr::parse("1/(1 + x1^2)", vars).unwrap();
    let g = vec![phi.clone(), phi.clone()];
    let mut drift_errors = Vec::new();
    for steps in [16usize, 32] {
        let lat = catalog::standard_lattice(&spec, steps).unwrap();
        let sgrid = StateGrid::new(
            multigame_core::gamespec::StateBox::new(vec![-2.0], vec![2.0]).unwrap(),
            vec![4 * steps + 1],
        )
        .unwrap();
        let f = solve_dhjiu(&drift, &g, &lat, &sgrid, &PdeSchemeConfig::default()).unwrap();
        let mut worst = 0.0f64;
        for lat_idx in 0..lat.node_count() {
            let t = lat.node_coords(&lat.node_multi(lat_idx));
            let shift = a * ((1.0 - t[0]) + (1.0 - t[1])) / 2.0;
            for s in 0..sgrid.node_count() {
                let x = sgrid.node_coords(s)[0];
                let arg = x + shift;
                if !(-2.0..=2.0).contains(&arg) {
                    continue;
                }
                worst = worst.max((f.scalar(lat_idx, s) - 1.0 / (1.0 + arg * arg)).abs());
            }
        }
        drift_errors.push(worst);
    }

    // Comparison principle on random ordered terminal pairs.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut comparison_violations = 0usize;
    for _ in 0..5 {
        let a0 = rng.random_range(0.1..0.5);
        let b0 = rng.random_range(0.5..1.5);
        let c0 = rng.random_range(0.05..0.3);
        let g1 = ScalarExpr::parse(&format!("{a0}*cos({b0}*x1)"), vars).unwrap();
        let g2 = ScalarExpr::parse(&format!("{a0}*cos({b0}*x1) + {c0} + {c0}*sin(x1)"), vars).unwrap();
        let (lat, sg) = grids(&spec, 8, 33);
        let f1 =
            solve_dhjiu(&drift, &equal_split_terminal(&g1, 2), &lat, &sg, &PdeSchemeConfig::default())
                .unwrap();
        let f2 =
            solve_dhjiu(&drift, &equal_split_terminal(&g2, 2), &lat, &sg, &PdeSchemeConfig::default())
                .unwrap();
        for lat_idx in 0..lat.node_count() {
            for s in 0..sg.node_count() {
                if f1.scalar(lat_idx, s) > f2.scalar(lat_idx, s) + 1e-12 {
                    comparison_violations += 1;
                }
            }
        }
    }

    let decay = drift_errors[0] / drift_errors[1];
    let ok = const_res.max_pde_residual <= 1e-10
        && drift_errors[0] <= 0.1
        && decay >= 1.7
        && comparison_violations == 0;
    println!(
        "criterion 08 dHJIU solver: {} — constant-H residual {:.3e} <= 1e-10, drift errors {:?} (decay {decay:.2} >= 1.7), comparison violations {comparison_violations}",
        if ok { "PASS" } else { "FAIL" },
        const_res.max_pde_residual,
        drift_errors
    );
    assert!(const_res.max_pde_residual <= 1e-10);
    assert!(drift_errors[0] <= 0.1, "{drift_errors:?}");
    assert!(decay >= 1.7, "{drift_errors:?}");
    assert_eq!(comparison_violations, 0);
}

#[test]
fn criterion_09_generating_identity() {
    // H = 0: the field is time-constant and the reconstruction returns the
    // terminal value exactly.
    let vars = VarSpace { m: 2, n: 1, p: 1, q: 1 };
    let h0 = HamiltonianEval::custom(|_, _, _| 0.0, 0.0);
    let gexpr = ScalarExpr::parse("x1^2", vars).unwrap();
    let g = equal_split_terminal(&gexpr, 2);
    let spec = catalog::zero_game(2);
    let (lat, sg) = {
        let spec2 = catalog::frozen_state_game(2);
        let lat = catalog::standard_lattice(&spec2, 8).unwrap();
        let sg = StateGrid::new(
            multigame_core::gamespec::StateBox::new(vec![-1.0], vec![1.0]).unwrap(),
            vec![17],
        )
        .unwrap();
        (lat, sg)
    };
    let field0 = solve_dhjiu(&h0, &g, &lat, &sg, &PdeSchemeConfig::default()).unwrap();
    let ctrl = ControlField::constant(&lat, 0, 0);
    let x0 = [0.5];
    let rec0 = reconstruct_value(&field0, &spec, &lat, &ctrl, &[0, 0], &x0).unwrap();
    let exact0_err = (rec0 - 0.25).abs();

    // Frozen-state cross-check against the backward solver, refining.
    let frozen = catalog::frozen_state_game(2);
    let mut errors = Vec::new();
    for steps in [16usize, 32] {
        let lat = catalog::standard_lattice(&frozen, steps).unwrap();
        let sg = catalog::standard_state_grid(&frozen, 9).unwrap();
        let (up, _) = solve_upper(&frozen, &lat, &sg).unwrap();
        let h = HamiltonianEval::Upper(&frozen);
        let gf = equal_split_terminal(frozen.terminal_cost_expr(), 2);
        let field = solve_dhjiu(&h, &gf, &lat, &sg, &PdeSchemeConfig::default()).unwrap();
        let ctrl = ControlField::constant(&lat, 0, 0);
        let rec = reconstruct_value(&field, &frozen, &lat, &ctrl, &[0, 0], &[0.0]).unwrap();
        let grid_val = up.value(lat.node_index(&[0, 0]), sg.node_count() / 2);
        errors.push((rec - grid_val).abs());
    }

    let nonincreasing = errors[1] <= errors[0].max(1e-12);
    let ok = exact0_err <= 1e-12 && errors[0] <= 0.1 && nonincreasing;
    println!(
        "criterion 09 generating identity: {} — H=0 reconstruction error {exact0_err:.3e} <= 1e-12, frozen cross-check errors {errors:?} (<= 0.1, non-increasing)",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(exact0_err <= 1e-12);
    assert!(errors[0] <= 0.1, "{errors:?}");
    assert!(nonincreasing, "{errors:?}");
}

/// Classical one-dimensional backward induction, written independently of
/// the solver: explicit time loop, its own linear interpolation, and
/// direct min/max scans.
fn classic_backward_induction(
    spec: &GameSpec,
    lat: &TimeLattice,
    sgrid: &StateGrid,
    upper: bool,
) -> Vec<f64> {
    let ns = sgrid.node_count();
    let n_steps = lat.steps()[0];
    let dt = lat.spacing()[0];
    let lo = sgrid.domain().lo()[0];
    let hi = sgrid.domain().hi()[0];
    let h = sgrid.spacing()[0];
    let lerp = |layer: &[f64], x: f64| -> f64 {
        let xx = x.clamp(lo, hi);
        let rel = (xx - lo) / h;
        let c = (rel.floor() as usize).min(ns - 2);
        let f = rel - c as f64;
        layer[c] + f * (layer[c + 1] - layer[c])
    };
    let mut layers = vec![vec![0.0; ns]; n_steps + 1];
    for (s, slot) in layers[n_steps].iter_mut().enumerate() {
        *slot = spec.terminal_cost(&sgrid.node_coords(s)).unwrap();
    }
    for k in (0..n_steps).rev() {
        let t = [lat.domain().lo()[0] + k as f64 * dt];
        for s in 0..ns {
            let x = sgrid.node_coords(s)[0];
            let mut outer = if upper { f64::INFINITY } else { f64::NEG_INFINITY };
            let (outer_set, inner_set) = if upper {
                (spec.v_space().samples(), spec.u_space().samples())
            } else {
                (spec.u_space().samples(), spec.v_space().samples())
            };
            for o in outer_set {
                let mut inner = if upper { f64::NEG_INFINITY } else { f64::INFINITY };
                for i in inner_set {
                    let (u, v) = if upper { (i, o) } else { (o, i) };
                    let mut col = vec![0.0];
                    spec.dynamics_column(0, &t, &[x], u, v, &mut col).unwrap();
                    let l = spec.running_cost(&t, &[x], u, v).unwrap();
                    let val = l * dt + lerp(&layers[k + 1], x + dt * col[0]);
                    inner = if upper { inner.max(val) } else { inner.min(val) };
                }
                outer = if upper { outer.min(inner) } else { outer.max(inner) };
            }
            layers[k][s] = outer;
        }
    }
    layers.concat()
}

#[test]
fn criterion_10_single_time_reduction() {
    let mut worst = 0.0f64;
    for (name, spec) in [
        ("zero", catalog::zero_game(1)),
        ("frozen", catalog::frozen_state_game(1)),
        ("linear", catalog::linear_game(1)),
    ] {
        let lat = catalog::standard_lattice(&spec, 16).unwrap();
        let sg = catalog::standard_state_grid(&spec, 33).unwrap();
        let (low, _) = solve_lower(&spec, &lat, &sg).unwrap();
        let (up, _) = solve_upper(&spec, &lat, &sg).unwrap();
        let oracle_low = classic_backward_induction(&spec, &lat, &sg, false);
        let oracle_up = classic_backward_induction(&spec, &lat, &sg, true);
        for i in 0..low.values().len() {
            worst = worst.max((low.values()[i] - oracle_low[i]).abs());
            worst = worst.max((up.values()[i] - oracle_up[i]).abs());
        }
        assert!(worst <= 1e-12, "{name}: divergence {worst} from the classical oracle");
    }
    println!(
        "criterion 10 m=1 reduction: PASS — worst deviation from classical backward induction {worst:.3e} <= 1e-12"
    );
}

#[test]
fn criterion_11_reproducibility() {
    let bin = env!("CARGO_BIN_EXE_multigame");
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../games/frozen.json");
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("run_a");
    let out_b = tmp.path().join("run_b");
    for out in [&out_a, &out_b] {
        let status = std::process::Command::new(bin)
            .args(["all", "--config", config, "--out"])
            .arg(out)
            .args(["--seed", "7"])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let mut names: Vec<String> = std::fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert!(names.contains(&"upper_values.csv".to_string()));
    let mut compared = 0;
    for name in &names {
        if name == "manifest.json" {
            // The manifest carries wall-clock timings and timestamps; its
            // config echo must still agree.
            let a: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(out_a.join(name)).unwrap()).unwrap();
            let b: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(out_b.join(name)).unwrap()).unwrap();
            assert_eq!(a["config"], b["config"]);
            assert_eq!(a["seed"], b["seed"]);
            continue;
        }
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
        compared += 1;
    }
    println!(
        "criterion 11 reproducibility: PASS — {compared} bundle files byte-identical across two seeded runs"
    );
}
