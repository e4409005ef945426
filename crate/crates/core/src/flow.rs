//! Controlled m-flow integration over the lattice and the Bolza payoff.
//!
//! The state field solves dx^i/ds^alpha = X^i_alpha(s, x, u, v) one lattice
//! edge at a time with a midpoint (RK2) step. Nodes are filled level by
//! level; the predecessor of a node is chosen by a fixed axis policy, so
//! the sweep is deterministic. When the integrability conditions hold,
//! every predecessor choice agrees to second order in the spacing, and
//! [`path_independence_residual`] measures the actual disagreement.

use crate::error::{Error, Result};
use crate::exec;
use crate::gamespec::GameSpec;
use crate::lattice::{AxisPolicy, LatticePath, TimeLattice};

/// Piecewise-constant control assignment: one (u, v) sample pair per
/// lattice cell, stored as indices into the game's sample lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    u: Vec<u32>,
    v: Vec<u32>,
}

impl ControlField {
    /// The same pair on every cell.
    pub fn constant(lat: &TimeLattice, u_idx: usize, v_idx: usize) -> Self {
        let cells = lat.cell_count();
        ControlField { u: vec![u_idx as u32; cells], v: vec![v_idx as u32; cells] }
    }

    /// Per-cell pairs from a function of the cell multi-index.
    pub fn from_fn(lat: &TimeLattice, mut f: impl FnMut(&[usize]) -> (usize, usize)) -> Self {
        let cells = lat.cell_count();
        let mut u = Vec::with_capacity(cells);
        let mut v = Vec::with_capacity(cells);
        for c in 0..cells {
            let (ui, vi) = f(&lat.cell_multi(c));
            u.push(ui as u32);
            v.push(vi as u32);
        }
        ControlField { u, v }
    }

    pub fn get(&self, cell_idx: usize) -> (usize, usize) {
        (self.u[cell_idx] as usize, self.v[cell_idx] as usize)
    }

    pub fn validate(&self, spec: &GameSpec) -> Result<()> {
        let ok = self.u.iter().all(|&i| (i as usize) < spec.u_space().len())
            && self.v.iter().all(|&i| (i as usize) < spec.v_space().len());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDomain("control field references samples outside the control sets".into()))
        }
    }
}

/// The integrated state over all nodes of a sub-box of the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    start: Vec<usize>,
    end: Vec<usize>,
    n: usize,
    widths: Vec<usize>,
    data: Vec<f64>,
}

impl StateField {
    pub fn start(&self) -> &[usize] {
        &self.start
    }

    pub fn end(&self) -> &[usize] {
        &self.end
    }

    fn offset(&self, node: &[usize]) -> usize {
        let mut idx = 0;
        for (a, (&k, &s)) in node.iter().zip(&self.start).enumerate() {
            debug_assert!(k >= s && k <= self.end[a]);
            idx = idx * self.widths[a] + (k - s);
        }
        idx * self.n
    }

    /// State vector at a node of the sub-box.
    pub fn value(&self, node: &[usize]) -> &[f64] {
        let o = self.offset(node);
        &self.data[o..o + self.n]
    }

    /// Iterates node multi-indices of the sub-box in lexicographic order.
    pub fn nodes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = self.start.clone();
        loop {
            out.push(cur.clone());
            let mut a = cur.len();
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                cur[a] += 1;
                if cur[a] <= self.end[a] {
                    break;
                }
                cur[a] = self.start[a];
                if a == 0 {
                    return out;
                }
            }
        }
    }
}

/// One RK2 (midpoint) step from `x` at node `node` along `axis`, using the
/// controls of the cell the edge belongs to.
fn rk2_edge(
    spec: &GameSpec,
    lat: &TimeLattice,
    ctrl: &ControlField,
    node: &[usize],
    axis: usize,
    x: &[f64],
) -> Result<Vec<f64>> {
    let n = spec.n();
    let h = lat.spacing()[axis];
    let cell = lat.edge_cell(node, axis);
    let (ui, vi) = ctrl.get(lat.cell_index(&cell));
    let u = &spec.u_space().samples()[ui];
    let v = &spec.v_space().samples()[vi];

    let t = lat.node_coords(node);
    let mut k1 = vec![0.0; n];
    spec.dynamics_column(axis, &t, x, u, v, &mut k1)?;
    let x_mid: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k1[i]).collect();
    let mut t_mid = t;
    t_mid[axis] += 0.5 * h;
    let mut k2 = vec![0.0; n];
    spec.dynamics_column(axis, &t_mid, &x_mid, u, v, &mut k2)?;
    Ok((0..n).map(|i| x[i] + h * k2[i]).collect())
}

/// Integrates the m-flow from `x0` at `start` over the sub-box
/// `[start, end]`, sweeping diagonal levels upward. Each node is advanced
/// from the predecessor selected by `policy` (the public entry point uses
/// [`AxisPolicy::LowestFirst`]).
pub fn integrate_mflow_with_policy(
    spec: &GameSpec,
    lat: &TimeLattice,
    ctrl: &ControlField,
    start: &[usize],
    end: &[usize],
    x0: &[f64],
    policy: AxisPolicy,
) -> Result<StateField> {
    let m = spec.m();
    let n = spec.n();
    if start.len() != m || end.len() != m || start.iter().zip(end).any(|(s, e)| s > e) {
        return Err(Error::NotComparable(format!("{start:?} must be <= {end:?}")));
    }
    if end.iter().enumerate().any(|(a, &e)| e > lat.steps()[a]) {
        return Err(Error::InvalidDomain("sub-box exceeds the lattice".into()));
    }
    if x0.len() != n {
        return Err(Error::InvalidDomain(format!("initial state has dimension {}, expected {n}", x0.len())));
    }
    ctrl.validate(spec)?;

    let widths: Vec<usize> = (0..m).map(|a| end[a] - start[a] + 1).collect();
    let node_total: usize = widths.iter().product();
    let mut field = StateField {
        start: start.to_vec(),
        end: end.to_vec(),
        n,
        widths,
        data: vec![0.0; node_total * n],
    };

    // Group sub-box nodes by their diagonal level above the start corner.
    let base_level: usize = start.iter().sum();
    let top_level: usize = end.iter().sum();
    let mut levels: Vec<Vec<Vec<usize>>> = vec![Vec::new(); top_level - base_level + 1];
    for node in field.nodes() {
        let level: usize = node.iter().sum();
        levels[level - base_level].push(node);
    }

    {
        let o = field.offset(start);
        field.data[o..o + n].copy_from_slice(x0);
    }
    for level in levels.iter().skip(1) {
        let rows: Vec<Result<Vec<f64>>> = exec::map_slice_min(level, 64, |node| {
            let axis = pick_axis(node, start, policy);
            let mut pred = node.clone();
            pred[axis] -= 1;
            let x_pred = field.value(&pred);
            rk2_edge(spec, lat, ctrl, &pred, axis, x_pred)
        });
        for (node, row) in level.iter().zip(rows) {
            let row = row?;
            let o = field.offset(node);
            field.data[o..o + n].copy_from_slice(&row);
        }
    }
    Ok(field)
}

fn pick_axis(node: &[usize], start: &[usize], policy: AxisPolicy) -> usize {
    let it: Box<dyn Iterator<Item = usize>> = match policy {
        AxisPolicy::LowestFirst => Box::new(0..node.len()),
        AxisPolicy::HighestFirst => Box::new((0..node.len()).rev()),
    };
    for a in it {
        if node[a] > start[a] {
            return a;
        }
    }
    unreachable!("caller never asks for an axis at the start corner")
}

/// Integrates the m-flow with the default (lowest-axis) predecessor policy.
pub fn integrate_mflow(
    spec: &GameSpec,
    lat: &TimeLattice,
    ctrl: &ControlField,
    start: &[usize],
    end: &[usize],
    x0: &[f64],
) -> Result<StateField> {
    integrate_mflow_with_policy(spec, lat, ctrl, start, end, x0, AxisPolicy::LowestFirst)
}

/// Maximum node-wise distance between the fields integrated with the two
/// extreme axis policies. Small iff the flow is path-independent at the
/// grid resolution.
pub fn path_independence_residual(
    spec: &GameSpec,
    lat: &TimeLattice,
    ctrl: &ControlField,
    start: &[usize],
    end: &[usize],
    x0: &[f64],
) -> Result<f64> {
    let low = integrate_mflow_with_policy(spec, lat, ctrl, start, end, x0, AxisPolicy::LowestFirst)?;
    let high = integrate_mflow_with_policy(spec, lat, ctrl, start, end, x0, AxisPolicy::HighestFirst)?;
    let mut worst = 0.0f64;
    for node in low.nodes() {
        let a = low.value(&node);
        let b = high.value(&node);
        let d: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Bolza payoff split into its running and terminal parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffValue {
    pub total: f64,
    pub running_part: f64,
    pub terminal_part: f64,
}

/// Evaluates the payoff of `ctrl` from node `t_node` with state `x0`:
/// the running cost integrated with the midpoint rule over every cell of
/// the remaining box, plus the terminal cost at the far corner.
///
/// The state at a cell center is the average of the corner values of the
/// integrated field, which is the multilinear interpolant at the center.
pub fn payoff(
    spec: &GameSpec,
    lat: &TimeLattice,
    ctrl: &ControlField,
    t_node: &[usize],
    x0: &[f64],
) -> Result<PayoffValue> {
    let m = spec.m();
    let n = spec.n();
    let end: Vec<usize> = lat.steps().to_vec();
    let field = integrate_mflow(spec, lat, ctrl, t_node, &end, x0)?;

    // Enumerate remaining cells (lexicographic), integrate sequentially so
    // the sum is reproducible bit for bit.
    let cell_vol = lat.cell_volume();
    let mut running = 0.0;
    let mut cur: Vec<usize> = t_node.to_vec();
    let any_cell = t_node.iter().zip(lat.steps()).all(|(&k, &s)| k < s);
    if any_cell {
        loop {
            let center = lat.cell_center(&cur);
            // Average the 2^m corner states.
            let mut xc = vec![0.0; n];
            for corner in 0..(1usize << m) {
                let node: Vec<usize> = (0..m)
                    .map(|a| cur[a] + ((corner >> a) & 1))
                    .collect();
                let xv = field.value(&node);
                for i in 0..n {
                    xc[i] += xv[i];
                }
            }
            let scale = 1.0 / (1usize << m) as f64;
            for c in xc.iter_mut() {
                *c *= scale;
            }
            let (ui, vi) = ctrl.get(lat.cell_index(&cur));
            let u = &spec.u_space().samples()[ui];
            let v = &spec.v_space().samples()[vi];
            running += spec.running_cost(&center, &xc, u, v)? * cell_vol;

            let mut a = m;
            let mut done = false;
            loop {
                if a == 0 {
                    done = true;
                    break;
                }
                a -= 1;
                cur[a] += 1;
                if cur[a] < lat.steps()[a] {
                    break;
                }
                cur[a] = t_node[a];
                if a == 0 {
                    done = true;
                    break;
                }
            }
            if done {
                break;
            }
        }
    }

    let terminal = spec.terminal_cost(field.value(&end))?;
    Ok(PayoffValue { total: running + terminal, running_part: running, terminal_part: terminal })
}

/// Endpoint state obtained by stepping along the edges of a monotone path
/// with the same RK2 edge rule the full sweep uses.
pub fn curvilinear_state(
    spec: &GameSpec,
    lat: &TimeLattice,
    ctrl: &ControlField,
    path: &LatticePath,
    x0: &[f64],
) -> Result<Vec<f64>> {
    ctrl.validate(spec)?;
    let mut x = x0.to_vec();
    let nodes = path.nodes();
    for w in nodes.windows(2) {
        let (from, to) = (&w[0], &w[1]);
        let axis = (0..from.len())
            .find(|&a| to[a] == from[a] + 1)
            .ok_or_else(|| Error::NotComparable("path step must increment exactly one axis".into()))?;
        x = rk2_edge(spec, lat, ctrl, from, axis, &x)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{ScalarExpr, VarSpace};
    use crate::gamespec::{BoundConstants, ControlSpace, StateBox, VectorFieldFamily};
    use crate::lattice::{monotone_path, TimeBox};

    fn game(x1: &str, x2: &str, l: &str, g: &str, a: f64) -> GameSpec {
        let vs = VarSpace { m: 2, n: 1, p: 1, q: 1 };
        GameSpec::new(
            TimeBox::from_corners(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
            VectorFieldFamily::new(
                1,
                2,
                vec![ScalarExpr::parse(x1, vs).unwrap(), ScalarExpr::parse(x2, vs).unwrap()],
            )
            .unwrap(),
            ScalarExpr::parse(l, vs).unwrap(),
            ScalarExpr::parse(g, vs).unwrap(),
            ControlSpace::scalar_points(&[0.0]).unwrap(),
            ControlSpace::scalar_points(&[0.0]).unwrap(),
            BoundConstants { a: vec![a, a], b: 10.0, c: 10.0 },
            StateBox::new(vec![-10.0], vec![10.0]).unwrap(),
        )
        .unwrap()
    }

    fn lattice(n: usize) -> TimeLattice {
        TimeLattice::new(TimeBox::from_corners(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), vec![n, n]).unwrap()
    }

    #[test]
    fn zero_dynamics_keep_state_constant() {
        let spec = game("0", "0", "0", "0", 0.0);
        let lat = lattice(4);
        let ctrl = ControlField::constant(&lat, 0, 0);
        let field = integrate_mflow(&spec, &lat, &ctrl, &[0, 0], &[4, 4], &[1.5]).unwrap();
        for node in field.nodes() {
            assert_eq!(field.value(&node), &[1.5]);
        }
    }

    #[test]
    fn constant_dynamics_are_integrated_exactly() {
        let c = 0.75;
        let spec = game("0.75", "0.75", "0", "0", 1.0);
        let lat = lattice(4);
        let ctrl = ControlField::constant(&lat, 0, 0);
        let field = integrate_mflow(&spec, &lat, &ctrl, &[0, 0], &[4, 4], &[1.0]).unwrap();
        for node in field.nodes() {
            let t = lat.node_coords(&node);
            let exact = 1.0 + c * (t[0] + t[1]);
            assert!((field.value(&node)[0] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_flow_converges_to_exponential() {
        // x1' = x1 along both axes: x(s) = x0 * exp(s1 + s2).
        let spec = game("x1", "x1", "0", "0", 10.0);
        let exact = (2.0f64).exp();
        let mut prev_err = f64::INFINITY;
        for n in [8, 16, 32] {
            let lat = lattice(n);
            let ctrl = ControlField::constant(&lat, 0, 0);
            let field = integrate_mflow(&spec, &lat, &ctrl, &[0, 0], &[n, n], &[1.0]).unwrap();
            let err = (field.value(&[n, n])[0] - exact).abs();
            assert!(err < prev_err, "refinement must reduce the endpoint error");
            prev_err = err;
        }
        assert!(prev_err <= 0.01 * exact, "N=32 error {prev_err}");
    }

    #[test]
    fn path_residual_vanishes_for_constant_fields() {
        let spec = game("1", "2", "0", "0", 2.0);
        let lat = lattice(4);
        let ctrl = ControlField::constant(&lat, 0, 0);
        let r = path_independence_residual(&spec, &lat, &ctrl, &[0, 0], &[4, 4], &[0.0]).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn path_residual_exact_zero_for_identical_components() {
        // With X1 = X2 = x1 every edge applies the same scalar map, so the
        // two sweep orders compose identical operations and agree bitwise.
        let spec = game("x1", "x1", "0", "0", 10.0);
        for n in [8, 16, 32] {
            let lat = lattice(n);
            let ctrl = ControlField::constant(&lat, 0, 0);
            let r = path_independence_residual(&spec, &lat, &ctrl, &[0, 0], &[n, n], &[1.0]).unwrap();
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn path_residual_decays_for_commuting_distinct_pair() {
        // X1 = x^2 and X2 = 2x^2 have zero bracket (the flow is
        // path-independent) but distinct edge maps, so the discrete sweep
        // orders disagree at second order in the spacing.
        let spec = game("x1^2", "2*x1^2", "0", "0", 2.0);
        let mut residuals = Vec::new();
        for n in [8, 16, 32] {
            let lat = lattice(n);
            let ctrl = ControlField::constant(&lat, 0, 0);
            residuals.push(
                path_independence_residual(&spec, &lat, &ctrl, &[0, 0], &[n, n], &[0.25]).unwrap(),
            );
        }
        assert!(residuals[0] / residuals[1] > 2.8, "{residuals:?}");
        assert!(residuals[1] / residuals[2] > 3.2, "{residuals:?}");
        assert!(residuals[0] / residuals[2] > 10.0, "{residuals:?}");
    }

    #[test]
    fn path_residual_persists_when_cic_fails() {
        let spec = game("x1", "t1", "0", "0", 10.0);
        let lat = lattice(32);
        let ctrl = ControlField::constant(&lat, 0, 0);
        let r = path_independence_residual(&spec, &lat, &ctrl, &[0, 0], &[32, 32], &[1.0]).unwrap();
        assert!(r > 1e-2, "path dependence should not vanish, got {r}");
    }

    #[test]
    fn payoff_constant_running_cost_is_volume() {
        let spec = game("0", "0", "1", "0", 0.0);
        let lat = lattice(3);
        let ctrl = ControlField::constant(&lat, 0, 0);
        let p = payoff(&spec, &lat, &ctrl, &[0, 0], &[0.0]).unwrap();
        assert!((p.total - 1.0).abs() < 1e-12);
        assert_eq!(p.terminal_part, 0.0);
    }

    #[test]
    fn payoff_terminal_only() {
        let spec = game("0", "0", "0", "x1^2", 0.0);
        let lat = lattice(2);
        let ctrl = ControlField::constant(&lat, 0, 0);
        let p = payoff(&spec, &lat, &ctrl, &[0, 0], &[2.0]).unwrap();
        assert_eq!(p.total, 4.0);
        assert_eq!(p.running_part, 0.0);
    }

    #[test]
    fn payoff_frozen_state_running_cost() {
        // L = x1 with frozen state x = 3: the midpoint rule is exact.
        let spec = game("0", "0", "x1", "0", 0.0);
        let lat = lattice(4);
        let ctrl = ControlField::constant(&lat, 0, 0);
        let p = payoff(&spec, &lat, &ctrl, &[0, 0], &[3.0]).unwrap();
        assert!((p.total - 3.0).abs() < 1e-12);
    }

    #[test]
    fn payoff_from_face_node_has_no_running_part() {
        let spec = game("0", "0", "1", "x1", 0.0);
        let lat = lattice(2);
        let ctrl = ControlField::constant(&lat, 0, 0);
        let p = payoff(&spec, &lat, &ctrl, &[2, 1], &[0.5]).unwrap();
        assert_eq!(p.running_part, 0.0);
        assert_eq!(p.terminal_part, 0.5);
    }

    #[test]
    fn quadrature_error_decays_second_order() {
        // Frozen state with a smooth, separable running cost isolates the
        // midpoint rule: the exact integral is (1 - cos 1) sin 1 and the
        // error quarters per refinement.
        let spec = game("0", "0", "sin(t1)*cos(t2)", "0", 0.0);
        let exact = (1.0 - (1.0f64).cos()) * (1.0f64).sin();
        let mut errs = Vec::new();
        for n in [8, 16, 32] {
            let lat = lattice(n);
            let ctrl = ControlField::constant(&lat, 0, 0);
            let p = payoff(&spec, &lat, &ctrl, &[0, 0], &[0.0]).unwrap();
            errs.push((p.running_part - exact).abs());
        }
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
        assert!(errs[1] / errs[2] > 3.5, "{errs:?}");

        // Along the moving linear flow the combined integrator plus
        // quadrature error still trends at second order.
        let spec = game("x1", "x1", "x1", "0", 10.0);
        let exact = ((1.0f64).exp() - 1.0).powi(2);
        let mut errs = Vec::new();
        for n in [8, 16, 32] {
            let lat = lattice(n);
            let ctrl = ControlField::constant(&lat, 0, 0);
            let p = payoff(&spec, &lat, &ctrl, &[0, 0], &[1.0]).unwrap();
            errs.push((p.running_part - exact).abs());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(errs[0] / errs[2] > 6.0, "{errs:?}");
    }

    #[test]
    fn curvilinear_empty_path_returns_x0() {
        let spec = game("1", "1", "0", "0", 1.0);
        let lat = lattice(2);
        let ctrl = ControlField::constant(&lat, 0, 0);
        let path = monotone_path(&[1, 1], &[1, 1], AxisPolicy::LowestFirst).unwrap();
        let x = curvilinear_state(&spec, &lat, &ctrl, &path, &[0.25]).unwrap();
        assert_eq!(x, vec![0.25]);
    }

    #[test]
    fn curvilinear_constant_field_any_path() {
        let spec = game("0.5", "0.5", "0", "0", 1.0);
        let lat = lattice(1);
        let ctrl = ControlField::constant(&lat, 0, 0);
        for policy in [AxisPolicy::LowestFirst, AxisPolicy::HighestFirst] {
            let path = monotone_path(&[0, 0], &[1, 1], policy).unwrap();
            let x = curvilinear_state(&spec, &lat, &ctrl, &path, &[1.0]).unwrap();
            assert!((x[0] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn curvilinear_extreme_paths_agree_under_cic() {
        let spec = game("x1", "x1", "0", "0", 10.0);
        let lat = lattice(16);
        let ctrl = ControlField::constant(&lat, 0, 0);
        let exact = (2.0f64).exp();
        let mut endpoints = Vec::new();
        for policy in [AxisPolicy::LowestFirst, AxisPolicy::HighestFirst] {
            let path = monotone_path(&[0, 0], &[16, 16], policy).unwrap();
            endpoints.push(curvilinear_state(&spec, &lat, &ctrl, &path, &[1.0]).unwrap()[0]);
        }
        assert!((endpoints[0] - endpoints[1]).abs() < 5e-3);
        for e in endpoints {
            assert!((e - exact).abs() < 0.01 * exact);
        }
    }

    #[test]
    fn integration_is_deterministic() {
        let spec = game("x1 + t1", "x1*t2", "0", "0", 30.0);
        let lat = lattice(8);
        let ctrl = ControlField::constant(&lat, 0, 0);
        let a = integrate_mflow(&spec, &lat, &ctrl, &[0, 0], &[8, 8], &[0.7]).unwrap();
        let b = integrate_mflow(&spec, &lat, &ctrl, &[0, 0], &[8, 8], &[0.7]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn growth_bound_respects_declared_a() {
        let spec = game("x1", "x1", "0", "0", 10.0);
        let lat = lattice(8);
        let ctrl = ControlField::constant(&lat, 0, 0);
        let field = integrate_mflow(&spec, &lat, &ctrl, &[0, 0], &[8, 8], &[1.0]).unwrap();
        let a_bound = &spec.bounds().a;
        for node in field.nodes() {
            let t = lat.node_coords(&node);
            let drift = (field.value(&node)[0] - 1.0).abs();
            let allowed: f64 = (0..2).map(|al| a_bound[al] * t[al]).sum::<f64>() + 10.0 * lat.spacing()[0];
            assert!(drift <= allowed, "node {node:?}: {drift} > {allowed}");
        }
    }
}
