//! Lower and upper value functions by backward dynamic programming.
//!
//! Values live on the product of the time lattice and a uniform state
//! grid. The backward sweep runs over diagonal levels from the far corner
//! T down to 0 with a one-cell diagonal generator step: at a node t the
//! step advances every non-exhausted axis by one cell to t+h, charges the
//! running cost L(t, x, u, v) on the volume shell vol(B(t,T)) -
//! vol(B(t+h,T)) between the two remaining boxes, and continues from the
//! interpolated value at (t+h, x + sum_alpha X_alpha d^alpha). The shells
//! telescope, so the recursion accounts for the full multiple integral of
//! the running cost. On far faces the shell volume vanishes: from there
//! only the terminal cost (through the continued state) matters.
//!
//! Per cell, the lower value lets the minimizing team observe the current
//! u (max over u of min over v), the upper value is symmetric (min over v
//! of max over u). Ties break toward the lowest sample index.

use crate::error::{Error, Result};
use crate::exec;
use crate::gamespec::{GameSpec, StateBox};
use crate::lattice::TimeLattice;
use serde::Serialize;

/// Uniform grid over a state box with multilinear, boundary-clamped
/// interpolation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateGrid {
    domain: StateBox,
    nodes_per_axis: Vec<usize>,
    spacing: Vec<f64>,
}

impl StateGrid {
    pub fn new(domain: StateBox, nodes_per_axis: Vec<usize>) -> Result<Self> {
        if nodes_per_axis.len() != domain.dim() {
            return Err(Error::InvalidDomain("state grid dimension mismatch".into()));
        }
        if nodes_per_axis.contains(&0) {
            return Err(Error::InvalidDomain("state grid needs at least one node per axis".into()));
        }
        let spacing = nodes_per_axis
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                if k == 1 {
                    0.0
                } else {
                    (domain.hi()[i] - domain.lo()[i]) / (k - 1) as f64
                }
            })
            .collect();
        Ok(StateGrid { domain, nodes_per_axis, spacing })
    }

    pub fn dim(&self) -> usize {
        self.nodes_per_axis.len()
    }

    pub fn domain(&self) -> &StateBox {
        &self.domain
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes_per_axis
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis.iter().product()
    }

    pub fn node_multi(&self, mut idx: usize) -> Vec<usize> {
        let mut multi = vec![0usize; self.dim()];
        for i in (0..self.dim()).rev() {
            multi[i] = idx % self.nodes_per_axis[i];
            idx /= self.nodes_per_axis[i];
        }
        multi
    }

    pub fn node_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (i, &k) in multi.iter().enumerate() {
            idx = idx * self.nodes_per_axis[i] + k;
        }
        idx
    }

    pub fn node_coords(&self, idx: usize) -> Vec<f64> {
        let multi = self.node_multi(idx);
        multi
            .iter()
            .enumerate()
            .map(|(i, &k)| self.domain.lo()[i] + k as f64 * self.spacing[i])
            .collect()
    }

    /// Multilinear interpolation of nodal `values` at `x`, clamping the
    /// query to the grid box first.
    pub fn interp(&self, values: &[f64], x: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.node_count());
        let dim = self.dim();
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0f64; dim];
        for i in 0..dim {
            let xi = x[i].clamp(self.domain.lo()[i], self.domain.hi()[i]);
            if self.nodes_per_axis[i] == 1 || self.spacing[i] == 0.0 {
                base[i] = 0;
                frac[i] = 0.0;
                continue;
            }
            let rel = (xi - self.domain.lo()[i]) / self.spacing[i];
            let cell = (rel.floor() as usize).min(self.nodes_per_axis[i] - 2);
            base[i] = cell;
            frac[i] = (rel - cell as f64).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut weight = 1.0;
            let mut multi = base.clone();
            for i in 0..dim {
                if (corner >> i) & 1 == 1 {
                    weight *= frac[i];
                    multi[i] = (multi[i] + 1).min(self.nodes_per_axis[i] - 1);
                } else {
                    weight *= 1.0 - frac[i];
                }
            }
            if weight != 0.0 {
                acc += weight * values[self.node_index(&multi)];
            }
        }
        acc
    }
}

/// Which optimization order a value grid was built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ValueKind {
    /// max over u of min over v per cell.
    Lower,
    /// min over v of max over u per cell.
    Upper,
}

impl ValueKind {
    pub fn label(self) -> &'static str {
        match self {
            ValueKind::Lower => "lower",
            ValueKind::Upper => "upper",
        }
    }
}

/// A scalar field over (lattice node, state node) with the optimal control
/// pair recorded per cell. Entries at the terminal node carry the pair
/// (0, 0), which is meaningless there.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    kind: ValueKind,
    lat_steps: Vec<usize>,
    sgrid: StateGrid,
    values: Vec<f64>,
    controls: Vec<(u32, u32)>,
}

impl ValueGrid {
    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn state_grid(&self) -> &StateGrid {
        &self.sgrid
    }

    pub fn lat_steps(&self) -> &[usize] {
        &self.lat_steps
    }

    pub fn lat_node_count(&self) -> usize {
        self.lat_steps.iter().map(|&s| s + 1).product()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Nodal values at one lattice node, over all state nodes.
    pub fn layer(&self, lat_idx: usize) -> &[f64] {
        let ns = self.sgrid.node_count();
        &self.values[lat_idx * ns..(lat_idx + 1) * ns]
    }

    pub fn value(&self, lat_idx: usize, state_idx: usize) -> f64 {
        self.values[lat_idx * self.sgrid.node_count() + state_idx]
    }

    pub fn control_pair(&self, lat_idx: usize, state_idx: usize) -> (usize, usize) {
        let (u, v) = self.controls[lat_idx * self.sgrid.node_count() + state_idx];
        (u as usize, v as usize)
    }

    /// Interpolated value at an off-grid state.
    pub fn interp(&self, lat_idx: usize, x: &[f64]) -> f64 {
        self.sgrid.interp(self.layer(lat_idx), x)
    }
}

/// Feedback table: the optimizing team's best reply to each opponent
/// sample, per (lattice node, state node).
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTable {
    kind: ValueKind,
    opp_len: usize,
    state_nodes: usize,
    own: Vec<u32>,
}

impl StrategyTable {
    /// For a lower table: the v replying to u-sample `opp_idx`.
    /// For an upper table: the u replying to v-sample `opp_idx`.
    pub fn reply(&self, lat_idx: usize, state_idx: usize, opp_idx: usize) -> usize {
        self.own[(lat_idx * self.state_nodes + state_idx) * self.opp_len + opp_idx] as usize
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }
}

/// Per-(node, state) outcome of one step: the value, the optimal pair,
/// and the reply table row.
type StepOutcome = (f64, (u32, u32), Vec<u32>);

/// Axes a one-cell diagonal step advances from `node`: all axes that are
/// not yet exhausted.
fn advancing_axes(node: &[usize], steps: &[usize]) -> Vec<usize> {
    (0..node.len()).filter(|&a| node[a] < steps[a]).collect()
}

/// Per-(node, state) one-step optimization shared by the solvers and the
/// recursion residual. `continuation` maps a query state to the value at
/// the advanced lattice node.
#[allow(clippy::too_many_arguments)]
fn one_step<F>(
    spec: &GameSpec,
    lat: &TimeLattice,
    kind: ValueKind,
    t: &[f64],
    x: &[f64],
    adv: &[usize],
    shell: f64,
    continuation: F,
) -> Result<StepOutcome>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = spec.n();
    let u_samples = spec.u_space().samples();
    let v_samples = spec.v_space().samples();
    let spacing = lat.spacing();
    let mut col = vec![0.0; n];

    let mut payoff = |u: &[f64], v: &[f64]| -> Result<f64> {
        let mut xp = x.to_vec();
        for &alpha in adv {
            spec.dynamics_column(alpha, t, x, u, v, &mut col)?;
            for i in 0..n {
                xp[i] += spacing[alpha] * col[i];
            }
        }
        let run = if shell != 0.0 { spec.running_cost(t, x, u, v)? * shell } else { 0.0 };
        Ok(run + continuation(&xp)?)
    };

    match kind {
        ValueKind::Lower => {
            // max over u of min over v; the recorded replies are v per u.
            let mut replies = Vec::with_capacity(u_samples.len());
            let mut best_val = f64::NEG_INFINITY;
            let mut best_pair = (0u32, 0u32);
            for (ui, u) in u_samples.iter().enumerate() {
                let mut inner_val = f64::INFINITY;
                let mut inner_vi = 0u32;
                for (vi, v) in v_samples.iter().enumerate() {
                    let val = payoff(u, v)?;
                    if val < inner_val {
                        inner_val = val;
                        inner_vi = vi as u32;
                    }
                }
                replies.push(inner_vi);
                if inner_val > best_val {
                    best_val = inner_val;
                    best_pair = (ui as u32, inner_vi);
                }
            }
            Ok((best_val, best_pair, replies))
        }
        ValueKind::Upper => {
            let mut replies = Vec::with_capacity(v_samples.len());
            let mut best_val = f64::INFINITY;
            let mut best_pair = (0u32, 0u32);
            for (vi, v) in v_samples.iter().enumerate() {
                let mut inner_val = f64::NEG_INFINITY;
                let mut inner_ui = 0u32;
                for (ui, u) in u_samples.iter().enumerate() {
                    let val = payoff(u, v)?;
                    if val > inner_val {
                        inner_val = val;
                        inner_ui = ui as u32;
                    }
                }
                replies.push(inner_ui);
                if inner_val < best_val {
                    best_val = inner_val;
                    best_pair = (inner_ui, vi as u32);
                }
            }
            Ok((best_val, best_pair, replies))
        }
    }
}

fn solve(spec: &GameSpec, lat: &TimeLattice, sgrid: &StateGrid, kind: ValueKind) -> Result<(ValueGrid, StrategyTable)> {
    if sgrid.dim() != spec.n() || lat.dim() != spec.m() {
        return Err(Error::InvalidDomain("grid dimensions disagree with the game".into()));
    }
    let ns = sgrid.node_count();
    let nl = lat.node_count();
    let opp_len = match kind {
        ValueKind::Lower => spec.u_space().len(),
        ValueKind::Upper => spec.v_space().len(),
    };
    let mut values = vec![0.0f64; nl * ns];
    let mut controls = vec![(0u32, 0u32); nl * ns];
    let mut own = vec![0u32; nl * ns * opp_len];

    let levels = lat.diagonal_levels();
    // Terminal layer: the value is the terminal cost, exactly.
    {
        let t_idx = levels[0][0];
        let row: Vec<Result<f64>> =
            exec::map_indexed(ns, |s| spec.terminal_cost(&sgrid.node_coords(s)));
        for (s, v) in row.into_iter().enumerate() {
            values[t_idx * ns + s] = v?;
        }
    }

    for level in levels.iter().skip(1) {
        let results: Vec<Result<Vec<StepOutcome>>> = exec::map_slice(level, |&lat_idx| {
            let node = lat.node_multi(lat_idx);
            let t = lat.node_coords(&node);
            let adv = advancing_axes(&node, lat.steps());
            let mut next = node.clone();
            for &a in &adv {
                next[a] += 1;
            }
            let next_idx = lat.node_index(&next);
            let shell = lat.tail_volume(&node) - lat.tail_volume(&next);
            let next_layer = &values[next_idx * ns..(next_idx + 1) * ns];
            (0..ns)
                .map(|s| {
                    let x = sgrid.node_coords(s);
                    one_step(spec, lat, kind, &t, &x, &adv, shell, |xp| {
                        Ok(sgrid.interp(next_layer, xp))
                    })
                })
                .collect()
        });
        for (&lat_idx, rows) in level.iter().zip(results) {
            for (s, (val, pair, replies)) in rows?.into_iter().enumerate() {
                values[lat_idx * ns + s] = val;
                controls[lat_idx * ns + s] = pair;
                own[(lat_idx * ns + s) * opp_len..(lat_idx * ns + s + 1) * opp_len]
                    .copy_from_slice(&replies);
            }
        }
    }

    Ok((
        ValueGrid { kind, lat_steps: lat.steps().to_vec(), sgrid: sgrid.clone(), values, controls },
        StrategyTable { kind, opp_len, state_nodes: ns, own },
    ))
}

/// Computes the lower value grid: per cell, max over u-samples of min over
/// v-samples (the minimizing team observes the current u).
pub fn solve_lower(spec: &GameSpec, lat: &TimeLattice, sgrid: &StateGrid) -> Result<(ValueGrid, StrategyTable)> {
    solve(spec, lat, sgrid, ValueKind::Lower)
}

/// Computes the upper value grid: per cell, min over v-samples of max over
/// u-samples (the maximizing team observes the current v).
pub fn solve_upper(spec: &GameSpec, lat: &TimeLattice, sgrid: &StateGrid) -> Result<(ValueGrid, StrategyTable)> {
    solve(spec, lat, sgrid, ValueKind::Upper)
}

/// Report of [`dpp_residual`].
#[derive(Debug, Clone, Serialize)]
pub struct DppReport {
    pub kind: ValueKind,
    pub h_cells: usize,
    pub tested: usize,
    pub max_residual: f64,
    pub worst_node: Option<Vec<usize>>,
    pub worst_state: Option<usize>,
}

/// Exact multi-step optimum: composes `depth` one-cell steps, evaluating
/// inner continuations recursively at the exact query states; only the
/// base layer reads the stored grid through interpolation.
fn composed_rhs(
    spec: &GameSpec,
    lat: &TimeLattice,
    vg: &ValueGrid,
    node: &[usize],
    x: &[f64],
    depth: usize,
) -> Result<f64> {
    let lat_idx = lat.node_index(node);
    if depth == 0 {
        return Ok(vg.interp(lat_idx, x));
    }
    let adv = advancing_axes(node, lat.steps());
    if adv.is_empty() {
        return Ok(vg.interp(lat_idx, x));
    }
    let t = lat.node_coords(node);
    let mut next = node.to_vec();
    for &a in &adv {
        next[a] += 1;
    }
    let shell = lat.tail_volume(node) - lat.tail_volume(&next);
    let (val, _, _) = one_step(spec, lat, vg.kind(), &t, x, &adv, shell, |xp| {
        composed_rhs(spec, lat, vg, &next, xp, depth - 1)
    })?;
    Ok(val)
}

/// Compares the stored value against the recomputed right-hand side of the
/// recursion over `h_cells` diagonal steps, at every lattice node with
/// full diagonal room (stride-subsampled to `budget` points when the
/// product with the state grid is larger; a budget of 0 tests everything).
pub fn dpp_residual(
    spec: &GameSpec,
    lat: &TimeLattice,
    sgrid: &StateGrid,
    vg: &ValueGrid,
    h_cells: usize,
    budget: usize,
) -> Result<DppReport> {
    if h_cells == 0 {
        return Err(Error::InvalidDomain("h_cells must be at least 1".into()));
    }
    let ns = sgrid.node_count();
    let mut queries: Vec<(usize, usize)> = Vec::new();
    for lat_idx in 0..lat.node_count() {
        let node = lat.node_multi(lat_idx);
        if node.iter().enumerate().all(|(a, &k)| k + h_cells <= lat.steps()[a]) {
            for s in 0..ns {
                queries.push((lat_idx, s));
            }
        }
    }
    if queries.len() > budget && budget > 0 {
        // Deterministic stride subsample.
        let stride = queries.len().div_ceil(budget);
        queries = queries.into_iter().step_by(stride).collect();
    }

    let residuals: Vec<Result<f64>> = exec::map_slice(&queries, |&(lat_idx, s)| {
        let node = lat.node_multi(lat_idx);
        let x = sgrid.node_coords(s);
        let rhs = composed_rhs(spec, lat, vg, &node, &x, h_cells)?;
        Ok((rhs - vg.value(lat_idx, s)).abs())
    });

    let mut report = DppReport {
        kind: vg.kind(),
        h_cells,
        tested: queries.len(),
        max_residual: 0.0,
        worst_node: None,
        worst_state: None,
    };
    for (&(lat_idx, s), r) in queries.iter().zip(residuals) {
        let r = r?;
        if r > report.max_residual {
            report.max_residual = r;
            report.worst_node = Some(lat.node_multi(lat_idx));
            report.worst_state = Some(s);
        }
    }
    Ok(report)
}

/// Report of [`certify_value_bounds`].
#[derive(Debug, Clone, Serialize)]
pub struct ValueBoundsReport {
    /// D = C vol(domain) + B from the declared constants.
    pub d: f64,
    /// E = C from the declared constants.
    pub e: f64,
    pub max_abs_lower: f64,
    pub max_abs_upper: f64,
    pub bounded: bool,
    pub pairs_tested: usize,
    pub continuity_violations: usize,
    /// Smallest slack of the continuity estimate over the sampled pairs
    /// (negative means a violation of that magnitude).
    pub worst_margin: f64,
    pub worst_pair: Option<ContinuityPair>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityPair {
    pub kind: ValueKind,
    pub t1: Vec<usize>,
    pub t2: Vec<usize>,
    pub x1: usize,
    pub x2: usize,
    pub difference: f64,
    pub allowed: f64,
}

/// Checks |value| <= D everywhere and the sampled continuity estimate
/// |V(t1,x1) - V(t2,x2)| <= E vol(B(t1,t2)) + D ||x1 - x2|| over random
/// comparable node pairs, for both grids.
pub fn certify_value_bounds(
    spec: &GameSpec,
    lat: &TimeLattice,
    sgrid: &StateGrid,
    lower: &ValueGrid,
    upper: &ValueGrid,
    pairs: usize,
    seed: u64,
) -> Result<ValueBoundsReport> {
    use rand::Rng;
    use rand::SeedableRng;
    let bounds = spec.bounds();
    let d = bounds.c * lat.domain().volume() + bounds.b;
    let e = bounds.c;

    let max_abs = |vg: &ValueGrid| vg.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_abs_lower = max_abs(lower);
    let max_abs_upper = max_abs(upper);
    let bounded = max_abs_lower <= d + 1e-9 && max_abs_upper <= d + 1e-9;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let nl = lat.node_count();
    let ns = sgrid.node_count();
    let mut violations = 0usize;
    let mut worst_margin = f64::INFINITY;
    let mut worst_pair = None;
    for _ in 0..pairs {
        let a = lat.node_multi(rng.random_range(0..nl));
        let b = lat.node_multi(rng.random_range(0..nl));
        // Componentwise meet/join: always a comparable pair.
        let t1: Vec<usize> = a.iter().zip(&b).map(|(&p, &q)| p.min(q)).collect();
        let t2: Vec<usize> = a.iter().zip(&b).map(|(&p, &q)| p.max(q)).collect();
        let x1 = rng.random_range(0..ns);
        let x2 = rng.random_range(0..ns);
        let c1 = lat.node_coords(&t1);
        let c2 = lat.node_coords(&t2);
        let vol: f64 = c1.iter().zip(&c2).map(|(p, q)| q - p).product();
        let xc1 = sgrid.node_coords(x1);
        let xc2 = sgrid.node_coords(x2);
        let dist: f64 = xc1.iter().zip(&xc2).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let allowed = e * vol + d * dist;
        for vg in [lower, upper] {
            let i1 = lat.node_index(&t1);
            let i2 = lat.node_index(&t2);
            let diff = (vg.value(i1, x1) - vg.value(i2, x2)).abs();
            let margin = allowed - diff;
            if margin < worst_margin {
                worst_margin = margin;
                worst_pair = Some(ContinuityPair {
                    kind: vg.kind(),
                    t1: t1.clone(),
                    t2: t2.clone(),
                    x1,
                    x2,
                    difference: diff,
                    allowed,
                });
            }
            if diff > allowed + 1e-9 {
                violations += 1;
            }
        }
    }

    Ok(ValueBoundsReport {
        d,
        e,
        max_abs_lower,
        max_abs_upper,
        bounded,
        pairs_tested: pairs,
        continuity_violations: violations,
        worst_margin,
        worst_pair,
    })
}

/// Worst gap between the tail volume at a node and the sum of the one-cell
/// diagonal sub-box plus the tail volume at the advanced node. For m >= 2
/// the diagonal cell and the advanced tail do not tile the remaining box;
/// this diagnostic quantifies the L-shaped remainder the telescoping shell
/// accounts for.
pub fn volume_split_diagnostic(lat: &TimeLattice) -> f64 {
    let mut worst = 0.0f64;
    for lat_idx in 0..lat.node_count() {
        let node = lat.node_multi(lat_idx);
        if node.iter().enumerate().all(|(a, &k)| k < lat.steps()[a]) {
            let next: Vec<usize> = node.iter().map(|&k| k + 1).collect();
            let gap = lat.tail_volume(&node) - lat.cell_volume() - lat.tail_volume(&next);
            worst = worst.max(gap);
        }
    }
    worst
}
