//! Monotone marching solver for the divergence-type Hamilton-Jacobi PDEs
//! satisfied by generating vector fields.
//!
//! The unknown is an m-component field M^alpha(t, x) with terminal data
//! M^alpha(T, x) = g^alpha(x), constrained through its time divergence:
//!
//! ```text
//! sum_alpha dM^alpha/dt^alpha + H(t, x, dM/dx) = 0
//! ```
//!
//! The divergence pins only the sum of the time derivatives, so a gauge
//! must pick the individual components. We march a single scalar w with
//! time-constant per-component offsets c^alpha(x) = g^alpha(x) - mean(g),
//! i.e. M^alpha = w + c^alpha; when all g^alpha agree (the equal-components
//! gauge, default split g/m) the offsets vanish and M^alpha = w.
//!
//! Per marched node, w is the spacing-weighted average of the
//! already-computed neighbor layers plus the scaled Lax-Friedrichs
//! increment built from one-sided state differences. The dissipation term
//! theta enters with the sign that makes the update nondecreasing in each
//! neighbor value; with theta at or above the sampled gradient bound of H
//! and the step constraint satisfied, the update is monotone.

use crate::error::{Error, Result};
use crate::exec;
use crate::expr::{EvalEnv, ScalarExpr};
use crate::flow::{integrate_mflow, ControlField};
use crate::gamespec::GameSpec;
use crate::hamiltonian::{CostateMatrix, HamiltonianEval};
use crate::lattice::TimeLattice;
use crate::values::{StateGrid, ValueGrid};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Which lattice layer carries the data the march starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TerminalLayer {
    /// Data on the far corner layer t = T, marching toward 0.
    Far,
    /// Data on the origin layer t = 0, marching toward T.
    Origin,
}

/// Gauge tag recorded in solved fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Gauge {
    /// All components equal one marched scalar.
    EqualComponents,
    /// Components differ by time-constant offsets from the terminal data.
    OffsetComponents,
}

/// Scheme knobs.
#[derive(Debug, Clone)]
pub struct PdeSchemeConfig {
    /// Per-state-axis dissipation coefficients; `None` auto-estimates
    /// `theta_margin` times the sampled gradient bound of H.
    pub theta: Option<Vec<f64>>,
    /// Step-constraint safety factor in (0, 1].
    pub sigma: f64,
    pub terminal: TerminalLayer,
    pub theta_margin: f64,
    pub theta_samples: usize,
    pub theta_seed: u64,
}

impl Default for PdeSchemeConfig {
    fn default() -> Self {
        PdeSchemeConfig {
            theta: None,
            sigma: 1.0,
            terminal: TerminalLayer::Far,
            theta_margin: 1.5,
            theta_samples: 128,
            theta_seed: 0,
        }
    }
}

/// Solved m-component field on (lattice node, state node).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingField {
    lat_steps: Vec<usize>,
    sgrid: StateGrid,
    m: usize,
    w: Vec<f64>,
    offsets: Vec<f64>,
    gauge: Gauge,
    terminal: TerminalLayer,
    theta: Vec<f64>,
}

impl GeneratingField {
    pub fn gauge(&self) -> Gauge {
        self.gauge
    }

    pub fn terminal_layer(&self) -> TerminalLayer {
        self.terminal
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn state_grid(&self) -> &StateGrid {
        &self.sgrid
    }

    pub fn lat_steps(&self) -> &[usize] {
        &self.lat_steps
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn scalar(&self, lat_idx: usize, state_idx: usize) -> f64 {
        self.w[lat_idx * self.sgrid.node_count() + state_idx]
    }

    /// Component M^alpha at a grid point.
    pub fn component(&self, alpha: usize, lat_idx: usize, state_idx: usize) -> f64 {
        let ns = self.sgrid.node_count();
        self.w[lat_idx * ns + state_idx] + self.offsets[alpha * ns + state_idx]
    }

    /// Component M^alpha interpolated at an off-grid state.
    pub fn component_interp(&self, alpha: usize, lat_idx: usize, x: &[f64]) -> f64 {
        let ns = self.sgrid.node_count();
        let w = self.sgrid.interp(&self.w[lat_idx * ns..(lat_idx + 1) * ns], x);
        let c = self.sgrid.interp(&self.offsets[alpha * ns..(alpha + 1) * ns], x);
        w + c
    }

    fn data_layer_index(&self, lat: &TimeLattice) -> usize {
        match self.terminal {
            TerminalLayer::Far => lat.node_index(&self.lat_steps),
            TerminalLayer::Origin => lat.node_index(&vec![0; self.m]),
        }
    }

    /// The scalar the field generates at the data layer: the sum of the
    /// components there.
    pub fn scalar_terminal(&self, lat: &TimeLattice, x: &[f64]) -> f64 {
        let t_idx = self.data_layer_index(lat);
        (0..self.m).map(|alpha| self.component_interp(alpha, t_idx, x)).sum()
    }
}

/// Splits a scalar terminal cost evenly over the m components.
pub fn equal_split_terminal(g: &ScalarExpr, m: usize) -> Vec<ScalarExpr> {
    (0..m).map(|_| g.scaled(1.0 / m as f64)).collect()
}

fn eval_terminal(g: &ScalarExpr, x: &[f64]) -> Result<f64> {
    let vars = g.vars();
    let t = vec![0.0; vars.m];
    let u = vec![0.0; vars.p];
    let v = vec![0.0; vars.q];
    g.eval(&EvalEnv::new(&t, x, &u, &v))
}

/// One-sided state differences of `layer` at node `s`, written into
/// `(d_minus, d_plus)` per axis. At box faces the single available
/// difference serves both sides.
fn one_sided_diffs(
    sgrid: &StateGrid,
    layer: &[f64],
    s_multi: &[usize],
    d_minus: &mut [f64],
    d_plus: &mut [f64],
) {
    let dim = sgrid.dim();
    let here = sgrid.node_index(s_multi);
    for i in 0..dim {
        let nodes = sgrid.nodes_per_axis()[i];
        let h = sgrid.spacing()[i];
        if nodes == 1 || h == 0.0 {
            d_minus[i] = 0.0;
            d_plus[i] = 0.0;
            continue;
        }
        let mut nb = s_multi.to_vec();
        let up = if s_multi[i] + 1 < nodes {
            nb[i] = s_multi[i] + 1;
            let v = (layer[sgrid.node_index(&nb)] - layer[here]) / h;
            nb[i] = s_multi[i];
            Some(v)
        } else {
            None
        };
        let down = if s_multi[i] > 0 {
            nb[i] = s_multi[i] - 1;
            let v = (layer[here] - layer[sgrid.node_index(&nb)]) / h;
            nb[i] = s_multi[i];
            Some(v)
        } else {
            None
        };
        match (down, up) {
            (Some(dm), Some(dp)) => {
                d_minus[i] = dm;
                d_plus[i] = dp;
            }
            (Some(dm), None) => {
                d_minus[i] = dm;
                d_plus[i] = dm;
            }
            (None, Some(dp)) => {
                d_minus[i] = dp;
                d_plus[i] = dp;
            }
            (None, None) => {
                d_minus[i] = 0.0;
                d_plus[i] = 0.0;
            }
        }
    }
}

/// Central-difference gradients of the per-component offsets,
/// flattened as [alpha][i][state node].
fn offset_gradients(sgrid: &StateGrid, offsets: &[f64], m: usize) -> Vec<f64> {
    let ns = sgrid.node_count();
    let n = sgrid.dim();
    let mut out = vec![0.0; m * n * ns];
    let mut dm = vec![0.0; n];
    let mut dp = vec![0.0; n];
    for alpha in 0..m {
        let layer = &offsets[alpha * ns..(alpha + 1) * ns];
        for s in 0..ns {
            let multi = sgrid.node_multi(s);
            one_sided_diffs(sgrid, layer, &multi, &mut dm, &mut dp);
            for i in 0..n {
                out[(alpha * n + i) * ns + s] = 0.5 * (dm[i] + dp[i]);
            }
        }
    }
    out
}

/// Sampled bound on |dH/dp_i| along synchronized-column costates, per
/// state axis.
#[allow(clippy::too_many_arguments)]
fn sample_gradient_bound(
    h: &HamiltonianEval,
    lat: &TimeLattice,
    sgrid: &StateGrid,
    dc: &[f64],
    m: usize,
    radius: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = sgrid.dim();
    let ns = sgrid.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bound = vec![0.0f64; n];
    let build = |q: &[f64], s: usize| -> CostateMatrix {
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            for alpha in 0..m {
                data[i * m + alpha] = q[i] + dc[(alpha * n + i) * ns + s];
            }
        }
        CostateMatrix::new(n, m, data).expect("finite costate")
    };
    for _ in 0..samples {
        let t: Vec<f64> = (0..lat.dim())
            .map(|a| {
                let lo = lat.domain().lo()[a];
                let hi = lat.domain().hi()[a];
                rng.random_range(lo..=hi)
            })
            .collect();
        let s = rng.random_range(0..ns);
        let x = sgrid.node_coords(s);
        let q: Vec<f64> = (0..n).map(|i| rng.random_range(-radius[i]..=radius[i])).collect();
        let base = h.eval(&t, &x, &build(&q, s))?;
        for i in 0..n {
            let eps = 1e-4 * (1.0 + q[i].abs());
            let mut qp = q.clone();
            qp[i] += eps;
            let shifted = h.eval(&t, &x, &build(&qp, s))?;
            bound[i] = bound[i].max((shifted - base).abs() / eps);
        }
    }
    Ok(bound)
}

/// Solves the divergence-type PDE for the generating field of `h` with
/// terminal components `g_terminal` (length m).
pub fn solve_dhjiu(
    h: &HamiltonianEval,
    g_terminal: &[ScalarExpr],
    lat: &TimeLattice,
    sgrid: &StateGrid,
    cfg: &PdeSchemeConfig,
) -> Result<GeneratingField> {
    let m = lat.dim();
    let n = sgrid.dim();
    if g_terminal.len() != m {
        return Err(Error::InvalidDomain(format!(
            "terminal data needs {m} components, got {}",
            g_terminal.len()
        )));
    }
    if cfg.sigma <= 0.0 || cfg.sigma > 1.0 {
        return Err(Error::InvalidDomain("sigma must lie in (0, 1]".into()));
    }
    let ns = sgrid.node_count();
    let nl = lat.node_count();

    // Terminal layers per component; the marched scalar starts from their
    // mean and the offsets carry the rest.
    let mut component_terminal = vec![0.0; m * ns];
    for (alpha, g) in g_terminal.iter().enumerate() {
        for s in 0..ns {
            component_terminal[alpha * ns + s] = eval_terminal(g, &sgrid.node_coords(s))?;
        }
    }
    let mut w_terminal = vec![0.0; ns];
    for s in 0..ns {
        w_terminal[s] = (0..m).map(|a| component_terminal[a * ns + s]).sum::<f64>() / m as f64;
    }
    let mut offsets = vec![0.0; m * ns];
    let mut gauge = Gauge::EqualComponents;
    for alpha in 0..m {
        for s in 0..ns {
            let c = component_terminal[alpha * ns + s] - w_terminal[s];
            offsets[alpha * ns + s] = c;
            if c != 0.0 {
                gauge = Gauge::OffsetComponents;
            }
        }
    }
    let dc = offset_gradients(sgrid, &offsets, m);

    // Dissipation coefficients.
    let mut grad_radius = vec![0.0f64; n];
    {
        let mut dm = vec![0.0; n];
        let mut dp = vec![0.0; n];
        for s in 0..ns {
            let multi = sgrid.node_multi(s);
            one_sided_diffs(sgrid, &w_terminal, &multi, &mut dm, &mut dp);
            for i in 0..n {
                grad_radius[i] = grad_radius[i].max(dm[i].abs()).max(dp[i].abs());
            }
        }
        for r in grad_radius.iter_mut() {
            *r = 1.5 * *r + 1e-3;
        }
    }
    let sampled_bound =
        sample_gradient_bound(h, lat, sgrid, &dc, m, &grad_radius, cfg.theta_samples, cfg.theta_seed)?;
    let theta: Vec<f64> = match &cfg.theta {
        Some(user) => {
            if user.len() != n {
                return Err(Error::InvalidDomain("theta needs one entry per state axis".into()));
            }
            for i in 0..n {
                if user[i] + 1e-12 < sampled_bound[i] {
                    return Err(Error::MonotonicityViolated(format!(
                        "theta[{i}] = {} is below the sampled gradient bound {}",
                        user[i], sampled_bound[i]
                    )));
                }
            }
            user.clone()
        }
        None => sampled_bound.iter().map(|b| cfg.theta_margin * b).collect(),
    };

    // Step constraint: the marched-layer coefficient must stay nonnegative
    // for every subset of advancing axes that can occur.
    let spacing = lat.spacing();
    let mut delta_max = 0.0f64;
    for mask in 1usize..(1 << m) {
        let mut inv = 0.0;
        let mut count = 0usize;
        for (alpha, &d) in spacing.iter().enumerate() {
            if (mask >> alpha) & 1 == 1 {
                inv += 1.0 / d;
                count += 1;
            }
        }
        delta_max = delta_max.max(count as f64 / m as f64 / inv);
    }
    let diffusion: f64 = (0..n)
        .filter(|&i| sgrid.spacing()[i] > 0.0)
        .map(|i| theta[i] / sgrid.spacing()[i])
        .sum();
    if delta_max * diffusion > cfg.sigma + 1e-12 {
        return Err(Error::MonotonicityViolated(format!(
            "step constraint violated: delta * sum(theta/h) = {} > sigma = {}; refine the time lattice",
            delta_max * diffusion,
            cfg.sigma
        )));
    }

    // H enters with + when marching down from T and with - when marching
    // up from 0; the dissipation keeps the same stabilizing sign.
    let dir = match cfg.terminal {
        TerminalLayer::Far => 1.0,
        TerminalLayer::Origin => -1.0,
    };

    let mut w = vec![0.0f64; nl * ns];
    let levels = lat.diagonal_levels();
    let ordered: Vec<&Vec<usize>> = match cfg.terminal {
        TerminalLayer::Far => levels.iter().collect(),
        TerminalLayer::Origin => levels.iter().rev().collect(),
    };
    {
        let data_idx = match cfg.terminal {
            TerminalLayer::Far => lat.node_index(lat.steps()),
            TerminalLayer::Origin => lat.node_index(&vec![0; m]),
        };
        w[data_idx * ns..(data_idx + 1) * ns].copy_from_slice(&w_terminal);
    }

    for level in ordered.iter().skip(1) {
        let rows: Vec<Result<Vec<f64>>> = exec::map_slice(level, |&lat_idx| {
            let node = lat.node_multi(lat_idx);
            let t = lat.node_coords(&node);
            let adv: Vec<usize> = (0..m)
                .filter(|&a| match cfg.terminal {
                    TerminalLayer::Far => node[a] < lat.steps()[a],
                    TerminalLayer::Origin => node[a] > 0,
                })
                .collect();
            debug_assert!(!adv.is_empty());
            // Spacing-weighted average of the already-computed layers.
            let lambda: f64 = adv.iter().map(|&a| 1.0 / spacing[a]).sum();
            let delta = adv.len() as f64 / m as f64 / lambda;
            let mut bar = vec![0.0f64; ns];
            for &a in &adv {
                let mut nb = node.clone();
                match cfg.terminal {
                    TerminalLayer::Far => nb[a] += 1,
                    TerminalLayer::Origin => nb[a] -= 1,
                }
                let nb_idx = lat.node_index(&nb);
                let weight = 1.0 / spacing[a] / lambda;
                for s in 0..ns {
                    bar[s] += weight * w[nb_idx * ns + s];
                }
            }

            let mut row = vec![0.0f64; ns];
            let mut dm = vec![0.0; n];
            let mut dp = vec![0.0; n];
            for s in 0..ns {
                let s_multi = sgrid.node_multi(s);
                one_sided_diffs(sgrid, &bar, &s_multi, &mut dm, &mut dp);
                let mut data = vec![0.0; n * m];
                for i in 0..n {
                    let q = 0.5 * (dm[i] + dp[i]);
                    for alpha in 0..m {
                        data[i * m + alpha] = q + dc[(alpha * n + i) * ns + s];
                    }
                }
                let p = CostateMatrix::new(n, m, data)?;
                let x = sgrid.node_coords(s);
                let ham = h.eval(&t, &x, &p)?;
                let dissipation: f64 = (0..n).map(|i| 0.5 * theta[i] * (dp[i] - dm[i])).sum();
                row[s] = bar[s] + delta * (dir * ham + dissipation);
            }
            Ok(row)
        });
        for (&lat_idx, row) in level.iter().zip(rows) {
            w[lat_idx * ns..(lat_idx + 1) * ns].copy_from_slice(&row?);
        }
    }

    Ok(GeneratingField {
        lat_steps: lat.steps().to_vec(),
        sgrid: sgrid.clone(),
        m,
        w,
        offsets,
        gauge,
        terminal: cfg.terminal,
        theta,
    })
}

/// Residuals of a solved field.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    /// Max |sum_alpha dM^alpha/dt^alpha + H| over interior grid points,
    /// with central differences in time and state.
    pub max_pde_residual: f64,
    /// Max |M^alpha(T, x) - g^alpha(x)| on the data layer.
    pub max_terminal_mismatch: f64,
    /// Filled by [`generating_residual`] when run; `None` otherwise.
    pub generating_identity_residual: Option<f64>,
}

/// Central-difference PDE residual at interior (lattice, state) nodes,
/// plus the terminal mismatch against `g_terminal`.
pub fn pde_residual(
    field: &GeneratingField,
    h: &HamiltonianEval,
    lat: &TimeLattice,
    g_terminal: &[ScalarExpr],
) -> Result<ResidualReport> {
    let m = field.m;
    let sgrid = &field.sgrid;
    let n = sgrid.dim();
    let ns = sgrid.node_count();

    let interior_lattice: Vec<usize> = (0..lat.node_count())
        .filter(|&idx| {
            let node = lat.node_multi(idx);
            node.iter().enumerate().all(|(a, &k)| k > 0 && k < lat.steps()[a])
        })
        .collect();

    let residuals: Vec<Result<f64>> = exec::map_slice(&interior_lattice, |&lat_idx| {
        let node = lat.node_multi(lat_idx);
        let t = lat.node_coords(&node);
        let mut worst = 0.0f64;
        for s in 0..ns {
            let s_multi = sgrid.node_multi(s);
            if s_multi
                .iter()
                .enumerate()
                .any(|(i, &k)| k == 0 || k + 1 == sgrid.nodes_per_axis()[i])
            {
                continue;
            }
            // Time divergence by central differences; the offsets are
            // time-constant so the scalar carries it all.
            let mut div = 0.0;
            for alpha in 0..m {
                let mut fwd = node.clone();
                fwd[alpha] += 1;
                let mut bwd = node.clone();
                bwd[alpha] -= 1;
                div += (field.scalar(lat.node_index(&fwd), s) - field.scalar(lat.node_index(&bwd), s))
                    / (2.0 * lat.spacing()[alpha]);
            }
            // State Jacobian by central differences per component.
            let mut data = vec![0.0; n * m];
            for i in 0..n {
                let mut up = s_multi.clone();
                up[i] += 1;
                let mut down = s_multi.clone();
                down[i] -= 1;
                let su = sgrid.node_index(&up);
                let sd = sgrid.node_index(&down);
                let hi = 2.0 * sgrid.spacing()[i];
                for alpha in 0..m {
                    data[i * m + alpha] =
                        (field.component(alpha, lat_idx, su) - field.component(alpha, lat_idx, sd)) / hi;
                }
            }
            let p = CostateMatrix::new(n, m, data)?;
            let x = sgrid.node_coords(s);
            worst = worst.max((div + h.eval(&t, &x, &p)?).abs());
        }
        Ok(worst)
    });

    let mut max_pde_residual = 0.0f64;
    for r in residuals {
        max_pde_residual = max_pde_residual.max(r?);
    }

    let data_idx = field.data_layer_index(lat);
    let mut max_terminal_mismatch = 0.0f64;
    for (alpha, g) in g_terminal.iter().enumerate() {
        for s in 0..ns {
            let expect = eval_terminal(g, &sgrid.node_coords(s))?;
            max_terminal_mismatch =
                max_terminal_mismatch.max((field.component(alpha, data_idx, s) - expect).abs());
        }
    }

    Ok(ResidualReport { max_pde_residual, max_terminal_mismatch, generating_identity_residual: None })
}

/// Integral of the total divergence D_alpha M^alpha along the controlled
/// flow over the box [t_node, T], by midpoint quadrature; also returns the
/// endpoint state.
fn divergence_integral(
    field: &GeneratingField,
    spec: &GameSpec,
    lat: &TimeLattice,
    ctrl: &ControlField,
    t_node: &[usize],
    x0: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let m = field.m;
    let n = spec.n();
    let sgrid = &field.sgrid;
    let end: Vec<usize> = lat.steps().to_vec();
    let state = integrate_mflow(spec, lat, ctrl, t_node, &end, x0)?;

    let mut integral = 0.0;
    let any_cell = t_node.iter().zip(lat.steps()).all(|(&k, &s)| k < s);
    if any_cell {
        let cell_vol = lat.cell_volume();
        let mut cur = t_node.to_vec();
        let mut col = vec![0.0; n];
        loop {
            let center = lat.cell_center(&cur);
            // State at the cell center: corner average of the flow.
            let mut xc = vec![0.0; n];
            for corner in 0..(1usize << m) {
                let node: Vec<usize> = (0..m).map(|a| cur[a] + ((corner >> a) & 1)).collect();
                for (i, xi) in state.value(&node).iter().enumerate() {
                    xc[i] += xi;
                }
            }
            for xi in xc.iter_mut() {
                *xi /= (1usize << m) as f64;
            }
            let (ui, vi) = ctrl.get(lat.cell_index(&cur));
            let u = &spec.u_space().samples()[ui];
            let v = &spec.v_space().samples()[vi];

            let mut div = 0.0;
            for alpha in 0..m {
                // Time part: forward/backward corner averages across the
                // cell, interpolated at the center state.
                let mut fwd = 0.0;
                let mut bwd = 0.0;
                for corner in 0..(1usize << m) {
                    let node: Vec<usize> = (0..m).map(|a| cur[a] + ((corner >> a) & 1)).collect();
                    let val = field.component_interp(alpha, lat.node_index(&node), &xc);
                    if (corner >> alpha) & 1 == 1 {
                        fwd += val;
                    } else {
                        bwd += val;
                    }
                }
                let half = (1usize << (m - 1)) as f64;
                div += (fwd - bwd) / half / lat.spacing()[alpha];

                // State part: central differences of the time-centered
                // component, times the dynamics.
                spec.dynamics_column(alpha, &center, &xc, u, v, &mut col)?;
                let centered = |x: &[f64]| -> f64 {
                    let mut acc = 0.0;
                    for corner in 0..(1usize << m) {
                        let node: Vec<usize> = (0..m).map(|a| cur[a] + ((corner >> a) & 1)).collect();
                        acc += field.component_interp(alpha, lat.node_index(&node), x);
                    }
                    acc / (1usize << m) as f64
                };
                for i in 0..n {
                    if col[i] == 0.0 {
                        continue;
                    }
                    let hi = if sgrid.spacing()[i] > 0.0 { sgrid.spacing()[i] } else { 1.0 };
                    let mut xp = xc.clone();
                    xp[i] += hi;
                    let mut xm = xc.clone();
                    xm[i] -= hi;
                    div += (centered(&xp) - centered(&xm)) / (2.0 * hi) * col[i];
                }
            }
            integral += div * cell_vol;

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
    Ok((integral, state.value(&end).to_vec()))
}

/// Reconstructs the scalar value at (t_node, x0) from the generating
/// identity with zero integration constant: the scalar at the data layer
/// minus the divergence integral along the controlled flow.
pub fn reconstruct_value(
    field: &GeneratingField,
    spec: &GameSpec,
    lat: &TimeLattice,
    ctrl: &ControlField,
    t_node: &[usize],
    x0: &[f64],
) -> Result<f64> {
    let (integral, x_end) = divergence_integral(field, spec, lat, ctrl, t_node, x0)?;
    Ok(field.scalar_terminal(lat, &x_end) - integral)
}

/// Max defect of the generating identity against a scalar value grid over
/// `trials` random (start node, start state, control field) draws.
pub fn generating_residual(
    field: &GeneratingField,
    vg: &ValueGrid,
    spec: &GameSpec,
    lat: &TimeLattice,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = vg.state_grid().node_count();
    let t_layer = lat.node_index(lat.steps());
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let lat_idx = rng.random_range(0..lat.node_count());
        let node = lat.node_multi(lat_idx);
        let s = rng.random_range(0..ns);
        let x0 = vg.state_grid().node_coords(s);
        let u_pick = rng.random_range(0..spec.u_space().len());
        let v_pick = rng.random_range(0..spec.v_space().len());
        let ctrl = ControlField::constant(lat, u_pick, v_pick);
        let (integral, x_end) = divergence_integral(field, spec, lat, &ctrl, &node, &x0)?;
        let defect = vg.interp(t_layer, &x_end) - vg.value(lat_idx, s) - integral;
        worst = worst.max(defect.abs());
    }
    Ok(worst)
}
