//! Complete description of a game instance: dynamics family, costs,
//! control sets, and declared bound constants, plus the integrability
//! checker and the empirical bounds certifier.
//!
//! Every min/max in the theory is realized as an exact finite scan over
//! control samples, so control sets carry an explicit sample list.

use crate::error::{Error, Result};
use crate::expr::{EvalEnv, ScalarExpr, VarSpace};
use crate::flow::ControlField;
use crate::lattice::TimeLattice;
use crate::lattice::TimeBox;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Axis-aligned box in state space (coordinates may be negative).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl StateBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidDomain("state box corners must have equal nonzero dimension".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidDomain(format!(
                "state box needs finite lo <= hi, got lo={lo:?} hi={hi:?}"
            )));
        }
        Ok(StateBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.clamp(self.lo[i], self.hi[i]);
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                if self.hi[i] > self.lo[i] {
                    rng.random_range(self.lo[i]..=self.hi[i])
                } else {
                    self.lo[i]
                }
            })
            .collect()
    }
}

/// How a control set is described.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ControlKind {
    /// Box with per-axis bounds, sampled on a uniform grid.
    Box { lo: Vec<f64>, hi: Vec<f64>, resolution: Vec<usize> },
    /// Explicit finite point set.
    Points,
}

/// A control set together with the finite sample list used by every
/// min/max scan. Samples are ordered; ties in scans break toward the
/// lowest sample index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSpace {
    dim: usize,
    kind: ControlKind,
    samples: Vec<Vec<f64>>,
}

impl ControlSpace {
    /// Uniform grid over a box, `resolution[axis]` points per axis,
    /// enumerated in ascending lexicographic order (last axis fastest).
    pub fn grid(lo: Vec<f64>, hi: Vec<f64>, resolution: Vec<usize>) -> Result<Self> {
        let dim = lo.len();
        if dim == 0 || hi.len() != dim || resolution.len() != dim {
            return Err(Error::InvalidDomain("control grid dimensions disagree".into()));
        }
        if resolution.contains(&0) {
            return Err(Error::InvalidDomain("control grid resolution must be >= 1 per axis".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::InvalidDomain("control box needs lo <= hi".into()));
        }
        let mut samples = Vec::with_capacity(resolution.iter().product());
        let mut idx = vec![0usize; dim];
        loop {
            let point: Vec<f64> = (0..dim)
                .map(|a| {
                    if resolution[a] == 1 {
                        0.5 * (lo[a] + hi[a])
                    } else {
                        lo[a] + (hi[a] - lo[a]) * idx[a] as f64 / (resolution[a] - 1) as f64
                    }
                })
                .collect();
            samples.push(point);
            let mut a = dim;
            loop {
                if a == 0 {
                    break;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < resolution[a] {
                    break;
                }
                idx[a] = 0;
                if a == 0 {
                    return Ok(ControlSpace {
                        dim,
                        kind: ControlKind::Box { lo, hi, resolution },
                        samples,
                    });
                }
            }
        }
    }

    /// Explicit finite point set.
    pub fn points(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidDomain("control point set must be nonempty with uniform dimension".into()));
        }
        Ok(ControlSpace { dim, kind: ControlKind::Points, samples: points })
    }

    /// Scalar samples, a convenience for one-dimensional control sets.
    pub fn scalar_points(values: &[f64]) -> Result<Self> {
        ControlSpace::points(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ControlKind {
        &self.kind
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// The n x m family of dynamics components X^i_alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldFamily {
    n: usize,
    m: usize,
    comps: Vec<ScalarExpr>, // indexed [i * m + alpha]
}

impl VectorFieldFamily {
    pub fn new(n: usize, m: usize, comps: Vec<ScalarExpr>) -> Result<Self> {
        if comps.len() != n * m {
            return Err(Error::InvalidDomain(format!(
                "dynamics family needs {} components (n={n} x m={m}), got {}",
                n * m,
                comps.len()
            )));
        }
        Ok(VectorFieldFamily { n, m, comps })
    }

    pub fn component(&self, i: usize, alpha: usize) -> &ScalarExpr {
        &self.comps[i * self.m + alpha]
    }

    /// Evaluates the column X_alpha into `out` (length n).
    pub fn eval_column(&self, alpha: usize, env: &EvalEnv, out: &mut [f64]) -> Result<()> {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.component(i, alpha).eval(env)?;
        }
        Ok(())
    }

    pub fn column_norm(&self, alpha: usize, env: &EvalEnv) -> Result<f64> {
        let mut s = 0.0;
        for i in 0..self.n {
            let v = self.component(i, alpha).eval(env)?;
            s += v * v;
        }
        Ok(s.sqrt())
    }
}

/// Declared bound constants: the 1-form A on the dynamics and the scalar
/// bounds B (terminal cost) and C (running cost).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundConstants {
    pub a: Vec<f64>,
    pub b: f64,
    pub c: f64,
}

/// A complete game instance.
#[derive(Debug, Clone)]
pub struct GameSpec {
    m: usize,
    n: usize,
    horizon: TimeBox,
    dynamics: VectorFieldFamily,
    running_cost: ScalarExpr,
    terminal_cost: ScalarExpr,
    u_space: ControlSpace,
    v_space: ControlSpace,
    bounds: BoundConstants,
    state_box: StateBox,
}

impl GameSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        horizon: TimeBox,
        dynamics: VectorFieldFamily,
        running_cost: ScalarExpr,
        terminal_cost: ScalarExpr,
        u_space: ControlSpace,
        v_space: ControlSpace,
        bounds: BoundConstants,
        state_box: StateBox,
    ) -> Result<Self> {
        let m = horizon.dim();
        let n = state_box.dim();
        if dynamics.m != m || dynamics.n != n {
            return Err(Error::InvalidDomain(format!(
                "dynamics family is {}x{} but the game is n={n}, m={m}",
                dynamics.n, dynamics.m
            )));
        }
        if bounds.a.len() != m {
            return Err(Error::InvalidDomain(format!(
                "bound 1-form A needs {m} entries, got {}",
                bounds.a.len()
            )));
        }
        let vars = VarSpace { m, n, p: u_space.dim(), q: v_space.dim() };
        for (what, e) in [("running cost", &running_cost), ("terminal cost", &terminal_cost)] {
            if e.vars() != vars {
                return Err(Error::InvalidDomain(format!(
                    "{what} was parsed against a different variable space"
                )));
            }
        }
        Ok(GameSpec {
            m,
            n,
            horizon,
            dynamics,
            running_cost,
            terminal_cost,
            u_space,
            v_space,
            bounds,
            state_box,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vars(&self) -> VarSpace {
        VarSpace { m: self.m, n: self.n, p: self.u_space.dim(), q: self.v_space.dim() }
    }

    pub fn horizon(&self) -> &TimeBox {
        &self.horizon
    }

    pub fn dynamics(&self) -> &VectorFieldFamily {
        &self.dynamics
    }

    pub fn u_space(&self) -> &ControlSpace {
        &self.u_space
    }

    pub fn v_space(&self) -> &ControlSpace {
        &self.v_space
    }

    pub fn bounds(&self) -> &BoundConstants {
        &self.bounds
    }

    pub fn state_box(&self) -> &StateBox {
        &self.state_box
    }

    pub fn running_cost(&self, t: &[f64], x: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
        self.running_cost.eval(&EvalEnv::new(t, x, u, v))
    }

    pub fn terminal_cost(&self, x: &[f64]) -> Result<f64> {
        let t = vec![0.0; self.m];
        let u = vec![0.0; self.u_space.dim()];
        let v = vec![0.0; self.v_space.dim()];
        self.terminal_cost.eval(&EvalEnv::new(&t, x, &u, &v))
    }

    pub fn terminal_cost_expr(&self) -> &ScalarExpr {
        &self.terminal_cost
    }

    /// X_alpha(t, x, u, v) written into `out` (length n).
    pub fn dynamics_column(
        &self,
        alpha: usize,
        t: &[f64],
        x: &[f64],
        u: &[f64],
        v: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        self.dynamics.eval_column(alpha, &EvalEnv::new(t, x, u, v), out)
    }
}

// ---------------------------------------------------------------------------
// Complete-integrability check
// ---------------------------------------------------------------------------

/// Location of the worst integrability residual.
#[derive(Debug, Clone, Serialize)]
pub struct CicWorst {
    pub node: Vec<usize>,
    pub state: Vec<f64>,
    pub alpha: usize,
    pub beta: usize,
}

/// Report of [`check_cic`].
#[derive(Debug, Clone, Serialize)]
pub struct CicReport {
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
    pub worst: Option<CicWorst>,
}

/// Relative finite-difference step used by the integrability checker and
/// the bounds certifier.
const FD_SCALE: f64 = 1e-5;

fn fd_step(value: f64) -> f64 {
    FD_SCALE * (1.0 + value.abs())
}

/// Residual vector [X_alpha, X_beta] + dX_beta/ds^alpha - dX_alpha/ds^beta
/// at one sample point, with brackets and partials from central
/// differences. With piecewise-constant controls the control-derivative
/// terms vanish on cell interiors, so this is the full integrability
/// defect there.
pub fn cic_residual_at(
    spec: &GameSpec,
    t: &[f64],
    x: &[f64],
    u: &[f64],
    v: &[f64],
    alpha: usize,
    beta: usize,
) -> Result<Vec<f64>> {
    let n = spec.n();
    let mut xa = vec![0.0; n];
    let mut xb = vec![0.0; n];
    spec.dynamics_column(alpha, t, x, u, v, &mut xa)?;
    spec.dynamics_column(beta, t, x, u, v, &mut xb)?;

    // State Jacobians of both columns.
    let mut ja = vec![0.0; n * n]; // ja[i*n + j] = dX_alpha^i / dx^j
    let mut jb = vec![0.0; n * n];
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        spec.dynamics_column(alpha, t, &xp, u, v, &mut plus)?;
        xp[j] = x[j] - h;
        spec.dynamics_column(alpha, t, &xp, u, v, &mut minus)?;
        for i in 0..n {
            ja[i * n + j] = (plus[i] - minus[i]) / (2.0 * h);
        }
        xp[j] = x[j] + h;
        spec.dynamics_column(beta, t, &xp, u, v, &mut plus)?;
        xp[j] = x[j] - h;
        spec.dynamics_column(beta, t, &xp, u, v, &mut minus)?;
        for i in 0..n {
            jb[i * n + j] = (plus[i] - minus[i]) / (2.0 * h);
        }
        xp[j] = x[j];
    }

    // Explicit multitime partials.
    let mut tp = t.to_vec();
    let ha = fd_step(t[alpha]);
    tp[alpha] = t[alpha] + ha;
    spec.dynamics_column(beta, &tp, x, u, v, &mut plus)?;
    tp[alpha] = t[alpha] - ha;
    spec.dynamics_column(beta, &tp, x, u, v, &mut minus)?;
    tp[alpha] = t[alpha];
    let dxb_dta: Vec<f64> = (0..n).map(|i| (plus[i] - minus[i]) / (2.0 * ha)).collect();
    let hb = fd_step(t[beta]);
    tp[beta] = t[beta] + hb;
    spec.dynamics_column(alpha, &tp, x, u, v, &mut plus)?;
    tp[beta] = t[beta] - hb;
    spec.dynamics_column(alpha, &tp, x, u, v, &mut minus)?;
    let dxa_dtb: Vec<f64> = (0..n).map(|i| (plus[i] - minus[i]) / (2.0 * hb)).collect();

    // [X_a, X_b]^i = X_a^j dX_b^i/dx^j - X_b^j dX_a^i/dx^j.
    let mut residual = vec![0.0; n];
    for i in 0..n {
        let mut bracket = 0.0;
        for j in 0..n {
            bracket += xa[j] * jb[i * n + j] - xb[j] * ja[i * n + j];
        }
        residual[i] = bracket + dxb_dta[i] - dxa_dtb[i];
    }
    Ok(residual)
}

/// Number of state samples per axis used by [`check_cic`].
const CIC_STATE_RES: usize = 5;

/// Checks the reduced integrability conditions over every lattice node,
/// a uniform grid of state samples, and the per-cell controls of `ctrl`.
/// Only pairs alpha < beta are scanned; the residual is antisymmetric in
/// the pair.
pub fn check_cic(spec: &GameSpec, ctrl: &ControlField, lat: &TimeLattice, tol: f64) -> Result<CicReport> {
    let n = spec.n();
    let m = spec.m();
    let mut states: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        states.push(
            (0..n)
                .map(|i| {
                    let lo = spec.state_box.lo()[i];
                    let hi = spec.state_box.hi()[i];
                    lo + (hi - lo) * idx[i] as f64 / (CIC_STATE_RES - 1) as f64
                })
                .collect(),
        );
        let mut a = n;
        let mut done = false;
        loop {
            if a == 0 {
                done = true;
                break;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < CIC_STATE_RES {
                break;
            }
            idx[a] = 0;
            if a == 0 {
                done = true;
                break;
            }
        }
        if done {
            break;
        }
    }

    let mut max_residual = 0.0f64;
    let mut worst = None;
    for node_idx in 0..lat.node_count() {
        let node = lat.node_multi(node_idx);
        let t = lat.node_coords(&node);
        // Controls of the cell this node maps to.
        let cell: Vec<usize> = node
            .iter()
            .enumerate()
            .map(|(a, &k)| k.min(lat.steps()[a] - 1))
            .collect();
        let (ui, vi) = ctrl.get(lat.cell_index(&cell));
        let u = &spec.u_space.samples()[ui];
        let v = &spec.v_space.samples()[vi];
        for x in &states {
            for alpha in 0..m {
                for beta in alpha + 1..m {
                    let r = cic_residual_at(spec, &t, x, u, v, alpha, beta)?;
                    let norm = r.iter().map(|c| c * c).sum::<f64>().sqrt();
                    if norm > max_residual {
                        max_residual = norm;
                        worst = Some(CicWorst { node: node.clone(), state: x.clone(), alpha, beta });
                    }
                }
            }
        }
    }
    Ok(CicReport { max_residual, tol, pass: max_residual <= tol, worst })
}

// ---------------------------------------------------------------------------
// Empirical bounds certificate
// ---------------------------------------------------------------------------

/// Empirical maxima and hypothesis flags from [`certify_bounds`].
#[derive(Debug, Clone, Serialize)]
pub struct SpecBoundsReport {
    pub samples: usize,
    pub max_abs_g: f64,
    pub max_abs_l: f64,
    pub max_dyn_norm: Vec<f64>,
    pub lipschitz_g: f64,
    pub lipschitz_l: f64,
    pub g_bound_ok: bool,
    pub l_bound_ok: bool,
    pub dyn_bound_ok: bool,
    pub g_lipschitz_ok: bool,
    pub l_lipschitz_ok: bool,
}

impl SpecBoundsReport {
    pub fn pass(&self) -> bool {
        self.g_bound_ok && self.l_bound_ok && self.dyn_bound_ok && self.g_lipschitz_ok && self.l_lipschitz_ok
    }
}

/// Slack for comparing empirical maxima against declared constants.
const BOUND_SLACK: f64 = 1e-9;

/// Samples the hypothesis block empirically: bounds and Lipschitz ratios
/// of g, L, and the dynamics columns over `sample_count` random points.
///
/// Sampling streams from a seeded generator, so extending `sample_count`
/// extends the sample set: empirical maxima are monotone in the count.
pub fn certify_bounds(spec: &GameSpec, sample_count: usize, seed: u64) -> Result<SpecBoundsReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = spec.m();
    let bounds = &spec.bounds;
    let mut report = SpecBoundsReport {
        samples: sample_count,
        max_abs_g: 0.0,
        max_abs_l: 0.0,
        max_dyn_norm: vec![0.0; m],
        lipschitz_g: 0.0,
        lipschitz_l: 0.0,
        g_bound_ok: true,
        l_bound_ok: true,
        dyn_bound_ok: true,
        g_lipschitz_ok: true,
        l_lipschitz_ok: true,
    };
    for _ in 0..sample_count {
        let t: Vec<f64> = (0..m)
            .map(|a| {
                let lo = spec.horizon.lo()[a];
                let hi = spec.horizon.hi()[a];
                if hi > lo { rng.random_range(lo..=hi) } else { lo }
            })
            .collect();
        let x = spec.state_box.sample(&mut rng);
        let x_hat = spec.state_box.sample(&mut rng);
        let u = &spec.u_space.samples()[rng.random_range(0..spec.u_space.len())];
        let v = &spec.v_space.samples()[rng.random_range(0..spec.v_space.len())];

        let g = spec.terminal_cost(&x)?;
        let l = spec.running_cost(&t, &x, u, v)?;
        report.max_abs_g = report.max_abs_g.max(g.abs());
        report.max_abs_l = report.max_abs_l.max(l.abs());
        let env = EvalEnv::new(&t, &x, u, v);
        for alpha in 0..m {
            let norm = spec.dynamics.column_norm(alpha, &env)?;
            report.max_dyn_norm[alpha] = report.max_dyn_norm[alpha].max(norm);
        }

        let dist: f64 = x.iter().zip(&x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist > 1e-9 {
            let g_hat = spec.terminal_cost(&x_hat)?;
            let l_hat = spec.running_cost(&t, &x_hat, u, v)?;
            report.lipschitz_g = report.lipschitz_g.max((g - g_hat).abs() / dist);
            report.lipschitz_l = report.lipschitz_l.max((l - l_hat).abs() / dist);
        }
    }
    report.g_bound_ok = report.max_abs_g <= bounds.b + BOUND_SLACK;
    report.l_bound_ok = report.max_abs_l <= bounds.c + BOUND_SLACK;
    report.dyn_bound_ok = (0..m).all(|a| report.max_dyn_norm[a] <= bounds.a[a] + BOUND_SLACK);
    report.g_lipschitz_ok = report.lipschitz_g <= bounds.b + BOUND_SLACK;
    report.l_lipschitz_ok = report.lipschitz_l <= bounds.c + BOUND_SLACK;
    Ok(report)
}
