//! Upper/lower Hamiltonians and constructive max-min representations.
//!
//! For a costate matrix p = (p^alpha_i) the two Hamiltonians are the exact
//! finite scans
//!
//! ```text
//! H+(t,x,p) = min over v of max over u of { p^alpha_i X^i_alpha + L }
//! H-(t,x,p) = max over u of min over v of { p^alpha_i X^i_alpha + L }
//! ```
//!
//! over the game's control samples; their gap H+ - H- >= 0 vanishes iff
//! the per-cell games have a value. The representation builders go the
//! other way: given a Lipschitz (or positively homogeneous) Hamiltonian
//! they synthesize control sets, dynamics, and a running cost whose
//! max-min reproduces H, and [`verify_repr`] measures how closely the
//! sampled construction achieves it.

use crate::error::{Error, Result};
use crate::exec;
use crate::gamespec::{ControlSpace, GameSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

/// An n x m costate matrix p^alpha_i, stored row-major by state index.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateMatrix {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl CostateMatrix {
    pub fn new(n: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * m || data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDomain(format!(
                "costate matrix needs {} finite entries, got {}",
                n * m,
                data.len()
            )));
        }
        Ok(CostateMatrix { n, m, data })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        CostateMatrix { n, m, data: vec![0.0; n * m] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, alpha: usize) -> f64 {
        self.data[i * self.m + alpha]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        CostateMatrix { n: self.n, m: self.m, data: self.data.iter().map(|v| lambda * v).collect() }
    }
}

/// Signature of a user-supplied Hamiltonian over (t, x, p).
pub type HamiltonianFn = dyn Fn(&[f64], &[f64], &CostateMatrix) -> f64 + Send + Sync;

/// A Hamiltonian callable over (t, x, p).
#[derive(Clone)]
pub enum HamiltonianEval<'a> {
    /// min over v of max over u of the game's p.X + L.
    Upper(&'a GameSpec),
    /// max over u of min over v of the game's p.X + L.
    Lower(&'a GameSpec),
    /// A user-supplied function with a declared Lipschitz constant.
    Custom { func: Arc<HamiltonianFn>, lipschitz: f64 },
}

impl<'a> HamiltonianEval<'a> {
    pub fn custom<F>(func: F, lipschitz: f64) -> Self
    where
        F: Fn(&[f64], &[f64], &CostateMatrix) -> f64 + Send + Sync + 'static,
    {
        HamiltonianEval::Custom { func: Arc::new(func), lipschitz }
    }

    pub fn eval(&self, t: &[f64], x: &[f64], p: &CostateMatrix) -> Result<f64> {
        match self {
            HamiltonianEval::Upper(spec) => h_upper(spec, t, x, p),
            HamiltonianEval::Lower(spec) => h_lower(spec, t, x, p),
            HamiltonianEval::Custom { func, .. } => Ok(func(t, x, p)),
        }
    }
}

/// p^alpha_i X^i_alpha(t,x,u,v) + L(t,x,u,v) for one control pair.
fn pre_hamiltonian(
    spec: &GameSpec,
    t: &[f64],
    x: &[f64],
    p: &CostateMatrix,
    u: &[f64],
    v: &[f64],
    col: &mut [f64],
) -> Result<f64> {
    let mut acc = spec.running_cost(t, x, u, v)?;
    for alpha in 0..spec.m() {
        spec.dynamics_column(alpha, t, x, u, v, col)?;
        for (i, &ci) in col.iter().enumerate() {
            acc += p.get(i, alpha) * ci;
        }
    }
    Ok(acc)
}

/// Upper Hamiltonian: exact scan, min over v of max over u.
pub fn h_upper(spec: &GameSpec, t: &[f64], x: &[f64], p: &CostateMatrix) -> Result<f64> {
    let mut col = vec![0.0; spec.n()];
    let mut outer = f64::INFINITY;
    for v in spec.v_space().samples() {
        let mut inner = f64::NEG_INFINITY;
        for u in spec.u_space().samples() {
            inner = inner.max(pre_hamiltonian(spec, t, x, p, u, v, &mut col)?);
        }
        outer = outer.min(inner);
    }
    Ok(outer)
}

/// Lower Hamiltonian: exact scan, max over u of min over v.
pub fn h_lower(spec: &GameSpec, t: &[f64], x: &[f64], p: &CostateMatrix) -> Result<f64> {
    let mut col = vec![0.0; spec.n()];
    let mut outer = f64::NEG_INFINITY;
    for u in spec.u_space().samples() {
        let mut inner = f64::INFINITY;
        for v in spec.v_space().samples() {
            inner = inner.min(pre_hamiltonian(spec, t, x, p, u, v, &mut col)?);
        }
        outer = outer.max(inner);
    }
    Ok(outer)
}

/// Draws `count` sample triples (t, x, p) with p entries uniform in
/// [-radius, radius].
pub fn sample_costates(
    spec: &GameSpec,
    count: usize,
    radius: f64,
    seed: u64,
) -> Vec<(Vec<f64>, Vec<f64>, CostateMatrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (spec.m(), spec.n());
    (0..count)
        .map(|_| {
            let t: Vec<f64> = (0..m)
                .map(|a| {
                    let lo = spec.horizon().lo()[a];
                    let hi = spec.horizon().hi()[a];
                    if hi > lo { rng.random_range(lo..=hi) } else { lo }
                })
                .collect();
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    let lo = spec.state_box().lo()[i];
                    let hi = spec.state_box().hi()[i];
                    if hi > lo { rng.random_range(lo..=hi) } else { lo }
                })
                .collect();
            let data: Vec<f64> = (0..n * m).map(|_| rng.random_range(-radius..=radius)).collect();
            (t, x, CostateMatrix { n, m, data })
        })
        .collect()
}

/// Largest H+ - H- over the samples; nonnegative, and zero iff the
/// per-cell games have a value on the sampled set.
pub fn isaacs_gap(
    spec: &GameSpec,
    samples: &[(Vec<f64>, Vec<f64>, CostateMatrix)],
) -> Result<f64> {
    let gaps: Vec<Result<f64>> = exec::map_slice(samples, |(t, x, p)| {
        Ok(h_upper(spec, t, x, p)? - h_lower(spec, t, x, p)?)
    });
    let mut worst = 0.0f64;
    for g in gaps {
        worst = worst.max(g?);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Representation builders
// ---------------------------------------------------------------------------

/// The operator Q = (Q^i_{alpha j}) mapping a control u in R^n to the
/// family (Q_alpha u) in R^{n x m}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QOperator {
    n: usize,
    m: usize,
    // data[(alpha * n + i) * n + j]
    data: Vec<f64>,
}

impl QOperator {
    pub fn new(n: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * n * n {
            return Err(Error::BadOperator(format!(
                "Q needs {} entries for n={n}, m={m}, got {}",
                m * n * n,
                data.len()
            )));
        }
        Ok(QOperator { n, m, data })
    }

    /// Default shape: a single diagonal band in the first time slot,
    /// scaled so the Frobenius norm equals `k`.
    pub fn banded(n: usize, m: usize, k: f64) -> Self {
        let mut data = vec![0.0; m * n * n];
        let scale = k / (n as f64).sqrt();
        for i in 0..n {
            data[i * n + i] = scale;
        }
        QOperator { n, m, data }
    }

    pub fn get(&self, alpha: usize, i: usize, j: usize) -> f64 {
        self.data[(alpha * self.n + i) * self.n + j]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// (Q u) as an n x m matrix in costate layout.
    pub fn apply(&self, u: &[f64]) -> CostateMatrix {
        let mut out = CostateMatrix::zeros(self.n, self.m);
        debug_assert_eq!(u.len(), self.n);
        for alpha in 0..self.m {
            for i in 0..self.n {
                let mut acc = 0.0;
                for (j, &uj) in u.iter().enumerate() {
                    acc += self.get(alpha, i, j) * uj;
                }
                out.data[i * self.m + alpha] = acc;
            }
        }
        out
    }
}

fn dot_mats(a: &CostateMatrix, b: &CostateMatrix) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Grid points of the ball of the given radius, kept by rejection from the
/// bounding-box grid with `res` points per axis. Odd resolutions include
/// the center and the axis poles.
pub fn ball_grid(dim: usize, radius: f64, res: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; dim];
    let keep_r = radius * (1.0 + 1e-12);
    loop {
        let point: Vec<f64> = (0..dim)
            .map(|i| {
                if res == 1 {
                    0.0
                } else {
                    -radius + 2.0 * radius * idx[i] as f64 / (res - 1) as f64
                }
            })
            .collect();
        if point.iter().map(|c| c * c).sum::<f64>().sqrt() <= keep_r {
            out.push(point);
        }
        let mut a = dim;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < res {
                break;
            }
            idx[a] = 0;
            if a == 0 {
                return out;
            }
        }
    }
}

fn cartesian(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for p in a {
        for q in b {
            let mut joined = p.clone();
            joined.extend_from_slice(q);
            out.push(joined);
        }
    }
    out
}

/// Which representation shape a [`RepresentationPieces`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReprKind {
    /// u in the unit ball of R^n, v in the radius-P ball of R^{mn},
    /// X_alpha(u) = Q_alpha u, L = H(t,x,v) - <Qu, v>.
    Lipschitz,
    /// Doubled controls u = (u1, u2), v = (v1, v2) on products of unit
    /// balls; X_alpha = Q_alpha u1 + C v2_alpha + (L(t,x,u1,v1) - C) v2_alpha
    /// and the Hamiltonian is recovered as max-min of <X, p>.
    Homogeneous,
}

/// Sampling resolutions for the representation control grids.
#[derive(Debug, Clone, Copy)]
pub struct ReprResolution {
    /// Points per axis of the u-grids.
    pub u_res: usize,
    /// Points per axis of the v-grids.
    pub v_res: usize,
}

impl Default for ReprResolution {
    fn default() -> Self {
        ReprResolution { u_res: 9, v_res: 9 }
    }
}

/// Constructed control sets and callable pieces realizing a max-min
/// representation of a Hamiltonian.
pub struct RepresentationPieces<'a> {
    pub kind: ReprKind,
    pub u_space: ControlSpace,
    pub v_space: ControlSpace,
    pub q: QOperator,
    /// Radius of the v-ball (Lipschitz shape) or 1 (homogeneous shape).
    pub radius: f64,
    /// Bound constant on the synthesized running cost (homogeneous shape).
    pub c: f64,
    h: &'a HamiltonianEval<'a>,
    n: usize,
    m: usize,
}

impl<'a> RepresentationPieces<'a> {
    /// The synthesized running cost L(t,x,u,v) = H(t,x,v) - <Qu, v>.
    /// For the homogeneous shape, `u`/`v` are the first halves u1/v1.
    pub fn lagrangian(&self, t: &[f64], x: &[f64], u1: &[f64], v1: &[f64]) -> Result<f64> {
        let v_mat = CostateMatrix::new(self.n, self.m, reindex_to_costate(v1, self.n, self.m))?;
        let qu = self.q.apply(u1);
        Ok(self.h.eval(t, x, &v_mat)? - dot_mats(&qu, &v_mat))
    }

    /// The synthesized dynamics as an n x m matrix (costate layout).
    pub fn dynamics(&self, t: &[f64], x: &[f64], u: &[f64], v: &[f64]) -> Result<CostateMatrix> {
        match self.kind {
            ReprKind::Lipschitz => Ok(self.q.apply(u)),
            ReprKind::Homogeneous => {
                let nm = self.n * self.m;
                let u1 = &u[..self.n];
                let v1 = &v[..nm];
                let v2 = &v[nm..];
                let l = self.lagrangian(t, x, u1, v1)?;
                let qu = self.q.apply(u1);
                let mut data = vec![0.0; nm];
                for i in 0..self.n {
                    for alpha in 0..self.m {
                        let v2_ia = v2[i * self.m + alpha];
                        // Split form kept as constructed: the two v2 terms
                        // algebraically collapse to L * v2.
                        data[i * self.m + alpha] =
                            qu.get(i, alpha) + self.c * v2_ia + (l - self.c) * v2_ia;
                    }
                }
                CostateMatrix::new(self.n, self.m, data)
            }
        }
    }

    /// max over v-samples of min over u-samples of the represented value
    /// at costate `p`.
    pub fn maxmin(&self, t: &[f64], x: &[f64], p: &CostateMatrix) -> Result<f64> {
        let inner: Vec<Result<f64>> = exec::map_slice(self.v_space.samples(), |v| {
            let mut best = f64::INFINITY;
            for u in self.u_space.samples() {
                let val = match self.kind {
                    ReprKind::Lipschitz => {
                        let x_field = self.q.apply(u);
                        dot_mats(p, &x_field) + self.lagrangian(t, x, u, v)?
                    }
                    ReprKind::Homogeneous => dot_mats(p, &self.dynamics(t, x, u, v)?),
                };
                best = best.min(val);
            }
            Ok(best)
        });
        let mut outer = f64::NEG_INFINITY;
        for val in inner {
            outer = outer.max(val?);
        }
        Ok(outer)
    }
}

/// Interprets a flat control vector of length n*m as a costate-layout
/// matrix. Control balls live in R^{mn} with the same re-indexing the
/// costate norm uses, so this is a plain copy.
fn reindex_to_costate(v: &[f64], n: usize, m: usize) -> Vec<f64> {
    debug_assert_eq!(v.len(), n * m);
    v.to_vec()
}

/// Builds the Lipschitz-shape representation: u on the unit ball of R^n,
/// v on the radius-`p_radius` ball of R^{mn}, X_alpha(u) = Q_alpha u and
/// L = H(t,x,v) - <Qu, v>. Requires ||Q|| = k (Frobenius) to 1e-9.
pub fn build_repr_lipschitz<'a>(
    h: &'a HamiltonianEval<'a>,
    n: usize,
    m: usize,
    k: f64,
    p_radius: f64,
    q: QOperator,
    res: ReprResolution,
) -> Result<RepresentationPieces<'a>> {
    if (q.norm() - k).abs() > 1e-9 {
        return Err(Error::BadOperator(format!(
            "Q has Frobenius norm {} but the Lipschitz constant is {k}",
            q.norm()
        )));
    }
    if p_radius <= 0.0 {
        return Err(Error::BadOperator("radius P must be positive".into()));
    }
    let u_space = ControlSpace::points(ball_grid(n, 1.0, res.u_res))?;
    let v_space = ControlSpace::points(ball_grid(n * m, p_radius, res.v_res))?;
    Ok(RepresentationPieces {
        kind: ReprKind::Lipschitz,
        u_space,
        v_space,
        q,
        radius: p_radius,
        c: 0.0,
        h,
        n,
        m,
    })
}

/// Probe scales for the homogeneity check. Powers of two keep the scan
/// comparisons exact in floating point.
const HOMOGENEITY_LAMBDAS: [f64; 3] = [0.0, 2.0, 0.5];

/// Builds the homogeneous-shape representation with doubled controls.
/// Rejects Hamiltonians failing the positive-homogeneity probe
/// H(t, x, lambda p) = lambda H(t, x, p). When `c` is `None` the bound on
/// the synthesized running cost is set to 1.1x its sampled maximum.
#[allow(clippy::too_many_arguments)]
pub fn build_repr_homogeneous<'a>(
    h: &'a HamiltonianEval<'a>,
    n: usize,
    m: usize,
    k: f64,
    c: Option<f64>,
    res: ReprResolution,
    seed: u64,
) -> Result<RepresentationPieces<'a>> {
    // Homogeneity probe on random costates.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = vec![0.0; m];
    let x0 = vec![0.0; n];
    for _ in 0..16 {
        let data: Vec<f64> = (0..n * m).map(|_| rng.random_range(-2.0..=2.0)).collect();
        let p = CostateMatrix::new(n, m, data)?;
        let base = h.eval(&t0, &x0, &p)?;
        for lambda in HOMOGENEITY_LAMBDAS {
            let got = h.eval(&t0, &x0, &p.scaled(lambda))?;
            let expected = lambda * base;
            if (got - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
                return Err(Error::NotHomogeneous { lambda, got, expected });
            }
        }
    }

    let q = QOperator::banded(n, m, k);
    let ball_u = ball_grid(n, 1.0, res.u_res);
    let ball_v = ball_grid(n * m, 1.0, res.v_res);
    // The second u-ball never enters the dynamics; sample it at its center.
    let u_space = ControlSpace::points(cartesian(&ball_u, &ball_grid(n, 1.0, 1)))?;
    let v_space = ControlSpace::points(cartesian(&ball_v, &ball_v))?;

    // Sampled bound on the synthesized running cost.
    let mut max_l = 0.0f64;
    {
        let probe = RepresentationPieces {
            kind: ReprKind::Homogeneous,
            u_space: u_space.clone(),
            v_space: v_space.clone(),
            q: q.clone(),
            radius: 1.0,
            c: 0.0,
            h,
            n,
            m,
        };
        for u1 in &ball_u {
            for v1 in &ball_v {
                max_l = max_l.max(probe.lagrangian(&t0, &x0, u1, v1)?.abs());
            }
        }
    }
    let c = match c {
        Some(c) if c >= max_l => c,
        Some(c) => {
            return Err(Error::BadOperator(format!(
                "declared C = {c} is below the sampled running-cost bound {max_l}"
            )));
        }
        None => 1.1 * max_l,
    };

    Ok(RepresentationPieces {
        kind: ReprKind::Homogeneous,
        u_space,
        v_space,
        q,
        radius: 1.0,
        c,
        h,
        n,
        m,
    })
}

/// Report of [`verify_repr`].
#[derive(Debug, Clone, Serialize)]
pub struct ReprReport {
    pub samples: usize,
    pub max_error: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Max |H - maxmin| over the sampled costates at a fixed (t, x).
pub fn verify_repr(
    pieces: &RepresentationPieces,
    t: &[f64],
    x: &[f64],
    sample_ps: &[CostateMatrix],
    tol: f64,
) -> Result<ReprReport> {
    let mut max_error = 0.0f64;
    for p in sample_ps {
        let truth = pieces.h.eval(t, x, p)?;
        let repr = pieces.maxmin(t, x, p)?;
        max_error = max_error.max((truth - repr).abs());
    }
    Ok(ReprReport { samples: sample_ps.len(), max_error, tol, pass: max_error <= tol })
}
