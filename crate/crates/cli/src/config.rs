//! Run configuration: a single JSON document holding the game definition
//! (with expression strings), grid resolutions, tolerances, and solver
//! options. Loading parses every expression eagerly and runs the spec
//! bounds certificate, surfacing violations as warnings rather than
//! errors.

use anyhow::{anyhow, Context, Result};
use multigame_core::expr::{ScalarExpr, VarSpace};
use multigame_core::gamespec::{
    certify_bounds, BoundConstants, ControlSpace, GameSpec, SpecBoundsReport, StateBox,
    VectorFieldFamily,
};
use multigame_core::lattice::{TimeBox, TimeLattice};
use multigame_core::pde::TerminalLayer;
use multigame_core::values::StateGrid;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CornersConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlConfig {
    Grid { lo: Vec<f64>, hi: Vec<f64>, resolution: Vec<usize> },
    Points { points: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub a: Vec<f64>,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameConfig {
    pub m: usize,
    pub n: usize,
    pub horizon: CornersConfig,
    pub state_box: CornersConfig,
    /// n rows of m expression strings.
    pub dynamics: Vec<Vec<String>>,
    pub running_cost: String,
    pub terminal_cost: String,
    pub controls: ControlsConfig,
    pub bounds: BoundsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlsConfig {
    pub u: ControlConfig,
    pub v: ControlConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateGridConfig {
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub cic: f64,
    pub value_order: f64,
    pub isaacs: f64,
    pub dpp: f64,
    pub pde: f64,
    pub repr: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { cic: 1e-8, value_order: 1e-9, isaacs: 1e-9, dpp: 0.5, pde: 0.5, repr: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HamiltonianConfig {
    pub samples: usize,
    pub costate_radius: f64,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        HamiltonianConfig { samples: 100, costate_radius: 2.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DppConfig {
    pub h_cells: usize,
    pub budget: usize,
}

impl Default for DppConfig {
    fn default() -> Self {
        DppConfig { h_cells: 2, budget: 20_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundsCheckConfig {
    pub samples: usize,
    pub pairs: usize,
}

impl Default for BoundsCheckConfig {
    fn default() -> Self {
        BoundsCheckConfig { samples: 2000, pairs: 10_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PdeConfig {
    pub sigma: f64,
    /// "far" marches down from the T layer; "origin" marches up from 0.
    pub terminal_layer: String,
    pub theta: Option<Vec<f64>>,
    /// Optional per-component terminal expressions (length m); default is
    /// the equal split terminal_cost / m.
    pub g_terminal: Option<Vec<String>>,
    /// Generating-identity residual trials.
    pub identity_trials: usize,
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig {
            sigma: 1.0,
            terminal_layer: "far".into(),
            theta: None,
            g_terminal: None,
            identity_trials: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReprConfig {
    pub k: f64,
    pub p_radius: f64,
    pub u_res: usize,
    pub v_res: usize,
}

impl Default for ReprConfig {
    fn default() -> Self {
        ReprConfig { k: 1.0, p_radius: 2.0, u_res: 9, v_res: 17 }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub game: GameConfig,
    pub lattice: LatticeConfig,
    pub state_grid: StateGridConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub hamiltonian: HamiltonianConfig,
    #[serde(default)]
    pub dpp: DppConfig,
    #[serde(default)]
    pub bounds_check: BoundsCheckConfig,
    #[serde(default)]
    pub pde: PdeConfig,
    #[serde(default)]
    pub repr: ReprConfig,
}

fn default_seed() -> u64 {
    0
}

/// A loaded run: the parsed config, the built game, grids, and any
/// warnings raised during validation.
pub struct LoadedRun {
    pub config: RunConfig,
    pub spec: GameSpec,
    pub lattice: TimeLattice,
    pub state_grid: StateGrid,
    pub warnings: Vec<String>,
    pub spec_bounds: SpecBoundsReport,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| anyhow!("config error: {e}"))
    }

    pub fn build_spec(&self) -> Result<GameSpec> {
        let g = &self.game;
        let vars = VarSpace {
            m: g.m,
            n: g.n,
            p: control_dim(&g.controls.u),
            q: control_dim(&g.controls.v),
        };
        let parse = |src: &str, field: &str| -> Result<ScalarExpr> {
            ScalarExpr::parse(src, vars).with_context(|| format!("config error: game.{field}"))
        };
        if g.dynamics.len() != g.n || g.dynamics.iter().any(|row| row.len() != g.m) {
            return Err(anyhow!(
                "config error: game.dynamics must be {} rows of {} expressions",
                g.n,
                g.m
            ));
        }
        let mut comps = Vec::with_capacity(g.n * g.m);
        for (i, row) in g.dynamics.iter().enumerate() {
            for (alpha, src) in row.iter().enumerate() {
                comps.push(parse(src, &format!("dynamics[{i}][{alpha}]"))?);
            }
        }
        let dynamics = VectorFieldFamily::new(g.n, g.m, comps)
            .map_err(|e| anyhow!("config error: game.dynamics: {e}"))?;
        let running = parse(&g.running_cost, "running_cost")?;
        let terminal = parse(&g.terminal_cost, "terminal_cost")?;
        let horizon = TimeBox::from_corners(&g.horizon.lo, &g.horizon.hi)
            .map_err(|e| anyhow!("config error: game.horizon: {e}"))?;
        let state_box = StateBox::new(g.state_box.lo.clone(), g.state_box.hi.clone())
            .map_err(|e| anyhow!("config error: game.state_box: {e}"))?;
        let u_space = build_controls(&g.controls.u).context("config error: game.controls.u")?;
        let v_space = build_controls(&g.controls.v).context("config error: game.controls.v")?;
        let bounds =
            BoundConstants { a: g.bounds.a.clone(), b: g.bounds.b, c: g.bounds.c };
        GameSpec::new(horizon, dynamics, running, terminal, u_space, v_space, bounds, state_box)
            .map_err(|e| anyhow!("config error: game: {e}"))
    }

    pub fn terminal_layer(&self) -> Result<TerminalLayer> {
        match self.pde.terminal_layer.as_str() {
            "far" => Ok(TerminalLayer::Far),
            "origin" => Ok(TerminalLayer::Origin),
            other => Err(anyhow!("config error: pde.terminal_layer must be \"far\" or \"origin\", got \"{other}\"")),
        }
    }
}

fn control_dim(c: &ControlConfig) -> usize {
    match c {
        ControlConfig::Grid { lo, .. } => lo.len(),
        ControlConfig::Points { points } => points.first().map(|p| p.len()).unwrap_or(0),
    }
}

fn build_controls(c: &ControlConfig) -> Result<ControlSpace> {
    match c {
        ControlConfig::Grid { lo, hi, resolution } => {
            Ok(ControlSpace::grid(lo.clone(), hi.clone(), resolution.clone())?)
        }
        ControlConfig::Points { points } => Ok(ControlSpace::points(points.clone())?),
    }
}

/// Loads and validates a config file: parses all expressions, builds the
/// grids, and runs the spec bounds certificate eagerly.
pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<LoadedRun> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("config error: cannot read {}", path.display()))?;
    let mut config = RunConfig::from_json_str(&text)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if config.lattice.steps.len() != config.game.m {
        return Err(anyhow!("config error: lattice.steps needs {} entries", config.game.m));
    }
    if config.state_grid.nodes.len() != config.game.n {
        return Err(anyhow!("config error: state_grid.nodes needs {} entries", config.game.n));
    }
    if config.lattice.steps.contains(&0) || config.state_grid.nodes.contains(&0) {
        return Err(anyhow!("config error: resolutions must be >= 1"));
    }
    let spec = config.build_spec()?;
    let lattice = TimeLattice::new(spec.horizon().clone(), config.lattice.steps.clone())
        .map_err(|e| anyhow!("config error: lattice: {e}"))?;
    let state_grid = StateGrid::new(spec.state_box().clone(), config.state_grid.nodes.clone())
        .map_err(|e| anyhow!("config error: state_grid: {e}"))?;
    config.terminal_layer()?;

    let mut warnings = Vec::new();
    let spec_bounds = certify_bounds(&spec, config.bounds_check.samples, config.seed)?;
    if !spec_bounds.pass() {
        warnings.push(format!(
            "declared bound constants violated empirically: max|g|={:.6} (B={}), max|L|={:.6} (C={}), \
             max dynamics norms {:?} (A={:?})",
            spec_bounds.max_abs_g,
            spec.bounds().b,
            spec_bounds.max_abs_l,
            spec.bounds().c,
            spec_bounds.max_dyn_norm,
            spec.bounds().a,
        ));
    }
    Ok(LoadedRun { config, spec, lattice, state_grid, warnings, spec_bounds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "game": {
                "m": 2, "n": 1,
                "horizon": { "lo": [0.0, 0.0], "hi": [1.0, 1.0] },
                "state_box": { "lo": [-1.0], "hi": [1.0] },
                "dynamics": [["0", "0"]],
                "running_cost": "0",
                "terminal_cost": "0",
                "controls": {
                    "u": { "kind": "points", "points": [[0.0]] },
                    "v": { "kind": "points", "points": [[0.0]] }
                },
                "bounds": { "a": [0.0, 0.0], "b": 0.0, "c": 0.0 }
            },
            "lattice": { "steps": [2, 2] },
            "state_grid": { "nodes": [5] }
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_loads_without_warnings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.json");
        std::fs::write(&path, minimal_json()).unwrap();
        let run = load_config(&path, None).unwrap();
        assert!(run.warnings.is_empty());
        assert_eq!(run.spec.m(), 2);
        assert_eq!(run.lattice.node_count(), 9);
    }

    #[test]
    fn unbounded_terminal_cost_warns_but_loads() {
        let text = minimal_json()
            .replace("\"terminal_cost\": \"0\"", "\"terminal_cost\": \"x1^2 + 10\"");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("warn.json");
        std::fs::write(&path, text).unwrap();
        let run = load_config(&path, None).unwrap();
        assert_eq!(run.warnings.len(), 1);
        assert!(run.warnings[0].contains("declared bound constants violated"));
    }

    #[test]
    fn missing_field_names_it() {
        let text = minimal_json().replace("\"horizon\": { \"lo\": [0.0, 0.0], \"hi\": [1.0, 1.0] },", "");
        let err = RunConfig::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("horizon"), "{err}");
    }

    #[test]
    fn bad_expression_reports_field_path() {
        let text = minimal_json().replace("\"running_cost\": \"0\"", "\"running_cost\": \"x1 +\"");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, text).unwrap();
        let err = match load_config(&path, None) {
            Err(e) => e,
            Ok(_) => panic!("malformed expression must not load"),
        };
        assert!(format!("{err:#}").contains("running_cost"), "{err:#}");
    }
}
