//! A small catalog of ready-made games used by tests, benches, and the
//! shipped configuration files.

use crate::error::Result;
use crate::expr::{ScalarExpr, VarSpace};
use crate::gamespec::{BoundConstants, ControlSpace, GameSpec, StateBox, VectorFieldFamily};
use crate::lattice::{TimeBox, TimeLattice};
use crate::values::StateGrid;

#[allow(clippy::too_many_arguments)]
fn build(
    m: usize,
    dynamics_src: &str,
    running_src: &str,
    terminal_src: &str,
    controls: &[f64],
    bounds: BoundConstants,
    state_lo: f64,
    state_hi: f64,
) -> GameSpec {
    let vars = VarSpace { m, n: 1, p: 1, q: 1 };
    let cols: Vec<ScalarExpr> =
        (0..m).map(|_| ScalarExpr::parse(dynamics_src, vars).unwrap()).collect();
    GameSpec::new(
        TimeBox::from_corners(&vec![0.0; m], &vec![1.0; m]).unwrap(),
        VectorFieldFamily::new(1, m, cols).unwrap(),
        ScalarExpr::parse(running_src, vars).unwrap(),
        ScalarExpr::parse(terminal_src, vars).unwrap(),
        ControlSpace::scalar_points(controls).unwrap(),
        ControlSpace::scalar_points(controls).unwrap(),
        bounds,
        StateBox::new(vec![state_lo], vec![state_hi]).unwrap(),
    )
    .unwrap()
}

/// Everything is zero; every value function vanishes identically.
pub fn zero_game(m: usize) -> GameSpec {
    build(m, "0", "0", "0", &[0.0], BoundConstants { a: vec![0.0; m], b: 0.0, c: 0.0 }, -1.0, 1.0)
}

/// Frozen state, running cost (u+v)^2, controls {-1, 0, 1}. The lower
/// value is 0 (the reply cancels u) while the upper value charges the
/// whole remaining volume at rate 1, so the two sides differ.
pub fn frozen_state_game(m: usize) -> GameSpec {
    build(
        m,
        "0",
        "(u1 + v1)^2",
        "0",
        &[-1.0, 0.0, 1.0],
        BoundConstants { a: vec![0.0; m], b: 0.0, c: 4.0 },
        -1.0,
        1.0,
    )
}

/// Additive control drift u+v on every axis, terminal cost |x|, controls
/// {-1, 1}. The terminal kink keeps interpolation honest near x = 0.
pub fn linear_game(m: usize) -> GameSpec {
    build(
        m,
        "u1 + v1",
        "0",
        "abs(x1)",
        &[-1.0, 1.0],
        BoundConstants { a: vec![2.0; m], b: 4.0, c: 0.0 },
        -4.0,
        4.0,
    )
}

/// Frozen state with the bilinear running cost u*v over symmetric control
/// sets: the min-max order does not matter, the two values coincide.
pub fn bilinear_game(m: usize) -> GameSpec {
    build(
        m,
        "0",
        "u1*v1",
        "0",
        &[-1.0, 0.0, 1.0],
        BoundConstants { a: vec![0.0; m], b: 0.0, c: 1.0 },
        -1.0,
        1.0,
    )
}

/// Uncontrolled flow x' = x on both axes (m = 2): the integrability
/// conditions hold and the flow is x0 * exp(t1 + t2).
pub fn cic_pass_game() -> GameSpec {
    build(2, "x1", "0", "x1", &[0.0], BoundConstants { a: vec![8.0, 8.0], b: 8.0, c: 0.0 }, -8.0, 8.0)
}

/// x' = x along axis 1 but x' = t1 along axis 2: the integrability defect
/// is 1 - t1, so the flow is genuinely path-dependent.
pub fn cic_fail_game() -> GameSpec {
    let vars = VarSpace { m: 2, n: 1, p: 1, q: 1 };
    GameSpec::new(
        TimeBox::from_corners(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
        VectorFieldFamily::new(
            1,
            2,
            vec![ScalarExpr::parse("x1", vars).unwrap(), ScalarExpr::parse("t1", vars).unwrap()],
        )
        .unwrap(),
        ScalarExpr::parse("0", vars).unwrap(),
        ScalarExpr::parse("x1", vars).unwrap(),
        ControlSpace::scalar_points(&[0.0]).unwrap(),
        ControlSpace::scalar_points(&[0.0]).unwrap(),
        BoundConstants { a: vec![8.0, 8.0], b: 8.0, c: 0.0 },
        StateBox::new(vec![-8.0], vec![8.0]).unwrap(),
    )
    .unwrap()
}

/// Uniform lattice over the game's horizon with `steps` cells per axis.
pub fn standard_lattice(spec: &GameSpec, steps: usize) -> Result<TimeLattice> {
    TimeLattice::new(spec.horizon().clone(), vec![steps; spec.m()])
}

/// Uniform state grid over the game's state box with `nodes` per axis.
pub fn standard_state_grid(spec: &GameSpec, nodes: usize) -> Result<StateGrid> {
    StateGrid::new(spec.state_box().clone(), vec![nodes; spec.n()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamespec::certify_bounds;

    #[test]
    fn catalog_games_satisfy_their_declared_bounds() {
        for (name, spec) in [
            ("zero", zero_game(2)),
            ("frozen", frozen_state_game(2)),
            ("linear", linear_game(2)),
            ("bilinear", bilinear_game(2)),
            ("cic_pass", cic_pass_game()),
            ("cic_fail", cic_fail_game()),
        ] {
            let report = certify_bounds(&spec, 2000, 1).unwrap();
            assert!(report.pass(), "{name}: {report:?}");
        }
    }
}
