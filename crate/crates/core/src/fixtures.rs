//! Small reference models with closed-form value functions.

use serde_json::{json, Value};

use crate::model::HybridModel;
use crate::scalar::Scalar;

/// `e^{-1.5} / (1 - e^{-1.5})`: value at `x = 0.5` of the conveyor loop.
pub fn conveyor_value_at_half() -> f64 {
    let q = (-1.5f64).exp();
    q / (1.0 - q)
}

/// Exact conveyor value: travel to `x = 2` at unit speed, pay 1, restart at 0.5.
pub fn conveyor_value(x: f64) -> f64 {
    let restart = 1.0 + conveyor_value_at_half();
    if x >= 2.0 {
        restart
    } else {
        (-(2.0 - x)).exp() * restart
    }
}

/// JSON for the 1-D conveyor: `Ω = [0, 3]`, `f ≡ 1`, `K ≡ 0`,
/// `A = {x ≥ 2}`, `g ≡ 0.5`, `C_a ≡ 1`, `λ = 1`.
pub fn conveyor_json() -> Value {
    json!({
        "charts": [{
            "dim": 1,
            "domain": {"type": "box", "lo": [0.0], "hi": [3.0]},
            "A": {"type": "half_space", "normal": [-1.0], "offset": -2.0},
            "D": {"type": "ball", "center": [0.5], "radius": 0.25}
        }],
        "controls": {"u": [[0.0]], "v": [[0.0]]},
        "dynamics": ["1"],
        "jump_map": {"target": 0, "coords": ["0.5"]},
        "costs": {"running": "0", "autonomous": "1", "terminal": "0"},
        "constants": {
            "lambda": 1.0, "F": 1.0, "L": 1.0, "G": 0.0, "beta": 1.0,
            "xi0": 0.25, "R": 1.0, "k": 0.0, "C_prime": 1.0
        }
    })
}

pub fn conveyor<S: Scalar>() -> HybridModel<S> {
    HybridModel::from_value(conveyor_json()).expect("conveyor fixture is well formed")
}

/// `K ≡ 1`, `f ≡ 0`, no jump sets, `λ = 1` on `[-1, 1]`.
pub fn constant_cost_json() -> Value {
    json!({
        "charts": [{"dim": 1, "domain": {"type": "box", "lo": [-1.0], "hi": [1.0]}}],
        "controls": {"u": [[0.0]], "v": [[0.0]]},
        "dynamics": ["0"],
        "costs": {"running": "1", "terminal": "0"},
        "constants": {
            "lambda": 1.0, "F": 0.01, "L": 1.0, "G": 0.0, "beta": 1.0,
            "xi0": 0.25, "R": 1.0, "k": 0.0, "C_prime": 1.0
        }
    })
}

pub fn constant_cost<S: Scalar>() -> HybridModel<S> {
    HybridModel::from_value(constant_cost_json()).expect("constant-cost fixture is well formed")
}

/// Controlled jumps out of an attracting well.
///
/// `Ω = [0, 4]`, `f = u (1.8 - x)` with `u ∈ {0.5, 1}`, running cost
/// `0.1 + x² + 0.4 (1 - u)`, controlled set `C = [1.5, 2.1]` around the
/// attractor, destinations `D = [0.3, 0.7]`, `C_c = 0.2 + 0.1 |x - y|`,
/// `λ = 3`. There is no autonomous set.
pub fn attractor_json() -> Value {
    json!({
        "charts": [{
            "dim": 1,
            "domain": {"type": "box", "lo": [0.0], "hi": [4.0]},
            "C": {"type": "box", "lo": [1.5], "hi": [2.1]},
            "D": {"type": "box", "lo": [0.3], "hi": [0.7]}
        }],
        "controls": {"u": [[0.5], [1.0]], "v": [[0.0]]},
        "dynamics": ["u1 * (1.8 - x1)"],
        "costs": {
            "running": "0.1 + x1^2 + 0.4 * (1 - u1)",
            "controlled": "0.2 + 0.1 * abs(x1 - y1)",
            "terminal": "0"
        },
        "constants": {
            "lambda": 3.0, "F": 2.5, "L": 1.0, "G": 0.0, "beta": 1.0,
            "xi0": 0.05, "R": 1.0, "k": 2.0, "C_prime": 0.2
        }
    })
}

pub fn attractor<S: Scalar>() -> HybridModel<S> {
    HybridModel::from_value(attractor_json()).expect("attractor fixture is well formed")
}

/// Two charts: a line feeding into a planar disc through an autonomous jump.
pub fn two_chart_json() -> Value {
    json!({
        "charts": [
            {
                "dim": 1,
                "domain": {"type": "box", "lo": [0.0], "hi": [3.0]},
                "A": {"type": "half_space", "normal": [-1.0], "offset": -2.0},
                "D": {"type": "ball", "center": [0.5], "radius": 0.25}
            },
            {
                "dim": 2,
                "domain": {"type": "box", "lo": [-1.0, -1.0], "hi": [3.0, 1.0]},
                "A": {"type": "half_space", "normal": [-1.0, 0.0], "offset": -2.0},
                "D": {"type": "ball", "center": [0.0, 0.0], "radius": 0.4}
            }
        ],
        "controls": {"u": [[0.0]], "v": [[0.0]]},
        "dynamics": [["1"], ["1", "-0.5 * x2"]],
        "jump_map": [
            {"target": 1, "coords": ["0.0", "0.0"]},
            {"target": 0, "coords": ["0.5"]}
        ],
        "costs": {"running": "0", "autonomous": ["1", "2"], "terminal": "0"},
        "constants": {
            "lambda": 1.0, "F": 1.2, "L": 1.0, "G": 0.0, "beta": 1.0,
            "xi0": 0.25, "R": 1.0, "k": 0.0, "C_prime": 1.0
        }
    })
}

pub fn two_chart<S: Scalar>() -> HybridModel<S> {
    HybridModel::from_value(two_chart_json()).expect("two-chart fixture is well formed")
}
