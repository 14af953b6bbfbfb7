//! Browser bindings. Each export takes plain numbers or a config string and
//! returns JSON text for the page in `www/`.

use serde_json::json;
use sqq_core::blowup::{certify, DeltaMode};
use sqq_core::config::ScenarioConfig;
use sqq_core::peakon::{PairAmplitudes, TwoPeakon};
use sqq_core::scenario::{run_scenario, Outcome, Provenance, ScenarioEnv};
use sqq_core::{Grid, Result, SqqError};
use wasm_bindgen::prelude::*;

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

fn parse_mode(mode: &str) -> Result<DeltaMode> {
    match mode {
        "paper" => Ok(DeltaMode::Paper),
        "sharp" => Ok(DeltaMode::Sharp),
        other => Err(SqqError::InvalidArgument(format!(
            "delta mode must be paper or sharp, got {other:?}"
        ))),
    }
}

pub fn two_peakon_profile_json(
    amps: [f64; 4],
    separation: Option<f64>,
    t: f64,
    half_length: f64,
    cells: usize,
) -> Result<String> {
    let grid = Grid::new(half_length, cells)?;
    let pk = TwoPeakon::closed_form_at(PairAmplitudes::new(amps[0], amps[1], amps[2], amps[3]), separation, t)?;
    let x = grid.nodes();
    let (u, v): (Vec<f64>, Vec<f64>) = x.iter().map(|&x| pk.eval(x)).unzip();
    Ok(json!({"x": x, "u": u, "v": v, "q1": pk.q1, "q2": pk.q2}).to_string())
}

/// sech² bumps `a sech²((x - c)/w)` for both densities, certified at `x0`.
pub fn certify_bumps_json(
    m: [f64; 3],
    n: [f64; 3],
    x0: f64,
    half_length: f64,
    cells: usize,
    mode: &str,
) -> Result<String> {
    let grid = Grid::new(half_length, cells)?;
    let bump = |[a, c, w]: [f64; 3]| grid.sample(|x| a / (grid.wrap(x - c) / w).cosh().powi(2));
    let report = certify(&bump(m), &bump(n), &grid, x0, parse_mode(mode)?)?;
    serde_json::to_string(&report).map_err(|e| SqqError::InvalidArgument(e.to_string()))
}

pub fn run_config_json(config: &str) -> Result<String> {
    let cfg = ScenarioConfig::from_json(config)?;
    let prov = Provenance::new(config.as_bytes(), &[("sqq-web", env!("CARGO_PKG_VERSION"))]);
    let out = run_scenario(&cfg, &prov, &ScenarioEnv::default())?;
    let outcome = match out.outcome {
        Outcome::Completed => "completed",
        Outcome::BlowupDetected => "blowup_detected",
        Outcome::Breakdown => "breakdown",
    };
    let files: Vec<_> = out
        .files
        .iter()
        .map(|f| json!({"name": f.name, "contents": f.contents}))
        .collect();
    Ok(json!({"outcome": outcome, "files": files}).to_string())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn two_peakon_profile(
    a1: f64,
    b1: f64,
    a2: f64,
    b2: f64,
    separation: Option<f64>,
    t: f64,
    half_length: f64,
    cells: usize,
) -> std::result::Result<String, JsError> {
    js(two_peakon_profile_json(
        [a1, b1, a2, b2],
        separation,
        t,
        half_length,
        cells,
    ))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn certify_bumps(
    m_amp: f64,
    m_center: f64,
    m_width: f64,
    n_amp: f64,
    n_center: f64,
    n_width: f64,
    x0: f64,
    half_length: f64,
    cells: usize,
    mode: &str,
) -> std::result::Result<String, JsError> {
    js(certify_bumps_json(
        [m_amp, m_center, m_width],
        [n_amp, n_center, n_width],
        x0,
        half_length,
        cells,
        mode,
    ))
}

#[wasm_bindgen]
pub fn run_config(config: &str) -> std::result::Result<String, JsError> {
    js(run_config_json(config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn profile_has_one_value_per_node() {
        let text = two_peakon_profile_json([1.0, 2.0, 2.0, 2.0], None, 0.5, 10.0, 64).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["x"].as_array().unwrap().len(), 64);
        assert_eq!(v["u"].as_array().unwrap().len(), 64);
        assert_ne!(v["q1"].as_f64().unwrap(), v["q2"].as_f64().unwrap());
    }

    #[test]
    fn unknown_mode_is_rejected() {
        let r = certify_bumps_json([1.0, 0.0, 1.0], [0.5, 1.0, 1.0], 0.0, 10.0, 256, "loose");
        assert!(matches!(r, Err(SqqError::InvalidArgument(_))));
    }

    #[test]
    fn equal_bumps_are_not_certified() {
        let text = certify_bumps_json([1.0, 0.0, 1.0], [1.0, 0.0, 1.0], 0.0, 10.0, 256, "sharp").unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["condition_met"], Value::Bool(false));
    }

    #[test]
    fn small_run_returns_files() {
        let cfg = r#"{"kind": "simulate", "grid": {"L": 5, "N": 64}, "solver": {"t_end": 0.1},
            "initial": {"family": "sech2", "m": [{"amplitude": 1, "center": 0, "width": 1}],
                                          "n": [{"amplitude": 0.5, "center": 1, "width": 1}]}}"#;
        let v: Value = serde_json::from_str(&run_config_json(cfg).unwrap()).unwrap();
        assert_eq!(v["outcome"], "completed");
        assert_eq!(v["files"][0]["name"], "diagnostics.csv");
    }
}
