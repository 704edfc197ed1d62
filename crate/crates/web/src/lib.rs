//! Browser bindings: each call returns a JSON scene for `www/index.html`.

use maglorentz::boltzmann::{build_flow, sample_path};
use maglorentz::coupling::couple;
use maglorentz::density::InitialDatum;
use maglorentz::ensemble::LorentzSetup;
use maglorentz::field::scatterers_in_rect;
use maglorentz::geometry::rotate;
use maglorentz::io::{path_json, trajectory_json};
use maglorentz::lorentz::EventKind;
use maglorentz::rng::{stream, STREAM_BOLTZMANN};
use maglorentz::{boltzmann::BoltzmannPath, boltzmann::PathEvent, MagneticConfig, ParticleState, Vec2};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const POINTS_PER_ARC: usize = 48;

fn mag(b: f64) -> Result<MagneticConfig, String> {
    MagneticConfig::new(b).map_err(|e| e.to_string())
}

fn start(heading: f64) -> ParticleState {
    ParticleState::with_heading(Vec2::ZERO, heading)
}

fn bbox(points: &[[f64; 2]], pad: f64) -> (Vec2, Vec2) {
    let lo = points.iter().fold(Vec2::new(f64::INFINITY, f64::INFINITY), |a, p| Vec2::new(a.x.min(p[0]), a.y.min(p[1])));
    let hi = points.iter().fold(Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |a, p| Vec2::new(a.x.max(p[0]), a.y.max(p[1])));
    (lo - Vec2::new(pad, pad), hi + Vec2::new(pad, pad))
}

fn polyline_of(v: &Value) -> Vec<[f64; 2]> {
    v["polyline"]
        .as_array()
        .map(|a| a.iter().filter_map(|p| Some([p[0].as_f64()?, p[1].as_f64()?])).collect())
        .unwrap_or_default()
}

/// One Lorentz trajectory in its Poisson field, with the disks around it.
pub fn lorentz_scene(b: f64, eps: f64, heading: f64, periods: f64, seed: u64) -> Result<String, String> {
    let mag = mag(b)?;
    if !(eps > 0.0 && periods > 0.0) {
        return Err("eps and periods must be positive".into());
    }
    let setup = LorentzSetup { mag, eps, cell_side: None, f0: InitialDatum::PointMass(start(heading)), seed };
    let rec = setup.trajectory(0, periods * mag.period());
    let traj: Value = serde_json::from_str(&trajectory_json(&rec, Some(POINTS_PER_ARC))).map_err(|e| e.to_string())?;
    let (lo, hi) = bbox(&polyline_of(&traj), 2.0 * eps);
    let field = setup.field(0, rec.initial);
    let disks: Vec<[f64; 2]> = scatterers_in_rect(&field, lo, hi).iter().map(|s| [s.c.x, s.c.y]).collect();
    let hit: Vec<[f64; 2]> = rec.impact_events().map(|e| [e.center.x, e.center.y]).collect();
    Ok(json!({
        "kind": "lorentz",
        "eps": eps,
        "radius": mag.radius(),
        "trajectory": traj,
        "disks": disks,
        "hit": hit,
        "impacts": rec.count(EventKind::Impact),
        "self_recollisions": rec.count(EventKind::SelfRecollision),
        "other_recollisions": rec.count(EventKind::OtherRecollision),
    })
    .to_string())
}

/// A path of the limit process with its flow and collision points.
pub fn boltzmann_scene(b: f64, heading: f64, periods: f64, seed: u64) -> Result<String, String> {
    let mag = mag(b)?;
    if !(periods > 0.0) {
        return Err("periods must be positive".into());
    }
    let s0 = start(heading);
    let path = sample_path(periods * mag.period(), &mag, s0, &mut stream(seed, STREAM_BOLTZMANN, 0));
    let flow = build_flow(&path, &mag, s0);
    let p: Value = serde_json::from_str(&path_json(s0, &path, &mag, Some((&flow, POINTS_PER_ARC)))).map_err(|e| e.to_string())?;
    let points: Vec<[f64; 2]> = flow.impact_points().iter().map(|c| [c.x, c.y]).collect();
    Ok(json!({ "kind": "boltzmann", "radius": mag.radius(), "path": p, "points": points }).to_string())
}

/// One disk hit at a quarter period with impact angle `psi` (radians from
/// head-on), followed for `periods` periods: the daisy of self-recollisions.
pub fn daisy_scene(b: f64, eps: f64, psi: f64, periods: f64) -> Result<String, String> {
    let mag = mag(b)?;
    if !(eps > 0.0 && periods > 0.0) || psi.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err("need eps > 0, periods > 0 and |psi| < pi/2".into());
    }
    let s0 = start(0.0);
    let t1 = 0.25 * mag.period();
    let v1 = maglorentz::geometry::advance_free(s0, t1, &mag).v;
    let path = BoltzmannPath { horizon: t1 + periods * mag.period(), circling: false, events: vec![PathEvent { t: t1, n: rotate(psi, -v1) }] };
    let pair = couple(&path, eps, &mag, s0).map_err(|e| e.to_string())?;
    let traj: Value = serde_json::from_str(&trajectory_json(&pair.lorentz, Some(POINTS_PER_ARC))).map_err(|e| e.to_string())?;
    let limit: Vec<[f64; 2]> = pair.limit.polyline(POINTS_PER_ARC).iter().map(|p| [p.x, p.y]).collect();
    let c = pair.placed[0];
    Ok(json!({
        "kind": "daisy",
        "eps": eps,
        "radius": mag.radius(),
        "center": [c.x, c.y],
        "trajectory": traj,
        "limit": limit,
        "self_recollisions": pair.lorentz.count(EventKind::SelfRecollision),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn lorentz(b: f64, eps: f64, heading: f64, periods: f64, seed: u32) -> Result<String, JsValue> {
    lorentz_scene(b, eps, heading, periods, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn boltzmann(b: f64, heading: f64, periods: f64, seed: u32) -> Result<String, JsValue> {
    boltzmann_scene(b, heading, periods, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn daisy(b: f64, eps: f64, psi: f64, periods: f64) -> Result<String, JsValue> {
    daisy_scene(b, eps, psi, periods).map_err(|e| JsValue::from_str(&e))
}
