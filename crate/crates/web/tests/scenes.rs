use maglorentz_web::{boltzmann_scene, daisy_scene, lorentz_scene};
use serde_json::Value;

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.unwrap()).unwrap()
}

#[test]
fn lorentz_scene_has_trajectory_and_disks() {
    let v = parse(lorentz_scene(4.0, 0.02, 0.0, 3.0, 1));
    assert_eq!(v["kind"], "lorentz");
    assert!(v["trajectory"]["polyline"].as_array().unwrap().len() > 10);
    let hit = v["hit"].as_array().unwrap().len();
    assert_eq!(hit as u64, v["impacts"].as_u64().unwrap());
    // Every disk that was hit lies in the drawn set.
    let disks = v["disks"].as_array().unwrap();
    for h in v["hit"].as_array().unwrap() {
        assert!(disks.contains(h));
    }
}

#[test]
fn boltzmann_scene_points_match_events() {
    let v = parse(boltzmann_scene(4.0, 0.5, 2.0, 9));
    let events = v["path"]["events"].as_array().unwrap().len();
    assert_eq!(v["points"].as_array().unwrap().len(), events);
    assert!(v["path"]["arcs"].is_array());
}

#[test]
fn daisy_has_one_petal_per_period() {
    let v = parse(daisy_scene(4.0, 0.01, 0.5, 3.5));
    assert_eq!(v["self_recollisions"], 3);
    let c = v["center"].as_array().unwrap();
    assert_eq!(c.len(), 2);
    assert!(v["limit"].as_array().unwrap().len() > 2);
}

#[test]
fn bad_inputs_are_errors() {
    assert!(lorentz_scene(-1.0, 0.01, 0.0, 1.0, 0).is_err());
    assert!(boltzmann_scene(4.0, 0.0, 0.0, 0).is_err());
    assert!(daisy_scene(4.0, 0.01, 2.0, 1.0).is_err());
}
