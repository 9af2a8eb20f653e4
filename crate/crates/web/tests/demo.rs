use glpp_web::{refine_trajectory_json, rerank_demo_json, train_curve_json};
use serde_json::Value;

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.unwrap()).unwrap()
}

fn floats(v: &Value, key: &str) -> Vec<f64> {
    v[key].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn trajectory_is_monotone_and_improves() {
    let v = parse(refine_trajectory_json(6, 0.4, 2.0, false, 1));
    let f = floats(&v, "consistency");
    let acc = floats(&v, "accuracy");
    assert_eq!((f.len(), acc.len()), (7, 7));
    assert!(f.windows(2).all(|p| p[1] >= p[0] - 1e-10));
    assert!(acc[6] >= acc[0]);
}

#[test]
fn training_curve_has_one_point_per_epoch() {
    let v = parse(train_curve_json(2, 0.35, 5, false, false, 0));
    assert_eq!(floats(&v, "loss").len(), 5);
    assert_eq!(v["recall_at_1"].as_array().unwrap().len(), 5);
    assert!(v["recall_at_1"][4].as_f64().unwrap() > 0.8);
}

#[test]
fn rerank_summary_and_errors() {
    let v = parse(rerank_demo_json(0.8, 8, 4, 0.5, 0));
    assert_eq!(v["queries"], 18);
    assert_eq!(v["gallery"], 54);
    for k in ["cmc1_before", "map_before", "cmc1_after", "map_after"] {
        let x = v[k].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&x), "{k}={x}");
    }
    assert!(rerank_demo_json(0.8, 8, 4, 1.5, 0).is_err());
    assert!(rerank_demo_json(0.8, 500, 4, 0.5, 0).is_err());
}

#[test]
fn outputs_are_deterministic() {
    assert_eq!(rerank_demo_json(0.6, 6, 3, 0.3, 9), rerank_demo_json(0.6, 6, 3, 0.3, 9));
    assert_eq!(refine_trajectory_json(3, 0.5, 1.0, true, 4), refine_trajectory_json(3, 0.5, 1.0, true, 4));
}
