//! Golden request/response conformance for the face protocol.

mod common;

use common::golden::{check_goldens, golden_path, replay, Exchange};

#[test]
fn golden_exchanges_replay_bit_exactly() {
    let mismatches = check_goldens();
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}

#[test]
fn goldens_are_deterministic() {
    let text = std::fs::read_to_string(golden_path()).unwrap();
    let mut a: Vec<Exchange> = serde_json::from_str(&text).unwrap();
    let mut b = a.clone();
    replay(&mut a);
    replay(&mut b);
    let bodies = |v: &[Exchange]| v.iter().map(|e| e.response.clone()).collect::<Vec<_>>();
    assert_eq!(bodies(&a), bodies(&b));
}

fn recorded(name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(golden_path()).unwrap();
    let exchanges: Vec<Exchange> = serde_json::from_str(&text).unwrap();
    let ex = exchanges.into_iter().find(|e| e.name == name).unwrap();
    serde_json::from_str(ex.response.as_deref().unwrap()).unwrap()
}

#[test]
fn recorded_values_match_hand_computed_ones() {
    // orthogonal enrolled crops, query 0.9 A + 0.1 B
    let two = recorded("identify two-person");
    let cands = two[0]["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 1);
    assert_eq!(cands[0]["person_id"], "p000001");
    let c = cands[0]["confidence"].as_f64().unwrap();
    assert!((c - 0.9 / 0.82f64.sqrt()).abs() < 1e-12, "{c}");

    let own = recorded("identify self-match");
    assert_eq!(own[0]["candidates"][0]["confidence"].as_f64(), Some(1.0));

    assert_eq!(
        recorded("detect block face")[0]["face_rectangle"],
        serde_json::json!({"left": 0, "top": 0, "width": 4, "height": 4})
    );
    assert_eq!(recorded("detect uniform"), serde_json::json!([]));
    assert_eq!(recorded("missing key")["code"], "Unauthorized");
    assert_eq!(
        recorded("identify expired face id")["code"],
        "FaceIdExpired"
    );
}
