use hypclosure_demo::{pn_stability, solve_pn, speeds_to_closure};

#[test]
fn speeds_round_trip() {
    let v = speeds_to_closure("-0.8, -0.2 0.3,0.9").unwrap();
    assert_eq!(v["order"], 3);
    assert!(v["max_error"].as_f64().unwrap() < 1e-10);
    assert_eq!(v["weights"].as_array().unwrap().len(), 4);
}

#[test]
fn speeds_rejects_garbage() {
    assert!(speeds_to_closure("0.1, abc").is_err());
    assert!(speeds_to_closure("0.5").is_err());
}

#[test]
fn pn_matches_gauss_and_is_stable() {
    let v = pn_stability(4, 1.0, 1.0, 50).unwrap();
    let eig = v["eigenvalues"].as_array().unwrap();
    let nodes = v["gauss_nodes"].as_array().unwrap();
    for (e, n) in eig.iter().zip(nodes) {
        assert!((e[0].as_f64().unwrap() - n.as_f64().unwrap()).abs() < 1e-10);
    }
    assert_eq!(v["unstable_count"], 0);
    assert_eq!(v["xi"].as_array().unwrap().len(), 101);
}

#[test]
fn small_solve_tracks_kinetic() {
    let v = solve_pn("constant", 3, 64, 0.2).unwrap();
    assert_eq!(v["m0"].as_array().unwrap().len(), 64);
    let err = v["relative_l2"].as_f64().unwrap();
    assert!(err < 0.05, "{err}");
}

#[test]
fn solve_validates_inputs() {
    assert!(solve_pn("nope", 3, 64, 0.2).is_err());
    assert!(solve_pn("constant", 3, 8, 0.2).is_err());
    assert!(solve_pn("constant", 3, 64, -1.0).is_err());
}
