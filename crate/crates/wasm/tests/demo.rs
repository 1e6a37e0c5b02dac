use borninfeld_wasm::DiscDemo;
use serde_json::Value;

#[test]
fn empty_disc_solves_to_zero() {
    let mut d = DiscDemo::new(33).unwrap();
    let s: Value = serde_json::from_str(&d.solve(1e-8).unwrap()).unwrap();
    assert_eq!(s["converged"], true);
    let h = d.heights().unwrap();
    assert_eq!(h.len(), 33 * 33);
    assert!(h.iter().filter(|v| !v.is_nan()).all(|v| *v == 0.0));
    // Corners of the bounding box are outside the disc.
    assert!(h[0].is_nan());
    assert!(d.light_segments(0.0).unwrap().is_empty());
}

#[test]
fn central_charge_is_radially_symmetric_and_positive() {
    let mut d = DiscDemo::new(65).unwrap();
    d.add_charge(0.0, 0.0, 1.0).unwrap();
    let s: Value = serde_json::from_str(&d.solve(1e-7).unwrap()).unwrap();
    assert_eq!(s["converged"], true);
    assert!(s["max_gradient"].as_f64().unwrap() < 1.0 + 1e-6);
    let n = d.nodes();
    let h = d.heights().unwrap();
    let c = (n / 2) * n + n / 2;
    let (mid, off) = (n / 2, 10);
    let at = |i: usize, j: usize| h[j * n + i];
    assert!(h[c] > 0.5);
    let ring = [at(mid + off, mid), at(mid - off, mid), at(mid, mid + off), at(mid, mid - off)];
    for v in ring {
        assert!((v - ring[0]).abs() < 1e-9, "{ring:?}");
    }
    let w = d.energy().unwrap();
    assert!(w.iter().filter(|v| !v.is_nan()).all(|v| *v >= 1.0));
}

#[test]
fn invalid_requests_are_refused() {
    assert!(DiscDemo::new(5).is_err());
    let mut d = DiscDemo::new(33).unwrap();
    assert!(d.add_charge(0.95, 0.0, 1.0).is_err());
    assert!(d.add_charge(0.0, 0.0, 0.0).is_err());
    assert!(d.heights().is_err());
    d.add_charge(0.2, -0.1, -0.5).unwrap();
    assert_eq!(d.charges(), vec![0.2, -0.1, -0.5]);
    d.clear();
    assert!(d.charges().is_empty());
}
