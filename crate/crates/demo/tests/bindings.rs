use harnack_lab_demo::{conformal_snapshot, cutoff_profile, gaussian_harnack};

#[test]
fn gaussian_error_shrinks_with_resolution() {
    let err = |n: usize| {
        let f = gaussian_harnack(n, 0.4).unwrap();
        let c = n * (n / 2) + n / 2;
        (f.values()[c] - f.reference()[c]).abs()
    };
    let (coarse, fine) = (err(24), err(48));
    assert!(fine < coarse / 3.0, "{coarse} -> {fine}");
}

#[test]
fn flat_start_stays_flat() {
    let f = conformal_snapshot(0.0, 16, 0.1).unwrap();
    assert!(f.values().iter().all(|r| r.abs() < 1e-12));
}

#[test]
fn cutoff_is_monotone() {
    let c = cutoff_profile(101).unwrap();
    assert!(c.psi().windows(2).all(|w| w[1] <= w[0]));
    assert!(c.dpsi().iter().all(|d| *d <= 0.0));
}
