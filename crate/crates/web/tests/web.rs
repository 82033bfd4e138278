use qswap_web::{compare_modes, delay_curve, describe_hex, encode_hex, LINK_LENGTHS};

#[test]
fn curve_covers_every_link_length() {
    let c = delay_curve(400.0, 0.9, 1, 0.0);
    assert_eq!(c.len(), LINK_LENGTHS.len());
    assert!(c.iter().all(|t| t.is_finite() && *t > 0.0));
    // Larger packets mask qubit loss on long links.
    let big = delay_curve(400.0, 0.9, 100, 0.0);
    assert!(big[9] < c[9]);
}

#[test]
fn undefined_points_are_nan() {
    assert!(delay_curve(400.0, 0.0, 1, 0.0).iter().all(|t| t.is_nan()));
}

#[test]
fn encoded_frames_decode() {
    let hex = encode_hex(12, 7, 0x5157, 3, 9).unwrap();
    let text = describe_hex(&hex).unwrap();
    assert!(text.contains("TokenTransfer (12)"));
    assert!(text.contains("level       3"));
    assert!(text.contains("token_id    9"));
    assert!(encode_hex(200, 0, 0, 0, 0).is_err());
    assert!(describe_hex("zz").is_err());
}

#[test]
fn wrapper_is_slower_under_collisions() {
    let r = compare_modes(1, 50.0, 0.3, 100.0, 1, 0.9, 2000, 1).unwrap();
    assert!(r[2] > r[0]);
    assert!((r[0] - r[4]).abs() < 4.0 * r[1]);
    assert!((r[2] - r[5]).abs() < 4.0 * r[3]);
}
