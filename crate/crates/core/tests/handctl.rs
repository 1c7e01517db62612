use neurohand_core::handctl::{decode_frame, encode_states, HandEmulator, Trajectory, FRAME_LEN};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn replay_through_wire_equals_direct_feed() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut wire = HandEmulator::default();
    let mut direct = HandEmulator::default();
    for _ in 0..1000 {
        let s: [bool; 5] = std::array::from_fn(|_| rng.gen_bool(0.3));
        assert!(wire.step_frame(&encode_states(&s), 0.02).unwrap());
        direct.targets = s;
        direct.step(0.02).unwrap();
        assert_eq!(wire.positions, direct.positions);
    }
}

#[test]
fn alternating_commands_stay_in_a_small_band() {
    let mut h = HandEmulator::default();
    h.positions = [0.5; 5];
    let dt = 0.02;
    let step = dt / 0.8;
    let mut prev = h.positions;
    for k in 0..200 {
        h.step_frame(&encode_states(&[k % 2 == 0; 5]), dt).unwrap();
        for f in 0..5 {
            assert!((h.positions[f] - prev[f]).abs() <= step + 1e-12);
            assert!((h.positions[f] - 0.5).abs() <= step + 1e-12);
        }
        prev = h.positions;
    }
}

#[test]
fn constant_flex_reaches_target_on_time() {
    let mut h = HandEmulator::default();
    let dt = 0.02;
    let mut traj = Trajectory::default();
    let mut reached = None;
    for k in 1..=100 {
        h.step_frame(&encode_states(&[true; 5]), dt).unwrap();
        traj.record(&h);
        if reached.is_none() && h.positions == [1.0; 5] {
            reached = Some(k as f64 * dt);
        }
    }
    let t = reached.unwrap();
    assert!((t - 0.8).abs() <= dt + 1e-9, "{t}");
    let csv = traj.to_csv();
    assert!(csv.starts_with("t,pos1,pos2,pos3,pos4,pos5\n"));
    assert_eq!(csv.lines().count(), 101);
}

proptest! {
    #[test]
    fn frame_round_trip(bits in 0u8..32) {
        let s: [bool; 5] = std::array::from_fn(|i| bits >> i & 1 == 1);
        prop_assert_eq!(decode_frame(&encode_states(&s)).unwrap(), s);
    }

    #[test]
    fn any_byte_corruption_rejected(bits in 0u8..32, pos in 0usize..FRAME_LEN, flip in 1u8..=255) {
        let s: [bool; 5] = std::array::from_fn(|i| bits >> i & 1 == 1);
        let mut f = encode_states(&s);
        f[pos] ^= flip;
        prop_assert!(decode_frame(&f).is_err());
    }
}
