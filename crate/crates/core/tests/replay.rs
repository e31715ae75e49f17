mod common;

use std::sync::Arc;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use craftrl::replay::ReplayBuffer;

#[test]
fn ring_semantics_and_sampling() {
    println!("{}", common::a6_replay().unwrap());
}

#[test]
fn empty_buffer_is_unavailable() {
    let buf = ReplayBuffer::new(3).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(buf.sample(1, &mut r), Err(craftrl::Error::Unavailable(_))));
    assert!(buf.sample(0, &mut r).unwrap().is_empty());
    assert!(ReplayBuffer::new(0).is_err());
}

#[test]
fn malformed_segments_are_refused() {
    let buf = ReplayBuffer::new(3).unwrap();
    let mut s = common::dummy_segment(0, 3);
    s.valid[0] = false;
    s.dones[1] = true;
    assert!(buf.push(s).is_err());
    let mut s = common::dummy_segment(0, 3);
    s.observations.pop();
    assert!(buf.push(s).is_err());
    assert!(buf.is_empty());
}

#[test]
fn concurrent_writers_lose_nothing() {
    let buf = Arc::new(ReplayBuffer::new(1000).unwrap());
    let handles: Vec<_> = (0..4)
        .map(|w| {
            let buf = Arc::clone(&buf);
            thread::spawn(move || {
                for i in 0..50 {
                    buf.push(common::dummy_segment(w * 1000 + i, 1)).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(buf.total_written(), 200);
    let mut ids: Vec<u64> = buf.snapshot().iter().map(|s| s.episode_id).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 200);
}
