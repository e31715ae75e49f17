mod common;

use craftrl::demo::{subsample, DemoFrame, SubsampleConfig};
use craftrl::env::{ChainCraft, ComposedAction, EnvConfig, Head, Item, Turn};

fn frames(actions: &[(ComposedAction, i32)]) -> Vec<DemoFrame> {
    let env = ChainCraft::new(EnvConfig::default()).unwrap();
    let (_, obs) = env.reset(0).unwrap();
    actions
        .iter()
        .map(|(a, cam)| DemoFrame {
            observation: obs.clone(),
            action: *a,
            camera: *cam,
            reward: 0.0,
        })
        .collect()
}

fn multipliers(actions: &[(ComposedAction, i32)], cfg: &SubsampleConfig) -> Vec<u32> {
    subsample(&frames(actions), 0, cfg)
        .records
        .iter()
        .map(|r| r.action.multiplier)
        .collect()
}

#[test]
fn conservation_over_random_demos() {
    println!("{}", common::a5_subsampling().unwrap());
}

#[test]
fn five_identical_mines_become_four_and_one() {
    let run = vec![(ComposedAction::mining(), 0); 5];
    assert_eq!(multipliers(&run, &SubsampleConfig::default()), vec![4, 1]);
}

#[test]
fn only_noops_give_an_empty_episode() {
    let out = subsample(&frames(&vec![(ComposedAction::noop(), 0); 7]), 0, &SubsampleConfig::default());
    assert!(out.is_empty());
    assert_eq!(out.stats.noop_dropped, 7);
}

#[test]
fn fine_turns_accumulate_into_one_record() {
    let right = ComposedAction::turning(Turn::Right);
    let out = subsample(&frames(&vec![(right, 10); 3]), 0, &SubsampleConfig::default());
    assert_eq!(out.len(), 1);
    assert_eq!(out.records[0].action, right);
    assert_eq!(out.stats.camera_dropped, 2);
}

#[test]
fn direction_change_flushes_the_accumulator() {
    let right = ComposedAction::turning(Turn::Right);
    let left = ComposedAction::turning(Turn::Left);
    let out = subsample(&frames(&[(right, 10), (right, 10), (left, -10)]), 0, &SubsampleConfig::default());
    assert!(out.is_empty());
    assert_eq!(out.stats.camera_dropped, 3);
}

#[test]
fn excluded_heads_are_dropped_without_compensation() {
    let cfg = SubsampleConfig {
        excluded_heads: vec![Head::Equip],
        ..Default::default()
    };
    let equip = ComposedAction::equipping(Item::WoodenPickaxe);
    let out = subsample(&frames(&[(equip, 0), (ComposedAction::mining(), 0)]), 0, &cfg);
    assert_eq!(out.len(), 1);
    assert_eq!(out.stats.excluded_dropped, 1);
}

#[test]
fn subsampling_is_idempotent() {
    let demos = craftrl::demo::generate_demos(10, 3, 0.3, &EnvConfig::default()).unwrap();
    let cfg = SubsampleConfig::default();
    for d in demos {
        let d = d.with_fine_rotation(10).unwrap();
        let once = subsample(&d.frames, d.seed, &cfg);
        let twice = subsample(&once.as_frames(), d.seed, &cfg);
        assert_eq!(once.records, twice.records);
    }
}

#[test]
fn truncation_keeps_the_prefix() {
    let mut actions = Vec::new();
    for i in 0..30 {
        let a = if i % 2 == 0 { ComposedAction::mining() } else { ComposedAction::turning(Turn::Left) };
        actions.push((a, if i % 2 == 0 { 0 } else { -30 }));
    }
    let cfg = SubsampleConfig {
        truncation: 10,
        ..Default::default()
    };
    let out = subsample(&frames(&actions), 0, &cfg);
    assert_eq!(out.len(), 10);
    assert_eq!(out.stats.truncated_frames, 20);
    assert_eq!(out.records[0].action, ComposedAction::mining());
}
