use std::collections::HashSet;
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::Duration;

use tuplespace::rng::SplitMix64;
use tuplespace::testing::{random_script, run_script, small_template, small_tuple, ScriptOp, ShadowSpace};
use tuplespace::{template, tuple, LocalSpace, PatternField, Template};

#[test]
fn indexed_store_agrees_with_linear_scan() {
    let mut rng = SplitMix64::new(0x5eed);
    for _ in 0..5_000 {
        let len = 1 + rng.below(40) as usize;
        let script = random_script(&mut rng, len);
        let space = LocalSpace::new();
        let got = run_script(&space, &script).unwrap();
        let want = ShadowSpace::new().run(&script);
        assert_eq!(got, want, "script {script:?}");
    }
}

#[test]
fn conservation_over_serial_histories() {
    let mut rng = SplitMix64::new(11);
    for _ in 0..500 {
        let space = LocalSpace::new();
        let probe = small_template(&mut rng);
        let (mut written, mut taken) = (0usize, 0usize);
        for _ in 0..60 {
            if rng.chance(0.6) {
                let t = small_tuple(&mut rng);
                written += probe.matches(&t) as usize;
                space.out(t);
            } else if let Some(t) = space.inp(&small_template(&mut rng)) {
                taken += probe.matches(&t) as usize;
            }
        }
        assert_eq!(space.count(&probe), written - taken);
    }
}

#[test]
fn fifo_selection_across_buckets() {
    let space = LocalSpace::new();
    space.out(tuple![1i64, "x"]);
    space.out(tuple!["a", 2i64]);
    space.out(tuple![3i64, "y"]);
    let any2 = template![PatternField::Any, PatternField::Any];
    let order: Vec<_> = std::iter::from_fn(|| space.inp(&any2)).collect();
    assert_eq!(order, vec![tuple![1i64, "x"], tuple!["a", 2i64], tuple![3i64, "y"]]);
}

#[test]
fn str_head_template_sees_headless_bucket() {
    let space = LocalSpace::new();
    let mut shadow = ShadowSpace::new();
    let ops = vec![
        ScriptOp::Out(tuple![5i64, "a"]),
        ScriptOp::Out(tuple!["a", 5i64]),
        ScriptOp::Rdp(template![PatternField::Any, "a"]),
        ScriptOp::Rdp(template!["a", PatternField::Any]),
        ScriptOp::Count(template![PatternField::Any, PatternField::Any]),
    ];
    assert_eq!(run_script(&space, &ops).unwrap(), shadow.run(&ops));
}

fn take_race(k: usize, extra: usize) {
    let space = LocalSpace::new();
    for i in 0..k {
        space.out(tuple!["job", i as i64]);
    }
    let template: Template = template!["job", PatternField::Any];
    let start = Arc::new(Barrier::new(k + extra));
    let handles: Vec<_> = (0..k + extra)
        .map(|_| {
            let (space, template, start) = (space.clone(), template.clone(), start.clone());
            thread::spawn(move || {
                start.wait();
                space.inp(&template)
            })
        })
        .collect();
    let won: Vec<_> = handles.into_iter().filter_map(|h| h.join().unwrap()).collect();
    assert_eq!(won.len(), k);
    let distinct: HashSet<i64> = won.iter().map(|t| t[1].as_i64().unwrap()).collect();
    assert_eq!(distinct.len(), k);
    assert!(space.is_empty());
}

#[test]
fn atomic_take_under_races() {
    for k in [1, 2, 8, 64] {
        take_race(k, 7);
    }
}

#[test]
fn blocked_takers_each_get_one_tuple() {
    let space = LocalSpace::new();
    let template: Template = template!["w", PatternField::Any];
    let handles: Vec<_> = (0..16)
        .map(|_| {
            let (space, template) = (space.clone(), template.clone());
            thread::spawn(move || space.take(&template, Some(Duration::from_secs(10))).unwrap())
        })
        .collect();
    while space.waiting() < 16 {
        thread::yield_now();
    }
    for i in 0..16 {
        space.out(tuple!["w", i as i64]);
    }
    let got: HashSet<i64> = handles.into_iter().map(|h| h.join().unwrap()[1].as_i64().unwrap()).collect();
    assert_eq!(got.len(), 16);
    assert!(space.is_empty());
    assert_eq!(space.waiting(), 0);
}

#[test]
fn no_lost_wake_up_when_out_races_registration() {
    for round in 0..500i64 {
        let space = LocalSpace::new();
        let waiter = {
            let space = space.clone();
            thread::spawn(move || {
                if round % 2 == 0 {
                    space.rd(&template!["r", round], Some(Duration::from_secs(10)))
                } else {
                    space.take(&template!["r", round], Some(Duration::from_secs(10)))
                }
            })
        };
        space.out(tuple!["r", round]);
        assert_eq!(waiter.join().unwrap().unwrap(), tuple!["r", round]);
        assert_eq!(space.len(), (round % 2 == 0) as usize);
        assert_eq!(space.waiting(), 0);
    }
}

#[test]
fn registered_reader_and_taker_both_complete() {
    for round in 0..200i64 {
        let space = LocalSpace::new();
        let reader = {
            let space = space.clone();
            thread::spawn(move || space.rd(&template!["r", round], Some(Duration::from_secs(10))))
        };
        let taker = {
            let space = space.clone();
            thread::spawn(move || space.take(&template!["r", round], Some(Duration::from_secs(10))))
        };
        while space.waiting() < 2 {
            thread::yield_now();
        }
        space.out(tuple!["r", round]);
        assert_eq!(reader.join().unwrap().unwrap(), tuple!["r", round]);
        assert_eq!(taker.join().unwrap().unwrap(), tuple!["r", round]);
        assert!(space.is_empty());
    }
}
