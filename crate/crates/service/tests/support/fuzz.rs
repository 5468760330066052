//! Randomized request sequences against a session, checked against a model
//! of the state machine. Every sequence is written through to disk and
//! reloaded by replay at the end.

use std::collections::HashMap;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use interseg_core::io::encode_mask_sgrid;
use interseg_core::pipeline::PipelineParams;
use interseg_core::synth::{sample, BlobParams};
use interseg_core::{Label, Seed};
use interseg_service::store::{load_one, Store};
use interseg_service::{Point, Session, SessionError, Status};

#[derive(Debug, Default)]
pub struct FuzzReport {
    pub sequences: usize,
    pub requests: usize,
    pub rejected: usize,
    /// Successful refinement rounds.
    pub refinements: usize,
    pub violations: Vec<String>,
}

#[derive(Clone, Copy, Debug)]
enum Expect {
    Ok,
    /// Rejected as invalid input.
    Invalid,
    /// Rejected as illegal in the current state.
    State,
}

fn coords(rng: &mut ChaCha8Rng, dims: &[usize], inside: bool) -> Vec<usize> {
    let mut c: Vec<usize> = dims.iter().map(|&d| rng.random_range(0..d)).collect();
    if !inside {
        let k = rng.random_range(0..dims.len());
        c[k] = dims[k] + rng.random_range(0..3);
    }
    c
}

fn label(rng: &mut ChaCha8Rng) -> Label {
    if rng.random_bool(0.5) {
        Label::Foreground
    } else {
        Label::Background
    }
}

/// Latest label per clicked cell over the whole history.
fn expected_labels(history: &[Vec<Seed>]) -> HashMap<Vec<usize>, Label> {
    let mut m = HashMap::new();
    for c in history.iter().flatten() {
        m.insert(c.coords.clone(), c.label);
    }
    m
}

pub fn run_fuzz(sequences: usize, seed: u64) -> FuzzReport {
    let dir = tempfile::tempdir().expect("tempdir");
    let store = Store::new(Some(dir.path().to_path_buf()), Duration::from_secs(3600));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = FuzzReport::default();
    for q in 0..sequences {
        let three_d = q % 5 == 4;
        let (bp, params) = if three_d {
            (
                BlobParams {
                    dims: vec![6, 10, 10],
                    ..BlobParams::volume()
                },
                PipelineParams {
                    working_dims: Some(vec![6, 8, 8]),
                    bbox_margin: Some(1),
                    ..Default::default()
                },
            )
        } else {
            (
                BlobParams {
                    dims: vec![20, 20],
                    ..Default::default()
                },
                PipelineParams {
                    working_dims: Some(vec![16, 16]),
                    bbox_margin: Some(2),
                    ..Default::default()
                },
            )
        };
        let img = sample(&bp, seed.wrapping_mul(7919).wrapping_add(q as u64)).image;
        let dims = img.dims().to_vec();
        let id = format!("fuzz-{q}");
        let mut s = Session::new(id.clone(), img, params);
        store.insert(s.clone()).expect("insert");
        macro_rules! check {
            ($ok:expr, $msg:expr $(,)?) => {
                if !$ok {
                    rep.violations.push(format!("seq {q}: {}", $msg));
                }
            };
        }
        let steps = rng.random_range(1..16);
        for _ in 0..steps {
            rep.requests += 1;
            let before_rec = s.record();
            let before_masks = s.mask_history().to_vec();
            let status = s.status();
            let op = if status == Status::AwaitingPoints && rng.random_bool(0.6) {
                0
            } else {
                rng.random_range(0..10)
            };
            let (expect, result): (Expect, Result<(), SessionError>) = match op {
                0..=1 => {
                    let n = if rng.random_bool(0.8) { rng.random_range(2..6) } else { rng.random_range(0..2) };
                    let bad = rng.random_bool(0.15);
                    let pts: Vec<Point> = (0..n)
                        .map(|i| Point {
                            coords: coords(&mut rng, &dims, !(bad && i == 0)),
                        })
                        .collect();
                    let e = match status {
                        Status::AwaitingPoints if n >= 2 && !bad => Expect::Ok,
                        Status::AwaitingPoints => Expect::Invalid,
                        _ => Expect::State,
                    };
                    (e, s.submit_points(&pts).map(|_| ()))
                }
                2..=5 => {
                    let n = if rng.random_bool(0.9) { rng.random_range(1..4) } else { 0 };
                    let bad = rng.random_bool(0.1);
                    let mut clicks: Vec<Seed> = (0..n)
                        .map(|i| Seed {
                            coords: coords(&mut rng, &dims, !(bad && i == 0)),
                            label: label(&mut rng),
                        })
                        .collect();
                    if n > 0 && !bad && rng.random_bool(0.1) {
                        let mut c = clicks[0].clone();
                        c.label = match c.label {
                            Label::Foreground => Label::Background,
                            Label::Background => Label::Foreground,
                        };
                        clicks.push(c);
                    }
                    // random clicks may also collide with opposite labels
                    let contradict = clicks
                        .iter()
                        .any(|a| clicks.iter().any(|b| a.coords == b.coords && a.label != b.label));
                    let e = match status {
                        Status::Segmented if n > 0 && !bad && !contradict => Expect::Ok,
                        Status::Segmented => Expect::Invalid,
                        _ => Expect::State,
                    };
                    (e, s.submit_clicks(&clicks).map(|_| ()))
                }
                6..=7 => {
                    let e = match status {
                        Status::Segmented if !s.click_history().is_empty() => Expect::Ok,
                        _ => Expect::State,
                    };
                    (e, s.undo().map(|_| ()))
                }
                8 => {
                    let e = match status {
                        Status::Segmented => Expect::Ok,
                        _ => Expect::State,
                    };
                    (e, s.accept())
                }
                _ => {
                    let r = rng.random_range(0..4);
                    let ok = r < s.mask_history().len();
                    let got = s.mask(Some(r)).cloned();
                    check!(got.is_ok() == ok, format!("mask({r}) availability wrong"));
                    if let Ok(m) = got {
                        check!(m == s.mask_history()[r], format!("mask({r}) differs from history"));
                    }
                    (Expect::Ok, Ok(()))
                }
            };
            match (&expect, &result) {
                (Expect::Ok, Ok(())) => {}
                (Expect::Invalid, Err(SessionError::Invalid(_))) | (Expect::State, Err(SessionError::State(_))) => {
                    rep.rejected += 1;
                }
                _ => check!(false, format!("op {op} in {status:?}: expected {expect:?}, got {result:?}")),
            }
            if result.is_err() {
                check!(
                    s.record() == before_rec && s.mask_history() == before_masks.as_slice(),
                    format!("failed op {op} mutated the session"),
                );
                continue;
            }
            if (2..=5).contains(&op) {
                rep.refinements += 1;
            }
            let after = s.status();
            let legal = status == after
                || matches!(
                (status, after),
                (Status::AwaitingPoints, Status::Segmented) | (Status::Segmented, Status::Accepted)
            );
            check!(legal, format!("illegal transition {status:?} -> {after:?}"));
            let h = s.click_history().len();
            let m = s.mask_history().len();
            match after {
                Status::AwaitingPoints => check!(h == 0 && m == 0, format!("histories {h}/{m} before points")),
                _ => check!(m == h + 1, format!("torn history: {h} batches, {m} masks")),
            }
            if op == 6 || op == 7 {
                check!(
                    s.mask_history() == &before_masks[..before_masks.len() - 1],
                    "undo did not restore the previous mask",
                );
            } else if m > 0 {
                check!(
                    s.mask_history()[..m - 1] == before_masks[..before_masks.len().min(m - 1)],
                    "earlier masks changed",
                );
            }
            if let Some(latest) = s.mask_history().last() {
                for (c, l) in expected_labels(s.click_history()) {
                    check!(
                        latest.get(&c).unwrap() == (l == Label::Foreground),
                        format!("click {c:?} does not carry label {l:?}"),
                    );
                }
            }
            store.persist(&s).expect("persist");
        }
        match load_one(&dir.path().join(&id)) {
            Ok(r) => {
                check!(r.record() == s.record(), "replayed record differs");
                let bytes = |x: &Session| -> Vec<Vec<u8>> {
                    x.mask_history()
                        .iter()
                        .map(|m| encode_mask_sgrid(m, x.image().spacing()))
                        .collect()
                };
                check!(bytes(&r) == bytes(&s), "replayed masks not byte-identical");
            }
            Err(e) => check!(false, format!("reload failed: {e}")),
        }
        rep.sequences += 1;
    }
    rep
}
