//! Property checks shared by the law suite and the acceptance target.

#![allow(dead_code)]

use condrnnt::alignments::{collapse, compose, decompose, mask_labels, Language, BLANK};
use condrnnt::data::toy_vocabulary;
use condrnnt::metrics::mixed_error_rate;
use condrnnt::Error;
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub const LAW_CASES: u32 = 1000;
const MAX_UNITS: usize = 4;
const MAX_FRAMES: usize = 12;

/// Runs `law` on `LAW_CASES` deterministic samples of `strategy`.
pub fn check<S, F>(strategy: S, law: F) -> Result<(), String>
where
    S: Strategy,
    S::Value: std::fmt::Debug,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    let config = Config {
        cases: LAW_CASES,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(RngAlgorithm::ChaCha);
    TestRunner::new_with_rng(config, rng)
        .run(&strategy, law)
        .map_err(|e| e.to_string())
}

/// `(m_units, e_units, bilingual alignment)`.
pub fn bilingual_alignment() -> impl Strategy<Value = (usize, usize, Vec<usize>)> {
    (1..=MAX_UNITS, 1..=MAX_UNITS)
        .prop_flat_map(|(m, e)| (Just(m), Just(e), vec(0..=m + e, 0..=MAX_FRAMES)))
}

/// `(m_units, e_units, label sequence)` with no blanks.
pub fn bilingual_labels() -> impl Strategy<Value = (usize, usize, Vec<usize>)> {
    (1..=MAX_UNITS, 1..=MAX_UNITS)
        .prop_flat_map(|(m, e)| (Just(m), Just(e), vec(1..=m + e, 0..=MAX_FRAMES)))
}

/// `(m_units, e_units, zm, ze)`: independent monolingual streams of equal
/// length that may collide.
pub fn monolingual_streams() -> impl Strategy<Value = (usize, usize, Vec<usize>, Vec<usize>)> {
    (1..=MAX_UNITS, 1..=MAX_UNITS, 0..=MAX_FRAMES).prop_flat_map(|(m, e, t)| {
        (
            Just(m),
            Just(e),
            vec(prop_oneof![Just(BLANK), 1..=m], t),
            vec(prop_oneof![Just(BLANK), m + 1..=m + e], t),
        )
    })
}

pub fn round_trip((m, e, z): (usize, usize, Vec<usize>)) -> Result<(), TestCaseError> {
    let vocab = toy_vocabulary(m, e);
    let (zm, ze) = decompose(&z, &vocab);
    let back = compose(&zm, &ze).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(&*back, &z[..]);
    prop_assert_eq!(decompose(&back, &vocab), (zm, ze));
    Ok(())
}

pub fn conflict_rejection((m, e, zm, ze): (usize, usize, Vec<usize>, Vec<usize>)) -> Result<(), TestCaseError> {
    let vocab = toy_vocabulary(m, e);
    let first = zm.iter().zip(&ze).position(|(&a, &b)| a != BLANK && b != BLANK);
    match (compose(&zm, &ze), first) {
        (Err(Error::Conflict(t)), Some(f)) => prop_assert_eq!(t, f),
        (Ok(z), None) => {
            let (dm, de) = decompose(&z, &vocab);
            prop_assert_eq!(&*dm, &zm[..]);
            prop_assert_eq!(&*de, &ze[..]);
        }
        (got, want) => return Err(TestCaseError::fail(format!("compose gave {got:?}, first conflict {want:?}"))),
    }
    Ok(())
}

pub fn mask_reconstruction((m, e, y): (usize, usize, Vec<usize>)) -> Result<(), TestCaseError> {
    let vocab = toy_vocabulary(m, e);
    let ym = mask_labels(&y, Language::M, &vocab);
    let ye = mask_labels(&y, Language::E, &vocab);
    let (mut im, mut ie) = (ym.iter(), ye.iter());
    let rebuilt: Vec<usize> = y
        .iter()
        .map(|&s| match vocab.language(s) {
            Some(Language::M) => im.next().copied(),
            _ => ie.next().copied(),
        })
        .collect::<Option<_>>()
        .ok_or_else(|| TestCaseError::fail("masked sequence ran short"))?;
    prop_assert_eq!(rebuilt, y);
    prop_assert!(im.next().is_none() && ie.next().is_none());
    Ok(())
}

pub fn projection_consistency((m, e, z): (usize, usize, Vec<usize>)) -> Result<(), TestCaseError> {
    let vocab = toy_vocabulary(m, e);
    let (zm, ze) = decompose(&z, &vocab);
    let y = collapse(&compose(&zm, &ze).map_err(|e| TestCaseError::fail(e.to_string()))?);
    prop_assert_eq!(mask_labels(&y, Language::M, &vocab), collapse(&zm));
    prop_assert_eq!(mask_labels(&y, Language::E, &vocab), collapse(&ze));
    Ok(())
}

/// Mixed error count bounds both per-language projected error counts.
pub fn mixed_errors_bound_projections(
    ((m, e, hyp), r): ((usize, usize, Vec<usize>), Vec<usize>),
) -> Result<(), TestCaseError> {
    let vocab = toy_vocabulary(m, e);
    let reference: Vec<usize> = r.iter().map(|&s| 1 + s % (m + e)).collect();
    let s = mixed_error_rate(&hyp, &reference, &vocab);
    prop_assert!(s.mixed.errors() >= s.m.errors().max(s.e.errors()));
    Ok(())
}

pub fn hyp_and_reference() -> impl Strategy<Value = ((usize, usize, Vec<usize>), Vec<usize>)> {
    (bilingual_labels(), vec(0..64usize, 0..=MAX_FRAMES))
}

/// Sum over every label sequence over `units` symbols of the CTC
/// probability under one random `frames x (units + 1)` posterior.
pub fn total_ctc_probability(frames: usize, units: usize, seed: u64) -> f64 {
    use condrnnt::alignments::min_ctc_frames;
    use condrnnt::losses::ctc_loss;
    use condrnnt::numerics::{Tape, Tensor};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let classes = units + 1;
    let mut logp = Tensor::zeros(&[frames, classes]);
    for row in logp.data_mut().chunks_mut(classes) {
        row.iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
        let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    let mut sequences: Vec<Vec<usize>> = vec![Vec::new()];
    let mut frontier = sequences.clone();
    for _ in 0..frames {
        frontier = frontier
            .iter()
            .flat_map(|y| (1..classes).map(move |s| [y.clone(), vec![s]].concat()))
            .collect();
        sequences.extend(frontier.iter().cloned());
    }
    sequences
        .iter()
        .filter(|y| min_ctc_frames(y) <= frames)
        .map(|y| {
            let mut tape = Tape::new();
            let v = tape.constant(logp.clone());
            let l = ctc_loss(&mut tape, v, y).expect("feasible");
            (-tape.value(l).item()).exp()
        })
        .sum()
}
