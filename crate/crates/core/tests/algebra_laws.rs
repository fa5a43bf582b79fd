mod common;

use common::*;

#[test]
fn decompose_then_compose_is_identity() {
    check(bilingual_alignment(), round_trip).unwrap();
}

#[test]
fn compose_rejects_the_first_conflicting_frame() {
    check(monolingual_streams(), conflict_rejection).unwrap();
}

#[test]
fn masks_reinterleave_to_the_original() {
    check(bilingual_labels(), mask_reconstruction).unwrap();
}

#[test]
fn collapse_commutes_with_language_projection() {
    check(bilingual_alignment(), projection_consistency).unwrap();
}

#[test]
fn mixed_errors_bound_projected_errors() {
    check(hyp_and_reference(), mixed_errors_bound_projections).unwrap();
}
