//! Encoding, attention and tokenizer invariants over generated inputs.

mod common;

use common::invariants;

macro_rules! invariant_tests {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = invariants::$name() {
                    panic!("{e}");
                }
            }
        )*
    };
}

invariant_tests!(
    cumulative_curve_never_decreases,
    rendered_dose_curve_only_rises,
    medication_ink_stays_inside_its_panel,
    clinical_ink_stays_inside_its_panel,
    primitives_respect_the_clip_rect,
    softmax_rows_sum_to_one,
    multi_head_weights_sum_to_one,
    bpe_round_trips_arbitrary_text,
    tokenize_is_bounded_and_cls_led,
);
