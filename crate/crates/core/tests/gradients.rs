#[path = "support/grad_sweep.rs"]
mod grad_sweep;

use grad_sweep::{sweep, Kind, Precision};

const SHAPES: u64 = 100;

fn assert_sweep(kind: Kind) {
    for precision in [Precision::F64, Precision::F32] {
        let s = sweep(SHAPES, &[kind], precision);
        assert!(
            s.passed(),
            "{} {precision:?} over {} shapes: worst {:.3e}\n{}",
            kind.name(),
            s.shapes,
            s.worst,
            s.failures.join("\n")
        );
    }
}

#[test]
fn generator_parameters() {
    assert_sweep(Kind::Generator);
}

#[test]
fn inference_net_parameters_and_input() {
    assert_sweep(Kind::InferenceNet);
}

#[test]
fn score_head_parameters_and_inputs() {
    assert_sweep(Kind::ScoreHead);
}

#[test]
fn q_and_category_heads() {
    assert_sweep(Kind::Heads);
}

#[test]
fn discriminator_objective() {
    assert_sweep(Kind::DObjective);
}

#[test]
fn generator_objective_with_frozen_kept_sets() {
    assert_sweep(Kind::GObjective);
}

#[test]
fn inference_loss_with_frozen_kept_set() {
    assert_sweep(Kind::InferenceLoss);
}

#[test]
fn correlation_loss() {
    assert_sweep(Kind::CorrelationLoss);
}

#[test]
fn category_loss() {
    assert_sweep(Kind::CategoryLoss);
}

#[test]
fn redraws_are_rare() {
    let s = sweep(SHAPES, &Kind::ALL, Precision::F64);
    assert!(s.passed());
    // a kink within the step should be the exception, not the rule
    assert!(s.redraws * 20 < s.checks as u64, "{} redraws over {} checks", s.redraws, s.checks);
}
