mod common;

#[test]
fn every_op_matches_central_differences() {
    for (name, err) in common::op_gradient_errors(100) {
        assert!(err < 1e-4, "{name}: relative error {err:e}");
    }
}

#[test]
fn rpl_loss_matches_central_differences() {
    let err = common::rpl_loss_gradient_error(100);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn elbo_matches_central_differences() {
    let err = common::elbo_gradient_error();
    assert!(err < 1e-3, "relative error {err:e}");
}

#[test]
fn mc_kl_matches_closed_form() {
    let (est, closed) = common::mc_kl_vs_closed_form(200_000);
    assert!(((est - closed) / closed).abs() < 0.01, "{est} vs {closed}");
}

#[test]
fn conv2d_matches_naive_loops_exactly() {
    assert_eq!(common::conv2d_mismatches(20), 0);
}
