//! Checks reverse-mode gradients of a small graph against central differences.

use rpl::autodiff::{finite_difference_check, graph_fn};
use rpl::heads::{rpl_nll_batch, RplConfig};
use rpl::Tensor;

fn main() -> rpl::Result<()> {
    let x = Tensor::new(vec![2, 3], vec![0.2, -0.7, 1.1, 0.5, 0.3, -0.9])?;
    let w = Tensor::new(vec![3, 3], vec![0.4, -0.1, 0.3, 0.8, 0.2, -0.5, -0.6, 0.7, 0.1])?;
    let b = Tensor::from_vec(vec![0.05, -0.02, 0.01]);
    let cfg = RplConfig::new(3, 1.0, 5.0)?;

    let rpl_loss = graph_fn(|tape, v| {
        let o = tape.constant(x.clone()).affine(v[0], v[1])?.relu();
        rpl_nll_batch(o, &[0, 2], &cfg)
    });
    let softmax_loss = graph_fn(|tape, v| tape.constant(x.clone()).affine(v[0], v[1])?.softmax_cross_entropy(&[0, 2]));

    for (name, err) in [
        ("dense + relu + rpl loss", finite_difference_check(rpl_loss, &[w.clone(), b.clone()], 1e-5)?),
        ("dense + softmax cross-entropy", finite_difference_check(softmax_loss, &[w, b], 1e-5)?),
    ] {
        println!("{name:<30} max relative error {err:.2e}");
    }
    Ok(())
}
