use super::{NodeId, Tape, Tensor};

/// Compare analytic gradients against central finite differences.
///
/// `build` receives a tape plus the leaf ids for `inputs` (all marked
/// trainable) and must return a scalar loss node. Returns the max relative
/// error over every input coordinate, with the denominator floored at 1e-2
/// so near-zero gradients are compared absolutely.
pub fn grad_check<F>(inputs: &[Tensor], eps: f64, mut build: F) -> f64
where
    F: FnMut(&mut Tape, &[NodeId]) -> NodeId,
{
    assert!(eps > 0.0);
    let run = |xs: &[Tensor], build: &mut F| -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new(true);
        let ids: Vec<NodeId> = xs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let loss = build(&mut tape, &ids);
        let val = tape.data(loss)[0];
        let grads = tape.backward(loss).expect("scalar loss");
        let gs = ids
            .iter()
            .map(|&id| {
                grads
                    .wrt(id)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; tape.data(id).len()])
            })
            .collect();
        (val, gs)
    };

    let (_, analytic) = run(inputs, &mut build);

    let mut max_rel = 0.0f64;
    for (ti, t) in inputs.iter().enumerate() {
        for j in 0..t.numel() {
            let mut plus = inputs.to_vec();
            plus[ti].data_mut()[j] += eps;
            let (fp, _) = run(&plus, &mut build);
            let mut minus = inputs.to_vec();
            minus[ti].data_mut()[j] -= eps;
            let (fm, _) = run(&minus, &mut build);
            let numeric = (fp - fm) / (2.0 * eps);
            let ga = analytic[ti][j];
            let denom = ga.abs().max(numeric.abs()).max(1e-2);
            max_rel = max_rel.max((ga - numeric).abs() / denom);
        }
    }
    max_rel
}
