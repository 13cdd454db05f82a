//! The reverse-mode tape on a two-layer GCN: build a loss, back-propagate,
//! and compare one weight's gradient with a central difference.
//!
//!     cargo run --example autodiff_gcn

use geomatch::dataset::shapes::sphere_cloud;
use geomatch::diffnet::{bce_with_pos_weight, gcn_layer, glorot_init, ParameterStore, Tape, Tensor};
use geomatch::geometry::build_knn_graph;
use geomatch::model::centered_features;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let graph = build_knn_graph(&sphere_cloud(0.04, 24, 3)?, 4)?;
    let x = centered_features(&graph);
    let targets = Tensor::from_vec(24, 1, (0..24).map(|i| f64::from(i % 5 == 0)).collect())?;

    let mut store = ParameterStore::new();
    let w1 = store.add("w1", glorot_init(3, 16, 1));
    let b1 = store.add("b1", Tensor::zeros(1, 16));
    let w2 = store.add("w2", glorot_init(16, 1, 2));
    let b2 = store.add("b2", Tensor::zeros(1, 1));

    let loss_of = |store: &ParameterStore, tape: &mut Tape| -> Result<_, Box<dyn std::error::Error>> {
        let h = tape.constant(x.clone());
        let (w1, b1, w2, b2) = (tape.param(store, w1), tape.param(store, b1), tape.param(store, w2), tape.param(store, b2));
        let h = gcn_layer(tape, &graph.normalized_adjacency, h, w1, b1, true)?;
        let logits = gcn_layer(tape, &graph.normalized_adjacency, h, w2, b2, false)?;
        Ok(bce_with_pos_weight(tape, logits, &targets, 4.0)?)
    };

    let mut tape = Tape::new();
    let loss = loss_of(&store, &mut tape)?;
    println!("loss {:.6} on a tape of {} nodes", tape.value(loss).item(), tape.len());
    tape.backward(loss, Some(&mut store))?;
    let analytic = store.grad(w1).unwrap().get(2, 5);

    let h = 1e-6;
    let probe = |delta: f64| -> Result<f64, Box<dyn std::error::Error>> {
        let mut s = store.clone();
        let v = s.value(w1).get(2, 5);
        s.value_mut(w1).set(2, 5, v + delta);
        let mut t = Tape::new();
        let l = loss_of(&s, &mut t)?;
        Ok(t.value(l).item())
    };
    let numeric = (probe(h)? - probe(-h)?) / (2.0 * h);
    println!("dL/dw1[2,5]: analytic {analytic:.9e}, central difference {numeric:.9e}");
    println!("relative error {:.2e}", (analytic - numeric).abs() / numeric.abs().max(1e-12));
    Ok(())
}
