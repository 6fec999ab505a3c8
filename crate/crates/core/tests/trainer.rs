use topoprune_core::persistence::{total_neural_persistence, NormOrder};
use topoprune_core::pruning::{
    build_imp_schedule, magnitude_mask, run_iterative, PruneLoop, RemovalBase, TrainSummary,
};
use topoprune_core::trainer::{
    train, Activation, Dataset, DenseNet, TrainConfig, DESK_LAYERS,
};
use topoprune_core::Error;

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        // Both vanish: compare absolutely.
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Central differences of the batch loss with h = 1e-5.
fn finite_difference_check(net: &DenseNet, data: &Dataset) -> f64 {
    let h = 1e-5;
    let pass = net.forward(data.features(), data.len()).unwrap();
    let grads = net.backward(&pass, data.labels()).unwrap();
    let mut worst: f64 = 0.0;
    for (k, layer) in net.layers().iter().enumerate() {
        let (rows, cols) = (layer.inputs(), layer.outputs());
        for r in 0..rows {
            for c in 0..cols {
                let w0 = layer.weights.get(r, c);
                let mut plus = net.clone();
                plus.set_weight(k, r, c, w0 + h).unwrap();
                let mut minus = net.clone();
                minus.set_weight(k, r, c, w0 - h).unwrap();
                let fd = (plus.loss(data.features(), data.labels()).unwrap()
                    - minus.loss(data.features(), data.labels()).unwrap())
                    / (2.0 * h);
                worst = worst.max(rel_err(grads.weights[k][r * cols + c], fd));
            }
        }
        for j in 0..cols {
            let b0 = layer.bias[j];
            let mut plus = net.clone();
            plus.set_bias(k, j, b0 + h).unwrap();
            let mut minus = net.clone();
            minus.set_bias(k, j, b0 - h).unwrap();
            let fd = (plus.loss(data.features(), data.labels()).unwrap()
                - minus.loss(data.features(), data.labels()).unwrap())
                / (2.0 * h);
            worst = worst.max(rel_err(grads.biases[k][j], fd));
        }
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let mut net = DenseNet::init(&[5, 7, 6, 3], Activation::Tanh, 2024).unwrap();
    // Non-zero biases exercise the bias path too.
    for k in 0..3 {
        for j in 0..net.layers()[k].outputs() {
            net.set_bias(k, j, 0.1 * (j as f64) - 0.2).unwrap();
        }
    }
    let data = Dataset::new(
        (0..8 * 5).map(|i| ((i * 37 % 11) as f64 - 5.0) / 4.0).collect(),
        vec![0, 1, 2, 0, 1, 2, 1, 0],
        5,
        3,
    )
    .unwrap();
    let worst = finite_difference_check(&net, &data);
    assert!(worst < 1e-6, "max relative error {worst}");
}

#[test]
fn relu_gradients_match_finite_differences() {
    let net = DenseNet::init(&[4, 6, 2], Activation::Relu, 7).unwrap();
    let data = Dataset::lifted_moons(10, 4, 0.1, 3).unwrap();
    assert!(finite_difference_check(&net, &data) < 1e-6);
}

#[test]
fn masked_gradients_are_zero_and_weights_stay_zero() {
    let data = Dataset::lifted_moons(200, 20, 0.1, 1).unwrap();
    let mut net = DenseNet::init(&DESK_LAYERS, Activation::Relu, 1).unwrap();
    let masks = net
        .layers()
        .iter()
        .map(|l| magnitude_mask(&l.weights, l.weights.len() / 3).unwrap())
        .collect::<Vec<_>>();
    net.set_masks(masks.clone()).unwrap();

    let pass = net.forward(data.features(), data.len()).unwrap();
    let grads = net.backward(&pass, data.labels()).unwrap();
    for (g, m) in grads.weights.iter().zip(&masks) {
        for (gi, keep) in g.iter().zip(m.bits()) {
            if !keep {
                assert_eq!(*gi, 0.0);
            }
        }
    }

    let cfg = TrainConfig { seed: 3, learning_rate: 0.1, batch_size: 16, iterations: 1 };
    for _ in 0..50 {
        train(&mut net, &cfg, &data).unwrap();
        for (l, m) in net.layers().iter().zip(&masks) {
            for (w, keep) in l.weights.values().iter().zip(m.bits()) {
                if !keep {
                    assert_eq!(w.to_bits(), 0.0f64.to_bits());
                }
            }
        }
    }
}

#[test]
fn gradient_vanishes_at_separable_optimum() {
    // One weight, one sample per class far on either side: with a large
    // weight the softmax saturates and the gradient is numerically zero.
    let layer = topoprune_core::trainer::DenseLayer {
        weights: topoprune_core::LayerWeights::from_rows(&[[-40.0, 40.0]]).unwrap(),
        bias: vec![0.0, 0.0],
    };
    let net = DenseNet::new(vec![layer], Activation::Relu).unwrap();
    let pass = net.forward(&[-1.0, 1.0], 2).unwrap();
    let grads = net.backward(&pass, &[0, 1]).unwrap();
    assert!(grads.weights[0].iter().chain(&grads.biases[0]).all(|g| g.abs() < 1e-30));
}

/// Batch gradient descent on plain logistic regression; the accuracy it
/// reaches is the bar the network has to clear.
fn logistic_regression_accuracy(data: &Dataset) -> f64 {
    let d = data.dim();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..300 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (x, &y) in data.features().chunks(d).zip(data.labels()) {
            let z: f64 = x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            let err = 1.0 / (1.0 + (-z).exp()) - y as f64;
            gw.iter_mut().zip(x).for_each(|(g, a)| *g += err * a);
            gb += err;
        }
        let n = data.len() as f64;
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= 0.5 * g / n);
        b -= 0.5 * gb / n;
    }
    let correct = data
        .features()
        .chunks(d)
        .zip(data.labels())
        .filter(|(x, &y)| {
            let z: f64 = x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            (z > 0.0) as usize == y
        })
        .count();
    correct as f64 / data.len() as f64
}

#[test]
fn learns_a_linearly_separable_task() {
    let data = Dataset::separable_blobs(400, 20, 11).unwrap();
    let reference = logistic_regression_accuracy(&data);
    assert!(reference >= 0.95, "reference fit only reached {reference}");

    let mut net = DenseNet::init(&DESK_LAYERS, Activation::Relu, 11).unwrap();
    train(&mut net, &TrainConfig::desk(11), &data).unwrap();
    let acc = net.evaluate(&data).unwrap().accuracy;
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn training_is_deterministic() {
    let data = Dataset::lifted_moons(300, 20, 0.1, 4).unwrap();
    let run = || {
        let mut net = DenseNet::init(&DESK_LAYERS, Activation::Relu, 4).unwrap();
        let out = train(&mut net, &TrainConfig::desk(4), &data).unwrap();
        (net, out.losses)
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(la.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), lb.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    assert_eq!(a, b);
}

#[test]
fn train_rejects_mismatched_dataset() {
    let data = Dataset::lifted_moons(50, 8, 0.1, 0).unwrap();
    let mut net = DenseNet::init(&DESK_LAYERS, Activation::Relu, 0).unwrap();
    assert!(matches!(train(&mut net, &TrainConfig::desk(0), &data), Err(Error::DimensionMismatch(_))));
}

/// Total neural persistence before and after desk-scale training.
pub fn np_growth(seed: u64) -> (f64, f64) {
    let data = Dataset::lifted_moons(600, 20, 0.1, seed).unwrap();
    let mut net = DenseNet::init(&DESK_LAYERS, Activation::Relu, seed).unwrap();
    let before = total_neural_persistence(&net.layer_reports(NormOrder::EUCLIDEAN));
    train(&mut net, &TrainConfig::desk(seed), &data).unwrap();
    let after = total_neural_persistence(&net.layer_reports(NormOrder::EUCLIDEAN));
    (before, after)
}

#[test]
fn training_raises_total_np() {
    let grew = (1..=5).filter(|&s| {
        let (before, after) = np_growth(s);
        after > before
    });
    assert!(grew.count() >= 4);
}

fn desk_trainer(
    data: Dataset,
    seed: u64,
    iterations: usize,
) -> impl FnMut(&mut DenseNet, usize) -> topoprune_core::Result<TrainSummary> {
    let (tr, val) = data.split(0.25).unwrap();
    move |net: &mut DenseNet, round: usize| {
        let cfg = TrainConfig { seed: seed + round as u64, learning_rate: 0.1, batch_size: 32, iterations };
        let out = train(net, &cfg, &tr)?;
        Ok(TrainSummary { train_loss: out.final_loss(), validation_loss: net.evaluate(&val)?.loss })
    }
}

#[test]
fn imp_loop_follows_schedule() {
    let data = Dataset::lifted_moons(400, 20, 0.1, 8).unwrap();
    let mut net = DenseNet::init(&DESK_LAYERS, Activation::Relu, 8).unwrap();
    let schedule = build_imp_schedule(&net.weight_shapes(), 90.0, 3, 100, RemovalBase::Original).unwrap();
    let total = net.weight_count();
    let rounds = run_iterative(PruneLoop::Imp, &mut net, &schedule, NormOrder::EUCLIDEAN, desk_trainer(data, 8, 100)).unwrap();
    assert_eq!(rounds.len(), 4);
    let kept: Vec<usize> = rounds.iter().map(|r| r.kept_weights).collect();
    assert_eq!(kept[0], total);
    assert!(kept.windows(2).all(|w| w[1] < w[0]));
    for (r, want) in rounds[1..].iter().zip([0.3, 0.6, 0.9]) {
        assert!((r.sparsity - want).abs() < 0.01, "round {}: {}", r.round, r.sparsity);
    }
    // Masked weights really are gone.
    let nnz: usize = net.layers().iter().map(|l| l.weights.nonzero_count()).sum();
    assert!(nnz <= kept[3]);
}

#[test]
fn timp_loop_preserves_np_when_masking() {
    let data = Dataset::lifted_moons(400, 20, 0.1, 5).unwrap();
    let mut net = DenseNet::init(&DESK_LAYERS, Activation::Relu, 5).unwrap();
    // 40% removal keeps every desk layer at or above its spanning tree size.
    let schedule = build_imp_schedule(&net.weight_shapes(), 40.0, 2, 50, RemovalBase::Original).unwrap();
    assert!(schedule.is_feasible());
    let rounds = run_iterative(PruneLoop::Timp, &mut net, &schedule, NormOrder::EUCLIDEAN, desk_trainer(data, 5, 50)).unwrap();
    for r in &rounds[1..] {
        for m in &r.layers {
            assert_eq!(m.np_before_mask, m.np_after_mask, "round {} layer {}", r.round, m.layer);
        }
    }
}

#[test]
fn zero_sparsity_round_is_plain_training() {
    let data = Dataset::lifted_moons(300, 20, 0.1, 6).unwrap();
    let shapes = DenseNet::init(&DESK_LAYERS, Activation::Relu, 6).unwrap().weight_shapes();
    let schedule = build_imp_schedule(&shapes, 0.0, 1, 40, RemovalBase::Original).unwrap();

    let mut looped = DenseNet::init(&DESK_LAYERS, Activation::Relu, 6).unwrap();
    let rounds = run_iterative(PruneLoop::Imp, &mut looped, &schedule, NormOrder::EUCLIDEAN, desk_trainer(data.clone(), 6, 40)).unwrap();

    let mut plain = DenseNet::init(&DESK_LAYERS, Activation::Relu, 6).unwrap();
    let mut step = desk_trainer(data, 6, 40);
    let s0 = step(&mut plain, 0).unwrap();
    let s1 = step(&mut plain, 1).unwrap();
    assert_eq!(rounds[0].train_loss, s0.train_loss);
    assert_eq!(rounds[1].train_loss, s1.train_loss);
    assert_eq!(rounds[1].sparsity, 0.0);
    assert_eq!(looped.layers(), plain.layers());
}

#[test]
fn infeasible_timp_schedule_aborts_before_training() {
    let mut net = DenseNet::init(&DESK_LAYERS, Activation::Relu, 0).unwrap();
    let schedule = build_imp_schedule(&net.weight_shapes(), 99.0, 1, 10, RemovalBase::Original).unwrap();
    assert!(!schedule.is_feasible());
    let mut calls = 0;
    let err = run_iterative(PruneLoop::Timp, &mut net, &schedule, NormOrder::EUCLIDEAN, |_, _| {
        calls += 1;
        Ok(TrainSummary { train_loss: 0.0, validation_loss: 0.0 })
    })
    .unwrap_err();
    assert!(matches!(err, Error::InfeasibleSchedule { .. }));
    assert_eq!(calls, 0);
}
