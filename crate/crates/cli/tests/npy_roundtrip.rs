use proptest::prelude::*;
use topoprune::npy::{self, Descr, NpyArray};
use topoprune::{checkpoint, CliError};
use topoprune_core::pruning::{magnitude_mask, MaskMethod, PruneMask};
use topoprune_core::trainer::{Activation, DenseNet};
use topoprune_core::LayerWeights;

fn finite_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(-0.0),
        Just(f64::MIN_POSITIVE / 4.0),
        Just(f64::MAX),
    ]
}

fn matrix() -> impl Strategy<Value = LayerWeights> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        prop::collection::vec(finite_f64(), r * c).prop_map(move |v| LayerWeights::new(r, c, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn f8_round_trip_is_bit_exact(w in matrix()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.npy");
        npy::write_npy(&path, &w, Descr::F8).unwrap();
        let back = npy::read_npy(&path).unwrap();
        prop_assert_eq!((back.rows(), back.cols()), (w.rows(), w.cols()));
        let bits = |x: &LayerWeights| x.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&w));
        // Writing again reproduces the same bytes.
        let again = dir.path().join("again.npy");
        npy::write_npy(&again, &back, Descr::F8).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn u1_mask_round_trip(rows in 1usize..20, cols in 1usize..20, bits in prop::collection::vec(any::<bool>(), 400)) {
        let kept = (0..rows * cols).filter(|&i| bits[i]);
        let mask = PruneMask::from_indices(rows, cols, kept, MaskMethod::Topological).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.npy");
        npy::write_mask(&path, &mask).unwrap();
        let back = npy::read_mask(&path, MaskMethod::Topological).unwrap();
        prop_assert_eq!(back, mask);
    }

    #[test]
    fn f4_round_trip_of_single_precision_values(values in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 1..60)) {
        let w = LayerWeights::new(1, values.len(), values.iter().map(|v| *v as f64).collect()).unwrap();
        let mut bytes = Vec::new();
        npy::write_array(&mut bytes, &npy::weights_to_array(&w, Descr::F4).unwrap()).unwrap();
        let back = npy::weights_from_array(&npy::read_array(&mut &bytes[..]).unwrap()).unwrap();
        prop_assert_eq!(back, w);
    }

    #[test]
    fn payload_always_starts_on_64_byte_boundary(shape in prop::collection::vec(1usize..5, 1..6)) {
        let n: usize = shape.iter().product();
        let mut bytes = Vec::new();
        npy::write_array(&mut bytes, &NpyArray { descr: Descr::U1, shape: shape.clone(), data: vec![7; n] }).unwrap();
        prop_assert_eq!((bytes.len() - n) % 64, 0);
        let back = npy::read_array(&mut &bytes[..]).unwrap();
        prop_assert_eq!(back.shape, shape);
    }
}

#[test]
fn labels_accept_common_integer_types() {
    let dir = tempfile::tempdir().unwrap();
    for (descr, data) in [
        (Descr::I8, [0i64, 1, 1].iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>()),
        (Descr::I4, [0i32, 1, 1].iter().flat_map(|v| v.to_le_bytes()).collect()),
        (Descr::U1, vec![0, 1, 1]),
    ] {
        let path = dir.path().join("labels.npy");
        npy::write_file(&path, &NpyArray { descr, shape: vec![3], data }).unwrap();
        assert_eq!(npy::read_labels(&path).unwrap(), vec![0, 1, 1]);
    }
    let path = dir.path().join("neg.npy");
    npy::write_file(&path, &NpyArray { descr: Descr::I8, shape: vec![1], data: (-1i64).to_le_bytes().to_vec() }).unwrap();
    assert!(npy::read_labels(&path).is_err());
}

#[test]
fn weights_reject_integer_payloads() {
    let a = NpyArray { descr: Descr::U1, shape: vec![1, 2], data: vec![1, 2] };
    assert!(matches!(npy::weights_from_array(&a), Err(npy::NpyError::UnsupportedDescr(_))));
}

#[test]
fn missing_file_is_an_io_error() {
    let err = npy::read_npy(std::path::Path::new("/nonexistent/w.npy")).unwrap_err();
    assert_eq!(err.code(), "npy-io");
}

#[test]
fn checkpoint_round_trip() {
    let mut net = DenseNet::init(&[5, 4, 3], Activation::Tanh, 9).unwrap();
    net.set_bias(1, 2, 0.25).unwrap();
    let masks = net.layers().iter().map(|l| magnitude_mask(&l.weights, l.weights.len() / 2).unwrap()).collect();
    net.set_masks(masks).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let manifest = checkpoint::save(dir.path(), &net, 9).unwrap();
    assert_eq!(manifest.layers.len(), 2);
    let (back, m) = checkpoint::load(dir.path()).unwrap();
    assert_eq!(m, manifest);
    assert_eq!(back.layers(), net.layers());
    assert_eq!(back.activation(), Activation::Tanh);
    for (a, b) in back.masks().iter().zip(net.masks()) {
        assert_eq!(a.as_ref().unwrap().bits(), b.as_ref().unwrap().bits());
    }
}

#[test]
fn checkpoint_rejects_inconsistent_manifest() {
    let net = DenseNet::init(&[3, 2], Activation::Relu, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    checkpoint::save(dir.path(), &net, 1).unwrap();
    let path = dir.path().join(checkpoint::MANIFEST);
    let text = std::fs::read_to_string(&path).unwrap().replace("\"inputs\": 3", "\"inputs\": 4");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(checkpoint::load(dir.path()), Err(CliError::Validation(_))));
}
