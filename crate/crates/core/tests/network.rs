use gammasr_core::nn::gradcheck::finite_difference_gradient;
use gammasr_core::nn::{
    decode_checkpoint, encode_checkpoint, forward, init_network, predict, train, transfer_head, Checkpoint, Hyper,
    InputShape, LayerSpec, NetworkSpec, Sample,
};
use gammasr_core::rng;
use proptest::prelude::*;

fn small_spec(classes: usize) -> NetworkSpec {
    NetworkSpec {
        input: InputShape { height: 8, width: 8, channels: 1 },
        layers: vec![
            LayerSpec::Conv { filters: 3, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 8 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: classes },
            LayerSpec::Softmax,
        ],
        class_count: classes,
    }
}

/// Bright 4x4 patch in quadrant `q` of an 8x8 image, plus noise.
fn quadrant(q: usize, r: &mut rng::Rng) -> Vec<f64> {
    let (qy, qx) = (q / 2, q % 2);
    let mut x = vec![0.0; 64];
    for y in 0..8 {
        for c in 0..8 {
            let on = y / 4 == qy && c / 4 == qx;
            x[y * 8 + c] = if on { 1.0 } else { 0.0 } + rng::uniform(r, -0.2, 0.2);
        }
    }
    x
}

fn quadrant_set(n: usize, seed: u64, label: impl Fn(usize) -> usize) -> Vec<Sample<f64>> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|i| Sample {
            input: quadrant(i % 4, &mut r),
            label: label(i % 4),
        })
        .collect()
}

fn accuracy(ck: &Checkpoint<f64>, data: &[Sample<f64>]) -> f64 {
    let hits = data.iter().filter(|s| predict(ck, &s.input).unwrap().0 == s.label).count();
    hits as f64 / data.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let ck = init_network::<f32>(&small_spec(5), seed).unwrap();
        let mut r = rng::seeded(seed ^ 1);
        let batch: Vec<Vec<f32>> = (0..4)
            .map(|_| (0..64).map(|_| (scale * rng::uniform(&mut r, -1.0, 1.0)) as f32).collect())
            .collect();
        for row in forward(&ck, &batch).unwrap() {
            let s: f64 = row.iter().map(|&p| p as f64).sum();
            prop_assert!((s - 1.0).abs() < 1e-6, "{s}");
            prop_assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn predict_is_the_argmax(seed in any::<u64>()) {
        let ck = init_network::<f64>(&small_spec(4), seed).unwrap();
        let mut r = rng::seeded(seed);
        let x: Vec<f64> = (0..64).map(|_| rng::uniform(&mut r, -2.0, 2.0)).collect();
        let probs = forward(&ck, std::slice::from_ref(&x)).unwrap().remove(0);
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        prop_assert_eq!(predict(&ck, &x).unwrap(), (best, probs[best]));
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), classes in 2usize..6) {
        let mut ck = init_network::<f32>(&small_spec(classes), seed).unwrap();
        ck.train_meta.labels = (0..classes).map(|i| format!("w{i}")).collect();
        let bytes = encode_checkpoint(&ck).unwrap();
        let back = decode_checkpoint::<f32>(&bytes).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }
}

#[test]
fn full_batch_step_is_minus_lr_gradient() {
    // no relu or pooling, so the loss is smooth everywhere
    let spec = NetworkSpec {
        input: InputShape { height: 4, width: 4, channels: 2 },
        layers: vec![
            LayerSpec::Conv { filters: 2, kernel: 3 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 3 },
            LayerSpec::Softmax,
        ],
        class_count: 3,
    };
    let ck = init_network::<f64>(&spec, 5).unwrap();
    let mut r = rng::seeded(6);
    let data: Vec<Sample<f64>> = (0..6)
        .map(|i| Sample {
            input: (0..32).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect(),
            label: i % 3,
        })
        .collect();
    let lr = 0.05;
    let hyper = Hyper {
        lr,
        momentum: 0.0,
        batch: data.len(),
        epochs: 1,
        seed: 9,
    };
    let after = train(&ck, &data, &hyper, &[]).unwrap().checkpoint;
    let fd = finite_difference_gradient(&ck, &data, 1e-5).unwrap();
    let arrays = ck.params.iter().zip(&after.params).flat_map(|(a, b)| [(&a.weight, &b.weight), (&a.bias, &b.bias)]);
    for ((before, after), g) in arrays.zip(&fd) {
        for ((w0, w1), g) in before.data.iter().zip(&after.data).zip(g) {
            let want = -lr * g;
            assert!((w1 - w0 - want).abs() < 1e-8 + 1e-6 * want.abs(), "{} vs {want}", w1 - w0);
        }
    }
}

#[test]
fn frozen_layers_stay_bit_identical() {
    let ck = init_network::<f32>(&small_spec(4), 2).unwrap();
    let data: Vec<Sample<f32>> = quadrant_set(40, 3, |q| q)
        .into_iter()
        .map(|s| Sample {
            input: s.input.iter().map(|&v| v as f32).collect(),
            label: s.label,
        })
        .collect();
    let hyper = Hyper {
        lr: 0.05,
        epochs: 3,
        batch: 8,
        ..Default::default()
    };
    let out = train(&ck, &data, &hyper, &["conv1", "fc1"]).unwrap().checkpoint;
    for name in ["conv1", "fc1"] {
        let (a, b) = (ck.layer_params(name).unwrap(), out.layer_params(name).unwrap());
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.weight.data), bits(&b.weight.data));
        assert_eq!(bits(&a.bias.data), bits(&b.bias.data));
    }
    assert_ne!(ck.layer_params("fc2"), out.layer_params("fc2"));
}

#[test]
fn transfer_with_frozen_features_learns_a_new_task() {
    let hyper = Hyper {
        lr: 0.05,
        epochs: 30,
        batch: 8,
        momentum: 0.9,
        seed: 1,
    };
    let base = init_network::<f64>(&small_spec(4), 7).unwrap();
    let pretrained = train(&base, &quadrant_set(80, 1, |q| q), &hyper, &[]).unwrap().checkpoint;
    assert!(accuracy(&pretrained, &quadrant_set(40, 2, |q| q)) >= 0.9);

    // new task: is the patch in the top half?
    let top = |q: usize| usize::from(q < 2);
    let head = transfer_head(&pretrained, 2, 3).unwrap();
    assert_eq!(head.layer_params("conv1"), pretrained.layer_params("conv1"));
    let tuned = train(&head, &quadrant_set(80, 4, top), &hyper, &["conv1"]).unwrap().checkpoint;
    assert_eq!(tuned.layer_params("conv1"), pretrained.layer_params("conv1"));
    let acc = accuracy(&tuned, &quadrant_set(40, 5, top));
    assert!(acc >= 0.9, "{acc}");
}
