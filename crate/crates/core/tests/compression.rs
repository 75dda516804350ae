use fedq_core::compression::{
    decode, dequantize, encode, quantize, quantize_model, step_size, weight_entropy, CompressedModel,
    CompressionTransport, QuantConfig, QuantizedTensor,
};
use fedq_core::federation::Transport;
use fedq_core::nn::{ParameterSet, Tensor};
use fedq_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn tensor_of(indices: Vec<i32>) -> QuantizedTensor {
    QuantizedTensor {
        name: "t".into(),
        shape: vec![indices.len()],
        qp: -30,
        step_size: step_size(-30, 2),
        indices,
    }
}

#[test]
fn million_zeros_compress_below_two_kilobytes() {
    let m = encode(&[tensor_of(vec![0; 1_000_000])]);
    assert!(m.blob.len() < 2048, "{} bytes", m.blob.len());
    assert_eq!(decode(&m).unwrap()[0].indices.len(), 1_000_000);
}

#[test]
fn random_sparse_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let n = rng.random_range(1..5_000);
        let sparsity = rng.random_range(0.0..0.99);
        let scale = 10f64.powf(rng.random_range(0.0..6.0));
        let normal = Normal::<f64>::new(0.0, scale).unwrap();
        let t = tensor_of(
            (0..n)
                .map(|_| {
                    if rng.random_bool(sparsity) {
                        0
                    } else {
                        normal.sample(&mut rng).round() as i32
                    }
                })
                .collect(),
        );
        let bytes = encode(std::slice::from_ref(&t)).to_bytes();
        assert_eq!(decode(&CompressedModel::from_bytes(&bytes).unwrap()).unwrap(), vec![t]);
    }
}

#[test]
fn truncation_is_always_detected() {
    let t = tensor_of((0..300).map(|i| (i % 17) - 8).collect());
    let bytes = encode(&[t]).to_bytes();
    for cut in 0..bytes.len() {
        let r = CompressedModel::from_bytes(&bytes[..cut]).and_then(|m| decode(&m));
        assert!(matches!(r, Err(Error::Decoding { .. })), "cut {cut}");
    }
}

#[test]
fn payload_close_to_static_entropy_on_stationary_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for (sparsity, scale) in [(0.0, 3.0), (0.5, 20.0), (0.9, 2.0)] {
        let normal = Normal::<f64>::new(0.0, scale).unwrap();
        let t = tensor_of(
            (0..200_000)
                .map(|_| {
                    if rng.random_bool(sparsity) {
                        0
                    } else {
                        normal.sample(&mut rng).round() as i32
                    }
                })
                .collect(),
        );
        let bits = 8.0 * encode(std::slice::from_ref(&t)).blob.len() as f64;
        let bound = weight_entropy([&t]).unwrap() * t.indices.len() as f64;
        assert!(
            bits <= 1.2 * bound + 64.0,
            "sparsity {sparsity}: {bits} bits vs entropy {bound}"
        );
    }
}

#[test]
fn quantization_error_is_at_most_half_a_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for i in 0..100 {
        let n = rng.random_range(1..2_000);
        let t = Tensor::new(vec![n], (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let qp = rng.random_range(-48..=0);
        let delta = step_size(qp, 2);
        let q = quantize("t", &t, qp, delta).unwrap();
        let back = dequantize(&q).unwrap();
        for (a, b) in t.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= delta / 2.0, "tensor {i}: {a} vs {b} at δ {delta}");
        }
        let again = quantize("t", &back, qp, delta).unwrap();
        assert_eq!(again.indices, q.indices);
    }
}

#[test]
fn bytes_shrink_as_qp_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let normal = Normal::new(0.0, 0.3).unwrap();
    let params = ParameterSet::from_entries(vec![(
        "w".into(),
        Tensor::new(vec![50_000], (0..50_000).map(|_| normal.sample(&mut rng)).collect()).unwrap(),
    )])
    .unwrap();
    let mut last = usize::MAX;
    for qp in [-48, -43, -38, -30, -24, -10, 0] {
        let cfg = QuantConfig {
            qp,
            ..QuantConfig::default()
        };
        let size = encode(&quantize_model(&params, &cfg).unwrap()).to_bytes().len();
        assert!(size <= last, "qp {qp}: {size} > {last}");
        last = size;
    }
}

#[test]
fn fine_steps_make_the_transport_nearly_lossless() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let params = ParameterSet::from_entries(vec![(
        "w".into(),
        Tensor::new(vec![1000], (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
    )])
    .unwrap();
    let t = CompressionTransport {
        config: QuantConfig {
            qp: -100,
            ..QuantConfig::default()
        },
    };
    let sent = t.transmit(&params).unwrap();
    assert!(sent.params.max_abs_diff(&params).unwrap() <= step_size(-100, 2) / 2.0);
}
