use latentvar::autoencoders::batch_gradients;
use latentvar::neural::{Activation, Mlp, MlpParams, MlpSpec};
use latentvar::rng::substream;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const STEP: f64 = 1e-6;
const FLOOR: f64 = 1e-6;
const ACTIVATIONS: [Activation; 3] = [Activation::Linear, Activation::Relu, Activation::Tanh];

fn param(p: &mut MlpParams, mut flat: usize) -> &mut f64 {
    for block in p.blocks_mut() {
        if flat < block.len() {
            return &mut block[flat];
        }
        flat -= block.len();
    }
    panic!("parameter index out of range");
}

fn get(p: &MlpParams, flat: usize) -> f64 {
    let mut q = p.clone();
    *param(&mut q, flat)
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn normal_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(r))
}

/// Sign pattern of every ReLU pre-activation; a change means the finite
/// difference straddles a kink where the derivative is undefined.
fn relu_mask(net: &Mlp, x: &DMatrix<f64>) -> Vec<bool> {
    let (_, tape) = net.forward_batch(x).unwrap();
    tape.layer_outputs()
        .iter()
        .flat_map(|o| o.iter().map(|v| *v > 0.0).collect::<Vec<_>>())
        .collect()
}

/// Central-difference check of `<c, f(x)>` for randomly chosen parameters.
/// Returns the number of parameters checked.
fn check_mlp(hidden: Activation, output: Activation, seed: u64, samples: usize) -> usize {
    let mut r = substream(seed, "gradient-check");
    let spec = MlpSpec::new(vec![5, 7, 6, 3], hidden, output).unwrap();
    let mut net = Mlp::init(spec, &mut r).unwrap();
    // push biases away from zero so tanh and relu stay in interesting regions
    for layer in &mut net.params_mut().layers {
        layer.bias = layer.bias.map(|_| r.random_range(-0.5..0.5));
    }
    let x = normal_matrix(&mut r, 5, 4);
    let c = normal_matrix(&mut r, 3, 4);
    let (_, tape) = net.forward_batch(&x).unwrap();
    let grads = net.backward(&tape, &c).unwrap();
    let objective = |n: &Mlp| n.forward_batch(&x).unwrap().0.dot(&c);

    let total = net.params().parameter_count();
    let mut checked = 0;
    while checked < samples {
        let k = r.random_range(0..total);
        let base = get(net.params(), k);
        let mut plus = net.clone();
        *param(plus.params_mut(), k) = base + STEP;
        let mut minus = net.clone();
        *param(minus.params_mut(), k) = base - STEP;
        if relu_mask(&plus, &x) != relu_mask(&minus, &x) {
            continue;
        }
        let numeric = (objective(&plus) - objective(&minus)) / (2.0 * STEP);
        let analytic = get(&grads.params, k);
        let err = relative_error(analytic, numeric);
        assert!(err < 1e-4, "{hidden:?}/{output:?} param {k}: analytic {analytic} numeric {numeric}");
        checked += 1;
    }

    // input gradient
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += STEP;
        let mut xm = x.clone();
        xm[i] -= STEP;
        if relu_mask(&net, &xp) != relu_mask(&net, &xm) {
            continue;
        }
        let numeric = (net.forward_batch(&xp).unwrap().0.dot(&c) - net.forward_batch(&xm).unwrap().0.dot(&c)) / (2.0 * STEP);
        assert!(relative_error(grads.input[i], numeric) < 1e-4);
    }
    checked
}

#[test]
fn mlp_gradients_all_activation_pairs() {
    let mut total = 0;
    for (s, &hidden) in ACTIVATIONS.iter().enumerate() {
        for (t, &output) in ACTIVATIONS.iter().enumerate() {
            total += check_mlp(hidden, output, (s * 3 + t) as u64, 15);
        }
    }
    assert!(total >= 100);
}

/// Latent code fed to the decoder, as in the training objective.
fn code(enc: &Mlp, x: &DMatrix<f64>, noise: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let h = enc.forward_batch(x).unwrap().0;
    match noise {
        Some(eps) => h.rows(0, 2) + h.rows(2, 2).map(|lv| (0.5 * lv).exp()).component_mul(eps),
        None => h,
    }
}

/// Full VAE objective including the reparameterized sample and the KL term.
fn check_vae(hidden: Activation, seed: u64, beta: f64, variational: bool) -> usize {
    let mut r = substream(seed, "vae-gradient-check");
    let d = 9;
    let enc_out = if variational { 4 } else { 2 };
    let mut enc = Mlp::init(MlpSpec::new(vec![d, 8, enc_out], hidden, Activation::Linear).unwrap(), &mut r).unwrap();
    let mut dec = Mlp::init(MlpSpec::new(vec![2, 8, d], hidden, Activation::Linear).unwrap(), &mut r).unwrap();
    for layer in enc.params_mut().layers.iter_mut().chain(dec.params_mut().layers.iter_mut()) {
        layer.bias = layer.bias.map(|_| r.random_range(-0.3..0.3));
    }
    let x = normal_matrix(&mut r, d, 5).map(|v| 0.5 * v);
    let noise = variational.then(|| normal_matrix(&mut r, 2, 5));
    let g = batch_gradients(&enc, &dec, &x, noise.as_ref(), beta).unwrap();
    let loss = |e: &Mlp, dd: &Mlp| batch_gradients(e, dd, &x, noise.as_ref(), beta).unwrap().loss;

    let mut checked = 0;
    for which in 0..2 {
        let net = if which == 0 { &enc } else { &dec };
        let grads = if which == 0 { &g.encoder } else { &g.decoder };
        let total = net.params().parameter_count();
        let mut done = 0;
        while done < 10 {
            let k = r.random_range(0..total);
            let base = get(net.params(), k);
            let mut plus = net.clone();
            *param(plus.params_mut(), k) = base + STEP;
            let mut minus = net.clone();
            *param(minus.params_mut(), k) = base - STEP;
            let (lp, lm) = if which == 0 {
                let dec_plus = relu_mask(&dec, &code(&plus, &x, noise.as_ref()));
                let dec_minus = relu_mask(&dec, &code(&minus, &x, noise.as_ref()));
                if relu_mask(&plus, &x) != relu_mask(&minus, &x) || dec_plus != dec_minus {
                    continue;
                }
                (loss(&plus, &dec), loss(&minus, &dec))
            } else {
                let z = code(&enc, &x, noise.as_ref());
                if relu_mask(&plus, &z) != relu_mask(&minus, &z) {
                    continue;
                }
                (loss(&enc, &plus), loss(&enc, &minus))
            };
            let numeric = (lp - lm) / (2.0 * STEP);
            let analytic = get(grads, k);
            assert!(
                relative_error(analytic, numeric) < 1e-4,
                "{hidden:?} beta {beta} net {which} param {k}: analytic {analytic} numeric {numeric}"
            );
            done += 1;
            checked += 1;
        }
    }
    checked
}

#[test]
fn vae_objective_gradients() {
    let mut total = 0;
    for (s, &hidden) in ACTIVATIONS.iter().enumerate() {
        total += check_vae(hidden, s as u64, 1.0, true);
        total += check_vae(hidden, 10 + s as u64, 0.0, true);
        total += check_vae(hidden, 20 + s as u64, 0.0, false);
    }
    assert!(total >= 100);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mlp_gradients_random_seeds(seed in any::<u64>(), hidden in 0usize..3, output in 0usize..3) {
        prop_assert_eq!(check_mlp(ACTIVATIONS[hidden], ACTIVATIONS[output], seed, 12), 12);
    }
}
