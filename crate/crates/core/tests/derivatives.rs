//! Finite-difference oracles for input jets and parameter gradients.

use lampinn::net::{Activation, DenseNet, DifferentiableLoss, Surrogate};
use lampinn::pde::{sample_collocation, PdeProblem, PinnObjective};
use lampinn::tasks::{Family, TaskConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn random_net(rng: &mut ChaCha8Rng, act: Activation) -> DenseNet {
    loop {
        let depth = rng.gen_range(1..=3);
        let mut sizes = vec![2];
        for _ in 0..depth {
            sizes.push(rng.gen_range(2..=12));
        }
        sizes.push(1);
        let net = DenseNet::new(&sizes, act, rng.gen()).unwrap();
        if net.num_params() <= 500 {
            let mut net = net;
            // nonzero biases so that every code path is exercised
            let mut p = net.param_values();
            for v in p.iter_mut() {
                *v += rng.gen_range(-0.1..0.1);
            }
            net.set_param_values(&p).unwrap();
            return net;
        }
    }
}

fn value(net: &DenseNet, x: &[f64]) -> f64 {
    net.forward(x).unwrap()[0]
}

#[test]
fn input_derivatives_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for n in 0..100 {
        let act = if n % 2 == 0 { Activation::Tanh } else { Activation::Sin };
        let net = random_net(&mut rng, act);
        let x = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        let jet = net.forward_jet(&x, 0).unwrap();
        assert!((jet.value - value(&net, &x)).abs() < 1e-14);
        for i in 0..2 {
            let (mut up, mut dn) = (x, x);
            up[i] += h;
            dn[i] -= h;
            let fd = (value(&net, &up) - value(&net, &dn)) / (2.0 * h);
            worst = worst.max(rel_err(jet.d_input[i], fd));
            // second derivatives against differences of the (checked) first derivatives
            let gu = net.forward_jet(&up, 0).unwrap().d_input;
            let gd = net.forward_jet(&dn, 0).unwrap().d_input;
            for j in 0..2 {
                let fd2 = (gu[j] - gd[j]) / (2.0 * h);
                worst = worst.max(rel_err(jet.d2_input[i][j], fd2));
                assert_eq!(jet.d2_input[i][j], jet.d2_input[j][i]);
            }
        }
    }
    assert!(worst < TOL, "worst relative error {worst:e}");
}

fn check_param_gradient(family: Family, values: Vec<f64>, scale: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let task = TaskConfig::new(family, values).unwrap();
    let problem = PdeProblem::new(&task, scale).unwrap();
    let colloc = sample_collocation(&problem, 40, 12, seed).unwrap();
    let obj = PinnObjective::new(problem, colloc).unwrap();
    let net = random_net(&mut rng, Activation::Tanh);
    let bound = obj.bind(&net);
    let theta = net.param_values();
    let (_, grad) = bound.value_and_gradient(&theta).unwrap();
    let mut worst = 0.0f64;
    for k in 0..theta.len() {
        let h = 1e-5 * theta[k].abs().max(1.0);
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[k] += h;
        dn[k] -= h;
        let fd = (bound.value_and_gradient(&up).unwrap().0 - bound.value_and_gradient(&dn).unwrap().0) / (2.0 * h);
        worst = worst.max(rel_err(grad[k], fd));
    }
    worst
}

#[test]
fn loss_gradients_match_central_differences() {
    let mut worst = 0.0f64;
    for s in 0..10 {
        worst = worst.max(check_param_gradient(Family::Helmholtz2d, vec![2.0, 3.0, 4.0], 0.05, s));
        worst = worst.max(check_param_gradient(Family::Burgers1d, vec![1.0, 0.05, 1.5], 1.0, 100 + s));
    }
    assert!(worst < TOL, "worst relative error {worst:e}");
}
