//! Builds a small MLP, checks its analytic gradients against central
//! differences, then fits a 1-D function with Adam.
//!
//! cargo run --release --example gradient_check

use hg2p::nn::{Adam, Matrix, Mlp, OutputActivation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Mlp::new(&[3, 16, 16, 2], OutputActivation::ScaledTanh { bound: 2.0 }, &mut rng)?;
    let x = [0.3, -1.2, 0.8];
    let up = [1.0, -0.5];
    let analytic = net.grad_params(&x, &up)?;

    let h = 1e-5;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..analytic.len() {
        let orig = net.params()[i];
        let f = |n: &Mlp| -> f64 { n.forward(&x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum() };
        probe.params_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.params_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.params_mut()[i] = orig;
        worst = worst.max((analytic[i] - (plus - minus) / (2.0 * h)).abs());
    }
    println!("{} parameters, max |analytic - numeric| = {worst:.2e}", analytic.len());
    println!("input Jacobian:\n{:?}", net.grad_input(&x)?);

    // Fit y = sin(2x) on [-1.5, 1.5].
    let mut fit = Mlp::new(&[1, 32, 32, 1], OutputActivation::Identity, &mut rng)?;
    let mut opt = Adam::for_net(&fit, 3e-3);
    for step in 0..=3000 {
        let xs: Vec<[f64; 1]> = (0..64).map(|_| [rng.random_range(-1.5..1.5)]).collect();
        let xb = Matrix::from_rows(&xs);
        let cache = fit.forward_cached(&xb)?;
        let mut up = Matrix::zeros(64, 1);
        let mut loss = 0.0;
        for (r, x) in xs.iter().enumerate() {
            let e = cache.output().get(r, 0) - (2.0 * x[0]).sin();
            loss += e * e / 64.0;
            up.set(r, 0, 2.0 * e / 64.0);
        }
        let g = fit.backward(&cache, &up)?;
        opt.apply(&mut fit, &g.params)?;
        if step % 1000 == 0 {
            println!("step {step:5}: mse {loss:.5}");
        }
    }
    Ok(())
}
