// The feed-forward encoder: seeded init, forward pass and reverse-mode
// gradients.

use crmtlr::EncoderNet;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let net = EncoderNet::init(&[4, 16, 16, 3], 7)?;
    println!("{} parameters, output dim {}", net.n_params(), net.output_dim());

    let x = [0.5, -1.0, 2.0, 0.0];
    let h = net.forward(&x)?;
    println!("f(x) = {h:.4?}");

    let upstream = [1.0, 0.0, -1.0];
    let (dx, grads) = net.backward(&x, &upstream)?;
    println!("d(u . f)/dx = {dx:.4?}");
    let first = &grads.layers()[0];
    println!("first-layer bias gradient = {:.4?}", first.bias);

    // check one input coordinate by central differences
    let h_step = 1e-6;
    let objective = |x: &[f64]| -> Result<f64, crmtlr::Error> {
        Ok(net.forward(x)?.iter().zip(&upstream).map(|(a, b)| a * b).sum())
    };
    let mut up = x;
    up[0] += h_step;
    let mut down = x;
    down[0] -= h_step;
    let numeric = (objective(&up)? - objective(&down)?) / (2.0 * h_step);
    println!("analytic {:.8} vs numeric {:.8}", dx[0], numeric);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
