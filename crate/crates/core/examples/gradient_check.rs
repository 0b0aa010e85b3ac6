//! Central finite differences against backpropagation on a small conv net.
//!
//! cargo run --release --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavlab::nn::{huber_loss, LayerSpec, Network, NetworkSpec, Tensor};

fn main() -> uavlab::Result<()> {
    let spec = NetworkSpec {
        input: [2, 7, 7],
        layers: vec![
            LayerSpec::Conv2d { in_ch: 2, out_ch: 3, kernel: 3, stride: 2 },
            LayerSpec::LeakyRelu { slope: 0.01 },
            LayerSpec::Flatten,
            LayerSpec::ConcatAux { aux_len: 3 },
            LayerSpec::Dense { units: 5 },
            LayerSpec::LeakyRelu { slope: 0.01 },
            LayerSpec::Dense { units: 2 },
        ],
    };
    let mut net = Network::new(spec, 11)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = 4;
    let mut fill = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let image = Tensor::new(vec![batch, 2, 7, 7], fill(batch * 98))?;
    let aux = Tensor::new(vec![batch, 3], fill(batch * 3))?;
    let target = Tensor::new(vec![batch, 2], fill(batch * 2))?;

    let loss = |net: &Network| -> uavlab::Result<f64> { Ok(huber_loss(&net.forward(&image, &aux)?, &target, 0.3)?.0) };
    let (out, cache) = net.forward_train(&image, &aux)?;
    let (_, gout) = huber_loss(&out, &target, 0.3)?;
    let grads = net.backward(&cache, &gout)?;

    let h = 1e-6;
    for (p, g) in grads.params.iter().enumerate() {
        let mut num = Vec::with_capacity(g.len());
        for i in 0..g.len() {
            let orig = net.params()[p].data()[i];
            net.params_mut()[p].data_mut()[i] = orig + h;
            let up = loss(&net)?;
            net.params_mut()[p].data_mut()[i] = orig - h;
            let down = loss(&net)?;
            net.params_mut()[p].data_mut()[i] = orig;
            num.push((up - down) / (2.0 * h));
        }
        let diff: f64 = num.iter().zip(g.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = num.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        println!("param {p} {:?}: relative error {:.2e}", g.shape(), diff / scale);
    }
    Ok(())
}
