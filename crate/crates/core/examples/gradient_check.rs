//! Compares tape gradients of the full adapter with central differences.
//!
//! cargo run --release --example gradient_check -- [seed]

use ses_adapter::adapter::{ses_forward, ForwardInput, ParamNodes};
use ses_adapter::rng::Stream;
use ses_adapter::{AdapterConfig, AdapterParams, Matrix, Mode, Tape};

fn loss(params: &AdapterParams, cfg: &AdapterConfig, input: ForwardInput<'_>) -> (f64, Vec<Matrix>) {
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, params);
    let out = ses_forward(&mut tape, &nodes, input, cfg, Mode::Train, Stream::new(1, "dropout")).expect("forward");
    let loss = tape.softmax_cross_entropy(out.logits, 1).expect("loss");
    let v = tape.scalar(loss);
    let mut g = tape.backward(loss).expect("backward");
    (v, nodes.collect(&mut g))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let cfg = AdapterConfig { heads: 2, ..AdapterConfig::new(8, 2) };
    let s = Stream::new(seed, "gradient-check");
    let mut params = AdapterParams::init(&cfg, seed)?;
    for (k, t) in params.tensors_mut().into_iter().enumerate() {
        *t = Matrix::from_fn(t.rows(), t.cols(), |r, c| 0.5 * s.split(k as u64).normal((r * t.cols() + c) as u64));
    }
    let plm = Matrix::from_fn(4, 8, |r, c| s.split(99).normal((r * 8 + c) as u64));
    let (fs, ss) = ([2u32, 5, 9, 3], [4u32, 4, 11, 7]);
    let input = ForwardInput { plm: &plm, foldseek: Some(&fs), dssp: Some(&ss), valid: 4 };

    let (value, grads) = loss(&params, &cfg, input);
    println!("loss {value:.6}");
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let h = 1e-5;
    for (t, name) in names.iter().enumerate() {
        let mut worst = 0.0f64;
        for i in 0..grads[t].len() {
            let probe = |delta: f64| {
                let mut p = params.clone();
                p.tensors_mut()[t].data_mut()[i] += delta;
                loss(&p, &cfg, input).0
            };
            let numeric = (probe(h) - probe(-h)) / (2.0 * h);
            let analytic = grads[t].data()[i];
            worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-5));
        }
        println!("{name:<16} max rel err {worst:.2e}");
    }
    Ok(())
}
