use avfusion::gradcheck::analytic_gradients;
use avfusion::models::{ArchName, ArchSpec, ForwardOpts, Model};
use avfusion::tape::Tape;
use avfusion::tensor::Tensor;
use avfusion::rng;
use rand::Rng;

fn main() {
    let spec = ArchSpec::defaults(ArchName::AvAttention).with_dims(6, 4, 5, 4, 3);
    let model = Model::build(spec.clone(), 0).unwrap();
    for (i, p) in model.params.iter().enumerate() {
        println!("param {i}: {} {:?}", p.name, p.tensor.shape());
    }
    let mut r = rng::rng(rng::derive(0, 0x7e57));
    let batch = 2;
    let n = batch * spec.visual_dim;
    let visual = Tensor::new(vec![batch, spec.visual_dim], (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
    let n = batch * spec.audio_dim;
    let audio = Tensor::new(vec![batch, spec.audio_dim], (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
    let labels = Tensor::new(vec![batch, 3], (0..6).map(|_| r.gen_bool(0.5) as u8 as f64).collect()).unwrap();
    let params: Vec<Tensor> = model.params.iter().map(|p| p.tensor.clone()).collect();
    let grads = analytic_gradients(&|tape: &mut Tape, vars: &[avfusion::tape::Var]| {
        let v = tape.constant(visual.clone());
        let a = tape.constant(audio.clone());
        let probs = model.forward_with_vars(tape, vars, v, a, ForwardOpts { training: false, trainable: true, dropout_rate: 0.0, seed: 0 })?;
        avfusion::trainer::bce_loss(tape, probs, &labels)
    }, &params).unwrap();
    for (i, g) in grads.iter().enumerate() {
        let max = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!("grad {i} ({}): max abs {max:.3e}", model.params[i].name);
    }
    // inspect the fusion input values
    let mut tape = Tape::new();
    let (vars, probs) = model.forward_on_tape(&mut tape, &visual, &audio, ForwardOpts { training: false, trainable: true, dropout_rate: 0.0, seed: 0 }).unwrap();
    let _ = (vars, probs);
    println!("probs: {:?}", tape.value(probs).data());
}
