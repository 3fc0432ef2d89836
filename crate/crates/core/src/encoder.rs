//! Modality towers, the fused classifier head, and the dual forward pass.
//!
//! A tower is an MLP encoder (tanh hidden layers, each followed by dropout in
//! training mode) topped by an affine projection into the joint space. The
//! projection output carries no dropout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sample_dropout_mask, RngState, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub joint_dim: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, joint_dim: usize, dropout: f64) -> Self {
        EncoderConfig {
            input_dim,
            hidden_dims,
            joint_dim,
            dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.joint_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Parameter(format!(
                "encoder dims must be >= 1: input {}, hidden {:?}, joint {}",
                self.input_dim, self.hidden_dims, self.joint_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Affine map `x·W + b` with `W` stored `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut RngState) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        Linear {
            weight: Tensor::new(vec![fan_in, fan_out], data)
                .expect("positive fan")
                .with_grad(),
            bias: Tensor::zeros(vec![fan_out]).with_grad(),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Debug, Clone, Copy)]
struct BoundLinear {
    weight: Var,
    bias: Var,
}

impl BoundLinear {
    fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add_bias(xw, self.bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpEncoder {
    pub layers: Vec<Linear>,
}

/// The per-modality fully-connected map into the joint space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead {
    pub linear: Linear,
}

/// Linear classifier over the concatenation `h_a ⊕ h_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    pub linear: Linear,
}

impl ClassifierHead {
    pub fn new(joint_dim: usize, classes: usize, rng: &mut RngState) -> Result<Self> {
        if joint_dim == 0 || classes < 2 {
            return Err(Error::Parameter(format!(
                "classifier needs joint dim >= 1 and >= 2 classes, got {joint_dim}, {classes}"
            )));
        }
        Ok(ClassifierHead {
            linear: Linear::glorot(2 * joint_dim, classes, rng),
        })
    }

    pub fn classes(&self) -> usize {
        self.linear.fan_out()
    }

    pub fn input_dim(&self) -> usize {
        self.linear.fan_in()
    }
}

/// Encoder plus projection for one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub config: EncoderConfig,
    pub encoder: MlpEncoder,
    pub head: ProjectionHead,
}

impl Tower {
    pub fn init(config: EncoderConfig, rng: &mut RngState) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.hidden_dims.len());
        let mut fan_in = config.input_dim;
        for &width in &config.hidden_dims {
            layers.push(Linear::glorot(fan_in, width, rng));
            fan_in = width;
        }
        let head = ProjectionHead {
            linear: Linear::glorot(fan_in, config.joint_dim, rng),
        };
        Ok(Tower {
            config,
            encoder: MlpEncoder { layers },
            head,
        })
    }

    fn linears(&self) -> impl Iterator<Item = &Linear> {
        self.encoder
            .layers
            .iter()
            .chain(std::iter::once(&self.head.linear))
    }

    fn linears_mut(&mut self) -> impl Iterator<Item = &mut Linear> {
        self.encoder
            .layers
            .iter_mut()
            .chain(std::iter::once(&mut self.head.linear))
    }

    fn bind_from(&self, vars: &mut impl Iterator<Item = Var>) -> BoundTower {
        let mut next = || BoundLinear {
            weight: vars.next().expect("weight var"),
            bias: vars.next().expect("bias var"),
        };
        let hidden = self.encoder.layers.iter().map(|_| next()).collect();
        BoundTower {
            hidden,
            head: next(),
            dropout: self.config.dropout,
            input_dim: self.config.input_dim,
        }
    }
}

/// Whether a forward pass samples dropout masks.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut RngState),
}

#[derive(Debug, Clone)]
pub struct BoundTower {
    hidden: Vec<BoundLinear>,
    head: BoundLinear,
    dropout: f64,
    input_dim: usize,
}

impl BoundTower {
    /// `h = head(enc(x))`. In training mode a fresh mask follows every hidden
    /// layer; the projection output is never masked.
    pub fn encode(&self, tape: &mut Tape, x: Var, mut mode: Mode<'_>) -> Result<Var> {
        match tape.shape(x) {
            [_, d] if *d == self.input_dim => {}
            other => return Err(Error::dim("encode", other, &[0, self.input_dim])),
        }
        let mut h = x;
        for layer in &self.hidden {
            let z = layer.forward(tape, h)?;
            h = tape.tanh(z);
            if let Mode::Train(rng) = &mut mode {
                let shape = tape.shape(h).to_vec();
                let mask = sample_dropout_mask(rng, &shape, self.dropout)?;
                h = tape.apply_dropout(h, &mask)?;
            }
        }
        self.head.forward(tape, h)
    }
}

/// Both towers and the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurboModel {
    pub audio: Tower,
    pub text: Tower,
    pub classifier: ClassifierHead,
}

impl TurboModel {
    /// Deterministic initialization from `rng`'s seed and stream; each part
    /// draws from its own child stream.
    pub fn init(
        audio: EncoderConfig,
        text: EncoderConfig,
        classes: usize,
        rng: &RngState,
    ) -> Result<Self> {
        if audio.joint_dim != text.joint_dim {
            return Err(Error::Parameter(format!(
                "audio and text joint dims differ: {} vs {}",
                audio.joint_dim, text.joint_dim
            )));
        }
        let joint = audio.joint_dim;
        Ok(TurboModel {
            audio: Tower::init(audio, &mut rng.fork("audio"))?,
            text: Tower::init(text, &mut rng.fork("text"))?,
            classifier: ClassifierHead::new(joint, classes, &mut rng.fork("classifier"))?,
        })
    }

    pub fn joint_dim(&self) -> usize {
        self.audio.config.joint_dim
    }

    pub fn classes(&self) -> usize {
        self.classifier.classes()
    }

    /// Layer list in a fixed order: audio layers, text layers, classifier.
    pub fn layers(&self) -> Vec<&Linear> {
        self.audio
            .linears()
            .chain(self.text.linears())
            .chain(std::iter::once(&self.classifier.linear))
            .collect()
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Linear> {
        self.audio
            .linears_mut()
            .chain(self.text.linears_mut())
            .chain(std::iter::once(&mut self.classifier.linear))
            .collect()
    }

    /// All parameter tensors, weight then bias per layer, in [`Self::layers`] order.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers()
            .into_iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (tower, t) in [("audio", &self.audio), ("text", &self.text)] {
            for i in 0..t.encoder.layers.len() {
                names.push(format!("{tower}.hidden{i}.weight"));
                names.push(format!("{tower}.hidden{i}.bias"));
            }
            names.push(format!("{tower}.proj.weight"));
            names.push(format!("{tower}.proj.bias"));
        }
        names.push("classifier.weight".into());
        names.push("classifier.bias".into());
        names
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::zero_grad);
    }

    /// Records every parameter on the tape.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let vars: Vec<Var> = self.params().into_iter().map(|p| tape.leaf(p)).collect();
        self.bind_vars(&vars).expect("one var per parameter")
    }

    /// Wraps already-recorded parameter vars, given in [`Self::params`] order.
    pub fn bind_vars(&self, vars: &[Var]) -> Result<BoundModel> {
        let expected = 2 * self.layers().len();
        if vars.len() != expected {
            return Err(Error::Contract(format!(
                "expected {expected} parameter vars, got {}",
                vars.len()
            )));
        }
        let mut it = vars.iter().copied();
        let audio = self.audio.bind_from(&mut it);
        let text = self.text.bind_from(&mut it);
        let classifier = BoundLinear {
            weight: it.next().expect("classifier weight"),
            bias: it.next().expect("classifier bias"),
        };
        Ok(BoundModel {
            audio,
            text,
            classifier,
            joint_dim: self.joint_dim(),
            vars: vars.to_vec(),
        })
    }

    /// Adds every parameter gradient from `tape` into the model's buffers.
    pub fn accumulate_grads(&mut self, tape: &Tape, bound: &BoundModel) -> Result<()> {
        for (p, v) in self.params_mut().into_iter().zip(&bound.vars) {
            tape.accumulate_grad(*v, p)?;
        }
        Ok(())
    }
}

/// A [`TurboModel`] recorded on a tape.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub audio: BoundTower,
    pub text: BoundTower,
    classifier: BoundLinear,
    joint_dim: usize,
    vars: Vec<Var>,
}

impl BoundModel {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Class probabilities `softmax(W·(h_a ⊕ h_t) + b)`.
    pub fn classify(&self, tape: &mut Tape, h_a: Var, h_t: Var) -> Result<Var> {
        let logits = self.logits(tape, h_a, h_t)?;
        tape.row_softmax(logits)
    }

    pub fn logits(&self, tape: &mut Tape, h_a: Var, h_t: Var) -> Result<Var> {
        let (sa, st) = (tape.shape(h_a), tape.shape(h_t));
        if sa != st || sa.get(1) != Some(&self.joint_dim) {
            return Err(Error::dim("classify", sa, st));
        }
        let fused = tape.concat_cols(h_a, h_t)?;
        self.classifier.forward(tape, fused)
    }

    /// Dropout-free single pass over both modalities.
    pub fn encode_eval(&self, tape: &mut Tape, audio: Var, text: Var) -> Result<(Var, Var)> {
        check_batch(tape, audio, text)?;
        let h_a = self.audio.encode(tape, audio, Mode::Eval)?;
        let h_t = self.text.encode(tape, text, Mode::Eval)?;
        Ok((h_a, h_t))
    }

    /// One training-mode pass; audio and text draw masks from child streams
    /// `"<stream>/audio"` and `"<stream>/text"`.
    pub fn encode_train(
        &self,
        tape: &mut Tape,
        audio: Var,
        text: Var,
        rng: &RngState,
    ) -> Result<(Var, Var)> {
        check_batch(tape, audio, text)?;
        let h_a = self
            .audio
            .encode(tape, audio, Mode::Train(&mut rng.fork("audio")))?;
        let h_t = self
            .text
            .encode(tape, text, Mode::Train(&mut rng.fork("text")))?;
        Ok((h_a, h_t))
    }

    /// Two training-mode passes over the same batch with independent mask
    /// streams `pass1` and `pass2`.
    pub fn dual_forward(
        &self,
        tape: &mut Tape,
        audio: Var,
        text: Var,
        rng: &RngState,
    ) -> Result<RepresentationQuad> {
        let (h_a1, h_t1) = self.encode_train(tape, audio, text, &rng.fork("pass1"))?;
        let (h_a2, h_t2) = self.encode_train(tape, audio, text, &rng.fork("pass2"))?;
        Ok(RepresentationQuad {
            h_a1,
            h_t1,
            h_a2,
            h_t2,
        })
    }
}

fn check_batch(tape: &Tape, audio: Var, text: Var) -> Result<()> {
    let (sa, st) = (tape.shape(audio), tape.shape(text));
    if sa.first() != st.first() {
        return Err(Error::dim("batch extent", sa, st));
    }
    Ok(())
}

/// The four projected representations of one batch from two passes.
#[derive(Debug, Clone, Copy)]
pub struct RepresentationQuad {
    pub h_a1: Var,
    pub h_t1: Var,
    pub h_a2: Var,
    pub h_t2: Var,
}

impl RepresentationQuad {
    /// A quad whose two passes coincide.
    pub fn single(h_a: Var, h_t: Var) -> Self {
        RepresentationQuad {
            h_a1: h_a,
            h_t1: h_t,
            h_a2: h_a,
            h_t2: h_t,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(input: usize, hidden: Vec<usize>, d: usize, p: f64) -> EncoderConfig {
        EncoderConfig::new(input, hidden, d, p)
    }

    fn model(p: f64, seed: u64) -> TurboModel {
        TurboModel::init(
            cfg(6, vec![16], 5, p),
            cfg(4, vec![16], 5, p),
            3,
            &RngState::new(seed, "init"),
        )
        .unwrap()
    }

    fn batch(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = RngState::new(seed, "batch");
        Tensor::new(vec![n, d], (0..n * d).map(|_| rng.normal()).collect()).unwrap()
    }

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = model(0.2, 1);
        let b = model(0.2, 1);
        assert_eq!(a, b);
        assert_ne!(a, model(0.2, 2));
        for l in a.layers() {
            assert!(l.bias.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn glorot_bound_and_mean() {
        let l = Linear::glorot(256, 256, &mut RngState::new(3, "glorot"));
        let bound = (6.0f64 / 512.0).sqrt();
        assert!(l.weight.data().iter().all(|w| w.abs() <= bound));
        let mean = l.weight.data().iter().sum::<f64>() / l.weight.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0, vec![], 2, 0.1).validate().is_err());
        assert!(cfg(2, vec![0], 2, 0.1).validate().is_err());
        assert!(cfg(2, vec![3], 2, 1.0).validate().is_err());
        assert!(cfg(2, vec![3], 2, 0.0).validate().is_ok());
    }

    #[test]
    fn encode_shapes_and_eval_determinism() {
        let m = model(0.2, 4);
        let x = batch(7, 6, 1);
        let run = || {
            let mut tape = Tape::new();
            let bm = m.bind(&mut tape);
            let xv = tape.constant(&x);
            let h = bm.audio.encode(&mut tape, xv, Mode::Eval).unwrap();
            assert_eq!(tape.shape(h), &[7, 5]);
            tape.value(h).to_vec()
        };
        assert_eq!(bits(&run()), bits(&run()));
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let m = model(0.2, 4);
        let mut tape = Tape::new();
        let bm = m.bind(&mut tape);
        let xv = tape.constant(&batch(3, 5, 1));
        assert!(matches!(
            bm.audio.encode(&mut tape, xv, Mode::Eval),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn train_mode_without_dropout_equals_eval() {
        let m = model(0.0, 5);
        let x = batch(4, 6, 2);
        let mut tape = Tape::new();
        let bm = m.bind(&mut tape);
        let xv = tape.constant(&x);
        let e = bm.audio.encode(&mut tape, xv, Mode::Eval).unwrap();
        let mut rng = RngState::new(0, "t");
        let t = bm
            .audio
            .encode(&mut tape, xv, Mode::Train(&mut rng))
            .unwrap();
        assert_eq!(bits(tape.value(e)), bits(tape.value(t)));
    }

    #[test]
    fn dual_forward_without_dropout_coincides() {
        let m = model(0.0, 6);
        let mut tape = Tape::new();
        let bm = m.bind(&mut tape);
        let a = tape.constant(&batch(5, 6, 3));
        let t = tape.constant(&batch(5, 4, 4));
        let q = bm
            .dual_forward(&mut tape, a, t, &RngState::new(1, "step"))
            .unwrap();
        assert_eq!(bits(tape.value(q.h_a1)), bits(tape.value(q.h_a2)));
        assert_eq!(bits(tape.value(q.h_t1)), bits(tape.value(q.h_t2)));
    }

    #[test]
    fn dual_forward_with_dropout_differs_for_every_seed() {
        let m = TurboModel::init(
            cfg(6, vec![64], 5, 0.2),
            cfg(4, vec![64], 5, 0.2),
            2,
            &RngState::new(0, "init"),
        )
        .unwrap();
        for seed in 0..20 {
            let mut tape = Tape::new();
            let bm = m.bind(&mut tape);
            let a = tape.constant(&batch(8, 6, seed));
            let t = tape.constant(&batch(8, 4, seed + 100));
            let q = bm
                .dual_forward(&mut tape, a, t, &RngState::new(seed, "step"))
                .unwrap();
            let diff = |x: Var, y: Var| {
                tape.value(x)
                    .iter()
                    .zip(tape.value(y))
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max)
            };
            assert!(diff(q.h_a1, q.h_a2) > 0.0, "seed {seed}");
            assert!(diff(q.h_t1, q.h_t2) > 0.0, "seed {seed}");
        }
    }

    #[test]
    fn dual_forward_is_reproducible_and_checks_batch() {
        let m = model(0.2, 7);
        let run = |seed| {
            let mut tape = Tape::new();
            let bm = m.bind(&mut tape);
            let a = tape.constant(&batch(5, 6, 3));
            let t = tape.constant(&batch(5, 4, 4));
            let q = bm
                .dual_forward(&mut tape, a, t, &RngState::new(seed, "s"))
                .unwrap();
            [q.h_a1, q.h_t1, q.h_a2, q.h_t2]
                .iter()
                .flat_map(|v| bits(tape.value(*v)))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));

        let mut tape = Tape::new();
        let bm = m.bind(&mut tape);
        let a = tape.constant(&batch(5, 6, 3));
        let t = tape.constant(&batch(4, 4, 4));
        assert!(matches!(
            bm.dual_forward(&mut tape, a, t, &RngState::new(0, "s")),
            Err(Error::Dimension { .. })
        ));
    }

    fn zero_classifier(m: &mut TurboModel) {
        m.classifier.linear.weight.data_mut().fill(0.0);
        m.classifier.linear.bias.data_mut().fill(0.0);
    }

    #[test]
    fn classify_uniform_for_zero_head() {
        let mut m = TurboModel::init(
            cfg(6, vec![8], 3, 0.0),
            cfg(4, vec![8], 3, 0.0),
            4,
            &RngState::new(0, "init"),
        )
        .unwrap();
        zero_classifier(&mut m);
        let mut tape = Tape::new();
        let bm = m.bind(&mut tape);
        let a = tape.constant(&batch(3, 6, 1));
        let t = tape.constant(&batch(3, 4, 2));
        let (ha, ht) = bm.encode_eval(&mut tape, a, t).unwrap();
        let p = bm.classify(&mut tape, ha, ht).unwrap();
        assert!(tape.value(p).iter().all(|&v| v == 0.25));
    }

    #[test]
    fn classify_bias_only() {
        let mut m = TurboModel::init(
            cfg(6, vec![8], 3, 0.0),
            cfg(4, vec![8], 3, 0.0),
            2,
            &RngState::new(0, "init"),
        )
        .unwrap();
        zero_classifier(&mut m);
        m.classifier.linear.bias.data_mut()[0] = 3f64.ln();
        let mut tape = Tape::new();
        let bm = m.bind(&mut tape);
        let a = tape.constant(&batch(4, 6, 1));
        let t = tape.constant(&batch(4, 4, 2));
        let (ha, ht) = bm.encode_eval(&mut tape, a, t).unwrap();
        let p = bm.classify(&mut tape, ha, ht).unwrap();
        for row in tape.value(p).chunks(2) {
            assert!((row[0] - 0.75).abs() < 1e-15 && (row[1] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn classify_rows_sum_to_one_and_checks_dims() {
        let m = model(0.2, 8);
        let mut tape = Tape::new();
        let bm = m.bind(&mut tape);
        let a = tape.constant(&batch(6, 6, 1));
        let t = tape.constant(&batch(6, 4, 2));
        let (ha, ht) = bm.encode_eval(&mut tape, a, t).unwrap();
        let p = bm.classify(&mut tape, ha, ht).unwrap();
        for row in tape.value(p).chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let short = tape.constant(&batch(5, 5, 3));
        assert!(bm.classify(&mut tape, ha, short).is_err());
    }

    #[test]
    fn batch_permutation_permutes_outputs() {
        let m = model(0.2, 9);
        let a = batch(6, 6, 11);
        let t = batch(6, 4, 12);
        let perm = [3, 0, 5, 1, 4, 2];
        let probs = |a: &Tensor, t: &Tensor| {
            let mut tape = Tape::new();
            let bm = m.bind(&mut tape);
            let av = tape.constant(a);
            let tv = tape.constant(t);
            let (ha, ht) = bm.encode_eval(&mut tape, av, tv).unwrap();
            let p = bm.classify(&mut tape, ha, ht).unwrap();
            tape.to_tensor(p)
        };
        let base = probs(&a, &t);
        let permuted = probs(
            &a.select_rows(&perm).unwrap(),
            &t.select_rows(&perm).unwrap(),
        );
        assert_eq!(permuted, base.select_rows(&perm).unwrap());
    }

    #[test]
    fn model_round_trips_through_json() {
        let m = model(0.2, 10);
        let s = serde_json::to_string(&m).unwrap();
        let back: TurboModel = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        assert!(back.params().iter().all(|p| p.requires_grad()));
    }
}
