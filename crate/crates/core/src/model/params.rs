use crate::error::{Error, Result};
use crate::model::{CellVariant, ModelConfig};
use crate::numerics::{init_matrix, InitScheme, Matrix, Rng};

/// One affine pre-activation `W x + U h + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    /// hidden x input
    pub w: Matrix,
    /// hidden x hidden
    pub u: Matrix,
    /// hidden x 1
    pub b: Matrix,
}

impl GateParams {
    fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        GateParams {
            w: init_matrix(hidden, input, InitScheme::UniformScaled, rng),
            u: init_matrix(hidden, hidden, InitScheme::UniformScaled, rng),
            b: init_matrix(hidden, 1, InitScheme::Zeros, rng),
        }
    }
}

/// Parameters of a recurrent cell.
///
/// LSTM cells hold four gates in the order input, output, forget, candidate;
/// the tanh RNN holds one.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub gates: Vec<GateParams>,
}

pub(crate) const GATE_I: usize = 0;
pub(crate) const GATE_O: usize = 1;
pub(crate) const GATE_F: usize = 2;
pub(crate) const GATE_C: usize = 3;

const LSTM_GATE_SUFFIXES: [&str; 4] = ["i", "o", "f", "c"];

impl CellParams {
    pub fn init(variant: CellVariant, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        CellParams {
            gates: (0..variant.num_gates())
                .map(|_| GateParams::init(input, hidden, rng))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.gates[0].w.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.gates[0].w.rows()
    }

    fn push_named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        for (k, g) in self.gates.iter().enumerate() {
            let (w, u, b) = gate_names(self.gates.len(), k);
            out.push((format!("{prefix}.{w}"), &g.w));
            out.push((format!("{prefix}.{u}"), &g.u));
            out.push((format!("{prefix}.{b}"), &g.b));
        }
    }

    fn push_named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Matrix)>) {
        let n = self.gates.len();
        for (k, g) in self.gates.iter_mut().enumerate() {
            let (w, u, b) = gate_names(n, k);
            out.push((format!("{prefix}.{w}"), &mut g.w));
            out.push((format!("{prefix}.{u}"), &mut g.u));
            out.push((format!("{prefix}.{b}"), &mut g.b));
        }
    }
}

fn gate_names(num_gates: usize, k: usize) -> (String, String, String) {
    if num_gates == 1 {
        ("W".into(), "U".into(), "b_h".into())
    } else {
        let s = LSTM_GATE_SUFFIXES[k];
        (format!("W_{s}"), format!("U_{s}"), format!("b_{s}"))
    }
}

/// Additive alignment model: `a_j = v_a · tanh(W_s s + W_h h_j + b_a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// attn x hidden
    pub w_s: Matrix,
    /// attn x encoder output
    pub w_h: Matrix,
    /// attn x 1
    pub b_a: Matrix,
    /// 1 x attn
    pub v_a: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams {
    pub forward: CellParams,
    /// Present on the bidirectional first layer only.
    pub backward: Option<CellParams>,
}

/// Every trainable matrix of the encoder-decoder.
///
/// The same type doubles as the gradient container: [`Gradients`] has
/// exactly the shapes of the parameters it differentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// src_vocab x embed
    pub src_embedding: Matrix,
    /// tgt_vocab x embed
    pub tgt_embedding: Matrix,
    pub encoder: Vec<EncoderLayerParams>,
    pub attention: AttentionParams,
    /// hidden x encoder output; carries the last encoder state into the decoder
    pub bridge: Matrix,
    pub decoder: Vec<CellParams>,
    /// tgt_vocab x hidden
    pub output_w: Matrix,
    /// tgt_vocab x 1
    pub output_b: Matrix,
}

pub type Gradients = ModelParams;

impl ModelParams {
    /// Glorot-uniform weights and zero biases, drawn in a fixed order from `config.seed`.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(config.seed);
        let rng = &mut rng;
        let h = config.hidden_dim;
        let uniform = InitScheme::UniformScaled;
        let src_embedding = init_matrix(config.src_vocab_size, config.embed_dim, uniform, rng);
        let tgt_embedding = init_matrix(config.tgt_vocab_size, config.embed_dim, uniform, rng);
        let encoder = (0..config.encoder_layers)
            .map(|l| {
                let input = config.encoder_input_dim(l);
                let forward = CellParams::init(config.cell, input, h, rng);
                let backward = (l == 0).then(|| CellParams::init(config.cell, input, h, rng));
                EncoderLayerParams { forward, backward }
            })
            .collect();
        let enc_out = config.encoder_output_dim();
        let a = config.attention_dim;
        let attention = AttentionParams {
            w_s: init_matrix(a, h, uniform, rng),
            w_h: init_matrix(a, enc_out, uniform, rng),
            b_a: Matrix::zeros(a, 1),
            v_a: init_matrix(1, a, uniform, rng),
        };
        let bridge = init_matrix(h, enc_out, uniform, rng);
        let decoder = (0..config.decoder_layers)
            .map(|l| CellParams::init(config.cell, config.decoder_input_dim(l), h, rng))
            .collect();
        let output_w = init_matrix(config.tgt_vocab_size, h, uniform, rng);
        let output_b = Matrix::zeros(config.tgt_vocab_size, 1);
        Ok(ModelParams {
            src_embedding,
            tgt_embedding,
            encoder,
            attention,
            bridge,
            decoder,
            output_w,
            output_b,
        })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, m) in z.tensors_mut() {
            m.fill(0.0);
        }
        z
    }

    /// Named matrices in a fixed canonical order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![
            ("src_embedding".into(), &self.src_embedding),
            ("tgt_embedding".into(), &self.tgt_embedding),
        ];
        for (l, layer) in self.encoder.iter().enumerate() {
            match &layer.backward {
                Some(bwd) => {
                    layer.forward.push_named(&format!("encoder.{l}.fwd"), &mut out);
                    bwd.push_named(&format!("encoder.{l}.bwd"), &mut out);
                }
                None => layer.forward.push_named(&format!("encoder.{l}"), &mut out),
            }
        }
        let a = &self.attention;
        out.push(("attention.W_s".into(), &a.w_s));
        out.push(("attention.W_h".into(), &a.w_h));
        out.push(("attention.b_a".into(), &a.b_a));
        out.push(("attention.v_a".into(), &a.v_a));
        out.push(("bridge.U".into(), &self.bridge));
        for (l, cell) in self.decoder.iter().enumerate() {
            cell.push_named(&format!("decoder.{l}"), &mut out);
        }
        out.push(("output.W".into(), &self.output_w));
        out.push(("output.b_d".into(), &self.output_b));
        out
    }

    /// Mutable counterpart of [`ModelParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out: Vec<(String, &mut Matrix)> = vec![
            ("src_embedding".into(), &mut self.src_embedding),
            ("tgt_embedding".into(), &mut self.tgt_embedding),
        ];
        for (l, layer) in self.encoder.iter_mut().enumerate() {
            match &mut layer.backward {
                Some(bwd) => {
                    layer.forward.push_named_mut(&format!("encoder.{l}.fwd"), &mut out);
                    bwd.push_named_mut(&format!("encoder.{l}.bwd"), &mut out);
                }
                None => layer.forward.push_named_mut(&format!("encoder.{l}"), &mut out),
            }
        }
        let a = &mut self.attention;
        out.push(("attention.W_s".into(), &mut a.w_s));
        out.push(("attention.W_h".into(), &mut a.w_h));
        out.push(("attention.b_a".into(), &mut a.b_a));
        out.push(("attention.v_a".into(), &mut a.v_a));
        out.push(("bridge.U".into(), &mut self.bridge));
        for (l, cell) in self.decoder.iter_mut().enumerate() {
            cell.push_named_mut(&format!("decoder.{l}"), &mut out);
        }
        out.push(("output.W".into(), &mut self.output_w));
        out.push(("output.b_d".into(), &mut self.output_b));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    /// Checks that every matrix has the shape implied by `config`.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = ModelParams::zero_shaped(config)?;
        let have = self.tensors();
        let want = expected.tensors();
        if have.len() != want.len() {
            return Err(Error::Config(format!(
                "parameter set has {} matrices, configuration implies {}",
                have.len(),
                want.len()
            )));
        }
        for ((hn, hm), (wn, wm)) in have.iter().zip(&want) {
            if hn != wn || hm.shape() != wm.shape() {
                return Err(Error::Shape {
                    op: "check_shapes",
                    left: format!("{hn} {}x{}", hm.rows(), hm.cols()),
                    right: format!("{wn} {}x{}", wm.rows(), wm.cols()),
                });
            }
        }
        Ok(())
    }

    /// Correctly shaped, all-zero parameters.
    pub fn zero_shaped(config: &ModelConfig) -> Result<Self> {
        Ok(ModelParams::init(config)?.zeros_like())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }
}
