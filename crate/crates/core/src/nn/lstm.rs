//! Single LSTM cell with full backpropagation through time.
//!
//! Gate weights act on the concatenation `[x_t ; h_{t-1}]`, so every gate
//! matrix has shape `(hidden, input + hidden)`. The forget-gate bias starts
//! at 1.0 so early training does not wipe the cell state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, Matrix, NnError};

#[derive(Debug, Clone)]
pub struct LstmCell {
    input_size: usize,
    hidden_size: usize,
    w_input: Matrix,
    w_forget: Matrix,
    w_output: Matrix,
    w_cand: Matrix,
    b_input: Vec<f64>,
    b_forget: Vec<f64>,
    b_output: Vec<f64>,
    b_cand: Vec<f64>,
}

/// Per-step quantities cached by [`LstmCell::forward_sequence`].
#[derive(Debug, Clone)]
pub struct LstmTrace {
    /// `[x_t ; h_{t-1}]` for every step.
    concat_inputs: Vec<Vec<f64>>,
    input_gates: Vec<Vec<f64>>,
    forget_gates: Vec<Vec<f64>>,
    output_gates: Vec<Vec<f64>>,
    candidates: Vec<Vec<f64>>,
    cell_states: Vec<Vec<f64>>,
    pub hiddens: Vec<Vec<f64>>,
}

impl LstmTrace {
    pub fn last_hidden(&self) -> &[f64] {
        self.hiddens.last().expect("non-empty sequence")
    }

    pub fn len(&self) -> usize {
        self.hiddens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hiddens.is_empty()
    }
}

/// Gate gradients in parameter shape.
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w_input: Matrix,
    pub w_forget: Matrix,
    pub w_output: Matrix,
    pub w_cand: Matrix,
    pub b_input: Vec<f64>,
    pub b_forget: Vec<f64>,
    pub b_output: Vec<f64>,
    pub b_cand: Vec<f64>,
}

impl LstmGrads {
    fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let z = || Matrix::zeros(hidden_size, input_size + hidden_size);
        Self {
            w_input: z(),
            w_forget: z(),
            w_output: z(),
            w_cand: z(),
            b_input: vec![0.0; hidden_size],
            b_forget: vec![0.0; hidden_size],
            b_output: vec![0.0; hidden_size],
            b_cand: vec![0.0; hidden_size],
        }
    }

    /// Flattened in the same order as [`LstmCell::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in [
            (&self.w_input, &self.b_input),
            (&self.w_forget, &self.b_forget),
            (&self.w_output, &self.b_output),
            (&self.w_cand, &self.b_cand),
        ] {
            out.extend_from_slice(&w.data);
            out.extend_from_slice(b);
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct LstmCheckpoint {
    input_size: usize,
    hidden_size: usize,
    params: Vec<f64>,
}

impl LstmCell {
    pub fn new(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Result<Self, NnError> {
        if input_size == 0 || hidden_size == 0 {
            return Err(NnError::Dimension(
                "input_size and hidden_size must be positive".into(),
            ));
        }
        // Xavier over the concatenated fan-in.
        let limit = (6.0 / (input_size + 2 * hidden_size) as f64).sqrt();
        let mut gate_w = || Matrix {
            rows: hidden_size,
            cols: input_size + hidden_size,
            data: (0..hidden_size * (input_size + hidden_size))
                .map(|_| rng.random_range(-limit..limit))
                .collect(),
        };
        let (w_input, w_forget, w_output, w_cand) = (gate_w(), gate_w(), gate_w(), gate_w());
        Ok(Self {
            input_size,
            hidden_size,
            w_input,
            w_forget,
            w_output,
            w_cand,
            b_input: vec![0.0; hidden_size],
            b_forget: vec![1.0; hidden_size],
            b_output: vec![0.0; hidden_size],
            b_cand: vec![0.0; hidden_size],
        })
    }

    /// All-zero weights and biases (including the forget bias); test fixture.
    pub fn zeros(input_size: usize, hidden_size: usize) -> Result<Self, NnError> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut cell = Self::new(input_size, hidden_size, &mut rng)?;
        for w in [
            &mut cell.w_input,
            &mut cell.w_forget,
            &mut cell.w_output,
            &mut cell.w_cand,
        ] {
            w.data.fill(0.0);
        }
        cell.b_forget.fill(0.0);
        Ok(cell)
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    /// Standard LSTM recurrence from zero initial state over a whole sequence.
    pub fn forward_sequence(&self, inputs: &[Vec<f64>]) -> Result<LstmTrace, NnError> {
        if inputs.is_empty() {
            return Err(NnError::Dimension("empty input sequence".into()));
        }
        for x in inputs {
            if x.len() != self.input_size {
                return Err(NnError::Dimension(format!(
                    "input vector length {} != input_size {}",
                    x.len(),
                    self.input_size
                )));
            }
        }
        let h = self.hidden_size;
        let mut trace = LstmTrace {
            concat_inputs: Vec::with_capacity(inputs.len()),
            input_gates: Vec::with_capacity(inputs.len()),
            forget_gates: Vec::with_capacity(inputs.len()),
            output_gates: Vec::with_capacity(inputs.len()),
            candidates: Vec::with_capacity(inputs.len()),
            cell_states: Vec::with_capacity(inputs.len()),
            hiddens: Vec::with_capacity(inputs.len()),
        };
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for x in inputs {
            let mut z = Vec::with_capacity(self.input_size + h);
            z.extend_from_slice(x);
            z.extend_from_slice(&h_prev);

            let gate = |w: &Matrix, b: &[f64]| -> Vec<f64> {
                let mut v = w.matvec(&z);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi = sigmoid(*vi + bi);
                }
                v
            };
            let i = gate(&self.w_input, &self.b_input);
            let f = gate(&self.w_forget, &self.b_forget);
            let o = gate(&self.w_output, &self.b_output);
            let mut g = self.w_cand.matvec(&z);
            for (gi, bi) in g.iter_mut().zip(&self.b_cand) {
                *gi = (*gi + bi).tanh();
            }

            let mut c = vec![0.0; h];
            let mut h_new = vec![0.0; h];
            for j in 0..h {
                c[j] = f[j] * c_prev[j] + i[j] * g[j];
                h_new[j] = o[j] * c[j].tanh();
            }

            trace.concat_inputs.push(z);
            trace.input_gates.push(i);
            trace.forget_gates.push(f);
            trace.output_gates.push(o);
            trace.candidates.push(g);
            trace.cell_states.push(c.clone());
            trace.hiddens.push(h_new.clone());
            c_prev = c;
            h_prev = h_new;
        }
        Ok(trace)
    }

    /// Backpropagation through time. `output_grads[t]` is dLoss/dh_t.
    pub fn bptt(&self, trace: &LstmTrace, output_grads: &[Vec<f64>]) -> Result<LstmGrads, NnError> {
        if output_grads.len() != trace.len() {
            return Err(NnError::Dimension(format!(
                "output_grads length {} != sequence length {}",
                output_grads.len(),
                trace.len()
            )));
        }
        let h = self.hidden_size;
        for g in output_grads {
            if g.len() != h {
                return Err(NnError::Dimension(format!(
                    "output grad width {} != hidden_size {h}",
                    g.len()
                )));
            }
        }
        let mut grads = LstmGrads::zeros(self.input_size, h);
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for t in (0..trace.len()).rev() {
            let i = &trace.input_gates[t];
            let f = &trace.forget_gates[t];
            let o = &trace.output_gates[t];
            let g = &trace.candidates[t];
            let c = &trace.cell_states[t];
            let c_prev: Vec<f64> = if t == 0 {
                vec![0.0; h]
            } else {
                trace.cell_states[t - 1].clone()
            };

            let mut di_pre = vec![0.0; h];
            let mut df_pre = vec![0.0; h];
            let mut do_pre = vec![0.0; h];
            let mut dg_pre = vec![0.0; h];
            let mut dc = vec![0.0; h];
            for j in 0..h {
                let dh = output_grads[t][j] + dh_next[j];
                let tanh_c = c[j].tanh();
                do_pre[j] = dh * tanh_c * o[j] * (1.0 - o[j]);
                dc[j] = dh * o[j] * (1.0 - tanh_c * tanh_c) + dc_next[j];
                df_pre[j] = dc[j] * c_prev[j] * f[j] * (1.0 - f[j]);
                di_pre[j] = dc[j] * g[j] * i[j] * (1.0 - i[j]);
                dg_pre[j] = dc[j] * i[j] * (1.0 - g[j] * g[j]);
                dc_next[j] = dc[j] * f[j];
            }

            let z = &trace.concat_inputs[t];
            grads.w_input.add_outer(&di_pre, z);
            grads.w_forget.add_outer(&df_pre, z);
            grads.w_output.add_outer(&do_pre, z);
            grads.w_cand.add_outer(&dg_pre, z);
            for j in 0..h {
                grads.b_input[j] += di_pre[j];
                grads.b_forget[j] += df_pre[j];
                grads.b_output[j] += do_pre[j];
                grads.b_cand[j] += dg_pre[j];
            }

            let mut dz = self.w_input.matvec_t(&di_pre);
            for (dst, src) in dz.iter_mut().zip(self.w_forget.matvec_t(&df_pre)) {
                *dst += src;
            }
            for (dst, src) in dz.iter_mut().zip(self.w_output.matvec_t(&do_pre)) {
                *dst += src;
            }
            for (dst, src) in dz.iter_mut().zip(self.w_cand.matvec_t(&dg_pre)) {
                *dst += src;
            }
            dh_next.copy_from_slice(&dz[self.input_size..]);
        }
        Ok(grads)
    }

    pub fn param_count(&self) -> usize {
        4 * self.hidden_size * (self.input_size + self.hidden_size) + 4 * self.hidden_size
    }

    /// Gate order: input, forget, output, candidate; weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in [
            (&self.w_input, &self.b_input),
            (&self.w_forget, &self.b_forget),
            (&self.w_output, &self.b_output),
            (&self.w_cand, &self.b_cand),
        ] {
            out.extend_from_slice(&w.data);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.param_count() {
            return Err(NnError::Dimension(format!(
                "flat parameter length {} != expected {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for (w, b) in [
            (&mut self.w_input, &mut self.b_input),
            (&mut self.w_forget, &mut self.b_forget),
            (&mut self.w_output, &mut self.b_output),
            (&mut self.w_cand, &mut self.b_cand),
        ] {
            w.data.copy_from_slice(&params[off..off + w.data.len()]);
            off += w.data.len();
            b.copy_from_slice(&params[off..off + b.len()]);
            off += b.len();
        }
        Ok(())
    }

    pub fn to_checkpoint_json(&self) -> String {
        serde_json::to_string(&LstmCheckpoint {
            input_size: self.input_size,
            hidden_size: self.hidden_size,
            params: self.flat_params(),
        })
        .expect("checkpoint serialization cannot fail")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self, NnError> {
        let ckpt: LstmCheckpoint = serde_json::from_str(text)
            .map_err(|e| NnError::Numeric(format!("checkpoint parse: {e}")))?;
        let mut cell = Self::zeros(ckpt.input_size, ckpt.hidden_size)?;
        cell.set_flat_params(&ckpt.params)?;
        Ok(cell)
    }
}
