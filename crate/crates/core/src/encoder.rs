//! Two-layer GCN encoder shared by both views, and its Adam optimizer.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{CsrMatrix, Matrix, Tape, Var};
use crate::error::{DiffError, Error, Result};
use crate::graph::NormalizedAdjacency;

/// Encoder weights: `w1` is d×h, `w2` is h×o. No bias terms.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w1: Matrix,
    pub w2: Matrix,
}

impl EncoderParams {
    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }
}

/// Glorot-uniform initialization, deterministic in `seed`.
pub fn init_params(d: usize, h: usize, o: usize, seed: u64) -> Result<EncoderParams> {
    if d == 0 || h == 0 || o == 0 {
        return Err(Error::InvalidArgument(format!(
            "encoder dimensions must be positive, got d={d} h={h} o={o}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glorot = |fan_in: usize, fan_out: usize| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        Matrix::from_vec(fan_in, fan_out, (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect())
    };
    let w1 = glorot(d, h);
    let w2 = glorot(h, o);
    Ok(EncoderParams { w1, w2 })
}

/// Node features prepared for propagation. Held as a sparse constant since
/// bag-of-words style inputs are mostly zeros.
#[derive(Debug, Clone)]
pub struct FeatureInput(Arc<CsrMatrix>);

impl FeatureInput {
    pub fn new(x: &Matrix) -> Self {
        Self(Arc::new(CsrMatrix::from_dense(x)))
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }
}

fn degenerate(e: DiffError) -> Error {
    match e {
        DiffError::ZeroRow(r) => Error::DegenerateEmbedding(format!(
            "embedding row {r} is all zeros before normalization"
        )),
        other => Error::Diff(other),
    }
}

/// Records `Z = normalize_rows(Â · relu(Â · X · W1) · W2)` on `tape`.
pub fn encode(tape: &mut Tape, adj: &NormalizedAdjacency, x: &FeatureInput, w1: Var, w2: Var) -> Result<Var> {
    if adj.n() != x.rows() {
        return Err(Error::Diff(DiffError::Shape {
            op: "encode",
            lhs: (adj.n(), adj.n()),
            rhs: (x.rows(), x.cols()),
        }));
    }
    let xw = tape.spmm(&x.0, w1)?;
    let h = tape.spmm(adj.matrix(), xw)?;
    let h = tape.relu(h)?;
    let hw = tape.matmul(h, w2)?;
    let z = tape.spmm(adj.matrix(), hw)?;
    tape.l2_normalize_rows(z).map_err(degenerate)
}

/// Forward pass only.
pub fn embed(adj: &NormalizedAdjacency, x: &FeatureInput, params: &EncoderParams) -> Result<Matrix> {
    let mut tape = Tape::new();
    let w1 = tape.constant(params.w1.clone())?;
    let w2 = tape.constant(params.w2.clone())?;
    let z = encode(&mut tape, adj, x, w1, w2)?;
    Ok(tape.value(z).clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment estimates for each parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        Self {
            config,
            first: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            second: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            step: 0,
        }
    }

    pub fn for_encoder(config: AdamConfig, params: &EncoderParams) -> Self {
        Self::new(config, &[params.w1.shape(), params.w2.shape()])
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update over `(name, param, grad)` triples.
    /// Nothing is modified if any gradient is non-finite.
    pub fn update(&mut self, params: &mut [(&'static str, &mut Matrix, &Matrix)]) -> Result<()> {
        assert_eq!(params.len(), self.first.len(), "parameter count changed");
        for (i, (name, p, g)) in params.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name));
            }
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return Err(Error::Diff(DiffError::Shape {
                    op: "adam",
                    lhs: p.shape(),
                    rhs: g.shape(),
                }));
            }
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, (_, p, g)) in params.iter_mut().enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((w, &gr), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                let grad = gr + weight_decay * *w;
                *mi = beta1 * *mi + (1.0 - beta1) * grad;
                *vi = beta2 * *vi + (1.0 - beta2) * grad * grad;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam step to both encoder weights.
pub fn adam_step(params: &mut EncoderParams, grads: &[Matrix; 2], state: &mut AdamState) -> Result<()> {
    state.update(&mut [("w1", &mut params.w1, &grads[0]), ("w2", &mut params.w2, &grads[1])])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub w1: [usize; 2],
    pub w2: [usize; 2],
    pub adam: AdamConfig,
    pub adam_steps: u64,
}

/// Writes `params.f32le` (w1 then w2, row-major) and `params.json`.
pub fn save_checkpoint(dir: &Path, params: &EncoderParams, adam: &AdamState) -> Result<()> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let bytes: Vec<u8> = params
        .w1
        .data()
        .iter()
        .chain(params.w2.data())
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    let data_path = dir.join("params.f32le");
    fs::write(&data_path, bytes).map_err(io(&data_path))?;
    let meta = CheckpointMeta {
        format: "f32le".into(),
        w1: [params.w1.rows(), params.w1.cols()],
        w2: [params.w2.rows(), params.w2.cols()],
        adam: adam.config,
        adam_steps: adam.step,
    };
    let meta_path = dir.join("params.json");
    let text = serde_json::to_string_pretty(&meta).expect("checkpoint meta serializes");
    fs::write(&meta_path, text).map_err(io(&meta_path))?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(EncoderParams, CheckpointMeta)> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    let meta_path = dir.join("params.json");
    let text = fs::read_to_string(&meta_path).map_err(io(&meta_path))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("params.json: {e}")))?;
    let data_path = dir.join("params.f32le");
    let bytes = fs::read(&data_path).map_err(io(&data_path))?;
    let n1 = meta.w1[0] * meta.w1[1];
    let n2 = meta.w2[0] * meta.w2[1];
    if bytes.len() != 4 * (n1 + n2) {
        return Err(Error::InvalidArgument(format!(
            "params.f32le holds {} bytes, expected {}",
            bytes.len(),
            4 * (n1 + n2)
        )));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let params = EncoderParams {
        w1: Matrix::from_vec(meta.w1[0], meta.w1[1], vals[..n1].to_vec()),
        w2: Matrix::from_vec(meta.w2[0], meta.w2[1], vals[n1..].to_vec()),
    };
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::normalize_edges;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params(4, 3, 2, 7).unwrap();
        let b = init_params(4, 3, 2, 7).unwrap();
        assert_eq!(a, b);
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(a.w1.data().iter().all(|v| v.abs() <= bound));
        assert_ne!(a, init_params(4, 3, 2, 8).unwrap());
        assert!(init_params(0, 3, 2, 1).is_err());
    }

    #[test]
    fn init_mean_is_centered() {
        // 10k draws from U(-b, b): std of the sample mean is b / sqrt(3 * 10k)
        let p = init_params(100, 100, 1, 11).unwrap();
        let bound = (6.0f64 / 200.0).sqrt();
        let mean = p.w1.sum() / 10_000.0;
        let sigma = bound / (3.0f64 * 10_000.0).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean} vs 3σ {}", 3.0 * sigma);
    }

    #[test]
    fn single_node_embedding_is_normalized_features() {
        let adj = normalize_edges(1, &[]);
        let x = FeatureInput::new(&Matrix::from_rows(&[vec![1.0, 2.0]]));
        let params = EncoderParams {
            w1: Matrix::identity(2),
            w2: Matrix::identity(2),
        };
        let z = embed(&adj, &x, &params).unwrap();
        assert!((z.get(0, 0) - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((z.get(0, 1) - 2.0 / 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_embedding_row_is_an_error() {
        let adj = normalize_edges(2, &[]);
        let x = FeatureInput::new(&Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]));
        let params = EncoderParams {
            w1: Matrix::identity(2),
            w2: Matrix::identity(2),
        };
        assert!(matches!(embed(&adj, &x, &params), Err(Error::DegenerateEmbedding(_))));
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = init_params(3, 2, 2, 1).unwrap();
        let before = p.clone();
        let mut st = AdamState::for_encoder(AdamConfig::default(), &p);
        adam_step(&mut p, &[Matrix::zeros(3, 2), Matrix::zeros(2, 2)], &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = EncoderParams {
            w1: Matrix::zeros(2, 2),
            w2: Matrix::zeros(2, 1),
        };
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut st = AdamState::for_encoder(cfg, &p);
        let g1 = Matrix::from_rows(&[vec![0.3, -2.0], vec![5.0, -0.001]]);
        let g2 = Matrix::from_rows(&[vec![1.0], vec![-1.0]]);
        adam_step(&mut p, &[g1.clone(), g2.clone()], &mut st).unwrap();
        for (w, g) in p.w1.data().iter().zip(g1.data()).chain(p.w2.data().iter().zip(g2.data())) {
            assert!((w + 0.01 * g.signum()).abs() < 1e-6, "{w} vs grad {g}");
        }
    }

    #[test]
    fn adam_descends_squared_norm() {
        let mut p = init_params(4, 3, 2, 3).unwrap();
        let mut st = AdamState::for_encoder(AdamConfig { lr: 0.01, ..AdamConfig::default() }, &p);
        let norm = |p: &EncoderParams| p.w1.norm().powi(2) + p.w2.norm().powi(2);
        let mut last = norm(&p);
        for _ in 0..100 {
            let grads = [p.w1.scale(2.0), p.w2.scale(2.0)];
            adam_step(&mut p, &grads, &mut st).unwrap();
            let now = norm(&p);
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = init_params(2, 2, 2, 1).unwrap();
        let before = p.clone();
        let mut st = AdamState::for_encoder(AdamConfig::default(), &p);
        let mut g2 = Matrix::zeros(2, 2);
        g2.set(1, 1, f64::NAN);
        let err = adam_step(&mut p, &[Matrix::zeros(2, 2), g2], &mut st).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient("w2")));
        assert_eq!(p, before);
    }

    #[test]
    fn checkpoint_round_trips_at_f32_precision() {
        let tmp = tempfile::tempdir().unwrap();
        let p = init_params(5, 4, 3, 9).unwrap();
        let st = AdamState::for_encoder(AdamConfig::default(), &p);
        save_checkpoint(tmp.path(), &p, &st).unwrap();
        let (q, meta) = load_checkpoint(tmp.path()).unwrap();
        assert_eq!(meta.w1, [5, 4]);
        assert_eq!(meta.w2, [4, 3]);
        for (a, b) in p.w1.data().iter().zip(q.w1.data()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }
}
