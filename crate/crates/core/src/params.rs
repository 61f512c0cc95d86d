//! Dense parameter storage and deterministic initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::ModelConfig;
use crate::error::{Error, Result};

pub const INIT_STD: f64 = 0.01;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                what: "matrix data".into(),
                expected: format!("{} values ({rows}x{cols})", rows * cols),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out = self · x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x);
        }
    }

    /// `out += selfᵀ · y`
    pub fn add_tmul_vec(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                axpy(yr, self.row(r), out);
            }
        }
    }

    /// `self += a ⊗ b`
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            if ar != 0.0 {
                axpy(ar, b, self.row_mut(r));
            }
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a · x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// All trainable arrays of every model kind. Arrays a model does not use are
/// kept empty so the layout is fully determined by the [`ModelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    /// `P`: target-role item embeddings, items × d.
    pub target_emb: Matrix,
    /// `Q`: history-role item embeddings, items × d.
    pub history_emb: Matrix,
    /// `W`: attention hidden layer, d′ × d (d′ × 2d for concat attention).
    pub attn_weight: Matrix,
    /// `b`: attention hidden bias, d′.
    pub attn_bias: Vec<f64>,
    /// `H`: feature-level attention output, d′ × d.
    pub feature_out: Matrix,
    /// `h`: item-level attention output, d′.
    pub item_out: Vec<f64>,
    /// `W_l` of the deep interaction tower; layer l is width_l × width_{l-1}.
    pub deep_weights: Vec<Matrix>,
    /// `b_l` of the deep interaction tower.
    pub deep_biases: Vec<Vec<f64>>,
    /// `V`: final linear regression weights.
    pub regression: Vec<f64>,
    /// `b_u`
    pub user_bias: Vec<f64>,
    /// `b_i`
    pub item_bias: Vec<f64>,
}

/// Expected array shapes for a configuration, in canonical order.
pub fn expected_shapes(config: &ModelConfig, item_count: usize, user_count: usize) -> Vec<(String, (usize, usize))> {
    let d = config.d;
    let dp = config.d_prime;
    let has_attn = config.kind.has_attention();
    let mut shapes = vec![
        ("P".to_string(), (item_count, d)),
        ("Q".to_string(), (item_count, d)),
        ("W".to_string(), if has_attn { (dp, config.attention_input_width()) } else { (0, 0) }),
        ("b".to_string(), (if has_attn { dp } else { 0 }, 1)),
        ("H".to_string(), if config.uses_feature_output() { (dp, d) } else { (0, 0) }),
        ("h".to_string(), (if config.uses_item_output() { dp } else { 0 }, 1)),
    ];
    let layers: &[usize] = if config.kind.is_deep() { &config.deep_layers } else { &[] };
    let mut fan_in = d;
    for (l, &width) in layers.iter().enumerate() {
        shapes.push((format!("W{}", l + 1), (width, fan_in)));
        shapes.push((format!("b{}", l + 1), (width, 1)));
        fan_in = width;
    }
    let deep = config.kind.is_deep();
    shapes.push(("V".to_string(), (if deep { fan_in } else { 0 }, 1)));
    shapes.push(("b_user".to_string(), (if deep { user_count } else { 0 }, 1)));
    shapes.push(("b_item".to_string(), (if deep { item_count } else { 0 }, 1)));
    shapes
}

impl ParameterSet {
    /// All-zero parameters with the layout implied by `config`.
    pub fn zeros(config: &ModelConfig, item_count: usize, user_count: usize) -> Self {
        let d = config.d;
        let dp = config.d_prime;
        let has_attn = config.kind.has_attention();
        let (deep_weights, deep_biases) = if config.kind.is_deep() {
            let mut fan_in = d;
            let mut ws = Vec::new();
            let mut bs = Vec::new();
            for &width in &config.deep_layers {
                ws.push(Matrix::zeros(width, fan_in));
                bs.push(vec![0.0; width]);
                fan_in = width;
            }
            (ws, bs)
        } else {
            (Vec::new(), Vec::new())
        };
        let last = deep_biases.last().map_or(0, Vec::len);
        let deep = config.kind.is_deep();
        ParameterSet {
            target_emb: Matrix::zeros(item_count, d),
            history_emb: Matrix::zeros(item_count, d),
            attn_weight: if has_attn {
                Matrix::zeros(dp, config.attention_input_width())
            } else {
                Matrix::zeros(0, 0)
            },
            attn_bias: vec![0.0; if has_attn { dp } else { 0 }],
            feature_out: if config.uses_feature_output() {
                Matrix::zeros(dp, d)
            } else {
                Matrix::zeros(0, 0)
            },
            item_out: vec![0.0; if config.uses_item_output() { dp } else { 0 }],
            deep_weights,
            deep_biases,
            regression: vec![0.0; last],
            user_bias: vec![0.0; if deep { user_count } else { 0 }],
            item_bias: vec![0.0; if deep { item_count } else { 0 }],
        }
    }

    pub fn item_count(&self) -> usize {
        self.target_emb.rows()
    }

    pub fn user_count(&self) -> usize {
        self.user_bias.len()
    }

    /// Named flat views of every array, in checkpoint order.
    pub fn arrays(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("P".into(), self.target_emb.as_slice()),
            ("Q".into(), self.history_emb.as_slice()),
            ("W".into(), self.attn_weight.as_slice()),
            ("b".into(), &self.attn_bias),
            ("H".into(), self.feature_out.as_slice()),
            ("h".into(), &self.item_out),
        ];
        for (l, (w, b)) in self.deep_weights.iter().zip(&self.deep_biases).enumerate() {
            out.push((format!("W{}", l + 1), w.as_slice()));
            out.push((format!("b{}", l + 1), b));
        }
        out.push(("V".into(), &self.regression));
        out.push(("b_user".into(), &self.user_bias));
        out.push(("b_item".into(), &self.item_bias));
        out
    }

    /// Mutable counterpart of [`ParameterSet::arrays`], same order.
    pub fn arrays_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = vec![
            ("P".into(), self.target_emb.as_mut_slice()),
            ("Q".into(), self.history_emb.as_mut_slice()),
            ("W".into(), self.attn_weight.as_mut_slice()),
            ("b".into(), &mut self.attn_bias),
            ("H".into(), self.feature_out.as_mut_slice()),
            ("h".into(), &mut self.item_out),
        ];
        for (l, (w, b)) in self.deep_weights.iter_mut().zip(self.deep_biases.iter_mut()).enumerate() {
            out.push((format!("W{}", l + 1), w.as_mut_slice()));
            out.push((format!("b{}", l + 1), b));
        }
        out.push(("V".into(), &mut self.regression));
        out.push(("b_user".into(), &mut self.user_bias));
        out.push(("b_item".into(), &mut self.item_bias));
        out
    }

    /// ‖Θ‖², the sum of squares over every trainable.
    pub fn squared_norm(&self) -> f64 {
        self.arrays()
            .iter()
            .flat_map(|(_, a)| a.iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.arrays().iter().all(|(_, a)| a.iter().all(|v| v.is_finite()))
    }

    /// Checks that every array matches the layout implied by `config`.
    pub fn check_layout(&self, config: &ModelConfig, item_count: usize, user_count: usize) -> Result<()> {
        let expected = ParameterSet::zeros(config, item_count, user_count);
        let ours = self.arrays();
        let theirs = expected.arrays();
        if ours.len() != theirs.len() {
            return Err(Error::Shape {
                what: "parameter arrays".into(),
                expected: format!("{} arrays", theirs.len()),
                actual: format!("{} arrays", ours.len()),
            });
        }
        for ((name, a), (_, b)) in ours.iter().zip(&theirs) {
            if a.len() != b.len() {
                return Err(Error::Shape {
                    what: name.clone(),
                    expected: format!("{} values", b.len()),
                    actual: format!("{} values", a.len()),
                });
            }
        }
        Ok(())
    }
}

/// FISM-trained embedding tables used to warm-start attentive models.
#[derive(Debug, Clone, PartialEq)]
pub struct Pretrained {
    pub target_emb: Matrix,
    pub history_emb: Matrix,
}

/// Draws a fresh parameter set. Weight arrays are i.i.d. N(0, 0.01²), biases
/// start at zero; `pretrained` tables, when given, replace `P` and `Q`.
pub fn init_parameters(
    config: &ModelConfig,
    item_count: usize,
    user_count: usize,
    seed: u64,
    pretrained: Option<&Pretrained>,
) -> Result<ParameterSet> {
    config.validate()?;
    if item_count == 0 || user_count == 0 {
        return Err(Error::Config(format!(
            "item and user counts must be positive (items={item_count}, users={user_count})"
        )));
    }
    let mut params = ParameterSet::zeros(config, item_count, user_count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    let mut fill = |slice: &mut [f64]| {
        for v in slice {
            *v = normal.sample(&mut rng);
        }
    };

    match pretrained {
        Some(pre) => {
            for (what, m) in [("pretrained P", &pre.target_emb), ("pretrained Q", &pre.history_emb)] {
                if m.shape() != (item_count, config.d) {
                    return Err(Error::Shape {
                        what: what.into(),
                        expected: format!("{item_count}x{}", config.d),
                        actual: format!("{}x{}", m.rows(), m.cols()),
                    });
                }
            }
            params.target_emb = pre.target_emb.clone();
            params.history_emb = pre.history_emb.clone();
        }
        None => {
            fill(params.target_emb.as_mut_slice());
            fill(params.history_emb.as_mut_slice());
        }
    }
    fill(params.attn_weight.as_mut_slice());
    fill(params.feature_out.as_mut_slice());
    fill(&mut params.item_out);
    for w in &mut params.deep_weights {
        fill(w.as_mut_slice());
    }
    fill(&mut params.regression);
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Design, ModelKind};

    #[test]
    fn same_seed_is_bitwise_identical() {
        let cfg = ModelConfig::new(ModelKind::FlaDicf, 8).with_design(Design::Design1);
        let a = init_parameters(&cfg, 20, 5, 7, None).unwrap();
        let b = init_parameters(&cfg, 20, 5, 7, None).unwrap();
        assert_eq!(a, b);
        let c = init_parameters(&cfg, 20, 5, 8, None).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pretrained_tables_are_copied() {
        let cfg = ModelConfig::new(ModelKind::FlaNais, 4);
        let mut p = Matrix::zeros(6, 4);
        for (k, v) in p.as_mut_slice().iter_mut().enumerate() {
            *v = k as f64 * 0.5;
        }
        let q = Matrix::from_vec(6, 4, (0..24).map(|k| -(k as f64)).collect()).unwrap();
        let pre = Pretrained { target_emb: p.clone(), history_emb: q.clone() };
        let params = init_parameters(&cfg, 6, 2, 1, Some(&pre)).unwrap();
        assert_eq!(params.target_emb, p);
        assert_eq!(params.history_emb, q);
        assert!(params.feature_out.as_slice().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn pretrained_shape_mismatch_names_shapes() {
        let cfg = ModelConfig::new(ModelKind::Nais, 4);
        let pre = Pretrained { target_emb: Matrix::zeros(6, 3), history_emb: Matrix::zeros(6, 4) };
        let err = init_parameters(&cfg, 6, 2, 1, Some(&pre)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("6x4") && msg.contains("6x3"), "{msg}");
    }

    #[test]
    fn gaussian_moments() {
        // 10⁴+ entries from the embedding tables.
        let cfg = ModelConfig::new(ModelKind::Fism, 16);
        let params = init_parameters(&cfg, 400, 1, 3, None).unwrap();
        let values: Vec<f64> = params
            .target_emb
            .as_slice()
            .iter()
            .chain(params.history_emb.as_slice())
            .copied()
            .collect();
        assert!(values.len() >= 10_000);
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.001, "mean {mean}");
        assert!((var.sqrt() - 0.01).abs() < 0.001, "std {}", var.sqrt());
    }

    #[test]
    fn biases_start_at_zero_and_layout_is_consistent() {
        let cfg = ModelConfig::new(ModelKind::DeepIcf, 8);
        let params = init_parameters(&cfg, 10, 3, 0, None).unwrap();
        assert!(params.attn_bias.iter().all(|&v| v == 0.0));
        assert!(params.deep_biases.iter().flatten().all(|&v| v == 0.0));
        assert!(params.user_bias.iter().chain(&params.item_bias).all(|&v| v == 0.0));
        assert!(params.feature_out.is_empty());
        assert_eq!(params.item_out.len(), 8);
        assert_eq!(params.deep_weights[1].shape(), (4, 8));
        assert_eq!(params.regression.len(), 4);
        params.check_layout(&cfg, 10, 3).unwrap();
        let shapes = expected_shapes(&cfg, 10, 3);
        for ((name, arr), (ename, (r, c))) in params.arrays().iter().zip(&shapes) {
            assert_eq!(name, ename);
            assert_eq!(arr.len(), r * c, "{name}");
        }
    }

    #[test]
    fn matrix_helpers() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut out = [0.0; 2];
        m.mul_vec_into(&[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, [-2.0, -2.0]);
        let mut back = [0.0; 3];
        m.add_tmul_vec(&[1.0, 1.0], &mut back);
        assert_eq!(back, [5.0, 7.0, 9.0]);
        let mut g = Matrix::zeros(2, 3);
        g.add_outer(&[1.0, 2.0], &[1.0, 0.0, 1.0]);
        assert_eq!(g.as_slice(), &[1.0, 0.0, 1.0, 2.0, 0.0, 2.0]);
        assert!(Matrix::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
