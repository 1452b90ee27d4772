//! Perceptron embedding network with a normalized class-weight head.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::angular::{clamp_cos, normalize_rows, AngularBatch};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{input, Error, Result};

const MODEL_MAGIC: &str = "LMCOT-MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Affine map `x W^T + b` followed by an activation; `w` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    /// Class weights, one row per class. Empty for a score-only model.
    pub head: Array2<f64>,
    pub seed: u64,
}

/// Parameter gradients laid out like [`MlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    pub head: Array2<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingForward {
    pub cache: ForwardCache,
    /// Unit-norm embeddings, `N x d_e`.
    pub embeddings: Array2<f64>,
    /// Row norms of the raw network output.
    pub norms: Array1<f64>,
    /// Unit-norm class weights, `n x d_e`.
    pub head_unit: Array2<f64>,
    pub head_norms: Array1<f64>,
    /// Clamped cosines between embeddings and class weights.
    pub cosines: Array2<f64>,
    pub theta: Array2<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

fn row_norms(m: &Array2<f64>) -> Array1<f64> {
    m.map_axis(Axis(1), |r| r.dot(&r).sqrt())
}

/// Pull a gradient on `y = v / |v|` back to `v`, row by row.
fn unnormalize_grad(dy: &Array2<f64>, y: &Array2<f64>, norms: &Array1<f64>) -> Array2<f64> {
    let mut dv = dy.clone();
    for ((mut row, yr), &n) in dv.axis_iter_mut(Axis(0)).zip(y.axis_iter(Axis(0))).zip(norms) {
        let proj = row.dot(&yr);
        row.scaled_add(-proj, &yr);
        row /= n;
    }
    dv
}

impl MlpModel {
    /// He-initialized network `input_dim -> hidden... -> embed_dim` (ReLU on
    /// hidden layers, identity on the last) with `n_classes` unit head rows.
    pub fn new(input_dim: usize, hidden: &[usize], embed_dim: usize, n_classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || embed_dim == 0 || hidden.contains(&0) {
            return input("layer widths must be positive");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for (k, &out) in hidden.iter().chain(std::iter::once(&embed_dim)).enumerate() {
            let act = if k < hidden.len() { Activation::Relu } else { Activation::Identity };
            layers.push(Layer {
                w: gaussian(&mut rng, out, fan_in, (2.0 / fan_in as f64).sqrt()),
                b: Array1::zeros(out),
                act,
            });
            fan_in = out;
        }
        let head = if n_classes == 0 {
            Array2::zeros((0, embed_dim))
        } else {
            normalize_rows(gaussian(&mut rng, n_classes, embed_dim, 1.0).view(), 1e-12)?
        };
        Ok(Self { layers, head, seed })
    }

    /// Network with a single raw output per sample and no class head.
    pub fn scorer(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        Self::new(input_dim, hidden, 1, 0, seed)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn embed_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.nrows())
    }

    pub fn n_classes(&self) -> usize {
        self.head.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum::<usize>() + self.head.len()
    }

    /// Raw network output, before any normalization.
    pub fn forward_raw(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return input(format!("input dim {} but model expects {}", x.ncols(), self.input_dim()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return input("non-finite input");
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for layer in &self.layers {
            let z = a.dot(&layer.w.t()) + &layer.b;
            let next = z.mapv(|v| layer.act.apply(v));
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok(ForwardCache { inputs, pre, output: a })
    }

    /// Scores of a single-output model.
    pub fn scores(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if self.embed_dim() != 1 {
            return input("score output needs a single-output model");
        }
        Ok(self.forward_raw(x)?.output.column(0).to_vec())
    }

    /// Unit embeddings and their angles to the unit class weights.
    pub fn forward(&self, x: ArrayView2<f64>, eps: f64) -> Result<EmbeddingForward> {
        if self.n_classes() == 0 {
            return input("model has no class head");
        }
        let cache = self.forward_raw(x)?;
        let norms = row_norms(&cache.output);
        let embeddings = normalize_rows(cache.output.view(), eps)?;
        let head_norms = row_norms(&self.head);
        let head_unit = normalize_rows(self.head.view(), eps)?;
        let cosines = embeddings.dot(&head_unit.t()).mapv(|c| clamp_cos(c, eps));
        let theta = cosines.mapv(f64::acos);
        Ok(EmbeddingForward { cache, embeddings, norms, head_unit, head_norms, cosines, theta })
    }

    pub fn embed(&self, x: ArrayView2<f64>, eps: f64) -> Result<Array2<f64>> {
        let out = self.forward_raw(x)?.output;
        normalize_rows(out.view(), eps)
    }

    pub fn angular_batch(fwd: &EmbeddingForward, labels: Vec<usize>) -> Result<AngularBatch> {
        AngularBatch::new(fwd.theta.clone(), labels)
    }

    /// Layer gradients from `dL/d(output)` of [`Self::forward_raw`].
    pub fn backward_raw(&self, cache: &ForwardCache, d_out: &Array2<f64>) -> Vec<(Array2<f64>, Array1<f64>)> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut da = d_out.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let dz = &da * &cache.pre[k].mapv(|z| layer.act.derivative(z));
            grads.push((dz.t().dot(&cache.inputs[k]), dz.sum_axis(Axis(0))));
            da = dz.dot(&layer.w);
        }
        grads.reverse();
        grads
    }

    /// Parameter gradients from `dL/dtheta`.
    ///
    /// The arccos derivative is evaluated at the clamped cosine, so samples at
    /// the clamp still pass a bounded gradient.
    pub fn backward(&self, fwd: &EmbeddingForward, d_theta: &Array2<f64>) -> Result<Gradients> {
        if d_theta.dim() != fwd.theta.dim() {
            return input("gradient shape does not match the angle matrix");
        }
        let d_cos = d_theta * &fwd.cosines.mapv(|u| -1.0 / (1.0 - u * u).sqrt());
        let d_emb = d_cos.dot(&fwd.head_unit);
        let d_head_unit = d_cos.t().dot(&fwd.embeddings);
        let d_out = unnormalize_grad(&d_emb, &fwd.embeddings, &fwd.norms);
        let head = unnormalize_grad(&d_head_unit, &fwd.head_unit, &fwd.head_norms);
        Ok(Gradients { layers: self.backward_raw(&fwd.cache, &d_out), head })
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.len()))).collect(),
            head: Array2::zeros(self.head.raw_dim()),
        }
    }

    /// `p -= lr * g` everywhere, then head rows back to unit length.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() || grads.head.dim() != self.head.dim() {
            return input("gradient layout does not match the model");
        }
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            layer.w.scaled_add(-lr, gw);
            layer.b.scaled_add(-lr, gb);
        }
        self.head.scaled_add(-lr, &grads.head);
        if self.head.nrows() > 0 {
            self.head = normalize_rows(self.head.view(), 1e-300)?;
        }
        Ok(())
    }

    /// Every parameter in a fixed order: per layer `w` then `b`, then the head.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut())).chain(self.head.iter_mut())
    }
}

impl Gradients {
    /// Flattened in the order of [`MlpModel::params_mut`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b.iter())).chain(self.head.iter()).copied().collect()
    }

    /// Element-wise sum, used when a step combines several loss terms.
    pub fn add(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
        self.head += &other.head;
    }
}

fn write_row<'a>(out: &mut String, tag: &str, values: impl IntoIterator<Item = &'a f64>) {
    out.push_str(tag);
    for v in values {
        let _ = write!(out, " {v:.16e}");
    }
    out.push('\n');
}

fn parse_row(line: Option<&str>, tag: &str, len: usize) -> Result<Vec<f64>> {
    let bad = || Error::Format(format!("model: expected a '{tag}' row of {len} values"));
    let mut parts = line.ok_or_else(bad)?.split(' ');
    if parts.next() != Some(tag) {
        return Err(bad());
    }
    let row =
        parts.map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite())).collect::<Option<Vec<f64>>>().ok_or_else(bad)?;
    if row.len() != len {
        return Err(bad());
    }
    Ok(row)
}

fn parse_header<const N: usize>(line: Option<&str>, tag: &str) -> Result<[String; N]> {
    let bad = || Error::Format(format!("model: expected a '{tag}' record"));
    let mut parts = line.ok_or_else(bad)?.split(' ');
    if parts.next() != Some(tag) {
        return Err(bad());
    }
    let fields: Vec<String> = parts.map(str::to_string).collect();
    fields.try_into().map_err(|_| bad())
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Format(format!("model: '{s}' is not a count")))
}

/// Text form: a header, then per layer a `layer <out> <in> <act>` record with
/// `out` weight rows and one bias row, then `head <rows> <cols>` and its rows.
impl MlpModel {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MODEL_MAGIC}\nversion 1\nseed {}\nlayers {}\n", self.seed, self.layers.len());
        for l in &self.layers {
            let act = match l.act {
                Activation::Relu => "relu",
                Activation::Identity => "identity",
            };
            let _ = writeln!(out, "layer {} {} {act}", l.w.nrows(), l.w.ncols());
            for row in l.w.rows() {
                write_row(&mut out, "w", row);
            }
            write_row(&mut out, "b", &l.b);
        }
        let _ = writeln!(out, "head {} {}", self.head.nrows(), self.head.ncols());
        for row in self.head.rows() {
            write_row(&mut out, "h", row);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.is_empty());
        if lines.next() != Some(MODEL_MAGIC) || lines.next() != Some("version 1") {
            return Err(Error::Format("model: missing header".into()));
        }
        let [seed] = parse_header(lines.next(), "seed")?;
        let seed = seed.parse().map_err(|_| Error::Format("model: bad seed".into()))?;
        let [n_layers] = parse_header(lines.next(), "layers")?;
        let n_layers = parse_usize(&n_layers)?;
        if n_layers == 0 {
            return Err(Error::Format("model: no layers".into()));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for k in 0..n_layers {
            let [rows, cols, act] = parse_header(lines.next(), "layer")?;
            let (rows, cols) = (parse_usize(&rows)?, parse_usize(&cols)?);
            let expected_in = layers.last().map_or(cols, |l: &Layer| l.w.nrows());
            if rows == 0 || cols == 0 || cols != expected_in {
                return Err(Error::Format(format!("model: layer {k} has inconsistent shape")));
            }
            let act = match act.as_str() {
                "relu" => Activation::Relu,
                "identity" => Activation::Identity,
                other => return Err(Error::Format(format!("model: unknown activation '{other}'"))),
            };
            let mut w = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                w.extend(parse_row(lines.next(), "w", cols)?);
            }
            let w = Array2::from_shape_vec((rows, cols), w).expect("rows x cols values");
            let b = Array1::from(parse_row(lines.next(), "b", rows)?);
            layers.push(Layer { w, b, act });
        }
        let [rows, cols] = parse_header(lines.next(), "head")?;
        let (rows, cols) = (parse_usize(&rows)?, parse_usize(&cols)?);
        if cols != layers.last().expect("at least one layer").w.nrows() {
            return Err(Error::Format("model: head width does not match the embedding".into()));
        }
        let mut head = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            head.extend(parse_row(lines.next(), "h", cols)?);
        }
        if lines.next().is_some() {
            return Err(Error::Format("model: trailing records".into()));
        }
        let head = Array2::from_shape_vec((rows, cols), head).expect("rows x cols values");
        Ok(Self { layers, head, seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::angles_from_features;
    use ndarray::array;

    fn identity_net(d: usize, head: Array2<f64>) -> MlpModel {
        MlpModel {
            layers: vec![Layer { w: Array2::eye(d), b: Array1::zeros(d), act: Activation::Identity }],
            head,
            seed: 0,
        }
    }

    #[test]
    fn identity_net_reproduces_feature_angles() {
        let x = array![[0.1, 0.995], [0.2, 0.9798], [3.0, -4.0]];
        let w = array![[0.0, 1.0], [1.0, 0.0]];
        let m = identity_net(2, w.clone());
        let fwd = m.forward(x.view(), 1e-7).unwrap();
        assert_eq!(fwd.theta, angles_from_features(x.view(), w.view(), 1e-7).unwrap());
    }

    #[test]
    fn hand_set_two_layer_forward() {
        // relu([1,-1] W1^T + b1) with W1 = [[1,0],[0,1],[1,1]], b1 = [0,0,0.5]
        // = relu([1,-1,0.5]) = [1,0,0.5]; then W2 = [[1,0,0],[0,0,2]] gives [1,1]
        let m = MlpModel {
            layers: vec![
                Layer {
                    w: array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
                    b: array![0.0, 0.0, 0.5],
                    act: Activation::Relu,
                },
                Layer { w: array![[1.0, 0.0, 0.0], [0.0, 0.0, 2.0]], b: array![0.0, 0.0], act: Activation::Identity },
            ],
            head: array![[1.0, 0.0]],
            seed: 0,
        };
        let fwd = m.forward(array![[1.0, -1.0]].view(), 1e-7).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((fwd.embeddings[[0, 0]] - r).abs() < 1e-15);
        assert!((fwd.embeddings[[0, 1]] - r).abs() < 1e-15);
        assert!((fwd.theta[[0, 0]] - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn permuting_the_batch_permutes_rows() {
        let m = MlpModel::new(4, &[6], 3, 5, 1).unwrap();
        let x = array![[0.1, 0.2, -0.3, 0.4], [1.0, -1.0, 0.5, 0.0], [0.3, 0.3, 0.3, -0.9]];
        let xp = array![[0.3, 0.3, 0.3, -0.9], [0.1, 0.2, -0.3, 0.4], [1.0, -1.0, 0.5, 0.0]];
        let a = m.forward(x.view(), 1e-7).unwrap().theta;
        let b = m.forward(xp.view(), 1e-7).unwrap().theta;
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            assert_eq!(a.row(i), b.row(j));
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let m = MlpModel::new(3, &[4, 4], 2, 3, 7).unwrap();
        let x = array![[0.5, -0.2, 0.1], [0.0, 1.0, 2.0]];
        let fwd = m.forward(x.view(), 1e-7).unwrap();
        let g = m.backward(&fwd, &Array2::zeros((2, 3))).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_closed_form() {
        // raw output o = W x + b, upstream dL/do = d gives dW = d x^T, db = d
        let m = MlpModel {
            layers: vec![Layer { w: array![[1.0, 2.0], [3.0, 4.0]], b: array![0.5, -0.5], act: Activation::Identity }],
            head: Array2::zeros((0, 2)),
            seed: 0,
        };
        let x = array![[2.0, -1.0]];
        let cache = m.forward_raw(x.view()).unwrap();
        assert_eq!(cache.output(), &array![[0.5, 1.5]]);
        let g = m.backward_raw(&cache, &array![[1.0, 3.0]]);
        assert_eq!(g[0].0, array![[2.0, -1.0], [6.0, -3.0]]);
        assert_eq!(g[0].1, array![1.0, 3.0]);
    }

    #[test]
    fn sgd_zero_lr_is_a_no_op_and_head_stays_unit() {
        let mut m = MlpModel::new(3, &[5], 4, 6, 3).unwrap();
        let before = m.clone();
        let mut g = m.zero_gradients();
        g.head.fill(0.3);
        m.sgd_step(&g, 0.0).unwrap();
        for (a, b) in m.head.iter().zip(before.head.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        m.sgd_step(&g, 0.5).unwrap();
        for r in m.head.axis_iter(Axis(0)) {
            assert!((r.dot(&r).sqrt() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sgd_descends_a_quadratic() {
        // L = 0.5 |o|^2 on a linear model: dL/do = o
        let mut m = MlpModel::scorer(2, &[], 11).unwrap();
        let x = array![[1.0, 2.0], [-0.5, 0.3]];
        let loss = |m: &MlpModel| m.scores(x.view()).unwrap().iter().map(|s| 0.5 * s * s).sum::<f64>();
        let before = loss(&m);
        let cache = m.forward_raw(x.view()).unwrap();
        let g = Gradients { layers: m.backward_raw(&cache, cache.output()), head: Array2::zeros((0, 1)) };
        m.sgd_step(&g, 0.05).unwrap();
        assert!(loss(&m) < before);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = MlpModel::new(5, &[4, 3], 2, 3, 9).unwrap();
        let back = MlpModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        let s = MlpModel::scorer(3, &[2], 1).unwrap();
        assert_eq!(MlpModel::from_text(&s.to_text()).unwrap(), s);
        let truncated: String = m.to_text().lines().take(8).map(|l| format!("{l}\n")).collect();
        assert!(MlpModel::from_text(&truncated).is_err());
        assert!(MlpModel::from_text("LMCOT-MODEL\nversion 2\n").is_err());
    }
}
