//! Minimal tape-based reverse-mode differentiation over row-major f64
//! matrices. Just enough ops for the graph-transformer denoiser: matmul,
//! broadcasts, layer norm, softmax/log-sum-exp, relu, the node-pair
//! expansion, and row permutations.
//!
//! A fresh tape is built per forward pass; leaves flagged `requires_grad`
//! receive accumulated gradients after `backward`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

impl TensorId {
    /// Position of the node on its tape.
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf { requires_grad: bool },
    MatMul(TensorId, TensorId),
    Transpose(TensorId),
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, f64),
    /// `a (r x c) + row (1 x c)` broadcast over rows.
    AddRowBroadcast(TensorId, TensorId),
    /// `a (r x c) * row (1 x c)` broadcast over rows.
    MulRowBroadcast(TensorId, TensorId),
    Relu(TensorId),
    SoftmaxRows(TensorId),
    /// Row-wise `log sum exp`, output `r x 1`.
    LogSumExpRows(TensorId),
    /// Row-wise `(x - mean) / sqrt(var + eps)` without affine parameters.
    LayerNormRows(TensorId),
    /// `n x h -> n*n x h`, row `(i, j)` is `x_i + x_j`.
    PairSum(TensorId),
    /// `out[r] = in[perm[r]]`.
    PermuteRows(TensorId, Vec<usize>),
    Reshape(TensorId),
    SumAll(TensorId),
}

struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
}

const LN_EPS: f64 = 1e-5;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> TensorId {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { op, rows, cols, value });
        TensorId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> TensorId {
        self.push(Op::Leaf { requires_grad: false }, rows, cols, value)
    }

    pub fn param(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> TensorId {
        self.push(Op::Leaf { requires_grad: true }, rows, cols, value)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        assert_eq!(ca, rb, "matmul shape mismatch ({ra}x{ca}) x ({rb}x{cb})");
        let mut out = vec![0.0; ra * cb];
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        for i in 0..ra {
            for k in 0..ca {
                let x = av[i * ca + k];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[k * cb..(k + 1) * cb];
                let orow = &mut out[i * cb..(i + 1) * cb];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += x * b;
                }
            }
        }
        self.push(Op::MatMul(a, b), ra, cb, out)
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let av = &self.nodes[a.0].value;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av[i * c + j];
            }
        }
        self.push(Op::Transpose(a), c, r, out)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (r, c) = self.same_shape(a, b);
        let out = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x + y);
        self.push(Op::Add(a, b), r, c, out)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (r, c) = self.same_shape(a, b);
        let out = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x - y);
        self.push(Op::Sub(a, b), r, c, out)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (r, c) = self.same_shape(a, b);
        let out = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x * y);
        self.push(Op::Mul(a, b), r, c, out)
    }

    pub fn scale(&mut self, a: TensorId, s: f64) -> TensorId {
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0].value.iter().map(|x| x * s).collect();
        self.push(Op::Scale(a, s), r, c, out)
    }

    pub fn add_row_broadcast(&mut self, a: TensorId, row: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let (rr, rc) = self.shape(row);
        assert!(rr == 1 && rc == c, "broadcast row must be 1x{c}, got {rr}x{rc}");
        let rv = self.nodes[row.0].value.clone();
        let out = self.nodes[a.0]
            .value
            .iter()
            .enumerate()
            .map(|(idx, &x)| x + rv[idx % c])
            .collect();
        self.push(Op::AddRowBroadcast(a, row), r, c, out)
    }

    pub fn mul_row_broadcast(&mut self, a: TensorId, row: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let (rr, rc) = self.shape(row);
        assert!(rr == 1 && rc == c, "broadcast row must be 1x{c}, got {rr}x{rc}");
        let rv = self.nodes[row.0].value.clone();
        let out = self.nodes[a.0]
            .value
            .iter()
            .enumerate()
            .map(|(idx, &x)| x * rv[idx % c])
            .collect();
        self.push(Op::MulRowBroadcast(a, row), r, c, out)
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0].value.iter().map(|&x| x.max(0.0)).collect();
        self.push(Op::Relu(a), r, c, out)
    }

    pub fn softmax_rows(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let av = &self.nodes[a.0].value;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &av[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..c {
                let e = (row[j] - max).exp();
                out[i * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                out[i * c + j] /= sum;
            }
        }
        self.push(Op::SoftmaxRows(a), r, c, out)
    }

    pub fn log_sum_exp_rows(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let av = &self.nodes[a.0].value;
        let mut out = vec![0.0; r];
        for i in 0..r {
            let row = &av[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
            out[i] = max + sum.ln();
        }
        self.push(Op::LogSumExpRows(a), r, 1, out)
    }

    pub fn layer_norm_rows(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let av = &self.nodes[a.0].value;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &av[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for j in 0..c {
                out[i * c + j] = (row[j] - mean) * inv;
            }
        }
        self.push(Op::LayerNormRows(a), r, c, out)
    }

    pub fn pair_sum(&mut self, a: TensorId) -> TensorId {
        let (n, h) = self.shape(a);
        let av = &self.nodes[a.0].value;
        let mut out = vec![0.0; n * n * h];
        for i in 0..n {
            for j in 0..n {
                let dst = (i * n + j) * h;
                for k in 0..h {
                    out[dst + k] = av[i * h + k] + av[j * h + k];
                }
            }
        }
        self.push(Op::PairSum(a), n * n, h, out)
    }

    pub fn permute_rows(&mut self, a: TensorId, perm: Vec<usize>) -> TensorId {
        let (r, c) = self.shape(a);
        assert_eq!(perm.len(), r);
        let av = &self.nodes[a.0].value;
        let mut out = vec![0.0; r * c];
        for (dst, &src) in perm.iter().enumerate() {
            out[dst * c..(dst + 1) * c].copy_from_slice(&av[src * c..(src + 1) * c]);
        }
        self.push(Op::PermuteRows(a, perm), r, c, out)
    }

    pub fn reshape(&mut self, a: TensorId, rows: usize, cols: usize) -> TensorId {
        let (r, c) = self.shape(a);
        assert_eq!(r * c, rows * cols, "reshape must preserve element count");
        let v = self.nodes[a.0].value.clone();
        self.push(Op::Reshape(a), rows, cols, v)
    }

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let s: f64 = self.nodes[a.0].value.iter().sum();
        self.push(Op::SumAll(a), 1, 1, vec![s])
    }

    fn same_shape(&self, a: TensorId, b: TensorId) -> (usize, usize) {
        let sa = self.shape(a);
        let sb = self.shape(b);
        assert_eq!(sa, sb, "elementwise shape mismatch {sa:?} vs {sb:?}");
        sa
    }

    /// Reverse pass from a scalar output. Returns per-node gradients for
    /// leaves with `requires_grad` (others are `None`).
    pub fn backward(&self, loss: TensorId) -> Vec<Option<Vec<f64>>> {
        let (r, c) = self.shape(loss);
        assert_eq!((r, c), (1, 1), "backward needs a scalar loss");
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf { requires_grad } => {
                    if *requires_grad {
                        grads[idx] = Some(g);
                    }
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (ra, ca) = self.shape(*a);
                    let cb = self.shape(*b).1;
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    // dA = dC * B^T
                    let da = grads[a.0].get_or_insert_with(|| vec![0.0; ra * ca]);
                    for i in 0..ra {
                        for j in 0..cb {
                            let gv = g[i * cb + j];
                            if gv == 0.0 {
                                continue;
                            }
                            for k in 0..ca {
                                da[i * ca + k] += gv * bv[k * cb + j];
                            }
                        }
                    }
                    // dB = A^T * dC
                    let db = grads[b.0].get_or_insert_with(|| vec![0.0; ca * cb]);
                    for i in 0..ra {
                        for k in 0..ca {
                            let x = av[i * ca + k];
                            if x == 0.0 {
                                continue;
                            }
                            for j in 0..cb {
                                db[k * cb + j] += x * g[i * cb + j];
                            }
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (ra, ca) = self.shape(*a);
                    let da = grads[a.0].get_or_insert_with(|| vec![0.0; ra * ca]);
                    for i in 0..ra {
                        for j in 0..ca {
                            da[i * ca + j] += g[j * ra + i];
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g, self.size_of(*a));
                    accumulate(&mut grads, *b, &g, self.size_of(*b));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, &g, self.size_of(*a));
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    accumulate(&mut grads, *b, &neg, self.size_of(*b));
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    let da: Vec<f64> = g.iter().zip(&bv).map(|(x, y)| x * y).collect();
                    let db: Vec<f64> = g.iter().zip(&av).map(|(x, y)| x * y).collect();
                    accumulate(&mut grads, *a, &da, da.len());
                    accumulate(&mut grads, *b, &db, db.len());
                }
                Op::Scale(a, s) => {
                    let da: Vec<f64> = g.iter().map(|x| x * s).collect();
                    accumulate(&mut grads, *a, &da, da.len());
                }
                Op::AddRowBroadcast(a, row) => {
                    accumulate(&mut grads, *a, &g, self.size_of(*a));
                    let c = self.shape(*row).1;
                    let mut dr = vec![0.0; c];
                    for (idx, &gv) in g.iter().enumerate() {
                        dr[idx % c] += gv;
                    }
                    accumulate(&mut grads, *row, &dr, c);
                }
                Op::MulRowBroadcast(a, row) => {
                    let c = self.shape(*row).1;
                    let rv = self.nodes[row.0].value.clone();
                    let av = self.nodes[a.0].value.clone();
                    let da: Vec<f64> = g.iter().enumerate().map(|(idx, &gv)| gv * rv[idx % c]).collect();
                    accumulate(&mut grads, *a, &da, da.len());
                    let mut dr = vec![0.0; c];
                    for (idx, &gv) in g.iter().enumerate() {
                        dr[idx % c] += gv * av[idx];
                    }
                    accumulate(&mut grads, *row, &dr, c);
                }
                Op::Relu(a) => {
                    let av = &self.nodes[a.0].value;
                    let da: Vec<f64> = g
                        .iter()
                        .zip(av)
                        .map(|(&gv, &x)| if x > 0.0 { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, &da, da.len());
                }
                Op::SoftmaxRows(a) => {
                    let (r2, c2) = (node.rows, node.cols);
                    let y = &node.value;
                    let mut da = vec![0.0; r2 * c2];
                    for i in 0..r2 {
                        let dot: f64 = (0..c2).map(|j| g[i * c2 + j] * y[i * c2 + j]).sum();
                        for j in 0..c2 {
                            da[i * c2 + j] = y[i * c2 + j] * (g[i * c2 + j] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, &da, da.len());
                }
                Op::LogSumExpRows(a) => {
                    let (ra, ca) = self.shape(*a);
                    let av = &self.nodes[a.0].value;
                    let mut da = vec![0.0; ra * ca];
                    for i in 0..ra {
                        let row = &av[i * ca..(i + 1) * ca];
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
                        for j in 0..ca {
                            da[i * ca + j] = g[i] * (row[j] - max).exp() / sum;
                        }
                    }
                    accumulate(&mut grads, *a, &da, da.len());
                }
                Op::LayerNormRows(a) => {
                    let (ra, ca) = self.shape(*a);
                    let av = &self.nodes[a.0].value;
                    let y = &node.value;
                    let mut da = vec![0.0; ra * ca];
                    for i in 0..ra {
                        let row = &av[i * ca..(i + 1) * ca];
                        let mean = row.iter().sum::<f64>() / ca as f64;
                        let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / ca as f64;
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        let grow = &g[i * ca..(i + 1) * ca];
                        let yrow = &y[i * ca..(i + 1) * ca];
                        let mean_g = grow.iter().sum::<f64>() / ca as f64;
                        let mean_gy = grow.iter().zip(yrow).map(|(a, b)| a * b).sum::<f64>() / ca as f64;
                        for j in 0..ca {
                            da[i * ca + j] = inv * (grow[j] - mean_g - yrow[j] * mean_gy);
                        }
                    }
                    accumulate(&mut grads, *a, &da, da.len());
                }
                Op::PairSum(a) => {
                    let (n2, h) = self.shape(*a);
                    let mut da = vec![0.0; n2 * h];
                    for i in 0..n2 {
                        for j in 0..n2 {
                            let src = &g[(i * n2 + j) * h..(i * n2 + j + 1) * h];
                            for k in 0..h {
                                da[i * h + k] += src[k];
                                da[j * h + k] += src[k];
                            }
                        }
                    }
                    accumulate(&mut grads, *a, &da, da.len());
                }
                Op::PermuteRows(a, perm) => {
                    let (ra, ca) = self.shape(*a);
                    let mut da = vec![0.0; ra * ca];
                    for (dst, &src) in perm.iter().enumerate() {
                        for k in 0..ca {
                            da[src * ca + k] += g[dst * ca + k];
                        }
                    }
                    accumulate(&mut grads, *a, &da, da.len());
                }
                Op::Reshape(a) => {
                    accumulate(&mut grads, *a, &g, self.size_of(*a));
                }
                Op::SumAll(a) => {
                    let sz = self.size_of(*a);
                    let da = vec![g[0]; sz];
                    accumulate(&mut grads, *a, &da, sz);
                }
            }
        }
        grads
    }

    fn size_of(&self, id: TensorId) -> usize {
        let (r, c) = self.shape(id);
        r * c
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: TensorId, delta: &[f64], size: usize) {
    let slot = grads[id.0].get_or_insert_with(|| vec![0.0; size]);
    for (s, &d) in slot.iter_mut().zip(delta) {
        *s += d;
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}
