use crate::error::{AutodiffError, Result};
use crate::kernels::{self, ConvDims};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op<T> {
    Leaf,
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        cols: Vec<T>,
        dims: ConvDims,
    },
    MaxPool {
        input: NodeId,
        argmax: Vec<usize>,
    },
    Upsample {
        input: NodeId,
    },
    Relu {
        input: NodeId,
    },
    Sigmoid {
        input: NodeId,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
        broadcast: bool,
    },
    Mse {
        pred: NodeId,
        target: NodeId,
    },
    Dot {
        input: NodeId,
        weights: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Tape of tensor operations. Nodes are appended in evaluation order, so
/// walking the tape backwards is a valid reverse topological order.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable input (parameter or probed input).
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.nodes[id.0].value.grad()
    }

    /// Moves the node's tensor (with its gradient) out of the graph.
    pub fn take(&mut self, id: NodeId) -> Tensor<T> {
        std::mem::replace(&mut self.nodes[id.0].value, Tensor::zeros(&[0]))
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn chw(&self, id: NodeId, op: &'static str) -> Result<(usize, usize, usize)> {
        self.value(id).chw().map_err(|_| AutodiffError::InvalidShape {
            op,
            detail: format!("expected channels x height x width, got {:?}", self.value(id).shape()),
        })
    }

    /// Same-padded cross-correlation: `C x H x W` input, `F x C x k x k`
    /// kernel with odd `k`, `F` biases.
    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, bias: NodeId) -> Result<NodeId> {
        let (c, h, w) = self.chw(input, "conv2d")?;
        let ks = self.value(kernel).shape().to_vec();
        let [f, kc, kh, kw] = ks[..] else {
            return Err(AutodiffError::InvalidShape {
                op: "conv2d",
                detail: format!("kernel must be 4-d, got {ks:?}"),
            });
        };
        if kc != c {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv2d",
                expected: vec![f, c, kh, kw],
                got: ks,
            });
        }
        if kh != kw || kh % 2 == 0 {
            return Err(AutodiffError::InvalidShape {
                op: "conv2d",
                detail: format!("kernel must be square with odd size, got {kh}x{kw}"),
            });
        }
        if self.value(bias).shape() != [f] {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv2d",
                expected: vec![f],
                got: self.value(bias).shape().to_vec(),
            });
        }
        let dims = ConvDims {
            in_channels: c,
            out_channels: f,
            height: h,
            width: w,
            kernel: kh,
        };
        let (out, cols) = kernels::conv2d_forward(
            self.value(input).values(),
            self.value(kernel).values(),
            self.value(bias).values(),
            dims,
        );
        let rg = self.needs(&[input, kernel, bias]);
        Ok(self.push(
            Tensor::new(&[f, h, w], out)?,
            Op::Conv2d {
                input,
                kernel,
                bias,
                cols,
                dims,
            },
            rg,
        ))
    }

    pub fn max_pool2x2(&mut self, input: NodeId) -> Result<NodeId> {
        let (c, h, w) = self.chw(input, "max_pool2x2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(AutodiffError::InvalidShape {
                op: "max_pool2x2",
                detail: format!("spatial size {h}x{w} is not even"),
            });
        }
        let (out, argmax) = kernels::max_pool2x2_forward(self.value(input).values(), c, h, w);
        let rg = self.needs(&[input]);
        Ok(self.push(
            Tensor::new(&[c, h / 2, w / 2], out)?,
            Op::MaxPool { input, argmax },
            rg,
        ))
    }

    pub fn upsample_nearest2x(&mut self, input: NodeId) -> Result<NodeId> {
        let (c, h, w) = self.chw(input, "upsample_nearest2x")?;
        let out = kernels::upsample2x_forward(self.value(input).values(), c, h, w);
        let rg = self.needs(&[input]);
        Ok(self.push(Tensor::new(&[c, 2 * h, 2 * w], out)?, Op::Upsample { input }, rg))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let out = self.value(input).map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.needs(&[input]);
        self.push(out, Op::Relu { input }, rg)
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        let out = self.value(input).map(kernels::sigmoid);
        let rg = self.needs(&[input]);
        self.push(out, Op::Sigmoid { input }, rg)
    }

    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ca, ha, wa) = self.chw(a, "concat_channels")?;
        let (cb, hb, wb) = self.chw(b, "concat_channels")?;
        if (ha, wa) != (hb, wb) {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat_channels",
                expected: vec![cb, ha, wa],
                got: vec![cb, hb, wb],
            });
        }
        let mut out = Vec::with_capacity((ca + cb) * ha * wa);
        out.extend_from_slice(self.value(a).values());
        out.extend_from_slice(self.value(b).values());
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(&[ca + cb, ha, wa], out)?, Op::Concat { a, b }, rg))
    }

    /// Elementwise product. `b` is either the same shape as `a` or a
    /// `1 x H x W` map broadcast over the channels of `a`.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.value(a).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        let broadcast = if sa == sb {
            false
        } else if sa.len() == 3 && sb == [1, sa[1], sa[2]] {
            true
        } else {
            return Err(AutodiffError::ShapeMismatch {
                op: "mul",
                expected: vec![1, sa.get(1).copied().unwrap_or(0), sa.get(2).copied().unwrap_or(0)],
                got: sb,
            });
        };
        let bv = self.value(b).values();
        let plane = bv.len();
        let out: Vec<T> = self
            .value(a)
            .values()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * bv[if broadcast { i % plane } else { i }])
            .collect();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(&sa, out)?, Op::Mul { a, b, broadcast }, rg))
    }

    /// Mean of squared differences over all elements, as a 1-element tensor.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "mse_loss",
                expected: p.shape().to_vec(),
                got: t.shape().to_vec(),
            });
        }
        let n = T::from_usize(p.len().max(1)).unwrap();
        let sum: T = p
            .values()
            .iter()
            .zip(t.values())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        let rg = self.needs(&[pred, target]);
        Ok(self.push(Tensor::scalar(sum / n), Op::Mse { pred, target }, rg))
    }

    /// Scalar `sum_i w_i x_i` with constant weights; used to reduce a
    /// tensor output to a scalar for gradient checks.
    pub fn dot_const(&mut self, input: NodeId, weights: Vec<T>) -> Result<NodeId> {
        let x = self.value(input);
        if x.len() != weights.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "dot_const",
                expected: x.shape().to_vec(),
                got: vec![weights.len()],
            });
        }
        let s = x.values().iter().zip(&weights).map(|(&a, &b)| a * b).sum();
        let rg = self.needs(&[input]);
        Ok(self.push(Tensor::scalar(s), Op::Dot { input, weights }, rg))
    }

    /// Back-propagates from a scalar node. Gradients accumulate into the
    /// gradient slot of every node that requires one; call on a fresh graph.
    pub fn backward(&mut self, output: NodeId) -> Result<()> {
        if self.value(output).len() != 1 {
            return Err(AutodiffError::NonScalarOutput(self.value(output).shape().to_vec()));
        }
        self.nodes[output.0].value.set_grad(vec![T::one()])?;
        for i in (0..=output.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].value.grad().map(<[T]>::to_vec) else {
                continue;
            };
            self.propagate(i, &g)?;
        }
        Ok(())
    }

    fn send(&mut self, id: NodeId, g: &[T]) -> Result<()> {
        let node = &mut self.nodes[id.0];
        if node.requires_grad {
            node.value.accumulate_grad(g)?;
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[T]) -> Result<()> {
        // Temporarily detach the op so its inputs can be borrowed mutably.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        let res = self.propagate_op(i, &op, g);
        self.nodes[i].op = op;
        res
    }

    fn propagate_op(&mut self, i: usize, op: &Op<T>, g: &[T]) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                cols,
                dims,
            } => {
                let want_input = self.nodes[input.0].requires_grad;
                let grads =
                    kernels::conv2d_backward(cols, self.value(*kernel).values(), g, *dims, want_input);
                if let Some(gi) = grads.input {
                    self.send(*input, &gi)?;
                }
                self.send(*kernel, &grads.kernel)?;
                self.send(*bias, &grads.bias)?;
            }
            Op::MaxPool { input, argmax } => {
                let n = self.value(*input).len();
                let gi = kernels::max_pool2x2_backward(argmax, g, n);
                self.send(*input, &gi)?;
            }
            Op::Upsample { input } => {
                let (c, h, w) = self.value(*input).chw()?;
                let gi = kernels::upsample2x_backward(g, c, h, w);
                self.send(*input, &gi)?;
            }
            Op::Relu { input } => {
                let gi: Vec<T> = self
                    .value(*input)
                    .values()
                    .iter()
                    .zip(g)
                    .map(|(&x, &go)| if x > T::zero() { go } else { T::zero() })
                    .collect();
                self.send(*input, &gi)?;
            }
            Op::Sigmoid { input } => {
                let gi: Vec<T> = self.nodes[i]
                    .value
                    .values()
                    .iter()
                    .zip(g)
                    .map(|(&s, &go)| go * s * (T::one() - s))
                    .collect();
                self.send(*input, &gi)?;
            }
            Op::Concat { a, b } => {
                let na = self.value(*a).len();
                let (ga, gb) = g.split_at(na);
                self.send(*a, ga)?;
                self.send(*b, gb)?;
            }
            Op::Mul { a, b, broadcast } => {
                let av = self.value(*a).values();
                let bv = self.value(*b).values();
                let plane = bv.len();
                let ga: Vec<T> = g
                    .iter()
                    .enumerate()
                    .map(|(j, &go)| go * bv[if *broadcast { j % plane } else { j }])
                    .collect();
                let mut gb = vec![T::zero(); plane];
                for (j, (&go, &x)) in g.iter().zip(av).enumerate() {
                    gb[if *broadcast { j % plane } else { j }] += go * x;
                }
                self.send(*a, &ga)?;
                self.send(*b, &gb)?;
            }
            Op::Mse { pred, target } => {
                let pv = self.value(*pred).values();
                let tv = self.value(*target).values();
                let scale = g[0] * T::from_f64_lossy(2.0) / T::from_usize(pv.len().max(1)).unwrap();
                let gp: Vec<T> = pv.iter().zip(tv).map(|(&p, &t)| scale * (p - t)).collect();
                if self.nodes[target.0].requires_grad {
                    let gt: Vec<T> = gp.iter().map(|&v| -v).collect();
                    self.send(*target, &gt)?;
                }
                self.send(*pred, &gp)?;
            }
            Op::Dot { input, weights } => {
                let gi: Vec<T> = weights.iter().map(|&w| w * g[0]).collect();
                self.send(*input, &gi)?;
            }
        }
        Ok(())
    }
}
