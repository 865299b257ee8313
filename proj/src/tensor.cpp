#include "ferau/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ferau/errors.hpp"

namespace ferau {

struct Tensor::Node {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // lazily sized
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // reads this->grad, writes parents

  std::vector<double>& grad_buf() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

namespace {

int shape_product(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("non-positive dimension in shape");
    n *= d;
  }
  return n;
}

}  // namespace

struct TensorOps {
  static std::shared_ptr<Tensor::Node> node(const Tensor& t) {
    if (!t.node_) throw ContractError("operation on undefined tensor");
    return t.node_;
  }

  static Tensor make(std::vector<int> shape, std::vector<double> data,
                     std::vector<std::shared_ptr<Tensor::Node>> parents,
                     std::function<void(Tensor::Node&)> backward_fn) {
    Tensor out;
    out.node_ = std::make_shared<Tensor::Node>();
    out.node_->shape = std::move(shape);
    out.node_->data = std::move(data);
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->requires_grad;
    out.node_->requires_grad = needs;
    if (needs) {
      out.node_->parents = std::move(parents);
      out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
  }
};

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return from_data(shape, std::vector<double>(shape_product(shape), 0.0),
                   requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  return from_data(shape, std::vector<double>(shape_product(shape), value),
                   requires_grad);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
  if (static_cast<int>(data.size()) != shape_product(shape))
    throw DimensionError("data length does not match product of shape");
  Tensor t;
  t.node_ = std::make_shared<Node>();
  t.node_->shape = std::move(shape);
  t.node_->data = std::move(data);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const {
  return TensorOps::node(*this)->shape;
}

int Tensor::size() const {
  return static_cast<int>(TensorOps::node(*this)->data.size());
}

bool Tensor::requires_grad() const {
  return TensorOps::node(*this)->requires_grad;
}

const std::vector<double>& Tensor::data() const {
  return TensorOps::node(*this)->data;
}

std::vector<double>& Tensor::mutable_data() {
  return TensorOps::node(*this)->data;
}

bool Tensor::has_grad() const { return !TensorOps::node(*this)->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  auto n = TensorOps::node(*this);
  if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
  return n->grad;
}

void Tensor::zero_grad() {
  auto n = TensorOps::node(*this);
  std::fill(n->grad.begin(), n->grad.end(), 0.0);
}

double Tensor::value() const {
  auto n = TensorOps::node(*this);
  if (n->data.size() != 1)
    throw ContractError("value() requires a 1-element tensor");
  return n->data[0];
}

double Tensor::at(int flat_index) const {
  auto n = TensorOps::node(*this);
  if (flat_index < 0 || flat_index >= static_cast<int>(n->data.size()))
    throw DimensionError("flat index out of range");
  return n->data[flat_index];
}

Tensor Tensor::detach() const {
  auto n = TensorOps::node(*this);
  return from_data(n->shape, n->data, false);
}

void Tensor::backward() const {
  auto root = TensorOps::node(*this);
  if (root->data.size() != 1)
    throw ContractError("backward() requires a scalar root");
  // Iterative post-order DFS for the topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior (non-leaf) grads are scratch space for this sweep; only leaves
  // accumulate across repeated backward() calls.
  for (Node* node : order) {
    auto& g = node->grad_buf();
    if (node->backward_fn) std::fill(g.begin(), g.end(), 0.0);
  }
  root->grad_buf()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

// --- Operations --------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int stride, int pad) {
  auto in = TensorOps::node(input);
  auto ker = TensorOps::node(kernels);
  auto b = TensorOps::node(bias);
  if (in->shape.size() != 3)
    throw DimensionError("conv2d: input must be [c_in,h,w], got rank " +
                         std::to_string(in->shape.size()));
  if (ker->shape.size() != 4)
    throw DimensionError("conv2d: kernels must be [c_out,c_in,k,k]");
  const int c_in = in->shape[0], h = in->shape[1], w = in->shape[2];
  const int c_out = ker->shape[0], k = ker->shape[2];
  if (ker->shape[1] != c_in)
    throw DimensionError("conv2d: kernel channel axis " +
                         std::to_string(ker->shape[1]) +
                         " does not match input channels " +
                         std::to_string(c_in));
  if (ker->shape[3] != k) throw DimensionError("conv2d: kernel must be square");
  if (k % 2 == 0) throw ParamError("conv2d: kernel size must be odd");
  if (stride < 1) throw ParamError("conv2d: stride must be >= 1");
  if (pad < 0) throw ParamError("conv2d: pad must be >= 0");
  if (b->shape.size() != 1 || b->shape[0] != c_out)
    throw DimensionError("conv2d: bias axis must match c_out");
  if ((h + 2 * pad - k) % stride != 0 || (w + 2 * pad - k) % stride != 0)
    throw DimensionError("conv2d: spatial size not divisible by stride");
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;
  if (ho < 1 || wo < 1) throw DimensionError("conv2d: kernel larger than input");

  std::vector<double> out(static_cast<size_t>(c_out) * ho * wo, 0.0);
  const double* x = in->data.data();
  const double* wt = ker->data.data();
  for (int co = 0; co < c_out; ++co) {
    double* o = out.data() + static_cast<size_t>(co) * ho * wo;
    for (size_t i = 0; i < static_cast<size_t>(ho) * wo; ++i)
      o[i] = b->data[co];
    for (int ci = 0; ci < c_in; ++ci) {
      const double* xc = x + static_cast<size_t>(ci) * h * w;
      const double* wk = wt + ((static_cast<size_t>(co) * c_in + ci) * k) * k;
      for (int oy = 0; oy < ho; ++oy) {
        const int iy0 = oy * stride - pad;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = iy0 + ky;
          if (iy < 0 || iy >= h) continue;
          const double* xrow = xc + static_cast<size_t>(iy) * w;
          const double* wrow = wk + static_cast<size_t>(ky) * k;
          double* orow = o + static_cast<size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix0 = ox * stride - pad;
            double acc = 0.0;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= w) continue;
              acc += xrow[ix] * wrow[kx];
            }
            orow[ox] += acc;
          }
        }
      }
    }
  }

  auto backward = [in, ker, b, c_in, c_out, h, w, k, ho, wo, stride,
                   pad](Tensor::Node& self) {
    const double* g = self.grad.data();
    const double* x = in->data.data();
    const double* wt = ker->data.data();
    double* gx = in->requires_grad ? in->grad_buf().data() : nullptr;
    double* gw = ker->requires_grad ? ker->grad_buf().data() : nullptr;
    double* gb = b->requires_grad ? b->grad_buf().data() : nullptr;
    for (int co = 0; co < c_out; ++co) {
      const double* go = g + static_cast<size_t>(co) * ho * wo;
      if (gb) {
        double acc = 0.0;
        for (size_t i = 0; i < static_cast<size_t>(ho) * wo; ++i) acc += go[i];
        gb[co] += acc;
      }
      for (int ci = 0; ci < c_in; ++ci) {
        const double* xc = x + static_cast<size_t>(ci) * h * w;
        const double* wk = wt + ((static_cast<size_t>(co) * c_in + ci) * k) * k;
        double* gxc = gx ? gx + static_cast<size_t>(ci) * h * w : nullptr;
        double* gwk =
            gw ? gw + ((static_cast<size_t>(co) * c_in + ci) * k) * k : nullptr;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy0 = oy * stride - pad;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= h) continue;
            const double* gorow = go + static_cast<size_t>(oy) * wo;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix0 = ox * stride - pad;
              const double gv = gorow[ox];
              if (gv == 0.0) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= w) continue;
                if (gxc) gxc[static_cast<size_t>(iy) * w + ix] +=
                    gv * wk[static_cast<size_t>(ky) * k + kx];
                if (gwk) gwk[static_cast<size_t>(ky) * k + kx] +=
                    gv * xc[static_cast<size_t>(iy) * w + ix];
              }
            }
          }
        }
      }
    }
  };
  return TensorOps::make({c_out, ho, wo}, std::move(out), {in, ker, b},
                         backward);
}

Tensor relu(const Tensor& input) {
  auto in = TensorOps::node(input);
  std::vector<double> out(in->data.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = in->data[i] > 0.0 ? in->data[i] : 0.0;
  auto backward = [in](Tensor::Node& self) {
    if (!in->requires_grad) return;
    auto& g = in->grad_buf();
    for (size_t i = 0; i < g.size(); ++i)
      if (in->data[i] > 0.0) g[i] += self.grad[i];
  };
  return TensorOps::make(in->shape, std::move(out), {in}, backward);
}

Tensor maxpool2d(const Tensor& input, int k, int stride) {
  auto in = TensorOps::node(input);
  if (in->shape.size() != 3)
    throw DimensionError("maxpool2d: input must be [c,h,w]");
  if (k < 1 || stride < 1) throw ParamError("maxpool2d: k and stride >= 1");
  const int c = in->shape[0], h = in->shape[1], w = in->shape[2];
  if (k > h || k > w)
    throw DimensionError("maxpool2d: window " + std::to_string(k) +
                         " larger than input " + std::to_string(h) + "x" +
                         std::to_string(w));
  const int ho = (h - k) / stride + 1;
  const int wo = (w - k) / stride + 1;
  std::vector<double> out(static_cast<size_t>(c) * ho * wo);
  auto argmax = std::make_shared<std::vector<int>>(out.size());
  for (int ci = 0; ci < c; ++ci) {
    const double* xc = in->data.data() + static_cast<size_t>(ci) * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        int best = -1;
        double bv = 0.0;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const int idx = (oy * stride + ky) * w + (ox * stride + kx);
            if (best < 0 || xc[idx] > bv) {
              best = idx;
              bv = xc[idx];
            }
          }
        }
        const size_t oi =
            (static_cast<size_t>(ci) * ho + oy) * wo + ox;
        out[oi] = bv;
        (*argmax)[oi] = ci * h * w + best;
      }
    }
  }
  auto backward = [in, argmax](Tensor::Node& self) {
    if (!in->requires_grad) return;
    auto& g = in->grad_buf();
    for (size_t i = 0; i < argmax->size(); ++i)
      g[(*argmax)[i]] += self.grad[i];
  };
  return TensorOps::make({c, ho, wo}, std::move(out), {in}, backward);
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  auto in = TensorOps::node(input);
  auto wn = TensorOps::node(weight);
  auto bn = TensorOps::node(bias);
  if (wn->shape.size() != 2) throw DimensionError("linear: weight must be [c,d]");
  const int c = wn->shape[0], d = wn->shape[1];
  if (static_cast<int>(in->data.size()) != d)
    throw DimensionError("linear: input length " +
                         std::to_string(in->data.size()) +
                         " does not match weight columns " + std::to_string(d));
  if (bn->shape.size() != 1 || bn->shape[0] != c)
    throw DimensionError("linear: bias axis must match weight rows");
  std::vector<double> out(c);
  for (int i = 0; i < c; ++i) {
    double acc = bn->data[i];
    const double* row = wn->data.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j) acc += row[j] * in->data[j];
    out[i] = acc;
  }
  auto backward = [in, wn, bn, c, d](Tensor::Node& self) {
    const double* g = self.grad.data();
    if (in->requires_grad) {
      auto& gx = in->grad_buf();
      for (int i = 0; i < c; ++i) {
        const double* row = wn->data.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) gx[j] += g[i] * row[j];
      }
    }
    if (wn->requires_grad) {
      auto& gw = wn->grad_buf();
      for (int i = 0; i < c; ++i) {
        double* row = gw.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) row[j] += g[i] * in->data[j];
      }
    }
    if (bn->requires_grad) {
      auto& gb = bn->grad_buf();
      for (int i = 0; i < c; ++i) gb[i] += g[i];
    }
  };
  return TensorOps::make({c}, std::move(out), {in, wn, bn}, backward);
}

Tensor global_avg_pool(const Tensor& input) {
  auto in = TensorOps::node(input);
  if (in->shape.size() != 3)
    throw DimensionError("global_avg_pool: input must be [c,h,w]");
  const int c = in->shape[0];
  const int hw = in->shape[1] * in->shape[2];
  std::vector<double> out(c);
  for (int ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    const double* xc = in->data.data() + static_cast<size_t>(ci) * hw;
    for (int i = 0; i < hw; ++i) acc += xc[i];
    out[ci] = acc / hw;
  }
  auto backward = [in, c, hw](Tensor::Node& self) {
    if (!in->requires_grad) return;
    auto& g = in->grad_buf();
    for (int ci = 0; ci < c; ++ci) {
      const double gv = self.grad[ci] / hw;
      double* gc = g.data() + static_cast<size_t>(ci) * hw;
      for (int i = 0; i < hw; ++i) gc[i] += gv;
    }
  };
  return TensorOps::make({c}, std::move(out), {in}, backward);
}

Tensor channel_mean(const Tensor& features) {
  auto in = TensorOps::node(features);
  if (in->shape.size() != 3)
    throw DimensionError("channel_mean: input must be [n,h,w]");
  const int n = in->shape[0];
  if (n < 1) throw DimensionError("channel_mean: empty channel axis");
  const int h = in->shape[1], w = in->shape[2];
  const int hw = h * w;
  std::vector<double> out(hw, 0.0);
  for (int ci = 0; ci < n; ++ci) {
    const double* xc = in->data.data() + static_cast<size_t>(ci) * hw;
    for (int i = 0; i < hw; ++i) out[i] += xc[i];
  }
  for (int i = 0; i < hw; ++i) out[i] /= n;
  auto backward = [in, n, hw](Tensor::Node& self) {
    if (!in->requires_grad) return;
    auto& g = in->grad_buf();
    for (int ci = 0; ci < n; ++ci) {
      double* gc = g.data() + static_cast<size_t>(ci) * hw;
      for (int i = 0; i < hw; ++i) gc[i] += self.grad[i] / n;
    }
  };
  return TensorOps::make({h, w}, std::move(out), {in}, backward);
}

Tensor cosine_sim_map(const Tensor& t, const Tensor& a, double eps) {
  auto tn = TensorOps::node(t);
  auto an = TensorOps::node(a);
  if (eps <= 0.0) throw ParamError("cosine_sim_map: eps must be positive");
  if (tn->shape != an->shape)
    throw DimensionError("cosine_sim_map: shape mismatch between maps");
  const size_t n = tn->data.size();
  double dot = 0.0, tt = 0.0, aa = 0.0;
  for (size_t i = 0; i < n; ++i) {
    dot += tn->data[i] * an->data[i];
    tt += tn->data[i] * tn->data[i];
    aa += an->data[i] * an->data[i];
  }
  const double nt = std::sqrt(tt);
  const double na = std::sqrt(aa);
  const double denom = nt * na + eps;
  const double r = dot / denom;
  auto backward = [tn, an, dot, nt, na, denom](Tensor::Node& self) {
    if (!tn->requires_grad) return;
    const double g = self.grad[0];
    auto& gt = tn->grad_buf();
    // dR/dt_i = a_i/denom - dot * na * t_i / (nt * denom^2)
    const double c2 = nt > 0.0 ? dot * na / (nt * denom * denom) : 0.0;
    for (size_t i = 0; i < gt.size(); ++i)
      gt[i] += g * (an->data[i] / denom - c2 * tn->data[i]);
  };
  return TensorOps::make({1}, {r}, {tn}, backward);
}

Tensor softmax_cross_entropy(const Tensor& logits, int y) {
  auto ln = TensorOps::node(logits);
  if (ln->shape.size() != 1)
    throw DimensionError("softmax_cross_entropy: logits must be rank 1");
  const int c = ln->shape[0];
  if (y < 0 || y >= c)
    throw ParamError("softmax_cross_entropy: class index " + std::to_string(y) +
                     " out of range [0," + std::to_string(c) + ")");
  double mx = ln->data[0];
  for (int i = 1; i < c; ++i) mx = std::max(mx, ln->data[i]);
  double z = 0.0;
  for (int i = 0; i < c; ++i) z += std::exp(ln->data[i] - mx);
  const double loss = std::log(z) - (ln->data[y] - mx);
  auto probs = std::make_shared<std::vector<double>>(c);
  for (int i = 0; i < c; ++i) (*probs)[i] = std::exp(ln->data[i] - mx) / z;
  auto backward = [ln, probs, y, c](Tensor::Node& self) {
    if (!ln->requires_grad) return;
    const double g = self.grad[0];
    auto& gl = ln->grad_buf();
    for (int i = 0; i < c; ++i)
      gl[i] += g * ((*probs)[i] - (i == y ? 1.0 : 0.0));
  };
  return TensorOps::make({1}, {loss}, {ln}, backward);
}

Tensor add(const Tensor& a, const Tensor& b) {
  auto an = TensorOps::node(a);
  auto bn = TensorOps::node(b);
  if (an->shape != bn->shape) throw DimensionError("add: shape mismatch");
  std::vector<double> out(an->data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = an->data[i] + bn->data[i];
  auto backward = [an, bn](Tensor::Node& self) {
    if (an->requires_grad) {
      auto& g = an->grad_buf();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buf();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  };
  return TensorOps::make(an->shape, std::move(out), {an, bn}, backward);
}

Tensor affine(const Tensor& x, double alpha, double beta) {
  auto xn = TensorOps::node(x);
  std::vector<double> out(xn->data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = alpha * xn->data[i] + beta;
  auto backward = [xn, alpha](Tensor::Node& self) {
    if (!xn->requires_grad) return;
    auto& g = xn->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) g[i] += alpha * self.grad[i];
  };
  return TensorOps::make(xn->shape, std::move(out), {xn}, backward);
}

Tensor sum(const Tensor& x) {
  auto xn = TensorOps::node(x);
  double acc = 0.0;
  for (double v : xn->data) acc += v;
  auto backward = [xn](Tensor::Node& self) {
    if (!xn->requires_grad) return;
    auto& g = xn->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  };
  return TensorOps::make({1}, {acc}, {xn}, backward);
}

Tensor index_scalar(const Tensor& x, int flat_index) {
  auto xn = TensorOps::node(x);
  if (flat_index < 0 || flat_index >= static_cast<int>(xn->data.size()))
    throw DimensionError("index_scalar: index out of range");
  auto backward = [xn, flat_index](Tensor::Node& self) {
    if (!xn->requires_grad) return;
    xn->grad_buf()[flat_index] += self.grad[0];
  };
  return TensorOps::make({1}, {xn->data[flat_index]}, {xn}, backward);
}

Tensor flatten(const Tensor& x) {
  auto xn = TensorOps::node(x);
  std::vector<double> out = xn->data;
  auto backward = [xn](Tensor::Node& self) {
    if (!xn->requires_grad) return;
    auto& g = xn->grad_buf();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  };
  return TensorOps::make({static_cast<int>(out.size())}, std::move(out), {xn},
                         backward);
}

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double h) {
  if (h < 1e-7 || h > 1e-3)
    throw ParamError("grad_check: h must be in [1e-7, 1e-3]");
  Tensor probe = Tensor::from_data(x.shape(), x.data(), true);
  Tensor out = f(probe);
  if (out.size() != 1) throw ContractError("grad_check: f must return a scalar");
  out.backward();
  const std::vector<double> analytic = probe.grad();

  double worst = 0.0;
  std::vector<double> base = x.data();
  for (size_t i = 0; i < base.size(); ++i) {
    std::vector<double> plus = base, minus = base;
    plus[i] += h;
    minus[i] -= h;
    const double fp = f(Tensor::from_data(x.shape(), plus, false)).value();
    const double fm = f(Tensor::from_data(x.shape(), minus, false)).value();
    const double numeric = (fp - fm) / (2.0 * h);
    const double mag = std::max(std::abs(analytic[i]), std::abs(numeric));
    const double err = mag < 1e-8 ? std::abs(analytic[i] - numeric)
                                  : std::abs(analytic[i] - numeric) / mag;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace ferau
