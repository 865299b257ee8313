#ifndef FERAU_TENSOR_HPP_
#define FERAU_TENSOR_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ferau {

/// Dense n-dimensional tensor of doubles with reverse-mode autodiff.
///
/// A Tensor is a cheap handle onto a shared node. Values are immutable once
/// an operation has produced them; gradient buffers are filled by backward()
/// and accumulate across calls until zero_grad(). Operations record their
/// adjoint as a closure over the participating nodes, so the tape is the
/// closure DAG itself.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int size() const;
  bool requires_grad() const;

  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();  // leaves only (parameter updates)

  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Scalar value of a 1-element tensor.
  double value() const;
  double at(int flat_index) const;

  /// Reverse-mode sweep from a scalar root. Accumulates into grads.
  void backward() const;

  /// Value copy detached from the graph.
  Tensor detach() const;

  struct Node;  // implementation detail, reachable only through TensorOps
  friend struct TensorOps;

 private:
  std::shared_ptr<Node> node_;
};

// --- Forward operations -----------------------------------------------------

/// 2D cross-correlation. input [c_in,h,w], kernels [c_out,c_in,k,k],
/// bias [c_out]. k must be odd.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int stride, int pad);

/// Elementwise max(0, x); subgradient at 0 is 0.
Tensor relu(const Tensor& input);

/// Max pooling over kxk windows; ties go to the first row-major element.
Tensor maxpool2d(const Tensor& input, int k, int stride);

/// weight [c,d] @ input [d] + bias [c].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Per-channel spatial mean: [c,h,w] -> [c].
Tensor global_avg_pool(const Tensor& input);

/// Mean over the channel axis: [n,h,w] -> [h,w].
Tensor channel_mean(const Tensor& features);

/// Cosine similarity between two maps of identical shape, as a scalar.
/// Gradient flows to `t` only; `a` is a constant target.
Tensor cosine_sim_map(const Tensor& t, const Tensor& a, double eps = 1e-12);

/// -log softmax(logits)[y], max-subtraction stabilized.
Tensor softmax_cross_entropy(const Tensor& logits, int y);

/// Elementwise sum of two same-shape tensors.
Tensor add(const Tensor& a, const Tensor& b);

/// alpha * x + beta, elementwise.
Tensor affine(const Tensor& x, double alpha, double beta);

/// Sum of all entries, as a scalar.
Tensor sum(const Tensor& x);

/// Single entry of a tensor, as a scalar (differentiable).
Tensor index_scalar(const Tensor& x, int flat_index);

/// Rank-1 view with the same entries (differentiable identity).
Tensor flatten(const Tensor& x);

// --- Verification ------------------------------------------------------------

/// Compares the analytic gradient of f at x against central finite
/// differences with step h. Returns the worst relative error over all
/// coordinates (absolute error when both magnitudes fall below 1e-8).
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double h = 1e-5);

}  // namespace ferau

#endif  // FERAU_TENSOR_HPP_
