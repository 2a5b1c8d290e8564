#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace scmm {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node;
}

/// One recorded primitive operation on a computation tape.
struct TapeEntry {
  std::uint64_t sequence;
  std::string_view op;
};

/// Operations reachable from a loss, in execution order.
using ComputationTape = std::vector<TapeEntry>;

/// Dense row-major tensor of doubles with reverse-mode autodiff.
///
/// A Tensor is a shared handle: copies alias the same node. Values of an
/// operation's output are never modified after construction; only leaves
/// (tensors built directly from data) expose mutable storage, which the
/// optimizer uses for in-place parameter updates.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Eigen::ArrayXd values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_matrix(const Eigen::Ref<const RowMatrix>& m, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  Index rank() const { return static_cast<Index>(shape().size()); }
  Index dim(Index axis) const;
  Index size() const;
  bool requires_grad() const;
  bool is_leaf() const;
  std::string_view op() const;
  std::uint64_t sequence() const;

  const Eigen::ArrayXd& values() const;
  /// Mutable storage; only valid on leaves.
  Eigen::ArrayXd& values_mut();
  /// Gradient buffer; empty unless requires_grad.
  const Eigen::ArrayXd& grad() const;
  void zero_grad();

  double item() const;
  double at(std::initializer_list<Index> index) const;
  /// Row-major matrix view of a rank-2 tensor (rank 1 is viewed as 1×n).
  Eigen::Map<const RowMatrix> matrix() const;

  /// Same values, no history, no gradient.
  Tensor detach() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend struct detail::Node;
  friend Tensor make_op_result(std::string_view, Shape, Eigen::ArrayXd, std::vector<Tensor>,
                               std::function<void(detail::Node&)>);
  friend void backward(const Tensor&);
  friend ComputationTape tape(const Tensor&);

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Node {
  Shape shape;
  Eigen::ArrayXd value;
  Eigen::ArrayXd grad;
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t sequence = 0;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Gradient accumulator of input i, allocated on first use.
  Eigen::ArrayXd& input_grad(std::size_t i);
  bool input_requires_grad(std::size_t i) const { return inputs[i]->requires_grad; }
};

}  // namespace detail

/// Builds an operation output; records history only when some input needs gradients.
Tensor make_op_result(std::string_view op, Shape shape, Eigen::ArrayXd values,
                      std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward_fn);

/// Accumulates dLoss/dLeaf into every requires_grad leaf reachable from a scalar loss.
void backward(const Tensor& loss);

/// The recorded operations that backward(loss) would replay, in execution order.
ComputationTape tape(const Tensor& loss);

// Elementwise arithmetic with NumPy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor shift(const Tensor& a, double offset);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);

// Reductions and shape manipulation.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sums over one axis, removing it.
Tensor sum_axis(const Tensor& a, Index axis);
Tensor mean_axis(const Tensor& a, Index axis);
Tensor reshape(const Tensor& a, Shape shape);
/// Swaps the last two axes (matrix transpose for rank 2).
Tensor transpose_last(const Tensor& a);
/// Concatenates along axis 0.
Tensor concat(const std::vector<Tensor>& parts);
/// Rows [begin, begin + count) along axis 0.
Tensor slice(const Tensor& a, Index begin, Index count);

// Linear algebra and network primitives.
Tensor matmul(const Tensor& a, const Tensor& b);
/// 1-D cross-correlation: input [B×Cin×L], kernels [Cout×Cin×K] -> [B×Cout×L'].
Tensor conv1d(const Tensor& input, const Tensor& kernels, Index stride, Index padding);
/// conv1d followed by a per-output-channel bias [Cout].
Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias, Index stride,
              Index padding);
Tensor softmax_rows(const Tensor& logits);
Tensor log_softmax_rows(const Tensor& logits);
/// Row softmax restricted to entries where keep is true; excluded entries are 0.
Tensor masked_softmax_rows(const Tensor& logits, const BoolMatrix& keep);
/// Row log-softmax restricted to entries where keep is true; excluded entries are 0.
Tensor masked_log_softmax_rows(const Tensor& logits, const BoolMatrix& keep);
/// Divides each row by max(||row||, eps).
Tensor normalize_rows(const Tensor& a, double eps = 1e-12);

}  // namespace scmm
