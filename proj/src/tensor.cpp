#include "scmm/tensor.hpp"

#include "scmm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace scmm {

namespace {

thread_local std::uint64_t g_sequence = 0;

std::uint64_t next_sequence() { return ++g_sequence; }

// Row-major strides of a shape.
std::vector<Index> strides_of(const Shape& shape) {
  std::vector<Index> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

Shape broadcast_shape(const Shape& a, const Shape& b, std::string_view op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const Index da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const Index db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " +
                           to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// For each flat index of `out`, the flat index into a tensor of shape `in`
// broadcast against it.
std::vector<Index> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t offset = out.size() - in.size();
  const auto in_strides = strides_of(in);
  std::vector<Index> bstrides(out.size(), 0);
  for (std::size_t i = 0; i < in.size(); ++i) {
    bstrides[i + offset] = in[i] == 1 ? 0 : in_strides[i];
  }
  const Index n = numel(out);
  std::vector<Index> map(static_cast<std::size_t>(n));
  std::vector<Index> counter(out.size(), 0);
  Index src = 0;
  for (Index flat = 0; flat < n; ++flat) {
    map[static_cast<std::size_t>(flat)] = src;
    for (std::size_t d = out.size(); d-- > 0;) {
      if (++counter[d] < out[d]) {
        src += bstrides[d];
        break;
      }
      src -= bstrides[d] * (out[d] - 1);
      counter[d] = 0;
    }
  }
  return map;
}

// Expands `values` (shape `in`) to `out`.
Eigen::ArrayXd expand(const Eigen::ArrayXd& values, const Shape& in, const Shape& out) {
  if (in == out) return values;
  const Index n = numel(out);
  if (values.size() == 1) return Eigen::ArrayXd::Constant(n, values[0]);
  const auto map = broadcast_index(in, out);
  Eigen::ArrayXd result(n);
  for (Index i = 0; i < n; ++i) result[i] = values[map[static_cast<std::size_t>(i)]];
  return result;
}

// Sums a gradient of shape `out` back onto shape `in`.
void accumulate_reduced(Eigen::ArrayXd& target, const Eigen::ArrayXd& grad, const Shape& in,
                        const Shape& out) {
  if (in == out) {
    target += grad;
    return;
  }
  if (target.size() == 1) {
    target[0] += grad.sum();
    return;
  }
  const auto map = broadcast_index(in, out);
  for (Index i = 0; i < grad.size(); ++i) target[map[static_cast<std::size_t>(i)]] += grad[i];
}

Eigen::ArrayXd& grad_buffer(detail::Node& node) {
  if (node.grad.size() != node.value.size()) node.grad = Eigen::ArrayXd::Zero(node.value.size());
  return node.grad;
}

void require_rank(const Tensor& t, Index rank, std::string_view op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + to_string(t.shape()));
  }
}

using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

}  // namespace

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "×" : "") << shape[i];
  os << ']';
  return os.str();
}

Eigen::ArrayXd& detail::Node::input_grad(std::size_t i) { return grad_buffer(*inputs[i]); }

Tensor::Tensor(Shape shape, Eigen::ArrayXd values, bool requires_grad) {
  for (Index d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + to_string(shape));
  }
  if (numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " holds " + std::to_string(numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
  node_->sequence = next_sequence();
  if (requires_grad) node_->grad = Eigen::ArrayXd::Zero(node_->value.size());
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const Index n = numel(shape);
  return Tensor(std::move(shape), Eigen::ArrayXd::Zero(n), requires_grad);
}

Tensor Tensor::filled(Shape shape, double value) {
  const Index n = numel(shape);
  return Tensor(std::move(shape), Eigen::ArrayXd::Constant(n, value));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, Eigen::ArrayXd::Constant(1, value), requires_grad);
}

Tensor Tensor::from_matrix(const Eigen::Ref<const RowMatrix>& m, bool requires_grad) {
  Eigen::ArrayXd values(m.size());
  MapMatrix(values.data(), m.rows(), m.cols()) = m;
  return Tensor(Shape{m.rows(), m.cols()}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

Index Tensor::dim(Index axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(shape()));
  }
  return shape()[static_cast<std::size_t>(axis)];
}

Index Tensor::size() const { return node_->value.size(); }
bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->leaf; }
std::string_view Tensor::op() const { return node_->op; }
std::uint64_t Tensor::sequence() const { return node_->sequence; }
const Eigen::ArrayXd& Tensor::values() const { return node_->value; }

Eigen::ArrayXd& Tensor::values_mut() {
  if (!node_->leaf) throw ContractError("values_mut: tensor produced by '" +
                                        std::string(node_->op) + "' is immutable");
  return node_->value;
}

const Eigen::ArrayXd& Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad = Eigen::ArrayXd::Zero(node_->value.size());
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item: tensor of shape " + to_string(shape()) +
                                       " is not a scalar");
  return node_->value[0];
}

double Tensor::at(std::initializer_list<Index> index) const {
  if (static_cast<Index>(index.size()) != rank()) {
    throw DimensionError("at: index rank does not match shape " + to_string(shape()));
  }
  const auto strides = strides_of(shape());
  Index flat = 0;
  std::size_t d = 0;
  for (Index i : index) {
    if (i < 0 || i >= shape()[d]) throw DimensionError("at: index out of range");
    flat += i * strides[d++];
  }
  return node_->value[flat];
}

Eigen::Map<const RowMatrix> Tensor::matrix() const {
  if (rank() == 1) return {node_->value.data(), 1, shape()[0]};
  require_rank(*this, 2, "matrix");
  return {node_->value.data(), shape()[0], shape()[1]};
}

Tensor Tensor::detach() const { return Tensor(shape(), values(), false); }

Tensor make_op_result(std::string_view op, Shape shape, Eigen::ArrayXd values,
                      std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->leaf = false;
  node->op = op;
  node->sequence = next_sequence();
  const bool needs_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node_);
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

namespace {

std::vector<detail::Node*> reachable_ops(const std::shared_ptr<detail::Node>& root,
                                         std::vector<detail::Node*>* leaves) {
  std::vector<detail::Node*> ops;
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (n->leaf) {
      if (leaves != nullptr) leaves->push_back(n);
      continue;
    }
    ops.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(ops.begin(), ops.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->sequence < b->sequence; });
  return ops;
}

}  // namespace

ComputationTape tape(const Tensor& loss) {
  ComputationTape result;
  if (!loss.defined() || !loss.requires_grad()) return result;
  for (const detail::Node* n : reachable_ops(loss.node_, nullptr)) {
    result.push_back({n->sequence, n->op});
  }
  return result;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;
  auto ops = reachable_ops(loss.node_, nullptr);
  for (detail::Node* n : ops) n->grad = Eigen::ArrayXd::Zero(n->value.size());
  grad_buffer(*loss.node_)[0] += 1.0;
  for (auto it = ops.rbegin(); it != ops.rend(); ++it) {
    detail::Node& n = **it;
    n.backward(n);
  }
  // Intermediate gradients are not needed after the pass.
  for (detail::Node* n : ops) n->grad.resize(0);
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  Shape out = broadcast_shape(a.shape(), b.shape(), "add");
  Eigen::ArrayXd v = expand(a.values(), a.shape(), out) + expand(b.values(), b.shape(), out);
  return make_op_result("add", out, std::move(v), {a, b}, [](detail::Node& n) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (n.input_requires_grad(i)) {
        accumulate_reduced(n.input_grad(i), n.grad, n.inputs[i]->shape, n.shape);
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Shape out = broadcast_shape(a.shape(), b.shape(), "sub");
  Eigen::ArrayXd v = expand(a.values(), a.shape(), out) - expand(b.values(), b.shape(), out);
  return make_op_result("sub", out, std::move(v), {a, b}, [](detail::Node& n) {
    if (n.input_requires_grad(0)) accumulate_reduced(n.input_grad(0), n.grad, n.inputs[0]->shape, n.shape);
    if (n.input_requires_grad(1)) {
      accumulate_reduced(n.input_grad(1), Eigen::ArrayXd(-n.grad), n.inputs[1]->shape, n.shape);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Shape out = broadcast_shape(a.shape(), b.shape(), "mul");
  Eigen::ArrayXd ea = expand(a.values(), a.shape(), out);
  Eigen::ArrayXd eb = expand(b.values(), b.shape(), out);
  Eigen::ArrayXd v = ea * eb;
  return make_op_result("mul", out, std::move(v), {a, b},
                        [ea = std::move(ea), eb = std::move(eb)](detail::Node& n) {
                          if (n.input_requires_grad(0)) {
                            accumulate_reduced(n.input_grad(0), Eigen::ArrayXd(n.grad * eb),
                                               n.inputs[0]->shape, n.shape);
                          }
                          if (n.input_requires_grad(1)) {
                            accumulate_reduced(n.input_grad(1), Eigen::ArrayXd(n.grad * ea),
                                               n.inputs[1]->shape, n.shape);
                          }
                        });
}

Tensor div(const Tensor& a, const Tensor& b) {
  Shape out = broadcast_shape(a.shape(), b.shape(), "div");
  if ((b.values() == 0.0).any()) throw DomainError("div: division by zero");
  Eigen::ArrayXd ea = expand(a.values(), a.shape(), out);
  Eigen::ArrayXd eb = expand(b.values(), b.shape(), out);
  Eigen::ArrayXd v = ea / eb;
  return make_op_result("div", out, v, {a, b},
                        [eb = std::move(eb), v](detail::Node& n) {
                          if (n.input_requires_grad(0)) {
                            accumulate_reduced(n.input_grad(0), Eigen::ArrayXd(n.grad / eb),
                                               n.inputs[0]->shape, n.shape);
                          }
                          if (n.input_requires_grad(1)) {
                            accumulate_reduced(n.input_grad(1), Eigen::ArrayXd(-n.grad * v / eb),
                                               n.inputs[1]->shape, n.shape);
                          }
                        });
}

Tensor scale(const Tensor& a, double factor) {
  return make_op_result("scale", a.shape(), a.values() * factor, {a}, [factor](detail::Node& n) {
    n.input_grad(0) += n.grad * factor;
  });
}

Tensor shift(const Tensor& a, double offset) {
  return make_op_result("shift", a.shape(), a.values() + offset, {a},
                        [](detail::Node& n) { n.input_grad(0) += n.grad; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& a) {
  Eigen::ArrayXd v = a.values().exp();
  return make_op_result("exp", a.shape(), v, {a},
                        [v](detail::Node& n) { n.input_grad(0) += n.grad * v; });
}

Tensor log(const Tensor& a) {
  if ((a.values() <= 0.0).any()) throw DomainError("log: argument must be positive");
  const Eigen::ArrayXd x = a.values();
  return make_op_result("log", a.shape(), x.log(), {a},
                        [x](detail::Node& n) { n.input_grad(0) += n.grad / x; });
}

Tensor sigmoid(const Tensor& a) {
  // Evaluated on the side that keeps exp() from overflowing.
  Eigen::ArrayXd v = a.values().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make_op_result("sigmoid", a.shape(), v, {a},
                        [v](detail::Node& n) { n.input_grad(0) += n.grad * v * (1.0 - v); });
}

Tensor relu(const Tensor& a) {
  Eigen::ArrayXd v = a.values().max(0.0);
  return make_op_result("relu", a.shape(), v, {a}, [v](detail::Node& n) {
    n.input_grad(0) += (v > 0.0).select(n.grad, 0.0);
  });
}

Tensor square(const Tensor& a) {
  const Eigen::ArrayXd x = a.values();
  return make_op_result("square", a.shape(), x.square(), {a},
                        [x](detail::Node& n) { n.input_grad(0) += 2.0 * n.grad * x; });
}

Tensor sqrt(const Tensor& a) {
  if ((a.values() < 0.0).any()) throw DomainError("sqrt: argument must be nonnegative");
  Eigen::ArrayXd v = a.values().sqrt();
  return make_op_result("sqrt", a.shape(), v, {a},
                        [v](detail::Node& n) { n.input_grad(0) += n.grad * 0.5 / v; });
}

// ---------------------------------------------------------------------------
// Reductions and shapes

Tensor sum(const Tensor& a) {
  return make_op_result("sum", Shape{}, Eigen::ArrayXd::Constant(1, a.values().sum()), {a},
                        [](detail::Node& n) { n.input_grad(0) += n.grad[0]; });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ContractError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum_axis(const Tensor& a, Index axis) {
  if (axis < 0) axis += a.rank();
  if (axis < 0 || axis >= a.rank()) {
    throw DimensionError("sum_axis: axis out of range for shape " + to_string(a.shape()));
  }
  const auto& s = a.shape();
  Index outer = 1, inner = 1;
  for (Index i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (Index i = axis + 1; i < a.rank(); ++i) inner *= s[static_cast<std::size_t>(i)];
  const Index n = s[static_cast<std::size_t>(axis)];
  Shape out = s;
  out.erase(out.begin() + axis);
  if (inner == 1) {
    Eigen::ArrayXd v = ConstMapMatrix(a.values().data(), outer, n).rowwise().sum().array();
    return make_op_result("sum_axis", std::move(out), std::move(v), {a},
                          [outer, n](detail::Node& node) {
                            MapMatrix(node.input_grad(0).data(), outer, n).colwise() +=
                                node.grad.matrix();
                          });
  }
  Eigen::ArrayXd v(outer * inner);
  for (Index o = 0; o < outer; ++o) {
    v.segment(o * inner, inner) = ConstMapMatrix(a.values().data() + o * n * inner, n, inner)
                                      .colwise()
                                      .sum()
                                      .transpose()
                                      .array();
  }
  return make_op_result("sum_axis", std::move(out), std::move(v), {a},
                        [outer, inner, n](detail::Node& node) {
                          auto& g = node.input_grad(0);
                          for (Index o = 0; o < outer; ++o) {
                            MapMatrix(g.data() + o * n * inner, n, inner).rowwise() +=
                                ConstMapMatrix(node.grad.data() + o * inner, 1, inner).row(0);
                          }
                        });
}

Tensor mean_axis(const Tensor& a, Index axis) {
  const Index n = a.dim(axis);
  if (n == 0) throw ContractError("mean_axis: empty axis");
  return scale(sum_axis(a, axis), 1.0 / static_cast<double>(n));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " +
                         to_string(shape));
  }
  return make_op_result("reshape", std::move(shape), a.values(), {a},
                        [](detail::Node& n) { n.input_grad(0) += n.grad; });
}

Tensor transpose_last(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("transpose_last: rank < 2 for " + to_string(a.shape()));
  const Index rows = a.dim(-2), cols = a.dim(-1);
  const Index batch = a.size() / std::max<Index>(rows * cols, 1);
  Shape out = a.shape();
  std::swap(out[out.size() - 1], out[out.size() - 2]);
  Eigen::ArrayXd v(a.size());
  for (Index b = 0; b < batch; ++b) {
    MapMatrix(v.data() + b * rows * cols, cols, rows) =
        ConstMapMatrix(a.values().data() + b * rows * cols, rows, cols).transpose();
  }
  return make_op_result("transpose_last", std::move(out), std::move(v), {a},
                        [batch, rows, cols](detail::Node& n) {
                          auto& g = n.input_grad(0);
                          for (Index b = 0; b < batch; ++b) {
                            MapMatrix(g.data() + b * rows * cols, rows, cols) +=
                                ConstMapMatrix(n.grad.data() + b * rows * cols, cols, rows)
                                    .transpose();
                          }
                        });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  Shape out = parts.front().shape();
  if (out.empty()) throw DimensionError("concat: scalars cannot be concatenated");
  Index total_rows = 0;
  Index total = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<Index>(out.size()) ||
        !std::equal(out.begin() + 1, out.end(), p.shape().begin() + 1)) {
      throw DimensionError("concat: incompatible shapes " + to_string(out) + " and " +
                           to_string(p.shape()));
    }
    total_rows += p.dim(0);
    total += p.size();
  }
  out[0] = total_rows;
  Eigen::ArrayXd v(total);
  std::vector<Index> offsets;
  Index offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    v.segment(offset, p.size()) = p.values();
    offset += p.size();
  }
  return make_op_result("concat", std::move(out), std::move(v), parts,
                        [offsets](detail::Node& n) {
                          for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                            if (!n.input_requires_grad(i)) continue;
                            auto& g = n.input_grad(i);
                            g += n.grad.segment(offsets[i], g.size());
                          }
                        });
}

Tensor slice(const Tensor& a, Index begin, Index count) {
  if (a.rank() < 1 || begin < 0 || count < 0 || begin + count > a.dim(0)) {
    throw DimensionError("slice: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         to_string(a.shape()));
  }
  const Index row = a.dim(0) == 0 ? 0 : a.size() / a.dim(0);
  Shape out = a.shape();
  out[0] = count;
  Eigen::ArrayXd v = a.values().segment(begin * row, count * row);
  return make_op_result("slice", std::move(out), std::move(v), {a},
                        [begin, row, count](detail::Node& n) {
                          n.input_grad(0).segment(begin * row, count * row) += n.grad;
                        });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " are not aligned");
  }
  const Index m = a.dim(0), k = a.dim(1), nn = b.dim(1);
  Eigen::ArrayXd v(m * nn);
  MapMatrix(v.data(), m, nn).noalias() = a.matrix() * b.matrix();
  return make_op_result("matmul", Shape{m, nn}, std::move(v), {a, b}, [m, k, nn](detail::Node& n) {
    ConstMapMatrix g(n.grad.data(), m, nn);
    ConstMapMatrix av(n.inputs[0]->value.data(), m, k);
    ConstMapMatrix bv(n.inputs[1]->value.data(), k, nn);
    if (n.input_requires_grad(0)) {
      MapMatrix(n.input_grad(0).data(), m, k).noalias() += g * bv.transpose();
    }
    if (n.input_requires_grad(1)) {
      MapMatrix(n.input_grad(1).data(), k, nn).noalias() += av.transpose() * g;
    }
  });
}

namespace {

struct ConvGeometry {
  Index batch, in_channels, length, out_channels, kernel, stride, padding, out_length;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels, Index stride,
                           Index padding) {
  if (input.rank() != 3 || kernels.rank() != 3 || input.dim(1) != kernels.dim(1)) {
    throw DimensionError("conv1d: input " + to_string(input.shape()) + " incompatible with kernels " +
                         to_string(kernels.shape()));
  }
  if (stride < 1 || padding < 0) throw ConfigError("conv1d: stride must be >= 1 and padding >= 0");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernels.dim(0), kernels.dim(2),
                 stride, padding, 0};
  if (g.kernel > g.length + 2 * padding) {
    throw DimensionError("conv1d: kernel length " + std::to_string(g.kernel) +
                         " exceeds padded input length " + std::to_string(g.length + 2 * padding));
  }
  g.out_length = (g.length + 2 * padding - g.kernel) / stride + 1;
  return g;
}

// [B*L' × Cin*K] patch matrix.
RowMatrix im2col(const Eigen::ArrayXd& x, const ConvGeometry& g) {
  RowMatrix cols = RowMatrix::Zero(g.batch * g.out_length, g.in_channels * g.kernel);
  for (Index b = 0; b < g.batch; ++b) {
    for (Index c = 0; c < g.in_channels; ++c) {
      const double* row = x.data() + (b * g.in_channels + c) * g.length;
      for (Index l = 0; l < g.out_length; ++l) {
        double* dst = cols.data() + (b * g.out_length + l) * cols.cols() + c * g.kernel;
        const Index start = l * g.stride - g.padding;
        for (Index k = 0; k < g.kernel; ++k) {
          const Index pos = start + k;
          if (pos >= 0 && pos < g.length) dst[k] = row[pos];
        }
      }
    }
  }
  return cols;
}

void col2im_accumulate(const RowMatrix& cols, const ConvGeometry& g, Eigen::ArrayXd& dx) {
  for (Index b = 0; b < g.batch; ++b) {
    for (Index c = 0; c < g.in_channels; ++c) {
      double* row = dx.data() + (b * g.in_channels + c) * g.length;
      for (Index l = 0; l < g.out_length; ++l) {
        const double* src = cols.data() + (b * g.out_length + l) * cols.cols() + c * g.kernel;
        const Index start = l * g.stride - g.padding;
        for (Index k = 0; k < g.kernel; ++k) {
          const Index pos = start + k;
          if (pos >= 0 && pos < g.length) row[pos] += src[k];
        }
      }
    }
  }
}

Tensor conv1d_impl(const Tensor& input, const Tensor& kernels, const Tensor* bias, Index stride,
                   Index padding) {
  const ConvGeometry g = conv_geometry(input, kernels, stride, padding);
  if (bias != nullptr && (bias->rank() != 1 || bias->dim(0) != g.out_channels)) {
    throw DimensionError("conv1d: bias " + to_string(bias->shape()) + " does not match " +
                         std::to_string(g.out_channels) + " output channels");
  }
  RowMatrix cols = im2col(input.values(), g);
  ConstMapMatrix w(kernels.values().data(), g.out_channels, g.in_channels * g.kernel);
  // [B*L' × Cout]
  RowMatrix out = cols * w.transpose();
  if (bias != nullptr) out.rowwise() += bias->values().matrix().transpose();
  Eigen::ArrayXd v(g.batch * g.out_channels * g.out_length);
  for (Index b = 0; b < g.batch; ++b) {
    MapMatrix(v.data() + b * g.out_channels * g.out_length, g.out_channels, g.out_length) =
        out.middleRows(b * g.out_length, g.out_length).transpose();
  }
  std::vector<Tensor> inputs{input, kernels};
  if (bias != nullptr) inputs.push_back(*bias);
  const bool input_needs_grad = input.requires_grad();
  const bool has_bias = bias != nullptr;
  return make_op_result(
      "conv1d", Shape{g.batch, g.out_channels, g.out_length}, std::move(v), std::move(inputs),
      [g, cols = std::move(cols), input_needs_grad, has_bias](detail::Node& n) {
        RowMatrix grad_out(g.batch * g.out_length, g.out_channels);
        for (Index b = 0; b < g.batch; ++b) {
          grad_out.middleRows(b * g.out_length, g.out_length) =
              ConstMapMatrix(n.grad.data() + b * g.out_channels * g.out_length, g.out_channels,
                             g.out_length)
                  .transpose();
        }
        ConstMapMatrix w(n.inputs[1]->value.data(), g.out_channels, g.in_channels * g.kernel);
        if (n.input_requires_grad(1)) {
          MapMatrix(n.input_grad(1).data(), g.out_channels, g.in_channels * g.kernel).noalias() +=
              grad_out.transpose() * cols;
        }
        if (has_bias && n.input_requires_grad(2)) {
          n.input_grad(2) += grad_out.colwise().sum().transpose().array();
        }
        if (input_needs_grad) {
          RowMatrix grad_cols = grad_out * w;
          col2im_accumulate(grad_cols, g, n.input_grad(0));
        }
      });
}

}  // namespace

Tensor conv1d(const Tensor& input, const Tensor& kernels, Index stride, Index padding) {
  return conv1d_impl(input, kernels, nullptr, stride, padding);
}

Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias, Index stride,
              Index padding) {
  return conv1d_impl(input, kernels, &bias, stride, padding);
}

// ---------------------------------------------------------------------------
// Row-wise softmax family

namespace {

enum class SoftmaxKind { probability, log_probability };

Tensor row_softmax(const Tensor& logits, const BoolMatrix* keep, SoftmaxKind kind,
                   std::string_view op) {
  require_rank(logits, 2, op);
  const Index m = logits.dim(0), k = logits.dim(1);
  if (keep != nullptr && (keep->rows() != m || keep->cols() != k)) {
    throw DimensionError(std::string(op) + ": mask " + std::to_string(keep->rows()) + "×" +
                         std::to_string(keep->cols()) + " does not match logits " +
                         to_string(logits.shape()));
  }
  if (!logits.values().allFinite()) throw DomainError(std::string(op) + ": non-finite logits");
  ConstMapMatrix x(logits.values().data(), m, k);
  RowMatrix prob = RowMatrix::Zero(m, k);
  RowMatrix out = RowMatrix::Zero(m, k);
  for (Index i = 0; i < m; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < k; ++j) {
      if (keep == nullptr || (*keep)(i, j)) row_max = std::max(row_max, x(i, j));
    }
    if (!std::isfinite(row_max)) {
      throw ContractError(std::string(op) + ": row " + std::to_string(i) + " has no entries");
    }
    double total = 0.0;
    for (Index j = 0; j < k; ++j) {
      if (keep == nullptr || (*keep)(i, j)) {
        prob(i, j) = std::exp(x(i, j) - row_max);
        total += prob(i, j);
      }
    }
    const double log_total = std::log(total);
    for (Index j = 0; j < k; ++j) {
      if (keep != nullptr && !(*keep)(i, j)) continue;
      prob(i, j) /= total;
      out(i, j) = kind == SoftmaxKind::probability ? prob(i, j) : x(i, j) - row_max - log_total;
    }
  }
  Eigen::ArrayXd v(m * k);
  MapMatrix(v.data(), m, k) = out;
  BoolMatrix kept = keep != nullptr ? *keep : BoolMatrix::Constant(m, k, true);
  return make_op_result(op, Shape{m, k}, std::move(v), {logits},
                        [m, k, kind, prob = std::move(prob), kept = std::move(kept)](detail::Node& n) {
                          ConstMapMatrix g(n.grad.data(), m, k);
                          MapMatrix gx(n.input_grad(0).data(), m, k);
                          if (kind == SoftmaxKind::probability) {
                            const Eigen::VectorXd dot = (g.array() * prob.array()).rowwise().sum();
                            gx.array() += prob.array() * (g.array().colwise() - dot.array());
                          } else {
                            // Excluded entries are constants: no gradient flows in or out.
                            const RowMatrix live = kept.select(g, 0.0);
                            const Eigen::VectorXd row_sum = live.rowwise().sum();
                            gx.array() += kept.select(
                                live.array() - prob.array().colwise() * row_sum.array(), 0.0);
                          }
                        });
}

}  // namespace

Tensor softmax_rows(const Tensor& logits) {
  return row_softmax(logits, nullptr, SoftmaxKind::probability, "softmax_rows");
}

Tensor log_softmax_rows(const Tensor& logits) {
  return row_softmax(logits, nullptr, SoftmaxKind::log_probability, "log_softmax_rows");
}

Tensor masked_softmax_rows(const Tensor& logits, const BoolMatrix& keep) {
  return row_softmax(logits, &keep, SoftmaxKind::probability, "masked_softmax_rows");
}

Tensor masked_log_softmax_rows(const Tensor& logits, const BoolMatrix& keep) {
  return row_softmax(logits, &keep, SoftmaxKind::log_probability, "masked_log_softmax_rows");
}

Tensor normalize_rows(const Tensor& a, double eps) {
  require_rank(a, 2, "normalize_rows");
  const Index m = a.dim(0), k = a.dim(1);
  ConstMapMatrix x(a.values().data(), m, k);
  const Eigen::VectorXd norms = x.rowwise().norm();
  const Eigen::VectorXd denom = norms.cwiseMax(eps);
  Eigen::ArrayXd v(m * k);
  MapMatrix y(v.data(), m, k);
  y = denom.cwiseInverse().asDiagonal() * x;
  RowMatrix saved = y;
  return make_op_result("normalize_rows", Shape{m, k}, std::move(v), {a},
                        [m, k, eps, norms, denom, saved = std::move(saved)](detail::Node& n) {
                          ConstMapMatrix g(n.grad.data(), m, k);
                          MapMatrix gx(n.input_grad(0).data(), m, k);
                          for (Index i = 0; i < m; ++i) {
                            if (norms[i] > eps) {
                              const double proj = saved.row(i).dot(g.row(i));
                              gx.row(i) += (g.row(i) - proj * saved.row(i)) / denom[i];
                            } else {
                              gx.row(i) += g.row(i) / eps;
                            }
                          }
                        });
}

}  // namespace scmm
