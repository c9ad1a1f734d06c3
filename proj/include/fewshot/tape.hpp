#pragma once

// Reverse-mode differentiation over dense Eigen tensors.
//
// A Tape records every primitive evaluated through it together with a
// closure that pushes the output adjoint back onto the inputs. Values are
// computed eagerly; shapes are validated when a primitive is recorded and
// every forward result is checked for finiteness.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fewshot {

template <typename Scalar>
using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Primitive {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,
  Divide,
  MatVec,
  Tanh,
  Sum,
  Exp,
  Log,
  Sqrt,
  Softmax,
  CosineSim,
  SquaredDistance,
  Element,
  Stack,
  EmbeddingMean,
  CosineSimilarityMatrix,
  SupConLoss,
  WeightedAverage,
};

const char* primitive_name(Primitive op);
Primitive parse_primitive(std::string_view name);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  NumericError(Primitive op, const std::string& what)
      : std::runtime_error(what), primitive_(op) {}
  Primitive primitive() const { return primitive_; }

 private:
  Primitive primitive_;
};

struct TapeOptions {
  // Test hook: negate the incoming adjoint of every node of this primitive.
  std::optional<Primitive> flip_adjoint;
};

template <typename Scalar>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  const Tensor<Scalar>& value() const { return tape_->value(*this); }
  Scalar scalar() const { return value()(0, 0); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape<Scalar>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

template <typename Scalar>
class Tape {
 public:
  using TensorT = Tensor<Scalar>;
  // Receives the output adjoint and one accumulator per parent, in order.
  using Backward = std::function<void(const TensorT&, std::span<TensorT* const>)>;

  explicit Tape(TapeOptions options = {}) : options_(options) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(TensorT value) { return leaf(std::move(value)); }
  Var<Scalar> parameter(TensorT value) { return leaf(std::move(value)); }

  Var<Scalar> record(Primitive op, TensorT value, std::vector<int> parents, Backward backward) {
    if (!value.allFinite()) {
      throw NumericError(op, std::string("non-finite value produced by primitive '") +
                                 primitive_name(op) + "'");
    }
    nodes_.push_back(Node{op, std::move(value), std::move(parents), std::move(backward)});
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const TensorT& value(const Var<Scalar>& v) const { return nodes_.at(check(v)).value; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a 1x1 node; may be called once per tape.
  void backward(const Var<Scalar>& loss) {
    const int root = check(loss);
    if (nodes_[root].value.size() != 1) throw ShapeError("backward: loss must be a scalar");
    adjoints_.assign(nodes_.size(), TensorT());
    adjoints_[root] = TensorT::Ones(1, 1);
    std::vector<TensorT*> parent_adjoints;
    for (int i = root; i >= 0; --i) {
      Node& node = nodes_[i];
      if (adjoints_[i].size() == 0 || !node.backward) continue;
      if (options_.flip_adjoint && *options_.flip_adjoint == node.op) adjoints_[i] = -adjoints_[i];
      parent_adjoints.clear();
      for (int p : node.parents) {
        if (adjoints_[p].size() == 0) adjoints_[p] = TensorT::Zero(nodes_[p].value.rows(), nodes_[p].value.cols());
        parent_adjoints.push_back(&adjoints_[p]);
      }
      node.backward(adjoints_[i], parent_adjoints);
    }
  }

  // Gradient of the last backward() root w.r.t. a node; zero when untouched.
  TensorT gradient(const Var<Scalar>& v) const {
    const int id = check(v);
    if (id < static_cast<int>(adjoints_.size()) && adjoints_[id].size() != 0) return adjoints_[id];
    return TensorT::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
  }

 private:
  struct Node {
    Primitive op;
    TensorT value;
    std::vector<int> parents;
    Backward backward;
  };

  Var<Scalar> leaf(TensorT value) { return record(Primitive::Leaf, std::move(value), {}, {}); }

  int check(const Var<Scalar>& v) const {
    if (v.tape() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_.size())) {
      throw std::invalid_argument("variable does not belong to this tape");
    }
    return v.id();
  }

  TapeOptions options_;
  std::vector<Node> nodes_;
  std::vector<TensorT> adjoints_;
};

namespace detail {

template <typename Scalar>
Tape<Scalar>& same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("operands live on different tapes");
  return *a.tape();
}

template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

template <typename Scalar>
void require_column(const Var<Scalar>& a, const char* op) {
  if (a.cols() != 1) throw ShapeError(std::string(op) + ": expected a column vector");
}

// Norm guard for cosine similarity; keeps zero vectors finite.
template <typename Scalar>
constexpr Scalar kNormGuard = Scalar(1e-12);

}  // namespace detail

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "add");
  return tape.record(Primitive::Add, a.value() + b.value(), {a.id(), b.id()},
                     [](const auto& g, auto parents) {
                       *parents[0] += g;
                       *parents[1] += g;
                     });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "sub");
  return tape.record(Primitive::Sub, a.value() - b.value(), {a.id(), b.id()},
                     [](const auto& g, auto parents) {
                       *parents[0] += g;
                       *parents[1] -= g;
                     });
}

// Elementwise product of same-shape operands.
template <typename Scalar>
Var<Scalar> cwise_product(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "mul");
  Tensor<Scalar> av = a.value(), bv = b.value();
  Tensor<Scalar> out = av.cwiseProduct(bv);
  return tape.record(Primitive::Mul, std::move(out), {a.id(), b.id()},
                     [av = std::move(av), bv = std::move(bv)](const auto& g, auto parents) {
                       *parents[0] += g.cwiseProduct(bv);
                       *parents[1] += g.cwiseProduct(av);
                     });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar factor) {
  return x.tape()->record(Primitive::Scale, x.value() * factor, {x.id()},
                          [factor](const auto& g, auto parents) { *parents[0] += g * factor; });
}

template <typename Scalar>
Var<Scalar> divide(const Var<Scalar>& x, Scalar divisor) {
  if (divisor == Scalar(0)) throw NumericError(Primitive::Divide, "divide: zero divisor");
  return x.tape()->record(Primitive::Divide, x.value() / divisor, {x.id()},
                          [divisor](const auto& g, auto parents) { *parents[0] += g / divisor; });
}

// weight (r x c) times column vector x (c x 1).
template <typename Scalar>
Var<Scalar> matvec(const Var<Scalar>& weight, const Var<Scalar>& x) {
  auto& tape = detail::same_tape(weight, x);
  detail::require_column(x, "matvec");
  if (weight.cols() != x.rows()) {
    throw ShapeError("matvec: weight has " + std::to_string(weight.cols()) + " columns, input has " +
                     std::to_string(x.rows()) + " rows");
  }
  Tensor<Scalar> out = weight.value() * x.value();
  return tape.record(Primitive::MatVec, std::move(out), {weight.id(), x.id()},
                     [w = weight.value(), xv = x.value()](const auto& g, auto parents) {
                       parents[0]->noalias() += g * xv.transpose();
                       parents[1]->noalias() += w.transpose() * g;
                     });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  Tensor<Scalar> y = x.value().array().tanh().matrix();
  return x.tape()->record(Primitive::Tanh, y, {x.id()}, [y](const auto& g, auto parents) {
    *parents[0] += (g.array() * (Scalar(1) - y.array().square())).matrix();
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Tensor<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->record(Primitive::Sum, std::move(out), {x.id()},
                          [](const auto& g, auto parents) { parents[0]->array() += g(0, 0); });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& x) {
  Tensor<Scalar> y = x.value().array().exp().matrix();
  return x.tape()->record(Primitive::Exp, y, {x.id()}, [y](const auto& g, auto parents) {
    *parents[0] += g.cwiseProduct(y);
  });
}

template <typename Scalar>
Var<Scalar> log(const Var<Scalar>& x) {
  if ((x.value().array() <= Scalar(0)).any()) {
    throw NumericError(Primitive::Log, "log: non-positive argument");
  }
  Tensor<Scalar> xv = x.value();
  return x.tape()->record(Primitive::Log, xv.array().log().matrix(), {x.id()},
                          [xv](const auto& g, auto parents) {
                            *parents[0] += (g.array() / xv.array()).matrix();
                          });
}

// Subgradient 0 at the origin.
template <typename Scalar>
Var<Scalar> sqrt(const Var<Scalar>& x) {
  if ((x.value().array() < Scalar(0)).any()) {
    throw NumericError(Primitive::Sqrt, "sqrt: negative argument");
  }
  Tensor<Scalar> y = x.value().unaryExpr([](Scalar s) { return std::sqrt(s); });
  return x.tape()->record(Primitive::Sqrt, y, {x.id()}, [y](const auto& g, auto parents) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y(i) > Scalar(0)) (*parents[0])(i) += g(i) / (Scalar(2) * y(i));
    }
  });
}

// Softmax over a column vector, computed with max subtraction.
template <typename Scalar>
Tensor<Scalar> softmax_values(const Tensor<Scalar>& x) {
  const Scalar shift = x.maxCoeff();
  Tensor<Scalar> e = (x.array() - shift).exp().matrix();
  return e / e.sum();
}

template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x) {
  detail::require_column(x, "softmax");
  Tensor<Scalar> y = softmax_values<Scalar>(x.value());
  return x.tape()->record(Primitive::Softmax, y, {x.id()}, [y](const auto& g, auto parents) {
    const Scalar dot = g.cwiseProduct(y).sum();
    *parents[0] += (y.array() * (g.array() - dot)).matrix();
  });
}

template <typename Scalar>
Scalar cosine_value(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return a.cwiseProduct(b).sum() /
         ((a.norm() + detail::kNormGuard<Scalar>) * (b.norm() + detail::kNormGuard<Scalar>));
}

template <typename Scalar>
Var<Scalar> cosine_similarity(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "cosine_similarity");
  Tensor<Scalar> out(1, 1);
  out(0, 0) = cosine_value<Scalar>(a.value(), b.value());
  return tape.record(
      Primitive::CosineSim, out, {a.id(), b.id()},
      [av = a.value(), bv = b.value()](const auto& g, auto parents) {
        const Scalar na = av.norm(), nb = bv.norm();
        const Scalar ga = na + detail::kNormGuard<Scalar>, gb = nb + detail::kNormGuard<Scalar>;
        const Scalar dot = av.cwiseProduct(bv).sum();
        const Scalar up = g(0, 0);
        // d/da [a.b / ((|a|+e)(|b|+e))] = b/(ga gb) - dot a / (|a| ga^2 gb)
        *parents[0] += up * (bv / (ga * gb));
        if (na > Scalar(0)) *parents[0] -= up * (dot / (na * ga * ga * gb)) * av;
        *parents[1] += up * (av / (ga * gb));
        if (nb > Scalar(0)) *parents[1] -= up * (dot / (nb * gb * gb * ga)) * bv;
      });
}

template <typename Scalar>
Var<Scalar> squared_distance(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& tape = detail::same_tape(a, b);
  detail::require_same_shape(a, b, "squared_distance");
  Tensor<Scalar> diff = a.value() - b.value();
  Tensor<Scalar> out(1, 1);
  out(0, 0) = diff.squaredNorm();
  return tape.record(Primitive::SquaredDistance, std::move(out), {a.id(), b.id()},
                     [diff = std::move(diff)](const auto& g, auto parents) {
                       *parents[0] += (Scalar(2) * g(0, 0)) * diff;
                       *parents[1] -= (Scalar(2) * g(0, 0)) * diff;
                     });
}

// Flat-index element as a 1x1 node.
template <typename Scalar>
Var<Scalar> element(const Var<Scalar>& x, Eigen::Index index) {
  if (index < 0 || index >= x.value().size()) throw ShapeError("element: index out of range");
  Tensor<Scalar> out(1, 1);
  out(0, 0) = x.value()(index);
  return x.tape()->record(Primitive::Element, std::move(out), {x.id()},
                          [index](const auto& g, auto parents) { (*parents[0])(index) += g(0, 0); });
}

// Stacks n column vectors of equal length L into an n x L matrix (row i = input i).
// Stacking 1x1 nodes yields an n x 1 column vector.
template <typename Scalar>
Var<Scalar> stack(std::span<const Var<Scalar>> items) {
  if (items.empty()) throw ShapeError("stack: no inputs");
  Tape<Scalar>* tape = items.front().tape();
  const Eigen::Index len = items.front().rows();
  Tensor<Scalar> out(static_cast<Eigen::Index>(items.size()), len);
  std::vector<int> parents;
  parents.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].tape() != tape) throw std::invalid_argument("stack: operands live on different tapes");
    detail::require_column(items[i], "stack");
    if (items[i].rows() != len) throw ShapeError("stack: length mismatch");
    out.row(static_cast<Eigen::Index>(i)) = items[i].value().transpose();
    parents.push_back(items[i].id());
  }
  return tape->record(Primitive::Stack, std::move(out), std::move(parents),
                      [](const auto& g, auto ps) {
                        for (std::size_t i = 0; i < ps.size(); ++i) {
                          *ps[i] += g.row(static_cast<Eigen::Index>(i)).transpose();
                        }
                      });
}

// Mean of the selected embedding rows as a column vector; zero for no ids.
template <typename Scalar>
Var<Scalar> embedding_mean(const Var<Scalar>& table, std::span<const int> ids) {
  const auto& e = table.value();
  Tensor<Scalar> out = Tensor<Scalar>::Zero(e.cols(), 1);
  for (int id : ids) {
    if (id < 0 || id >= e.rows()) {
      throw ShapeError("embedding_mean: token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(e.rows()));
    }
    out += e.row(id).transpose();
  }
  const Scalar count = static_cast<Scalar>(ids.size());
  if (!ids.empty()) out /= count;
  return table.tape()->record(Primitive::EmbeddingMean, std::move(out), {table.id()},
                              [ids = std::vector<int>(ids.begin(), ids.end()), count](const auto& g, auto ps) {
                                for (int id : ids) ps[0]->row(id) += g.transpose() / count;
                              });
}

// Pairwise cosine similarities between the rows of an n x d matrix.
template <typename Scalar>
Var<Scalar> cosine_similarity_matrix(const Var<Scalar>& reps) {
  const auto& r = reps.value();
  const Eigen::Index n = r.rows();
  Vector<Scalar> norms = r.rowwise().norm();
  Tensor<Scalar> unit = r;
  for (Eigen::Index i = 0; i < n; ++i) unit.row(i) /= norms(i) + detail::kNormGuard<Scalar>;
  Tensor<Scalar> sims = unit * unit.transpose();
  return reps.tape()->record(
      Primitive::CosineSimilarityMatrix, std::move(sims), {reps.id()},
      [r, unit, norms](const auto& g, auto ps) {
        // dL/dunit_i = sum_j (G_ij + G_ji) unit_j
        Tensor<Scalar> g_unit = (g + g.transpose()) * unit;
        for (Eigen::Index i = 0; i < r.rows(); ++i) {
          const Scalar guarded = norms(i) + detail::kNormGuard<Scalar>;
          ps[0]->row(i) += g_unit.row(i) / guarded;
          if (norms(i) > Scalar(0)) {
            const Scalar radial = r.row(i).dot(g_unit.row(i));
            ps[0]->row(i) -= r.row(i) * (radial / (norms(i) * guarded * guarded));
          }
        }
      });
}

// Attention-weighted average of equal-length column vectors, weights = softmax(scores).
// Evaluated as sum(u_i v_i) / sum(u_i) with u = exp(scores - max), so equal scores
// reduce to the arithmetic mean.
template <typename Scalar>
Var<Scalar> weighted_average(const Var<Scalar>& scores, std::span<const Var<Scalar>> items) {
  detail::require_column(scores, "weighted_average");
  if (items.empty() || static_cast<std::size_t>(scores.rows()) != items.size()) {
    throw ShapeError("weighted_average: need one score per item");
  }
  Tape<Scalar>* tape = scores.tape();
  const Eigen::Index len = items.front().rows();
  const auto& e = scores.value();
  const Scalar shift = e.maxCoeff();
  Tensor<Scalar> u = (e.array() - shift).exp().matrix();
  Tensor<Scalar> acc = Tensor<Scalar>::Zero(len, 1);
  Scalar total = 0;
  std::vector<int> parents{scores.id()};
  Tensor<Scalar> values(len, static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].tape() != tape) throw std::invalid_argument("weighted_average: operands live on different tapes");
    detail::require_column(items[i], "weighted_average");
    if (items[i].rows() != len) throw ShapeError("weighted_average: length mismatch");
    const auto idx = static_cast<Eigen::Index>(i);
    acc += u(idx) * items[i].value();
    total += u(idx);
    values.col(idx) = items[i].value();
    parents.push_back(items[i].id());
  }
  Tensor<Scalar> out = acc / total;
  Tensor<Scalar> gamma = u / total;
  return tape->record(Primitive::WeightedAverage, out, std::move(parents),
                      [gamma, values, out](const auto& g, auto ps) {
                        for (Eigen::Index i = 0; i < values.cols(); ++i) {
                          *ps[i + 1] += gamma(i) * g;
                          (*ps[0])(i) += gamma(i) * (values.col(i) - out).dot(g.col(0));
                        }
                      });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& x) {
  return scale(x, Scalar(-1));
}

}  // namespace fewshot
