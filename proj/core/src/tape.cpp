#include "deepjko/tape.hpp"

#include <limits>
#include <string>
#include <utility>

#include "deepjko/error.hpp"

namespace deepjko::ad {
namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

enum class Op {
  Leaf,
  MatMul,
  MatMulTN,
  Add,
  Sub,
  Mul,
  Scale,
  AddCol,
  ScaleRows,
  Unary,
  ColSum,
  RowSum,
  Sum,
  Dot,
  Trace,
  Columns,
  Field,
  PairMean,
};

class ScalarUnary final : public UnaryKernel {
 public:
  ScalarUnary(std::string name, std::function<double(double)> f, std::function<double(double)> df)
      : name_(std::move(name)), f_(std::move(f)), df_(std::move(df)) {}

  void apply(std::span<const double> x, std::span<double> value,
             std::span<double> derivative) const override {
    for (std::size_t i = 0; i < x.size(); ++i) {
      value[i] = f_(x[i]);
      if (!derivative.empty()) derivative[i] = df_(x[i]);
    }
  }
  std::string name() const override { return name_; }

 private:
  std::string name_;
  std::function<double(double)> f_;
  std::function<double(double)> df_;
};

void accumulate(Tensor& into, const Tensor& g) {
  if (into.size() == 0) {
    into = g;
  } else {
    into.as_matrix() += g.as_matrix();
  }
}

void accumulate(Tensor& into, Tensor&& g) {
  if (into.size() == 0) {
    into = std::move(g);
  } else {
    into.as_matrix() += g.as_matrix();
  }
}

void accumulate_scaled(Tensor& into, const Tensor& g, double s) {
  if (into.size() == 0) into = Tensor::zeros_like(g);
  into.as_matrix() += s * g.as_matrix();
}

std::vector<double> column_copy(const Tensor& z, std::size_t j) {
  std::vector<double> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) out[i] = z(i, j);
  return out;
}

}  // namespace

std::shared_ptr<const UnaryKernel> make_unary(std::string name, std::function<double(double)> f,
                                              std::function<double(double)> df) {
  return std::make_shared<ScalarUnary>(std::move(name), std::move(f), std::move(df));
}

Tensor apply_unary(const Tensor& x, const UnaryKernel& kernel, Tensor* derivative) {
  Tensor value = Tensor::uninitialized_like(x);
  std::span<double> dspan;
  if (derivative) {
    *derivative = Tensor::uninitialized_like(x);
    dspan = derivative->values();
  }
  kernel.apply(x.values(), value.values(), dspan);
  const std::string where = "unary " + kernel.name();
  require_finite(value, where.c_str());
  if (derivative) require_finite(*derivative, where.c_str());
  return value;
}

Tensor apply_field(const Tensor& z, const ScalarField& field) {
  Tensor out(1, z.cols());
  for (std::size_t j = 0; j < z.cols(); ++j) out(0, j) = field.value(column_copy(z, j));
  require_finite(out, "field");
  return out;
}

Tensor pair_mean(const Tensor& z, const PairKernel& kernel) {
  const std::size_t n = z.cols();
  std::vector<std::vector<double>> cols(n);
  for (std::size_t j = 0; j < n; ++j) cols[j] = column_copy(z, j);
  Tensor out(1, n);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t l = 0; l < n; ++l) acc += kernel.value(cols[j], cols[l]);
    out(0, j) = acc / static_cast<double>(n);
  }
  require_finite(out, "pair_mean");
  return out;
}

struct Tape::Node {
  Op op = Op::Leaf;
  std::size_t a = kNone;
  std::size_t b = kNone;
  Tensor value;
  Tensor aux;
  double scalar = 0.0;
  std::size_t first = 0;
  std::size_t count = 0;
  bool requires_grad = false;
  bool is_param = false;
  ParamId param = 0;
  std::shared_ptr<const UnaryKernel> unary;
  std::shared_ptr<const ScalarField> field;
  std::shared_ptr<const PairKernel> pair;
};

Tape::Tape() = default;
Tape::~Tape() = default;
Tape::Tape(Tape&&) noexcept = default;
Tape& Tape::operator=(Tape&&) noexcept = default;

namespace {

// Shared by recording and replay so both produce identical bits.
template <class NodeT>
Tensor eval_node(const NodeT& n, const Tensor* va, const Tensor* vb, Tensor* aux) {
  switch (n.op) {
    case Op::Leaf: return n.value;
    case Op::MatMul: return matmul(*va, *vb);
    case Op::MatMulTN: return matmul_tn(*va, *vb);
    case Op::Add: return add(*va, *vb);
    case Op::Sub: return sub(*va, *vb);
    case Op::Mul: return mul(*va, *vb);
    case Op::Scale: return scale(*va, n.scalar);
    case Op::AddCol: return add_col(*va, *vb);
    case Op::ScaleRows: return scale_rows(*va, *vb);
    case Op::Unary: return apply_unary(*va, *n.unary, aux);
    case Op::ColSum: return col_sum(*va);
    case Op::RowSum: return row_sum(*va);
    case Op::Sum: return sum(*va);
    case Op::Dot: return dot(*va, *vb);
    case Op::Trace: return trace(*va);
    case Op::Columns: return columns(*va, n.first, n.count);
    case Op::Field: return apply_field(*va, *n.field);
    case Op::PairMean: return pair_mean(*va, *n.pair);
  }
  throw Error(ErrorCode::InvalidArgument, "tape: unknown op");
}

}  // namespace

Var Tape::push(Node node) {
  if (consumed_) throw Error(ErrorCode::TapeConsumed, "tape: cannot record after backward()");
  const Tensor* va = node.a == kNone ? nullptr : &nodes_[node.a].value;
  const Tensor* vb = node.b == kNone ? nullptr : &nodes_[node.b].value;
  if (node.op != Op::Leaf) {
    node.value = eval_node(node, va, vb, node.op == Op::Unary ? &node.aux : nullptr);
    node.requires_grad = (node.a != kNone && nodes_[node.a].requires_grad) ||
                         (node.b != kNone && nodes_[node.b].requires_grad);
  }
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(ParamId id, const Tensor& value) {
  if (params_.count(id)) {
    throw Error(ErrorCode::InvalidArgument, "tape: parameter id " + std::to_string(id) + " registered twice");
  }
  require_finite(value, "tape parameter");
  Node n;
  n.value = value;
  n.requires_grad = true;
  n.is_param = true;
  n.param = id;
  Var v = push(std::move(n));
  params_[id] = v.index;
  return v;
}

Var Tape::constant(Tensor value) {
  require_finite(value, "tape constant");
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

#define DEEPJKO_BINARY(method, opname)    \
  Var Tape::method(Var a, Var b) {        \
    Node n;                               \
    n.op = Op::opname;                    \
    n.a = a.index;                        \
    n.b = b.index;                        \
    return push(std::move(n));            \
  }

#define DEEPJKO_UNARY_OP(method, opname)  \
  Var Tape::method(Var a) {               \
    Node n;                               \
    n.op = Op::opname;                    \
    n.a = a.index;                        \
    return push(std::move(n));            \
  }

DEEPJKO_BINARY(matmul, MatMul)
DEEPJKO_BINARY(matmul_tn, MatMulTN)
DEEPJKO_BINARY(add, Add)
DEEPJKO_BINARY(sub, Sub)
DEEPJKO_BINARY(mul, Mul)
DEEPJKO_BINARY(add_col, AddCol)
DEEPJKO_BINARY(scale_rows, ScaleRows)
DEEPJKO_BINARY(dot, Dot)
DEEPJKO_UNARY_OP(col_sum, ColSum)
DEEPJKO_UNARY_OP(row_sum, RowSum)
DEEPJKO_UNARY_OP(sum, Sum)
DEEPJKO_UNARY_OP(trace, Trace)

#undef DEEPJKO_BINARY
#undef DEEPJKO_UNARY_OP

Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::Scale;
  n.a = a.index;
  n.scalar = s;
  return push(std::move(n));
}

Var Tape::unary(Var a, std::shared_ptr<const UnaryKernel> kernel) {
  Node n;
  n.op = Op::Unary;
  n.a = a.index;
  n.unary = std::move(kernel);
  return push(std::move(n));
}

Var Tape::columns(Var a, std::size_t first, std::size_t count) {
  Node n;
  n.op = Op::Columns;
  n.a = a.index;
  n.first = first;
  n.count = count;
  return push(std::move(n));
}

Var Tape::field(Var z, std::shared_ptr<const ScalarField> f) {
  Node n;
  n.op = Op::Field;
  n.a = z.index;
  n.field = std::move(f);
  return push(std::move(n));
}

Var Tape::pair_mean(Var z, std::shared_ptr<const PairKernel> kernel) {
  Node n;
  n.op = Op::PairMean;
  n.a = z.index;
  n.pair = std::move(kernel);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  if (v.index >= nodes_.size()) throw Error(ErrorCode::InvalidArgument, "tape: dangling variable");
  return nodes_[v.index].value;
}

std::size_t Tape::size() const noexcept { return nodes_.size(); }

Tensor Tape::replay(Var output) const {
  if (output.index >= nodes_.size()) throw Error(ErrorCode::InvalidArgument, "tape: dangling variable");
  std::vector<Tensor> values(output.index + 1);
  for (std::size_t i = 0; i <= output.index; ++i) {
    const Node& n = nodes_[i];
    const Tensor* va = n.a == kNone ? nullptr : &values[n.a];
    const Tensor* vb = n.b == kNone ? nullptr : &values[n.b];
    Tensor aux;
    values[i] = eval_node(n, va, vb, n.op == Op::Unary ? &aux : nullptr);
  }
  return values[output.index];
}

Gradients Tape::backward(Var output, double seed) {
  if (consumed_) throw Error(ErrorCode::TapeConsumed, "tape: backward() already ran on this tape");
  if (output.index >= nodes_.size()) throw Error(ErrorCode::InvalidArgument, "tape: dangling variable");
  if (nodes_[output.index].value.size() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "tape: backward() needs a scalar output");
  }
  consumed_ = true;

  std::vector<Tensor> adj(nodes_.size());
  adj[output.index] = Tensor::scalar(seed);

  for (std::size_t idx = output.index + 1; idx-- > 0;) {
    Node& n = nodes_[idx];
    if (!n.requires_grad || adj[idx].size() == 0 || n.op == Op::Leaf) continue;
    const Tensor& g = adj[idx];
    const bool ga = n.a != kNone && nodes_[n.a].requires_grad;
    const bool gb = n.b != kNone && nodes_[n.b].requires_grad;
    const Tensor* va = n.a == kNone ? nullptr : &nodes_[n.a].value;
    const Tensor* vb = n.b == kNone ? nullptr : &nodes_[n.b].value;

    switch (n.op) {
      case Op::Leaf: break;
      case Op::MatMul: {
        if (ga) {
          Tensor t = Tensor::uninitialized(va->rows(), va->cols());
          t.as_matrix().noalias() = g.as_matrix() * vb->as_matrix().transpose();
          accumulate(adj[n.a], std::move(t));
        }
        if (gb) {
          Tensor t = Tensor::uninitialized(vb->rows(), vb->cols());
          t.as_matrix().noalias() = va->as_matrix().transpose() * g.as_matrix();
          accumulate(adj[n.b], std::move(t));
        }
        break;
      }
      case Op::MatMulTN: {
        if (ga) {
          Tensor t = Tensor::uninitialized(va->rows(), va->cols());
          t.as_matrix().noalias() = vb->as_matrix() * g.as_matrix().transpose();
          accumulate(adj[n.a], std::move(t));
        }
        if (gb) {
          Tensor t = Tensor::uninitialized(vb->rows(), vb->cols());
          t.as_matrix().noalias() = va->as_matrix() * g.as_matrix();
          accumulate(adj[n.b], std::move(t));
        }
        break;
      }
      case Op::Add:
        if (ga) accumulate(adj[n.a], g);
        if (gb) accumulate(adj[n.b], g);
        break;
      case Op::Sub:
        if (ga) accumulate(adj[n.a], g);
        if (gb) accumulate_scaled(adj[n.b], g, -1.0);
        break;
      case Op::Mul:
        if (ga) {
          Tensor t = Tensor::uninitialized_like(g);
          t.as_matrix() = g.as_matrix().cwiseProduct(vb->as_matrix());
          accumulate(adj[n.a], std::move(t));
        }
        if (gb) {
          Tensor t = Tensor::uninitialized_like(g);
          t.as_matrix() = g.as_matrix().cwiseProduct(va->as_matrix());
          accumulate(adj[n.b], std::move(t));
        }
        break;
      case Op::Scale:
        if (ga) accumulate_scaled(adj[n.a], g, n.scalar);
        break;
      case Op::AddCol:
        if (ga) accumulate(adj[n.a], g);
        if (gb) {
          Tensor t = Tensor::uninitialized(vb->rows(), 1);
          t.as_matrix() = g.as_matrix().rowwise().sum();
          accumulate(adj[n.b], std::move(t));
        }
        break;
      case Op::ScaleRows:
        if (ga) {
          Tensor t = Tensor::uninitialized_like(g);
          t.as_matrix() = vb->as_matrix().col(0).asDiagonal() * g.as_matrix();
          accumulate(adj[n.a], std::move(t));
        }
        if (gb) {
          Tensor t = Tensor::uninitialized(vb->rows(), 1);
          t.as_matrix() = g.as_matrix().cwiseProduct(va->as_matrix()).rowwise().sum();
          accumulate(adj[n.b], std::move(t));
        }
        break;
      case Op::Unary:
        if (ga) {
          Tensor t = Tensor::uninitialized_like(g);
          t.as_matrix() = g.as_matrix().cwiseProduct(n.aux.as_matrix());
          accumulate(adj[n.a], std::move(t));
        }
        break;
      case Op::ColSum:
        if (ga) {
          Tensor t = Tensor::uninitialized(va->rows(), va->cols());
          t.as_matrix().rowwise() = g.as_matrix().row(0);
          accumulate(adj[n.a], std::move(t));
        }
        break;
      case Op::RowSum:
        if (ga) {
          Tensor t = Tensor::uninitialized(va->rows(), va->cols());
          t.as_matrix().colwise() = g.as_matrix().col(0);
          accumulate(adj[n.a], std::move(t));
        }
        break;
      case Op::Sum:
        if (ga) {
          Tensor t(va->shape());
          t.as_matrix().setConstant(g.item());
          accumulate(adj[n.a], std::move(t));
        }
        break;
      case Op::Dot:
        if (ga) accumulate_scaled(adj[n.a], *vb, g.item());
        if (gb) accumulate_scaled(adj[n.b], *va, g.item());
        break;
      case Op::Trace:
        if (ga) accumulate_scaled(adj[n.a], Tensor::identity(va->rows()), g.item());
        break;
      case Op::Columns:
        if (ga) {
          if (adj[n.a].size() == 0) adj[n.a] = Tensor::zeros_like(*va);
          adj[n.a].as_matrix().middleCols(static_cast<Eigen::Index>(n.first),
                                          static_cast<Eigen::Index>(n.count)) += g.as_matrix();
        }
        break;
      case Op::Field:
        if (ga) {
          Tensor t = Tensor::zeros_like(*va);
          std::vector<double> x(va->rows()), grad(va->rows());
          for (std::size_t j = 0; j < va->cols(); ++j) {
            for (std::size_t i = 0; i < va->rows(); ++i) x[i] = (*va)(i, j);
            n.field->gradient(x, grad);
            for (std::size_t i = 0; i < va->rows(); ++i) t(i, j) = g(0, j) * grad[i];
          }
          accumulate(adj[n.a], std::move(t));
        }
        break;
      case Op::PairMean:
        if (ga) {
          const std::size_t d = va->rows();
          const std::size_t cnt = va->cols();
          Tensor t = Tensor::zeros_like(*va);
          std::vector<std::vector<double>> cols(cnt, std::vector<double>(d));
          for (std::size_t j = 0; j < cnt; ++j)
            for (std::size_t i = 0; i < d; ++i) cols[j][i] = (*va)(i, j);
          std::vector<double> grad(d);
          const double inv_n = 1.0 / static_cast<double>(cnt);
          for (std::size_t j = 0; j < cnt; ++j) {
            for (std::size_t l = 0; l < cnt; ++l) {
              const double w = (g(0, j) + g(0, l)) * inv_n;
              if (w == 0.0) continue;
              n.pair->gradient_first(cols[j], cols[l], grad);
              for (std::size_t i = 0; i < d; ++i) t(i, j) += w * grad[i];
            }
          }
          accumulate(adj[n.a], std::move(t));
        }
        break;
    }
    if (!nodes_[idx].is_param) adj[idx] = Tensor();
  }

  Gradients out;
  for (const auto& [id, index] : params_) {
    out[id] = adj[index].size() ? std::move(adj[index]) : Tensor::zeros_like(nodes_[index].value);
  }
  return out;
}

}  // namespace deepjko::ad
