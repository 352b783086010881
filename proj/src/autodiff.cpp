#include "relcap/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "relcap/error.hpp"
#include "relcap/params.hpp"

namespace relcap::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_mat(const std::vector<double>& v, Shape s) { return ConstMap(v.data(), s.rows, s.cols); }
MutMap as_mat(std::vector<double>& v, Shape s) { return MutMap(v.data(), s.rows, s.cols); }

enum Broadcast : int { kSame = 0, kRow = 1, kCol = 2, kScalar = 3 };

[[noreturn]] void shape_fail(OpTag tag, Shape a, Shape b, const char* what) {
  std::ostringstream os;
  os << op_name(tag) << ": " << what << " (" << a.str() << " vs " << b.str() << ")";
  throw ShapeError(os.str());
}

Record& same_record(OpTag tag, DTensor a, DTensor b) {
  if (!a.valid() || !b.valid()) throw Error(std::string(op_name(tag)) + ": uninitialized tensor");
  if (&a.record() != &b.record()) throw Error(std::string(op_name(tag)) + ": tensors from different records");
  return a.record();
}

Record& record_of(OpTag tag, DTensor a) {
  if (!a.valid()) throw Error(std::string(op_name(tag)) + ": uninitialized tensor");
  return a.record();
}

int broadcast_mode(OpTag tag, Shape a, Shape b) {
  if (a == b) return kSame;
  if (b.rows == 1 && b.cols == 1) return kScalar;
  if (b.rows == 1 && b.cols == a.cols) return kRow;
  if (b.cols == 1 && b.rows == a.rows) return kCol;
  shape_fail(tag, a, b, "incompatible shapes");
}

// Index into b for element (r, c) of a under broadcast `mode`.
inline std::size_t bidx(int mode, int r, int c, int cols) {
  switch (mode) {
    case kSame: return static_cast<std::size_t>(r) * cols + c;
    case kRow: return static_cast<std::size_t>(c);
    case kCol: return static_cast<std::size_t>(r);
    default: return 0;
  }
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

DTensor unary(OpTag tag, DTensor a, double daux = 0.0) {
  Record& rec = record_of(tag, a);
  const auto& in = rec.node(a.id());
  Record::Node n;
  n.op = tag;
  n.shape = in.shape;
  n.inputs = {a.id()};
  n.daux = daux;
  n.value.resize(in.value.size());
  const auto& x = in.value;
  auto& y = n.value;
  switch (tag) {
    case OpTag::kSigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
      break;
    case OpTag::kTanh:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
      break;
    case OpTag::kLog:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::log(x[i]);
      break;
    case OpTag::kExp:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::exp(x[i]);
      break;
    case OpTag::kLeakyRelu:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : daux * x[i];
      break;
    case OpTag::kSoftplus:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::max(x[i], 0.0) + std::log1p(std::exp(-std::abs(x[i])));
      break;
    case OpTag::kScale:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = daux * x[i];
      break;
    case OpTag::kStopGradient:
      y = x;
      break;
    default:
      throw Error("unary: unsupported op");
  }
  return rec.push(std::move(n));
}

DTensor binary(OpTag tag, DTensor a, DTensor b) {
  Record& rec = same_record(tag, a, b);
  const auto& na = rec.node(a.id());
  const auto& nb = rec.node(b.id());
  const int mode = broadcast_mode(tag, na.shape, nb.shape);
  Record::Node n;
  n.op = tag;
  n.shape = na.shape;
  n.inputs = {a.id(), b.id()};
  n.iaux = {mode};
  n.value.resize(na.value.size());
  const int rows = na.shape.rows;
  const int cols = na.shape.cols;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      const double x = na.value[i];
      const double y = nb.value[bidx(mode, r, c, cols)];
      switch (tag) {
        case OpTag::kAdd: n.value[i] = x + y; break;
        case OpTag::kSub: n.value[i] = x - y; break;
        case OpTag::kMul: n.value[i] = x * y; break;
        default: throw Error("binary: unsupported op");
      }
    }
  }
  return rec.push(std::move(n));
}

}  // namespace

std::string Shape::str() const {
  std::ostringstream os;
  os << "[" << rows << "," << cols << "]";
  return os.str();
}

std::string_view op_name(OpTag tag) {
  switch (tag) {
    case OpTag::kLeaf: return "leaf";
    case OpTag::kConstant: return "constant";
    case OpTag::kParam: return "param";
    case OpTag::kMatMul: return "matmul";
    case OpTag::kAdd: return "add";
    case OpTag::kSub: return "sub";
    case OpTag::kMul: return "mul";
    case OpTag::kScale: return "scale";
    case OpTag::kConcat: return "concat";
    case OpTag::kSlice: return "slice";
    case OpTag::kSum: return "sum";
    case OpTag::kMaxOf: return "max_of";
    case OpTag::kSigmoid: return "sigmoid";
    case OpTag::kTanh: return "tanh";
    case OpTag::kLog: return "log";
    case OpTag::kExp: return "exp";
    case OpTag::kSoftmax: return "softmax";
    case OpTag::kLogSoftmax: return "log_softmax";
    case OpTag::kLeakyRelu: return "leaky_relu";
    case OpTag::kSoftplus: return "softplus";
    case OpTag::kEmbedding: return "embedding";
    case OpTag::kTranspose: return "transpose";
    case OpTag::kStopGradient: return "stop_gradient";
  }
  return "unknown";
}

// --- DTensor ---------------------------------------------------------------

Record& DTensor::record() const {
  if (rec_ == nullptr) throw Error("DTensor: uninitialized tensor");
  return *rec_;
}

Shape DTensor::shape() const { return record().node(id_).shape; }

std::span<const double> DTensor::values() const { return record().node(id_).value; }

double DTensor::at(int r, int c) const {
  const auto& n = record().node(id_);
  if (r < 0 || r >= n.shape.rows || c < 0 || c >= n.shape.cols) throw ShapeError("DTensor::at out of range");
  return n.value[static_cast<std::size_t>(r) * n.shape.cols + c];
}

double DTensor::item() const {
  const auto& n = record().node(id_);
  if (n.value.size() != 1) throw ShapeError("DTensor::item on non-scalar " + n.shape.str());
  return n.value[0];
}

// --- Record ----------------------------------------------------------------

Record::Record(const ParamStore* params)
    : params_(params),
#ifdef NDEBUG
      check_finite_(false)
#else
      check_finite_(true)
#endif
{
  nodes_.reserve(1024);
}

DTensor Record::push(Node node) {
  if (node.value.size() != node.shape.size()) {
    throw ShapeError(std::string(op_name(node.op)) + ": value length does not match shape " + node.shape.str());
  }
  if (check_finite_) {
    for (double v : node.value) {
      if (!std::isfinite(v)) throw NumericError(std::string(op_name(node.op)) + ": non-finite output");
    }
  }
  nodes_.push_back(std::move(node));
  return DTensor(this, static_cast<int>(nodes_.size()) - 1);
}

DTensor Record::leaf(Shape shape, std::vector<double> values) {
  Node n;
  n.op = OpTag::kLeaf;
  n.shape = shape;
  n.value = std::move(values);
  return push(std::move(n));
}

DTensor Record::constant(Shape shape, std::vector<double> values) {
  Node n;
  n.op = OpTag::kConstant;
  n.shape = shape;
  n.value = std::move(values);
  return push(std::move(n));
}

DTensor Record::param(int index) {
  if (params_ == nullptr) throw Error("Record::param: record has no parameter store");
  if (index < 0 || index >= params_->size()) throw Error("Record::param: index out of range");
  if (param_cache_.empty()) param_cache_.assign(static_cast<std::size_t>(params_->size()), -1);
  int& slot = param_cache_[static_cast<std::size_t>(index)];
  if (slot >= 0) return DTensor(this, slot);
  const Parameter& p = (*params_)[index];
  Node n;
  n.op = OpTag::kParam;
  n.shape = p.shape;
  n.value = p.value;
  n.iaux = {index};
  const DTensor t = push(std::move(n));
  slot = t.id();
  return t;
}

std::vector<std::pair<int, int>> Record::param_nodes() const {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < param_cache_.size(); ++i) {
    if (param_cache_[i] >= 0) out.emplace_back(static_cast<int>(i), param_cache_[i]);
  }
  return out;
}

std::vector<double>& Record::grad_slot(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

bool Record::has_grad(DTensor t) const { return !node(t.id()).grad.empty(); }

std::vector<double> Record::grad(DTensor t) const {
  const auto& n = node(t.id());
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

void Record::backward(DTensor loss) { sweep(loss.id(), nullptr); }

void Record::backward(DTensor loss, std::span<const DTensor> wrt) {
  if (&loss.record() != this) throw Error("backward: loss from a different record");
  std::vector<char> active(nodes_.size(), 0);
  for (const DTensor& t : wrt) {
    if (&t.record() != this) throw Error("backward: wrt tensor from a different record");
    active[static_cast<std::size_t>(t.id())] = 1;
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (active[i]) continue;
    for (int in : nodes_[i].inputs) {
      if (active[static_cast<std::size_t>(in)]) {
        active[i] = 1;
        break;
      }
    }
  }
  sweep(loss.id(), &active);
}

void Record::sweep(int loss_id, const std::vector<char>* active) {
  if (nodes_.empty()) throw Error("backward: empty record");
  if (loss_id < 0 || loss_id >= static_cast<int>(nodes_.size())) throw Error("backward: loss not in record");
  if (nodes_[static_cast<std::size_t>(loss_id)].value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + nodes_[static_cast<std::size_t>(loss_id)].shape.str());
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_slot(loss_id)[0] = 1.0;
  for (int id = loss_id; id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() || n.inputs.empty()) continue;
    if (active != nullptr && !(*active)[static_cast<std::size_t>(id)]) continue;
    active_ = active;
    propagate(id);
  }
  active_ = nullptr;
}

bool Record::wants(int id) const { return active_ == nullptr || (*active_)[static_cast<std::size_t>(id)]; }

void Record::propagate(int id) {
  // Node references stay valid: no nodes are appended during a sweep.
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  const std::vector<double>& g = n.grad;
  switch (n.op) {
    case OpTag::kMatMul: {
      const Node& a = nodes_[static_cast<std::size_t>(n.inputs[0])];
      const Node& b = nodes_[static_cast<std::size_t>(n.inputs[1])];
      const ConstMap G = as_mat(g, n.shape);
      if (wants(n.inputs[0])) {
        auto& ga = grad_slot(n.inputs[0]);
        as_mat(ga, a.shape).noalias() += G * as_mat(b.value, b.shape).transpose();
      }
      if (wants(n.inputs[1])) {
        auto& gb = grad_slot(n.inputs[1]);
        as_mat(gb, b.shape).noalias() += as_mat(a.value, a.shape).transpose() * G;
      }
      break;
    }
    case OpTag::kAdd:
    case OpTag::kSub:
    case OpTag::kMul: {
      const int mode = n.iaux[0];
      const Node& a = nodes_[static_cast<std::size_t>(n.inputs[0])];
      const Node& b = nodes_[static_cast<std::size_t>(n.inputs[1])];
      const int rows = n.shape.rows;
      const int cols = n.shape.cols;
      const bool want_a = wants(n.inputs[0]);
      const bool want_b = wants(n.inputs[1]);
      std::vector<double>* ga = want_a ? &grad_slot(n.inputs[0]) : nullptr;
      std::vector<double>* gb = want_b ? &grad_slot(n.inputs[1]) : nullptr;
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          const std::size_t i = static_cast<std::size_t>(r) * cols + c;
          const std::size_t j = bidx(mode, r, c, cols);
          const double gi = g[i];
          if (n.op == OpTag::kMul) {
            if (ga) (*ga)[i] += gi * b.value[j];
            if (gb) (*gb)[j] += gi * a.value[i];
          } else {
            if (ga) (*ga)[i] += gi;
            if (gb) (*gb)[j] += n.op == OpTag::kAdd ? gi : -gi;
          }
        }
      }
      break;
    }
    case OpTag::kScale: {
      if (!wants(n.inputs[0])) break;
      auto& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.daux * g[i];
      break;
    }
    case OpTag::kConcat: {
      // iaux holds the starting column of each part.
      const int cols = n.shape.cols;
      for (std::size_t p = 0; p < n.inputs.size(); ++p) {
        if (!wants(n.inputs[p])) continue;
        const Shape ps = nodes_[static_cast<std::size_t>(n.inputs[p])].shape;
        auto& gp = grad_slot(n.inputs[p]);
        const int c0 = n.iaux[p];
        for (int r = 0; r < ps.rows; ++r) {
          for (int c = 0; c < ps.cols; ++c) {
            gp[static_cast<std::size_t>(r) * ps.cols + c] += g[static_cast<std::size_t>(r) * cols + c0 + c];
          }
        }
      }
      break;
    }
    case OpTag::kSlice: {
      if (!wants(n.inputs[0])) break;
      const Shape as = nodes_[static_cast<std::size_t>(n.inputs[0])].shape;
      auto& ga = grad_slot(n.inputs[0]);
      const int r0 = n.iaux[0];
      const int c0 = n.iaux[2];
      for (int r = 0; r < n.shape.rows; ++r) {
        for (int c = 0; c < n.shape.cols; ++c) {
          ga[static_cast<std::size_t>(r0 + r) * as.cols + c0 + c] += g[static_cast<std::size_t>(r) * n.shape.cols + c];
        }
      }
      break;
    }
    case OpTag::kSum: {
      if (!wants(n.inputs[0])) break;
      const Shape as = nodes_[static_cast<std::size_t>(n.inputs[0])].shape;
      auto& ga = grad_slot(n.inputs[0]);
      const auto axis = static_cast<Axis>(n.iaux[0]);
      for (int r = 0; r < as.rows; ++r) {
        for (int c = 0; c < as.cols; ++c) {
          const double gi = axis == Axis::kAll ? g[0] : axis == Axis::kRows ? g[static_cast<std::size_t>(c)] : g[static_cast<std::size_t>(r)];
          ga[static_cast<std::size_t>(r) * as.cols + c] += gi;
        }
      }
      break;
    }
    case OpTag::kMaxOf: {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const int src = n.inputs[static_cast<std::size_t>(n.iaux[i])];
        if (!wants(src)) continue;
        grad_slot(src)[i] += g[i];
      }
      break;
    }
    case OpTag::kSigmoid: {
      if (!wants(n.inputs[0])) break;
      auto& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      break;
    }
    case OpTag::kTanh: {
      if (!wants(n.inputs[0])) break;
      auto& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      break;
    }
    case OpTag::kLog: {
      if (!wants(n.inputs[0])) break;
      const auto& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
      auto& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
      break;
    }
    case OpTag::kExp: {
      if (!wants(n.inputs[0])) break;
      auto& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i];
      break;
    }
    case OpTag::kSoftmax: {
      if (!wants(n.inputs[0])) break;
      auto& ga = grad_slot(n.inputs[0]);
      const int cols = n.shape.cols;
      for (int r = 0; r < n.shape.rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * cols;
        double dot = 0.0;
        for (int c = 0; c < cols; ++c) dot += g[off + c] * n.value[off + c];
        for (int c = 0; c < cols; ++c) ga[off + c] += n.value[off + c] * (g[off + c] - dot);
      }
      break;
    }
    case OpTag::kLogSoftmax: {
      if (!wants(n.inputs[0])) break;
      auto& ga = grad_slot(n.inputs[0]);
      const int cols = n.shape.cols;
      for (int r = 0; r < n.shape.rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * cols;
        double total = 0.0;
        for (int c = 0; c < cols; ++c) total += g[off + c];
        for (int c = 0; c < cols; ++c) ga[off + c] += g[off + c] - std::exp(n.value[off + c]) * total;
      }
      break;
    }
    case OpTag::kLeakyRelu: {
      if (!wants(n.inputs[0])) break;
      const auto& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
      auto& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : n.daux * g[i];
      break;
    }
    case OpTag::kSoftplus: {
      if (!wants(n.inputs[0])) break;
      const auto& x = nodes_[static_cast<std::size_t>(n.inputs[0])].value;
      auto& ga = grad_slot(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sigmoid_scalar(x[i]);
      break;
    }
    case OpTag::kEmbedding: {
      if (!wants(n.inputs[0])) break;
      auto& ga = grad_slot(n.inputs[0]);
      const int d = n.shape.cols;
      for (std::size_t r = 0; r < n.iaux.size(); ++r) {
        const std::size_t dst = static_cast<std::size_t>(n.iaux[r]) * d;
        for (int c = 0; c < d; ++c) ga[dst + c] += g[r * d + c];
      }
      break;
    }
    case OpTag::kTranspose: {
      if (!wants(n.inputs[0])) break;
      const Shape as = nodes_[static_cast<std::size_t>(n.inputs[0])].shape;
      auto& ga = grad_slot(n.inputs[0]);
      as_mat(ga, as) += as_mat(g, n.shape).transpose();
      break;
    }
    case OpTag::kStopGradient:
    case OpTag::kLeaf:
    case OpTag::kConstant:
    case OpTag::kParam:
      break;
  }
}

// --- primitives ------------------------------------------------------------

DTensor matmul(DTensor a, DTensor b) {
  Record& rec = same_record(OpTag::kMatMul, a, b);
  const auto& na = rec.node(a.id());
  const auto& nb = rec.node(b.id());
  if (na.shape.cols != nb.shape.rows) shape_fail(OpTag::kMatMul, na.shape, nb.shape, "inner dimensions differ");
  Record::Node n;
  n.op = OpTag::kMatMul;
  n.shape = {na.shape.rows, nb.shape.cols};
  n.inputs = {a.id(), b.id()};
  n.value.assign(n.shape.size(), 0.0);
  as_mat(n.value, n.shape).noalias() = as_mat(na.value, na.shape) * as_mat(nb.value, nb.shape);
  return rec.push(std::move(n));
}

DTensor add(DTensor a, DTensor b) { return binary(OpTag::kAdd, a, b); }
DTensor sub(DTensor a, DTensor b) { return binary(OpTag::kSub, a, b); }
DTensor mul(DTensor a, DTensor b) { return binary(OpTag::kMul, a, b); }
DTensor scale(DTensor a, double s) { return unary(OpTag::kScale, a, s); }

DTensor concat(std::span<const DTensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Record& rec = record_of(OpTag::kConcat, parts[0]);
  const Shape first = rec.node(parts[0].id()).shape;
  Record::Node n;
  n.op = OpTag::kConcat;
  int cols = 0;
  for (const DTensor& p : parts) {
    same_record(OpTag::kConcat, parts[0], p);
    const Shape s = rec.node(p.id()).shape;
    if (s.rows != first.rows) shape_fail(OpTag::kConcat, first, s, "row counts differ");
    n.inputs.push_back(p.id());
    n.iaux.push_back(cols);
    cols += s.cols;
  }
  n.shape = {first.rows, cols};
  n.value.resize(n.shape.size());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& src = rec.node(parts[p].id());
    for (int r = 0; r < src.shape.rows; ++r) {
      std::copy_n(src.value.begin() + static_cast<std::ptrdiff_t>(r) * src.shape.cols, src.shape.cols,
                  n.value.begin() + static_cast<std::ptrdiff_t>(r) * cols + n.iaux[p]);
    }
  }
  return rec.push(std::move(n));
}

DTensor concat(std::initializer_list<DTensor> parts) {
  return concat(std::span<const DTensor>(parts.begin(), parts.size()));
}

DTensor slice(DTensor a, int row0, int row1, int col0, int col1) {
  Record& rec = record_of(OpTag::kSlice, a);
  const auto& na = rec.node(a.id());
  if (row0 < 0 || row1 > na.shape.rows || row0 >= row1 || col0 < 0 || col1 > na.shape.cols || col0 >= col1) {
    std::ostringstream os;
    os << "slice: range [" << row0 << ":" << row1 << ", " << col0 << ":" << col1 << "] invalid for " << na.shape.str();
    throw ShapeError(os.str());
  }
  Record::Node n;
  n.op = OpTag::kSlice;
  n.shape = {row1 - row0, col1 - col0};
  n.inputs = {a.id()};
  n.iaux = {row0, row1, col0, col1};
  n.value.resize(n.shape.size());
  for (int r = row0; r < row1; ++r) {
    std::copy_n(na.value.begin() + static_cast<std::ptrdiff_t>(r) * na.shape.cols + col0, n.shape.cols,
                n.value.begin() + static_cast<std::ptrdiff_t>(r - row0) * n.shape.cols);
  }
  return rec.push(std::move(n));
}

DTensor slice_cols(DTensor a, int col0, int col1) { return slice(a, 0, a.rows(), col0, col1); }
DTensor slice_rows(DTensor a, int row0, int row1) { return slice(a, row0, row1, 0, a.cols()); }

DTensor sum(DTensor a, Axis axis) {
  Record& rec = record_of(OpTag::kSum, a);
  const auto& na = rec.node(a.id());
  Record::Node n;
  n.op = OpTag::kSum;
  n.inputs = {a.id()};
  n.iaux = {static_cast<int>(axis)};
  const int rows = na.shape.rows;
  const int cols = na.shape.cols;
  switch (axis) {
    case Axis::kAll: n.shape = {1, 1}; break;
    case Axis::kRows: n.shape = {1, cols}; break;
    case Axis::kCols: n.shape = {rows, 1}; break;
  }
  n.value.assign(n.shape.size(), 0.0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = na.value[static_cast<std::size_t>(r) * cols + c];
      switch (axis) {
        case Axis::kAll: n.value[0] += v; break;
        case Axis::kRows: n.value[static_cast<std::size_t>(c)] += v; break;
        case Axis::kCols: n.value[static_cast<std::size_t>(r)] += v; break;
      }
    }
  }
  return rec.push(std::move(n));
}

DTensor max_of(std::span<const DTensor> parts) {
  if (parts.empty()) throw ShapeError("max_of: no inputs");
  Record& rec = record_of(OpTag::kMaxOf, parts[0]);
  const Shape s = rec.node(parts[0].id()).shape;
  Record::Node n;
  n.op = OpTag::kMaxOf;
  n.shape = s;
  for (const DTensor& p : parts) {
    same_record(OpTag::kMaxOf, parts[0], p);
    const Shape ps = rec.node(p.id()).shape;
    if (!(ps == s)) shape_fail(OpTag::kMaxOf, s, ps, "shapes differ");
    n.inputs.push_back(p.id());
  }
  n.value = rec.node(parts[0].id()).value;
  n.iaux.assign(s.size(), 0);
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const auto& v = rec.node(parts[p].id()).value;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] > n.value[i]) {
        n.value[i] = v[i];
        n.iaux[i] = static_cast<int>(p);
      }
    }
  }
  return rec.push(std::move(n));
}

DTensor sigmoid(DTensor a) { return unary(OpTag::kSigmoid, a); }
DTensor tanh(DTensor a) { return unary(OpTag::kTanh, a); }
DTensor log(DTensor a) { return unary(OpTag::kLog, a); }
DTensor exp(DTensor a) { return unary(OpTag::kExp, a); }
DTensor leaky_relu(DTensor a, double slope) { return unary(OpTag::kLeakyRelu, a, slope); }
DTensor softplus(DTensor a) { return unary(OpTag::kSoftplus, a); }
DTensor stop_gradient(DTensor a) { return unary(OpTag::kStopGradient, a); }

namespace {

DTensor row_softmax(OpTag tag, DTensor a) {
  Record& rec = record_of(tag, a);
  const auto& na = rec.node(a.id());
  Record::Node n;
  n.op = tag;
  n.shape = na.shape;
  n.inputs = {a.id()};
  n.value.resize(na.value.size());
  const int cols = na.shape.cols;
  for (int r = 0; r < na.shape.rows; ++r) {
    const std::size_t off = static_cast<std::size_t>(r) * cols;
    double mx = na.value[off];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, na.value[off + c]);
    double total = 0.0;
    for (int c = 0; c < cols; ++c) total += std::exp(na.value[off + c] - mx);
    if (tag == OpTag::kSoftmax) {
      for (int c = 0; c < cols; ++c) n.value[off + c] = std::exp(na.value[off + c] - mx) / total;
    } else {
      const double lse = mx + std::log(total);
      for (int c = 0; c < cols; ++c) n.value[off + c] = na.value[off + c] - lse;
    }
  }
  return rec.push(std::move(n));
}

}  // namespace

DTensor softmax(DTensor a) { return row_softmax(OpTag::kSoftmax, a); }
DTensor log_softmax(DTensor a) { return row_softmax(OpTag::kLogSoftmax, a); }

DTensor embedding(DTensor table, std::span<const int> indices) {
  Record& rec = record_of(OpTag::kEmbedding, table);
  const auto& nt = rec.node(table.id());
  if (indices.empty()) throw ShapeError("embedding: empty index list");
  Record::Node n;
  n.op = OpTag::kEmbedding;
  n.shape = {static_cast<int>(indices.size()), nt.shape.cols};
  n.inputs = {table.id()};
  n.iaux.assign(indices.begin(), indices.end());
  n.value.resize(n.shape.size());
  const int d = nt.shape.cols;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const int idx = indices[r];
    if (idx < 0 || idx >= nt.shape.rows) {
      throw ShapeError("embedding: index " + std::to_string(idx) + " out of range for table " + nt.shape.str());
    }
    std::copy_n(nt.value.begin() + static_cast<std::ptrdiff_t>(idx) * d, d,
                n.value.begin() + static_cast<std::ptrdiff_t>(r) * d);
  }
  return rec.push(std::move(n));
}

DTensor transpose(DTensor a) {
  Record& rec = record_of(OpTag::kTranspose, a);
  const auto& na = rec.node(a.id());
  Record::Node n;
  n.op = OpTag::kTranspose;
  n.shape = {na.shape.cols, na.shape.rows};
  n.inputs = {a.id()};
  n.value.resize(na.value.size());
  as_mat(n.value, n.shape) = as_mat(na.value, na.shape).transpose();
  return rec.push(std::move(n));
}

}  // namespace relcap::ad
