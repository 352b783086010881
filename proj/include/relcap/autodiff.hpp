#pragma once

// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// Every value is a 2-D array of doubles; vectors are 1 x n rows. Primitives
// append a node to the Record that owns their inputs, so node inputs always
// precede the node and a reverse sweep over creation order is a valid
// topological order for backpropagation.

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace relcap {
class ParamStore;
}

namespace relcap::ad {

struct Shape {
  int rows = 1;
  int cols = 1;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
  [[nodiscard]] std::string str() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

enum class OpTag : std::uint8_t {
  kLeaf,
  kConstant,
  kParam,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kConcat,
  kSlice,
  kSum,
  kMaxOf,
  kSigmoid,
  kTanh,
  kLog,
  kExp,
  kSoftmax,
  kLogSoftmax,
  kLeakyRelu,
  kSoftplus,
  kEmbedding,
  kTranspose,
  kStopGradient,
};

std::string_view op_name(OpTag tag);

class Record;

// Handle to a node of a Record. Cheap to copy; valid as long as the Record.
class DTensor {
 public:
  DTensor() = default;

  [[nodiscard]] bool valid() const { return rec_ != nullptr; }
  [[nodiscard]] Record& record() const;
  [[nodiscard]] int id() const { return id_; }
  [[nodiscard]] Shape shape() const;
  [[nodiscard]] int rows() const { return shape().rows; }
  [[nodiscard]] int cols() const { return shape().cols; }
  [[nodiscard]] std::span<const double> values() const;
  [[nodiscard]] double at(int r, int c) const;
  // Single element of a 1 x 1 tensor.
  [[nodiscard]] double item() const;

 private:
  friend class Record;
  DTensor(Record* rec, int id) : rec_(rec), id_(id) {}

  Record* rec_ = nullptr;
  int id_ = -1;
};

enum class Axis { kRows, kCols, kAll };

class Record {
 public:
  // `params` may be null when the graph never touches model parameters.
  explicit Record(const ParamStore* params = nullptr);
  Record(const Record&) = delete;
  Record& operator=(const Record&) = delete;

  DTensor leaf(Shape shape, std::vector<double> values);
  DTensor constant(Shape shape, std::vector<double> values);
  DTensor zeros(Shape shape) { return constant(shape, std::vector<double>(shape.size(), 0.0)); }
  // Leaf node for parameter `index` of the bound ParamStore; created once
  // per record and reused on later calls.
  DTensor param(int index);

  // Full reverse sweep from a scalar loss. Clears gradients left by any
  // earlier sweep.
  void backward(DTensor loss);
  // Reverse sweep that only propagates along nodes that depend on one of
  // `wrt`; gradients of nodes outside that cone are left at zero.
  void backward(DTensor loss, std::span<const DTensor> wrt);

  // Gradient from the most recent sweep (zeros when the node was not reached).
  [[nodiscard]] std::vector<double> grad(DTensor t) const;
  [[nodiscard]] bool has_grad(DTensor t) const;

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] const ParamStore* params() const { return params_; }
  // (param index, node id) for every parameter used in this record.
  [[nodiscard]] std::vector<std::pair<int, int>> param_nodes() const;

  // When enabled every primitive output is checked for NaN/Inf. Defaults to
  // on in debug builds.
  void set_check_finite(bool on) { check_finite_ = on; }

  struct Node {
    OpTag op = OpTag::kLeaf;
    Shape shape;
    std::vector<double> value;
    std::vector<int> inputs;
    std::vector<int> iaux;  // op-specific integer state
    double daux = 0.0;      // op-specific scalar state
    std::vector<double> grad;
  };

  [[nodiscard]] const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  DTensor push(Node node);

 private:
  void sweep(int loss_id, const std::vector<char>* active);
  void propagate(int id);
  [[nodiscard]] bool wants(int id) const;
  std::vector<double>& grad_slot(int id);

  const ParamStore* params_;
  std::vector<Node> nodes_;
  std::vector<int> param_cache_;
  bool check_finite_;
  const std::vector<char>* active_ = nullptr;
};

// --- primitives -----------------------------------------------------------

DTensor matmul(DTensor a, DTensor b);
// Elementwise ops. `b` may also be a 1 x n row (broadcast over rows of a),
// an m x 1 column (broadcast over columns) or a 1 x 1 scalar.
DTensor add(DTensor a, DTensor b);
DTensor sub(DTensor a, DTensor b);
DTensor mul(DTensor a, DTensor b);
DTensor scale(DTensor a, double s);
// Concatenates along columns; every part has the same row count.
DTensor concat(std::span<const DTensor> parts);
DTensor concat(std::initializer_list<DTensor> parts);
DTensor slice(DTensor a, int row0, int row1, int col0, int col1);
DTensor slice_cols(DTensor a, int col0, int col1);
DTensor slice_rows(DTensor a, int row0, int row1);
DTensor sum(DTensor a, Axis axis = Axis::kAll);
// Elementwise maximum across equally shaped tensors. Ties route the
// gradient to the earliest argument.
DTensor max_of(std::span<const DTensor> parts);
DTensor sigmoid(DTensor a);
DTensor tanh(DTensor a);
DTensor log(DTensor a);
DTensor exp(DTensor a);
// Row-wise softmax / log-softmax with max subtraction.
DTensor softmax(DTensor a);
DTensor log_softmax(DTensor a);
DTensor leaky_relu(DTensor a, double slope);
// log(1 + exp(a)) in overflow-free form.
DTensor softplus(DTensor a);
// Rows `indices` of `table`, in order. Out-of-range indices throw.
DTensor embedding(DTensor table, std::span<const int> indices);
DTensor transpose(DTensor a);
// Identity forward; blocks gradient flow.
DTensor stop_gradient(DTensor a);

}  // namespace relcap::ad
