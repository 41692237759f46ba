#pragma once

#include <span>
#include <vector>

#include "untl/matrix.hpp"

namespace untl::diff {

// Operation kinds recorded on the tape. Every op evaluates eagerly when the
// node is created, so the tape is always in topological (creation) order and
// backward() is a single reverse sweep.
enum class Op {
  kLeaf,
  kAdd,
  kSub,
  kMul,         // elementwise
  kScalarMul,   // by compile-time constant
  kMatMul,
  kTranspose,
  kRelu,
  kExp,
  kLog,
  kSumAll,      // -> 1x1
  kMeanAll,     // -> 1x1
  kRowSum,      // n x m -> n x 1
  kSoftmaxRows,
  kLogSoftmaxRows,
  kPick,        // out[i] = in[i, index[i]]
  kMinConst,    // elementwise min(x, bound); gradient 0 where x >= bound
  kConcatRows,
  kSliceRows,
  kGatherRows,  // out[i] = in[index[i], :]
  kAddRowVec,   // broadcast a 1 x m vector over rows
  kAddColVec,   // broadcast an n x 1 vector over columns
};

const char* op_name(Op op);

class Graph;

// Cheap handle to a tape node. Valid until Graph::clear().
class Value {
 public:
  Value() = default;

  bool defined() const { return graph_ != nullptr; }
  Graph* graph() const { return graph_; }
  int id() const { return id_; }

  int rows() const;
  int cols() const;
  const Matrix& value() const;
  double scalar() const;  // requires 1x1

  // Accumulated gradient after backward(); zeros if the node never received
  // any (or does not require gradients).
  Matrix grad() const;

 private:
  friend class Graph;
  Value(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape over dense matrices. Nodes are appended eagerly with
// values computed on construction; backward() visits them in exact reverse
// creation order. Gradients accumulate additively across backward calls
// until zero_grad().
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Value leaf(Matrix m, bool requires_grad = false);
  Value constant(double v) { return leaf(Matrix::scalar(v), false); }

  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value scalar_mul(Value a, double k);
  Value matmul(Value a, Value b);
  Value transpose(Value a);
  Value relu(Value a);
  Value exp(Value a);
  Value log(Value a);
  Value sum(Value a);
  Value mean(Value a);
  Value row_sum(Value a);
  Value softmax_rows(Value a);
  Value log_softmax_rows(Value a);
  Value pick(Value a, std::vector<int> column_per_row);
  Value min_const(Value a, double bound);
  Value concat_rows(std::span<const Value> parts);
  Value slice_rows(Value a, int row_begin, int row_end);
  Value gather_rows(Value a, std::vector<int> row_ids);
  Value add_rowvec(Value a, Value v);
  Value add_colvec(Value a, Value v);

  // Seeds d(out)/d(out) = 1 and propagates to every node that requires
  // gradients. `out` must be scalar.
  void backward(Value out);

  void zero_grad();
  void clear();
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::kLeaf;
    int in0 = -1, in1 = -1;
    std::vector<int> extra_in;   // ConcatRows only
    double attr = 0.0;           // ScalarMul factor / MinConst bound
    int range0 = 0, range1 = 0;  // SliceRows
    std::vector<int> index;      // Pick / GatherRows
    Matrix val;
    std::vector<double> grad;    // lazily sized to val.numel()
    bool requires_grad = false;
  };

  friend class Value;

  Value make(Node n);
  Node& at(Value v);
  const Node& at(Value v) const;
  const Node& node_ref(int id) const { return nodes_[static_cast<size_t>(id)]; }
  void check_same_graph(Value a, Value b, const char* op) const;
  std::vector<double>& grad_buf(int id);
  void backward_node(int id);

  std::vector<Node> nodes_;
};

// Convenience operators; both operands must live on the same graph.
Value operator+(Value a, Value b);
Value operator-(Value a, Value b);
Value operator*(Value a, Value b);  // elementwise
Value operator*(Value a, double k);
Value operator*(double k, Value a);

}  // namespace untl::diff
