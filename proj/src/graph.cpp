#include "untl/graph.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace untl::diff {

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                              " and " + b.shape_str());
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail + " (input is " + a.shape_str() +
                              ")");
}

// y += a * b
void matmul_acc(const Matrix& a, const Matrix& b, double* y) {
  const int n = a.rows, k = a.cols, m = b.cols;
  for (int i = 0; i < n; ++i) {
    const double* arow = a.row(i);
    double* yrow = y + static_cast<size_t>(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      if (aik == 0.0) continue;
      const double* brow = b.row(kk);
      for (int j = 0; j < m; ++j) yrow[j] += aik * brow[j];
    }
  }
}

// da += g * b^T  where g: n x m, b: k x m, da: n x k
void matmul_grad_lhs(const double* g, const Matrix& b, int n, double* da) {
  const int k = b.rows, m = b.cols;
  for (int i = 0; i < n; ++i) {
    const double* grow = g + static_cast<size_t>(i) * m;
    double* darow = da + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double* brow = b.row(kk);
      double acc = 0.0;
      for (int j = 0; j < m; ++j) acc += grow[j] * brow[j];
      darow[kk] += acc;
    }
  }
}

// db += a^T * g  where a: n x k, g: n x m, db: k x m
void matmul_grad_rhs(const Matrix& a, const double* g, int m, double* db) {
  const int n = a.rows, k = a.cols;
  for (int i = 0; i < n; ++i) {
    const double* arow = a.row(i);
    const double* grow = g + static_cast<size_t>(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      if (aik == 0.0) continue;
      double* dbrow = db + static_cast<size_t>(kk) * m;
      for (int j = 0; j < m; ++j) dbrow[j] += aik * grow[j];
    }
  }
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScalarMul: return "scalar_mul";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kRelu: return "relu";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSumAll: return "sum";
    case Op::kMeanAll: return "mean";
    case Op::kRowSum: return "row_sum";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kLogSoftmaxRows: return "log_softmax_rows";
    case Op::kPick: return "pick";
    case Op::kMinConst: return "min_const";
    case Op::kConcatRows: return "concat_rows";
    case Op::kSliceRows: return "slice_rows";
    case Op::kGatherRows: return "gather_rows";
    case Op::kAddRowVec: return "add_rowvec";
    case Op::kAddColVec: return "add_colvec";
  }
  return "?";
}

int Value::rows() const { return value().rows; }
int Value::cols() const { return value().cols; }

const Matrix& Value::value() const {
  if (!defined()) throw std::logic_error("Value: undefined handle");
  return graph_->node_ref(id_).val;
}

double Value::scalar() const {
  const Matrix& m = value();
  if (!m.is_scalar())
    throw std::invalid_argument("Value::scalar: node is " + m.shape_str() + ", expected 1x1");
  return m.data[0];
}

Matrix Value::grad() const {
  const Matrix& v = value();
  Matrix g(v.rows, v.cols);
  const auto& buf = graph_->node_ref(id_).grad;
  if (!buf.empty()) g.data = buf;
  return g;
}

Graph::Node& Graph::at(Value v) {
  if (v.graph() != this) throw std::logic_error("Graph: value belongs to a different graph");
  return nodes_[static_cast<size_t>(v.id())];
}

const Graph::Node& Graph::at(Value v) const {
  if (v.graph() != this) throw std::logic_error("Graph: value belongs to a different graph");
  return nodes_[static_cast<size_t>(v.id())];
}

void Graph::check_same_graph(Value a, Value b, const char* op) const {
  if (!a.defined() || !b.defined())
    throw std::logic_error(std::string(op) + ": undefined operand");
  if (a.graph() != this || b.graph() != this)
    throw std::logic_error(std::string(op) + ": operands from different graphs");
}

Value Graph::make(Node n) {
  nodes_.push_back(std::move(n));
  return Value(this, static_cast<int>(nodes_.size()) - 1);
}

Value Graph::leaf(Matrix m, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.val = std::move(m);
  n.requires_grad = requires_grad;
  return make(std::move(n));
}

Value Graph::add(Value a, Value b) {
  check_same_graph(a, b, "add");
  const Matrix &av = at(a).val, &bv = at(b).val;
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Node n;
  n.op = Op::kAdd;
  n.in0 = a.id();
  n.in1 = b.id();
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.val = av;
  for (size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] += bv.data[i];
  return make(std::move(n));
}

Value Graph::sub(Value a, Value b) {
  check_same_graph(a, b, "sub");
  const Matrix &av = at(a).val, &bv = at(b).val;
  if (!av.same_shape(bv)) shape_error("sub", av, bv);
  Node n;
  n.op = Op::kSub;
  n.in0 = a.id();
  n.in1 = b.id();
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.val = av;
  for (size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] -= bv.data[i];
  return make(std::move(n));
}

Value Graph::mul(Value a, Value b) {
  check_same_graph(a, b, "mul");
  const Matrix &av = at(a).val, &bv = at(b).val;
  if (!av.same_shape(bv)) shape_error("mul", av, bv);
  Node n;
  n.op = Op::kMul;
  n.in0 = a.id();
  n.in1 = b.id();
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.val = av;
  for (size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] *= bv.data[i];
  return make(std::move(n));
}

Value Graph::scalar_mul(Value a, double k) {
  Node n;
  n.op = Op::kScalarMul;
  n.in0 = a.id();
  n.attr = k;
  n.requires_grad = at(a).requires_grad;
  n.val = at(a).val;
  for (double& v : n.val.data) v *= k;
  return make(std::move(n));
}

Value Graph::matmul(Value a, Value b) {
  check_same_graph(a, b, "matmul");
  const Matrix &av = at(a).val, &bv = at(b).val;
  if (av.cols != bv.rows) shape_error("matmul", av, bv);
  Node n;
  n.op = Op::kMatMul;
  n.in0 = a.id();
  n.in1 = b.id();
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.val = Matrix(av.rows, bv.cols);
  matmul_acc(av, bv, n.val.data.data());
  return make(std::move(n));
}

Value Graph::transpose(Value a) {
  const Matrix& av = at(a).val;
  Node n;
  n.op = Op::kTranspose;
  n.in0 = a.id();
  n.requires_grad = at(a).requires_grad;
  n.val = Matrix(av.cols, av.rows);
  for (int i = 0; i < av.rows; ++i)
    for (int j = 0; j < av.cols; ++j) n.val.at(j, i) = av.at(i, j);
  return make(std::move(n));
}

Value Graph::relu(Value a) {
  Node n;
  n.op = Op::kRelu;
  n.in0 = a.id();
  n.requires_grad = at(a).requires_grad;
  n.val = at(a).val;
  for (double& v : n.val.data) v = v > 0.0 ? v : 0.0;
  return make(std::move(n));
}

Value Graph::exp(Value a) {
  Node n;
  n.op = Op::kExp;
  n.in0 = a.id();
  n.requires_grad = at(a).requires_grad;
  n.val = at(a).val;
  for (double& v : n.val.data) v = std::exp(v);
  return make(std::move(n));
}

Value Graph::log(Value a) {
  Node n;
  n.op = Op::kLog;
  n.in0 = a.id();
  n.requires_grad = at(a).requires_grad;
  n.val = at(a).val;
  for (double& v : n.val.data) {
    if (v <= 0.0)
      throw std::domain_error("log: non-positive input " + std::to_string(v));
    v = std::log(v);
  }
  return make(std::move(n));
}

Value Graph::sum(Value a) {
  Node n;
  n.op = Op::kSumAll;
  n.in0 = a.id();
  n.requires_grad = at(a).requires_grad;
  double acc = 0.0;
  for (double v : at(a).val.data) acc += v;
  n.val = Matrix::scalar(acc);
  return make(std::move(n));
}

Value Graph::mean(Value a) {
  if (at(a).val.numel() == 0) shape_error("mean", at(a).val, "empty input");
  Node n;
  n.op = Op::kMeanAll;
  n.in0 = a.id();
  n.requires_grad = at(a).requires_grad;
  double acc = 0.0;
  for (double v : at(a).val.data) acc += v;
  n.val = Matrix::scalar(acc / static_cast<double>(at(a).val.numel()));
  return make(std::move(n));
}

Value Graph::row_sum(Value a) {
  const Matrix& av = at(a).val;
  Node n;
  n.op = Op::kRowSum;
  n.in0 = a.id();
  n.requires_grad = at(a).requires_grad;
  n.val = Matrix(av.rows, 1);
  for (int i = 0; i < av.rows; ++i) {
    double acc = 0.0;
    const double* r = av.row(i);
    for (int j = 0; j < av.cols; ++j) acc += r[j];
    n.val.data[static_cast<size_t>(i)] = acc;
  }
  return make(std::move(n));
}

Value Graph::softmax_rows(Value a) {
  const Matrix& av = at(a).val;
  Node n;
  n.op = Op::kSoftmaxRows;
  n.in0 = a.id();
  n.requires_grad = at(a).requires_grad;
  n.val = Matrix(av.rows, av.cols);
  for (int i = 0; i < av.rows; ++i) {
    const double* in = av.row(i);
    double* out = n.val.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < av.cols; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (int j = 0; j < av.cols; ++j) {
      out[j] = std::exp(in[j] - mx);
      z += out[j];
    }
    for (int j = 0; j < av.cols; ++j) out[j] /= z;
  }
  return make(std::move(n));
}

Value Graph::log_softmax_rows(Value a) {
  const Matrix& av = at(a).val;
  Node n;
  n.op = Op::kLogSoftmaxRows;
  n.in0 = a.id();
  n.requires_grad = at(a).requires_grad;
  n.val = Matrix(av.rows, av.cols);
  for (int i = 0; i < av.rows; ++i) {
    const double* in = av.row(i);
    double* out = n.val.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < av.cols; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (int j = 0; j < av.cols; ++j) z += std::exp(in[j] - mx);
    const double lz = mx + std::log(z);
    for (int j = 0; j < av.cols; ++j) out[j] = in[j] - lz;
  }
  return make(std::move(n));
}

Value Graph::pick(Value a, std::vector<int> column_per_row) {
  const Matrix& av = at(a).val;
  if (static_cast<int>(column_per_row.size()) != av.rows)
    shape_error("pick", av, "need one column index per row, got " +
                                std::to_string(column_per_row.size()));
  for (int c : column_per_row)
    if (c < 0 || c >= av.cols)
      shape_error("pick", av, "column index " + std::to_string(c) + " out of range");
  Node n;
  n.op = Op::kPick;
  n.in0 = a.id();
  n.requires_grad = at(a).requires_grad;
  n.index = std::move(column_per_row);
  n.val = Matrix(av.rows, 1);
  for (int i = 0; i < av.rows; ++i)
    n.val.data[static_cast<size_t>(i)] = av.at(i, n.index[static_cast<size_t>(i)]);
  return make(std::move(n));
}

Value Graph::min_const(Value a, double bound) {
  Node n;
  n.op = Op::kMinConst;
  n.in0 = a.id();
  n.attr = bound;
  n.requires_grad = at(a).requires_grad;
  n.val = at(a).val;
  for (double& v : n.val.data) v = v < bound ? v : bound;
  return make(std::move(n));
}

Value Graph::concat_rows(std::span<const Value> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const int cols = at(parts[0]).val.cols;
  int rows = 0;
  for (Value p : parts) {
    if (at(p).val.cols != cols) shape_error("concat_rows", at(parts[0]).val, at(p).val);
    rows += at(p).val.rows;
  }
  Node n;
  n.op = Op::kConcatRows;
  n.requires_grad = false;
  n.val = Matrix(rows, cols);
  int r = 0;
  for (Value p : parts) {
    n.extra_in.push_back(p.id());
    n.requires_grad = n.requires_grad || at(p).requires_grad;
    const Matrix& pv = at(p).val;
    std::copy(pv.data.begin(), pv.data.end(), n.val.row(r));
    r += pv.rows;
  }
  return make(std::move(n));
}

Value Graph::slice_rows(Value a, int row_begin, int row_end) {
  const Matrix& av = at(a).val;
  if (row_begin < 0 || row_end > av.rows || row_begin >= row_end)
    shape_error("slice_rows", av,
                "bad row range [" + std::to_string(row_begin) + ", " + std::to_string(row_end) +
                    ")");
  Node n;
  n.op = Op::kSliceRows;
  n.in0 = a.id();
  n.range0 = row_begin;
  n.range1 = row_end;
  n.requires_grad = at(a).requires_grad;
  n.val = Matrix(row_end - row_begin, av.cols);
  std::copy(av.row(row_begin), av.row(row_begin) + n.val.numel(), n.val.data.begin());
  return make(std::move(n));
}

Value Graph::gather_rows(Value a, std::vector<int> row_ids) {
  const Matrix& av = at(a).val;
  if (row_ids.empty()) shape_error("gather_rows", av, "no row ids");
  for (int r : row_ids)
    if (r < 0 || r >= av.rows)
      shape_error("gather_rows", av, "row id " + std::to_string(r) + " out of range");
  Node n;
  n.op = Op::kGatherRows;
  n.in0 = a.id();
  n.requires_grad = at(a).requires_grad;
  n.index = std::move(row_ids);
  n.val = Matrix(static_cast<int>(n.index.size()), av.cols);
  for (size_t i = 0; i < n.index.size(); ++i) {
    const double* src = av.row(n.index[i]);
    std::copy(src, src + av.cols, n.val.row(static_cast<int>(i)));
  }
  return make(std::move(n));
}

Value Graph::add_rowvec(Value a, Value v) {
  check_same_graph(a, v, "add_rowvec");
  const Matrix &av = at(a).val, &vv = at(v).val;
  if (vv.rows != 1 || vv.cols != av.cols) shape_error("add_rowvec", av, vv);
  Node n;
  n.op = Op::kAddRowVec;
  n.in0 = a.id();
  n.in1 = v.id();
  n.requires_grad = at(a).requires_grad || at(v).requires_grad;
  n.val = av;
  for (int i = 0; i < av.rows; ++i) {
    double* r = n.val.row(i);
    for (int j = 0; j < av.cols; ++j) r[j] += vv.data[static_cast<size_t>(j)];
  }
  return make(std::move(n));
}

Value Graph::add_colvec(Value a, Value v) {
  check_same_graph(a, v, "add_colvec");
  const Matrix &av = at(a).val, &vv = at(v).val;
  if (vv.cols != 1 || vv.rows != av.rows) shape_error("add_colvec", av, vv);
  Node n;
  n.op = Op::kAddColVec;
  n.in0 = a.id();
  n.in1 = v.id();
  n.requires_grad = at(a).requires_grad || at(v).requires_grad;
  n.val = av;
  for (int i = 0; i < av.rows; ++i) {
    double* r = n.val.row(i);
    const double add = vv.data[static_cast<size_t>(i)];
    for (int j = 0; j < av.cols; ++j) r[j] += add;
  }
  return make(std::move(n));
}

std::vector<double>& Graph::grad_buf(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) n.grad.assign(n.val.numel(), 0.0);
  return n.grad;
}

void Graph::backward(Value out) {
  if (out.graph() != this) throw std::logic_error("backward: value from different graph");
  const Node& o = at(out);
  if (!o.val.is_scalar())
    throw std::invalid_argument("backward: output is " + o.val.shape_str() + ", expected 1x1");
  // Leaf gradients accumulate across calls; interior buffers are per-pass.
  for (Node& n : nodes_)
    if (n.op != Op::kLeaf) n.grad.clear();
  grad_buf(out.id())[0] += 1.0;
  for (int id = out.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || n.grad.empty()) continue;
    backward_node(id);
  }
}

void Graph::backward_node(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const std::vector<double>& g = n.grad;
  auto in_grad = [&](int in_id) -> std::vector<double>* {
    if (in_id < 0) return nullptr;
    if (!nodes_[static_cast<size_t>(in_id)].requires_grad) return nullptr;
    return &grad_buf(in_id);
  };
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kAdd: {
      if (auto* da = in_grad(n.in0))
        for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
      if (auto* db = in_grad(n.in1))
        for (size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i];
      break;
    }
    case Op::kSub: {
      if (auto* da = in_grad(n.in0))
        for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
      if (auto* db = in_grad(n.in1))
        for (size_t i = 0; i < g.size(); ++i) (*db)[i] -= g[i];
      break;
    }
    case Op::kMul: {
      const Matrix& av = nodes_[static_cast<size_t>(n.in0)].val;
      const Matrix& bv = nodes_[static_cast<size_t>(n.in1)].val;
      if (auto* da = in_grad(n.in0))
        for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * bv.data[i];
      if (auto* db = in_grad(n.in1))
        for (size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * av.data[i];
      break;
    }
    case Op::kScalarMul: {
      if (auto* da = in_grad(n.in0))
        for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * n.attr;
      break;
    }
    case Op::kMatMul: {
      const Matrix& av = nodes_[static_cast<size_t>(n.in0)].val;
      const Matrix& bv = nodes_[static_cast<size_t>(n.in1)].val;
      if (auto* da = in_grad(n.in0)) matmul_grad_lhs(g.data(), bv, av.rows, da->data());
      if (auto* db = in_grad(n.in1)) matmul_grad_rhs(av, g.data(), bv.cols, db->data());
      break;
    }
    case Op::kTranspose: {
      if (auto* da = in_grad(n.in0)) {
        const Matrix& av = nodes_[static_cast<size_t>(n.in0)].val;
        for (int i = 0; i < n.val.rows; ++i)
          for (int j = 0; j < n.val.cols; ++j)
            (*da)[static_cast<size_t>(j) * av.cols + i] +=
                g[static_cast<size_t>(i) * n.val.cols + j];
      }
      break;
    }
    case Op::kRelu: {
      // Subgradient at exactly 0 is taken as 0.
      if (auto* da = in_grad(n.in0)) {
        const Matrix& av = nodes_[static_cast<size_t>(n.in0)].val;
        for (size_t i = 0; i < g.size(); ++i)
          if (av.data[i] > 0.0) (*da)[i] += g[i];
      }
      break;
    }
    case Op::kExp: {
      if (auto* da = in_grad(n.in0))
        for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * n.val.data[i];
      break;
    }
    case Op::kLog: {
      if (auto* da = in_grad(n.in0)) {
        const Matrix& av = nodes_[static_cast<size_t>(n.in0)].val;
        for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] / av.data[i];
      }
      break;
    }
    case Op::kSumAll: {
      if (auto* da = in_grad(n.in0)) {
        const double gv = g[0];
        for (double& d : *da) d += gv;
      }
      break;
    }
    case Op::kMeanAll: {
      if (auto* da = in_grad(n.in0)) {
        const double gv = g[0] / static_cast<double>(da->size());
        for (double& d : *da) d += gv;
      }
      break;
    }
    case Op::kRowSum: {
      if (auto* da = in_grad(n.in0)) {
        const Matrix& av = nodes_[static_cast<size_t>(n.in0)].val;
        for (int i = 0; i < av.rows; ++i) {
          const double gv = g[static_cast<size_t>(i)];
          double* r = da->data() + static_cast<size_t>(i) * av.cols;
          for (int j = 0; j < av.cols; ++j) r[j] += gv;
        }
      }
      break;
    }
    case Op::kSoftmaxRows: {
      // dx = y * (g - <g, y>) per row.
      if (auto* da = in_grad(n.in0)) {
        for (int i = 0; i < n.val.rows; ++i) {
          const double* y = n.val.row(i);
          const double* gr = g.data() + static_cast<size_t>(i) * n.val.cols;
          double dot = 0.0;
          for (int j = 0; j < n.val.cols; ++j) dot += gr[j] * y[j];
          double* r = da->data() + static_cast<size_t>(i) * n.val.cols;
          for (int j = 0; j < n.val.cols; ++j) r[j] += y[j] * (gr[j] - dot);
        }
      }
      break;
    }
    case Op::kLogSoftmaxRows: {
      // dx = g - softmax(x) * sum(g) per row; softmax(x) = exp(y).
      if (auto* da = in_grad(n.in0)) {
        for (int i = 0; i < n.val.rows; ++i) {
          const double* y = n.val.row(i);
          const double* gr = g.data() + static_cast<size_t>(i) * n.val.cols;
          double gsum = 0.0;
          for (int j = 0; j < n.val.cols; ++j) gsum += gr[j];
          double* r = da->data() + static_cast<size_t>(i) * n.val.cols;
          for (int j = 0; j < n.val.cols; ++j) r[j] += gr[j] - std::exp(y[j]) * gsum;
        }
      }
      break;
    }
    case Op::kPick: {
      if (auto* da = in_grad(n.in0)) {
        const Matrix& av = nodes_[static_cast<size_t>(n.in0)].val;
        for (size_t i = 0; i < n.index.size(); ++i)
          (*da)[i * av.cols + n.index[i]] += g[i];
      }
      break;
    }
    case Op::kMinConst: {
      // Ties take the clamped branch: gradient 0 where x >= bound.
      if (auto* da = in_grad(n.in0)) {
        const Matrix& av = nodes_[static_cast<size_t>(n.in0)].val;
        for (size_t i = 0; i < g.size(); ++i)
          if (av.data[i] < n.attr) (*da)[i] += g[i];
      }
      break;
    }
    case Op::kConcatRows: {
      size_t offset = 0;
      for (int in_id : n.extra_in) {
        const Matrix& pv = nodes_[static_cast<size_t>(in_id)].val;
        if (auto* dp = in_grad(in_id))
          for (size_t i = 0; i < pv.numel(); ++i) (*dp)[i] += g[offset + i];
        offset += pv.numel();
      }
      break;
    }
    case Op::kSliceRows: {
      if (auto* da = in_grad(n.in0)) {
        const size_t start = static_cast<size_t>(n.range0) * n.val.cols;
        for (size_t i = 0; i < n.val.numel(); ++i) (*da)[start + i] += g[i];
      }
      break;
    }
    case Op::kGatherRows: {
      if (auto* da = in_grad(n.in0)) {
        for (size_t i = 0; i < n.index.size(); ++i) {
          double* dst = da->data() + static_cast<size_t>(n.index[i]) * n.val.cols;
          const double* src = g.data() + i * n.val.cols;
          for (int j = 0; j < n.val.cols; ++j) dst[j] += src[j];
        }
      }
      break;
    }
    case Op::kAddRowVec: {
      if (auto* da = in_grad(n.in0))
        for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
      if (auto* dv = in_grad(n.in1)) {
        for (int i = 0; i < n.val.rows; ++i) {
          const double* gr = g.data() + static_cast<size_t>(i) * n.val.cols;
          for (int j = 0; j < n.val.cols; ++j) (*dv)[static_cast<size_t>(j)] += gr[j];
        }
      }
      break;
    }
    case Op::kAddColVec: {
      if (auto* da = in_grad(n.in0))
        for (size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
      if (auto* dv = in_grad(n.in1)) {
        for (int i = 0; i < n.val.rows; ++i) {
          const double* gr = g.data() + static_cast<size_t>(i) * n.val.cols;
          double acc = 0.0;
          for (int j = 0; j < n.val.cols; ++j) acc += gr[j];
          (*dv)[static_cast<size_t>(i)] += acc;
        }
      }
      break;
    }
  }
}

void Graph::zero_grad() {
  for (Node& n : nodes_) n.grad.clear();
}

void Graph::clear() { nodes_.clear(); }

Value operator+(Value a, Value b) { return a.graph()->add(a, b); }
Value operator-(Value a, Value b) { return a.graph()->sub(a, b); }
Value operator*(Value a, Value b) { return a.graph()->mul(a, b); }
Value operator*(Value a, double k) { return a.graph()->scalar_mul(a, k); }
Value operator*(double k, Value a) { return a.graph()->scalar_mul(a, k); }

}  // namespace untl::diff
