#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "grfu/tensor.hpp"

namespace grfu {

enum class Op : uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,       // elementwise (Hadamard)
  Div,       // elementwise
  MatMul,
  Sigmoid,
  Tanh,
  Relu,
  Exp,
  Clamp01,
  Scale,     // constant multiplier
  TileCols,  // vector [m] -> matrix [m x n], one copy per column
  ConcatRows,
  StackRows,
  SumAll,
  CeRows,    // sum over rows of -log softmax(row)[label]
  CeCols,    // same over columns
};

struct GraphNode {
  Op op = Op::Leaf;
  int a = -1, b = -1;
  std::vector<int> ins;     // ConcatRows / StackRows inputs
  std::vector<int> labels;  // CeRows / CeCols class ids
  double c = 0.0;           // Scale factor
  Shape shape;
  std::shared_ptr<const std::vector<double>> val;
};

/// Tape of recorded operations. Node ids are topologically ordered: every
/// input id precedes its consumers. A graph is confined to one thread while
/// recording; once built it is immutable and backward() may run repeatedly.
class Graph {
 public:
  /// Registers `t` as a differentiable leaf. Gradients from backward() are
  /// returned in registration order.
  int parameter(const Tensor& t);

  /// Registers `t` as a non-differentiable leaf.
  int constant(const Tensor& t);

  const std::vector<int>& parameters() const { return params_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  const GraphNode& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  /// Drops all recorded nodes but keeps allocated capacity for reuse.
  void clear();

  // -- used by the op implementations --
  int lookup(const Tensor& t);  // node id of t, capturing it as a constant leaf if new
  int find(const Tensor& t) const;  // node id or -1, no capture
  int emit(GraphNode n);
  Tensor wrap(int id) const;  // tensor sharing the node's buffer

 private:
  int leaf(const Tensor& t);
  std::vector<GraphNode> nodes_;
  std::vector<int> params_;
  std::unordered_map<const void*, int> by_buffer_;
};

/// RAII guard: while alive, ops on this thread record onto `g`.
class Recording {
 public:
  explicit Recording(Graph& g);
  ~Recording();
  Recording(const Recording&) = delete;
  Recording& operator=(const Recording&) = delete;

 private:
  Graph* prev_;
};

Graph* active_graph();

// Recorded operations. Without an active Recording these compute plain
// values; with one, the result is appended to the tape. Binary elementwise
// ops require identical shapes (no broadcasting).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor clamp01(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor tile_cols(const Tensor& v, int n);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor stack_rows(const std::vector<Tensor>& rows);
Tensor sum_all(const Tensor& a);
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& labels);
Tensor cross_entropy_cols(const Tensor& logits, const std::vector<int>& labels);

/// Reverse-mode sweep from a scalar loss. Returns one gradient per
/// registered parameter, in registration order; parameters the loss does not
/// depend on get zero gradients of matching shape.
std::vector<Tensor> backward(const Graph& g, const Tensor& loss);

struct GradCheckReport {
  std::vector<double> per_param;  // max relative error per parameter
  double max_rel_error = 0.0;
  double step = 0.0;
};

/// Compares backward() gradients of `loss_fn` against central finite
/// differences, coordinate by coordinate. `loss_fn` must return a scalar
/// tensor computed with the ops above from the tensors it is handed.
GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& loss_fn,
                           const std::vector<Tensor>& params, double step);

}  // namespace grfu
