#include "grfu/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace grfu {

namespace {

thread_local Graph* tl_graph = nullptr;

std::vector<double> copy_values(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

double logsumexp(const double* z, long n, long stride) {
  double m = z[0];
  for (long i = 1; i < n; ++i) m = std::max(m, z[i * stride]);
  double s = 0.0;
  for (long i = 0; i < n; ++i) s += std::exp(z[i * stride] - m);
  return m + std::log(s);
}

}  // namespace

Graph* active_graph() { return tl_graph; }

Recording::Recording(Graph& g) : prev_(tl_graph) { tl_graph = &g; }
Recording::~Recording() { tl_graph = prev_; }

int Graph::emit(GraphNode n) {
  const void* key = n.val.get();
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  by_buffer_[key] = id;
  return id;
}

int Graph::leaf(const Tensor& t) {
  GraphNode n;
  n.op = Op::Leaf;
  n.shape = t.shape();
  n.val = t.buffer();
  return emit(std::move(n));
}

int Graph::parameter(const Tensor& t) {
  int id = lookup(t);
  if (std::find(params_.begin(), params_.end(), id) == params_.end()) params_.push_back(id);
  return id;
}

int Graph::constant(const Tensor& t) { return lookup(t); }

int Graph::lookup(const Tensor& t) {
  auto it = by_buffer_.find(t.buffer().get());
  if (it != by_buffer_.end()) return it->second;
  return leaf(t);
}

int Graph::find(const Tensor& t) const {
  auto it = by_buffer_.find(t.buffer().get());
  return it == by_buffer_.end() ? -1 : it->second;
}

void Graph::clear() {
  nodes_.clear();
  params_.clear();
  by_buffer_.clear();
}

Tensor Graph::wrap(int id) const {
  const GraphNode& n = nodes_[static_cast<size_t>(id)];
  return Tensor(n.shape, n.val);
}

namespace {

// Appends the finished tensor to the active tape, if any.
void record(Tensor& out, GraphNode n) {
  if (Graph* g = tl_graph) {
    n.shape = out.shape();
    n.val = out.buffer();
    g->emit(std::move(n));
  }
}

GraphNode unary(Op op, const Tensor& a) {
  GraphNode n;
  n.op = op;
  if (Graph* g = tl_graph) n.a = g->lookup(a);
  return n;
}

GraphNode binary(Op op, const Tensor& a, const Tensor& b) {
  GraphNode n;
  n.op = op;
  if (Graph* g = tl_graph) {
    n.a = g->lookup(a);
    n.b = g->lookup(b);
  }
  return n;
}

Tensor map_unary(Op op, const Tensor& a, double (*f)(double)) {
  std::vector<double> v = copy_values(a);
  for (double& x : v) x = f(x);
  Tensor out(a.shape(), std::move(v));
  record(out, unary(op, a));
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() < 1 || b.rank() > 2)
    fail_shape("matmul expects a matrix and a matrix or vector", a.shape(), b.shape());
  const int m = a.dim(0), k = a.dim(1);
  if (b.rows() != k) fail_shape("matmul inner dimensions disagree", a.shape(), b.shape());
  const int n = b.cols();
  std::vector<double> y(static_cast<size_t>(m) * n);
  kernels::matmul(a.data(), b.data(), y.data(), m, k, n);
  Shape out_shape = b.rank() == 1 ? Shape{m} : Shape{m, n};
  Tensor out(std::move(out_shape), std::move(y));
  record(out, binary(Op::MatMul, a, b));
  return out;
}

namespace {

Tensor zip(Op op, const Tensor& a, const Tensor& b, double (*f)(double, double)) {
  if (!a.same_shape(b)) fail_shape("elementwise shapes differ", a.shape(), b.shape());
  std::vector<double> v = copy_values(a);
  const double* pb = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] = f(v[i], pb[i]);
  Tensor out(a.shape(), std::move(v));
  record(out, binary(op, a, b));
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(Op::Add, a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(Op::Sub, a, b, [](double x, double y) { return x - y; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return zip(Op::Mul, a, b, [](double x, double y) { return x * y; });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  return zip(Op::Div, a, b, [](double x, double y) { return x / y; });
}

Tensor sigmoid(const Tensor& a) {
  return map_unary(Op::Sigmoid, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor tanh(const Tensor& a) {
  return map_unary(Op::Tanh, a, [](double x) { return std::tanh(x); });
}

Tensor relu(const Tensor& a) {
  return map_unary(Op::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor exp(const Tensor& a) {
  return map_unary(Op::Exp, a, [](double x) { return std::exp(x); });
}

Tensor clamp01(const Tensor& a) {
  return map_unary(Op::Clamp01, a, [](double x) { return std::clamp(x, 0.0, 1.0); });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> v = copy_values(a);
  for (double& x : v) x *= c;
  Tensor out(a.shape(), std::move(v));
  GraphNode n = unary(Op::Scale, a);
  n.c = c;
  record(out, std::move(n));
  return out;
}

Tensor tile_cols(const Tensor& v, int n) {
  if (v.rank() != 1) fail_shape("tile_cols expects a vector", v.shape(), {n});
  if (n <= 0) throw std::invalid_argument("tile_cols: column count must be positive");
  const int m = v.dim(0);
  std::vector<double> y(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    std::fill_n(y.begin() + static_cast<long>(i) * n, n, v.at(i));
  Tensor out(Shape{m, n}, std::move(y));
  record(out, unary(Op::TileCols, v));
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const int rank = parts[0].rank();
  const int cols = parts[0].cols();
  int rows = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank || p.cols() != cols)
      fail_shape("concat_rows inputs disagree", parts[0].shape(), p.shape());
    rows += p.rows();
  }
  std::vector<double> y;
  y.reserve(static_cast<size_t>(rows) * cols);
  for (const Tensor& p : parts) y.insert(y.end(), p.values().begin(), p.values().end());
  Shape out_shape = rank == 1 ? Shape{rows} : Shape{rows, cols};
  Tensor out(std::move(out_shape), std::move(y));
  GraphNode n;
  n.op = Op::ConcatRows;
  if (Graph* g = tl_graph) {
    n.ins.reserve(parts.size());
    for (const Tensor& p : parts) n.ins.push_back(g->lookup(p));
  }
  record(out, std::move(n));
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
  const int k = rows[0].dim(0);
  for (const Tensor& r : rows)
    if (r.rank() != 1 || r.dim(0) != k) fail_shape("stack_rows inputs disagree", rows[0].shape(), r.shape());
  std::vector<double> y;
  y.reserve(rows.size() * static_cast<size_t>(k));
  for (const Tensor& r : rows) y.insert(y.end(), r.values().begin(), r.values().end());
  Tensor out(Shape{static_cast<int>(rows.size()), k}, std::move(y));
  GraphNode n;
  n.op = Op::StackRows;
  if (Graph* g = tl_graph) {
    n.ins.reserve(rows.size());
    for (const Tensor& r : rows) n.ins.push_back(g->lookup(r));
  }
  record(out, std::move(n));
  return out;
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  Tensor out = Tensor::scalar(s);
  record(out, unary(Op::SumAll, a));
  return out;
}

namespace {

void check_labels(const std::vector<int>& labels, long expected, int num_classes) {
  if (static_cast<long>(labels.size()) != expected)
    throw std::invalid_argument("cross entropy: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(expected) + " frames");
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("cross entropy: label " + std::to_string(labels[i]) + " at index " +
                                  std::to_string(i) + " outside [0," + std::to_string(num_classes) + ")");
}

}  // namespace

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) fail_shape("cross_entropy_rows expects [T x K] logits", logits.shape(), {});
  const int t_steps = logits.dim(0), k = logits.dim(1);
  check_labels(labels, t_steps, k);
  double total = 0.0;
  for (int t = 0; t < t_steps; ++t) {
    const double* row = logits.data() + static_cast<long>(t) * k;
    total += logsumexp(row, k, 1) - row[labels[static_cast<size_t>(t)]];
  }
  Tensor out = Tensor::scalar(total);
  GraphNode n = unary(Op::CeRows, logits);
  n.labels = labels;
  record(out, std::move(n));
  return out;
}

Tensor cross_entropy_cols(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) fail_shape("cross_entropy_cols expects [K x B] logits", logits.shape(), {});
  const int k = logits.dim(0), batch = logits.dim(1);
  check_labels(labels, batch, k);
  double total = 0.0;
  for (int bcol = 0; bcol < batch; ++bcol) {
    const double* col = logits.data() + bcol;
    total += logsumexp(col, k, batch) - col[static_cast<long>(labels[static_cast<size_t>(bcol)]) * batch];
  }
  Tensor out = Tensor::scalar(total);
  GraphNode n = unary(Op::CeCols, logits);
  n.labels = labels;
  record(out, std::move(n));
  return out;
}

namespace {

class BackwardPass {
 public:
  explicit BackwardPass(const Graph& g) : g_(g), grads_(static_cast<size_t>(g.num_nodes())) {}

  std::vector<Tensor> run(int loss_id) {
    at(loss_id).assign(1, 1.0);
    for (int id = loss_id; id >= 0; --id) {
      if (grads_[static_cast<size_t>(id)].empty()) continue;
      pull(id);
    }
    std::vector<Tensor> out;
    out.reserve(g_.parameters().size());
    for (int pid : g_.parameters()) {
      auto& buf = grads_[static_cast<size_t>(pid)];
      const Shape& shape = g_.node(pid).shape;
      if (buf.empty())
        out.emplace_back(shape);  // parameter unused by the loss
      else
        out.emplace_back(shape, std::move(buf));
    }
    return out;
  }

 private:
  std::vector<double>& at(int id) {
    auto& buf = grads_[static_cast<size_t>(id)];
    if (buf.empty()) buf.assign(g_.node(id).val->size(), 0.0);
    return buf;
  }

  // Propagates the accumulated gradient of node `id` into its inputs.
  void pull(int id) {
    const GraphNode& n = g_.node(id);
    const std::vector<double>& gy = grads_[static_cast<size_t>(id)];
    const std::vector<double>& y = *n.val;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add: {
        axpy(n.a, gy, 1.0);
        axpy(n.b, gy, 1.0);
        break;
      }
      case Op::Sub: {
        axpy(n.a, gy, 1.0);
        axpy(n.b, gy, -1.0);
        break;
      }
      case Op::Mul: {
        mul_into(n.a, gy, *g_.node(n.b).val);
        mul_into(n.b, gy, *g_.node(n.a).val);
        break;
      }
      case Op::Div: {
        const std::vector<double>& b = *g_.node(n.b).val;
        std::vector<double>& ga = at(n.a);
        std::vector<double>& gb = at(n.b);
        for (size_t i = 0; i < gy.size(); ++i) {
          ga[i] += gy[i] / b[i];
          gb[i] -= gy[i] * y[i] / b[i];
        }
        break;
      }
      case Op::MatMul: {
        const GraphNode& na = g_.node(n.a);
        const GraphNode& nb = g_.node(n.b);
        const int m = na.shape[0], k = na.shape[1];
        const int cols = nb.shape.size() == 2 ? nb.shape[1] : 1;
        kernels::matmul_a_bt(gy.data(), nb.val->data(), at(n.a).data(), m, cols, k);
        kernels::matmul_at_b(na.val->data(), gy.data(), at(n.b).data(), k, m, cols);
        break;
      }
      case Op::Sigmoid: {
        std::vector<double>& ga = at(n.a);
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::Tanh: {
        std::vector<double>& ga = at(n.a);
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::Relu: {
        const std::vector<double>& x = *g_.node(n.a).val;
        std::vector<double>& ga = at(n.a);
        for (size_t i = 0; i < gy.size(); ++i)
          if (x[i] > 0.0) ga[i] += gy[i];
        break;
      }
      case Op::Exp: {
        std::vector<double>& ga = at(n.a);
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * y[i];
        break;
      }
      case Op::Clamp01: {
        const std::vector<double>& x = *g_.node(n.a).val;
        std::vector<double>& ga = at(n.a);
        for (size_t i = 0; i < gy.size(); ++i)
          if (x[i] > 0.0 && x[i] < 1.0) ga[i] += gy[i];
        break;
      }
      case Op::Scale: {
        axpy(n.a, gy, n.c);
        break;
      }
      case Op::TileCols: {
        const int m = g_.node(n.a).shape[0];
        const int cols = n.shape[1];
        std::vector<double>& ga = at(n.a);
        for (int i = 0; i < m; ++i) {
          double s = 0.0;
          const double* row = gy.data() + static_cast<long>(i) * cols;
          for (int j = 0; j < cols; ++j) s += row[j];
          ga[static_cast<size_t>(i)] += s;
        }
        break;
      }
      case Op::ConcatRows:
      case Op::StackRows: {
        size_t offset = 0;
        for (int in : n.ins) {
          std::vector<double>& gi = at(in);
          for (size_t i = 0; i < gi.size(); ++i) gi[i] += gy[offset + i];
          offset += gi.size();
        }
        break;
      }
      case Op::SumAll: {
        const double gs = gy[0];
        std::vector<double>& ga = at(n.a);
        for (double& v : ga) v += gs;
        break;
      }
      case Op::CeRows: {
        const std::vector<double>& z = *g_.node(n.a).val;
        const int k = g_.node(n.a).shape[1];
        const double gs = gy[0];
        std::vector<double>& ga = at(n.a);
        for (size_t t = 0; t < n.labels.size(); ++t) {
          const double* row = z.data() + t * static_cast<size_t>(k);
          const double lse = logsumexp(row, k, 1);
          double* grow = ga.data() + t * static_cast<size_t>(k);
          for (int j = 0; j < k; ++j) grow[j] += gs * std::exp(row[j] - lse);
          grow[n.labels[t]] -= gs;
        }
        break;
      }
      case Op::CeCols: {
        const std::vector<double>& z = *g_.node(n.a).val;
        const int k = g_.node(n.a).shape[0];
        const int batch = g_.node(n.a).shape[1];
        const double gs = gy[0];
        std::vector<double>& ga = at(n.a);
        for (size_t bcol = 0; bcol < n.labels.size(); ++bcol) {
          const double* col = z.data() + bcol;
          const double lse = logsumexp(col, k, batch);
          for (int j = 0; j < k; ++j)
            ga[static_cast<size_t>(j) * batch + bcol] += gs * std::exp(col[static_cast<long>(j) * batch] - lse);
          ga[static_cast<size_t>(n.labels[bcol]) * batch + bcol] -= gs;
        }
        break;
      }
    }
  }

  void axpy(int id, const std::vector<double>& gy, double c) {
    std::vector<double>& g = at(id);
    for (size_t i = 0; i < gy.size(); ++i) g[i] += c * gy[i];
  }

  void mul_into(int id, const std::vector<double>& gy, const std::vector<double>& other) {
    std::vector<double>& g = at(id);
    for (size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * other[i];
  }

  const Graph& g_;
  std::vector<std::vector<double>> grads_;
};

}  // namespace

std::vector<Tensor> backward(const Graph& g, const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
  const int loss_id = g.find(loss);
  if (loss_id < 0) throw std::invalid_argument("backward: loss was not recorded on this graph");
  BackwardPass pass(g);
  return pass.run(loss_id);
}

GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& loss_fn,
                           const std::vector<Tensor>& params, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  std::vector<Tensor> analytic;
  {
    Graph g;
    Recording rec(g);
    for (const Tensor& p : params) g.parameter(p);
    Tensor loss = loss_fn(params);
    if (!loss.all_finite()) throw NumericError("grad_check: non-finite loss value");
    analytic = backward(g, loss);
  }

  auto eval_at = [&](std::vector<Tensor> probe) {
    Tensor v = loss_fn(probe);
    if (v.size() != 1 || !v.all_finite()) throw NumericError("grad_check: non-finite probe value");
    return v.item();
  };

  GradCheckReport report;
  report.step = step;
  report.per_param.resize(params.size(), 0.0);
  for (size_t i = 0; i < params.size(); ++i) {
    for (long c = 0; c < params[i].size(); ++c) {
      std::vector<Tensor> probe = params;
      std::vector<double> vals = {params[i].values().begin(), params[i].values().end()};
      vals[static_cast<size_t>(c)] += step;
      probe[i] = Tensor(params[i].shape(), vals);
      const double up = eval_at(probe);
      vals[static_cast<size_t>(c)] -= 2.0 * step;
      probe[i] = Tensor(params[i].shape(), std::move(vals));
      const double down = eval_at(probe);
      const double numeric = (up - down) / (2.0 * step);
      const double exact = analytic[i].at(c);
      const double rel = std::abs(exact - numeric) / std::max({std::abs(exact), std::abs(numeric), 1e-8});
      report.per_param[i] = std::max(report.per_param[i], rel);
      report.max_rel_error = std::max(report.max_rel_error, rel);
    }
  }
  return report;
}

}  // namespace grfu
