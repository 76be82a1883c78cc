#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "saco/autograd/parameters.hpp"

namespace saco::ad {

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;  // value of a 1x1 node
};

// Reverse-mode tape. Nodes are appended in topological order during the
// forward pass; backward() walks them in reverse. A graph built with
// record == false keeps values only, for inference.
class Graph {
 public:
  explicit Graph(const ParameterStore& params, bool record = true);

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }
  const ParameterStore& params() const { return *params_; }

  Var constant(Matrix value);
  Var param(ParamId id);

  // Appends a node. `backward` receives the node's output gradient and must
  // push contributions into inputs via add_grad(). It is dropped when no
  // input needs a gradient.
  using BackwardFn = std::function<void(Graph&, const Matrix& out_grad)>;
  Var emit(Matrix value, std::vector<int> inputs, BackwardFn backward);

  const Matrix& value(int id) const;
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  void add_grad(int id, const Matrix& grad);
  template <typename Expr>
  void add_grad_expr(int id, const Expr& grad);

  // Seeds d(loss)/d(loss) = 1 and accumulates parameter gradients into `out`.
  void backward(Var loss, GradientBuffer& out);

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix own;
    const Matrix* external = nullptr;
    Matrix grad;
    bool has_grad = false;
    bool needs_grad = false;
    ParamId param = -1;
    BackwardFn backward;
  };

  Matrix& grad_slot(int id);

  const ParameterStore* params_;
  bool record_;
  std::deque<Node> nodes_;
  std::vector<int> param_nodes_;
};

template <typename Expr>
void Graph::add_grad_expr(int id, const Expr& grad) {
  auto& node = nodes_[static_cast<std::size_t>(id)];
  if (!node.needs_grad) return;
  grad_slot(id) += grad;
}

}  // namespace saco::ad
