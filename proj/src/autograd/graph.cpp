#include "saco/autograd/graph.hpp"

#include "saco/error.hpp"

namespace saco::ad {

const Matrix& Var::value() const { return graph->value(id); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ValidationError("Var::scalar on non-scalar node");
  return v(0, 0);
}

Graph::Graph(const ParameterStore& params, bool record)
    : params_(&params), record_(record), param_nodes_(params.size(), -1) {}

Var Graph::constant(Matrix value) {
  Node n;
  n.own = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(ParamId id) {
  auto& slot = param_nodes_.at(static_cast<std::size_t>(id));
  if (slot >= 0) return {this, slot};
  Node n;
  n.external = &(*params_)[id].value;
  n.needs_grad = record_;
  n.param = id;
  nodes_.push_back(std::move(n));
  slot = static_cast<int>(nodes_.size()) - 1;
  return {this, slot};
}

Var Graph::emit(Matrix value, std::vector<int> inputs, BackwardFn backward) {
  Node n;
  n.own = std::move(value);
  if (record_) {
    for (int in : inputs) {
      if (nodes_[static_cast<std::size_t>(in)].needs_grad) {
        n.needs_grad = true;
        break;
      }
    }
    if (n.needs_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Graph::value(int id) const {
  const auto& n = nodes_[static_cast<std::size_t>(id)];
  return n.external ? *n.external : n.own;
}

Matrix& Graph::grad_slot(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.has_grad) {
    const Matrix& v = value(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::add_grad(int id, const Matrix& grad) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (!n.has_grad) {
    n.grad = grad;
    n.has_grad = true;
  } else {
    n.grad += grad;
  }
}

void Graph::backward(Var loss, GradientBuffer& out) {
  if (loss.graph != this) throw ValidationError("backward: variable from another graph");
  if (!record_) throw ValidationError("backward: graph was built without recording");
  const Matrix& lv = value(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1) throw ValidationError("backward: loss must be scalar");
  if (!nodes_[static_cast<std::size_t>(loss.id)].needs_grad) return;
  add_grad(loss.id, Matrix::Ones(1, 1));
  for (int id = loss.id; id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) continue;
    if (n.param >= 0) {
      out.accumulate(n.param, n.grad);
    } else if (n.backward) {
      n.backward(*this, n.grad);
    }
    n.grad.resize(0, 0);
    n.has_grad = false;
  }
}

}  // namespace saco::ad
