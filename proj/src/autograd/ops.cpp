#include "saco/autograd/ops.hpp"

#include <cmath>
#include <limits>

#include "saco/error.hpp"

namespace saco::ad {

namespace {

void require_same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw ValidationError("operands belong to different graphs");
}

void require_shape(bool ok, const char* op) {
  if (!ok) throw ValidationError(std::string(op) + ": shape mismatch");
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  require_shape(a.cols() == b.rows(), "matmul");
  Graph& g = *a.graph;
  Matrix out = a.value() * b.value();
  return g.emit(std::move(out), {a.id, b.id}, [a, b](Graph& g, const Matrix& dout) {
    if (g.needs_grad(a.id)) g.add_grad_expr(a.id, dout * g.value(b.id).transpose());
    if (g.needs_grad(b.id)) g.add_grad_expr(b.id, g.value(a.id).transpose() * dout);
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_graph(a, b);
  require_shape(a.cols() == b.cols(), "matmul_nt");
  Graph& g = *a.graph;
  Matrix out = a.value() * b.value().transpose();
  return g.emit(std::move(out), {a.id, b.id}, [a, b](Graph& g, const Matrix& dout) {
    if (g.needs_grad(a.id)) g.add_grad_expr(a.id, dout * g.value(b.id));
    if (g.needs_grad(b.id)) g.add_grad_expr(b.id, dout.transpose() * g.value(a.id));
  });
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Graph& g = *a.graph;
  Matrix out = a.value() + b.value();
  return g.emit(std::move(out), {a.id, b.id}, [a, b](Graph& g, const Matrix& dout) {
    g.add_grad(a.id, dout);
    g.add_grad(b.id, dout);
  });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  Graph& g = *a.graph;
  Matrix out = a.value() - b.value();
  return g.emit(std::move(out), {a.id, b.id}, [a, b](Graph& g, const Matrix& dout) {
    g.add_grad(a.id, dout);
    g.add_grad_expr(b.id, -dout);
  });
}

Var add_row(Var a, Var row) {
  require_same_graph(a, row);
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  Graph& g = *a.graph;
  Matrix out = a.value().rowwise() + row.value().row(0);
  return g.emit(std::move(out), {a.id, row.id}, [a, row](Graph& g, const Matrix& dout) {
    g.add_grad(a.id, dout);
    if (g.needs_grad(row.id)) g.add_grad_expr(row.id, dout.colwise().sum());
  });
}

Var scale(Var a, double factor) {
  Graph& g = *a.graph;
  Matrix out = a.value() * factor;
  return g.emit(std::move(out), {a.id}, [a, factor](Graph& g, const Matrix& dout) {
    g.add_grad_expr(a.id, dout * factor);
  });
}

Var gelu(Var a) {
  Graph& g = *a.graph;
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  });
  return g.emit(std::move(out), {a.id}, [a](Graph& g, const Matrix& dout) {
    const Matrix& x = g.value(a.id);
    Matrix d = x.unaryExpr([](double v) {
      const double u = kGeluC * (v + kGeluA * v * v * v);
      const double t = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
    });
    g.add_grad_expr(a.id, dout.cwiseProduct(d));
  });
}

Var softmax_rows(Var a, const Matrix* additive_mask) {
  Graph& g = *a.graph;
  Matrix logits = a.value();
  if (additive_mask) {
    require_shape(additive_mask->rows() == logits.rows() && additive_mask->cols() == logits.cols(),
                  "softmax_rows mask");
    logits += *additive_mask;
  }
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    if (!std::isfinite(mx)) throw ValidationError("softmax_rows: row has no admissible entry");
    p.row(i) = (logits.row(i).array() - mx).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  Matrix saved = p;
  return g.emit(std::move(p), {a.id}, [a, probs = std::move(saved)](Graph& g, const Matrix& dout) {
    Eigen::VectorXd dot = dout.cwiseProduct(probs).rowwise().sum();
    Matrix d = probs.cwiseProduct(dout.colwise() - dot);
    g.add_grad(a.id, d);
  });
}

Var log_softmax_rows(Var a) {
  Graph& g = *a.graph;
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    const double lse = mx + std::log((x.row(i).array() - mx).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  Matrix probs = out.array().exp().matrix();
  return g.emit(std::move(out), {a.id}, [a, probs = std::move(probs)](Graph& g, const Matrix& dout) {
    Eigen::VectorXd total = dout.rowwise().sum();
    Matrix d = dout - probs.cwiseProduct(total.replicate(1, probs.cols()));
    g.add_grad(a.id, d);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_graph(x, gain);
  require_same_graph(x, bias);
  const auto cols = x.cols();
  require_shape(gain.rows() == 1 && gain.cols() == cols && bias.rows() == 1 && bias.cols() == cols,
                "layer_norm");
  Graph& g = *x.graph;
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), cols);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return g.emit(std::move(out), {x.id, gain.id, bias.id},
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Graph& g, const Matrix& dout) {
                  if (g.needs_grad(gain.id)) {
                    g.add_grad_expr(gain.id, dout.cwiseProduct(xhat).colwise().sum());
                  }
                  if (g.needs_grad(bias.id)) g.add_grad_expr(bias.id, dout.colwise().sum());
                  if (!g.needs_grad(x.id)) return;
                  const Matrix dxhat =
                      (dout.array().rowwise() * g.value(gain.id).row(0).array()).matrix();
                  const double n = static_cast<double>(dxhat.cols());
                  Matrix dx(dxhat.rows(), dxhat.cols());
                  for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                    const double m1 = dxhat.row(i).sum() / n;
                    const double m2 = dxhat.row(i).dot(xhat.row(i)) / n;
                    dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                  }
                  g.add_grad(x.id, dx);
                });
}

Var gather_rows(Var table, std::span<const int> rows) {
  Graph& g = *table.graph;
  const Matrix& t = table.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), t.cols());
  std::vector<int> idx(rows.begin(), rows.end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= t.rows()) {
      throw ValidationError("gather_rows: index " + std::to_string(idx[i]) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = t.row(idx[i]);
  }
  return g.emit(std::move(out), {table.id}, [table, idx = std::move(idx)](Graph& g, const Matrix& dout) {
    const Matrix& t = g.value(table.id);
    Matrix d = Matrix::Zero(t.rows(), t.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += dout.row(static_cast<Eigen::Index>(i));
    g.add_grad(table.id, d);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_rows: no operands");
  Graph& g = *parts.front().graph;
  Eigen::Index rows = 0;
  const auto cols = parts.front().cols();
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  for (const Var& p : parts) {
    require_same_graph(parts.front(), p);
    require_shape(p.cols() == cols, "concat_rows");
    offsets.push_back(rows);
    rows += p.rows();
    ids.push_back(p.id);
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    out.middleRows(offsets[i], parts[i].rows()) = parts[i].value();
  }
  std::vector<int> captured = ids;
  return g.emit(std::move(out), std::move(ids),
                [captured = std::move(captured), offsets = std::move(offsets)](Graph& g, const Matrix& dout) {
                  for (std::size_t i = 0; i < captured.size(); ++i) {
                    if (!g.needs_grad(captured[i])) continue;
                    const auto r = g.value(captured[i]).rows();
                    g.add_grad_expr(captured[i], dout.middleRows(offsets[i], r));
                  }
                });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols: no operands");
  Graph& g = *parts.front().graph;
  Eigen::Index cols = 0;
  const auto rows = parts.front().rows();
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  for (const Var& p : parts) {
    require_same_graph(parts.front(), p);
    require_shape(p.rows() == rows, "concat_cols");
    offsets.push_back(cols);
    cols += p.cols();
    ids.push_back(p.id);
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    out.middleCols(offsets[i], parts[i].cols()) = parts[i].value();
  }
  std::vector<int> captured = ids;
  return g.emit(std::move(out), std::move(ids),
                [captured = std::move(captured), offsets = std::move(offsets)](Graph& g, const Matrix& dout) {
                  for (std::size_t i = 0; i < captured.size(); ++i) {
                    if (!g.needs_grad(captured[i])) continue;
                    const auto c = g.value(captured[i]).cols();
                    g.add_grad_expr(captured[i], dout.middleCols(offsets[i], c));
                  }
                });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows");
  Graph& g = *a.graph;
  Matrix out = a.value().middleRows(start, count);
  return g.emit(std::move(out), {a.id}, [a, start, count](Graph& g, const Matrix& dout) {
    const Matrix& v = g.value(a.id);
    Matrix d = Matrix::Zero(v.rows(), v.cols());
    d.middleRows(start, count) = dout;
    g.add_grad(a.id, d);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols");
  Graph& g = *a.graph;
  Matrix out = a.value().middleCols(start, count);
  return g.emit(std::move(out), {a.id}, [a, start, count](Graph& g, const Matrix& dout) {
    const Matrix& v = g.value(a.id);
    Matrix d = Matrix::Zero(v.rows(), v.cols());
    d.middleCols(start, count) = dout;
    g.add_grad(a.id, d);
  });
}

Var mean_rows(Var a) {
  require_shape(a.rows() >= 1, "mean_rows");
  Graph& g = *a.graph;
  const double n = static_cast<double>(a.rows());
  Matrix out = a.value().colwise().sum() / n;
  return g.emit(std::move(out), {a.id}, [a, n](Graph& g, const Matrix& dout) {
    g.add_grad_expr(a.id, dout.replicate(g.value(a.id).rows(), 1) / n);
  });
}

Var sum(Var a) {
  Graph& g = *a.graph;
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return g.emit(std::move(out), {a.id}, [a](Graph& g, const Matrix& dout) {
    const Matrix& v = g.value(a.id);
    g.add_grad(a.id, Matrix::Constant(v.rows(), v.cols(), dout(0, 0)));
  });
}

Var mean(Var a) {
  require_shape(a.value().size() > 0, "mean");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var pick(Var a, std::span<const int> cols) {
  require_shape(static_cast<Eigen::Index>(cols.size()) == a.rows(), "pick");
  Graph& g = *a.graph;
  const Matrix& v = a.value();
  std::vector<int> idx(cols.begin(), cols.end());
  Matrix out = Matrix::Zero(v.rows(), 1);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0) continue;
    if (idx[i] >= v.cols()) throw ValidationError("pick: column out of range");
    out(static_cast<Eigen::Index>(i), 0) = v(static_cast<Eigen::Index>(i), idx[i]);
  }
  return g.emit(std::move(out), {a.id}, [a, idx = std::move(idx)](Graph& g, const Matrix& dout) {
    const Matrix& v = g.value(a.id);
    Matrix d = Matrix::Zero(v.rows(), v.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= 0) d(static_cast<Eigen::Index>(i), idx[i]) = dout(static_cast<Eigen::Index>(i), 0);
    }
    g.add_grad(a.id, d);
  });
}

Var cosine(Var a, Var b) {
  require_same_graph(a, b);
  require_shape(a.rows() == 1 && b.rows() == 1 && a.cols() == b.cols(), "cosine");
  Graph& g = *a.graph;
  const double na = a.value().norm();
  const double nb = b.value().norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw ValidationError("cosine: zero-norm vector");
  const double c = a.value().row(0).dot(b.value().row(0)) / (na * nb);
  Matrix out(1, 1);
  out(0, 0) = c;
  return g.emit(std::move(out), {a.id, b.id}, [a, b, na, nb, c](Graph& g, const Matrix& dout) {
    const double s = dout(0, 0);
    const Matrix& av = g.value(a.id);
    const Matrix& bv = g.value(b.id);
    if (g.needs_grad(a.id)) g.add_grad_expr(a.id, s * (bv / (na * nb) - c * av / (na * na)));
    if (g.needs_grad(b.id)) g.add_grad_expr(b.id, s * (av / (na * nb) - c * bv / (nb * nb)));
  });
}

Var logsumexp_row(Var a) {
  require_shape(a.rows() == 1 && a.cols() >= 1, "logsumexp_row");
  Graph& g = *a.graph;
  const Matrix& v = a.value();
  const double mx = v.maxCoeff();
  Matrix w = (v.array() - mx).exp().matrix();
  const double total = w.sum();
  Matrix out(1, 1);
  out(0, 0) = mx + std::log(total);
  w /= total;
  return g.emit(std::move(out), {a.id}, [a, w = std::move(w)](Graph& g, const Matrix& dout) {
    g.add_grad_expr(a.id, dout(0, 0) * w);
  });
}

}  // namespace saco::ad
