#include "saco/autograd/parameters.hpp"

#include "saco/error.hpp"

namespace saco::ad {

ParamId ParameterStore::add(std::string name, Matrix value) {
  if (by_name_.count(name)) throw ValidationError("duplicate parameter name " + name);
  const auto id = static_cast<ParamId>(params_.size());
  by_name_.emplace(name, id);
  params_.push_back({std::move(name), std::move(value)});
  return id;
}

ParamId ParameterStore::add_normal(std::string name, int rows, int cols, double stddev,
                                   std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return add(std::move(name), std::move(m));
}

ParamId ParameterStore::add_constant(std::string name, int rows, int cols, double fill) {
  return add(std::move(name), Matrix::Constant(rows, cols, fill));
}

ParamId ParameterStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

GradientBuffer::GradientBuffer(const ParameterStore& store)
    : store_(&store), grads_(store.size()), touched_(store.size(), false) {}

void GradientBuffer::accumulate(ParamId id, const Matrix& grad) {
  const auto i = static_cast<std::size_t>(id);
  if (!touched_[i]) {
    grads_[i] = grad;
    touched_[i] = true;
  } else {
    grads_[i] += grad;
  }
}

void GradientBuffer::add_scaled(const GradientBuffer& other, double scale) {
  if (grads_.size() != other.grads_.size()) {
    throw ValidationError("GradientBuffer::add_scaled: size mismatch");
  }
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (!other.touched_[i]) continue;
    if (!touched_[i]) {
      grads_[i] = scale * other.grads_[i];
      touched_[i] = true;
    } else {
      grads_[i] += scale * other.grads_[i];
    }
  }
}

void GradientBuffer::scale(double factor) {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (touched_[i]) grads_[i] *= factor;
  }
}

double GradientBuffer::squared_norm() const {
  double total = 0.0;
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (touched_[i]) total += grads_[i].squaredNorm();
  }
  return total;
}

bool GradientBuffer::all_zero() const {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (touched_[i] && !grads_[i].isZero(0.0)) return false;
  }
  return true;
}

void GradientBuffer::clear() {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    grads_[i].resize(0, 0);
    touched_[i] = false;
  }
}

}  // namespace saco::ad
