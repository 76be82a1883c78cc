#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace saco::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ParamId = int;

struct Parameter {
  std::string name;
  Matrix value;
};

// Named, ordered collection of trainable arrays. Ids are dense and stable.
class ParameterStore {
 public:
  ParamId add(std::string name, Matrix value);
  ParamId add_normal(std::string name, int rows, int cols, double stddev, std::mt19937_64& rng);
  ParamId add_constant(std::string name, int rows, int cols, double fill);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](ParamId id) { return params_.at(static_cast<std::size_t>(id)); }
  const Parameter& operator[](ParamId id) const { return params_.at(static_cast<std::size_t>(id)); }
  ParamId find(const std::string& name) const;  // -1 when absent
  std::size_t num_scalars() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, ParamId> by_name_;
};

// Gradient accumulator shaped like a ParameterStore. Slots are allocated on
// first touch so untouched parameters cost nothing.
class GradientBuffer {
 public:
  GradientBuffer() = default;
  explicit GradientBuffer(const ParameterStore& store);

  void accumulate(ParamId id, const Matrix& grad);
  bool touched(ParamId id) const { return touched_[static_cast<std::size_t>(id)]; }
  const Matrix& operator[](ParamId id) const { return grads_[static_cast<std::size_t>(id)]; }
  Matrix& operator[](ParamId id) { return grads_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return grads_.size(); }

  // this += scale * other, slot by slot.
  void add_scaled(const GradientBuffer& other, double scale);
  void scale(double factor);
  double squared_norm() const;
  bool all_zero() const;
  void clear();

 private:
  const ParameterStore* store_ = nullptr;
  std::vector<Matrix> grads_;
  std::vector<bool> touched_;
};

}  // namespace saco::ad
