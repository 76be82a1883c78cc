#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "saco/autograd/graph.hpp"
#include "saco/autograd/parameters.hpp"
#include "saco/core/dataset.hpp"
#include "saco/data.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using saco::ad::Graph;
using saco::ad::GradientBuffer;
using saco::ad::Matrix;
using saco::ad::ParamId;
using saco::ad::ParameterStore;
using saco::ad::Var;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("saco_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct GradReport {
  double max_rel_error = 0.0;
  std::string worst;  // name of the parameter with the largest error
  int checked = 0;
};

// Compares backward() against central differences for every entry of the
// listed parameters (all when empty). The error of a parameter is
// ||analytic - numeric|| / (||analytic|| + ||numeric||), or the plain
// difference when both norms are below 1e-7.
inline GradReport check_gradients(ParameterStore& store, const std::function<Var(Graph&)>& loss,
                                  std::vector<ParamId> ids = {}, double step = 1e-5) {
  if (ids.empty()) {
    for (std::size_t i = 0; i < store.size(); ++i) ids.push_back(static_cast<ParamId>(i));
  }
  GradientBuffer analytic(store);
  {
    Graph g(store);
    g.backward(loss(g), analytic);
  }
  const auto eval = [&]() {
    Graph g(store, false);
    return loss(g).scalar();
  };
  GradReport report;
  for (ParamId id : ids) {
    auto& w = store[id].value;
    Matrix numeric = Matrix::Zero(w.rows(), w.cols());
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      const double orig = w.data()[k];
      w.data()[k] = orig + step;
      const double up = eval();
      w.data()[k] = orig - step;
      const double down = eval();
      w.data()[k] = orig;
      numeric.data()[k] = (up - down) / (2.0 * step);
    }
    const Matrix a = analytic.touched(id) ? analytic[id] : Matrix::Zero(w.rows(), w.cols());
    // Parameters with an exactly vanishing gradient (key biases under
    // softmax) only see finite-difference noise; judge those absolutely.
    const double diff = (a - numeric).norm();
    const double scale = a.norm() + numeric.norm();
    const double err = scale < 1e-7 ? diff : diff / std::max(scale, 1e-12);
    ++report.checked;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst = store[id].name;
    }
  }
  return report;
}

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

struct SyntheticFixture {
  saco::data::Manifest manifest;
  saco::core::Vocabulary vocab;
  saco::core::Dataset dataset;
};

inline SyntheticFixture make_synthetic(const fs::path& dir, saco::data::SyntheticSpec spec = {}) {
  SyntheticFixture f;
  f.manifest = saco::data::generate_synthetic(spec, dir);
  f.vocab = saco::core::build_vocab(saco::data::caption_corpus(f.manifest), 1);
  f.dataset = saco::data::build_dataset(f.manifest, f.vocab);
  return f;
}

}  // namespace testing_support
