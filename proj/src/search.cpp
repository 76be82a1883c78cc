#include "saco/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "saco/error.hpp"

namespace saco::search {

namespace {

TokenSeq with_sos(const TokenSeq& tokens) {
  TokenSeq prefix;
  prefix.reserve(tokens.size() + 1);
  prefix.push_back(core::kSos);
  prefix.insert(prefix.end(), tokens.begin(), tokens.end());
  return prefix;
}

void require_max_len(int max_len) {
  if (max_len < 1) throw ValidationError("decoding needs max_len >= 1");
}

}  // namespace

double Hypothesis::normalized() const {
  return tokens.empty() ? -std::numeric_limits<double>::infinity()
                        : log_prob / static_cast<double>(tokens.size());
}

double SampledCaption::total_log_prob() const {
  return std::accumulate(log_probs.begin(), log_probs.end(), 0.0);
}

TokenId argmax(const Eigen::VectorXd& scores) {
  TokenId best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = static_cast<TokenId>(i);
  }
  return best;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int sample_categorical(std::span<const double> weights, std::mt19937_64& rng) {
  if (weights.empty()) throw ValidationError("sample_categorical: empty distribution");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw ValidationError("sample_categorical: weights sum to zero");
  const double target = uniform01(rng) * total;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    cumulative += weights[i];
    if (target < cumulative) return static_cast<int>(i);
  }
  // Rounding can leave target == total; fall back to the last non-zero entry.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

Hypothesis greedy(const LogProbFn& model, int max_len) {
  require_max_len(max_len);
  Hypothesis h;
  while (static_cast<int>(h.tokens.size()) < max_len) {
    const Eigen::VectorXd lp = model(with_sos(h.tokens));
    const TokenId next = argmax(lp);
    h.tokens.push_back(next);
    h.log_prob += lp(next);
    if (next == core::kEos) break;
  }
  return h;
}

SampledCaption sample(const LogProbFn& model, int max_len, std::mt19937_64& rng,
                      double temperature) {
  require_max_len(max_len);
  if (temperature < 0.0) throw ValidationError("sample: negative temperature");
  SampledCaption out;
  std::vector<double> weights;
  while (static_cast<int>(out.tokens.size()) < max_len) {
    const Eigen::VectorXd lp = model(with_sos(out.tokens));
    TokenId next;
    if (temperature == 0.0) {
      next = argmax(lp);
    } else {
      const double mx = lp.maxCoeff();
      weights.resize(static_cast<std::size_t>(lp.size()));
      for (Eigen::Index i = 0; i < lp.size(); ++i) {
        weights[static_cast<std::size_t>(i)] = std::exp((lp(i) - mx) / temperature);
      }
      next = static_cast<TokenId>(sample_categorical(weights, rng));
    }
    out.tokens.push_back(next);
    out.log_probs.push_back(lp(next));
    if (next == core::kEos) break;
  }
  return out;
}

Hypothesis beam(const LogProbFn& model, int beam_size, int max_len) {
  require_max_len(max_len);
  if (beam_size < 1) throw ValidationError("beam search needs beam >= 1");

  struct Expansion {
    double log_prob;
    std::size_t parent;
    TokenId token;
  };

  std::vector<Hypothesis> alive{Hypothesis{}};
  std::vector<Hypothesis> finished;
  std::vector<Expansion> expansions;
  for (int step = 0; step < max_len && !alive.empty() &&
                     static_cast<int>(finished.size()) < beam_size;
       ++step) {
    expansions.clear();
    for (std::size_t a = 0; a < alive.size(); ++a) {
      const Eigen::VectorXd lp = model(with_sos(alive[a].tokens));
      for (Eigen::Index t = 0; t < lp.size(); ++t) {
        expansions.push_back({alive[a].log_prob + lp(t), a, static_cast<TokenId>(t)});
      }
    }
    const auto keep = std::min<std::size_t>(static_cast<std::size_t>(beam_size), expansions.size());
    std::partial_sort(expansions.begin(), expansions.begin() + static_cast<std::ptrdiff_t>(keep),
                      expansions.end(), [](const Expansion& x, const Expansion& y) {
                        if (x.log_prob != y.log_prob) return x.log_prob > y.log_prob;
                        if (x.parent != y.parent) return x.parent < y.parent;
                        return x.token < y.token;
                      });
    std::vector<Hypothesis> next_alive;
    for (std::size_t i = 0; i < keep; ++i) {
      Hypothesis h = alive[expansions[i].parent];
      h.tokens.push_back(expansions[i].token);
      h.log_prob = expansions[i].log_prob;
      if (expansions[i].token == core::kEos) {
        finished.push_back(std::move(h));
      } else {
        next_alive.push_back(std::move(h));
      }
    }
    alive = std::move(next_alive);
  }
  for (auto& h : alive) finished.push_back(std::move(h));

  Hypothesis best = greedy(model, max_len);
  for (const auto& h : finished) {
    if (h.normalized() > best.normalized()) best = h;
  }
  return best;
}

}  // namespace saco::search
