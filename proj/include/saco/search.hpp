#pragma once

#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "saco/core/vocab.hpp"

// Decoding strategies over an abstract next-token model. The model is a
// function from a prefix (always starting with <SOS>) to log-probabilities
// over the vocabulary. Returned token sequences exclude <SOS> and include the
// terminating <EOS> when one was produced.
namespace saco::search {

using core::TokenId;
using core::TokenSeq;

using LogProbFn = std::function<Eigen::VectorXd(const TokenSeq& prefix)>;

struct Hypothesis {
  TokenSeq tokens;
  double log_prob = 0.0;

  double normalized() const;  // log_prob / tokens.size()
};

struct SampledCaption {
  TokenSeq tokens;
  std::vector<double> log_probs;  // model log-probability of each drawn token
  double total_log_prob() const;
};

// Lowest index wins ties.
TokenId argmax(const Eigen::VectorXd& scores);

// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform01(std::mt19937_64& rng);

// Inverse-CDF draw from an (unnormalized, non-negative) weight vector.
int sample_categorical(std::span<const double> weights, std::mt19937_64& rng);

Hypothesis greedy(const LogProbFn& model, int max_len);

// temperature == 0 selects the argmax at every step.
SampledCaption sample(const LogProbFn& model, int max_len, std::mt19937_64& rng,
                      double temperature = 1.0);

// Length-normalized beam search. Hypotheses are expanded by cumulative
// log-probability and retired at <EOS>; the winner maximizes
// log_prob / length among retired hypotheses, the survivors at max_len, and
// the greedy path.
Hypothesis beam(const LogProbFn& model, int beam_size, int max_len);

}  // namespace saco::search
