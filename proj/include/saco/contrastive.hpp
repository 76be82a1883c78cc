#pragma once

#include <vector>

#include "saco/encoders.hpp"

namespace saco::contrastive {

using ad::Matrix;
using ad::Var;

inline constexpr double kDefaultTemperature = 0.08;

// Plain cosine similarity of two equal-length vectors; throws ValidationError
// on a zero-norm input.
double cosine_sim(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// -log softmax over [sim(a,p), sim(a,n_1), ..., sim(a,n_M)] / tau, evaluated
// at the positive. Inputs are 1 x d rows.
Var info_nce(Var anchor, Var positive, const std::vector<Var>& negatives, double tau);

// Value-only overload; `negatives` holds one negative per row.
double info_nce(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                const Matrix& negatives, double tau);

// Visual term over pooled V^s plus style term over s^v, summed unweighted.
Var svc_loss(const encoders::FusedRepresentation& anchor,
             const encoders::FusedRepresentation& positive,
             const std::vector<encoders::FusedRepresentation>& negatives, double tau);

Var stc_loss(Var h, Var h_positive, const std::vector<Var>& h_negatives, double tau);

}  // namespace saco::contrastive
