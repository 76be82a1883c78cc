#include "saco/contrastive.hpp"

#include "saco/error.hpp"

namespace saco::contrastive {

namespace {

void check_batch(std::size_t negatives, double tau) {
  if (negatives == 0) throw ValidationError("contrastive loss needs at least one negative");
  if (!(tau > 0.0)) throw ValidationError("temperature must be positive");
}

}  // namespace

double cosine_sim(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ValidationError("cosine_sim: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw ValidationError("cosine_sim: zero-norm vector");
  return a.dot(b) / (na * nb);
}

Var info_nce(Var anchor, Var positive, const std::vector<Var>& negatives, double tau) {
  check_batch(negatives.size(), tau);
  std::vector<Var> sims;
  sims.reserve(negatives.size() + 1);
  sims.push_back(ad::cosine(anchor, positive));
  for (const Var& n : negatives) sims.push_back(ad::cosine(anchor, n));
  Var logits = ad::scale(ad::concat_cols(sims), 1.0 / tau);
  return ad::sub(ad::logsumexp_row(logits), ad::slice_cols(logits, 0, 1));
}

double info_nce(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                const Matrix& negatives, double tau) {
  ad::ParameterStore empty;
  ad::Graph g(empty, false);
  std::vector<Var> negs;
  for (Eigen::Index i = 0; i < negatives.rows(); ++i) negs.push_back(g.constant(negatives.row(i)));
  return info_nce(g.constant(anchor.transpose()), g.constant(positive.transpose()), negs, tau).scalar();
}

Var svc_loss(const encoders::FusedRepresentation& anchor,
             const encoders::FusedRepresentation& positive,
             const std::vector<encoders::FusedRepresentation>& negatives, double tau) {
  check_batch(negatives.size(), tau);
  std::vector<Var> visual_negs;
  std::vector<Var> style_negs;
  for (const auto& n : negatives) {
    visual_negs.push_back(encoders::pool(n.v_s));
    style_negs.push_back(n.s_v);
  }
  Var visual = info_nce(encoders::pool(anchor.v_s), encoders::pool(positive.v_s), visual_negs, tau);
  Var style = info_nce(anchor.s_v, positive.s_v, style_negs, tau);
  return ad::add(visual, style);
}

Var stc_loss(Var h, Var h_positive, const std::vector<Var>& h_negatives, double tau) {
  return info_nce(h, h_positive, h_negatives, tau);
}

}  // namespace saco::contrastive
