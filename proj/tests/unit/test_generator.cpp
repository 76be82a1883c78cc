#include <doctest.h>

#include <cmath>

#include "saco/error.hpp"
#include "saco/generator.hpp"
#include "support.hpp"

using namespace saco;
using namespace saco::generator;
using testing_support::check_gradients;
using testing_support::random_matrix;

namespace {

struct Toy {
  std::mt19937_64 rng{41};
  ParameterStore store;
  DecoderConfig cfg;
  Decoder dec;
  Matrix v_s;
  Matrix s_v;

  explicit Toy(bool style_token = true, int vocab = 9) {
    cfg.d = 8;
    cfg.d_h = 8;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.vocab_size = vocab;
    cfg.m = 3;
    cfg.use_style_token = style_token;
    dec = Decoder::create(store, "dec", cfg, rng);
    v_s = random_matrix(3, 8, rng);
    s_v = random_matrix(1, 8, rng);
  }

  Matrix logits(const TokenSeq& prefix) {
    Graph g(store, false);
    return dec(g, g.constant(v_s), g.constant(s_v), prefix).logits.value();
  }
};

}  // namespace

TEST_CASE("decoder output shapes and normalized distributions") {
  Toy t;
  const TokenSeq prefix = {core::kSos, 5, 6, 7};
  Graph g(t.store);
  const auto st = t.dec(g, g.constant(t.v_s), g.constant(t.s_v), prefix);
  CHECK(st.hidden.rows() == 4);
  CHECK(st.hidden.cols() == 8);
  CHECK(st.logits.rows() == 4);
  CHECK(st.logits.cols() == 9);
  const auto lp = ad::log_softmax_rows(st.logits).value();
  for (int r = 0; r < 4; ++r) CHECK(std::abs(lp.row(r).array().exp().sum() - 1.0) <= 1e-6);
}

TEST_CASE("decoder is causal") {
  Toy t;
  const TokenSeq base = {core::kSos, 4, 5, 6, 7, 8};
  const auto ref = t.logits(base);
  for (std::size_t j = 1; j < base.size(); ++j) {
    TokenSeq changed = base;
    changed[j] = changed[j] == 4 ? 5 : 4;
    const auto out = t.logits(changed);
    for (std::size_t i = 0; i < base.size(); ++i) {
      const bool same = out.row(static_cast<Eigen::Index>(i)) == ref.row(static_cast<Eigen::Index>(i));
      CAPTURE(i);
      CAPTURE(j);
      if (i < j) {
        CHECK(same);
      } else if (i == j) {
        CHECK(!same);
      }
    }
  }
}

TEST_CASE("decoder is deterministic") {
  Toy t;
  const TokenSeq p = {core::kSos, 4, 5};
  CHECK(t.logits(p) == t.logits(p));
}

TEST_CASE("decoder prefix validation") {
  Toy t;
  Graph g(t.store);
  const auto vs = g.constant(t.v_s);
  const auto sv = g.constant(t.s_v);
  CHECK_THROWS_AS(t.dec(g, vs, sv, TokenSeq{}), ValidationError);
  CHECK_THROWS_AS(t.dec(g, vs, sv, TokenSeq{4, 5}), ValidationError);
  CHECK_THROWS_AS(t.dec(g, vs, sv, TokenSeq{core::kSos, 42}), ValidationError);
  TokenSeq long_prefix(31, 4);
  long_prefix[0] = core::kSos;
  CHECK_THROWS_AS(t.dec(g, vs, sv, long_prefix), ValidationError);
  TokenSeq max_prefix(30, 4);
  max_prefix[0] = core::kSos;
  CHECK_NOTHROW(t.dec(g, vs, sv, max_prefix));
}

TEST_CASE("the style token flag controls whether s^v reaches the decoder") {
  Toy with(true), without(false);
  const TokenSeq p = {core::kSos, 4};
  Graph g1(with.store, false), g2(with.store, false);
  const auto a = with.dec(g1, g1.constant(with.v_s), g1.constant(with.s_v), p).logits.value();
  const auto b = with.dec(g2, g2.constant(with.v_s), g2.constant(Matrix(with.s_v * -3.0)), p).logits.value();
  CHECK(a != b);
  Graph g3(without.store, false), g4(without.store, false);
  const auto c = without.dec(g3, g3.constant(without.v_s), g3.constant(without.s_v), p).logits.value();
  const auto d =
      without.dec(g4, g4.constant(without.v_s), g4.constant(Matrix(without.s_v * -3.0)), p).logits.value();
  CHECK(c == d);
}

TEST_CASE("caption loss fixtures") {
  ParameterStore store;
  Graph g(store);
  SUBCASE("uniform logits give ln|V|") {
    const TokenSeq gold = {3, 5, 2};
    const auto loss = caption_loss(g.constant(Matrix::Zero(3, 8)), gold).scalar();
    CHECK(std::abs(loss - std::log(8.0)) <= 1e-9);
  }
  SUBCASE("confident correct logits give zero") {
    Matrix logits = Matrix::Constant(2, 6, -1e4);
    logits(0, 4) = 0.0;
    logits(1, 2) = 0.0;
    CHECK(caption_loss(g.constant(logits), TokenSeq{4, 2}).scalar() == doctest::Approx(0.0));
  }
  SUBCASE("p = 0.5 and 0.25 average to (ln2 + ln4)/2") {
    Matrix logits(2, 4);
    logits << std::log(0.5 / 3), std::log(0.5), std::log(0.5 / 3), std::log(0.5 / 3),  //
        std::log(0.75), std::log(0.25), std::log(1e-300), std::log(1e-300);
    const auto loss = caption_loss(g.constant(logits), TokenSeq{1, 1}).scalar();
    CHECK(loss == doctest::Approx((std::log(2.0) + std::log(4.0)) / 2.0).epsilon(1e-12));
    CHECK(loss == doctest::Approx(1.0397207708).epsilon(1e-9));
  }
  SUBCASE("pad positions are excluded") {
    Matrix logits = Matrix::Zero(3, 8);
    logits(2, 3) = 50.0;
    const auto with_pad = caption_loss(g.constant(logits), TokenSeq{5, 6, core::kPad}).scalar();
    CHECK(std::abs(with_pad - std::log(8.0)) <= 1e-9);
    CHECK_THROWS_AS(caption_loss(g.constant(Matrix::Zero(1, 8)), TokenSeq{core::kPad}), ValidationError);
    CHECK_THROWS_AS(caption_loss(g.constant(Matrix::Zero(2, 8)), TokenSeq{4}), ValidationError);
  }
}

TEST_CASE("triplet head averages the MLP over steps") {
  ParameterStore store;
  std::mt19937_64 rng(3);
  auto head = TripletHead::create(store, "tri", 2, 2, rng);
  head.mlp.linear = true;
  // Identity MLP: fc1 = I, fc2 = I, zero biases.
  store[head.mlp.fc1.weight].value = Matrix::Identity(2, 2);
  store[head.mlp.fc2.weight].value = Matrix::Identity(2, 2);
  store[head.mlp.fc1.bias].value.setZero();
  store[head.mlp.fc2.bias].value.setZero();
  Graph g(store);
  Matrix h(2, 2);
  h << 1, 0, 0, 1;
  const auto out = head(g, g.constant(h)).value();
  CHECK(out(0, 0) == 0.5);
  CHECK(out(0, 1) == 0.5);
  const Matrix one = h.row(0);
  CHECK(head(g, g.constant(one)).value() == one);

  // Linear mode is sign-equivariant and permutation-invariant.
  ParameterStore s2;
  auto lin = TripletHead::create(s2, "tri", 4, 3, rng);
  lin.mlp.linear = true;
  s2[lin.mlp.fc1.bias].value.setZero();
  s2[lin.mlp.fc2.bias].value.setZero();
  Graph g2(s2);
  const Matrix x = random_matrix(5, 4, rng);
  const auto y = lin(g2, g2.constant(x)).value();
  CHECK((lin(g2, g2.constant(Matrix(-x))).value() + y).cwiseAbs().maxCoeff() < 1e-12);
  Matrix xp = x;
  xp.row(0).swap(xp.row(4));
  CHECK((lin(g2, g2.constant(xp)).value() - y).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("teacher prefix shifts gold right behind <SOS>") {
  CHECK(teacher_prefix(TokenSeq{5, 6, core::kEos}) == TokenSeq{core::kSos, 5, 6});
}

TEST_CASE("decoder and triplet head gradients match central differences") {
  Toy t;
  const auto head = TripletHead::create(t.store, "tri", 8, 8, t.rng);
  const ParamId vs = t.store.add("probe.v_s", t.v_s);
  const ParamId sv = t.store.add("probe.s_v", t.s_v);
  const TokenSeq gold = {4, 7, 5, core::kEos};
  const Matrix readout = random_matrix(8, 1, t.rng);
  const auto rep = check_gradients(t.store, [&](Graph& g) {
    const auto st = t.dec(g, g.param(vs), g.param(sv), teacher_prefix(gold));
    Var loss = caption_loss(st.logits, gold);
    return ad::add(loss, ad::sum(ad::gelu(ad::matmul(head(g, st.hidden), g.constant(readout)))));
  });
  CAPTURE(rep.worst);
  CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("bound decoder search agrees with the raw model") {
  Toy t;
  const BoundDecoder bound(t.store, t.dec, t.v_s, t.s_v);
  const auto greedy = bound.greedy_decode(12);
  CHECK(greedy == bound.beam_search(1, 12));
  CHECK(greedy.size() <= 12);
  CHECK(bound.greedy_decode(12) == greedy);

  std::mt19937_64 rng(5);
  const auto cold = bound.sample_decode(rng, 12, 0.0);
  CHECK(cold.tokens == greedy);

  // Recorded log-probs equal teacher-forced log-probs of the sample.
  std::mt19937_64 rng2(6);
  const auto sample = bound.sample_decode(rng2, 12, 1.0);
  Graph g(t.store, false);
  const auto st = t.dec(g, g.constant(t.v_s), g.constant(t.s_v), teacher_prefix(sample.tokens));
  const auto lp = ad::log_softmax_rows(st.logits).value();
  double total = 0.0;
  for (std::size_t i = 0; i < sample.tokens.size(); ++i) {
    const double expected = lp(static_cast<Eigen::Index>(i), sample.tokens[i]);
    CHECK(sample.log_probs[i] == doctest::Approx(expected).epsilon(1e-12));
    total += expected;
  }
  CHECK(sample.total_log_prob() == doctest::Approx(total).epsilon(1e-12));

  // Beam output never scores below greedy under length normalization.
  const auto fn = bound.as_fn();
  const auto score = [&](const TokenSeq& toks) {
    TokenSeq prefix = {core::kSos};
    double lp_sum = 0.0;
    for (auto tok : toks) {
      lp_sum += fn(prefix)(tok);
      prefix.push_back(tok);
    }
    return lp_sum / static_cast<double>(toks.size());
  };
  for (int b = 1; b <= 4; ++b) CHECK(score(bound.beam_search(b, 12)) >= score(greedy) - 1e-12);
}
