#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "synmt/model.hpp"

using namespace synmt;
using synmt::testing::tiny_fixture;

namespace {

// Closed-form parameter count written out per component.
std::size_t expected_params(const ModelConfig& c) {
  const std::size_t E = c.word_emb_dim, H = c.hidden_dim, L = c.label_emb_dim, LH = c.label_hidden_dim;
  auto gru = [](std::size_t in, std::size_t h) { return in * 3 * h + 3 * h + 3 * h * h; };
  std::size_t A = 2 * H, word_in = E, n = 0;
  if (c.variant == Variant::Parallel) A += 2 * LH;
  if (c.variant == Variant::Hierarchical) word_in += 2 * LH;
  n += c.source_vocab * E + c.target_vocab * E;
  n += 2 * gru(word_in, H);
  if (uses_labels(c.variant)) n += c.label_vocab * L + 2 * gru(L, LH);
  n += H * H + A * H + H + H;  // attention
  n += H * H + H;              // decoder initial state
  n += gru(E + A, H);
  n += H * E + E * E + A * E + E + E * c.target_vocab + c.target_vocab;
  return n;
}

const Variant kAll[] = {Variant::Baseline, Variant::Parallel, Variant::Hierarchical, Variant::Mixed};

}  // namespace

TEST_CASE("parameter count equals the closed form for every variant") {
  for (Variant v : kAll) {
    ModelConfig c;
    c.variant = v;
    CHECK(count_params(Model(c).params()) == expected_params(c));
    auto f = tiny_fixture(v);
    CHECK(count_params(Model(f.config).params()) == expected_params(f.config));
  }
}

TEST_CASE("full-size parameter deltas against the baseline") {
  ModelConfig c;
  const auto base = static_cast<double>(count_params(Model(c).params()));
  auto delta = [&](Variant v) {
    c.variant = v;
    return static_cast<double>(count_params(Model(c).params())) - base;
  };
  CHECK(delta(Variant::Mixed) == 0.0);
  CHECK(delta(Variant::Parallel) >= 0.94e6);
  CHECK(delta(Variant::Parallel) <= 1.27e6);
  CHECK(delta(Variant::Hierarchical) >= 1.02e6);
  CHECK(delta(Variant::Hierarchical) <= 1.38e6);
}

TEST_CASE("invalid configurations are rejected") {
  ModelConfig c;
  c.hidden_dim = 0;
  CHECK_THROWS_AS(Model{c}, UsageError);
  c = ModelConfig{};
  c.dropout = 1.0;
  CHECK_THROWS_AS(Model{c}, UsageError);
}

TEST_CASE("initialization is deterministic with orthogonal recurrences") {
  auto f = tiny_fixture(Variant::Parallel);
  const Model a = Model::init(f.config, 4), b = Model::init(f.config, 4), c = Model::init(f.config, 5);
  for (const auto& [name, t] : a.params().tensors()) CHECK(t.storage() == b.params().at(name).storage());
  CHECK(a.params().at("src_emb").storage() != c.params().at("src_emb").storage());

  const Tensor& u = a.params().at("enc.fwd.U_cand");
  const std::size_t n = u.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < n; ++k) dot += u.at(k, i) * u.at(k, j);
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-12);
    }
  }
  for (double x : a.params().at("dec.b").data()) CHECK(x == 0.0);
  for (double x : a.params().at("tgt_emb").data()) CHECK(std::abs(x) <= 0.01);
}

TEST_CASE("all-zero weights give n ln V per target token") {
  for (Variant v : kAll) {
    auto f = tiny_fixture(v);
    const Model m(f.config);
    const ExamplePair& ex = f.examples[0];
    const double expected = static_cast<double>(ex.target.size()) * std::log(static_cast<double>(f.config.target_vocab));
    CHECK(m.sentence_loss(ex) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("batched loss equals the sum of per-sentence losses and ignores padding") {
  for (Variant v : kAll) {
    auto f = tiny_fixture(v);
    Model m = Model::init(f.config, 3);
    for (auto& [name, t] : m.params().tensors()) {
      Rng rng(name.size());
      for (double& x : t.data()) x += rng.uniform(-0.3, 0.3);
    }
    Batch batch = make_batch(f.examples, {0, 1, 2}, v);
    double individual = 0.0;
    for (const auto& ex : f.examples) individual += m.sentence_loss(ex);
    Tape t1(false);
    const double batched = m.batch_loss(t1, batch, nullptr, false).value()[0];
    CHECK(batched == doctest::Approx(individual).epsilon(1e-10));

    // Overwrite every padded source id; the loss must not move at all.
    Rng rng(1);
    for (IdGrid* g : {&batch.source, &batch.labels, &batch.mixed}) {
      for (std::size_t t = 0; t < g->steps; ++t) {
        for (std::size_t b = 0; b < g->batch; ++b) {
          if (t >= g->lengths[b]) g->ids[t * g->batch + b] = static_cast<TokenId>(3 + rng.below(3));
        }
      }
    }
    Tape t2(false);
    CHECK(m.batch_loss(t2, batch, nullptr, false).value()[0] == batched);
  }
}

TEST_CASE("GRU step gradient agrees with central differences") {
  auto f = tiny_fixture(Variant::Baseline);
  Model m = Model::init(f.config, 8);
  const Batch batch = make_batch(f.examples, {0}, Variant::Baseline);
  std::vector<Tensor*> params = {&m.params().at("enc.fwd.W"), &m.params().at("enc.fwd.U_gates"),
                                 &m.params().at("enc.fwd.U_cand"), &m.params().at("src_emb")};
  auto loss = [&](Tape& tape) {
    EncoderOutput enc = m.encode(tape, batch);
    return sum(mul(enc.annotations[0], enc.annotations[1]));
  };
  Rng rng(2);
  CHECK(grad_check(loss, params, 1e-5, 40, rng) < 1e-5);
}

TEST_CASE("whole-model gradient agrees with central differences for each variant") {
  for (Variant v : kAll) {
    CAPTURE(to_string(v));
    auto f = tiny_fixture(v);
    Model m = Model::init(f.config, 9);
    const Batch batch = make_batch(f.examples, {0, 1, 2}, v);
    std::vector<Tensor*> params;
    for (auto& [name, t] : m.params().tensors()) params.push_back(&t);
    auto loss = [&](Tape& tape) { return m.batch_loss(tape, batch, nullptr, false); };
    Rng rng(3);
    CHECK(grad_check(loss, params, 1e-5, 15, rng) < 1e-4);
  }
}
