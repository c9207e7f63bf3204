#include <doctest.h>

#include <cmath>
#include <functional>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "synmt/inference.hpp"

using namespace synmt;
using synmt::testing::TableSession;
using synmt::testing::tiny_fixture;

namespace {

const auto& kTable = synmt::testing::table_model();
using synmt::testing::exhaustive_best;

Model perturbed(const ModelConfig& c, std::uint64_t seed) {
  Model m = Model::init(c, seed);
  Rng rng(seed + 100);
  for (auto& [name, t] : m.params().tensors()) {
    for (double& x : t.data()) x += rng.uniform(-0.5, 0.5);
  }
  return m;
}

}  // namespace

TEST_CASE("beam search finds the exhaustive optimum of the table model") {
  TableSession s(kTable);
  const auto hyps = beam_search(s, 10, 3);
  CHECK(hyps.front().score() == doctest::Approx(exhaustive_best(kTable, 3)).epsilon(1e-12));
  TableSession g(kTable);
  const Hypothesis greedy = greedy_decode(g, 3);
  CHECK(greedy.score() < hyps.front().score());
}

TEST_CASE("wider beams never score worse on the table model") {
  double prev = -INFINITY;
  for (std::size_t b = 1; b <= 10; ++b) {
    TableSession s(kTable);
    const double score = beam_search(s, b, 3).front().score();
    CHECK(score >= prev - 1e-12);
    prev = score;
  }
}

TEST_CASE("beam of one equals greedy decoding on a model") {
  for (Variant v : {Variant::Baseline, Variant::Mixed}) {
    auto f = tiny_fixture(v);
    const Model m = perturbed(f.config, 6);
    for (const auto& ex : f.examples) {
      ModelSession a(m, ex), b(m, ex);
      const Hypothesis beam = beam_search(a, 1, 12).front();
      const Hypothesis greedy = greedy_decode(b, 12);
      CHECK(beam.tokens == greedy.tokens);
      CHECK(beam.log_prob == doctest::Approx(greedy.log_prob).epsilon(1e-12));
    }
  }
}

TEST_CASE("hypotheses keep one attention row per token and truncate at max_len") {
  auto f = tiny_fixture(Variant::Parallel);
  const Model m = perturbed(f.config, 7);
  const Hypothesis h = translate(m, f.examples[0], 4, 2);
  CHECK(h.tokens.size() <= 2);
  CHECK(h.attention.size() == h.tokens.size());
  for (const auto& row : h.attention) {
    CHECK(row.size() == f.examples[0].source.size());
    double s = 0;
    for (double a : row) s += a;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(translate(m, f.examples[0], 4).tokens == translate(m, f.examples[0], 4).tokens);
  CHECK(default_max_len(f.examples[0]) == 16);
  ModelSession s(m, f.examples[0]);
  CHECK_THROWS_AS(beam_search(s, 0, 5), UsageError);
}

TEST_CASE("forced decoding agrees with the training loss and ignores padding") {
  for (Variant v : {Variant::Baseline, Variant::Parallel, Variant::Hierarchical, Variant::Mixed}) {
    auto f = tiny_fixture(v);
    const Model m = perturbed(f.config, 8);
    const auto batched = force_decode(m, f.examples, {0, 1, 2});
    for (std::size_t i = 0; i < f.examples.size(); ++i) {
      const ForcedDecode alone = force_decode(m, f.examples[i]);
      CHECK(alone.log_prob == doctest::Approx(-m.sentence_loss(f.examples[i])).epsilon(1e-12));
      CHECK(batched[i].log_prob == doctest::Approx(alone.log_prob).epsilon(1e-12));
      REQUIRE(alone.attention.size() == f.examples[i].target.size());
      for (std::size_t t = 0; t < alone.attention.size(); ++t) {
        double s = 0;
        for (double a : alone.attention[t]) s += a;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        REQUIRE(batched[i].attention[t].size() == alone.attention[t].size());
        for (std::size_t j = 0; j < alone.attention[t].size(); ++j) {
          CHECK(batched[i].attention[t][j] == doctest::Approx(alone.attention[t][j]).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("alignment extraction") {
  CHECK(extract_alignment({{0, 1, 0, 0}, {0, 0, 1, 0}}, 3, 2) == AlignmentSet{{1, 0}, {2, 1}});
  CHECK(extract_alignment({{0.25, 0.25, 0.25, 0.25}}, 3, 1) == AlignmentSet{{0, 0}});
  // The EOS column and the EOS step are both ignored.
  CHECK(extract_alignment({{0.1, 0.2, 0.7}, {0.6, 0.3, 0.1}, {0, 0, 1}}, 2, 2) == AlignmentSet{{1, 0}, {0, 1}});
}

TEST_CASE("mixed-variant links always index source words") {
  auto f = tiny_fixture(Variant::Mixed);
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = perturbed(f.config, 20 + static_cast<std::uint64_t>(trial));
    for (const auto& ex : f.examples) {
      const ForcedDecode fd = force_decode(m, ex);
      const auto links = extract_alignment(fd.attention, ex.num_words(), ex.target.size() - 1);
      CHECK(links.size() == ex.target.size() - 1);
      for (const auto& [s, t] : links) {
        CHECK(s >= 0);
        CHECK(static_cast<std::size_t>(s) < ex.num_words());
        CHECK(static_cast<std::size_t>(t) < ex.target.size() - 1);
      }
    }
  }
}
