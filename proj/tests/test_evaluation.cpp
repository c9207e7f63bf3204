#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"
#include "synmt/evaluation.hpp"

using namespace synmt;

using synmt::testing::words;

namespace {

synmt::testing::BleuFixture load_fixture() {
  return synmt::testing::load_bleu_fixture(std::string(SYNMT_TEST_DATA) + "/bleu_fixture.json");
}

}  // namespace

TEST_CASE("BLEU of an exact match is 1 and of disjoint text is 0") {
  const Sentence s = words("the cat sat on the mat");
  CHECK(bleu({s}, {{s}}) == doctest::Approx(1.0));
  CHECK(bleu({words("a b c d e")}, {{words("v w x y z")}}) == 0.0);
  CHECK(bleu({words("The CAT sat on the mat")}, {{s}}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(bleu({}, {}), UsageError);
}

TEST_CASE("BLEU on the fixture matches two independent computations") {
  const auto f = load_fixture();
  REQUIRE(f.hyps.size() == 20);
  const double ours = bleu(f.hyps, f.refs);
  CHECK(std::abs(ours - synmt::testing::reference_bleu(f.hyps, f.refs)) < 1e-12);
  CHECK(std::abs(ours - synmt::testing::kNltkFixtureBleu) < 1e-3);
}

TEST_CASE("BLEU ignores sentence order; dropping a reference never helps on the fixture") {
  auto f = load_fixture();
  const double base = bleu(f.hyps, f.refs);
  Rng rng(4);
  std::vector<std::size_t> perm(f.hyps.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  synmt::testing::BleuFixture g;
  for (std::size_t i : perm) {
    g.hyps.push_back(f.hyps[i]);
    g.refs.push_back(f.refs[i]);
  }
  CHECK(bleu(g.hyps, g.refs) == doctest::Approx(base).epsilon(1e-12));
  for (auto& rs : f.refs) {
    if (rs.size() > 1) rs.pop_back();
  }
  CHECK(bleu(f.hyps, f.refs) <= base + 1e-12);
}

TEST_CASE("length buckets") {
  const auto f = load_fixture();
  std::vector<std::size_t> lens;
  for (const auto& h : f.hyps) lens.push_back(h.size());
  const auto one = bleu_by_length(f.hyps, f.refs, lens, {});
  REQUIRE(one.size() == 1);
  CHECK(one[0].bleu == doctest::Approx(bleu(f.hyps, f.refs)).epsilon(1e-12));

  const auto split = bleu_by_length(f.hyps, f.refs, lens, {10});
  REQUIRE(split.size() == 2);
  BleuStats sum = split[0].stats;
  sum += split[1].stats;
  const BleuStats whole = corpus_bleu_stats(f.hyps, f.refs);
  CHECK(sum.matches == whole.matches);
  CHECK(sum.totals == whole.totals);
  CHECK(sum.hyp_length == whole.hyp_length);
  CHECK(sum.ref_length == whole.ref_length);
  CHECK(split[0].sentences + split[1].sentences == 20);
  CHECK(split[1].label() == ">10");

  const auto absent = bleu_by_length(f.hyps, f.refs, std::vector<std::size_t>(20, 3), {10});
  REQUIRE(absent.size() == 1);
  CHECK(absent[0].label() == "0-10");
}

TEST_CASE("AER hand cases") {
  GoldAlignment g;
  g.sure = {{1, 1}};
  g.possible = {{1, 1}, {2, 2}};
  CHECK(aer({{{1, 1}, {2, 3}}}, {g}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  GoldAlignment same;
  same.sure = same.possible = {{0, 0}, {1, 2}};
  CHECK(aer({same.sure}, {same}) == 0.0);
  CHECK(aer({{{5, 5}}}, {same}) == 1.0);
  CHECK(aer({{}}, {GoldAlignment{}}) == 0.0);
}

TEST_CASE("gold alignment parsing") {
  const GoldAlignment g = parse_gold_alignment("0-0 1?2 3-1");
  CHECK(g.sure == AlignmentSet{{0, 0}, {3, 1}});
  CHECK(g.possible == AlignmentSet{{0, 0}, {1, 2}, {3, 1}});
  CHECK_THROWS_AS(parse_gold_alignment("0-"), DataError);
  CHECK_THROWS_AS(parse_gold_alignment("a-1"), DataError);
  CHECK(parse_pharaoh("2-0 0-1") == AlignmentSet{{0, 1}, {2, 0}});
  CHECK(format_pharaoh({{0, 1}, {2, 0}}) == "0-1 2-0");
}

TEST_CASE("AER on random instances matches a brute-force evaluator") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<AlignmentSet> hyps;
    std::vector<GoldAlignment> golds;
    double inter_s = 0, inter_p = 0, na = 0, ns = 0;
    for (int s = 0; s < 3; ++s) {
      AlignmentSet a;
      GoldAlignment g;
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          const double u = rng.uniform();
          if (u < 0.15) g.sure.emplace(i, j);
          if (u < 0.3) g.possible.emplace(i, j);
          if (rng.uniform() < 0.25) a.emplace(i, j);
        }
      }
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          const bool in_a = a.count({i, j}) > 0;
          inter_s += in_a && g.sure.count({i, j});
          inter_p += in_a && g.possible.count({i, j});
          na += in_a;
          ns += g.sure.count({i, j});
        }
      }
      hyps.push_back(a);
      golds.push_back(g);
    }
    const double expected = na + ns == 0 ? 0.0 : 1.0 - (inter_s + inter_p) / (na + ns);
    CHECK(aer(hyps, golds) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("continuity classification") {
  const PhraseSpan np{"NP", 0, 1};
  CHECK(classify_span(np, {{0, 5}, {1, 6}}) == Continuity::Continuous);
  CHECK(classify_span(np, {{0, 5}, {1, 7}}) == Continuity::Discontinuous);
  CHECK(classify_span(np, {{2, 5}}) == Continuity::Untranslated);
  CHECK(classify_span(np, {{0, 5}, {1, 5}}) == Continuity::Continuous);
}

TEST_CASE("continuity on random fixtures matches a brute-force interval check") {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) CHECK(synmt::testing::continuity_matches_recount(rng));
}

TEST_CASE("over-translation counts repeated aligned tokens") {
  CHECK(over_translation(words("hong kong hong kong")) == 2);
  CHECK(over_translation(words("a b c")) == 0);
  CHECK(over_translation({}) == 0);
}

TEST_CASE("ROT on a five-word corpus by direct enumeration") {
  // Source word 0 ("NN") is rendered "x y x y", word 1 ("VV") "z", word 2
  // ("NN") "z z", words 3-4 ("DT") get nothing.
  const std::vector<std::vector<std::string>> tags = {{"NN", "VV", "NN", "DT", "DT"}};
  const std::vector<Sentence> targets = {words("x y x y z z z")};
  const AlignmentSet a = {{0, 0}, {0, 1}, {0, 2}, {0, 3}, {1, 4}, {2, 5}, {2, 6}};
  const std::map<std::string, std::vector<std::string>> groups = {{"NN", {"NN"}}, {"VV", {"VV"}}, {"DT", {"DT"}}};
  const auto r = rot(tags, {a}, targets, groups);
  CHECK(r.at("NN").words == 2);
  CHECK(r.at("NN").repeated == 3);  // (4 - 2) + (2 - 1)
  CHECK(r.at("NN").rot() == doctest::Approx(1.5));
  CHECK(r.at("VV").rot() == 0.0);
  CHECK(r.at("DT").rot() == 0.0);
  CHECK(r.at("ALL").words == 5);
  CHECK(r.at("ALL").aligned == 7);
  CHECK(r.at("ALL").unique == 4);
  CHECK(r.at("ALL").rot() == doctest::Approx(3.0 / 5.0));
}

TEST_CASE("ROT of a bijective alignment is zero") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    AlignmentSet a;
    Sentence tgt;
    for (std::size_t i = 0; i < n; ++i) {
      a.emplace(static_cast<int>(i), static_cast<int>(perm[i]));
      tgt.push_back("t" + std::to_string(rng.below(3)));
    }
    const auto r = rot({std::vector<std::string>(n, "NN")}, {a}, {tgt}, {});
    CHECK(r.at("ALL").rot() == 0.0);
  }
}

TEST_CASE("rare word classes") {
  CHECK(classify_rare({}) == RareOutcome::Untranslated);
  CHECK(classify_rare({"<unk>"}) == RareOutcome::Unk);
  CHECK(classify_rare({"<unk>", "bank"}) == RareOutcome::NonUnk);
}

TEST_CASE("rare-word report on random fixtures matches a recount") {
  Rng rng(91);
  for (int trial = 0; trial < 100; ++trial) CHECK(synmt::testing::rare_report_matches_recount(rng));
}

TEST_CASE("report renders JSON and a table") {
  DiagnosticReport r;
  r.alignment_source = "translation";
  r.corpus_bleu = 0.25;
  r.aer = 0.5;
  r.continuity["NP"].counts = {3, 1, 0};
  r.rot["ALL"] = RotGroup{4, 2, 6, 4};
  r.rare_words["ALL"].counts = {1, 1, 2};
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["bleu"] == 0.25);
  CHECK(j["continuity"]["NP"]["cont"] == 75.0);
  CHECK(j["rot"]["ALL"]["rot"] == 0.5);
  CHECK(j["rare_words"]["ALL"]["un"] == 50.0);
  CHECK(r.to_table().find("ROT") != std::string::npos);
}
