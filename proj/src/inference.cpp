#include "synmt/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "synmt/error.hpp"

namespace synmt {

std::vector<TokenId> Hypothesis::words() const {
  std::vector<TokenId> w = tokens;
  if (finished && !w.empty()) w.pop_back();
  return w;
}

namespace {

// Row-wise log-softmax of a logits matrix.
Tensor log_softmax_rows(const Tensor& logits) {
  Tensor out(logits.shape());
  const std::size_t R = logits.rows(), C = logits.cols();
  for (std::size_t r = 0; r < R; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, logits.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(logits.at(r, c) - mx);
    const double lz = mx + std::log(z);
    for (std::size_t c = 0; c < C; ++c) out.at(r, c) = logits.at(r, c) - lz;
  }
  return out;
}

AttentionRow row_of(const Tensor* t, std::size_t r) {
  if (!t) return {};
  const std::size_t C = t->cols();
  return AttentionRow(t->storage().begin() + static_cast<std::ptrdiff_t>(r * C),
                      t->storage().begin() + static_cast<std::ptrdiff_t>((r + 1) * C));
}

}  // namespace

// ---- model session -------------------------------------------------------------

ModelSession::ModelSession(const Model& model, const ExamplePair& example)
    : model_(model), batch_(make_batch({example}, {0}, model.config().variant)) {
  enc_ = model_.encode(tape_, batch_);
  state_ = model_.init_decoder(tape_, enc_);
  run_step();
}

const EncoderOutput& ModelSession::tiled(std::size_t rows) {
  if (rows == 1) return enc_;
  for (const auto& [k, e] : tiled_) {
    if (k == rows) return e;
  }
  EncoderOutput e;
  for (Var a : enc_.annotations) e.annotations.push_back(tile_rows(a, rows));
  for (Var k : enc_.keys) e.keys.push_back(tile_rows(k, rows));
  e.mask = Tensor({rows, enc_.mask.cols()});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < enc_.mask.cols(); ++c) e.mask.at(r, c) = enc_.mask.at(0, c);
  }
  tiled_.emplace_back(rows, std::move(e));
  return tiled_.back().second;
}

void ModelSession::run_step() {
  StepOutput out = model_.decoder_step(tape_, state_, tiled(state_.y_prev.size()), nullptr, false);
  log_probs_ = log_softmax_rows(out.logits.value());
  alpha_ = out.state.alpha.value();
  state_ = std::move(out.state);
}

void ModelSession::advance(const std::vector<std::size_t>& parents, const std::vector<TokenId>& tokens) {
  if (parents.size() != tokens.size() || parents.empty()) {
    throw UsageError("advance: need one token per kept row, got " + std::to_string(parents.size()) + " rows and " +
                     std::to_string(tokens.size()) + " tokens");
  }
  std::vector<std::int32_t> ids(parents.begin(), parents.end());
  state_.s = lookup(state_.s, ids);
  state_.y_prev = tokens;
  run_step();
}

// ---- search -------------------------------------------------------------------

std::vector<Hypothesis> beam_search(DecoderSession& session, std::size_t beam, std::size_t max_len) {
  if (beam == 0) throw UsageError("beam_search: beam must be at least 1");
  if (max_len == 0) throw UsageError("beam_search: max_len must be at least 1");
  const std::size_t V = session.vocab_size();
  const TokenId eos = session.eos();

  std::vector<Hypothesis> live(1), finished;
  struct Cand {
    double lp;
    std::size_t row;
    TokenId tok;
  };
  std::vector<Cand> cands;
  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    const Tensor& lp = session.log_probs();
    const Tensor* att = session.attention();
    if (lp.rows() != live.size() || lp.cols() != V) {
      throw DimensionError("beam_search: session returned " + shape_str(lp.shape()) + " for " +
                           std::to_string(live.size()) + " rows");
    }
    cands.clear();
    cands.reserve(live.size() * V);
    for (std::size_t r = 0; r < live.size(); ++r) {
      for (std::size_t w = 0; w < V; ++w) cands.push_back({live[r].log_prob + lp.at(r, w), r, static_cast<TokenId>(w)});
    }
    const std::size_t keep = std::min(beam - finished.size(), cands.size());
    auto better = [](const Cand& a, const Cand& b) {
      if (a.lp != b.lp) return a.lp > b.lp;
      if (a.row != b.row) return a.row < b.row;
      return a.tok < b.tok;
    };
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);

    std::vector<Hypothesis> next;
    std::vector<std::size_t> parents;
    std::vector<TokenId> tokens;
    for (std::size_t k = 0; k < keep; ++k) {
      const Cand& c = cands[k];
      Hypothesis h = live[c.row];
      h.tokens.push_back(c.tok);
      h.log_prob = c.lp;
      h.attention.push_back(row_of(att, c.row));
      if (c.tok == eos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        parents.push_back(c.row);
        tokens.push_back(c.tok);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (live.empty() || finished.size() >= beam) break;
    if (step + 1 < max_len) session.advance(parents, tokens);
  }
  for (Hypothesis& h : live) finished.push_back(std::move(h));
  std::stable_sort(finished.begin(), finished.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.score() > b.score(); });
  return finished;
}

Hypothesis greedy_decode(DecoderSession& session, std::size_t max_len) {
  if (max_len == 0) throw UsageError("greedy_decode: max_len must be at least 1");
  Hypothesis h;
  for (std::size_t step = 0; step < max_len; ++step) {
    const Tensor& lp = session.log_probs();
    std::size_t best = 0;
    for (std::size_t w = 1; w < lp.cols(); ++w) {
      if (lp.at(0, w) > lp.at(0, best)) best = w;
    }
    h.tokens.push_back(static_cast<TokenId>(best));
    h.log_prob += lp.at(0, best);
    h.attention.push_back(row_of(session.attention(), 0));
    if (static_cast<TokenId>(best) == session.eos()) {
      h.finished = true;
      break;
    }
    if (step + 1 < max_len) session.advance({0}, {static_cast<TokenId>(best)});
  }
  return h;
}

std::size_t default_max_len(const ExamplePair& example) { return 2 * example.num_words() + 10; }

Hypothesis translate(const Model& model, const ExamplePair& example, std::size_t beam, std::size_t max_len) {
  ModelSession session(model, example);
  auto hyps = beam_search(session, beam, max_len ? max_len : default_max_len(example));
  return std::move(hyps.front());
}

// ---- forced decoding --------------------------------------------------------------

std::vector<ForcedDecode> force_decode(const Model& model, const std::vector<ExamplePair>& examples,
                                       const std::vector<std::size_t>& indices) {
  for (std::size_t i : indices) {
    if (examples.at(i).target.empty()) throw UsageError("force_decode: empty reference");
  }
  Tape tape(false);
  const Batch batch = make_batch(examples, indices, model.config().variant);
  const EncoderOutput enc = model.encode(tape, batch);
  DecoderState st = model.init_decoder(tape, enc);
  std::vector<ForcedDecode> out(indices.size());
  for (std::size_t t = 0; t < batch.target.steps; ++t) {
    StepOutput step = model.decoder_step(tape, st, enc, nullptr, false);
    const Tensor lp = log_softmax_rows(step.logits.value());
    const Tensor& alpha = step.state.alpha.value();
    const auto ids = batch.target.step(t);
    for (std::size_t b = 0; b < indices.size(); ++b) {
      if (t >= batch.target.lengths[b]) continue;
      out[b].log_prob += lp.at(b, static_cast<std::size_t>(ids[b]));
      // Drop the padded source columns so each row covers only this sentence.
      AttentionRow row = row_of(&alpha, b);
      row.resize(batch.source.lengths[b]);
      out[b].attention.push_back(std::move(row));
    }
    st = std::move(step.state);
    st.y_prev.assign(ids.begin(), ids.end());
  }
  return out;
}

ForcedDecode force_decode(const Model& model, const ExamplePair& example) {
  return std::move(force_decode(model, {example}, {0}).front());
}

// ---- alignments -------------------------------------------------------------------

AlignmentSet extract_alignment(const std::vector<AttentionRow>& attention, std::size_t source_words,
                               std::size_t target_words) {
  AlignmentSet links;
  if (source_words == 0) return links;
  const std::size_t rows = std::min(target_words, attention.size());
  for (std::size_t i = 0; i < rows; ++i) {
    const AttentionRow& a = attention[i];
    const std::size_t n = std::min(source_words, a.size());
    if (n == 0) continue;
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (a[j] > a[best]) best = j;
    }
    links.emplace(static_cast<int>(best), static_cast<int>(i));
  }
  return links;
}

std::string format_pharaoh(const AlignmentSet& links) {
  std::string s;
  for (const auto& [i, j] : links) {
    if (!s.empty()) s += ' ';
    s += std::to_string(i) + "-" + std::to_string(j);
  }
  return s;
}

AlignmentSet parse_pharaoh(const std::string& line) {
  AlignmentSet links;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    const auto dash = tok.find('-');
    std::size_t a = 0, b = 0;
    try {
      if (dash == std::string::npos) throw std::invalid_argument(tok);
      const int i = std::stoi(tok.substr(0, dash), &a);
      const int j = std::stoi(tok.substr(dash + 1), &b);
      if (a != dash || b != tok.size() - dash - 1 || i < 0 || j < 0) throw std::invalid_argument(tok);
      links.emplace(i, j);
    } catch (const std::logic_error&) {
      throw DataError("bad alignment link '" + tok + "'");
    }
  }
  return links;
}

}  // namespace synmt
