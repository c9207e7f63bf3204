#include "synmt/model.hpp"

#include <Eigen/Dense>
#include <numeric>
#include <optional>

#include "synmt/error.hpp"

namespace synmt {

// ---- config ---------------------------------------------------------------

std::size_t ModelConfig::annotation_dim() const {
  const std::size_t words = 2 * hidden_dim;
  return variant == Variant::Parallel ? words + 2 * label_hidden_dim : words;
}

std::size_t ModelConfig::word_rnn_input_dim() const {
  return variant == Variant::Hierarchical ? word_emb_dim + 2 * label_hidden_dim : word_emb_dim;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw UsageError(std::string("model config: ") + name + " must be positive");
  };
  positive(word_emb_dim, "word_emb_dim");
  positive(hidden_dim, "hidden_dim");
  positive(source_vocab, "source_vocab");
  positive(target_vocab, "target_vocab");
  if (source_vocab < Vocabulary::kNumSpecial || target_vocab < Vocabulary::kNumSpecial) {
    throw UsageError("model config: vocabularies must hold the reserved tokens");
  }
  if (uses_labels(variant)) {
    positive(label_emb_dim, "label_emb_dim");
    positive(label_hidden_dim, "label_hidden_dim");
    positive(label_vocab, "label_vocab");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw UsageError("model config: dropout must lie in [0, 1)");
}

// ---- params ---------------------------------------------------------------

Tensor& ModelParams::add(const std::string& name, Shape shape) {
  auto [it, inserted] = tensors_.try_emplace(name, Tensor(std::move(shape)));
  if (!inserted) throw UsageError("duplicate parameter " + name);
  it->second.requires_grad = true;
  return it->second;
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw UsageError("no parameter named " + name);
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw UsageError("no parameter named " + name);
  return it->second;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : tensors_) t.zero_grad();
}

std::size_t count_params(const ModelParams& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params.tensors()) n += t.size();
  return n;
}

// ---- construction -----------------------------------------------------------

void Model::add_gru(const std::string& prefix, std::size_t input, std::size_t hidden) {
  params_.add(prefix + ".W", {input, 3 * hidden});
  params_.add(prefix + ".b", {3 * hidden});
  params_.add(prefix + ".U_gates", {hidden, 2 * hidden});
  params_.add(prefix + ".U_cand", {hidden, hidden});
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t E = config_.word_emb_dim, H = config_.hidden_dim, A = config_.annotation_dim();
  const std::size_t att = H;
  params_.add("src_emb", {config_.source_vocab, E});
  params_.add("tgt_emb", {config_.target_vocab, E});
  add_gru("enc.fwd", config_.word_rnn_input_dim(), H);
  add_gru("enc.bwd", config_.word_rnn_input_dim(), H);
  if (uses_labels(config_.variant)) {
    params_.add("label_emb", {config_.label_vocab, config_.label_emb_dim});
    add_gru("label.fwd", config_.label_emb_dim, config_.label_hidden_dim);
    add_gru("label.bwd", config_.label_emb_dim, config_.label_hidden_dim);
  }
  params_.add("att.W_s", {H, att});
  params_.add("att.U", {A, att});
  params_.add("att.b", {att});
  params_.add("att.v", {att, 1});
  params_.add("init.W", {H, H});
  params_.add("init.b", {H});
  add_gru("dec", E + A, H);
  params_.add("out.W_s", {H, E});
  params_.add("out.W_y", {E, E});
  params_.add("out.W_c", {A, E});
  params_.add("out.b", {E});
  params_.add("out.W_proj", {E, config_.target_vocab});
  params_.add("out.b_proj", {config_.target_vocab});
}

namespace {

// Square orthogonal matrix from the QR factorization of a Gaussian draw.
void fill_orthogonal(Tensor& t, std::size_t col_offset, std::size_t n, Rng& rng) {
  Eigen::MatrixXd g(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) g(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd rmat = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t c = 0; c < n; ++c) {
    if (rmat(c, c) < 0) q.col(c) *= -1.0;
  }
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) t.at(r, col_offset + c) = q(r, c);
  }
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
  Model m(config);
  Rng rng(seed);
  for (auto& [name, t] : m.params_.tensors()) {
    if (t.rank() == 1) continue;  // biases stay zero
    if (ends_with(name, ".U_gates")) {
      const std::size_t h = t.shape()[0];
      fill_orthogonal(t, 0, h, rng);
      fill_orthogonal(t, h, h, rng);
    } else if (ends_with(name, ".U_cand")) {
      fill_orthogonal(t, 0, t.shape()[0], rng);
    } else {
      for (double& x : t.data()) x = rng.uniform(-0.01, 0.01);
    }
  }
  return m;
}

// ---- encoder ----------------------------------------------------------------

Model::Gru Model::gru(const std::string& prefix) const {
  return {&params_.at(prefix + ".W"), &params_.at(prefix + ".b"), &params_.at(prefix + ".U_gates"),
          &params_.at(prefix + ".U_cand")};
}

Var Model::gru_step(Tape& tape, const Gru& g, Var x_proj, Var h, const Tensor* mask) const {
  const std::size_t H = g.U_cand->shape()[0];
  Var gates = sigmoid(add(slice_cols(x_proj, 0, 2 * H), matmul(h, tape.param(*g.U_gates))));
  Var z = slice_cols(gates, 0, H);
  Var r = slice_cols(gates, H, 2 * H);
  Var cand = tanh(add(slice_cols(x_proj, 2 * H, 3 * H), matmul(mul(r, h), tape.param(*g.U_cand))));
  // Rows past their sequence end get z = 0 and keep their state.
  if (mask) z = mul(z, tape.constant(*mask));
  return add(h, mul(z, sub(cand, h)));
}

std::vector<Var> Model::embed(Tape& tape, const Tensor& table, const IdGrid& grid) const {
  Var t = tape.param(table);
  std::vector<Var> out;
  out.reserve(grid.steps);
  for (std::size_t s = 0; s < grid.steps; ++s) out.push_back(lookup(t, grid.step(s)));
  return out;
}

std::vector<Var> Model::bidirectional(Tape& tape, const std::string& prefix, const std::vector<Var>& inputs,
                                      const IdGrid& grid, Var* backward_first) const {
  const std::size_t T = inputs.size();
  const std::size_t B = grid.batch;
  std::vector<std::optional<Tensor>> masks(T);
  for (std::size_t t = 0; t < T; ++t) {
    Tensor m = grid.step_mask(t);
    bool full = true;
    for (double x : m.data()) full = full && x == 1.0;
    if (!full) masks[t] = std::move(m);
  }
  std::vector<Var> fwd(T), bwd(T);
  Var stacked = concat(inputs, 0);
  for (auto [dir, out] : {std::pair{".fwd", &fwd}, std::pair{".bwd", &bwd}}) {
    const Gru g = gru(prefix + dir);
    const std::size_t H = g.U_cand->shape()[0];
    Var proj = add(matmul(stacked, tape.param(*g.W)), tape.param(*g.b));
    Var h = tape.constant(Tensor({B, H}));
    const bool forward = std::string(dir) == ".fwd";
    for (std::size_t k = 0; k < T; ++k) {
      const std::size_t t = forward ? k : T - 1 - k;
      const Tensor* m = masks[t] ? &*masks[t] : nullptr;
      h = gru_step(tape, g, slice_rows(proj, t * B, (t + 1) * B), h, m);
      (*out)[t] = h;
    }
  }
  if (backward_first) *backward_first = bwd[0];
  std::vector<Var> ann(T);
  for (std::size_t t = 0; t < T; ++t) ann[t] = concat({fwd[t], bwd[t]}, 1);
  return ann;
}

EncoderOutput Model::encode(Tape& tape, const Batch& batch) const {
  const Variant v = config_.variant;
  if (batch.source.steps == 0) throw UsageError("encode: empty source batch");
  if (uses_labels(v) && (batch.labels.steps == 0 || batch.label_index.size() != batch.source.steps)) {
    throw UsageError("encode: " + to_string(v) + " variant needs label sequences in the batch");
  }
  if (v == Variant::Mixed && (batch.mixed.steps == 0 || batch.mixed_index.size() != batch.source.steps)) {
    throw UsageError("encode: mixed variant needs mixed sequences in the batch");
  }
  EncoderOutput enc;
  enc.mask = batch.source.mask();
  const std::size_t T = batch.source.steps;

  std::vector<Var> label_ann;
  if (uses_labels(v)) {
    label_ann = bidirectional(tape, "label", embed(tape, params_.at("label_emb"), batch.labels), batch.labels, nullptr);
  }

  switch (v) {
    case Variant::Baseline: {
      enc.annotations = bidirectional(tape, "enc", embed(tape, params_.at("src_emb"), batch.source), batch.source,
                                      &enc.init_source);
      break;
    }
    case Variant::Parallel: {
      std::vector<Var> words = bidirectional(tape, "enc", embed(tape, params_.at("src_emb"), batch.source),
                                             batch.source, &enc.init_source);
      for (std::size_t t = 0; t < T; ++t) {
        enc.annotations.push_back(concat({words[t], gather_steps(label_ann, batch.label_index[t])}, 1));
      }
      break;
    }
    case Variant::Hierarchical: {
      std::vector<Var> inputs = embed(tape, params_.at("src_emb"), batch.source);
      for (std::size_t t = 0; t < T; ++t) {
        inputs[t] = concat({inputs[t], gather_steps(label_ann, batch.label_index[t])}, 1);
      }
      enc.annotations = bidirectional(tape, "enc", inputs, batch.source, &enc.init_source);
      break;
    }
    case Variant::Mixed: {
      std::vector<Var> mixed = bidirectional(tape, "enc", embed(tape, params_.at("src_emb"), batch.mixed),
                                             batch.mixed, &enc.init_source);
      for (std::size_t t = 0; t < T; ++t) enc.annotations.push_back(gather_steps(mixed, batch.mixed_index[t]));
      break;
    }
  }

  const std::size_t B = batch.size();
  Var keys = add(matmul(concat(enc.annotations, 0), tape.param(params_.at("att.U"))), tape.param(params_.at("att.b")));
  for (std::size_t t = 0; t < T; ++t) enc.keys.push_back(slice_rows(keys, t * B, (t + 1) * B));
  return enc;
}

// ---- decoder ----------------------------------------------------------------

DecoderState Model::init_decoder(Tape& tape, const EncoderOutput& enc) const {
  if (enc.annotations.empty()) throw UsageError("init_decoder: no annotations");
  DecoderState st;
  st.s = tanh(add(matmul(enc.init_source, tape.param(params_.at("init.W"))), tape.param(params_.at("init.b"))));
  st.y_prev.assign(enc.init_source.rows(), Vocabulary::kEos);
  return st;
}

AttentionResult Model::attention(Tape& tape, Var s_prev, const EncoderOutput& enc) const {
  const std::size_t T = enc.annotations.size();
  if (enc.mask.cols() != T || enc.mask.rows() != s_prev.rows()) {
    throw DimensionError("attention: mask " + shape_str(enc.mask.shape()) + " does not match " + std::to_string(T) +
                         " positions and state " + shape_str(s_prev.shape()));
  }
  Var ws = matmul(s_prev, tape.param(params_.at("att.W_s")));
  Var v = tape.param(params_.at("att.v"));
  std::vector<Var> scores(T);
  for (std::size_t t = 0; t < T; ++t) scores[t] = matmul(tanh(add(enc.keys[t], ws)), v);
  AttentionResult res;
  res.alpha = softmax(concat(scores, 1), &enc.mask);
  res.context = weighted_sum(res.alpha, enc.annotations);
  return res;
}

StepOutput Model::decoder_step(Tape& tape, const DecoderState& state, const EncoderOutput& enc, Rng* rng,
                               bool train) const {
  for (TokenId y : state.y_prev) {
    if (y < 0 || static_cast<std::size_t>(y) >= config_.target_vocab) {
      throw UsageError("decoder_step: previous word id " + std::to_string(y) + " outside target vocabulary");
    }
  }
  const AttentionResult att = attention(tape, state.s, enc);
  Var emb = lookup(tape.param(params_.at("tgt_emb")), state.y_prev);
  const Gru g = gru("dec");
  Var x_proj = add(matmul(concat({emb, att.context}, 1), tape.param(*g.W)), tape.param(*g.b));
  Var s = gru_step(tape, g, x_proj, state.s, nullptr);

  Var hidden = add(matmul(s, tape.param(params_.at("out.W_s"))), matmul(emb, tape.param(params_.at("out.W_y"))));
  hidden = add(hidden, matmul(att.context, tape.param(params_.at("out.W_c"))));
  hidden = tanh(add(hidden, tape.param(params_.at("out.b"))));
  if (train && config_.dropout > 0.0) {
    if (!rng) throw UsageError("decoder_step: dropout at train time needs a generator");
    hidden = dropout(hidden, config_.dropout, *rng, true);
  }
  StepOutput out;
  out.logits = add(matmul(hidden, tape.param(params_.at("out.W_proj"))), tape.param(params_.at("out.b_proj")));
  out.state.s = s;
  out.state.y_prev = state.y_prev;
  out.state.c = att.context;
  out.state.alpha = att.alpha;
  return out;
}

Var Model::batch_loss(Tape& tape, const Batch& batch, Rng* rng, bool train) const {
  if (batch.target.steps == 0) throw UsageError("batch_loss: empty target");
  const EncoderOutput enc = encode(tape, batch);
  DecoderState st = init_decoder(tape, enc);
  std::vector<Var> losses;
  losses.reserve(batch.target.steps);
  for (std::size_t t = 0; t < batch.target.steps; ++t) {
    StepOutput out = decoder_step(tape, st, enc, rng, train);
    const Tensor w = batch.target.step_mask(t);
    const auto ids = batch.target.step(t);
    losses.push_back(cross_entropy(out.logits, ids, w.data()));
    st = std::move(out.state);
    st.y_prev.assign(ids.begin(), ids.end());
  }
  return sum(concat(losses, 0));
}

double Model::sentence_loss(const ExamplePair& example) const {
  if (example.target.empty()) throw UsageError("sentence_loss: empty target");
  Tape tape(false);
  const Batch b = make_batch({example}, {0}, config_.variant);
  return batch_loss(tape, b, nullptr, false).value()[0];
}

}  // namespace synmt
