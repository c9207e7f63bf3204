#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "synmt/corpus.hpp"
#include "synmt/rng.hpp"
#include "synmt/tensor.hpp"

namespace synmt {

struct ModelConfig {
  Variant variant = Variant::Baseline;
  std::size_t word_emb_dim = 620;
  std::size_t hidden_dim = 1000;
  std::size_t label_emb_dim = 100;     // parallel / hierarchical only
  std::size_t label_hidden_dim = 100;  // parallel / hierarchical only
  std::size_t source_vocab = 16000;
  std::size_t target_vocab = 16000;
  std::size_t label_vocab = 51;  // 48 labels + specials
  double dropout = 0.5;
  std::uint64_t seed = 1;

  /// Width of one source annotation vector seen by attention.
  std::size_t annotation_dim() const;
  /// Input width of the word-level encoder RNN.
  std::size_t word_rnn_input_dim() const;
  void validate() const;
};

/// Named parameter tensors, iterated in name order.
class ModelParams {
 public:
  Tensor& add(const std::string& name, Shape shape);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }

  std::map<std::string, Tensor>& tensors() { return tensors_; }
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  void zero_grad();

 private:
  std::map<std::string, Tensor> tensors_;
};

std::size_t count_params(const ModelParams& params);

/// Per-source-position encoder output for a batch.
struct EncoderOutput {
  std::vector<Var> annotations;  // one B x annotation_dim per source position (words + EOS)
  std::vector<Var> keys;         // annotations projected into attention space
  Tensor mask;                   // B x source steps, 1 on real positions
  Var init_source;               // backward word-RNN state at the first position, B x hidden
};

struct DecoderState {
  Var s;
  std::vector<TokenId> y_prev;
  Var c;
  Var alpha;
};

struct AttentionResult {
  Var alpha;  // B x source steps
  Var context;
};

struct StepOutput {
  DecoderState state;
  Var logits;  // B x target vocab, before softmax
};

/// Attention-based GRU encoder-decoder with a baseline, parallel,
/// hierarchical or mixed source encoder.
class Model {
 public:
  /// Allocates every tensor at its configured shape, zero-filled.
  explicit Model(ModelConfig config);

  /// Uniform(-0.01, 0.01) weights, orthogonal recurrent matrices, zero
  /// biases. Deterministic in `seed`.
  static Model init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  EncoderOutput encode(Tape& tape, const Batch& batch) const;
  DecoderState init_decoder(Tape& tape, const EncoderOutput& enc) const;
  AttentionResult attention(Tape& tape, Var s_prev, const EncoderOutput& enc) const;
  /// One decoder step. Dropout on the pre-softmax layer is applied only
  /// when `train` is true.
  StepOutput decoder_step(Tape& tape, const DecoderState& state, const EncoderOutput& enc, Rng* rng,
                          bool train) const;

  /// Summed target negative log-likelihood over the batch.
  Var batch_loss(Tape& tape, const Batch& batch, Rng* rng, bool train) const;
  /// Negative log-likelihood of one example, no dropout.
  double sentence_loss(const ExamplePair& example) const;

 private:
  struct Gru {
    const Tensor* W;
    const Tensor* b;
    const Tensor* U_gates;
    const Tensor* U_cand;
  };
  Gru gru(const std::string& prefix) const;
  void add_gru(const std::string& prefix, std::size_t input, std::size_t hidden);

  Var gru_step(Tape& tape, const Gru& g, Var x_proj, Var h, const Tensor* mask) const;
  /// Runs forward and backward GRUs; returns per-step [fwd; bwd] states and
  /// the backward state at step 0.
  std::vector<Var> bidirectional(Tape& tape, const std::string& prefix, const std::vector<Var>& inputs,
                                 const IdGrid& grid, Var* backward_first) const;
  std::vector<Var> embed(Tape& tape, const Tensor& table, const IdGrid& grid) const;

  ModelConfig config_;
  ModelParams params_;
};

}  // namespace synmt
