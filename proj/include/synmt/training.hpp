#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synmt/config.hpp"
#include "synmt/model.hpp"

namespace synmt {

/// Learning-rate-free adaptive updates with running averages of squared
/// gradients and squared steps.
class AdaDelta {
 public:
  explicit AdaDelta(double rho = 0.95, double epsilon = 1e-6);

  /// Applies one update from the gradients stored on `params`. Returns false
  /// (and changes nothing) when any gradient is non-finite.
  bool step(ModelParams& params);

  double rho() const { return rho_; }
  double epsilon() const { return epsilon_; }
  std::map<std::string, Tensor>& mean_sq_grad() { return g2_; }
  std::map<std::string, Tensor>& mean_sq_delta() { return dx2_; }
  const std::map<std::string, Tensor>& mean_sq_grad() const { return g2_; }
  const std::map<std::string, Tensor>& mean_sq_delta() const { return dx2_; }

 private:
  double rho_;
  double epsilon_;
  std::map<std::string, Tensor> g2_;
  std::map<std::string, Tensor> dx2_;
};

/// Rescales all gradients so their joint L2 norm is at most `max_norm`
/// (0 disables). Returns the norm before clipping.
double clip_grad_norm(ModelParams& params, double max_norm);

struct TrainReport {
  std::size_t epoch = 0;  // 1-based
  std::size_t updates = 0;
  double loss_per_token = 0.0;
  double seconds = 0.0;
  std::optional<double> dev_score;
};

/// Everything besides parameters and optimizer statistics that a resumed
/// run needs to continue bit-identically.
struct TrainState {
  std::size_t epoch = 0;       // 0-based index of the epoch in progress
  std::size_t next_batch = 0;  // index into that epoch's batch plan
  std::size_t updates = 0;
  std::size_t skipped = 0;
  double epoch_loss = 0.0;
  double epoch_tokens = 0.0;
  std::string dropout_rng;
  std::optional<double> best_dev;
};

struct StepResult {
  double loss = 0.0;  // summed over the batch
  std::size_t tokens = 0;
  bool applied = true;
};

class Trainer {
 public:
  Trainer(Model& model, const std::vector<ExamplePair>& data, TrainingOptions options, std::uint64_t seed);

  /// One optimizer update on the next planned batch.
  StepResult step();
  /// Runs the remainder of the current epoch.
  TrainReport run_epoch();

  /// Optional hooks used by train().
  std::function<double(const Model&)> dev_score;            // higher is better
  std::function<void(const TrainReport&, bool best)> on_epoch;  // e.g. checkpointing
  std::ostream* progress = nullptr;                           // per-update progress lines

  /// Runs until `epochs` epochs are complete in total.
  std::vector<TrainReport> train(std::size_t epochs);

  const TrainState& state() const { return state_; }
  const AdaDelta& optimizer() const { return opt_; }
  void restore(const TrainState& state, AdaDelta optimizer);
  std::size_t batches_per_epoch() const;

 private:
  const std::vector<std::vector<std::size_t>>& plan();

  Model& model_;
  const std::vector<ExamplePair>& data_;
  TrainingOptions options_;
  std::uint64_t seed_;
  AdaDelta opt_;
  Rng dropout_rng_;
  TrainState state_;
  std::size_t planned_epoch_ = static_cast<std::size_t>(-1);
  std::vector<std::vector<std::size_t>> plan_;
  double epoch_seconds_ = 0.0;
};

// ---- checkpoints -------------------------------------------------------------

struct Checkpoint {
  Model model;
  Vocabs vocabs;
  std::string run_config;  // verbatim JSON of the run that produced it
  std::optional<TrainState> state;
  std::optional<AdaDelta> optimizer;
};

/// Binary container: magic, version, JSON header (configs, vocabularies,
/// training state) and every tensor as name, shape and little-endian f64.
/// Written to a temporary file and renamed into place.
void save_checkpoint(const std::string& path, const Model& model, const Vocabs& vocabs, const std::string& run_config,
                     const TrainState* state = nullptr, const AdaDelta* optimizer = nullptr);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace synmt
