#include "synmt/training.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <ostream>

#include <json.hpp>

#include "synmt/error.hpp"

namespace synmt {

// ---- optimizer ----------------------------------------------------------------

AdaDelta::AdaDelta(double rho, double epsilon) : rho_(rho), epsilon_(epsilon) {
  if (!(rho > 0.0 && rho < 1.0)) throw UsageError("AdaDelta: rho must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw UsageError("AdaDelta: epsilon must be positive");
}

bool AdaDelta::step(ModelParams& params) {
  for (auto& [name, t] : params.tensors()) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) {
      if (!std::isfinite(g)) {
        std::cerr << "warning: non-finite gradient in " << name << ", update skipped\n";
        return false;
      }
    }
  }
  for (auto& [name, t] : params.tensors()) {
    if (!t.has_grad()) continue;
    auto [g2it, fresh] = g2_.try_emplace(name, Tensor(t.shape()));
    auto [dxit, fresh2] = dx2_.try_emplace(name, Tensor(t.shape()));
    (void)fresh;
    (void)fresh2;
    if (g2it->second.shape() != t.shape() || dxit->second.shape() != t.shape()) {
      throw DimensionError("AdaDelta: accumulator for " + name + " has shape " + shape_str(g2it->second.shape()) +
                           ", parameter has " + shape_str(t.shape()));
    }
    auto eg = g2it->second.data();
    auto ed = dxit->second.data();
    auto x = t.data();
    const auto& grad = t.grad();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double g = grad[i];
      eg[i] = rho_ * eg[i] + (1.0 - rho_) * g * g;
      const double dx = -(std::sqrt(ed[i] + epsilon_) / std::sqrt(eg[i] + epsilon_)) * g;
      ed[i] = rho_ * ed[i] + (1.0 - rho_) * dx * dx;
      x[i] += dx;
    }
  }
  return true;
}

double clip_grad_norm(ModelParams& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, t] : params.tensors()) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [name, t] : params.tensors()) {
      if (!t.has_grad()) continue;
      for (double& g : t.grad()) g *= s;
    }
  }
  return norm;
}

// ---- training loop -------------------------------------------------------------

Trainer::Trainer(Model& model, const std::vector<ExamplePair>& data, TrainingOptions options, std::uint64_t seed)
    : model_(model),
      data_(data),
      options_(options),
      seed_(seed),
      opt_(options.rho, options.epsilon),
      dropout_rng_(seed * 7919 + 17) {
  if (data_.empty()) throw UsageError("train: no training examples");
  if (options_.batch_size == 0) throw UsageError("train: batch size must be positive");
}

const std::vector<std::vector<std::size_t>>& Trainer::plan() {
  if (planned_epoch_ != state_.epoch) {
    plan_ = plan_batches(data_, options_.batch_size, seed_, state_.epoch);
    planned_epoch_ = state_.epoch;
  }
  return plan_;
}

std::size_t Trainer::batches_per_epoch() const {
  return (data_.size() + options_.batch_size - 1) / options_.batch_size;
}

StepResult Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const auto& batches = plan();
  const Batch batch = make_batch(data_, batches[state_.next_batch], model_.config().variant);

  StepResult res;
  for (std::size_t len : batch.target.lengths) res.tokens += len;
  model_.params().zero_grad();
  {
    Tape tape;
    Var loss = model_.batch_loss(tape, batch, &dropout_rng_, true);
    res.loss = loss.value()[0];
    tape.backward(loss);
  }
  clip_grad_norm(model_.params(), options_.clip_norm);
  res.applied = opt_.step(model_.params());
  if (res.applied) {
    ++state_.updates;
    state_.epoch_loss += res.loss;
    state_.epoch_tokens += static_cast<double>(res.tokens);
  } else {
    ++state_.skipped;
  }
  state_.dropout_rng = dropout_rng_.state();
  if (++state_.next_batch == batches.size()) {
    state_.next_batch = 0;
    ++state_.epoch;
  }
  epoch_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (progress && options_.log_every > 0 && state_.updates % options_.log_every == 0 && res.applied) {
    char line[128];
    std::snprintf(line, sizeof line, "%zu\t%zu\t%.6f\t%.2f\n", state_.epoch + (state_.next_batch ? 1 : 0),
                  state_.updates, res.loss / static_cast<double>(res.tokens), epoch_seconds_);
    *progress << line << std::flush;
  }
  return res;
}

TrainReport Trainer::run_epoch() {
  const std::size_t epoch = state_.epoch;
  while (state_.epoch == epoch) step();
  TrainReport r;
  r.epoch = epoch + 1;
  r.updates = state_.updates;
  r.loss_per_token = state_.epoch_tokens > 0 ? state_.epoch_loss / state_.epoch_tokens : 0.0;
  r.seconds = epoch_seconds_;
  state_.epoch_loss = 0.0;
  state_.epoch_tokens = 0.0;
  epoch_seconds_ = 0.0;
  return r;
}

std::vector<TrainReport> Trainer::train(std::size_t epochs) {
  std::vector<TrainReport> reports;
  while (state_.epoch < epochs) {
    TrainReport r = run_epoch();
    bool best = false;
    if (dev_score) {
      r.dev_score = dev_score(model_);
      if (!state_.best_dev || *r.dev_score > *state_.best_dev) {
        state_.best_dev = r.dev_score;
        best = true;
      }
    }
    if (on_epoch) on_epoch(r, best);
    reports.push_back(r);
  }
  return reports;
}

void Trainer::restore(const TrainState& state, AdaDelta optimizer) {
  state_ = state;
  opt_ = std::move(optimizer);
  if (!state.dropout_rng.empty()) dropout_rng_.set_state(state.dropout_rng);
  planned_epoch_ = static_cast<std::size_t>(-1);
}

// ---- checkpoints -------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'Y', 'N', 'M', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T take(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("checkpoint " + path + ": truncated file");
  return v;
}

void put_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.storage().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

nlohmann::json state_json(const TrainState& s) {
  nlohmann::json j = {{"epoch", s.epoch},           {"next_batch", s.next_batch}, {"updates", s.updates},
                      {"skipped", s.skipped},       {"epoch_loss", s.epoch_loss}, {"epoch_tokens", s.epoch_tokens},
                      {"dropout_rng", s.dropout_rng}};
  if (s.best_dev) j["best_dev"] = *s.best_dev;
  return j;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const Vocabs& vocabs, const std::string& run_config,
                     const TrainState* state, const AdaDelta* optimizer) {
  nlohmann::json header;
  header["model"] = nlohmann::json::parse(model_config_to_json(model.config()));
  header["vocab"] = {{"source", vocabs.source.tokens()},
                     {"target", vocabs.target.tokens()},
                     {"label", vocabs.label.tokens()}};
  header["run_config"] = run_config;
  if (state) header["state"] = state_json(*state);
  if (optimizer) header["adadelta"] = {{"rho", optimizer->rho()}, {"epsilon", optimizer->epsilon()}};
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("checkpoint: cannot open " + tmp + " for writing");
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::size_t count = model.params().tensors().size();
    if (optimizer) count += optimizer->mean_sq_grad().size() + optimizer->mean_sq_delta().size();
    put<std::uint64_t>(out, count);
    for (const auto& [name, t] : model.params().tensors()) put_tensor(out, name, t);
    if (optimizer) {
      for (const auto& [name, t] : optimizer->mean_sq_grad()) put_tensor(out, "adadelta.g2/" + name, t);
      for (const auto& [name, t] : optimizer->mean_sq_delta()) put_tensor(out, "adadelta.dx2/" + name, t);
    }
    out.flush();
    if (!out) throw Error("checkpoint: write to " + tmp + " failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("checkpoint: cannot move " + tmp + " to " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DataError("checkpoint " + path + ": not a checkpoint file");
  }
  const auto version = take<std::uint32_t>(in, path);
  if (version != kVersion) throw DataError("checkpoint " + path + ": unsupported version " + std::to_string(version));
  const auto header_len = take<std::uint64_t>(in, path);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw DataError("checkpoint " + path + ": truncated header");
  }
  const nlohmann::json header = nlohmann::json::parse(text);

  Checkpoint ck{Model(model_config_from_json(header.at("model").dump())), {}, header.at("run_config"), {}, {}};
  ck.vocabs.source = Vocabulary::from_tokens(header.at("vocab").at("source"));
  ck.vocabs.target = Vocabulary::from_tokens(header.at("vocab").at("target"));
  ck.vocabs.label = Vocabulary::from_tokens(header.at("vocab").at("label"));
  if (header.contains("state")) {
    const auto& s = header["state"];
    TrainState st;
    st.epoch = s.at("epoch");
    st.next_batch = s.at("next_batch");
    st.updates = s.at("updates");
    st.skipped = s.at("skipped");
    st.epoch_loss = s.at("epoch_loss");
    st.epoch_tokens = s.at("epoch_tokens");
    st.dropout_rng = s.at("dropout_rng");
    if (s.contains("best_dev")) st.best_dev = s["best_dev"].get<double>();
    ck.state = st;
  }
  if (header.contains("adadelta")) ck.optimizer.emplace(header["adadelta"].at("rho"), header["adadelta"].at("epsilon"));

  const auto count = take<std::uint64_t>(in, path);
  std::size_t params_seen = 0;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto name_len = take<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw DataError("checkpoint " + path + ": truncated tensor name");
    const auto rank = take<std::uint32_t>(in, path);
    Shape shape(rank);
    for (auto& d : shape) d = take<std::uint64_t>(in, path);

    Tensor* dst = nullptr;
    Tensor scratch;
    auto optimizer_slot = [&](const std::string& prefix, std::map<std::string, Tensor>& slots) -> Tensor* {
      if (name.rfind(prefix, 0) != 0) return nullptr;
      if (!ck.optimizer) throw DataError("checkpoint " + path + ": optimizer tensor without optimizer header");
      const std::string pname = name.substr(prefix.size());
      if (!ck.model.params().contains(pname)) throw DataError("checkpoint " + path + ": stray tensor " + name);
      return &slots.emplace(pname, Tensor(shape)).first->second;
    };
    if (ck.model.params().contains(name)) {
      dst = &ck.model.params().at(name);
      ++params_seen;
    } else if (ck.optimizer) {
      dst = optimizer_slot("adadelta.g2/", ck.optimizer->mean_sq_grad());
      if (!dst) dst = optimizer_slot("adadelta.dx2/", ck.optimizer->mean_sq_delta());
    }
    if (!dst) throw DataError("checkpoint " + path + ": unexpected tensor " + name);
    if (dst->shape() != shape) {
      throw DataError("checkpoint " + path + ": tensor " + name + " has shape " + shape_str(shape) +
                      " but the configuration expects " + shape_str(dst->shape()));
    }
    if (!in.read(reinterpret_cast<char*>(dst->storage().data()),
                 static_cast<std::streamsize>(dst->size() * sizeof(double)))) {
      throw DataError("checkpoint " + path + ": truncated data for " + name);
    }
  }
  if (params_seen != ck.model.params().tensors().size()) {
    throw DataError("checkpoint " + path + ": missing parameter tensors");
  }
  return ck;
}

}  // namespace synmt
