#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvtrack/mining.hpp"
#include "mvtrack/network.hpp"

namespace mvtrack {

enum class Objective { kImpTriplet, kMvCorr };

Objective ObjectiveFromString(const std::string& name);
std::string ObjectiveToString(Objective o);

struct TrainConfig {
  int batch_size = 1024;
  double learning_rate = -1.0;  // negative selects the per-objective default
  double momentum = 0.9;
  double weight_decay = 1e-6;
  double early_stop_delta = 1e-3;
  int patience = 5;
  int max_epochs = 200;
  std::uint64_t seed = 0;
  // Improved-triplet hyperparameters (squared distances on unit vectors).
  double triplet_margin = 0.5;
  double triplet_margin2 = 0.25;
  double triplet_lambda = 0.01;

  void Validate() const;
  double EffectiveLearningRate(Objective o) const {
    if (learning_rate >= 0.0) return learning_rate;
    return o == Objective::kImpTriplet ? 0.001 : 0.01;
  }
};

// Stops once the validation loss has failed to decrease by at least
// `delta` relative to the previous epoch for `patience` consecutive
// epochs.
class EarlyStopper {
 public:
  EarlyStopper(double delta, int patience) : delta_(delta), patience_(patience) {}

  // Feed one epoch-end validation loss; true means stop now.
  bool ShouldStop(double val_loss) {
    if (has_prev_ && !(prev_ - val_loss >= delta_)) ++streak_;
    else streak_ = 0;
    has_prev_ = true;
    prev_ = val_loss;
    return streak_ >= patience_;
  }

  int streak() const { return streak_; }

 private:
  double delta_;
  int patience_;
  int streak_ = 0;
  bool has_prev_ = false;
  double prev_ = 0.0;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;  // 0-based epoch of the lowest validation loss
  bool early_stopped = false;
};

struct TrainedModel {
  NetworkConfig config;
  Objective objective = Objective::kMvCorr;
  // One entry for shared weights; M entries for independent mvcorr nets.
  std::vector<ModelParams> networks;
};

// Splits sample track-ids into train/validation at video granularity:
// video ids are shuffled with the given seed and the first
// train_fraction of them becomes the training side.
struct SampleSplit {
  std::vector<MultiviewSample> train;
  std::vector<MultiviewSample> validation;
};
SampleSplit split_by_video(const std::vector<MultiviewSample>& samples, const TrackSet& tracks,
                           double train_fraction, std::uint64_t seed);

// Minibatch SGD with momentum and L2 weight decay, epoch-shuffled batches
// from the seeded rng, early stopping on the validation loss. Returns the
// parameters of the best validation epoch. For the mvcorr objective the M
// view networks carry independent weights unless config.shared_weights is
// set; inference uses network 0 only. Throws NumericError on divergence
// (history is still filled).
TrainedModel train(const std::vector<MultiviewSample>& train_samples,
                   const std::vector<MultiviewSample>& val_samples, const NetworkConfig& net,
                   const TrainConfig& tc, Objective objective, TrainHistory* history);

// Infer-mode pass of network 0 over track-mean columns, unit-normalized.
MatrixD adapt_embeddings(const TrainedModel& model, const MatrixD& track_means);

// Checkpoint: magic "TMVC", version, JSON header (architecture,
// objective), then per network per layer the parameter tensors as f32.
void write_checkpoint(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_checkpoint(const std::filesystem::path& path);

// CSV history: epoch,train_loss,val_loss.
void write_history(const std::filesystem::path& path, const TrainHistory& history);

}  // namespace mvtrack
