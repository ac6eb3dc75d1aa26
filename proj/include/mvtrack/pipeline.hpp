#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "mvtrack/cluster.hpp"
#include "mvtrack/harvest.hpp"
#include "mvtrack/mvcorr.hpp"
#include "mvtrack/synth.hpp"
#include "mvtrack/train.hpp"

namespace mvtrack::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

// A data directory holds tracks.jsonl plus one emb_<video_id>.tmeb per
// video. Stage outputs land next to them or in a separate directory.
fs::path tracks_file(const fs::path& data_dir);
fs::path embeddings_file(const fs::path& data_dir, const std::string& video_id);

std::map<std::string, EmbeddingMatrix> load_corpus_embeddings(const fs::path& data_dir,
                                                              const TrackSet& tracks);

// Writes a SyntheticCorpus as a data directory.
json run_synth(const SyntheticSpec& spec, const fs::path& out_dir);

struct HarvestParams {
  double fps = 24.0;
  double min_seconds = 1.0;
  std::int64_t min_frames = -1;  // >= 0 overrides fps * min_seconds
  std::int64_t min_overlap_frames = 1;

  std::int64_t EffectiveMinFrames() const;
};

// filter_min_length -> build_constraints -> filter_cooccurring; writes
// filtered_tracks.jsonl, constraints.json and harvest_stats.json.
json run_harvest(const fs::path& data_dir, const HarvestParams& params,
                 const fs::path& out_dir);

struct MineParams {
  int tracklets = 3;
  Metric metric = Metric::kNormalizedEuclidean;
  int threads = 1;
  NegativeAnchor negative_anchor = NegativeAnchor::kTrackletMean;
};

// Mines samples for the harvested tracks; writes samples.bin and
// mining_stats.json.
json run_mine(const fs::path& data_dir, const fs::path& harvest_dir, const MineParams& params,
              const fs::path& out_dir);

struct FitParams {
  int rank = 0;          // <= 0: full rotation
  double epsilon = -1.0; // < 0: default ridge
};

// Closed-form fit; writes subspace.tmvm.
json run_fit(const fs::path& samples_path, const FitParams& params, const fs::path& out_dir);

struct TrainParams {
  std::string preset = "C1";          // C1 | C2 | C3; empty uses layer_sizes
  std::vector<int> layer_sizes;
  std::string activation = "relu";
  double dropout_rate = 0.2;
  bool batch_norm = false;
  Objective objective = Objective::kMvCorr;
  double train_fraction = 0.75;
  TrainConfig config;
};

// Video-granularity split, SGD training; writes checkpoint.tmvc and
// history.csv.
json run_train(const fs::path& samples_path, const fs::path& data_dir,
               const TrainParams& params, const fs::path& out_dir);

struct AdaptParams {
  fs::path model_path;  // subspace.tmvm or checkpoint.tmvc; empty with raw
  bool raw = false;     // pass unit-normalized track means through unchanged
  fs::path tracks_override;  // e.g. a harvest's filtered_tracks.jsonl
};

// Track means -> adapted features; writes features.tmeb (columns follow
// adapted_index.json, the ordered track-id list).
json run_adapt(const fs::path& data_dir, const AdaptParams& params, const fs::path& out_dir);

struct ClusterParams {
  std::string method = "hac";  // hac | ap
  int n_clusters = 0;
  Linkage linkage = Linkage::kAverage;
  Metric metric = Metric::kNormalizedEuclidean;
  std::optional<double> preference;
  double damping = 0.9;
  int max_iter = 1000;
  int convergence_iter = 50;
};

// Clusters feature columns; writes assignments.json.
json run_cluster(const fs::path& features_dir, const ClusterParams& params,
                 const fs::path& out_dir);

struct EvalParams {
  double fpr_target = 0.1;
  Metric metric = Metric::kNormalizedEuclidean;
};

// Clustering metrics of assignments against track labels, per video and
// pooled; writes metrics.json.
json run_eval(const fs::path& assignments_path, const fs::path& data_dir,
              const EvalParams& params, const fs::path& out_dir);

// Track-level verification: TPR at the target FPR per video and averaged;
// writes verification.json.
json run_verify(const fs::path& features_dir, const fs::path& data_dir,
                const EvalParams& params, const fs::path& out_dir);

// Histograms (bin width 0.02 on [0, 2]) of anchor-positive and
// anchor-negative distances, before and (with a model) after adaptation;
// writes hist_before.csv and optionally hist_after.csv.
json run_report(const fs::path& samples_path, const fs::path& model_path,
                const fs::path& out_dir);

// Table 3-style text rendering of run_eval output.
std::string render_eval_table(const json& eval_result);

}  // namespace mvtrack::pipeline
