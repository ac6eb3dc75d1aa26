// Command-line front end for the face-track adaptation pipeline:
// synth -> harvest -> mine -> fit-mvcorr / train -> adapt -> cluster ->
// eval, plus report (distance histograms) and verify.

#include <cstring>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvtrack/pipeline.hpp"

namespace {

using nlohmann::json;
using namespace mvtrack;
namespace pl = mvtrack::pipeline;

// Exit codes per error category.
constexpr int kExitIo = 2;
constexpr int kExitFormat = 3;
constexpr int kExitValue = 4;
constexpr int kExitNumeric = 5;

struct GlobalFlags {
  bool json_output = false;
  std::uint64_t seed = 0;
  int threads = 1;
  json config;  // loaded from --config before option defaults resolve
};

json LoadConfigArg(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--config") == 0) {
      std::ifstream is(argv[i + 1]);
      if (!is) throw IoError(std::string("missing file: ") + argv[i + 1]);
      json j = json::parse(is, nullptr, false);
      if (j.is_discarded())
        throw FormatError(std::string(argv[i + 1]) + ": invalid JSON");
      return j;
    }
  }
  return json::object();
}

template <typename T>
void FromConfig(const json& config, const std::string& key, T& value) {
  if (config.contains(key)) value = config.at(key).get<T>();
}

// Per-subcommand config section ("mine": {...}); absent sections are empty.
json Section(const json& config, const std::string& name) {
  if (config.contains(name) && config.at(name).is_object()) return config.at(name);
  return json::object();
}

void Emit(const GlobalFlags& flags, const json& summary) {
  if (flags.json_output) {
    std::cout << summary.dump() << '\n';
    return;
  }
  for (auto it = summary.begin(); it != summary.end(); ++it) {
    if (it.key() == "command") continue;
    std::cout << "  " << it.key() << ": " << it.value().dump() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised face-track harvesting, hard-example mining, "
               "multiview-correlation adaptation and clustering"};
  app.require_subcommand(1);

  GlobalFlags flags;
  try {
    flags.config = LoadConfigArg(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  const json& config = flags.config;

  std::string config_path;
  app.add_option("--config", config_path, "JSON file with option defaults");
  app.add_flag("--json", flags.json_output, "machine-readable summary on stdout");
  app.add_option("--seed", flags.seed, "rng seed");
  app.add_option("--threads", flags.threads, "worker threads (1 = reference path)");
  FromConfig(config, "seed", flags.seed);
  FromConfig(config, "threads", flags.threads);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic corpus");
  SyntheticSpec spec;
  std::string synth_out = "data";
  {
    const json sec = Section(config, "synth");
    FromConfig(sec, "out", synth_out);
    FromConfig(sec, "identities", spec.n_identities);
    FromConfig(sec, "tracks_per_identity", spec.tracks_per_identity);
    FromConfig(sec, "frames_min", spec.frames_min);
    FromConfig(sec, "frames_max", spec.frames_max);
    FromConfig(sec, "dim", spec.dim);
    FromConfig(sec, "videos", spec.n_videos);
    FromConfig(sec, "noise_sigma", spec.noise_sigma);
    FromConfig(sec, "distortion", spec.distortion);
    FromConfig(sec, "pose_shift_prob", spec.pose_shift_prob);
    FromConfig(sec, "poses", spec.n_poses);
    FromConfig(sec, "pose_strength", spec.pose_strength);
    FromConfig(sec, "cooccurrence_density", spec.cooccurrence_density);
  }
  synth->add_option("--out", synth_out, "output data directory");
  synth->add_option("--identities", spec.n_identities, "number of identities");
  synth->add_option("--tracks-per-identity", spec.tracks_per_identity);
  synth->add_option("--frames-min", spec.frames_min);
  synth->add_option("--frames-max", spec.frames_max);
  synth->add_option("--dim", spec.dim, "embedding dimension");
  synth->add_option("--videos", spec.n_videos);
  synth->add_option("--noise-sigma", spec.noise_sigma);
  synth->add_option("--distortion", spec.distortion);
  synth->add_option("--pose-shift-prob", spec.pose_shift_prob);
  synth->add_option("--poses", spec.n_poses);
  synth->add_option("--pose-strength", spec.pose_strength);
  synth->add_option("--cooccurrence-density", spec.cooccurrence_density);

  // harvest
  auto* harvest = app.add_subcommand("harvest", "derive cannot-link constraints");
  std::string harvest_data = "data", harvest_out = "harvest";
  pl::HarvestParams harvest_params;
  {
    const json sec = Section(config, "harvest");
    FromConfig(sec, "data", harvest_data);
    FromConfig(sec, "out", harvest_out);
    FromConfig(sec, "fps", harvest_params.fps);
    FromConfig(sec, "min_seconds", harvest_params.min_seconds);
    FromConfig(sec, "min_frames", harvest_params.min_frames);
    FromConfig(sec, "min_overlap", harvest_params.min_overlap_frames);
  }
  harvest->add_option("--data", harvest_data, "data directory");
  harvest->add_option("--out", harvest_out, "output directory");
  harvest->add_option("--fps", harvest_params.fps, "video frame rate");
  harvest->add_option("--min-seconds", harvest_params.min_seconds,
                      "minimum track duration in seconds");
  harvest->add_option("--min-frames", harvest_params.min_frames,
                      "minimum track length in frames (overrides fps * min-seconds)");
  harvest->add_option("--min-overlap", harvest_params.min_overlap_frames,
                      "minimum co-occurrence overlap in frames");

  // mine
  auto* mine = app.add_subcommand("mine", "mine hard-positive tracklets and hard negatives");
  std::string mine_data = "data", mine_harvest = "harvest", mine_out = "mine";
  pl::MineParams mine_params;
  std::string mine_metric = "norm-euclidean";
  {
    const json sec = Section(config, "mine");
    FromConfig(sec, "data", mine_data);
    FromConfig(sec, "harvest_dir", mine_harvest);
    FromConfig(sec, "out", mine_out);
    FromConfig(sec, "tracklets", mine_params.tracklets);
    FromConfig(sec, "metric", mine_metric);
  }
  mine->add_option("--data", mine_data, "data directory");
  mine->add_option("--harvest-dir", mine_harvest, "harvest output directory");
  mine->add_option("--out", mine_out, "output directory");
  mine->add_option("--tracklets", mine_params.tracklets, "tracklets per track (P)");
  mine->add_option("--metric", mine_metric, "norm-euclidean | cosine | euclidean");
  std::string mine_negative_anchor = "tracklet";
  mine->add_option("--negative-anchor", mine_negative_anchor,
                   "distance reference for the hard negative: tracklet | track");

  // fit-mvcorr
  auto* fit = app.add_subcommand("fit-mvcorr", "closed-form shared-subspace fit");
  std::string fit_samples = "mine/samples.bin", fit_out = "fit";
  pl::FitParams fit_params;
  {
    const json sec = Section(config, "fit-mvcorr");
    FromConfig(sec, "samples", fit_samples);
    FromConfig(sec, "out", fit_out);
    FromConfig(sec, "rank", fit_params.rank);
    FromConfig(sec, "epsilon", fit_params.epsilon);
  }
  fit->add_option("--samples", fit_samples, "mined samples file");
  fit->add_option("--out", fit_out, "output directory");
  fit->add_option("--rank", fit_params.rank, "subspace dimension (0 = full rotation)");
  fit->add_option("--epsilon", fit_params.epsilon, "ridge (negative = auto)");

  // train
  auto* tr = app.add_subcommand("train", "gradient adaptation (imp-triplet or mvcorr)");
  std::string train_samples = "mine/samples.bin", train_data = "data", train_out = "train";
  pl::TrainParams train_params;
  std::string train_objective = "mvcorr";
  {
    const json sec = Section(config, "train");
    FromConfig(sec, "samples", train_samples);
    FromConfig(sec, "data", train_data);
    FromConfig(sec, "out", train_out);
    FromConfig(sec, "objective", train_objective);
    FromConfig(sec, "arch", train_params.preset);
    FromConfig(sec, "layer_sizes", train_params.layer_sizes);
    FromConfig(sec, "activation", train_params.activation);
    FromConfig(sec, "dropout", train_params.dropout_rate);
    FromConfig(sec, "batch_norm", train_params.batch_norm);
    FromConfig(sec, "train_fraction", train_params.train_fraction);
    FromConfig(sec, "batch_size", train_params.config.batch_size);
    FromConfig(sec, "learning_rate", train_params.config.learning_rate);
    FromConfig(sec, "momentum", train_params.config.momentum);
    FromConfig(sec, "weight_decay", train_params.config.weight_decay);
    FromConfig(sec, "early_stop_delta", train_params.config.early_stop_delta);
    FromConfig(sec, "patience", train_params.config.patience);
    FromConfig(sec, "max_epochs", train_params.config.max_epochs);
  }
  tr->add_option("--samples", train_samples, "mined samples file");
  tr->add_option("--data", train_data, "data directory (video split)");
  tr->add_option("--out", train_out, "output directory");
  tr->add_option("--objective", train_objective, "imp-triplet | mvcorr");
  tr->add_option("--arch", train_params.preset, "C1 | C2 | C3");
  tr->add_option("--layer-sizes", train_params.layer_sizes,
                 "explicit layer sizes (overrides --arch)");
  tr->add_option("--activation", train_params.activation, "relu | sigmoid");
  tr->add_option("--dropout", train_params.dropout_rate);
  tr->add_flag("--batch-norm", train_params.batch_norm);
  tr->add_option("--train-fraction", train_params.train_fraction);
  tr->add_option("--batch-size", train_params.config.batch_size);
  tr->add_option("--learning-rate", train_params.config.learning_rate,
                 "negative = per-objective default");
  tr->add_option("--momentum", train_params.config.momentum);
  tr->add_option("--weight-decay", train_params.config.weight_decay);
  tr->add_option("--early-stop-delta", train_params.config.early_stop_delta);
  tr->add_option("--patience", train_params.config.patience);
  tr->add_option("--max-epochs", train_params.config.max_epochs);

  // adapt
  auto* adapt = app.add_subcommand("adapt", "apply a model to track means");
  std::string adapt_data = "data", adapt_out = "adapt", adapt_model, adapt_tracks;
  bool adapt_raw = false;
  {
    const json sec = Section(config, "adapt");
    FromConfig(sec, "data", adapt_data);
    FromConfig(sec, "out", adapt_out);
    FromConfig(sec, "model", adapt_model);
    FromConfig(sec, "raw", adapt_raw);
    FromConfig(sec, "tracks", adapt_tracks);
  }
  adapt->add_option("--data", adapt_data, "data directory");
  adapt->add_option("--out", adapt_out, "output directory");
  adapt->add_option("--model", adapt_model, "subspace (.tmvm) or checkpoint (.tmvc)");
  adapt->add_flag("--raw", adapt_raw, "unit-normalized track means, no model");
  adapt->add_option("--tracks", adapt_tracks,
                    "track metadata override (default <data>/tracks.jsonl)");

  // cluster
  auto* cluster = app.add_subcommand("cluster", "cluster adapted features");
  std::string cluster_features = "adapt", cluster_out = "cluster";
  pl::ClusterParams cluster_params;
  std::string cluster_metric = "norm-euclidean", cluster_linkage = "average";
  double cluster_pref = std::numeric_limits<double>::quiet_NaN();
  {
    const json sec = Section(config, "cluster");
    FromConfig(sec, "features", cluster_features);
    FromConfig(sec, "out", cluster_out);
    FromConfig(sec, "method", cluster_params.method);
    FromConfig(sec, "n_clusters", cluster_params.n_clusters);
    FromConfig(sec, "linkage", cluster_linkage);
    FromConfig(sec, "metric", cluster_metric);
    FromConfig(sec, "preference", cluster_pref);
    FromConfig(sec, "damping", cluster_params.damping);
    FromConfig(sec, "max_iter", cluster_params.max_iter);
    FromConfig(sec, "convergence_iter", cluster_params.convergence_iter);
  }
  cluster->add_option("--features", cluster_features, "adapt output directory");
  cluster->add_option("--out", cluster_out, "output directory");
  cluster->add_option("--method", cluster_params.method, "hac | ap");
  cluster->add_option("--n-clusters", cluster_params.n_clusters, "cluster count (hac)");
  cluster->add_option("--linkage", cluster_linkage, "single | complete | average | ward");
  cluster->add_option("--metric", cluster_metric);
  cluster->add_option("--preference", cluster_pref, "AP preference (default: median)");
  cluster->add_option("--damping", cluster_params.damping);
  cluster->add_option("--max-iter", cluster_params.max_iter);
  cluster->add_option("--convergence-iter", cluster_params.convergence_iter);

  // eval
  auto* eval = app.add_subcommand("eval", "clustering metrics against track labels");
  std::string eval_assignments = "cluster/assignments.json", eval_data = "data",
              eval_out = "eval";
  {
    const json sec = Section(config, "eval");
    FromConfig(sec, "assignments", eval_assignments);
    FromConfig(sec, "data", eval_data);
    FromConfig(sec, "out", eval_out);
  }
  eval->add_option("--assignments", eval_assignments);
  eval->add_option("--data", eval_data, "data directory with labeled tracks");
  eval->add_option("--out", eval_out, "output directory");

  // verify
  auto* verify = app.add_subcommand("verify", "pairwise verification TPR@FPR");
  std::string verify_features = "adapt", verify_data = "data", verify_out = "verify";
  pl::EvalParams verify_params;
  {
    const json sec = Section(config, "verify");
    FromConfig(sec, "features", verify_features);
    FromConfig(sec, "data", verify_data);
    FromConfig(sec, "out", verify_out);
    FromConfig(sec, "fpr", verify_params.fpr_target);
  }
  verify->add_option("--features", verify_features, "adapt output directory");
  verify->add_option("--data", verify_data);
  verify->add_option("--out", verify_out);
  verify->add_option("--fpr", verify_params.fpr_target, "FPR operating point");

  // report
  auto* report = app.add_subcommand("report", "hard-example distance histograms");
  std::string report_samples = "mine/samples.bin", report_model, report_out = "report";
  {
    const json sec = Section(config, "report");
    FromConfig(sec, "samples", report_samples);
    FromConfig(sec, "model", report_model);
    FromConfig(sec, "out", report_out);
  }
  report->add_option("--samples", report_samples);
  report->add_option("--model", report_model, "optional model for the after histogram");
  report->add_option("--out", report_out);

  CLI11_PARSE(app, argc, argv);

  try {
    json summary;
    if (*synth) {
      spec.seed = flags.seed;
      summary = pl::run_synth(spec, synth_out);
    } else if (*harvest) {
      summary = pl::run_harvest(harvest_data, harvest_params, harvest_out);
    } else if (*mine) {
      mine_params.metric = MetricFromString(mine_metric);
      mine_params.threads = flags.threads;
      if (mine_negative_anchor == "tracklet")
        mine_params.negative_anchor = NegativeAnchor::kTrackletMean;
      else if (mine_negative_anchor == "track")
        mine_params.negative_anchor = NegativeAnchor::kTrackMean;
      else
        throw ValueError("mine: --negative-anchor must be tracklet or track");
      summary = pl::run_mine(mine_data, mine_harvest, mine_params, mine_out);
    } else if (*fit) {
      summary = pl::run_fit(fit_samples, fit_params, fit_out);
    } else if (*tr) {
      train_params.objective = ObjectiveFromString(train_objective);
      train_params.config.seed = flags.seed;
      summary = pl::run_train(train_samples, train_data, train_params, train_out);
    } else if (*adapt) {
      pl::AdaptParams params;
      params.model_path = adapt_model;
      params.raw = adapt_raw;
      params.tracks_override = adapt_tracks;
      summary = pl::run_adapt(adapt_data, params, adapt_out);
    } else if (*cluster) {
      cluster_params.metric = MetricFromString(cluster_metric);
      cluster_params.linkage = LinkageFromString(cluster_linkage);
      if (!std::isnan(cluster_pref)) cluster_params.preference = cluster_pref;
      summary = pl::run_cluster(cluster_features, cluster_params, cluster_out);
    } else if (*eval) {
      pl::EvalParams params;
      summary = pl::run_eval(eval_assignments, eval_data, params, eval_out);
      if (!flags.json_output) std::cout << pl::render_eval_table(summary);
    } else if (*verify) {
      summary = pl::run_verify(verify_features, verify_data, verify_params, verify_out);
    } else if (*report) {
      summary = pl::run_report(report_samples, report_model, report_out);
    }
    Emit(flags, summary);
    return 0;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const ValueError& e) {
    std::cerr << "parameter error: " << e.what() << '\n';
    return kExitValue;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
