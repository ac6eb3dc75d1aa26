#include "mvtrack/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <sstream>

#include "mvtrack/io.hpp"
#include "mvtrack/metrics.hpp"

namespace mvtrack::pipeline {

namespace {

void WriteJsonFile(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

json LoadJsonFile(const fs::path& path, int expect_version = 1) {
  std::ifstream is(path);
  if (!is) throw IoError("missing file: " + path.string());
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded()) throw FormatError(path.string() + ": invalid JSON");
  if (expect_version > 0) {
    if (!j.contains("version") || !j["version"].is_number_integer())
      throw FormatError(path.string() + ": missing format version");
    if (j["version"].get<int>() != expect_version)
      throw FormatError(path.string() + ": unsupported format version " +
                        std::to_string(j["version"].get<int>()));
  }
  return j;
}

void EnsureDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Track labels as dense ints, in the order of the given track indices.
std::vector<int> DenseLabels(const TrackSet& tracks, const std::vector<TrackId>& order) {
  std::map<std::string, int> ids;
  std::vector<int> out;
  for (TrackId tid : order) {
    const FaceTrack& t = tracks.ById(tid);
    if (!t.label)
      throw ValueError("track " + std::to_string(tid) + " carries no label; cannot evaluate");
    out.push_back(ids.emplace(*t.label, static_cast<int>(ids.size())).first->second);
  }
  return out;
}

}  // namespace

fs::path tracks_file(const fs::path& data_dir) { return data_dir / "tracks.jsonl"; }

fs::path embeddings_file(const fs::path& data_dir, const std::string& video_id) {
  return data_dir / ("emb_" + video_id + ".tmeb");
}

std::map<std::string, EmbeddingMatrix> load_corpus_embeddings(const fs::path& data_dir,
                                                              const TrackSet& tracks) {
  std::map<std::string, EmbeddingMatrix> out;
  for (const std::string& video : tracks.VideoIds()) {
    EmbeddingMatrix emb = load_embeddings(embeddings_file(data_dir, video));
    tracks.ValidateColumns(video, emb);
    out.emplace(video, std::move(emb));
  }
  return out;
}

json run_synth(const SyntheticSpec& spec, const fs::path& out_dir) {
  EnsureDir(out_dir);
  SyntheticCorpus corpus = generate_synthetic(spec);
  write_tracks(tracks_file(out_dir), corpus.tracks);
  for (const auto& [video, emb] : corpus.embeddings)
    write_embeddings(embeddings_file(out_dir, video), emb);
  json summary{{"command", "synth"},
               {"out_dir", out_dir.string()},
               {"n_tracks", corpus.tracks.size()},
               {"n_videos", corpus.embeddings.size()},
               {"n_identities", spec.n_identities},
               {"dim", spec.dim}};
  std::size_t frames = 0;
  for (const auto& [video, emb] : corpus.embeddings) frames += emb.count;
  summary["n_frames"] = frames;
  return summary;
}

std::int64_t HarvestParams::EffectiveMinFrames() const {
  if (min_frames >= 0) return min_frames;
  if (fps <= 0.0 || min_seconds < 0.0)
    throw ValueError("harvest: fps must be positive and min_seconds >= 0");
  return std::llround(fps * min_seconds);
}

json run_harvest(const fs::path& data_dir, const HarvestParams& params,
                 const fs::path& out_dir) {
  EnsureDir(out_dir);
  TrackSet all = load_tracks(tracks_file(data_dir));
  const std::int64_t min_frames = std::max<std::int64_t>(1, params.EffectiveMinFrames());

  TrackSet long_enough = filter_min_length(all, min_frames);
  ConstraintGraph graph = build_constraints(long_enough, params.min_overlap_frames);
  TrackSet kept = filter_cooccurring(long_enough, graph);
  // Constraints are rebuilt over the surviving tracks so node lists and
  // degrees refer to the final set; edges are unchanged by construction.
  ConstraintGraph final_graph = build_constraints(kept, params.min_overlap_frames);
  HarvestStats stats = harvest_stats(final_graph, kept);

  write_tracks(out_dir / "filtered_tracks.jsonl", kept);
  json constraints{{"version", 1}, {"nodes", final_graph.nodes}};
  json edges = json::array();
  for (const auto& [a, b] : final_graph.cannot_link) edges.push_back(json::array({a, b}));
  constraints["edges"] = edges;
  WriteJsonFile(out_dir / "constraints.json", constraints);

  json stats_json{{"version", 1},
                  {"n_tracks_input", all.size()},
                  {"n_tracks_min_length", long_enough.size()},
                  {"n_tracks_kept", stats.n_tracks},
                  {"min_frames", min_frames},
                  {"n_cannot_link_pairs", stats.n_cannot_link_pairs},
                  {"cooccurrence_coverage", stats.cooccurrence_coverage},
                  {"single_link_fraction", stats.single_link_fraction},
                  {"degree_min", stats.degree_min},
                  {"degree_max", stats.degree_max},
                  {"degree_mean", stats.degree_mean},
                  {"degree_std", stats.degree_std},
                  {"faces_per_track_mean", stats.faces_per_track_mean},
                  {"faces_per_track_std", stats.faces_per_track_std}};
  WriteJsonFile(out_dir / "harvest_stats.json", stats_json);

  json summary = stats_json;
  summary["command"] = "harvest";
  summary["out_dir"] = out_dir.string();
  summary.erase("version");
  return summary;
}

namespace {

ConstraintGraph LoadConstraints(const fs::path& path) {
  json j = LoadJsonFile(path);
  ConstraintGraph g;
  try {
    g.nodes = j.at("nodes").get<std::vector<TrackId>>();
    for (const json& e : j.at("edges")) {
      TrackId a = e.at(0).get<TrackId>();
      TrackId b = e.at(1).get<TrackId>();
      g.cannot_link.emplace_back(std::min(a, b), std::max(a, b));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  std::sort(g.cannot_link.begin(), g.cannot_link.end());
  for (const auto& [a, b] : g.cannot_link) {
    g.adjacency[a].push_back(b);
    g.adjacency[b].push_back(a);
  }
  for (auto& [id, nbrs] : g.adjacency) std::sort(nbrs.begin(), nbrs.end());
  return g;
}

}  // namespace

json run_mine(const fs::path& data_dir, const fs::path& harvest_dir, const MineParams& params,
              const fs::path& out_dir) {
  EnsureDir(out_dir);
  if (params.tracklets < 2) throw ValueError("mine: need at least two tracklets per track");
  if (params.threads < 1) throw ValueError("mine: threads must be >= 1");
  TrackSet tracks = load_tracks(harvest_dir / "filtered_tracks.jsonl");
  ConstraintGraph graph = LoadConstraints(harvest_dir / "constraints.json");
  auto embeddings = load_corpus_embeddings(data_dir, tracks);

  MiningReport report;
  std::vector<MultiviewSample> samples = mine_corpus(tracks, embeddings, graph,
                                                     params.tracklets, params.metric, &report,
                                                     params.threads, params.negative_anchor);
  if (samples.empty()) throw ValueError("mine: no eligible track produced a sample");
  write_samples(out_dir / "samples.bin", samples);
  json stats{{"version", 1},
             {"mined", report.mined},
             {"skipped_short", report.skipped_short},
             {"skipped_isolated", report.skipped_isolated},
             {"unused_frames", report.unused_frames},
             {"tracklets", params.tracklets},
             {"metric", MetricToString(params.metric)},
             {"negative_anchor",
              params.negative_anchor == NegativeAnchor::kTrackletMean ? "tracklet" : "track"}};
  WriteJsonFile(out_dir / "mining_stats.json", stats);

  json summary = stats;
  summary["command"] = "mine";
  summary["out_dir"] = out_dir.string();
  summary.erase("version");
  return summary;
}

json run_fit(const fs::path& samples_path, const FitParams& params, const fs::path& out_dir) {
  EnsureDir(out_dir);
  std::vector<MultiviewSample> samples = load_samples(samples_path);
  SubspaceModel model = fit_mvcorr(samples, params.rank, params.epsilon);
  write_subspace(out_dir / "subspace.tmvm", model);

  // Report the achieved objective on the training covariances.
  ViewStack stack;
  const int m = static_cast<int>(samples.front().positives.size()) + 1;
  const int d = static_cast<int>(samples.front().anchor.size());
  stack.views.assign(m, MatrixD(d, static_cast<int>(samples.size())));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    stack.views[0].col(static_cast<int>(i)) = samples[i].anchor;
    for (int v = 1; v < m; ++v)
      stack.views[v].col(static_cast<int>(i)) = samples[i].positives[v - 1];
  }
  CovariancePair cov = covariances(center_views(std::move(stack)));
  const double rho = mv_corr(model, cov);

  json summary{{"command", "fit-mvcorr"},
               {"out_dir", out_dir.string()},
               {"n_samples", samples.size()},
               {"dim", model.dim()},
               {"rank", model.rank()},
               {"num_views", model.num_views},
               {"epsilon", model.epsilon},
               {"mv_corr", rho},
               {"top_eigenvalue", model.eigenvalues(0)}};
  return summary;
}

json run_train(const fs::path& samples_path, const fs::path& data_dir,
               const TrainParams& params, const fs::path& out_dir) {
  EnsureDir(out_dir);
  std::vector<MultiviewSample> samples = load_samples(samples_path);
  TrackSet tracks = load_tracks(tracks_file(data_dir));

  NetworkConfig net;
  const int d = static_cast<int>(samples.front().anchor.size());
  if (!params.layer_sizes.empty()) {
    net.layer_sizes = params.layer_sizes;
    if (net.layer_sizes.front() != d)
      throw ValueError("train: layer_sizes input does not match sample dimension");
  } else {
    net = NetworkConfig::Preset(params.preset, d);
  }
  net.activation = ActivationFromString(params.activation);
  net.dropout_rate = params.dropout_rate;
  net.batch_norm = params.batch_norm;
  net.shared_weights = params.objective == Objective::kImpTriplet;

  SampleSplit split =
      split_by_video(samples, tracks, params.train_fraction, params.config.seed);
  TrainHistory history;
  TrainedModel model =
      train(split.train, split.validation, net, params.config, params.objective, &history);
  write_checkpoint(out_dir / "checkpoint.tmvc", model);
  write_history(out_dir / "history.csv", history);

  json summary{{"command", "train"},
               {"out_dir", out_dir.string()},
               {"objective", ObjectiveToString(params.objective)},
               {"n_train", split.train.size()},
               {"n_validation", split.validation.size()},
               {"epochs", history.train_loss.size()},
               {"best_epoch", history.best_epoch},
               {"early_stopped", history.early_stopped},
               {"final_val_loss", history.val_loss.empty() ? 0.0 : history.val_loss.back()},
               {"best_val_loss",
                history.best_epoch >= 0 ? history.val_loss[history.best_epoch] : 0.0}};
  return summary;
}

json run_adapt(const fs::path& data_dir, const AdaptParams& params, const fs::path& out_dir) {
  EnsureDir(out_dir);
  TrackSet tracks = load_tracks(params.tracks_override.empty() ? tracks_file(data_dir)
                                                               : params.tracks_override);
  if (tracks.empty()) throw ValueError("adapt: empty track set");
  auto embeddings = load_corpus_embeddings(data_dir, tracks);

  std::vector<TrackId> order;
  const int d = embeddings.begin()->second.dim;
  MatrixD means(d, static_cast<int>(tracks.size()));
  int col = 0;
  for (const FaceTrack& t : tracks.tracks()) {
    means.col(col++) = track_mean(t, embeddings.at(t.video_id)).vector;
    order.push_back(t.track_id);
  }

  MatrixD features;
  std::string mode;
  if (params.raw) {
    features = means;
    for (int i = 0; i < features.cols(); ++i) features.col(i) = l2_normalize(features.col(i));
    mode = "raw";
  } else if (params.model_path.extension() == ".tmvm") {
    SubspaceModel model = load_subspace(params.model_path);
    features = project(model, means);
    for (int i = 0; i < features.cols(); ++i) features.col(i) = l2_normalize(features.col(i));
    mode = "subspace";
  } else if (params.model_path.extension() == ".tmvc") {
    TrainedModel model = load_checkpoint(params.model_path);
    features = adapt_embeddings(model, means);
    mode = "checkpoint";
  } else {
    throw ValueError("adapt: model path must end in .tmvm or .tmvc (or pass raw)");
  }

  EmbeddingMatrix out = EmbeddingMatrix::FromData(features.cast<float>());
  write_embeddings(out_dir / "features.tmeb", out);
  json index{{"version", 1}, {"track_ids", order}, {"mode", mode}};
  WriteJsonFile(out_dir / "adapted_index.json", index);

  return json{{"command", "adapt"},
              {"out_dir", out_dir.string()},
              {"mode", mode},
              {"n_tracks", order.size()},
              {"feature_dim", out.dim}};
}

json run_cluster(const fs::path& features_dir, const ClusterParams& params,
                 const fs::path& out_dir) {
  EnsureDir(out_dir);
  EmbeddingMatrix features = load_embeddings(features_dir / "features.tmeb");
  json index = LoadJsonFile(features_dir / "adapted_index.json");
  const auto track_ids = index.at("track_ids").get<std::vector<TrackId>>();
  if (static_cast<int>(track_ids.size()) != features.count)
    throw FormatError("cluster: feature count and track index disagree");

  const MatrixD cols = features.data.cast<double>();
  ClusteringResult result;
  if (params.method == "hac") {
    if (params.n_clusters < 1)
      throw ValueError("cluster: hac requires --n-clusters >= 1");
    result = hac(cols, params.n_clusters, params.linkage, params.metric);
  } else if (params.method == "ap") {
    result = affinity_propagation(similarity_from_embeddings(cols, params.metric),
                                  params.preference, params.damping, params.max_iter,
                                  params.convergence_iter);
  } else {
    throw ValueError("cluster: unknown method '" + params.method + "' (expected hac or ap)");
  }

  json items = json::array();
  for (std::size_t i = 0; i < track_ids.size(); ++i)
    items.push_back(json::array({track_ids[i], result.assignments[i]}));
  json assignments{{"version", 1},
                   {"method", result.method},
                   {"n_clusters", result.n_clusters},
                   {"converged", result.converged},
                   {"items", items}};
  if (!result.exemplars.empty()) {
    json ex = json::array();
    for (int e : result.exemplars) ex.push_back(track_ids[e]);
    assignments["exemplar_track_ids"] = ex;
  }
  WriteJsonFile(out_dir / "assignments.json", assignments);

  return json{{"command", "cluster"},
              {"out_dir", out_dir.string()},
              {"method", result.method},
              {"n_clusters", result.n_clusters},
              {"converged", result.converged}};
}

namespace {

json MetricsToJson(const MetricReport& r) {
  return json{{"homogeneity", r.homogeneity}, {"completeness", r.completeness},
              {"v_measure", r.v_measure},     {"purity", r.purity},
              {"accuracy", r.accuracy},       {"oci", r.oci}};
}

}  // namespace

json run_eval(const fs::path& assignments_path, const fs::path& data_dir,
              const EvalParams& params, const fs::path& out_dir) {
  (void)params;
  EnsureDir(out_dir);
  TrackSet tracks = load_tracks(tracks_file(data_dir));
  json assignments = LoadJsonFile(assignments_path);

  std::vector<TrackId> order;
  std::vector<int> pred;
  for (const json& item : assignments.at("items")) {
    order.push_back(item.at(0).get<TrackId>());
    pred.push_back(item.at(1).get<int>());
  }
  if (order.empty()) throw ValueError("eval: empty assignments");
  std::vector<int> truth = DenseLabels(tracks, order);

  json per_video = json::object();
  std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> by_video;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const FaceTrack& t = tracks.ById(order[i]);
    by_video[t.video_id].first.push_back(pred[i]);
    by_video[t.video_id].second.push_back(truth[i]);
  }
  double v_sum = 0.0, oci_sum = 0.0;
  for (const auto& [video, labels] : by_video) {
    MetricReport r = evaluate_clustering(labels.first, labels.second);
    per_video[video] = MetricsToJson(r);
    v_sum += r.v_measure;
    oci_sum += r.oci;
  }
  MetricReport pooled = evaluate_clustering(pred, truth);

  json result{{"version", 1},
              {"method", assignments.at("method")},
              {"pooled", MetricsToJson(pooled)},
              {"per_video", per_video},
              {"mean_v_measure", v_sum / static_cast<double>(by_video.size())},
              {"mean_oci", oci_sum / static_cast<double>(by_video.size())}};
  WriteJsonFile(out_dir / "metrics.json", result);

  json summary = result;
  summary["command"] = "eval";
  summary["out_dir"] = out_dir.string();
  summary.erase("version");
  return summary;
}

json run_verify(const fs::path& features_dir, const fs::path& data_dir,
                const EvalParams& params, const fs::path& out_dir) {
  EnsureDir(out_dir);
  TrackSet tracks = load_tracks(tracks_file(data_dir));
  EmbeddingMatrix features = load_embeddings(features_dir / "features.tmeb");
  json index = LoadJsonFile(features_dir / "adapted_index.json");
  const auto track_ids = index.at("track_ids").get<std::vector<TrackId>>();
  if (static_cast<int>(track_ids.size()) != features.count)
    throw FormatError("verify: feature count and track index disagree");

  std::map<std::string, std::vector<int>> video_cols;
  for (std::size_t i = 0; i < track_ids.size(); ++i)
    video_cols[tracks.ById(track_ids[i]).video_id].push_back(static_cast<int>(i));

  json per_video = json::object();
  double sum = 0.0;
  int counted = 0;
  for (const auto& [video, cols] : video_cols) {
    if (cols.size() < 2) continue;
    std::vector<TrackId> order;
    for (int c : cols) order.push_back(track_ids[c]);
    std::vector<int> labels = DenseLabels(tracks, order);
    std::vector<VerificationPair> pairs = verification_pairs(labels);
    std::vector<double> scores;
    std::vector<char> same;
    bool both = false, seen_same = false, seen_diff = false;
    for (const VerificationPair& p : pairs) {
      const double d = metric_distance(params.metric,
                                       features.Column(cols[p.first]),
                                       features.Column(cols[p.second]));
      scores.push_back(-d);
      same.push_back(p.same ? 1 : 0);
      (p.same ? seen_same : seen_diff) = true;
    }
    both = seen_same && seen_diff;
    if (!both) continue;  // single-identity video defines no operating point
    const double tpr = tpr_at_fpr(scores, same, params.fpr_target);
    per_video[video] = tpr;
    sum += tpr;
    ++counted;
  }
  if (counted == 0) throw ValueError("verify: no video with both pair classes");

  json result{{"version", 1},
              {"fpr_target", params.fpr_target},
              {"per_video", per_video},
              {"mean_tpr", sum / static_cast<double>(counted)}};
  WriteJsonFile(out_dir / "verification.json", result);
  json summary = result;
  summary["command"] = "verify";
  summary["out_dir"] = out_dir.string();
  summary.erase("version");
  return summary;
}

namespace {

constexpr int kHistBins = 100;
constexpr double kHistWidth = 0.02;

struct Histogram {
  std::vector<std::size_t> pos = std::vector<std::size_t>(kHistBins, 0);
  std::vector<std::size_t> neg = std::vector<std::size_t>(kHistBins, 0);
  double pos_mean = 0.0, neg_mean = 0.0;
  std::size_t pos_n = 0, neg_n = 0;

  void Add(double d, bool positive) {
    int bin = static_cast<int>(d / kHistWidth);
    bin = std::clamp(bin, 0, kHistBins - 1);
    if (positive) {
      ++pos[bin];
      pos_mean += d;
      ++pos_n;
    } else {
      ++neg[bin];
      neg_mean += d;
      ++neg_n;
    }
  }
  void Finish() {
    if (pos_n) pos_mean /= static_cast<double>(pos_n);
    if (neg_n) neg_mean /= static_cast<double>(neg_n);
  }
};

void WriteHistCsv(const fs::path& path, const Histogram& h) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "bin_low,bin_high,hard_positive,hard_negative\n";
  std::ostringstream buf;
  buf.precision(17);
  for (int b = 0; b < kHistBins; ++b) {
    buf.str("");
    buf << b * kHistWidth << ',' << (b + 1) * kHistWidth << ',' << h.pos[b] << ',' << h.neg[b];
    os << buf.str() << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace

json run_report(const fs::path& samples_path, const fs::path& model_path,
                const fs::path& out_dir) {
  EnsureDir(out_dir);
  std::vector<MultiviewSample> samples = load_samples(samples_path);

  Histogram before;
  for (const MultiviewSample& s : samples) {
    for (const VectorD& p : s.positives)
      before.Add(norm_euclidean_distance(s.anchor, p), true);
    before.Add(norm_euclidean_distance(s.anchor, s.hard_negative), false);
  }
  before.Finish();
  WriteHistCsv(out_dir / "hist_before.csv", before);

  json summary{{"command", "report"},
               {"out_dir", out_dir.string()},
               {"n_samples", samples.size()},
               {"before", {{"hard_positive_mean", before.pos_mean},
                           {"hard_negative_mean", before.neg_mean}}}};

  if (!model_path.empty()) {
    auto transform = [&](const VectorD& x) -> VectorD { return x; };
    std::function<VectorD(const VectorD&)> fn;
    if (model_path.extension() == ".tmvm") {
      auto model = std::make_shared<SubspaceModel>(load_subspace(model_path));
      fn = [model](const VectorD& x) { return l2_normalize(project(*model, x)); };
    } else if (model_path.extension() == ".tmvc") {
      auto model = std::make_shared<TrainedModel>(load_checkpoint(model_path));
      fn = [model](const VectorD& x) {
        MatrixD out = adapt_embeddings(*model, MatrixD(x));
        return VectorD(out.col(0));
      };
    } else {
      throw ValueError("report: model path must end in .tmvm or .tmvc");
    }
    (void)transform;

    Histogram after;
    for (const MultiviewSample& s : samples) {
      const VectorD anchor = fn(s.anchor);
      for (const VectorD& p : s.positives)
        after.Add(norm_euclidean_distance(anchor, fn(p)), true);
      after.Add(norm_euclidean_distance(anchor, fn(s.hard_negative)), false);
    }
    after.Finish();
    WriteHistCsv(out_dir / "hist_after.csv", after);
    summary["after"] = {{"hard_positive_mean", after.pos_mean},
                        {"hard_negative_mean", after.neg_mean}};
  }
  return summary;
}

std::string render_eval_table(const json& eval_result) {
  std::vector<std::string> videos;
  for (auto it = eval_result.at("per_video").begin(); it != eval_result.at("per_video").end();
       ++it)
    videos.push_back(it.key());

  std::ostringstream os;
  os << std::left << std::setw(18) << "method";
  for (const std::string& v : videos) os << std::right << std::setw(10) << v;
  os << std::right << std::setw(16) << "mean (OCI)" << '\n';

  os << std::left << std::setw(18) << eval_result.at("method").get<std::string>();
  os.setf(std::ios::fixed);
  os.precision(1);
  for (const std::string& v : videos)
    os << std::right << std::setw(10)
       << 100.0 * eval_result.at("per_video").at(v).at("v_measure").get<double>();
  std::ostringstream mean;
  mean.setf(std::ios::fixed);
  mean.precision(1);
  mean << 100.0 * eval_result.at("mean_v_measure").get<double>() << " (";
  mean.precision(1);
  mean << eval_result.at("mean_oci").get<double>() << ")";
  os << std::right << std::setw(16) << mean.str() << '\n';
  return os.str();
}

}  // namespace mvtrack::pipeline
