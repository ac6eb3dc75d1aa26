#include "mvtrack/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "mvtrack/distance.hpp"
#include "mvtrack/io.hpp"
#include "mvtrack/losses.hpp"

namespace mvtrack {

Objective ObjectiveFromString(const std::string& name) {
  if (name == "imp-triplet") return Objective::kImpTriplet;
  if (name == "mvcorr") return Objective::kMvCorr;
  throw ValueError("unknown objective '" + name + "' (expected imp-triplet or mvcorr)");
}

std::string ObjectiveToString(Objective o) {
  return o == Objective::kImpTriplet ? "imp-triplet" : "mvcorr";
}

void TrainConfig::Validate() const {
  if (batch_size < 2) throw ValueError("TrainConfig: batch_size must be >= 2");
  if (momentum < 0.0 || momentum >= 1.0) throw ValueError("TrainConfig: momentum in [0, 1)");
  if (weight_decay < 0.0) throw ValueError("TrainConfig: weight_decay must be >= 0");
  if (early_stop_delta <= 0.0) throw ValueError("TrainConfig: early_stop_delta must be > 0");
  if (patience < 1) throw ValueError("TrainConfig: patience must be >= 1");
  if (max_epochs < 1) throw ValueError("TrainConfig: max_epochs must be >= 1");
}

SampleSplit split_by_video(const std::vector<MultiviewSample>& samples, const TrackSet& tracks,
                           double train_fraction, std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw ValueError("split_by_video: train_fraction must be in (0, 1)");
  std::vector<std::string> videos = tracks.VideoIds();
  if (videos.size() < 2)
    throw ValueError("split_by_video: need at least two videos to split");
  std::mt19937_64 rng(seed);
  std::shuffle(videos.begin(), videos.end(), rng);
  const auto n_train = std::max<std::size_t>(
      1, std::min(videos.size() - 1,
                  static_cast<std::size_t>(train_fraction * static_cast<double>(videos.size()))));
  std::unordered_set<std::string> train_videos(videos.begin(), videos.begin() + n_train);

  SampleSplit split;
  for (const MultiviewSample& s : samples) {
    const FaceTrack& t = tracks.ById(s.track_id);
    if (train_videos.count(t.video_id)) split.train.push_back(s);
    else split.validation.push_back(s);
  }
  if (split.train.empty() || split.validation.empty())
    throw ValueError("split_by_video: empty train or validation side");
  return split;
}

namespace {

// Momentum buffers mirroring the parameter tensors.
struct Velocity {
  std::vector<LayerGrads> layers;

  static Velocity ZerosLike(const ModelParams& params) {
    Velocity v;
    for (const LayerParams& layer : params.layers) {
      LayerGrads g;
      g.weight = MatrixD::Zero(layer.weight.rows(), layer.weight.cols());
      g.bias = VectorD::Zero(layer.bias.size());
      if (layer.bn_scale.size()) {
        g.bn_scale = VectorD::Zero(layer.bn_scale.size());
        g.bn_shift = VectorD::Zero(layer.bn_shift.size());
      }
      v.layers.push_back(std::move(g));
    }
    return v;
  }
};

void SgdStep(ModelParams& params, Velocity& vel, const Gradients& grads, double lr,
             double momentum, double weight_decay) {
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    LayerParams& p = params.layers[i];
    LayerGrads& v = vel.layers[i];
    const LayerGrads& g = grads.layers[i];
    v.weight = momentum * v.weight - lr * (g.weight + weight_decay * p.weight);
    p.weight += v.weight;
    v.bias = momentum * v.bias - lr * (g.bias + weight_decay * p.bias);
    p.bias += v.bias;
    if (p.bn_scale.size() && g.bn_scale.size()) {
      v.bn_scale = momentum * v.bn_scale - lr * (g.bn_scale + weight_decay * p.bn_scale);
      p.bn_scale += v.bn_scale;
      v.bn_shift = momentum * v.bn_shift - lr * g.bn_shift;
      p.bn_shift += v.bn_shift;
    }
  }
}

MatrixD GatherColumns(const std::vector<MultiviewSample>& samples,
                      const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                      int view) {
  const int d = static_cast<int>(samples.front().anchor.size());
  MatrixD out(d, static_cast<int>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    const MultiviewSample& s = samples[idx[i]];
    if (view == 0) out.col(static_cast<int>(i - begin)) = s.anchor;
    else if (view <= static_cast<int>(s.positives.size()))
      out.col(static_cast<int>(i - begin)) = s.positives[view - 1];
    else out.col(static_cast<int>(i - begin)) = s.hard_negative;
  }
  return out;
}

int NumViews(const std::vector<MultiviewSample>& samples) {
  return static_cast<int>(samples.front().positives.size()) + 1;
}

// Mean loss over the set in infer mode (no dropout, running batch-norm
// statistics), weighted by batch size.
double EvaluateLoss(std::vector<ModelParams>& nets, const NetworkConfig& config,
                    const std::vector<MultiviewSample>& samples, Objective objective,
                    const TrainConfig& tc) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  const int m = NumViews(samples);
  const int neg_view = m;
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t begin = 0; begin < idx.size(); begin += tc.batch_size) {
    const std::size_t end = std::min(idx.size(), begin + tc.batch_size);
    if (end - begin < 2) break;  // a single sample defines no batch statistics
    double loss;
    if (objective == Objective::kImpTriplet) {
      MatrixD a = forward(nets[0], config, GatherColumns(samples, idx, begin, end, 0),
                          RunMode::kInfer, nullptr);
      MatrixD p = forward(nets[0], config, GatherColumns(samples, idx, begin, end, 1),
                          RunMode::kInfer, nullptr);
      MatrixD n = forward(nets[0], config, GatherColumns(samples, idx, begin, end, neg_view),
                          RunMode::kInfer, nullptr);
      loss = imp_triplet_loss(a, p, n, tc.triplet_margin, tc.triplet_margin2,
                              tc.triplet_lambda).loss;
    } else {
      std::vector<MatrixD> outs;
      for (int v = 0; v < m; ++v) {
        ModelParams& net = nets.size() == 1 ? nets[0] : nets[v];
        outs.push_back(forward(net, config, GatherColumns(samples, idx, begin, end, v),
                               RunMode::kInfer, nullptr));
      }
      loss = mvcorr_batch_loss(outs).loss;
    }
    total += loss * static_cast<double>(end - begin);
    counted += end - begin;
  }
  if (counted == 0) throw ValueError("EvaluateLoss: no full batch available");
  return total / static_cast<double>(counted);
}

}  // namespace

TrainedModel train(const std::vector<MultiviewSample>& train_samples,
                   const std::vector<MultiviewSample>& val_samples, const NetworkConfig& net,
                   const TrainConfig& tc, Objective objective, TrainHistory* history) {
  net.Validate();
  tc.Validate();
  if (train_samples.empty() || val_samples.empty())
    throw ValueError("train: empty train or validation split");
  const int m = NumViews(train_samples);
  const int d = static_cast<int>(train_samples.front().anchor.size());
  if (net.InputDim() != d)
    throw ValueError("train: network input " + std::to_string(net.InputDim()) +
                     " does not match sample dimension " + std::to_string(d));

  const double lr = tc.EffectiveLearningRate(objective);
  const int n_nets = (objective == Objective::kMvCorr && !net.shared_weights) ? m : 1;

  std::mt19937_64 rng(tc.seed);
  TrainedModel model;
  model.config = net;
  model.objective = objective;
  for (int i = 0; i < n_nets; ++i) model.networks.push_back(ModelParams::Init(net, rng));

  std::vector<Velocity> vel;
  for (const ModelParams& p : model.networks) vel.push_back(Velocity::ZerosLike(p));

  TrainHistory hist;
  EarlyStopper stopper(tc.early_stop_delta, tc.patience);
  std::vector<ModelParams> best_nets = model.networks;
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> idx(train_samples.size());
  std::iota(idx.begin(), idx.end(), 0);

  auto finish = [&](bool stopped) {
    hist.early_stopped = stopped;
    if (history) *history = hist;
    model.networks = best_nets;
    return model;
  };

  for (int epoch = 0; epoch < tc.max_epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double epoch_loss = 0.0;
    std::size_t counted = 0;

    for (std::size_t begin = 0; begin < idx.size(); begin += tc.batch_size) {
      const std::size_t end = std::min(idx.size(), begin + tc.batch_size);
      if (end - begin < 2) break;
      double batch_loss;
      try {
      if (objective == Objective::kImpTriplet) {
        ForwardCache ca, cp, cn;
        MatrixD a = forward(model.networks[0], net,
                            GatherColumns(train_samples, idx, begin, end, 0), RunMode::kTrain,
                            &rng, &ca);
        MatrixD p = forward(model.networks[0], net,
                            GatherColumns(train_samples, idx, begin, end, 1), RunMode::kTrain,
                            &rng, &cp);
        MatrixD n = forward(model.networks[0], net,
                            GatherColumns(train_samples, idx, begin, end, m), RunMode::kTrain,
                            &rng, &cn);
        TripletLossGrad lg = imp_triplet_loss(a, p, n, tc.triplet_margin, tc.triplet_margin2,
                                              tc.triplet_lambda);
        batch_loss = lg.loss;
        Gradients grads = backward(model.networks[0], net, ca, lg.grad_anchor);
        grads.Accumulate(backward(model.networks[0], net, cp, lg.grad_positive));
        grads.Accumulate(backward(model.networks[0], net, cn, lg.grad_negative));
        SgdStep(model.networks[0], vel[0], grads, lr, tc.momentum, tc.weight_decay);
      } else {
        std::vector<ForwardCache> caches(m);
        std::vector<MatrixD> outs;
        for (int v = 0; v < m; ++v) {
          ModelParams& nw = model.networks[n_nets == 1 ? 0 : v];
          outs.push_back(forward(nw, net, GatherColumns(train_samples, idx, begin, end, v),
                                 RunMode::kTrain, &rng, &caches[v]));
        }
        MvCorrLossGrad lg = mvcorr_batch_loss(outs);
        batch_loss = lg.loss;
        if (n_nets == 1) {
          Gradients grads;
          for (int v = 0; v < m; ++v)
            grads.Accumulate(backward(model.networks[0], net, caches[v], lg.grads[v]));
          SgdStep(model.networks[0], vel[0], grads, lr, tc.momentum, tc.weight_decay);
        } else {
          for (int v = 0; v < m; ++v) {
            Gradients grads = backward(model.networks[v], net, caches[v], lg.grads[v]);
            SgdStep(model.networks[v], vel[v], grads, lr, tc.momentum, tc.weight_decay);
          }
        }
      }
      } catch (const NumericError&) {
        // Exploding weights surface as non-finite activations; report the
        // divergence with the history collected so far.
        if (history) *history = hist;
        throw;
      }
      if (!std::isfinite(batch_loss)) {
        hist.train_loss.push_back(batch_loss);
        if (history) *history = hist;
        throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
      }
      epoch_loss += batch_loss * static_cast<double>(end - begin);
      counted += end - begin;
    }
    if (counted == 0) throw ValueError("train: batch_size exceeds training set");

    hist.train_loss.push_back(epoch_loss / static_cast<double>(counted));
    const double val = EvaluateLoss(model.networks, net, val_samples, objective, tc);
    hist.val_loss.push_back(val);
    if (!std::isfinite(val)) {
      if (history) *history = hist;
      throw NumericError("train: validation loss diverged at epoch " + std::to_string(epoch));
    }
    if (val < best_val) {
      best_val = val;
      best_nets = model.networks;
      hist.best_epoch = epoch;
    }
    if (stopper.ShouldStop(val)) return finish(true);
  }
  return finish(false);
}

MatrixD adapt_embeddings(const TrainedModel& model, const MatrixD& track_means) {
  if (model.networks.empty()) throw ValueError("adapt_embeddings: untrained model");
  ModelParams net = model.networks[0];  // infer mode leaves parameters untouched
  MatrixD out = forward(net, model.config, track_means, RunMode::kInfer, nullptr);
  for (int i = 0; i < out.cols(); ++i) out.col(i) = l2_normalize(out.col(i));
  return out;
}

namespace {
constexpr char kCheckpointMagic[4] = {'T', 'M', 'V', 'C'};

void WriteTensor(std::ostream& os, const MatrixD& m) {
  io_detail::WritePod(os, static_cast<std::uint32_t>(m.rows()));
  io_detail::WritePod(os, static_cast<std::uint32_t>(m.cols()));
  io_detail::WriteMatrixF32(os, m);
}

void WriteTensor(std::ostream& os, const VectorD& v) {
  io_detail::WritePod(os, static_cast<std::uint32_t>(v.size()));
  io_detail::WritePod(os, std::uint32_t{1});
  io_detail::WriteMatrixF32(os, MatrixD(v));
}

MatrixD ReadTensor(std::istream& is, const std::string& what) {
  const auto rows = io_detail::ReadPod<std::uint32_t>(is, what);
  const auto cols = io_detail::ReadPod<std::uint32_t>(is, what);
  return io_detail::ReadMatrixF32(is, static_cast<int>(rows), static_cast<int>(cols), what);
}
}  // namespace

void write_checkpoint(const std::filesystem::path& path, const TrainedModel& model) {
  using namespace io_detail;
  if (model.networks.empty()) throw ValueError("write_checkpoint: untrained model");
  nlohmann::json header{{"layer_sizes", model.config.layer_sizes},
                        {"activation", ActivationToString(model.config.activation)},
                        {"dropout_rate", model.config.dropout_rate},
                        {"batch_norm", model.config.batch_norm},
                        {"activate_output", model.config.activate_output},
                        {"shared_weights", model.config.shared_weights},
                        {"objective", ObjectiveToString(model.objective)},
                        {"num_networks", model.networks.size()}};
  const std::string header_str = header.dump();
  auto os = OpenForWrite(path);
  WriteMagicAndVersion(os, kCheckpointMagic, kFormatVersion);
  WritePod(os, static_cast<std::uint32_t>(header_str.size()));
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const ModelParams& net : model.networks) {
    for (const LayerParams& layer : net.layers) {
      WriteTensor(os, layer.weight);
      WriteTensor(os, layer.bias);
      WritePod(os, static_cast<std::uint8_t>(layer.bn_scale.size() > 0));
      if (layer.bn_scale.size()) {
        WriteTensor(os, layer.bn_scale);
        WriteTensor(os, layer.bn_shift);
        WriteTensor(os, layer.bn_run_mean);
        WriteTensor(os, layer.bn_run_var);
      }
    }
  }
  if (!os) throw IoError("write failed: " + path.string());
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  using namespace io_detail;
  auto is = OpenForRead(path);
  const std::string what = "checkpoint " + path.string();
  CheckMagicAndVersion(is, kCheckpointMagic, kFormatVersion, what);
  const auto header_len = ReadPod<std::uint32_t>(is, what);
  std::string header_str(header_len, '\0');
  is.read(header_str.data(), header_len);
  if (!is) throw FormatError(what + ": truncated payload");
  nlohmann::json header = nlohmann::json::parse(header_str, nullptr, false);
  if (header.is_discarded()) throw FormatError(what + ": invalid JSON header");

  TrainedModel model;
  try {
    model.config.layer_sizes = header.at("layer_sizes").get<std::vector<int>>();
    model.config.activation = ActivationFromString(header.at("activation").get<std::string>());
    model.config.dropout_rate = header.at("dropout_rate").get<double>();
    model.config.batch_norm = header.at("batch_norm").get<bool>();
    model.config.activate_output = header.at("activate_output").get<bool>();
    model.config.shared_weights = header.at("shared_weights").get<bool>();
    model.objective = ObjectiveFromString(header.at("objective").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": bad header: " + e.what());
  }
  model.config.Validate();
  const auto n_nets = header.at("num_networks").get<std::size_t>();
  for (std::size_t i = 0; i < n_nets; ++i) {
    ModelParams net;
    for (int l = 0; l < model.config.NumLayers(); ++l) {
      LayerParams layer;
      layer.weight = ReadTensor(is, what);
      layer.bias = VectorD(ReadTensor(is, what).col(0));
      const auto has_bn = ReadPod<std::uint8_t>(is, what);
      if (has_bn) {
        layer.bn_scale = VectorD(ReadTensor(is, what).col(0));
        layer.bn_shift = VectorD(ReadTensor(is, what).col(0));
        layer.bn_run_mean = VectorD(ReadTensor(is, what).col(0));
        layer.bn_run_var = VectorD(ReadTensor(is, what).col(0));
      }
      net.layers.push_back(std::move(layer));
    }
    model.networks.push_back(std::move(net));
  }
  return model;
}

void write_history(const std::filesystem::path& path, const TrainHistory& history) {
  auto os = io_detail::OpenForWrite(path);
  os << "epoch,train_loss,val_loss\n";
  std::ostringstream buf;
  buf.precision(17);
  for (std::size_t i = 0; i < history.train_loss.size(); ++i) {
    buf.str("");
    buf << i << ',' << history.train_loss[i] << ',';
    if (i < history.val_loss.size()) buf << history.val_loss[i];
    os << buf.str() << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace mvtrack
