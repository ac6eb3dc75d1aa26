#include "mvtrack/network.hpp"

#include <cmath>

namespace mvtrack {

namespace {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;
}  // namespace

Activation ActivationFromString(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ValueError("unknown activation '" + name + "' (expected relu or sigmoid)");
}

std::string ActivationToString(Activation a) {
  return a == Activation::kRelu ? "relu" : "sigmoid";
}

void NetworkConfig::Validate() const {
  if (layer_sizes.size() < 2)
    throw ValueError("NetworkConfig: need an input and at least one layer");
  for (int s : layer_sizes)
    if (s < 1) throw ValueError("NetworkConfig: layer sizes must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ValueError("NetworkConfig: dropout_rate must be in [0, 1)");
}

NetworkConfig NetworkConfig::Preset(const std::string& name, int input_dim) {
  if (input_dim < 2) throw ValueError("NetworkConfig::Preset: input_dim too small");
  NetworkConfig c;
  if (name == "C1") {
    c.layer_sizes = {input_dim, input_dim, input_dim / 2};
  } else if (name == "C2") {
    c.layer_sizes = {input_dim, 2 * input_dim, input_dim};
  } else if (name == "C3") {
    c.layer_sizes = {input_dim, 2 * input_dim, input_dim, input_dim / 2};
  } else {
    throw ValueError("unknown architecture preset '" + name + "' (expected C1, C2 or C3)");
  }
  return c;
}

ModelParams ModelParams::Init(const NetworkConfig& config, std::mt19937_64& rng) {
  config.Validate();
  ModelParams params;
  for (int i = 0; i < config.NumLayers(); ++i) {
    const int in = config.layer_sizes[i];
    const int out = config.layer_sizes[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    LayerParams layer;
    layer.weight.resize(out, in);
    for (int c = 0; c < in; ++c)
      for (int r = 0; r < out; ++r) layer.weight(r, c) = uni(rng);
    layer.bias = VectorD::Zero(out);
    const bool hidden = i + 1 < config.NumLayers();
    if (config.batch_norm && hidden) {
      layer.bn_scale = VectorD::Ones(out);
      layer.bn_shift = VectorD::Zero(out);
      layer.bn_run_mean = VectorD::Zero(out);
      layer.bn_run_var = VectorD::Ones(out);
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

static MatrixD Activate(Activation act, const MatrixD& z) {
  if (act == Activation::kRelu) return z.cwiseMax(0.0);
  return ((-z.array()).exp() + 1.0).inverse().matrix();
}

MatrixD forward(ModelParams& params, const NetworkConfig& config, const MatrixD& batch,
                RunMode mode, std::mt19937_64* rng, ForwardCache* cache) {
  config.Validate();
  if (batch.rows() != config.InputDim())
    throw ValueError("forward: batch has " + std::to_string(batch.rows()) +
                     " rows, network expects " + std::to_string(config.InputDim()));
  if (static_cast<int>(params.layers.size()) != config.NumLayers())
    throw ValueError("forward: parameter/layer count mismatch");
  const bool train = mode == RunMode::kTrain;
  if (train && config.dropout_rate > 0.0 && rng == nullptr)
    throw ValueError("forward: train mode with dropout requires an rng");
  const int num_layers = config.NumLayers();
  if (cache) *cache = ForwardCache{};

  MatrixD x = batch;
  for (int i = 0; i < num_layers; ++i) {
    LayerParams& layer = params.layers[i];
    const bool last = i + 1 == num_layers;
    if (cache) cache->inputs.push_back(x);

    MatrixD z = (layer.weight * x).colwise() + layer.bias;
    if (cache) cache->preact.push_back(z);

    MatrixD y;
    if (last && !config.activate_output) {
      y = std::move(z);
      if (cache) {
        cache->activated.emplace_back();
        cache->bn_hat.emplace_back();
        cache->bn_mean.emplace_back();
        cache->bn_var.emplace_back();
        cache->dropout_mask.emplace_back();
      }
    } else {
      y = Activate(config.activation, z);
      if (cache) cache->activated.push_back(y);

      if (config.batch_norm && !last) {
        const auto b = static_cast<double>(y.cols());
        VectorD mean, var;
        if (train) {
          mean = y.rowwise().mean();
          MatrixD centered = y.colwise() - mean;
          var = centered.array().square().rowwise().mean();
          layer.bn_run_mean = kBnMomentum * layer.bn_run_mean + (1.0 - kBnMomentum) * mean;
          layer.bn_run_var = kBnMomentum * layer.bn_run_var + (1.0 - kBnMomentum) * var;
          (void)b;
        } else {
          mean = layer.bn_run_mean;
          var = layer.bn_run_var;
        }
        VectorD inv_std = (var.array() + kBnEps).rsqrt();
        MatrixD hat = (y.colwise() - mean).array().colwise() * inv_std.array();
        y = (hat.array().colwise() * layer.bn_scale.array()).matrix().colwise() +
            layer.bn_shift;
        if (cache) {
          cache->bn_hat.push_back(hat);
          cache->bn_mean.push_back(mean);
          cache->bn_var.push_back(var);
        }
      } else if (cache) {
        cache->bn_hat.emplace_back();
        cache->bn_mean.emplace_back();
        cache->bn_var.emplace_back();
      }

      if (!last && train && config.dropout_rate > 0.0) {
        const double keep = 1.0 - config.dropout_rate;
        std::bernoulli_distribution bern(keep);
        MatrixD mask(y.rows(), y.cols());
        for (int c = 0; c < mask.cols(); ++c)
          for (int r = 0; r < mask.rows(); ++r) mask(r, c) = bern(*rng) ? 1.0 / keep : 0.0;
        y = y.cwiseProduct(mask);
        if (cache) cache->dropout_mask.push_back(std::move(mask));
      } else if (cache) {
        cache->dropout_mask.emplace_back();
      }
    }
    if (!y.allFinite())
      throw NumericError("forward: non-finite activation at layer " + std::to_string(i));
    x = std::move(y);
  }
  return x;
}

void Gradients::Accumulate(const Gradients& other) {
  if (layers.empty()) {
    *this = other;
    return;
  }
  if (layers.size() != other.layers.size())
    throw ValueError("Gradients::Accumulate: layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += other.layers[i].weight;
    layers[i].bias += other.layers[i].bias;
    if (layers[i].bn_scale.size()) {
      layers[i].bn_scale += other.layers[i].bn_scale;
      layers[i].bn_shift += other.layers[i].bn_shift;
    }
  }
  input += other.input;
}

Gradients backward(const ModelParams& params, const NetworkConfig& config,
                   const ForwardCache& cache, const MatrixD& grad_output) {
  const int num_layers = config.NumLayers();
  if (static_cast<int>(cache.inputs.size()) != num_layers)
    throw ValueError("backward: cache does not match network depth");

  Gradients grads;
  grads.layers.resize(num_layers);
  MatrixD dy = grad_output;

  for (int i = num_layers - 1; i >= 0; --i) {
    const LayerParams& layer = params.layers[i];
    const bool last = i + 1 == num_layers;
    const bool activated = !last || config.activate_output;

    if (activated) {
      if (cache.dropout_mask[i].size()) dy = dy.cwiseProduct(cache.dropout_mask[i]);

      if (layer.bn_scale.size() && !last) {
        // Batch-norm backward over the batch dimension.
        const MatrixD& hat = cache.bn_hat[i];
        const auto b = static_cast<double>(hat.cols());
        VectorD inv_std = (cache.bn_var[i].array() + kBnEps).rsqrt();
        grads.layers[i].bn_scale = dy.cwiseProduct(hat).rowwise().sum();
        grads.layers[i].bn_shift = dy.rowwise().sum();
        MatrixD dhat = dy.array().colwise() * layer.bn_scale.array();
        VectorD sum_dhat = dhat.rowwise().sum();
        VectorD sum_dhat_hat = dhat.cwiseProduct(hat).rowwise().sum();
        MatrixD da = (dhat * b).colwise() - sum_dhat;
        da -= (hat.array().colwise() * sum_dhat_hat.array()).matrix();
        da = (da.array().colwise() * (inv_std / b).array()).matrix();
        dy = std::move(da);
      }

      // Activation derivative on the cached post-activation values.
      const MatrixD& a = cache.activated[i];
      if (config.activation == Activation::kRelu) {
        dy = dy.cwiseProduct((cache.preact[i].array() > 0.0).cast<double>().matrix());
      } else {
        dy = dy.cwiseProduct((a.array() * (1.0 - a.array())).matrix());
      }
      (void)a;
    }

    grads.layers[i].weight = dy * cache.inputs[i].transpose();
    grads.layers[i].bias = dy.rowwise().sum();
    dy = layer.weight.transpose() * dy;
  }
  grads.input = std::move(dy);
  return grads;
}

}  // namespace mvtrack
