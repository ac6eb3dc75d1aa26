#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mvtrack/types.hpp"

namespace mvtrack {

enum class Activation { kRelu, kSigmoid };

Activation ActivationFromString(const std::string& name);
std::string ActivationToString(Activation a);

// Fully connected stack. Hidden layers run affine -> activation ->
// [batch norm] -> dropout; the output layer is affine (activation only
// when activate_output is set, no batch norm or dropout).
struct NetworkConfig {
  std::vector<int> layer_sizes;  // input size first, output size last
  Activation activation = Activation::kRelu;
  double dropout_rate = 0.2;
  bool batch_norm = false;
  bool activate_output = false;
  // Triplet branches always share one network. For the mvcorr objective
  // each view gets its own network unless this asks for sharing.
  bool shared_weights = false;

  int NumLayers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int InputDim() const { return layer_sizes.front(); }
  int OutputDim() const { return layer_sizes.back(); }
  void Validate() const;

  // The three architectures used for adaptation, parameterized by input
  // width (the published sizes correspond to input 512):
  //   C1: in -> in      -> in/2
  //   C2: in -> 2*in    -> in
  //   C3: in -> 2*in    -> in -> in/2
  static NetworkConfig Preset(const std::string& name, int input_dim);
};

struct LayerParams {
  MatrixD weight;  // out x in
  VectorD bias;    // out
  // Batch-norm parameters; empty unless the layer normalizes.
  VectorD bn_scale, bn_shift, bn_run_mean, bn_run_var;
};

struct ModelParams {
  std::vector<LayerParams> layers;

  // Uniform fan-in initialization: U(-1/sqrt(in), 1/sqrt(in)).
  static ModelParams Init(const NetworkConfig& config, std::mt19937_64& rng);
};

enum class RunMode { kTrain, kInfer };

// Intermediates captured by a train-mode forward pass for backprop.
struct ForwardCache {
  std::vector<MatrixD> inputs;      // per layer
  std::vector<MatrixD> preact;      // z = W x + b
  std::vector<MatrixD> activated;   // after activation
  std::vector<MatrixD> bn_hat;      // normalized activations
  std::vector<VectorD> bn_mean, bn_var;
  std::vector<MatrixD> dropout_mask;  // already scaled by 1/keep
};

// Runs the stack on a (input_dim x batch) matrix. Train mode applies
// dropout from `rng` and batch statistics; infer mode is deterministic.
// Throws NumericError naming the layer when an activation goes
// non-finite. `cache` must be supplied in train mode when a backward pass
// will follow. Running batch-norm statistics are updated in train mode.
MatrixD forward(ModelParams& params, const NetworkConfig& config, const MatrixD& batch,
                RunMode mode, std::mt19937_64* rng, ForwardCache* cache = nullptr);

struct LayerGrads {
  MatrixD weight;
  VectorD bias;
  VectorD bn_scale, bn_shift;
};

struct Gradients {
  std::vector<LayerGrads> layers;
  MatrixD input;  // dL/d(batch)

  void Accumulate(const Gradients& other);
};

// Backpropagates dL/d(output) through a cached train-mode forward pass.
Gradients backward(const ModelParams& params, const NetworkConfig& config,
                   const ForwardCache& cache, const MatrixD& grad_output);

}  // namespace mvtrack
