#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mvtrack/types.hpp"

namespace mvtrack {

// Generator for labeled corpora that stand in for real movie data:
// identity prototypes on the unit sphere, per-track linear distortions,
// per-frame pose-like subspace shifts and additive noise, with overlapping
// frame spans so every track co-occurs with at least one
// different-identity track.
struct SyntheticSpec {
  int n_identities = 5;
  int tracks_per_identity = 10;
  int frames_min = 24;
  int frames_max = 72;
  int dim = 64;
  int n_videos = 4;
  // View corruption model.
  double noise_sigma = 0.08;     // per-frame additive Gaussian noise
  double distortion = 0.05;      // per-track random linear distortion strength
  double pose_shift_prob = 0.4;  // per-frame chance of leaving the track's dominant pose
  int n_poses = 6;
  double pose_strength = 0.6;
  double cooccurrence_density = 0.3;  // chance a scene holds three tracks instead of two
  std::uint64_t seed = 1;

  void Validate() const;
};

struct SyntheticCorpus {
  std::map<std::string, EmbeddingMatrix> embeddings;  // per video
  TrackSet tracks;                                    // labels carry identities
};

// Deterministic for a fixed spec (including seed).
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace mvtrack
