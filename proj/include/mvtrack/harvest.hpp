#pragma once

#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mvtrack/types.hpp"

namespace mvtrack {

// Cannot-link relations between temporally co-occurring tracks of the
// same video. Pairs are stored once, unordered, as (smaller id, larger id).
struct ConstraintGraph {
  std::vector<TrackId> nodes;
  std::vector<std::pair<TrackId, TrackId>> cannot_link;
  std::unordered_map<TrackId, std::vector<TrackId>> adjacency;

  int DegreeOf(TrackId id) const {
    auto it = adjacency.find(id);
    return it == adjacency.end() ? 0 : static_cast<int>(it->second.size());
  }
  // Co-occurring track ids, sorted ascending. Empty for isolated tracks.
  const std::vector<TrackId>& NeighborsOf(TrackId id) const;
};

// Keeps exactly the tracks with length >= min_frames, order preserved.
// The default 24 corresponds to one second at 24 fps.
TrackSet filter_min_length(const TrackSet& tracks, std::int64_t min_frames = 24);

// Pair (a, b) is cannot-link iff both tracks belong to the same video and
// their closed frame intervals share at least min_overlap_frames frames.
// Sweep over sorted endpoints per video, O(n log n + E).
ConstraintGraph build_constraints(const TrackSet& tracks, std::int64_t min_overlap_frames = 1);

// Keeps tracks with co-occurrence degree >= 1.
TrackSet filter_cooccurring(const TrackSet& tracks, const ConstraintGraph& graph);

struct HarvestStats {
  std::size_t n_tracks = 0;
  std::size_t n_cannot_link_pairs = 0;
  double cooccurrence_coverage = 0.0;  // fraction of tracks with degree >= 1
  double single_link_fraction = 0.0;   // fraction of tracks with degree == 1
  int degree_min = 0;
  int degree_max = 0;
  double degree_mean = 0.0;
  double degree_std = 0.0;
  double faces_per_track_mean = 0.0;
  double faces_per_track_std = 0.0;
};

HarvestStats harvest_stats(const ConstraintGraph& graph, const TrackSet& tracks);

}  // namespace mvtrack
