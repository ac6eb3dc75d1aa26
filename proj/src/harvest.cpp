#include "mvtrack/harvest.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace mvtrack {

const std::vector<TrackId>& ConstraintGraph::NeighborsOf(TrackId id) const {
  static const std::vector<TrackId> kEmpty;
  auto it = adjacency.find(id);
  return it == adjacency.end() ? kEmpty : it->second;
}

TrackSet filter_min_length(const TrackSet& tracks, std::int64_t min_frames) {
  if (min_frames < 1) throw ValueError("filter_min_length: min_frames must be positive");
  std::vector<FaceTrack> kept;
  for (const FaceTrack& t : tracks.tracks())
    if (t.Length() >= min_frames) kept.push_back(t);
  return TrackSet(std::move(kept));
}

ConstraintGraph build_constraints(const TrackSet& tracks, std::int64_t min_overlap_frames) {
  if (min_overlap_frames < 1)
    throw ValueError("build_constraints: min_overlap_frames must be positive");
  ConstraintGraph g;
  for (const FaceTrack& t : tracks.tracks()) g.nodes.push_back(t.track_id);

  for (const std::string& video : tracks.VideoIds()) {
    std::vector<std::size_t> idx = tracks.TracksOfVideo(video);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const auto& ta = tracks.tracks()[a];
      const auto& tb = tracks.tracks()[b];
      return std::tie(ta.frame_start, ta.track_id) < std::tie(tb.frame_start, tb.track_id);
    });
    // Min-heap of (frame_end, track index) for tracks still active at the
    // current sweep position.
    using HeapItem = std::pair<std::int64_t, std::size_t>;
    std::priority_queue<HeapItem, std::vector<HeapItem>, std::greater<>> active;
    for (std::size_t i : idx) {
      const FaceTrack& t = tracks.tracks()[i];
      // An active track overlaps t by >= k frames iff it ends at or after
      // t.frame_start + k - 1 (its start is <= t.frame_start already).
      while (!active.empty() &&
             active.top().first < t.frame_start + min_overlap_frames - 1)
        active.pop();
      // priority_queue has no iteration; copy out the survivors.
      std::vector<HeapItem> items;
      items.reserve(active.size());
      while (!active.empty()) {
        items.push_back(active.top());
        active.pop();
      }
      for (const HeapItem& item : items) {
        const FaceTrack& other = tracks.tracks()[item.second];
        // The overlap requirement can also fail at t's end for very short t.
        const std::int64_t overlap =
            std::min(t.frame_end, other.frame_end) - t.frame_start + 1;
        if (overlap >= min_overlap_frames) {
          TrackId a = std::min(t.track_id, other.track_id);
          TrackId b = std::max(t.track_id, other.track_id);
          g.cannot_link.emplace_back(a, b);
        }
        active.push(item);
      }
      active.emplace(t.frame_end, i);
    }
  }

  std::sort(g.cannot_link.begin(), g.cannot_link.end());
  g.cannot_link.erase(std::unique(g.cannot_link.begin(), g.cannot_link.end()),
                      g.cannot_link.end());
  for (const auto& [a, b] : g.cannot_link) {
    g.adjacency[a].push_back(b);
    g.adjacency[b].push_back(a);
  }
  for (auto& [id, nbrs] : g.adjacency) std::sort(nbrs.begin(), nbrs.end());
  return g;
}

TrackSet filter_cooccurring(const TrackSet& tracks, const ConstraintGraph& graph) {
  std::vector<FaceTrack> kept;
  for (const FaceTrack& t : tracks.tracks())
    if (graph.DegreeOf(t.track_id) >= 1) kept.push_back(t);
  return TrackSet(std::move(kept));
}

static std::pair<double, double> MeanStd(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

HarvestStats harvest_stats(const ConstraintGraph& graph, const TrackSet& tracks) {
  HarvestStats s;
  s.n_tracks = tracks.size();
  s.n_cannot_link_pairs = graph.cannot_link.size();
  if (tracks.empty()) return s;

  std::vector<double> degrees, lengths;
  std::size_t covered = 0, single = 0;
  for (const FaceTrack& t : tracks.tracks()) {
    const int deg = graph.DegreeOf(t.track_id);
    degrees.push_back(deg);
    lengths.push_back(static_cast<double>(t.Length()));
    if (deg >= 1) ++covered;
    if (deg == 1) ++single;
  }
  s.cooccurrence_coverage = static_cast<double>(covered) / tracks.size();
  s.single_link_fraction = static_cast<double>(single) / tracks.size();
  s.degree_min = static_cast<int>(*std::min_element(degrees.begin(), degrees.end()));
  s.degree_max = static_cast<int>(*std::max_element(degrees.begin(), degrees.end()));
  std::tie(s.degree_mean, s.degree_std) = MeanStd(degrees);
  std::tie(s.faces_per_track_mean, s.faces_per_track_std) = MeanStd(lengths);
  return s;
}

}  // namespace mvtrack
