#include "mvtrack/mining.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <thread>

#include "mvtrack/io.hpp"
#include "mvtrack/kdtree.hpp"

namespace mvtrack {

DistanceMatrix::DistanceMatrix(MatrixD d) : d_(std::move(d)) {
  if (d_.rows() != d_.cols()) throw ValueError("DistanceMatrix: not square");
  for (int i = 0; i < d_.rows(); ++i) {
    if (d_(i, i) != 0.0) throw ValueError("DistanceMatrix: nonzero diagonal");
    for (int j = i + 1; j < d_.cols(); ++j) {
      if (std::abs(d_(i, j) - d_(j, i)) > 1e-12)
        throw ValueError("DistanceMatrix: asymmetric at (" + std::to_string(i) + "," +
                         std::to_string(j) + ")");
      if (d_(i, j) < 0.0) throw ValueError("DistanceMatrix: negative entry");
    }
  }
}

DistanceMatrix pairwise_distances(const MatrixD& columns, Metric metric) {
  const int n = static_cast<int>(columns.cols());
  if (n < 2) throw ValueError("pairwise_distances: need at least two columns");
  MatrixD d = MatrixD::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double v = metric_distance(metric, columns.col(i), columns.col(j));
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return DistanceMatrix(std::move(d));
}

DistanceMatrix pairwise_distances(const EmbeddingMatrix& emb, Metric metric) {
  return pairwise_distances(MatrixD(emb.data.cast<double>()), metric);
}

std::pair<int, int> farthest_pair(const DistanceMatrix& d) {
  const int n = d.size();
  if (n < 2) throw ValueError("farthest_pair: need at least two points");
  int bi = 0, bj = 1;
  double best = d(0, 1);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (d(i, j) > best) {  // strict: first maximum wins, smallest (i, j)
        best = d(i, j);
        bi = i;
        bj = j;
      }
  return {bi, bj};
}

std::vector<int> knn_indices(const EmbeddingMatrix& emb, int query, int k,
                             const std::unordered_set<int>& exclude, Metric metric) {
  NeighborIndex index(prepare_columns(emb, metric));
  std::vector<char> mask(emb.count, 0);
  for (int i : exclude) {
    if (i < 0 || i >= emb.count) throw ValueError("knn_indices: excluded index out of range");
    mask[i] = 1;
  }
  return index.Query(query, k, mask);
}

namespace {

VectorD TrackletMean(const MatrixD& columns, const std::vector<int>& members, int col_offset) {
  VectorD sum = VectorD::Zero(columns.rows());
  for (int m : members) sum += columns.col(m - col_offset);
  return l2_normalize(sum / static_cast<double>(members.size()));
}

}  // namespace

std::vector<Tracklet> mine_hard_positives(const FaceTrack& track, const EmbeddingMatrix& emb,
                                          int num_tracklets, Metric metric) {
  const int p = num_tracklets;
  const int n = static_cast<int>(track.NumColumns());
  if (p < 1) throw ValueError("mine_hard_positives: need at least one tracklet");
  if (n < p)
    throw ValueError("mine_hard_positives: track " + std::to_string(track.track_id) + " has " +
                     std::to_string(n) + " frames, fewer than " + std::to_string(p));
  if (track.col_start < 0 || track.col_end >= emb.count)
    throw ValueError("mine_hard_positives: column range outside embedding matrix");
  const int k = n / p;
  const int offset = static_cast<int>(track.col_start);

  // Raw track columns in double; the search index holds the
  // metric-normalized copies.
  const MatrixD raw = emb.data.middleCols(offset, n).cast<double>();
  NeighborIndex index(prepare_columns(raw, metric));

  const DistanceMatrix dist = pairwise_distances(raw, metric);
  const auto [anchor_seed, first_positive_seed] = farthest_pair(dist);
  (void)first_positive_seed;  // re-derived below as the farthest survivor

  std::vector<char> removed(n, 0);
  std::vector<Tracklet> out;
  out.reserve(p);

  auto take = [&](int seed, int role) {
    std::vector<int> local = index.Query(seed, k, removed);
    for (int m : local) removed[m] = 1;
    std::vector<int> members;
    members.reserve(local.size());
    for (int m : local) members.push_back(m + offset);
    std::sort(members.begin(), members.end());
    Tracklet t;
    t.source_track_id = track.track_id;
    t.member_columns = std::move(members);
    t.mean_vector = TrackletMean(raw, t.member_columns, offset);
    t.role = role;
    out.push_back(std::move(t));
  };

  take(anchor_seed, 0);
  for (int role = 1; role < p; ++role) {
    // Farthest remaining column from the anchor seed; ties to the
    // smallest index. With nothing yet removed this recovers the other
    // end of the farthest pair.
    int seed = -1;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      if (removed[i]) continue;
      if (dist(anchor_seed, i) > best) {
        best = dist(anchor_seed, i);
        seed = i;
      }
    }
    take(seed, role);
  }
  return out;
}

HardNegative mine_hard_negative(const Tracklet& anchor, const ConstraintGraph& graph,
                                const std::map<TrackId, VectorD>& track_means, Metric metric) {
  const std::vector<TrackId>& neighbors = graph.NeighborsOf(anchor.source_track_id);
  if (neighbors.empty())
    throw ValueError("mine_hard_negative: track " + std::to_string(anchor.source_track_id) +
                     " has no cannot-link neighbor");
  TrackId best_id = 0;
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (TrackId nb : neighbors) {
    auto it = track_means.find(nb);
    if (it == track_means.end())
      throw ValueError("mine_hard_negative: no track mean for neighbor " + std::to_string(nb));
    const double d = metric_distance(metric, anchor.mean_vector, it->second);
    if (!found || d < best || (d == best && nb < best_id)) {
      best = d;
      best_id = nb;
      found = true;
    }
  }
  if (!found) throw ValueError("mine_hard_negative: no usable neighbor");
  HardNegative out;
  out.vector = l2_normalize(track_means.at(best_id));
  out.source_track_id = best_id;
  return out;
}

std::vector<MultiviewSample> mine_corpus(const TrackSet& tracks,
                                         const std::map<std::string, EmbeddingMatrix>& embeddings,
                                         const ConstraintGraph& graph, int num_tracklets,
                                         Metric metric, MiningReport* report, int threads,
                                         NegativeAnchor negative_anchor) {
  const int p = num_tracklets;
  if (p < 2) throw ValueError("mine_corpus: need at least two tracklets per track");

  // Full-track means for hard-negative search, keyed by track id.
  std::map<TrackId, VectorD> means;
  for (const FaceTrack& t : tracks.tracks()) {
    auto it = embeddings.find(t.video_id);
    if (it == embeddings.end())
      throw ValueError("mine_corpus: no embeddings for video " + t.video_id);
    means[t.track_id] = track_mean(t, it->second).vector;
  }

  // Work in ascending track_id order so output and skip counts are
  // independent of both input order and thread count.
  std::vector<const FaceTrack*> order;
  order.reserve(tracks.size());
  for (const FaceTrack& t : tracks.tracks()) order.push_back(&t);
  std::sort(order.begin(), order.end(),
            [](const FaceTrack* a, const FaceTrack* b) { return a->track_id < b->track_id; });

  struct Slot {
    bool mined = false;
    bool short_track = false;
    bool isolated = false;
    std::size_t unused = 0;
    MultiviewSample sample;
  };
  std::vector<Slot> slots(order.size());

  auto mine_one = [&](std::size_t i) {
    const FaceTrack& t = *order[i];
    Slot& slot = slots[i];
    if (t.NumColumns() < p) {
      slot.short_track = true;
      return;
    }
    if (graph.DegreeOf(t.track_id) < 1) {
      slot.isolated = true;
      return;
    }
    const EmbeddingMatrix& emb = embeddings.at(t.video_id);
    std::vector<Tracklet> tracklets = mine_hard_positives(t, emb, p, metric);
    Tracklet query = tracklets[0];
    if (negative_anchor == NegativeAnchor::kTrackMean)
      query.mean_vector = l2_normalize(means.at(t.track_id));
    HardNegative neg = mine_hard_negative(query, graph, means, metric);
    MultiviewSample s;
    s.track_id = t.track_id;
    s.anchor = tracklets[0].mean_vector;
    for (int j = 1; j < p; ++j) s.positives.push_back(tracklets[j].mean_vector);
    s.hard_negative = neg.vector;
    s.negative_source_track_id = neg.source_track_id;
    slot.sample = std::move(s);
    slot.mined = true;
    slot.unused = static_cast<std::size_t>(t.NumColumns() % p);
  };

  if (threads <= 1) {
    for (std::size_t i = 0; i < order.size(); ++i) mine_one(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(order.size());
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&]() {
        for (std::size_t i = next.fetch_add(1); i < order.size(); i = next.fetch_add(1)) {
          try {
            mine_one(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    // Rethrow the lowest-index failure so the error is thread-count
    // independent.
    for (const std::exception_ptr& e : errors)
      if (e) std::rethrow_exception(e);
  }

  MiningReport rep;
  std::vector<MultiviewSample> out;
  for (Slot& slot : slots) {
    if (slot.mined) {
      out.push_back(std::move(slot.sample));
      ++rep.mined;
      rep.unused_frames += slot.unused;
    } else if (slot.short_track) {
      ++rep.skipped_short;
    } else if (slot.isolated) {
      ++rep.skipped_isolated;
    }
  }
  if (report) *report = rep;
  return out;
}

namespace {
constexpr char kSampleMagic[4] = {'T', 'M', 'V', 'S'};
}

void write_samples(const std::filesystem::path& path,
                   const std::vector<MultiviewSample>& samples) {
  using namespace io_detail;
  if (samples.empty()) throw ValueError("write_samples: empty sample set");
  const auto d = static_cast<std::uint32_t>(samples.front().anchor.size());
  const auto p = static_cast<std::uint32_t>(samples.front().positives.size() + 1);
  auto os = OpenForWrite(path);
  WriteMagicAndVersion(os, kSampleMagic, kFormatVersion);
  WritePod(os, d);
  WritePod(os, p);
  WritePod(os, static_cast<std::uint64_t>(samples.size()));
  for (const MultiviewSample& s : samples) {
    if (s.anchor.size() != d || s.positives.size() + 1 != p || s.hard_negative.size() != d)
      throw ValueError("write_samples: inconsistent sample shapes");
    WritePod(os, static_cast<std::int64_t>(s.track_id));
    WritePod(os, static_cast<std::int64_t>(s.negative_source_track_id));
    WriteVectorF32(os, s.anchor);
    for (const VectorD& v : s.positives) WriteVectorF32(os, v);
    WriteVectorF32(os, s.hard_negative);
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<MultiviewSample> load_samples(const std::filesystem::path& path) {
  using namespace io_detail;
  auto is = OpenForRead(path);
  const std::string what = "samples " + path.string();
  CheckMagicAndVersion(is, kSampleMagic, kFormatVersion, what);
  const auto d = ReadPod<std::uint32_t>(is, what);
  const auto p = ReadPod<std::uint32_t>(is, what);
  const auto count = ReadPod<std::uint64_t>(is, what);
  if (d == 0 || p < 2) throw FormatError(what + ": bad header");
  std::vector<MultiviewSample> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    MultiviewSample s;
    s.track_id = ReadPod<std::int64_t>(is, what);
    s.negative_source_track_id = ReadPod<std::int64_t>(is, what);
    s.anchor = ReadVectorF32(is, static_cast<int>(d), what);
    for (std::uint32_t v = 1; v < p; ++v)
      s.positives.push_back(ReadVectorF32(is, static_cast<int>(d), what));
    s.hard_negative = ReadVectorF32(is, static_cast<int>(d), what);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mvtrack
