#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <unordered_set>
#include <vector>

#include "mvtrack/distance.hpp"
#include "mvtrack/harvest.hpp"
#include "mvtrack/types.hpp"

namespace mvtrack {

// A k-member subset of one track's frames; its mean embedding acts as one
// view of the identity. role 0 is the anchor, role i >= 1 the i-th
// hard positive.
struct Tracklet {
  TrackId source_track_id = 0;
  std::vector<int> member_columns;  // absolute column indices, sorted
  VectorD mean_vector;              // unit-normalized member mean
  int role = 0;
};

// One training sample: anchor view, P-1 positive views (same track) and
// the nearest cannot-link track mean as hard negative. All vectors are
// unit-normalized.
struct MultiviewSample {
  TrackId track_id = 0;
  VectorD anchor;
  std::vector<VectorD> positives;
  VectorD hard_negative;
  TrackId negative_source_track_id = 0;
};

// Symmetric pairwise distances with a zero diagonal.
class DistanceMatrix {
 public:
  // Validates symmetry (1e-12) and the zero diagonal.
  explicit DistanceMatrix(MatrixD d);
  int size() const { return static_cast<int>(d_.rows()); }
  double operator()(int i, int j) const { return d_(i, j); }
  const MatrixD& matrix() const { return d_; }

 private:
  MatrixD d_;
};

DistanceMatrix pairwise_distances(const EmbeddingMatrix& emb, Metric metric);
DistanceMatrix pairwise_distances(const MatrixD& columns, Metric metric);

// argmax_{i<j} D_ij; ties broken by smallest (i, j) lexicographically.
std::pair<int, int> farthest_pair(const DistanceMatrix& d);

// k columns closest to column `query` (itself included, distance zero)
// among non-excluded columns, ordered by the mining metric. Deterministic
// tie-break by smaller column index, query first.
std::vector<int> knn_indices(const EmbeddingMatrix& emb, int query, int k,
                             const std::unordered_set<int>& exclude,
                             Metric metric = Metric::kNormalizedEuclidean);

// Iterative nearest-neighbor tracklet construction over one track:
// seed the anchor at one end of the farthest in-track pair, take its
// k-NN as the anchor tracklet, then repeatedly seed the next tracklet at
// the remaining column farthest from the anchor and remove its k-NN from
// the pool. k = floor(N / P); returns P tracklets, anchor first, all of
// size exactly k with pairwise-disjoint members. Columns left over when
// P does not divide N stay unused (reported by mine_corpus).
std::vector<Tracklet> mine_hard_positives(const FaceTrack& track, const EmbeddingMatrix& emb,
                                          int num_tracklets = 3,
                                          Metric metric = Metric::kNormalizedEuclidean);

struct HardNegative {
  VectorD vector;  // unit-normalized track mean of the selected neighbor
  TrackId source_track_id = 0;
};

// Nearest cannot-link full-track mean to the anchor tracklet mean.
// Ties broken by smallest track_id. Throws ValueError for isolated tracks.
HardNegative mine_hard_negative(const Tracklet& anchor, const ConstraintGraph& graph,
                                const std::map<TrackId, VectorD>& track_means,
                                Metric metric = Metric::kNormalizedEuclidean);

struct MiningReport {
  std::size_t mined = 0;
  std::size_t skipped_short = 0;     // track length < P
  std::size_t skipped_isolated = 0;  // no cannot-link neighbor
  std::size_t unused_frames = 0;     // leftovers when P does not divide N
};

// Which vector the hard-negative argmin measures distance from: the
// anchor tracklet mean (default) or the full-track mean.
enum class NegativeAnchor { kTrackletMean, kTrackMean };

// One MultiviewSample per eligible track, ordered by track_id. Tracks
// failing a precondition are skipped and counted. `threads` > 1 mines
// tracks in parallel; results are identical for any thread count.
std::vector<MultiviewSample> mine_corpus(const TrackSet& tracks,
                                         const std::map<std::string, EmbeddingMatrix>& embeddings,
                                         const ConstraintGraph& graph, int num_tracklets,
                                         Metric metric, MiningReport* report,
                                         int threads = 1,
                                         NegativeAnchor negative_anchor = NegativeAnchor::kTrackletMean);

// Binary sample file: magic "TMVS", version, d, P, count, then per record
// track_id, negative_source_track_id and (P + 1) float32 vectors
// (anchor, positives..., negative).
void write_samples(const std::filesystem::path& path,
                   const std::vector<MultiviewSample>& samples);
std::vector<MultiviewSample> load_samples(const std::filesystem::path& path);

}  // namespace mvtrack
