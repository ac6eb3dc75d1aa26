#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvtrack/error.hpp"

namespace mvtrack {

// Frame embeddings are stored as 32-bit floats (matching the on-disk
// format); all accumulations (means, covariances) run in 64-bit.
using MatrixF = Eigen::MatrixXf;
using MatrixD = Eigen::MatrixXd;
using VectorD = Eigen::VectorXd;
using TrackId = std::int64_t;

// Dense d x N matrix whose columns are per-frame embeddings of one video.
struct EmbeddingMatrix {
  int dim = 0;    // d
  int count = 0;  // N
  MatrixF data;   // d x N

  // Validates shape and finiteness before adopting the matrix.
  static EmbeddingMatrix FromData(MatrixF m);

  // Column i widened to double.
  VectorD Column(int i) const { return data.col(i).cast<double>(); }
};

// One face track: a span of consecutive frames tied to a column range of
// the video's EmbeddingMatrix. character label is present only on
// evaluation data.
struct FaceTrack {
  TrackId track_id = 0;
  std::string video_id;
  std::int64_t frame_start = 0;
  std::int64_t frame_end = 0;
  std::int64_t col_start = 0;  // inclusive
  std::int64_t col_end = 0;    // inclusive
  std::optional<std::string> label;

  std::int64_t Length() const { return frame_end - frame_start + 1; }
  std::int64_t NumColumns() const { return col_end - col_start + 1; }
};

class TrackSet {
 public:
  TrackSet() = default;
  // Throws ValueError on duplicate track ids, negative frame indices, or
  // frame-span / column-span length mismatches.
  explicit TrackSet(std::vector<FaceTrack> tracks);

  const std::vector<FaceTrack>& tracks() const { return tracks_; }
  std::size_t size() const { return tracks_.size(); }
  bool empty() const { return tracks_.empty(); }

  const FaceTrack& ById(TrackId id) const;
  bool Contains(TrackId id) const { return by_id_.count(id) != 0; }

  // Indices (into tracks()) of the tracks of one video, in insertion order.
  const std::vector<std::size_t>& TracksOfVideo(const std::string& video_id) const;
  std::vector<std::string> VideoIds() const;  // sorted, unique

  // Checks that column ranges lie within the matrix bounds and are
  // disjoint across tracks of the given video.
  void ValidateColumns(const std::string& video_id, const EmbeddingMatrix& emb) const;

 private:
  std::vector<FaceTrack> tracks_;
  std::unordered_map<TrackId, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_video_;
};

// Track-level embedding: arithmetic mean of the member-frame embeddings.
struct TrackEmbedding {
  TrackId track_id = 0;
  VectorD vector;
  bool normalized = false;  // when set, |vector| == 1 within 1e-9
};

// Mean of the track's embedding columns, accumulated in double.
TrackEmbedding track_mean(const FaceTrack& track, const EmbeddingMatrix& emb);

}  // namespace mvtrack
