#include "mvtrack/types.hpp"

#include <algorithm>
#include <set>

namespace mvtrack {

EmbeddingMatrix EmbeddingMatrix::FromData(MatrixF m) {
  if (m.rows() <= 0 || m.cols() <= 0)
    throw ValueError("EmbeddingMatrix: dim and count must be positive");
  if (!m.allFinite())
    throw NumericError("EmbeddingMatrix: non-finite value in embedding data");
  EmbeddingMatrix out;
  out.dim = static_cast<int>(m.rows());
  out.count = static_cast<int>(m.cols());
  out.data = std::move(m);
  return out;
}

TrackSet::TrackSet(std::vector<FaceTrack> tracks) : tracks_(std::move(tracks)) {
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    const FaceTrack& t = tracks_[i];
    if (t.frame_start < 0)
      throw ValueError("track " + std::to_string(t.track_id) + ": negative frame_start");
    if (t.frame_end < t.frame_start)
      throw ValueError("track " + std::to_string(t.track_id) + ": frame_end < frame_start");
    if (t.Length() != t.NumColumns())
      throw ValueError("track " + std::to_string(t.track_id) +
                       ": frame span and embedding column span differ");
    if (!by_id_.emplace(t.track_id, i).second)
      throw ValueError("duplicate track_id " + std::to_string(t.track_id));
    by_video_[t.video_id].push_back(i);
  }
}

const FaceTrack& TrackSet::ById(TrackId id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end())
    throw ValueError("unknown track_id " + std::to_string(id));
  return tracks_[it->second];
}

const std::vector<std::size_t>& TrackSet::TracksOfVideo(const std::string& video_id) const {
  static const std::vector<std::size_t> kEmpty;
  auto it = by_video_.find(video_id);
  return it == by_video_.end() ? kEmpty : it->second;
}

std::vector<std::string> TrackSet::VideoIds() const {
  std::set<std::string> ids;
  for (const auto& t : tracks_) ids.insert(t.video_id);
  return {ids.begin(), ids.end()};
}

void TrackSet::ValidateColumns(const std::string& video_id, const EmbeddingMatrix& emb) const {
  std::vector<std::pair<std::int64_t, std::int64_t>> spans;
  for (std::size_t i : TracksOfVideo(video_id)) {
    const FaceTrack& t = tracks_[i];
    if (t.col_start < 0 || t.col_end >= emb.count)
      throw ValueError("track " + std::to_string(t.track_id) +
                       ": column range outside embedding matrix");
    spans.emplace_back(t.col_start, t.col_end);
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first <= spans[i - 1].second)
      throw ValueError("overlapping embedding column ranges in video " + video_id);
  }
}

TrackEmbedding track_mean(const FaceTrack& track, const EmbeddingMatrix& emb) {
  if (track.NumColumns() <= 0)
    throw ValueError("track_mean: empty column range");
  if (track.col_start < 0 || track.col_end >= emb.count)
    throw ValueError("track_mean: column range outside embedding matrix");
  const auto cols = track.NumColumns();
  VectorD sum = VectorD::Zero(emb.dim);
  for (std::int64_t c = track.col_start; c <= track.col_end; ++c)
    sum += emb.data.col(static_cast<int>(c)).cast<double>();
  TrackEmbedding out;
  out.track_id = track.track_id;
  out.vector = sum / static_cast<double>(cols);
  out.normalized = false;
  return out;
}

}  // namespace mvtrack
