#include "mvtrack/io.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

namespace mvtrack {
namespace io_detail {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts unsupported");

std::ifstream OpenForRead(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("missing file: " + path.string());
  return is;
}

std::ofstream OpenForWrite(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  return os;
}

void CheckMagicAndVersion(std::istream& is, const char magic[4],
                          std::uint16_t version, const std::string& what) {
  char got[4] = {};
  is.read(got, 4);
  if (!is || std::memcmp(got, magic, 4) != 0)
    throw FormatError(what + ": magic-number mismatch");
  const auto got_version = ReadPod<std::uint16_t>(is, what);
  if (got_version != version)
    throw FormatError(what + ": unsupported format version " + std::to_string(got_version));
}

void WriteMagicAndVersion(std::ostream& os, const char magic[4], std::uint16_t version) {
  os.write(magic, 4);
  WritePod(os, version);
}

void WriteFloats(std::ostream& os, const float* data, std::size_t n) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
}

void ReadFloats(std::istream& is, float* data, std::size_t n, const std::string& what) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  if (!is || is.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
    throw FormatError(what + ": truncated payload");
}

void WriteVectorF32(std::ostream& os, const VectorD& v) {
  Eigen::VectorXf f = v.cast<float>();
  WriteFloats(os, f.data(), static_cast<std::size_t>(f.size()));
}

VectorD ReadVectorF32(std::istream& is, int dim, const std::string& what) {
  Eigen::VectorXf f(dim);
  ReadFloats(is, f.data(), static_cast<std::size_t>(dim), what);
  return f.cast<double>();
}

void WriteMatrixF32(std::ostream& os, const MatrixD& m) {
  MatrixF f = m.cast<float>();
  WriteFloats(os, f.data(), static_cast<std::size_t>(f.size()));
}

MatrixD ReadMatrixF32(std::istream& is, int rows, int cols, const std::string& what) {
  MatrixF f(rows, cols);
  ReadFloats(is, f.data(), static_cast<std::size_t>(f.size()), what);
  return f.cast<double>();
}

}  // namespace io_detail

using namespace io_detail;

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  auto is = OpenForRead(path);
  const std::string what = "embeddings " + path.string();
  CheckMagicAndVersion(is, kEmbeddingMagic, kFormatVersion, what);
  const auto d = ReadPod<std::uint32_t>(is, what);
  const auto n = ReadPod<std::uint32_t>(is, what);
  if (d == 0 || n == 0) throw FormatError(what + ": zero dimension in header");
  MatrixF data(d, n);
  ReadFloats(is, data.data(), std::size_t{d} * n, what);
  if (!data.allFinite()) throw NumericError(what + ": non-finite value in payload");
  return EmbeddingMatrix::FromData(std::move(data));
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  auto os = OpenForWrite(path);
  WriteMagicAndVersion(os, kEmbeddingMagic, kFormatVersion);
  WritePod(os, static_cast<std::uint32_t>(m.dim));
  WritePod(os, static_cast<std::uint32_t>(m.count));
  WriteFloats(os, m.data.data(), static_cast<std::size_t>(m.dim) * m.count);
  if (!os) throw IoError("write failed: " + path.string());
}

TrackSet load_tracks(const std::filesystem::path& path) {
  auto is = OpenForRead(path);
  std::vector<FaceTrack> tracks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw FormatError("tracks " + path.string() + ": invalid JSON on line " +
                        std::to_string(line_no));
    try {
      FaceTrack t;
      t.track_id = j.at("track_id").get<TrackId>();
      t.video_id = j.at("video_id").get<std::string>();
      t.frame_start = j.at("frame_start").get<std::int64_t>();
      t.frame_end = j.at("frame_end").get<std::int64_t>();
      t.col_start = j.at("col_start").get<std::int64_t>();
      t.col_end = j.at("col_end").get<std::int64_t>();
      if (j.contains("label") && !j["label"].is_null())
        t.label = j["label"].get<std::string>();
      tracks.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("tracks " + path.string() + ": line " + std::to_string(line_no) +
                        ": " + e.what());
    }
  }
  return TrackSet(std::move(tracks));
}

void write_tracks(const std::filesystem::path& path, const TrackSet& tracks) {
  auto os = OpenForWrite(path);
  for (const FaceTrack& t : tracks.tracks()) {
    nlohmann::json j{{"track_id", t.track_id},
                     {"video_id", t.video_id},
                     {"frame_start", t.frame_start},
                     {"frame_end", t.frame_end},
                     {"col_start", t.col_start},
                     {"col_end", t.col_end}};
    if (t.label) j["label"] = *t.label;
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace mvtrack
