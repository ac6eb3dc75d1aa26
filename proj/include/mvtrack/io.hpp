#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mvtrack/types.hpp"

namespace mvtrack {

// Embedding file layout: magic "TMEB", format version u16, d u32, N u32,
// then N*d little-endian float32 values column by column.
inline constexpr char kEmbeddingMagic[4] = {'T', 'M', 'E', 'B'};
inline constexpr std::uint16_t kFormatVersion = 1;

EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m);

// Track metadata: JSON lines, one object per track with keys
// track_id, video_id, frame_start, frame_end, col_start, col_end and an
// optional label.
TrackSet load_tracks(const std::filesystem::path& path);
void write_tracks(const std::filesystem::path& path, const TrackSet& tracks);

namespace io_detail {

std::ifstream OpenForRead(const std::filesystem::path& path);
std::ofstream OpenForWrite(const std::filesystem::path& path);

void CheckMagicAndVersion(std::istream& is, const char magic[4],
                          std::uint16_t version, const std::string& what);
void WriteMagicAndVersion(std::ostream& os, const char magic[4], std::uint16_t version);

template <typename T>
void WritePod(std::ostream& os, const T& value) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadPod(std::istream& is, const std::string& what) {
  static_assert(std::is_trivially_copyable_v<T>);
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw FormatError(what + ": truncated payload");
  return value;
}

void WriteFloats(std::ostream& os, const float* data, std::size_t n);
void ReadFloats(std::istream& is, float* data, std::size_t n, const std::string& what);

void WriteVectorF32(std::ostream& os, const VectorD& v);
VectorD ReadVectorF32(std::istream& is, int dim, const std::string& what);

void WriteMatrixF32(std::ostream& os, const MatrixD& m);
MatrixD ReadMatrixF32(std::istream& is, int rows, int cols, const std::string& what);

}  // namespace io_detail
}  // namespace mvtrack
