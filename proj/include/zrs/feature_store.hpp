// zrs/feature_store.hpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Canonical on-disk containers for the toolkit:
//
//   feature file (.zrsf):  "ZRSF" | version u32 | T u32 | D u32 |
//                          T*D little-endian float32, row-major
//   manifest.csv:          utt_id,speaker_id,language_id,path
//   segments.csv:          utt_id,start_frame,end_frame,category,speaker_id
//
// All multi-byte integers and floats are little-endian regardless of host.
// Frame indices are 0-based and end-exclusive. Manifest paths are resolved
// relative to the manifest's own directory unless absolute.

#ifndef ZRS_FEATURE_STORE_HPP_
#define ZRS_FEATURE_STORE_HPP_

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "zrs/frame_matrix.hpp"

namespace zrs {

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v & 0xFFFFFFFFull));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(std::string("truncated payload reading ") + what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& is, const char* what) {
  std::uint64_t lo = get_u32(is, what);
  std::uint64_t hi = get_u32(is, what);
  return lo | (hi << 32);
}

inline float get_f32(std::istream& is, const char* what) {
  std::uint32_t bits = get_u32(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline double get_f64(std::istream& is, const char* what) {
  std::uint64_t bits = get_u64(is, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void put_magic(std::ostream& os, const char magic[4]) {
  os.write(magic, 4);
}

inline void expect_magic(std::istream& is, const char magic[4],
                         const char* format_name) {
  char got[4];
  if (!is.read(got, 4) || std::memcmp(got, magic, 4) != 0)
    throw std::runtime_error(std::string("bad magic, not a ") + format_name +
                             " file");
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
  return is;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline void check_csv_field(const std::string& s) {
  if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos)
    throw std::invalid_argument("CSV fields may not contain commas or newlines: " + s);
}

}  // namespace detail

inline constexpr char kFeatureMagic[4] = {'Z', 'R', 'S', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

inline void write_feature_file(const std::filesystem::path& path,
                               const FrameMatrix& m) {
  if (m.dim() == 0) throw std::invalid_argument("write_feature_file: D == 0");
  if (!m.all_finite())
    throw std::invalid_argument("write_feature_file: non-finite values");
  auto os = detail::open_out(path);
  detail::put_magic(os, kFeatureMagic);
  detail::put_u32(os, kFeatureVersion);
  detail::put_u32(os, m.num_frames());
  detail::put_u32(os, m.dim());
  for (float v : m.data()) detail::put_f32(os, v);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline FrameMatrix read_feature_file(const std::filesystem::path& path) {
  const auto file_size = std::filesystem::file_size(path);
  auto is = detail::open_in(path);
  detail::expect_magic(is, kFeatureMagic, "ZRSF feature");
  std::uint32_t version = detail::get_u32(is, "version");
  if (version != kFeatureVersion)
    throw std::runtime_error("unsupported ZRSF version " +
                             std::to_string(version));
  std::uint32_t t_count = detail::get_u32(is, "frame count");
  std::uint32_t dim = detail::get_u32(is, "dim");
  if (dim == 0) throw std::runtime_error("ZRSF with D == 0: " + path.string());
  const std::uint64_t expected =
      16 + 4ull * t_count * dim;
  if (file_size != expected)
    throw std::runtime_error("truncated payload in " + path.string());
  FrameMatrix m(t_count, dim);
  for (float& v : m.data()) v = detail::get_f32(is, "feature value");
  return m;
}

/// Manifest row; feature data lives in the referenced file, not inline.
struct UtteranceEntry {
  std::string utt_id;
  std::string speaker_id;
  std::string language_id;
  std::string path;
};

/// An utterance with its features loaded.
struct Utterance {
  std::string utt_id;
  std::string speaker_id;
  std::string language_id;
  FrameMatrix features;
};

/// Contiguous frame range labeled with a triphone-style category.
struct SegmentAnnotation {
  std::string utt_id;
  std::uint32_t start_frame = 0;  // inclusive
  std::uint32_t end_frame = 0;    // exclusive
  std::string category;
  std::string speaker_id;
};

struct CorpusManifest {
  std::vector<UtteranceEntry> utterances;
  std::vector<SegmentAnnotation> segments;

  const UtteranceEntry* find(const std::string& utt_id) const {
    for (const auto& u : utterances)
      if (u.utt_id == utt_id) return &u;
    return nullptr;
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& u : utterances) {
      if (u.utt_id.empty()) throw std::invalid_argument("empty utt_id");
      if (u.speaker_id.empty() || u.language_id.empty())
        throw std::invalid_argument("empty speaker/language id for " + u.utt_id);
      if (!seen.insert(u.utt_id).second)
        throw std::invalid_argument("duplicate utt_id " + u.utt_id);
    }
    for (const auto& s : segments) {
      if (s.start_frame >= s.end_frame)
        throw std::invalid_argument("segment with empty frame range in " +
                                    s.utt_id);
      if (seen.find(s.utt_id) == seen.end())
        throw std::invalid_argument("segment references unknown utt_id " +
                                    s.utt_id);
    }
  }
};

inline void write_manifest(const std::filesystem::path& path,
                           const CorpusManifest& manifest) {
  auto os = detail::open_out(path);
  os << "utt_id,speaker_id,language_id,path\n";
  for (const auto& u : manifest.utterances) {
    detail::check_csv_field(u.utt_id);
    detail::check_csv_field(u.speaker_id);
    detail::check_csv_field(u.language_id);
    detail::check_csv_field(u.path);
    os << u.utt_id << ',' << u.speaker_id << ',' << u.language_id << ','
       << u.path << '\n';
  }
}

inline void write_segments(const std::filesystem::path& path,
                           const std::vector<SegmentAnnotation>& segments) {
  auto os = detail::open_out(path);
  os << "utt_id,start_frame,end_frame,category,speaker_id\n";
  for (const auto& s : segments) {
    detail::check_csv_field(s.utt_id);
    detail::check_csv_field(s.category);
    detail::check_csv_field(s.speaker_id);
    os << s.utt_id << ',' << s.start_frame << ',' << s.end_frame << ','
       << s.category << ',' << s.speaker_id << '\n';
  }
}

namespace detail {

inline void expect_header(std::istream& is, const std::string& expected,
                          const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("empty CSV file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected)
    throw std::runtime_error("unexpected CSV header in " + path.string() +
                             ": " + line);
}

inline std::uint32_t parse_u32(const std::string& s, const char* what) {
  std::size_t pos = 0;
  unsigned long v = std::stoul(s, &pos);
  if (pos != s.size()) throw std::runtime_error(std::string("bad ") + what);
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline CorpusManifest read_manifest(const std::filesystem::path& manifest_path,
                                    const std::filesystem::path& segments_path = {}) {
  CorpusManifest manifest;
  {
    auto is = detail::open_in(manifest_path);
    detail::expect_header(is, "utt_id,speaker_id,language_id,path",
                          manifest_path);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto f = detail::split_csv_line(line);
      if (f.size() != 4)
        throw std::runtime_error("bad manifest row: " + line);
      manifest.utterances.push_back({f[0], f[1], f[2], f[3]});
    }
  }
  if (!segments_path.empty() && std::filesystem::exists(segments_path)) {
    auto is = detail::open_in(segments_path);
    detail::expect_header(is, "utt_id,start_frame,end_frame,category,speaker_id",
                          segments_path);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto f = detail::split_csv_line(line);
      if (f.size() != 5)
        throw std::runtime_error("bad segments row: " + line);
      manifest.segments.push_back({f[0], detail::parse_u32(f[1], "start_frame"),
                                   detail::parse_u32(f[2], "end_frame"), f[3],
                                   f[4]});
    }
  }
  manifest.validate();
  return manifest;
}

/// Resolves a manifest-relative feature path against the manifest location.
inline std::filesystem::path resolve_feature_path(
    const std::filesystem::path& manifest_path, const std::string& entry_path) {
  std::filesystem::path p(entry_path);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

/// Sentinel for frames dropped by label filtering.
inline constexpr std::int32_t kRemovedLabel = -1;

/// Per-utterance frame labels keyed by utt_id (sorted, so writers are
/// deterministic).
using LabelMap = std::map<std::string, std::vector<std::int32_t>>;

/// Per-utterance unit sequences keyed by utt_id.
using TranscriptionMap = std::map<std::string, std::vector<std::int32_t>>;

inline void write_labels_csv(const std::filesystem::path& path,
                             const LabelMap& labels) {
  auto os = detail::open_out(path);
  os << "utt_id,frame,label\n";
  for (const auto& [utt_id, seq] : labels) {
    detail::check_csv_field(utt_id);
    for (std::size_t t = 0; t < seq.size(); ++t)
      os << utt_id << ',' << t << ',' << seq[t] << '\n';
  }
}

inline LabelMap read_labels_csv(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  detail::expect_header(is, "utt_id,frame,label", path);
  LabelMap labels;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 3) throw std::runtime_error("bad label row: " + line);
    auto& seq = labels[f[0]];
    std::uint32_t frame = detail::parse_u32(f[1], "frame index");
    if (frame != seq.size())
      throw std::runtime_error("non-contiguous frame indices for " + f[0]);
    seq.push_back(static_cast<std::int32_t>(std::stol(f[2])));
  }
  return labels;
}

inline void write_transcriptions_csv(const std::filesystem::path& path,
                                     const TranscriptionMap& transcriptions) {
  auto os = detail::open_out(path);
  os << "utt_id,unit_sequence\n";
  for (const auto& [utt_id, units] : transcriptions) {
    detail::check_csv_field(utt_id);
    os << utt_id << ',';
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (i) os << ' ';
      os << units[i];
    }
    os << '\n';
  }
}

inline TranscriptionMap read_transcriptions_csv(
    const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  detail::expect_header(is, "utt_id,unit_sequence", path);
  TranscriptionMap transcriptions;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 2)
      throw std::runtime_error("bad transcription row: " + line);
    std::vector<std::int32_t> units;
    std::istringstream tokens(f[1]);
    std::int32_t u;
    while (tokens >> u) units.push_back(u);
    if (!transcriptions.emplace(f[0], std::move(units)).second)
      throw std::runtime_error("duplicate transcription for " + f[0]);
  }
  return transcriptions;
}

}  // namespace zrs

#endif  // ZRS_FEATURE_STORE_HPP_
