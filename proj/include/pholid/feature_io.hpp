// Copyright 2026 The pholid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PHOLID_FEATURE_IO_HPP_
#define PHOLID_FEATURE_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pholid/data.hpp"
#include "pholid/tensor.hpp"

namespace pholid {

// Feature file layout, little-endian:
//   char[4] "PHOF" | u32 version | u32 n_frames | u32 dim | f32[n_frames*dim]
// Payload is row-major.
inline constexpr char kFeatureMagic[4] = {'P', 'H', 'O', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;

void WriteFeatureFile(const std::filesystem::path& path, const Matrix& frames);
Matrix ReadFeatureFile(const std::filesystem::path& path);

// Reads only the header; returns {n_frames, dim}.
std::pair<std::size_t, std::size_t> ReadFeatureHeader(const std::filesystem::path& path);

// Reads a 2-D little-endian float32/float64 C-order .npy array.
Matrix ReadNpy(const std::filesystem::path& path);

// Language label <-> dense index, a bijection onto 0..C-1.
class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(std::vector<std::string> labels);

  // Returns the index of `label`, inserting it at the end when absent.
  int Intern(const std::string& label);
  std::optional<int> Find(const std::string& label) const;
  int At(const std::string& label) const;  // throws kData when absent
  const std::string& Name(int index) const;

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

  bool operator==(const LabelMap& other) const { return labels_ == other.labels_; }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, int> index_;
};

// "label<TAB>index" per line.
LabelMap ReadLabelMap(const std::filesystem::path& path);
void WriteLabelMap(const std::filesystem::path& path, const LabelMap& map);

struct ManifestEntry {
  std::filesystem::path feature_path;  // resolved against the manifest directory
  std::string label;
  std::size_t n_frames = 0;

  // The feature file's stem, used as the utterance id across all outputs.
  std::string utterance_id() const { return feature_path.stem().string(); }
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  LabelMap label_map;

  std::size_t n_classes() const { return label_map.size(); }
  std::vector<std::size_t> ClassCounts() const;
};

// Tab-separated "path<TAB>label<TAB>n_frames" per line. Indices follow first
// appearance unless `explicit_map` is given, in which case unknown labels are
// an error.
Manifest LoadManifest(const std::filesystem::path& path,
                      const std::optional<LabelMap>& explicit_map = std::nullopt);

// Paths are written relative to the manifest directory when possible.
void WriteManifest(const std::filesystem::path& path, const Manifest& manifest);

// Reads every entry's features and partitions them. A frame-count mismatch
// between the manifest and the file header is an error.
std::vector<SegmentedUtterance> LoadSegmented(const Manifest& manifest,
                                              std::size_t segment_frames,
                                              TailPolicy policy = TailPolicy::kDropTail,
                                              std::optional<double> vad_threshold_db = std::nullopt);

}  // namespace pholid

#endif  // PHOLID_FEATURE_IO_HPP_
