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

#include "pholid/feature_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pholid/error.hpp"

namespace pholid {
namespace {

static_assert(std::endian::native == std::endian::little,
              "feature files are little-endian; big-endian hosts need byte swapping");

void WriteU32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t ReadU32(std::istream& is, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: truncated header", path.string()));
  }
  return v;
}

std::ifstream OpenInput(const std::filesystem::path& path, bool binary) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) Fail(ErrorCategory::kIo, fmt::format("cannot open '{}'", path.string()));
  return is;
}

std::pair<std::size_t, std::size_t> ReadHeader(std::istream& is,
                                               const std::filesystem::path& path) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: not a feature file (bad magic)", path.string()));
  }
  const std::uint32_t version = ReadU32(is, path);
  if (version != kFeatureVersion) {
    Fail(ErrorCategory::kFormat,
         fmt::format("{}: unsupported feature file version {}", path.string(), version));
  }
  const std::uint32_t n = ReadU32(is, path);
  const std::uint32_t f = ReadU32(is, path);
  return {n, f};
}

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string StripCr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

bool ParseSize(const std::string& s, std::size_t* out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) return false;
    *out = static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

}  // namespace

void WriteFeatureFile(const std::filesystem::path& path, const Matrix& frames) {
  if (frames.rows() < 1 || frames.cols() < 1) {
    Fail(ErrorCategory::kData, fmt::format("{}: refusing to write an empty matrix", path.string()));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) Fail(ErrorCategory::kIo, fmt::format("cannot write '{}'", path.string()));
  os.write(kFeatureMagic, 4);
  WriteU32(os, kFeatureVersion);
  WriteU32(os, static_cast<std::uint32_t>(frames.rows()));
  WriteU32(os, static_cast<std::uint32_t>(frames.cols()));
  std::vector<float> row(static_cast<std::size_t>(frames.cols()));
  for (Eigen::Index r = 0; r < frames.rows(); ++r) {
    for (Eigen::Index c = 0; c < frames.cols(); ++c) {
      row[static_cast<std::size_t>(c)] = static_cast<float>(frames(r, c));
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) Fail(ErrorCategory::kIo, fmt::format("short write to '{}'", path.string()));
}

std::pair<std::size_t, std::size_t> ReadFeatureHeader(const std::filesystem::path& path) {
  auto is = OpenInput(path, true);
  return ReadHeader(is, path);
}

Matrix ReadFeatureFile(const std::filesystem::path& path) {
  auto is = OpenInput(path, true);
  const auto [n, f] = ReadHeader(is, path);
  if (n == 0 || f == 0) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: empty feature matrix", path.string()));
  }
  std::vector<float> payload(n * f);
  if (!is.read(reinterpret_cast<char*>(payload.data()),
               static_cast<std::streamsize>(payload.size() * sizeof(float)))) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: truncated payload", path.string()));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: trailing bytes after payload", path.string()));
  }
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
  for (std::size_t i = 0; i < payload.size(); ++i) out.data()[i] = payload[i];
  if (!out.allFinite()) {
    Fail(ErrorCategory::kData, fmt::format("{}: non-finite feature values", path.string()));
  }
  return out;
}

Matrix ReadNpy(const std::filesystem::path& path) {
  auto is = OpenInput(path, true);
  char magic[6];
  if (!is.read(magic, 6) || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: not an .npy file", path.string()));
  }
  unsigned char ver[2];
  is.read(reinterpret_cast<char*>(ver), 2);
  std::uint32_t header_len = 0;
  if (ver[0] == 1) {
    std::uint16_t len16 = 0;
    is.read(reinterpret_cast<char*>(&len16), 2);
    header_len = len16;
  } else {
    is.read(reinterpret_cast<char*>(&header_len), 4);
  }
  std::string header(header_len, '\0');
  if (!is.read(header.data(), header_len)) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: truncated .npy header", path.string()));
  }
  const bool f32 = header.find("'<f4'") != std::string::npos;
  const bool f64 = header.find("'<f8'") != std::string::npos;
  if (!f32 && !f64) {
    Fail(ErrorCategory::kFormat,
         fmt::format("{}: only little-endian float32/float64 arrays are supported", path.string()));
  }
  if (header.find("'fortran_order': True") != std::string::npos) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: Fortran-order arrays unsupported", path.string()));
  }
  const auto lp = header.find('(', header.find("'shape'"));
  const auto rp = header.find(')', lp);
  if (lp == std::string::npos || rp == std::string::npos) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: missing shape", path.string()));
  }
  std::vector<std::size_t> shape;
  std::stringstream ss(header.substr(lp + 1, rp - lp - 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    std::size_t v = 0;
    if (!ParseSize(item, &v)) {
      Fail(ErrorCategory::kFormat, fmt::format("{}: bad shape entry '{}'", path.string(), item));
    }
    shape.push_back(v);
  }
  if (shape.size() != 2 || shape[0] == 0 || shape[1] == 0) {
    Fail(ErrorCategory::kFormat,
         fmt::format("{}: expected a non-empty 2-D array", path.string()));
  }
  const std::size_t count = shape[0] * shape[1];
  Matrix out(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
  if (f32) {
    std::vector<float> buf(count);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * 4));
    if (!is) Fail(ErrorCategory::kFormat, fmt::format("{}: truncated payload", path.string()));
    for (std::size_t i = 0; i < count; ++i) out.data()[i] = buf[i];
  } else {
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(count * 8));
    if (!is) Fail(ErrorCategory::kFormat, fmt::format("{}: truncated payload", path.string()));
  }
  return out;
}

LabelMap::LabelMap(std::vector<std::string> labels) {
  for (auto& l : labels) {
    if (index_.count(l) != 0) {
      Fail(ErrorCategory::kData, fmt::format("duplicate label '{}' in label map", l));
    }
    Intern(l);
  }
}

int LabelMap::Intern(const std::string& label) {
  auto it = index_.find(label);
  if (it != index_.end()) return it->second;
  const int idx = static_cast<int>(labels_.size());
  labels_.push_back(label);
  index_.emplace(label, idx);
  return idx;
}

std::optional<int> LabelMap::Find(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int LabelMap::At(const std::string& label) const {
  auto idx = Find(label);
  if (!idx) Fail(ErrorCategory::kData, fmt::format("unknown language label '{}'", label));
  return *idx;
}

const std::string& LabelMap::Name(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= labels_.size()) {
    Fail(ErrorCategory::kData, fmt::format("label index {} out of range", index));
  }
  return labels_[static_cast<std::size_t>(index)];
}

LabelMap ReadLabelMap(const std::filesystem::path& path) {
  auto is = OpenInput(path, false);
  std::vector<std::pair<std::size_t, std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = StripCr(line);
    if (line.empty()) continue;
    const auto fields = SplitTabs(line);
    std::size_t idx = 0;
    if (fields.size() != 2 || fields[0].empty() || !ParseSize(fields[1], &idx)) {
      Fail(ErrorCategory::kFormat,
           fmt::format("{}: line {}: expected 'label<TAB>index'", path.string(), lineno));
    }
    rows.emplace_back(idx, fields[0]);
  }
  std::sort(rows.begin(), rows.end());
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != i) {
      Fail(ErrorCategory::kData,
           fmt::format("{}: label indices must cover 0..{} exactly once", path.string(),
                       rows.size() - 1));
    }
    labels.push_back(rows[i].second);
  }
  if (labels.empty()) Fail(ErrorCategory::kData, fmt::format("{}: empty label map", path.string()));
  return LabelMap(std::move(labels));
}

void WriteLabelMap(const std::filesystem::path& path, const LabelMap& map) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) Fail(ErrorCategory::kIo, fmt::format("cannot write '{}'", path.string()));
  for (std::size_t i = 0; i < map.size(); ++i) os << map.labels()[i] << '\t' << i << '\n';
}

std::vector<std::size_t> Manifest::ClassCounts() const {
  std::vector<std::size_t> counts(label_map.size(), 0);
  for (const auto& e : entries) ++counts[static_cast<std::size_t>(label_map.At(e.label))];
  return counts;
}

Manifest LoadManifest(const std::filesystem::path& path, const std::optional<LabelMap>& explicit_map) {
  auto is = OpenInput(path, false);
  Manifest m;
  if (explicit_map) m.label_map = *explicit_map;
  const auto base = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = StripCr(line);
    if (line.empty()) continue;
    const auto fields = SplitTabs(line);
    if (fields.size() != 3) {
      Fail(ErrorCategory::kFormat,
           fmt::format("{}: line {}: expected 3 tab-separated fields (path, label, n_frames), got {}",
                       path.string(), lineno, fields.size()));
    }
    ManifestEntry e;
    e.feature_path = fields[0];
    if (e.feature_path.is_relative()) e.feature_path = base / e.feature_path;
    e.label = fields[1];
    if (fields[0].empty() || e.label.empty()) {
      Fail(ErrorCategory::kFormat, fmt::format("{}: line {}: empty path or label", path.string(), lineno));
    }
    if (!ParseSize(fields[2], &e.n_frames) || e.n_frames == 0) {
      Fail(ErrorCategory::kFormat,
           fmt::format("{}: line {}: bad n_frames '{}'", path.string(), lineno, fields[2]));
    }
    if (explicit_map) {
      if (!m.label_map.Find(e.label)) {
        Fail(ErrorCategory::kData, fmt::format("{}: line {}: label '{}' not in label map",
                                               path.string(), lineno, e.label));
      }
    } else {
      m.label_map.Intern(e.label);
    }
    m.entries.push_back(std::move(e));
  }
  if (m.entries.empty()) Fail(ErrorCategory::kData, fmt::format("{}: empty manifest", path.string()));
  return m;
}

void WriteManifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) Fail(ErrorCategory::kIo, fmt::format("cannot write '{}'", path.string()));
  const auto base = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  for (const auto& e : manifest.entries) {
    std::filesystem::path p = e.feature_path;
    std::error_code ec;
    auto rel = std::filesystem::relative(p, base, ec);
    if (!ec && !rel.empty()) p = rel;
    os << p.generic_string() << '\t' << e.label << '\t' << e.n_frames << '\n';
  }
}

std::vector<SegmentedUtterance> LoadSegmented(const Manifest& manifest, std::size_t segment_frames,
                                              TailPolicy policy,
                                              std::optional<double> vad_threshold_db) {
  std::vector<SegmentedUtterance> out;
  out.reserve(manifest.entries.size());
  std::optional<std::size_t> dim;
  for (const auto& e : manifest.entries) {
    FeatureSequence seq{ReadFeatureFile(e.feature_path), e.utterance_id()};
    if (seq.n_frames() != e.n_frames) {
      Fail(ErrorCategory::kData,
           fmt::format("{}: manifest says {} frames, file has {}", e.feature_path.string(),
                       e.n_frames, seq.n_frames()));
    }
    if (dim && *dim != seq.dim()) {
      Fail(ErrorCategory::kData, fmt::format("{}: feature dimension {} differs from {}",
                                             e.feature_path.string(), seq.dim(), *dim));
    }
    dim = seq.dim();
    if (vad_threshold_db) seq = EnergyVad(seq, *vad_threshold_db);
    auto utt = Partition(seq, segment_frames, policy);
    utt.label = manifest.label_map.At(e.label);
    out.push_back(std::move(utt));
  }
  return out;
}

}  // namespace pholid
