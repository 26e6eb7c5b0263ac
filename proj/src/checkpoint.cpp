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

#include "pholid/checkpoint.hpp"

#include <fmt/format.h>

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "pholid/error.hpp"

namespace pholid {
namespace {

std::string RngToString(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng RngFromString(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (is.fail()) Fail(ErrorCategory::kFormat, "corrupt generator state in checkpoint");
  return rng;
}

struct TensorRef {
  std::string name;
  const Matrix* value;
};

}  // namespace

void SaveCheckpoint(const std::filesystem::path& path, const TrainState& state,
                    const TrainingConfig& training, const LabelMap& labels) {
  std::vector<TensorRef> tensors;
  state.model.ForEachParam([&](const std::string& name, ParamGroup, const nn::Param& p) {
    tensors.push_back({"param/" + name, &p.value});
  });
  state.model.ForEachBuffer([&](const std::string& name, const Matrix& b) {
    tensors.push_back({"buffer/" + name, &b});
  });
  nlohmann::json adam_steps = nlohmann::json::array();
  std::size_t idx = 0;
  state.model.ForEachParam([&](const std::string& name, ParamGroup, const nn::Param&) {
    const auto& slot = state.adam.slots.at(idx++);
    tensors.push_back({"adam_m/" + name, &slot.m});
    tensors.push_back({"adam_v/" + name, &slot.v});
    adam_steps.push_back(slot.steps);
  });

  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    table.push_back({{"name", t.name}, {"rows", t.value->rows()}, {"cols", t.value->cols()},
                     {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.value->size());
  }
  nlohmann::json header = {
      {"model_config", ToJson(state.model.config())},
      {"training_config", ToJson(training)},
      {"labels", labels.labels()},
      {"state",
       {{"epoch", state.epoch},
        {"step", state.step},
        {"phase", std::string(PhaseName(state.phase))},
        {"adam_steps", adam_steps},
        {"shuffle_rng", RngToString(state.shuffle_rng)},
        {"negative_rng", RngToString(state.negative_rng)},
        {"dropout_rng", RngToString(state.dropout_rng)}}},
      {"tensors", table},
  };
  const std::string text = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) Fail(ErrorCategory::kIo, fmt::format("cannot write '{}'", tmp.string()));
    os.write(kCheckpointMagic, 4);
    const std::uint32_t version = kCheckpointVersion;
    os.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t len = text.size();
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : tensors) {
      os.write(reinterpret_cast<const char*>(t.value->data()),
               static_cast<std::streamsize>(t.value->size() * sizeof(double)));
    }
    if (!os) Fail(ErrorCategory::kIo, fmt::format("short write to '{}'", tmp.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) Fail(ErrorCategory::kIo, fmt::format("cannot move checkpoint into place: {}", ec.message()));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) Fail(ErrorCategory::kIo, fmt::format("cannot open checkpoint '{}'", path.string()));
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: not a checkpoint (bad magic)", path.string()));
  }
  if (!is.read(reinterpret_cast<char*>(&version), sizeof(version))) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: truncated checkpoint", path.string()));
  }
  if (version != kCheckpointVersion) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: checkpoint version {} unsupported (expected {})",
                                             path.string(), version, kCheckpointVersion));
  }
  if (!is.read(reinterpret_cast<char*>(&len), sizeof(len)) || len > (1ull << 32)) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: corrupt checkpoint header", path.string()));
  }
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: truncated checkpoint header", path.string()));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: corrupt checkpoint header: {}", path.string(), e.what()));
  }
  const std::streampos payload_start = is.tellg();

  Checkpoint ck;
  try {
    const ModelConfig cfg = ModelConfigFromJson(header.at("model_config"));
    if (expected && !(*expected == cfg)) {
      Fail(ErrorCategory::kConfig,
           fmt::format("{}: checkpoint model config differs from the requested one", path.string()));
    }
    ck.training = TrainingConfigFromJson(header.at("training_config"));
    ck.labels = LabelMap(header.at("labels").get<std::vector<std::string>>());
    ck.state.model = PhoLidModel(cfg, 0);
    ck.state.adam = AdamState::For(ck.state.model);
    const auto& st = header.at("state");
    ck.state.epoch = st.at("epoch").get<std::size_t>();
    ck.state.step = st.at("step").get<std::uint64_t>();
    ck.state.phase = ParsePhase(st.at("phase").get<std::string>());
    ck.state.shuffle_rng = RngFromString(st.at("shuffle_rng").get<std::string>());
    ck.state.negative_rng = RngFromString(st.at("negative_rng").get<std::string>());
    ck.state.dropout_rng = RngFromString(st.at("dropout_rng").get<std::string>());
    const auto steps = st.at("adam_steps").get<std::vector<std::uint64_t>>();
    if (steps.size() != ck.state.adam.slots.size()) {
      Fail(ErrorCategory::kFormat, fmt::format("{}: optimiser state size mismatch", path.string()));
    }
    for (std::size_t i = 0; i < steps.size(); ++i) ck.state.adam.slots[i].steps = steps[i];

    std::map<std::string, Matrix*> targets;
    ck.state.model.ForEachParam([&](const std::string& name, ParamGroup, nn::Param& p) {
      targets["param/" + name] = &p.value;
    });
    ck.state.model.ForEachBuffer([&](const std::string& name, Matrix& b) { targets["buffer/" + name] = &b; });
    std::size_t idx = 0;
    ck.state.model.ForEachParam([&](const std::string& name, ParamGroup, nn::Param&) {
      auto& slot = ck.state.adam.slots[idx++];
      targets["adam_m/" + name] = &slot.m;
      targets["adam_v/" + name] = &slot.v;
    });

    std::size_t loaded = 0;
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      auto it = targets.find(name);
      if (it == targets.end()) {
        Fail(ErrorCategory::kFormat, fmt::format("{}: unexpected tensor '{}'", path.string(), name));
      }
      Matrix& dst = *it->second;
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      if (rows != dst.rows() || cols != dst.cols()) {
        Fail(ErrorCategory::kFormat, fmt::format("{}: tensor '{}' has shape {}x{}, expected {}x{}",
                                                 path.string(), name, rows, cols, dst.rows(), dst.cols()));
      }
      const auto offset = t.at("offset").get<std::uint64_t>();
      is.seekg(payload_start + static_cast<std::streamoff>(offset * sizeof(double)));
      if (!is.read(reinterpret_cast<char*>(dst.data()),
                   static_cast<std::streamsize>(dst.size() * sizeof(double)))) {
        Fail(ErrorCategory::kFormat, fmt::format("{}: truncated tensor '{}'", path.string(), name));
      }
      ++loaded;
    }
    if (loaded != targets.size()) {
      Fail(ErrorCategory::kFormat, fmt::format("{}: {} of {} tensors present", path.string(), loaded,
                                               targets.size()));
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: corrupt checkpoint header: {}", path.string(), e.what()));
  }
  ck.state.model.ZeroGrad();
  return ck;
}

}  // namespace pholid
