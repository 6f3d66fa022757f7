#include "difftrack/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "difftrack/config.hpp"
#include "difftrack/errors.hpp"
#include "difftrack/io.hpp"

namespace difftrack {

namespace {

using io::Json;

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

struct Group {
  const char* name;
  const ParamSet* set;
};

}  // namespace

Checkpoint make_checkpoint(const DiffusionTracker& model, const Trainer* trainer, const std::string& config_hash,
                           std::uint64_t seed) {
  Checkpoint c;
  c.model = model.config();
  c.config_hash = config_hash;
  c.seed = seed;
  c.params = model.params();
  if (trainer != nullptr) {
    c.train = trainer->config();
    c.step = trainer->step();
    c.adam_m = trainer->adam_m();
    c.adam_v = trainer->adam_v();
    c.ema = trainer->ema();
  }
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::vector<Group> groups{{"params", &c.params}};
  if (c.adam_m) groups.push_back({"adam_m", &*c.adam_m});
  if (c.adam_v) groups.push_back({"adam_v", &*c.adam_v});
  if (c.ema) groups.push_back({"ema", &*c.ema});

  Json manifest;
  manifest["format_version"] = io::kFormatVersion;
  manifest["kind"] = "checkpoint";
  manifest["config_hash"] = c.config_hash;
  manifest["seed"] = c.seed;
  manifest["step"] = c.step;
  manifest["model"] = config::to_json(c.model);
  manifest["train"] = c.train ? config::to_json(*c.train) : Json(nullptr);
  manifest["dtype"] = "float32-le";
  manifest["order"] = "column-major";
  Json tensors = Json::array();
  std::uint64_t offset = 0;
  for (const Group& g : groups) {
    for (std::size_t i = 0; i < g.set->size(); ++i) {
      const ad::Matrix& m = g.set->at(static_cast<int>(i));
      tensors.push_back({{"group", g.name}, {"name", g.set->name(static_cast<int>(i))}, {"rows", m.rows()},
                         {"cols", m.cols()}, {"offset", offset}});
      offset += static_cast<std::uint64_t>(m.size()) * 4;
    }
  }
  manifest["tensors"] = std::move(tensors);
  manifest["data_bytes"] = offset;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << manifest.dump() << '\n';
  for (const Group& g : groups) {
    for (std::size_t i = 0; i < g.set->size(); ++i) {
      const ad::Matrix& m = g.set->at(static_cast<int>(i));
      for (Eigen::Index k = 0; k < m.size(); ++k) {
        const auto bits = to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[k])));
        out.write(reinterpret_cast<const char*>(&bits), 4);
      }
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::string line;
  std::getline(in, line);
  Json manifest;
  try {
    manifest = Json::parse(line);
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": unreadable manifest: " + e.what());
  }
  io::check_format_version(manifest, path.string());
  const std::string where = path.string();
  try {
    if (manifest.at("kind") != "checkpoint") throw DataError(where + ": not a checkpoint");
    Checkpoint c;
    c.model = config::model_config_from_json(manifest.at("model"));
    if (!manifest.at("train").is_null()) c.train = config::train_config_from_json(manifest.at("train"));
    c.step = manifest.at("step").get<long>();
    c.config_hash = manifest.at("config_hash").get<std::string>();
    c.seed = manifest.at("seed").get<std::uint64_t>();

    const auto data_bytes = manifest.at("data_bytes").get<std::uint64_t>();
    std::vector<char> data(data_bytes);
    in.read(data.data(), static_cast<std::streamsize>(data_bytes));
    if (static_cast<std::uint64_t>(in.gcount()) != data_bytes) throw DataError(where + ": truncated tensor data");

    for (const Json& t : manifest.at("tensors")) {
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      if (offset + static_cast<std::uint64_t>(rows * cols) * 4 > data_bytes) {
        throw DataError(where + ": tensor " + t.at("name").get<std::string>() + " runs past the data section");
      }
      ad::Matrix m(rows, cols);
      for (Eigen::Index k = 0; k < m.size(); ++k) {
        std::uint32_t bits;
        std::memcpy(&bits, data.data() + offset + static_cast<std::uint64_t>(k) * 4, 4);
        m.data()[k] = std::bit_cast<float>(to_little_endian(bits));
      }
      const std::string group = t.at("group").get<std::string>();
      ParamSet* target = nullptr;
      if (group == "params") {
        target = &c.params;
      } else {
        std::optional<ParamSet>& slot = group == "adam_m" ? c.adam_m : group == "adam_v" ? c.adam_v : c.ema;
        if (group != "adam_m" && group != "adam_v" && group != "ema") throw DataError(where + ": unknown group " + group);
        if (!slot) slot.emplace();
        target = &*slot;
      }
      target->add(t.at("name").get<std::string>(), std::move(m));
    }
    return c;
  } catch (const Json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
}

namespace {

void copy_params(const ParamSet& from, ParamSet& to, const char* what) {
  if (!from.same_layout(to)) {
    throw VersionError(std::string("checkpoint ") + what + " do not match the model's parameter layout");
  }
  for (std::size_t i = 0; i < to.size(); ++i) to.at(static_cast<int>(i)) = from.at(static_cast<int>(i));
}

}  // namespace

DiffusionTracker model_from_checkpoint(const Checkpoint& checkpoint, bool use_ema) {
  DiffusionTracker model(checkpoint.model);
  const ParamSet& source = (use_ema && checkpoint.ema) ? *checkpoint.ema : checkpoint.params;
  copy_params(source, model.params(), "parameters");
  return model;
}

void resume_from_checkpoint(const Checkpoint& checkpoint, DiffusionTracker& model, Trainer& trainer) {
  if (!(checkpoint.model == model.config())) {
    throw VersionError("checkpoint model configuration differs from the requested model");
  }
  if (!checkpoint.adam_m || !checkpoint.adam_v) throw VersionError("checkpoint has no optimizer state");
  copy_params(checkpoint.params, model.params(), "parameters");
  trainer.restore(checkpoint.step, *checkpoint.adam_m, *checkpoint.adam_v, checkpoint.ema);
}

}  // namespace difftrack
