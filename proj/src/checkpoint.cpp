// SPDX-License-Identifier: Apache-2.0

#include "ramen/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json_util.hpp"

namespace ramen::train {
namespace {

using detail::Json;
using detail::StrictObject;

constexpr char kMagic[8] = {'R', 'A', 'M', 'E', 'N', 'C', 'K', 'P'};

std::uint64_t fnv1a(const char* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void append_block(std::string& payload, const std::vector<std::vector<T>>& block, Json& sizes) {
  sizes = Json::array();
  for (const auto& v : block) {
    sizes.push_back(v.size());
    payload.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
  }
}

template <typename T>
std::vector<std::vector<T>> read_block(const std::string& payload, std::size_t& pos,
                                       const std::vector<std::size_t>& sizes) {
  std::vector<std::vector<T>> out;
  for (auto n : sizes) {
    if (pos + n * sizeof(T) > payload.size()) throw CheckpointError("checkpoint payload truncated");
    std::vector<T> v(n);
    std::memcpy(v.data(), payload.data() + pos, n * sizeof(T));
    pos += n * sizeof(T);
    out.push_back(std::move(v));
  }
  return out;
}

Json log_json(const std::vector<EpochLog>& log) {
  Json rows = Json::array();
  for (const auto& e : log) rows.push_back({e.epoch, e.lr, e.train_loss, e.train_acc, e.val_acc});
  return rows;
}

std::vector<EpochLog> log_from(const Json& rows) {
  std::vector<EpochLog> log;
  for (const auto& r : rows) {
    if (!r.is_array() || r.size() != 5) throw std::invalid_argument("progress.log: bad row");
    log.push_back({r[0].get<std::size_t>(), r[1].get<double>(), r[2].get<double>(),
                   r[3].get<double>(), r[4].get<double>()});
  }
  return log;
}

struct Header {
  std::uint32_t version = 0;
  std::uint32_t scalar = 0;
  std::string json;
  std::string payload;
};

Header read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t fixed = sizeof(kMagic) + 4 + 4 + 8;
  if (bytes.size() < fixed || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint file");
  }
  Header h;
  std::uint64_t header_len = 0;
  std::memcpy(&h.version, bytes.data() + 8, 4);
  std::memcpy(&h.scalar, bytes.data() + 12, 4);
  std::memcpy(&header_len, bytes.data() + 16, 8);
  if (h.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(h.version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  if (header_len > bytes.size() - fixed) throw CheckpointError("checkpoint header truncated");
  h.json = bytes.substr(fixed, header_len);
  h.payload = bytes.substr(fixed + header_len);
  return h;
}

}  // namespace

void require_same_config(const RamenConfig& expected, const RamenConfig& found) {
  const auto diff = config_differences(expected, found);
  if (diff.empty()) return;
  std::string msg = "checkpoint config differs in:";
  for (const auto& d : diff) msg += " " + d;
  throw CheckpointError(msg);
}

std::size_t checkpoint_scalar_size(const std::filesystem::path& path) {
  return read_file(path).scalar;
}

template <typename T>
void save_checkpoint(const Checkpoint<T>& c, const std::filesystem::path& path) {
  std::string payload;
  Json sizes;
  const auto& p = c.progress;
  append_block(payload, c.model.params, sizes["params"]);
  append_block(payload, c.model.buffers, sizes["buffers"]);
  append_block(payload, p.optimizer.m, sizes["adamax_m"]);
  append_block(payload, p.optimizer.u, sizes["adamax_u"]);
  if (p.best) {
    append_block(payload, p.best->params, sizes["best_params"]);
    append_block(payload, p.best->buffers, sizes["best_buffers"]);
  }

  Json header{
      {"config", detail::to_json(c.config)},
      {"answers", c.answers},
      {"trainer", detail::to_json(c.trainer)},
      {"schedule", detail::to_json(c.schedule)},
      {"param_names", c.param_names},
      {"buffer_names", c.buffer_names},
      {"optimizer",
       {{"beta1", p.optimizer.config.beta1},
        {"beta2", p.optimizer.config.beta2},
        {"eps", p.optimizer.config.eps},
        {"t", p.optimizer.t}}},
      {"progress",
       {{"epochs_done", p.epochs_done},
        {"log", log_json(p.log)},
        {"best_val_acc", p.best_val_acc},
        {"best_epoch", p.best_epoch},
        {"epochs_since_best", p.epochs_since_best},
        {"stopped", p.stopped},
        {"rng_state", p.rng_state}}},
      {"sizes", sizes},
      {"payload_bytes", payload.size()},
      {"checksum", fnv1a(payload.data(), payload.size())}};
  const std::string text = header.dump();

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint32_t scalar = sizeof(T);
    const std::uint64_t len = text.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&scalar), 4);
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  const Header h = read_file(path);
  if (h.scalar != sizeof(T)) {
    throw CheckpointError("checkpoint holds " + std::to_string(h.scalar * 8) +
                          "-bit values; loader expects " + std::to_string(sizeof(T) * 8));
  }
  Checkpoint<T> c;
  try {
    const Json j = Json::parse(h.json);
    StrictObject o(j, "");
    detail::read_into(o.required_child("config"), "config", c.config);
    o.required("answers", c.answers);
    detail::read_into(o.required_child("trainer"), "trainer", c.trainer);
    detail::read_into(o.required_child("schedule"), "schedule", c.schedule);
    o.required("param_names", c.param_names);
    o.required("buffer_names", c.buffer_names);

    auto& p = c.progress;
    const Json& opt = o.required_child("optimizer");
    p.optimizer.config = {opt.at("beta1").get<double>(), opt.at("beta2").get<double>(),
                          opt.at("eps").get<double>()};
    p.optimizer.t = opt.at("t").get<std::uint64_t>();
    const Json& prog = o.required_child("progress");
    p.epochs_done = prog.at("epochs_done").get<std::size_t>();
    p.log = log_from(prog.at("log"));
    p.best_val_acc = prog.at("best_val_acc").get<double>();
    p.best_epoch = prog.at("best_epoch").get<std::size_t>();
    p.epochs_since_best = prog.at("epochs_since_best").get<std::size_t>();
    p.stopped = prog.at("stopped").get<bool>();
    p.rng_state = prog.at("rng_state").get<std::string>();

    const Json& sizes = o.required_child("sizes");
    std::size_t payload_bytes = 0;
    std::uint64_t checksum = 0;
    o.required("payload_bytes", payload_bytes);
    o.required("checksum", checksum);
    o.finish();
    if (payload_bytes != h.payload.size()) {
      throw CheckpointError("checkpoint payload has " + std::to_string(h.payload.size()) +
                            " bytes, header says " + std::to_string(payload_bytes));
    }
    if (fnv1a(h.payload.data(), h.payload.size()) != checksum) {
      throw CheckpointError("checkpoint payload checksum mismatch");
    }
    auto block = [&](const char* key) {
      return sizes.at(key).get<std::vector<std::size_t>>();
    };
    std::size_t pos = 0;
    c.model.params = read_block<T>(h.payload, pos, block("params"));
    c.model.buffers = read_block<T>(h.payload, pos, block("buffers"));
    p.optimizer.m = read_block<T>(h.payload, pos, block("adamax_m"));
    p.optimizer.u = read_block<T>(h.payload, pos, block("adamax_u"));
    if (sizes.contains("best_params")) {
      Snapshot<T> best;
      best.params = read_block<T>(h.payload, pos, block("best_params"));
      best.buffers = read_block<T>(h.payload, pos, block("best_buffers"));
      p.best = std::move(best);
    }
    if (pos != h.payload.size()) throw CheckpointError("checkpoint has trailing payload bytes");
  } catch (const Json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (c.model.params.size() != c.param_names.size() ||
      c.model.buffers.size() != c.buffer_names.size()) {
    throw CheckpointError("checkpoint tensor index is inconsistent");
  }
  return c;
}

template void save_checkpoint(const Checkpoint<float>&, const std::filesystem::path&);
template void save_checkpoint(const Checkpoint<double>&, const std::filesystem::path&);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&);

}  // namespace ramen::train
