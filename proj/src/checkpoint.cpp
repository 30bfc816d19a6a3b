#include "forge/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <map>

#include "forge/errors.hpp"
#include "forge/png_io.hpp"

namespace forge {
namespace {

constexpr std::size_t kFixedPrefix = 20;  // magic + version + body length
constexpr std::size_t kTrailer = 4;

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void patch_u64(std::size_t at, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  std::size_t size() const { return out_.size(); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, std::size_t pos) : data_(data), pos_(pos) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > data_.size() - pos_) throw FormatError("checkpoint record overruns its body");
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_;
};

std::uint32_t read_u32_at(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

std::uint64_t read_u64_at(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return v;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

nlohmann::json model_json(const DenoiserConfig& c) {
  return {{"image_channels", c.image_channels},
          {"base_width", c.base_width},
          {"depth", c.depth},
          {"max_groups", c.max_groups}};
}

CheckpointInfo info_from_header(const nlohmann::json& h) {
  CheckpointInfo info;
  try {
    const auto& s = h.at("schedule");
    info.diffusion_steps = s.at("steps").get<int>();
    info.beta_start = s.at("beta_start").get<double>();
    info.beta_end = s.at("beta_end").get<double>();
    const auto& m = h.at("model");
    info.model.image_channels = m.at("image_channels").get<int>();
    info.model.base_width = m.at("base_width").get<int>();
    info.model.depth = m.at("depth").get<int>();
    info.model.max_groups = m.at("max_groups").get<int>();
    info.parameter_count = h.at("parameter_count").get<std::size_t>();
    info.tensor_count = h.at("tensor_count").get<std::size_t>();
    info.training = h.value("training", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is incomplete: ") + e.what());
  }
  return info;
}

// Checks framing and checksum; returns the body span.
std::span<const std::uint8_t> verify_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFixedPrefix) throw FormatError("checkpoint is truncated (no header)");
  if (!std::equal(std::begin(kCheckpointMagic), std::end(kCheckpointMagic), bytes.begin())) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  const std::uint32_t version = read_u32_at(bytes, 8);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t body = read_u64_at(bytes, 12);
  const std::uint64_t available = bytes.size() - kFixedPrefix;
  if (available < kTrailer || body > available - kTrailer) {
    throw FormatError("checkpoint is truncated: body declares " + std::to_string(body) + " bytes, file holds " +
                      std::to_string(available < kTrailer ? 0 : available - kTrailer));
  }
  if (body != available - kTrailer) throw FormatError("checkpoint has trailing bytes after the checksum");
  const std::uint32_t stored = read_u32_at(bytes, kFixedPrefix + body);
  const std::uint32_t actual = crc32_of(bytes.subspan(8, kFixedPrefix - 8 + body));
  if (stored != actual) throw ChecksumError("checkpoint checksum mismatch; the file is corrupted");
  return bytes.subspan(kFixedPrefix, body);
}

CheckpointInfo parse_header(Reader& r) {
  const std::uint32_t len = r.u32();
  const auto text = r.take(len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  return info_from_header(header);
}

}  // namespace

nlohmann::json CheckpointInfo::to_json() const {
  return {{"format_version", version},
          {"schedule", {{"steps", diffusion_steps}, {"beta_start", beta_start}, {"beta_end", beta_end}}},
          {"model", model_json(model)},
          {"parameter_count", parameter_count},
          {"tensor_count", tensor_count},
          {"training", training}};
}

std::vector<std::uint8_t> serialize_checkpoint(const Denoiser<float>& model, const NoiseSchedule& schedule,
                                               const nlohmann::json& training) {
  CheckpointInfo info;
  info.diffusion_steps = schedule.steps();
  info.beta_start = schedule.beta_start();
  info.beta_end = schedule.beta_end();
  info.model = model.config();
  info.parameter_count = model.parameter_count();
  info.tensor_count = model.parameter_info().size();
  info.training = training.is_null() ? nlohmann::json::object() : training;
  const std::string header = info.to_json().dump();

  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(0);  // body length, patched below
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.bytes(header.data(), header.size());
  w.u32(static_cast<std::uint32_t>(info.tensor_count));
  const auto values = model.parameters();
  for (const auto& p : model.parameter_info()) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) w.u32(static_cast<std::uint32_t>(d));
    w.u64(p.size);
    for (std::size_t i = 0; i < p.size; ++i) w.f32(values[p.offset + i]);
  }
  const std::size_t body = w.size() - kFixedPrefix;
  w.patch_u64(12, body);
  const std::uint32_t crc = crc32_of(std::span<const std::uint8_t>(w.buffer()).subspan(8));
  w.u32(crc);
  return std::move(w.buffer());
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  const auto body = verify_frame(bytes);
  Reader r(body, 0);
  CheckpointInfo info = parse_header(r);
  try {
    info.model.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint model config is invalid: ") + e.what());
  }
  Denoiser<float> model(info.model);
  if (model.parameter_count() != info.parameter_count) {
    throw FormatError("checkpoint parameter count " + std::to_string(info.parameter_count) +
                      " does not match its architecture (" + std::to_string(model.parameter_count()) + ")");
  }
  const std::uint32_t count = r.u32();
  if (count != info.tensor_count || count != model.parameter_info().size()) {
    throw FormatError("checkpoint tensor count " + std::to_string(count) + " does not match its architecture");
  }

  std::map<std::string, const ParamInfo*> by_name;
  for (const auto& p : model.parameter_info()) by_name[p.name] = &p;
  auto params = model.parameters();
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_bytes = r.take(r.u32());
    const std::string name(name_bytes.begin(), name_bytes.end());
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint holds unknown tensor '" + name + "'");
    const ParamInfo& p = *it->second;
    const std::uint32_t rank = r.u32();
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    const std::uint64_t n = r.u64();
    if (shape != p.shape || n != p.size) throw FormatError("tensor '" + name + "' has an unexpected shape");
    const auto raw = r.take(n * 4);
    for (std::size_t i = 0; i < n; ++i) params[p.offset + i] = std::bit_cast<float>(read_u32_at(raw, 4 * i));
    by_name.erase(it);
  }
  if (r.pos() != body.size()) throw FormatError("checkpoint body has unread bytes");

  NoiseSchedule schedule = info.schedule();
  return Checkpoint{std::move(info), std::move(model), std::move(schedule)};
}

void save_checkpoint(const std::filesystem::path& path, const Denoiser<float>& model, const NoiseSchedule& schedule,
                     const nlohmann::json& training) {
  const auto bytes = serialize_checkpoint(model, schedule, training);
  auto tmp = path;
  tmp += ".tmp";
  write_file_bytes(tmp, bytes);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file_bytes(path)); }

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const auto body = verify_frame(bytes);
  Reader r(body, 0);
  return parse_header(r);
}

void require_channels(const CheckpointInfo& info, int channels) {
  if (info.model.image_channels != channels) {
    throw ChannelMismatchError("checkpoint was trained on " + std::to_string(info.model.image_channels) +
                               "-channel data but the input has " + std::to_string(channels) + " channels");
  }
}

}  // namespace forge
