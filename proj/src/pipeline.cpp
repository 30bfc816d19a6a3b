#include "forge/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include "forge/errors.hpp"
#include "forge/png_io.hpp"
#include "forge/svbrdf.hpp"

namespace forge {

void SampleRequest::validate() const {
  if (num_samples < 1) throw ConfigError("num_samples must be >= 1");
  if (checkpoint.empty()) throw ConfigError("a checkpoint is required");
  if (image.empty()) throw ConfigError("an input image is required");
  if (mask.empty()) throw ConfigError("a mask is required");
}

std::string sample_name(int k, bool svbrdf) {
  char buf[32];
  std::snprintf(buf, sizeof buf, svbrdf ? "sample_%03d" : "sample_%03d.png", k);
  return buf;
}

void check_sample_inputs(const CheckpointInfo& info, const ImageTensor& image, const Mask& mask) {
  require_channels(info, image.channels());
  assert_same_shape(image, mask);
}

SampleOutcome run_sampling(const SampleRequest& req, const std::filesystem::path& out_dir, const StepSink& sink) {
  req.validate();
  const auto start = std::chrono::steady_clock::now();
  const Checkpoint ckpt = load_checkpoint(req.checkpoint);
  const ImageTensor image = req.svbrdf ? stack_maps(load_svbrdf(req.image)) : load_image(req.image);
  const Mask mask = load_mask(req.mask);
  check_sample_inputs(ckpt.info, image, mask);

  std::filesystem::create_directories(out_dir);
  const DenoiserPredictor predictor(ckpt.model);
  const BatchResult batch =
      inpaint_batch(predictor, ckpt.schedule, image, mask, req.num_samples, req.seed, req.options(), sink);

  SampleOutcome outcome;
  nlohmann::json names = nlohmann::json::array();
  for (int k = 0; k < req.num_samples; ++k) {
    const auto path = out_dir / sample_name(k, req.svbrdf);
    if (req.svbrdf) {
      save_svbrdf(unstack_maps(batch.samples[k]), path);
    } else {
      save_image(batch.samples[k], path);
    }
    outcome.outputs.push_back(path);
    names.push_back(path.filename().string());
  }

  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  outcome.manifest = {
      {"checkpoint", req.checkpoint.string()},
      {"image", req.image.string()},
      {"mask", req.mask.string()},
      {"svbrdf", req.svbrdf},
      {"seed", req.seed},
      {"seeds", batch.seeds},
      {"num_samples", req.num_samples},
      {"diffusion_steps", ckpt.schedule.steps()},
      {"model_calls", batch.model_calls},
      {"hole_fraction", mask.hole_fraction()},
      {"options", {{"clamp", req.clamp}, {"composite", req.composite}, {"replace_each_step", req.replace_each_step}}},
      {"timings", {{"total_seconds", total}, {"per_sample_seconds", batch.seconds}}},
      {"outputs", names},
  };
  write_text_atomic(out_dir / "manifest.json", outcome.manifest.dump(2) + "\n");
  return outcome;
}

MaskPayload mask_payload_from_json(const nlohmann::json& j) {
  try {
    MaskPayload p;
    p.width = j.at("width").get<int>();
    p.height = j.at("height").get<int>();
    if (p.width < 1 || p.height < 1) throw ShapeError("mask payload canvas must be positive");
    for (const auto& r : j.value("rects", nlohmann::json::array())) {
      p.rects.push_back(
          {r.at("x").get<int>(), r.at("y").get<int>(), r.at("width").get<int>(), r.at("height").get<int>()});
    }
    for (const auto& s : j.value("strokes", nlohmann::json::array())) {
      Stroke stroke;
      stroke.width = s.at("width").get<double>();
      for (const auto& pt : s.at("points")) {
        if (pt.is_array()) {
          stroke.points.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
        } else {
          stroke.points.push_back({pt.at("x").get<double>(), pt.at("y").get<double>()});
        }
      }
      p.strokes.push_back(std::move(stroke));
    }
    for (const auto& r : j.value("runs", nlohmann::json::array())) {
      p.runs.emplace_back(r.at(0).get<std::int64_t>(), r.at(1).get<std::int64_t>());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed mask payload: ") + e.what());
  }
}

nlohmann::json to_json(const MaskPayload& payload) {
  nlohmann::json rects = nlohmann::json::array();
  for (const auto& r : payload.rects) rects.push_back({{"x", r.x}, {"y", r.y}, {"width", r.width}, {"height", r.height}});
  nlohmann::json strokes = nlohmann::json::array();
  for (const auto& s : payload.strokes) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : s.points) pts.push_back({p.x, p.y});
    strokes.push_back({{"points", pts}, {"width", s.width}});
  }
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& [start, len] : payload.runs) runs.push_back({start, len});
  return {{"width", payload.width}, {"height", payload.height}, {"rects", rects}, {"strokes", strokes}, {"runs", runs}};
}

Mask rasterize_payload(const MaskPayload& payload) {
  Mask mask(payload.height, payload.width);
  for (const auto& r : payload.rects) {
    if (r.width < 1 || r.height < 1 || r.x < 0 || r.y < 0 || r.x + r.width > payload.width ||
        r.y + r.height > payload.height) {
      throw ShapeError("mask rectangle lies outside the " + std::to_string(payload.width) + "x" +
                       std::to_string(payload.height) + " canvas");
    }
    paint_rect(mask, r);
  }
  for (const auto& s : payload.strokes) {
    if (s.width < 1.0) throw ShapeError("stroke width must be >= 1");
    if (s.points.empty()) throw ShapeError("stroke has no points");
    for (const auto& p : s.points) {
      if (p.x < 0 || p.y < 0 || p.x > payload.width - 1 || p.y > payload.height - 1) {
        throw ShapeError("stroke point lies outside the canvas");
      }
    }
  }
  paint_strokes(mask, payload.strokes);
  const std::int64_t total = static_cast<std::int64_t>(payload.width) * payload.height;
  auto data = mask.data();
  for (const auto& [start, len] : payload.runs) {
    if (start < 0 || len < 0 || start + len > total) throw ShapeError("mask run lies outside the canvas");
    std::fill(data.begin() + start, data.begin() + start + len, std::uint8_t{1});
  }
  return mask;
}

std::vector<std::pair<std::int64_t, std::int64_t>> mask_runs(const Mask& mask) {
  std::vector<std::pair<std::int64_t, std::int64_t>> runs;
  const auto d = mask.data();
  std::int64_t i = 0;
  const auto n = static_cast<std::int64_t>(d.size());
  while (i < n) {
    if (!d[i]) {
      ++i;
      continue;
    }
    std::int64_t j = i;
    while (j < n && d[j]) ++j;
    runs.emplace_back(i, j - i);
    i = j;
  }
  return runs;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

}  // namespace forge
