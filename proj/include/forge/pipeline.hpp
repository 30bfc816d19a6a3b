#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/checkpoint.hpp"
#include "forge/image.hpp"
#include "forge/mask_gen.hpp"
#include "forge/sampler.hpp"

// Operations shared verbatim by the command line and the HTTP service.
namespace forge {

/// One inference run: every path the CLI accepts, plus sampler flags.
struct SampleRequest {
  std::filesystem::path checkpoint;
  /// PNG file, or a directory of material maps when `svbrdf` is set.
  std::filesystem::path image;
  std::filesystem::path mask;
  int num_samples = 1;
  std::uint64_t seed = 0;
  bool composite = true;
  bool clamp = true;
  bool replace_each_step = false;
  bool svbrdf = false;

  void validate() const;
  SamplerOptions options() const { return {clamp, composite, replace_each_step}; }
};

struct SampleOutcome {
  std::vector<std::filesystem::path> outputs;
  nlohmann::json manifest;
};

/// File name of sample k inside an output directory: sample_000.png, sample_001.png, ...
/// For material stacks the same stem names a directory of maps.
std::string sample_name(int k, bool svbrdf = false);

/// Loads everything, checks shapes and channel counts, samples and writes outputs
/// plus manifest.json into `out_dir`.
SampleOutcome run_sampling(const SampleRequest& req, const std::filesystem::path& out_dir,
                           const StepSink& sink = {});

/// Throws ChannelMismatchError / ShapeError when the inputs cannot be sampled with the checkpoint.
void check_sample_inputs(const CheckpointInfo& info, const ImageTensor& image, const Mask& mask);

/// Vector mask description: rectangles, brush strokes and row-major run-length
/// hole runs painted onto a width x height canvas with the training rasterizer.
struct MaskPayload {
  int width = 0;
  int height = 0;
  std::vector<Rect> rects;
  std::vector<Stroke> strokes;
  /// (start, length) pairs over the flattened row-major canvas.
  std::vector<std::pair<std::int64_t, std::int64_t>> runs;
};

MaskPayload mask_payload_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MaskPayload& payload);
Mask rasterize_payload(const MaskPayload& payload);
/// Row-major (start, length) runs of hole pixels.
std::vector<std::pair<std::int64_t, std::int64_t>> mask_runs(const Mask& mask);

/// Atomic text write (temporary file then rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace forge
