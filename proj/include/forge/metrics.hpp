#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/image.hpp"
#include "forge/svbrdf.hpp"

namespace forge {

// Every metric maps stored [-1, 1] values to [0, 1] first, so the PSNR peak is 1.
// `region`, when given, restricts the computation to pixels where it is 1.

/// Mean squared difference over all channels of the region.
double mse(const ImageTensor& a, const ImageTensor& b, const Mask* region = nullptr);

/// 10 log10(1 / MSE); +infinity when the images agree exactly.
double psnr(const ImageTensor& a, const ImageTensor& b, const Mask* region = nullptr);

/// Single-scale SSIM on the channel-mean gray image: 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03, mean over valid window positions.
double ssim(const ImageTensor& a, const ImageTensor& b);

inline constexpr double kBceEpsilon = 1e-7;

/// Binary cross-entropy of predicted probabilities against a binary target.
double bce(const ImageTensor& pred, const ImageTensor& target, const Mask* region = nullptr);

/// True when every value of the image is exactly -1 or 1 (0 or 1 after mapping).
bool is_binary(const ImageTensor& img);

/// One evaluated (prediction, ground truth, mask) triple.
struct EvalRow {
  std::string name;
  double hole_fraction = 0.0;
  double psnr = 0.0;
  double psnr_hole = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  double mse_hole = 0.0;
  std::optional<double> bce;       // only for binary ground truth
  std::optional<double> bce_hole;
  std::optional<double> lpips;     // merged from an external source
};

EvalRow evaluate(const std::string& name, const ImageTensor& pred, const ImageTensor& gt, const Mask& mask);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
  int count = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  /// Mean and spread per column, recomputed from rows; missing optional values are skipped.
  std::map<std::string, MetricSummary> aggregates() const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
  /// Fills the lpips column from a `name,lpips` CSV; returns the number of matched rows.
  int merge_lpips(const std::string& csv_text);
};

/// Metric column names in CSV order.
const std::vector<std::string>& eval_columns();

/// Pairs files by name across three directories and evaluates each triple.
EvalReport evaluate_directories(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                const std::filesystem::path& mask_dir);

/// Per-map MSE (diffuse, normals, roughness, specular), optionally inside a region.
std::array<double, 4> map_mse(const MapStack& pred, const MapStack& gt, const Mask* region = nullptr);

/// Markdown table with the per-map MSE columns of the material comparison.
std::string format_map_mse_table(const std::vector<std::pair<std::string, std::array<double, 4>>>& rows);

}  // namespace forge
