#include "forge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "forge/errors.hpp"
#include "forge/png_io.hpp"

namespace forge {
namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;

void check_region(const ImageTensor& a, const ImageTensor& b, const Mask* region) {
  assert_same_shape(a, b);
  if (region) {
    assert_same_shape(a, *region);
    if (region->hole_count() == 0) throw ShapeError("metric region is empty");
  }
}

template <typename F>
double region_mean(const ImageTensor& a, const ImageTensor& b, const Mask* region, F&& term) {
  check_region(a, b, region);
  double sum = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < a.channels(); ++c) {
    const auto pa = a.plane(c);
    const auto pb = b.plane(c);
    for (std::size_t i = 0; i < pa.size(); ++i) {
      if (region && !region->data()[i]) continue;
      sum += term(to_unit(pa[i]), to_unit(pb[i]));
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

std::vector<double> gray_unit(const ImageTensor& img) {
  std::vector<double> g(static_cast<std::size_t>(img.height()) * img.width(), 0.0);
  for (int c = 0; c < img.channels(); ++c) {
    const auto p = img.plane(c);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += to_unit(p[i]);
  }
  for (auto& v : g) v /= img.channels();
  return g;
}

std::array<double, kSsimWindow> gaussian_kernel() {
  std::array<double, kSsimWindow> k{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    k[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable valid-mode Gaussian filter: output is (h - 10) x (w - 10).
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w) {
  static const auto k = gaussian_kernel();
  const int oh = h - kSsimWindow + 1;
  const int ow = w - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) s += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream out;
  out << std::setprecision(10) << v;
  return out.str();
}

nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

struct Column {
  const char* name;
  std::optional<double> (*get)(const EvalRow&);
};

const std::vector<Column>& columns() {
  static const std::vector<Column> cols = {
      {"hole_fraction", [](const EvalRow& r) -> std::optional<double> { return r.hole_fraction; }},
      {"psnr", [](const EvalRow& r) -> std::optional<double> { return r.psnr; }},
      {"psnr_hole", [](const EvalRow& r) -> std::optional<double> { return r.psnr_hole; }},
      {"ssim", [](const EvalRow& r) -> std::optional<double> { return r.ssim; }},
      {"mse", [](const EvalRow& r) -> std::optional<double> { return r.mse; }},
      {"mse_hole", [](const EvalRow& r) -> std::optional<double> { return r.mse_hole; }},
      {"bce", [](const EvalRow& r) { return r.bce; }},
      {"bce_hole", [](const EvalRow& r) { return r.bce_hole; }},
      {"lpips", [](const EvalRow& r) { return r.lpips; }},
  };
  return cols;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

double mse(const ImageTensor& a, const ImageTensor& b, const Mask* region) {
  return region_mean(a, b, region, [](double x, double y) { return (x - y) * (x - y); });
}

double psnr(const ImageTensor& a, const ImageTensor& b, const Mask* region) {
  const double e = mse(a, b, region);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / e);
}

double ssim(const ImageTensor& a, const ImageTensor& b) {
  assert_same_shape(a, b);
  const int h = a.height(), w = a.width();
  if (h < kSsimWindow || w < kSsimWindow) {
    throw ShapeError("SSIM needs images of at least 11x11 pixels, got " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  const auto ga = gray_unit(a);
  const auto gb = gray_unit(b);
  std::vector<double> aa(ga.size()), bb(ga.size()), ab(ga.size());
  for (std::size_t i = 0; i < ga.size(); ++i) {
    aa[i] = ga[i] * ga[i];
    bb[i] = gb[i] * gb[i];
    ab[i] = ga[i] * gb[i];
  }
  const auto mu_a = filter_valid(ga, h, w);
  const auto mu_b = filter_valid(gb, h, w);
  const auto e_aa = filter_valid(aa, h, w);
  const auto e_bb = filter_valid(bb, h, w);
  const auto e_ab = filter_valid(ab, h, w);
  const double c1 = kSsimK1 * kSsimK1;
  const double c2 = kSsimK2 * kSsimK2;
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    total += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double bce(const ImageTensor& pred, const ImageTensor& target, const Mask* region) {
  return region_mean(pred, target, region, [](double p, double t) {
    p = std::clamp(p, kBceEpsilon, 1.0 - kBceEpsilon);
    return -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  });
}

bool is_binary(const ImageTensor& img) {
  const auto d = img.data();
  return std::all_of(d.begin(), d.end(), [](float v) { return v == -1.0f || v == 1.0f; });
}

EvalRow evaluate(const std::string& name, const ImageTensor& pred, const ImageTensor& gt, const Mask& mask) {
  assert_same_shape(pred, gt);
  assert_same_shape(pred, mask);
  EvalRow row;
  row.name = name;
  row.hole_fraction = mask.hole_fraction();
  row.psnr = psnr(pred, gt);
  row.ssim = ssim(pred, gt);
  row.mse = mse(pred, gt);
  const bool has_hole = mask.hole_count() > 0;
  row.psnr_hole = has_hole ? psnr(pred, gt, &mask) : std::numeric_limits<double>::infinity();
  row.mse_hole = has_hole ? mse(pred, gt, &mask) : 0.0;
  if (is_binary(gt)) {
    row.bce = bce(pred, gt);
    if (has_hole) row.bce_hole = bce(pred, gt, &mask);
  }
  return row;
}

const std::vector<std::string>& eval_columns() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& c : columns()) n.emplace_back(c.name);
    return n;
  }();
  return names;
}

std::map<std::string, MetricSummary> EvalReport::aggregates() const {
  std::map<std::string, MetricSummary> out;
  for (const auto& col : columns()) {
    std::vector<double> values;
    for (const auto& r : rows) {
      if (auto v = col.get(r)) values.push_back(*v);
    }
    MetricSummary s;
    s.count = static_cast<int>(values.size());
    if (!values.empty()) {
      double sum = 0.0;
      for (double v : values) sum += v;
      s.mean = sum / values.size();
      if (std::isfinite(s.mean)) {
        double sq = 0.0;
        for (double v : values) sq += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(sq / values.size());
      } else {
        s.stddev = std::numeric_limits<double>::quiet_NaN();
      }
    }
    out[col.name] = s;
  }
  return out;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "name";
  for (const auto& c : columns()) out << ',' << c.name;
  out << '\n';
  for (const auto& r : rows) {
    out << r.name;
    for (const auto& c : columns()) {
      out << ',';
      if (auto v = c.get(r)) out << number(*v);
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["count"] = rows.size();
  nlohmann::json agg = nlohmann::json::object();
  for (const auto& [name, s] : aggregates()) {
    agg[name] = {{"mean", s.count ? json_number(s.mean) : nlohmann::json(nullptr)},
                 {"std", s.count && std::isfinite(s.stddev) ? json_number(s.stddev) : nlohmann::json(nullptr)},
                 {"count", s.count}};
  }
  j["aggregates"] = agg;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = {{"name", r.name}};
    for (const auto& c : columns()) {
      auto v = c.get(r);
      row[c.name] = v ? json_number(*v) : nlohmann::json(nullptr);
    }
    list.push_back(row);
  }
  j["rows"] = list;
  return j;
}

int EvalReport::merge_lpips(const std::string& csv_text) {
  std::map<std::string, double> values;
  std::istringstream in(csv_text);
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    const std::string name = trim(line.substr(0, comma));
    const std::string value = trim(line.substr(comma + 1));
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used == value.size()) values[name] = v;
    } catch (const std::exception&) {
      // header or malformed row
    }
  }
  int matched = 0;
  for (auto& r : rows) {
    auto it = values.find(r.name);
    if (it == values.end()) continue;
    r.lpips = it->second;
    ++matched;
  }
  return matched;
}

EvalReport evaluate_directories(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                const std::filesystem::path& mask_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(pred_dir)) throw IoError("prediction directory not found: " + pred_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  EvalReport report;
  for (const auto& f : files) {
    const auto name = f.filename();
    const auto gt_path = gt_dir / name;
    const auto mask_path = mask_dir / name;
    if (!fs::exists(gt_path)) throw IoError("no ground truth for " + name.string() + " in " + gt_dir.string());
    if (!fs::exists(mask_path)) throw IoError("no mask for " + name.string() + " in " + mask_dir.string());
    report.rows.push_back(evaluate(f.stem().string(), load_image(f), load_image(gt_path), load_mask(mask_path)));
  }
  return report;
}

std::array<double, 4> map_mse(const MapStack& pred, const MapStack& gt, const Mask* region) {
  std::array<double, 4> out{};
  for (int i = 0; i < 4; ++i) out[i] = mse(map_at(pred, i), map_at(gt, i), region);
  return out;
}

std::string format_map_mse_table(const std::vector<std::pair<std::string, std::array<double, 4>>>& rows) {
  std::ostringstream out;
  out << "| Method | Diffuse | Normals | Roughness | Specular |\n";
  out << "|---|---|---|---|---|\n";
  for (const auto& [method, v] : rows) {
    out << "| " << method;
    for (double x : v) out << " | " << std::setprecision(2) << x;
    out << " |\n";
  }
  return out.str();
}

}  // namespace forge
