#include "report.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include <json.hpp>

#include "layerprobe/error.hpp"

namespace lpcli {

using layerprobe::ErrorCode;
using layerprobe::fail;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
    out << text;
    if (!out) fail(ErrorCode::Io, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void Manifest::add_input(const fs::path& path) {
  const auto hash = sha256_file(path);
  std::lock_guard lock(mutex_);
  inputs_[path.string()] = hash;
}

void Manifest::write_artifact(const fs::path& relative, const std::string& text) {
  const fs::path full = out_ / relative;
  write_text(full, text);
  const auto hash = sha256_file(full);
  std::lock_guard lock(mutex_);
  artifacts_[relative.generic_string()] = hash;
}

void Manifest::record_file(const fs::path& full, const std::string& name) {
  const auto hash = sha256_file(full);
  std::lock_guard lock(mutex_);
  artifacts_[name] = hash;
}

void Manifest::add_failure(Failure failure) {
  std::lock_guard lock(mutex_);
  failures_.push_back(std::move(failure));
}

bool Manifest::has_failures() const {
  std::lock_guard lock(mutex_);
  return !failures_.empty();
}

void Manifest::save() const {
  std::lock_guard lock(mutex_);
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& [path, hash] : inputs_) j["inputs"].push_back({{"path", path}, {"sha256", hash}});
  j["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& [path, hash] : artifacts_)
    j["artifacts"].push_back({{"path", path}, {"sha256", hash}, {"inputs", nlohmann::ordered_json::array()}});
  for (auto& a : j["artifacts"])
    for (const auto& [path, hash] : inputs_) a["inputs"].push_back(hash);
  auto sorted = failures_;
  std::sort(sorted.begin(), sorted.end(),
            [](const Failure& a, const Failure& b) { return a.cell < b.cell; });
  j["failures"] = nlohmann::ordered_json::array();
  for (const auto& f : sorted)
    j["failures"].push_back({{"cell", f.cell}, {"error", f.error}, {"message", f.message}});
  write_text(out_ / "manifest.json", j.dump(2) + "\n");
}

void run_pool(std::size_t n, int jobs, const std::function<void(std::size_t)>& task) {
  const auto threads = static_cast<std::size_t>(std::clamp<long>(jobs, 1, static_cast<long>(std::max<std::size_t>(n, 1))));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) task(i);
    });
}

namespace {

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series) {
  constexpr double width = 640, height = 400, left = 60, right = 20, top = 40, bottom = 50;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::size_t points = 0;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series) {
    points = std::max(points, s.y.size());
    for (double v : s.y)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi == lo) hi = lo + 1;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  auto px = [&](std::size_t i) { return left + (points > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(points - 1) : plot_w / 2); };
  auto py = [&](double v) { return top + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < points; ++i)
    out << "<text x=\"" << px(i) << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"middle\">" << i << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    out << "<text x=\"" << left - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  out << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">" << xml_escape(x_label) << "</text>\n";
  out << "<text x=\"15\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
      << top + plot_h / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = colors[k % std::size(colors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[k].y.size(); ++i)
      out << (i ? " " : "") << px(i) << ',' << py(series[k].y[i]);
    out << "\"/>\n";
    out << "<text x=\"" << left + 10 << "\" y=\"" << top + 14 + 14 * static_cast<double>(k) << "\" fill=\"" << color
        << "\">" << xml_escape(series[k].name) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace lpcli
