#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace lpcli {

namespace fs = std::filesystem;

std::string sha256_file(const fs::path& path);

// Writes through a temporary sibling and renames, so readers never see a
// half-written artifact.
void write_text(const fs::path& path, const std::string& text);

struct Failure {
  std::string cell;  // e.g. "layer=3 seed=1"
  std::string error;
  std::string message;
};

// Collects artifacts and failures for out/manifest.json. Thread-safe.
class Manifest {
 public:
  Manifest(std::string command, fs::path out_dir) : command_(std::move(command)), out_(std::move(out_dir)) {}

  void add_input(const fs::path& path);
  // Writes the file and records it under its path relative to the output dir.
  void write_artifact(const fs::path& relative, const std::string& text);
  // Records a file written elsewhere (binary outputs, files outside the dir).
  void record_file(const fs::path& full, const std::string& name);
  void add_failure(Failure failure);

  bool has_failures() const;
  const std::vector<Failure>& failures() const { return failures_; }
  void save() const;

 private:
  std::string command_;
  fs::path out_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> inputs_;     // path -> sha256
  std::map<std::string, std::string> artifacts_;  // relative path -> sha256
  std::vector<Failure> failures_;
};

// Runs tasks[0..n) on `jobs` threads; task i writes only its own outputs.
void run_pool(std::size_t n, int jobs, const std::function<void(std::size_t)>& task);

struct Series {
  std::string name;
  std::vector<double> y;  // one value per x position
};

// Minimal standalone SVG line chart, x = 0..n-1.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series);

}  // namespace lpcli
