#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

#ifndef GPA3D_GIT_DESCRIBE
#define GPA3D_GIT_DESCRIBE "unknown"
#endif

namespace gpa3d {

// FNV-1a over the file bytes; cheap and stable across platforms.
inline std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for checksum");
  std::uint64_t hash = 1469598103934665603ULL;
  char buffer[8192];
  while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buffer[i]);
      hash *= 1099511628211ULL;
    }
    if (!in) break;
  }
  char hex[20];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
  return hex;
}

inline std::string iso8601_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Provenance record for one run: the exact configuration, seed, build
// version, wall-clock bounds, and checksums of the files read and written.
struct RunManifest {
  std::string config_snapshot;
  std::uint64_t seed = 0;
  std::string version = GPA3D_GIT_DESCRIBE;
  std::string started_at;
  std::string finished_at;
  std::map<std::string, std::string> input_checksums;
  std::map<std::string, std::string> output_checksums;

  void add_input(const std::string& path) { input_checksums[path] = file_checksum(path); }
  void add_output(const std::string& path) { output_checksums[path] = file_checksum(path); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config"] = config_snapshot;
    j["seed"] = seed;
    j["version"] = version;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["inputs"] = input_checksums;
    j["outputs"] = output_checksums;
    return j;
  }
};

// Written via a temp file + rename so readers never see a partial manifest.
inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out << m.to_json().dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace gpa3d
