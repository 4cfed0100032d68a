#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmabm/errors.hpp"

namespace rmabm {

// FNV-1a over a file's bytes; the manifest records it per artifact.
inline std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for checksum: " + path);
  std::uint64_t hash = 1469598103934665603ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 1099511628211ull;
    }
    if (!in) break;
  }
  return hash;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

// Everything needed to reproduce a run: the fully resolved config, the seeds
// it used, and a checksum per output file.
struct RunManifest {
  std::string command;
  nlohmann::json resolved_config;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;

  struct Artifact {
    std::string path;  // relative to output_dir
    std::uint64_t checksum_fnv1a64 = 0;
    std::uint64_t bytes = 0;
  };
  std::vector<Artifact> artifacts;
  std::string started_at_utc;
  double wall_seconds = 0.0;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& a : m.artifacts) {
    arts.push_back({{"path", a.path},
                    {"fnv1a64", hex64(a.checksum_fnv1a64)},
                    {"bytes", a.bytes}});
  }
  return nlohmann::json{{"format", "rmabm-run-manifest"},
                        {"version", 1},
                        {"command", m.command},
                        {"resolved_config", m.resolved_config},
                        {"seeds", m.seeds},
                        {"output_dir", m.output_dir},
                        {"artifacts", arts},
                        {"started_at_utc", m.started_at_utc},
                        {"wall_seconds", m.wall_seconds}};
}

inline void write_manifest(const std::string& path, const RunManifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << to_json(m).dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace rmabm
