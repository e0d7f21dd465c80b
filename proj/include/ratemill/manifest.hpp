#pragma once

// Run manifests: every artifact-producing command writes one next to its
// outputs, recording the command, config hash, input digests, seed and
// output paths. Digests are FNV-1a over file bytes.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace ratemill {

inline const char* kVersion = "0.1.0";

inline std::uint64_t fnv1a_bytes(const char* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "missing";
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a_bytes(buf, static_cast<std::size_t>(in.gcount()), h);
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::map<std::string, std::string> input_digests;
  std::uint64_t seed = 0;
  long wall_clock_ms = 0;
  std::vector<std::string> outputs;
};

inline void write_manifest(const std::string& out_dir, const RunManifest& m) {
  nlohmann::json j = {{"command", m.command},
                      {"config_hash", m.config_hash},
                      {"input_digests", m.input_digests},
                      {"seed", m.seed},
                      {"version", kVersion},
                      {"wall_clock_ms", m.wall_clock_ms},
                      {"outputs", m.outputs}};
  std::ofstream out(out_dir + "/manifest_" + m.command + ".json");
  out << j.dump(2) << "\n";
}

class WallClock {
 public:
  WallClock() : start_(std::chrono::steady_clock::now()) {}
  long elapsed_ms() const {
    return static_cast<long>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start_)
                                 .count());
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace ratemill
