#pragma once

#include "rankgraph/sha256.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace rankgraph {

inline constexpr const char* kToolVersion = "0.1.0";

inline std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot digest missing file: " + path);
    Sha256 h;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    return Sha256::hex(h.finish());
}

// Written next to each subcommand's outputs, before the outputs themselves.
// Only the timestamp field may differ between identical reruns.
struct RunManifest {
    std::string subcommand;
    nlohmann::json resolved_config;
    std::map<std::string, std::string> input_digests;  // path -> sha256 hex
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;

    void add_input(const std::string& path) { input_digests[path] = sha256_file(path); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["subcommand"] = subcommand;
        j["config"] = resolved_config;
        j["inputs"] = input_digests;
        j["seed"] = seed;
        j["tool_version"] = kToolVersion;
        j["outputs"] = outputs;
        j["generated_unix"] = std::chrono::duration_cast<std::chrono::seconds>(
                                  std::chrono::system_clock::now().time_since_epoch())
                                  .count();
        return j;
    }
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << m.to_json().dump(2) << '\n';
}

}  // namespace rankgraph
