// SPDX-License-Identifier: Apache-2.0
//
// nfbeam - near-field beam prediction toolkit
// Copyright (C) 2026 The nfbeam authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "nfbeam/manifest.hpp"

#include "nfbeam/types.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef NFBEAM_GIT_DESCRIBE
#define NFBEAM_GIT_DESCRIBE "unknown"
#endif

namespace nfbeam {

std::string build_git_describe() { return NFBEAM_GIT_DESCRIBE; }

std::string to_json(const RunManifest& m) {
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(m.config_hash));
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["arguments"] = m.arguments;
  j["config_hash"] = hash;
  j["master_seed"] = m.master_seed;
  j["artifacts"] = m.artifacts;
  j["wall_clock_s"] = m.wall_clock_s;
  j["git_describe"] = m.git_describe;
  return j.dump(2) + "\n";
}

RunManifest parse_manifest(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.arguments = j.at("arguments").get<std::vector<std::string>>();
    m.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    m.wall_clock_s = j.at("wall_clock_s").get<double>();
    m.git_describe = j.at("git_describe").get<std::string>();
    return m;
  } catch (const std::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

std::string write_manifest(const RunManifest& m, const std::string& artifact_path) {
  const std::string path = artifact_path + ".manifest.json";
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out << to_json(m);
    if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, path);
  return path;
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

}  // namespace nfbeam
