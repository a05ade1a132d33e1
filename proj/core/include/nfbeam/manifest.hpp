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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nfbeam {

/// Provenance record written next to every artifact a command produces.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::uint64_t config_hash = 0;
  std::uint64_t master_seed = 0;
  std::vector<std::string> artifacts;
  double wall_clock_s = 0.0;
  std::string git_describe;
};

/// git describe of the source tree at configure time.
std::string build_git_describe();

std::string to_json(const RunManifest& m);
RunManifest parse_manifest(const std::string& json_text);

/// Writes <artifact>.manifest.json atomically and returns its path.
std::string write_manifest(const RunManifest& m, const std::string& artifact_path);

RunManifest read_manifest(const std::string& path);

}  // namespace nfbeam
