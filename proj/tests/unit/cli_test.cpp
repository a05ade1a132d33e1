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

#include "nfbeam/dataset.hpp"
#include "nfbeam/eval.hpp"
#include "nfbeam/manifest.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#ifndef NFBEAM_CLI_PATH
#error "NFBEAM_CLI_PATH must point at the nfbeam executable"
#endif

namespace nfbeam {
namespace {

namespace fs = std::filesystem;

const fs::path& work_dir() {
  static const fs::path d = [] {
    const fs::path p = fs::temp_directory_path() / "nfbeam_tests" / "cli";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

// Small model and dataset so each command runs in about a second.
const char* kSmall = " --preset desk --jobs 2 --set model.num_layers=1 --set train.batch_size=16";

int run(const std::string& args) {
  const std::string cmd = std::string(NFBEAM_CLI_PATH) + " " + args + " >> " + path("cli.log") + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("gen-dataset --count 3"), 1);
  EXPECT_EQ(run("gen-dataset --out " + path("x.bin") + " --set system.no_such_key=1"), 1);
  EXPECT_EQ(run("gen-dataset --out " + path("x.bin") + " --set system.num_subcarriers=-4"), 1);
  EXPECT_EQ(run("gen-dataset --out " + path("x.bin") + " --pilots ones"), 1);
  EXPECT_EQ(run("sweep --axis bandwidth --out " + path("sw")), 1);
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, RuntimeErrorsExitTwo) {
  EXPECT_EQ(run("evaluate --ckpt " + path("missing.ck") + " --data " + path("missing.bin") + " --out " +
                path("m.csv")),
            2);
}

TEST(Cli, PipelineEndToEnd) {
  const std::string data = path("data.bin");
  ASSERT_EQ(run("gen-dataset --count 60 --seed 5 --out " + data + kSmall), 0);
  ASSERT_TRUE(fs::exists(data));
  const RunManifest gm = read_manifest(data + ".manifest.json");
  EXPECT_EQ(gm.command, "gen-dataset");
  EXPECT_EQ(gm.master_seed, 5u);
  EXPECT_EQ(read_dataset(data).samples.size(), 60u);

  // Identical invocations give identical bytes, whatever the worker count.
  const std::string again = path("again.bin");
  ASSERT_EQ(run("gen-dataset --count 60 --seed 5 --out " + again + " --preset desk --jobs 1"), 0);
  EXPECT_EQ(slurp(again), slurp(data));

  const std::string pre = path("pre.ck");
  ASSERT_EQ(run("pretrain --data " + data + " --out " + pre + " --epochs 1" + kSmall), 0);
  EXPECT_TRUE(fs::exists(pre + ".manifest.json"));
  EXPECT_TRUE(fs::exists(pre + ".log.csv"));

  const std::string ft = path("ft.ck");
  ASSERT_EQ(run("finetune --data " + data + " --ckpt " + pre + " --out " + ft + " --epochs 1" + kSmall), 0);
  const std::string ft2 = path("ft2.ck");
  ASSERT_EQ(run("finetune --data " + data + " --ckpt " + pre + " --out " + ft2 + " --epochs 1" + kSmall), 0);
  EXPECT_EQ(slurp(ft), slurp(ft2));

  // The checkpoint fixes the architecture; a dataset of another shape is refused.
  const std::string narrow = path("narrow.bin");
  ASSERT_EQ(run("gen-dataset --count 10 --out " + narrow + " --set system.num_subcarriers=4"), 0);
  EXPECT_EQ(run("finetune --data " + narrow + " --ckpt " + pre + " --out " + path("bad.ck") + " --epochs 1"), 2);

  const std::string csv = path("metrics.csv");
  ASSERT_EQ(run("evaluate --ckpt " + ft + " --data " + data + " --out " + csv + kSmall), 0);
  const auto recs = parse_report(csv);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].sample_count, 6u);
  ASSERT_EQ(run("evaluate --split all --ckpt " + ft + " --data " + data + " --out " + csv + kSmall), 0);
  EXPECT_EQ(parse_report(csv)[0].sample_count, 60u);

  const std::string sw = path("sweep");
  ASSERT_EQ(run("sweep --axis speed_kmh --values 40,80 --count 6 --ckpt " + ft + " --out " + sw + kSmall), 0);
  EXPECT_EQ(parse_report(sw + "/sweep_speed_kmh.csv").size(), 2u);
  EXPECT_TRUE(fs::exists(sw + "/sweep_speed_kmh.svg"));
}

TEST(Cli, ConfigFileFromEnvironment) {
  const std::string cfg = path("small.ini");
  std::ofstream(cfg) << "[system]\nnum_subcarriers = 4\n";
  const std::string data = path("env.bin");
  ASSERT_EQ(run("gen-dataset --count 2 --out " + data + " --config " + cfg), 0);
  EXPECT_EQ(read_dataset(data).header.spec.system.num_subcarriers, 4);
  ::setenv("NFBEAM_CONFIG", cfg.c_str(), 1);
  ASSERT_EQ(run("gen-dataset --count 2 --out " + path("env2.bin")), 0);
  ::unsetenv("NFBEAM_CONFIG");
  EXPECT_EQ(read_dataset(path("env2.bin")).header.spec.system.num_subcarriers, 4);
}

TEST(Cli, SelfcheckPasses) { EXPECT_EQ(run("selfcheck"), 0); }

}  // namespace
}  // namespace nfbeam
