// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "saga/config.hpp"
#include "saga/metrics.hpp"

using namespace saga;
namespace fs = std::filesystem;

namespace {

std::string base_config(const std::string& out_dir) {
  return R"({
    "schema": 1,
    "schedule": {"kind": "flow", "grid": "uniform:6"},
    "backend": {"kind": "analytic", "k_per_prompt": 2, "dataset_seed": 5},
    "method": {"name": "vanilla"},
    "prompts": [{"id": "p0", "entities": [1, 2]}],
    "seeds": [1, 2],
    "output": {"dir": ")" + out_dir + R"("}
  })";
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("strict parsing rejects unknown keys at every level") {
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(R"({"schema": 1, "shedule": {}})"),
                       doctest::Contains("shedule"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_json(
          R"({"schema": 1, "schedule": {"knid": "vp"}, "prompts": [{"id":"p","entities":[1]}], "seeds": [1]})"),
      doctest::Contains("knid"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_json(
          R"({"schema": 1, "method": {"cov": {"kindd": "diag"}}, "prompts": [{"id":"p","entities":[1]}], "seeds": [1]})"),
      doctest::Contains("kindd"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"prompts": [], "seeds": [1]})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"schema": 2, "seeds": [1]})"),
                  std::invalid_argument);
}

TEST_CASE("config blocks parse with defaults and expansions") {
  ExperimentConfig c = ExperimentConfig::from_json(R"({
    "schema": 1,
    "schedule": {"kind": "flow"},
    "method": {"name": "saga", "cov": {"kind": "diag", "per_channel": true}},
    "optim": {"momentum": 0.1},
    "prompts": [{"id": "p0", "entities": [1, 2], "boxes": [[1,1,8,8],[8,8,15,15]]}],
    "seeds": {"count": 3, "base": 10}
  })");
  CHECK(c.seeds == std::vector<uint64_t>{10, 11, 12});
  CHECK(c.prompts.size() == 1);
  CHECK(c.prompts[0].boxes.size() == 2);
  CHECK(c.pipeline().method == Method::Saga);
  CHECK(c.pipeline().cov.kind == CovKind::Diag);
  CHECK(c.pipeline().cov.per_channel);
  // flow defaults fill the unset optimizer fields
  CHECK(c.optim().momentum == 0.1);
  CHECK(c.optim().batch == 4);
  CHECK(c.optim().steps == 50);
  CHECK(c.make_schedule().kind() == ScheduleKind::LinearFlow);

  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"schema": 1, "method": {"name": "nope"},
    "prompts": [{"id":"p","entities":[1]}], "seeds": [1]})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"schema": 1,
    "prompts": [{"id":"p","entities":[1]}], "seeds": []})"),
                  std::invalid_argument);
}

TEST_CASE("overrides patch the document before parsing") {
  TempDir dir("saga_cfg_override");
  std::string text = apply_overrides(base_config(dir.str()),
                                     {"method.name=gsn", "method.guidance_lr=0", "seeds=[7]"});
  ExperimentConfig c = ExperimentConfig::from_json(text);
  CHECK(c.method == "gsn");
  CHECK(c.guidance_lr == 0.0);
  CHECK(c.seeds == std::vector<uint64_t>{7});
  CHECK_THROWS_AS(apply_overrides("{}", {"no-equals"}), std::invalid_argument);
}

TEST_CASE("config hash tracks content") {
  TempDir dir("saga_cfg_hash");
  ExperimentConfig a = ExperimentConfig::from_json(base_config(dir.str()));
  ExperimentConfig b = a;
  CHECK(a.hash() == b.hash());
  b.guidance_lr = 1.0;
  CHECK(a.hash() != b.hash());
  CHECK(fnv1a64("") == 14695981039346656037ull);
}

TEST_CASE("run emits one record per prompt-seed cell, byte-identically") {
  TempDir dir("saga_cfg_run");
  ExperimentConfig cfg = ExperimentConfig::from_json(base_config(dir.str()));
  RunResult r1 = run_experiment(cfg);
  CHECK(r1.cells == 2);
  CHECK(r1.records == 2);
  std::string first = slurp(r1.records_path);
  CHECK(std::count(first.begin(), first.end(), '\n') == 2);

  RunResult r2 = run_experiment(cfg);
  CHECK(slurp(r2.records_path) == first);

  CHECK(fs::exists(dir.path / "library.json"));
  CHECK(fs::exists(dir.path / "metadata.json"));
}

TEST_CASE("worker count obeys the thread cap") {
  setenv("SAGA_LAB_THREADS", "3", 1);
  CHECK(worker_count(100) == 3);
  CHECK(worker_count(2) == 2);
  setenv("SAGA_LAB_THREADS", "0", 1);
  CHECK_THROWS_AS(worker_count(4), std::invalid_argument);
  unsetenv("SAGA_LAB_THREADS");
  CHECK(worker_count(1) == 1);
}

TEST_CASE("single-threaded and pooled runs produce identical records") {
  TempDir dir("saga_cfg_pool");
  ExperimentConfig cfg = ExperimentConfig::from_json(base_config(dir.str()));
  setenv("SAGA_LAB_THREADS", "1", 1);
  run_experiment(cfg);
  std::string serial = slurp((dir.path / "records.jsonl").string());
  setenv("SAGA_LAB_THREADS", "4", 1);
  run_experiment(cfg);
  unsetenv("SAGA_LAB_THREADS");
  CHECK(slurp((dir.path / "records.jsonl").string()) == serial);
}

TEST_CASE("sweep axes parse inclusive ranges") {
  SweepAxis m = parse_sweep_axis("momentum=0:0.9:0.1");
  CHECK(m.key == "momentum");
  CHECK(m.values.size() == 10);
  CHECK(m.values.front() == doctest::Approx(0.0));
  CHECK(m.values.back() == doctest::Approx(0.9));

  SweepAxis s = parse_sweep_axis("step-index=1:21");
  CHECK(s.values.size() == 21);
  CHECK(s.values.back() == doctest::Approx(21));

  CHECK_THROWS_AS(parse_sweep_axis("momentum"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sweep_axis("momentum=1:0"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sweep_axis("momentum=0:1:0"), std::invalid_argument);
  CHECK_THROWS_AS(parse_sweep_axis("momentum=0:x"), std::invalid_argument);
}

TEST_CASE("sweep enumerates the grid and resumes from the log") {
  TempDir dir("saga_cfg_sweep");
  ExperimentConfig cfg = ExperimentConfig::from_json(base_config(dir.str()));
  cfg.seeds = {1};
  std::vector<SweepAxis> axes = {parse_sweep_axis("guidance-lr=0:10:10"),
                                 parse_sweep_axis("cfg-scale=1:2")};
  SweepResult s1 = run_sweep(cfg, axes);
  CHECK(s1.total_cells == 4);
  CHECK(s1.executed == 4);
  CHECK(s1.skipped == 0);

  std::string csv = slurp(s1.summary_path);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + one row per cell

  SweepResult s2 = run_sweep(cfg, axes);
  CHECK(s2.executed == 0);
  CHECK(s2.skipped == 4);
  CHECK(slurp(s2.summary_path) == csv);

  CHECK_THROWS_AS(run_sweep(cfg, {}), std::invalid_argument);
  CHECK_THROWS_AS(run_sweep(cfg, {parse_sweep_axis("bogus=0:1")}), std::invalid_argument);
}

TEST_CASE("report aggregates records into the summary table") {
  TempDir dir("saga_cfg_report");
  ExperimentConfig cfg = ExperimentConfig::from_json(base_config(dir.str()));
  run_experiment(cfg);
  std::string csv_path = write_report(dir.str());
  std::string csv = slurp(csv_path);
  CHECK(csv.rfind("method,entities,records,tiam,box_alignment,diversity,saturation_std\n", 0) == 0);
  CHECK(csv.find("vanilla,2,2,") != std::string::npos);
  CHECK_THROWS_AS(write_report((dir.path / "missing").string()), std::invalid_argument);
}

TEST_CASE("image emission quantizes into P6") {
  TempDir dir("saga_cfg_img");
  Tensor zero(Shape{3, 4, 5});
  std::string path = (dir.path / "zero.ppm").string();
  emit_image(zero, 1.0, path);
  std::string bytes = slurp(path);
  CHECK(bytes.rfind("P6\n5 4\n255\n", 0) == 0);
  std::string body = bytes.substr(11);
  REQUIRE(body.size() == 3 * 4 * 5);
  for (char c : body) CHECK(static_cast<unsigned char>(c) == 128);

  Tensor bright(Shape{3, 2, 2});
  for (int64_t i = 0; i < 4; ++i) bright[i] = 3.0;  // channel 0 pinned at +3 sigma
  for (int64_t i = 4; i < 12; ++i) bright[i] = -5.0;  // below range, clamps to 0
  std::string bpath = (dir.path / "bright.ppm").string();
  emit_image(bright, 1.0, bpath);
  std::string bb = slurp(bpath).substr(11);
  REQUIRE(bb.size() == 12);
  for (int64_t p = 0; p < 4; ++p) {
    CHECK(static_cast<unsigned char>(bb[p * 3 + 0]) == 255);
    CHECK(static_cast<unsigned char>(bb[p * 3 + 1]) == 0);
    CHECK(static_cast<unsigned char>(bb[p * 3 + 2]) == 0);
  }

  // identical inputs give identical bytes
  std::string bpath2 = (dir.path / "bright2.ppm").string();
  emit_image(bright, 1.0, bpath2);
  CHECK(slurp(bpath2) == slurp(bpath));

  CHECK_THROWS(emit_image(zero, 1.0, (dir.path / "no_dir" / "x.ppm").string()));
  CHECK_THROWS_AS(emit_image(Tensor(Shape{2, 4, 4}), 1.0, path), std::invalid_argument);
  CHECK_THROWS_AS(emit_image(zero, 0.0, path), std::invalid_argument);
}
