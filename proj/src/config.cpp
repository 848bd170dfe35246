// SPDX-License-Identifier: Apache-2.0
#include "saga/config.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "saga/metrics.hpp"

namespace saga {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw std::invalid_argument("unknown key \"" + k + "\" in " + where);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json prompt_json(const PromptSpec& p) {
  json j;
  j["id"] = p.id;
  j["entities"] = p.entities;
  if (!p.boxes.empty()) {
    j["boxes"] = json::array();
    for (const Box& b : p.boxes) j["boxes"].push_back(b);
  }
  return j;
}

PromptSpec prompt_from(const json& j) {
  check_keys(j, {"id", "entities", "boxes"}, "prompt");
  PromptSpec p;
  p.id = j.at("id").get<std::string>();
  p.entities = j.at("entities").get<std::vector<int>>();
  if (j.contains("boxes"))
    for (const auto& b : j.at("boxes")) p.boxes.push_back(b.get<Box>());
  return p;
}

CovKind cov_kind_from(const std::string& s) {
  if (s == "fixed") return CovKind::Fixed;
  if (s == "scalar") return CovKind::Scalar;
  if (s == "diag") return CovKind::Diag;
  if (s == "block") return CovKind::Block;
  throw std::invalid_argument("unknown covariance kind \"" + s + "\"");
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void append_line(const std::string& path, const std::string& line) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path);
  out << line << "\n";
  out.flush();
  if (!out) throw std::runtime_error("write failed on " + path);
}

}  // namespace

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  check_keys(j, {"schema", "schedule", "backend", "method", "optim", "prompts", "seeds", "output"},
             "config");
  if (!j.contains("schema") || j.at("schema").get<int>() != 1)
    throw std::invalid_argument("config requires \"schema\": 1");

  ExperimentConfig c;
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    check_keys(s, {"kind", "grid", "t_max", "beta_start", "beta_end"}, "schedule");
    if (s.contains("kind")) c.schedule_kind = s.at("kind").get<std::string>();
    if (s.contains("grid")) c.grid = s.at("grid").get<std::string>();
    if (s.contains("t_max")) c.t_max = s.at("t_max").get<int>();
    if (s.contains("beta_start")) c.beta_start = s.at("beta_start").get<double>();
    if (s.contains("beta_end")) c.beta_end = s.at("beta_end").get<double>();
  }
  if (j.contains("backend")) {
    const json& b = j.at("backend");
    check_keys(b,
               {"kind", "library", "weights", "vocab_size", "channels", "height", "width",
                "blob_sigma", "k_per_prompt", "dataset_seed"},
               "backend");
    if (b.contains("kind")) c.backend_kind = b.at("kind").get<std::string>();
    if (b.contains("library")) c.library_path = b.at("library").get<std::string>();
    if (b.contains("weights")) c.weights_path = b.at("weights").get<std::string>();
    if (b.contains("vocab_size")) c.vocab_size = b.at("vocab_size").get<int>();
    if (b.contains("channels")) c.channels = b.at("channels").get<int>();
    if (b.contains("height")) c.height = b.at("height").get<int>();
    if (b.contains("width")) c.width = b.at("width").get<int>();
    if (b.contains("blob_sigma")) c.blob_sigma = b.at("blob_sigma").get<double>();
    if (b.contains("k_per_prompt")) c.k_per_prompt = b.at("k_per_prompt").get<int>();
    if (b.contains("dataset_seed")) c.dataset_seed = b.at("dataset_seed").get<uint64_t>();
  }
  if (j.contains("method")) {
    const json& m = j.at("method");
    check_keys(m,
               {"name", "t_star_index", "cutoff_index", "guidance_lr", "cfg_scale", "cov",
                "samples"},
               "method");
    if (m.contains("name")) c.method = m.at("name").get<std::string>();
    if (m.contains("t_star_index")) c.t_star_index = m.at("t_star_index").get<int>();
    if (m.contains("cutoff_index")) c.cutoff_index = m.at("cutoff_index").get<int>();
    if (m.contains("guidance_lr")) c.guidance_lr = m.at("guidance_lr").get<double>();
    if (m.contains("cfg_scale")) c.cfg_scale = m.at("cfg_scale").get<double>();
    if (m.contains("samples")) c.samples = m.at("samples").get<int>();
    if (m.contains("cov")) {
      const json& cv = m.at("cov");
      check_keys(cv, {"kind", "block", "per_channel", "frozen"}, "method.cov");
      if (cv.contains("kind")) c.cov_kind = cv.at("kind").get<std::string>();
      if (cv.contains("block")) c.cov_block = cv.at("block").get<int>();
      if (cv.contains("per_channel")) c.cov_per_channel = cv.at("per_channel").get<bool>();
      if (cv.contains("frozen")) c.cov_frozen = cv.at("frozen").get<bool>();
    }
  }
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    check_keys(o, {"steps", "lr", "momentum", "batch", "rescale"}, "optim");
    if (o.contains("steps")) c.optim_steps = o.at("steps").get<int>();
    if (o.contains("lr")) c.optim_lr = o.at("lr").get<double>();
    if (o.contains("momentum")) c.optim_momentum = o.at("momentum").get<double>();
    if (o.contains("batch")) c.optim_batch = o.at("batch").get<int>();
    if (o.contains("rescale")) c.optim_rescale = o.at("rescale").get<bool>();
  }
  if (j.contains("prompts")) {
    const json& p = j.at("prompts");
    if (p.is_array()) {
      for (const auto& jp : p) c.prompts.push_back(prompt_from(jp));
    } else {
      check_keys(p, {"path"}, "prompts");
      json list = json::parse(read_file(p.at("path").get<std::string>()));
      for (const auto& jp : list) c.prompts.push_back(prompt_from(jp));
    }
  }
  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    if (s.is_array()) {
      c.seeds = s.get<std::vector<uint64_t>>();
    } else {
      check_keys(s, {"count", "base"}, "seeds");
      uint64_t base = s.contains("base") ? s.at("base").get<uint64_t>() : 1;
      int count = s.at("count").get<int>();
      for (int i = 0; i < count; ++i) c.seeds.push_back(base + static_cast<uint64_t>(i));
    }
  }
  if (j.contains("output")) {
    const json& o = j.at("output");
    check_keys(o, {"dir"}, "output");
    if (o.contains("dir")) c.output_dir = o.at("dir").get<std::string>();
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  try {
    return from_json(read_file(path));
  } catch (const json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["schema"] = 1;
  j["schedule"] = {{"kind", schedule_kind}, {"grid", grid}, {"t_max", t_max},
                   {"beta_start", beta_start}, {"beta_end", beta_end}};
  j["backend"] = {{"kind", backend_kind},       {"library", library_path},
                  {"weights", weights_path},    {"vocab_size", vocab_size},
                  {"channels", channels},       {"height", height},
                  {"width", width},             {"blob_sigma", blob_sigma},
                  {"k_per_prompt", k_per_prompt}, {"dataset_seed", dataset_seed}};
  j["method"] = {{"name", method},
                 {"t_star_index", t_star_index},
                 {"cutoff_index", cutoff_index},
                 {"guidance_lr", guidance_lr},
                 {"cfg_scale", cfg_scale},
                 {"samples", samples},
                 {"cov",
                  {{"kind", cov_kind}, {"block", cov_block}, {"per_channel", cov_per_channel},
                   {"frozen", cov_frozen}}}};
  j["optim"] = {{"steps", optim_steps}, {"lr", optim_lr}, {"momentum", optim_momentum},
                {"batch", optim_batch}, {"rescale", optim_rescale}};
  j["prompts"] = json::array();
  for (const PromptSpec& p : prompts) j["prompts"].push_back(prompt_json(p));
  j["seeds"] = seeds;
  j["output"] = {{"dir", output_dir}};
  return j.dump();
}

uint64_t ExperimentConfig::hash() const { return fnv1a64(to_json()); }

void ExperimentConfig::validate() const {
  if (schedule_kind != "vp" && schedule_kind != "flow")
    throw std::invalid_argument("schedule.kind must be vp or flow");
  if (backend_kind != "analytic" && backend_kind != "learned")
    throw std::invalid_argument("backend.kind must be analytic or learned");
  if (backend_kind == "learned" && weights_path.empty())
    throw std::invalid_argument("learned backend requires backend.weights");
  if (!library_path.empty() && !fs::exists(library_path))
    throw std::invalid_argument("backend.library not found: " + library_path);
  if (!weights_path.empty() && !fs::exists(weights_path))
    throw std::invalid_argument("backend.weights not found: " + weights_path);
  method_from_name(method);  // throws on unknown names
  cov_kind_from(cov_kind);
  if (samples < 1) throw std::invalid_argument("method.samples must be >= 1");
  if (prompts.empty() && library_path.empty())
    throw std::invalid_argument("config needs prompts (inline or via backend.library)");
  if (seeds.empty()) throw std::invalid_argument("config needs at least one seed");
}

Schedule ExperimentConfig::make_schedule() const {
  if (schedule_kind == "vp")
    return make_vp_schedule(t_max, beta_start, beta_end, grid.empty() ? "ddpm50" : grid);
  return make_flow_schedule(t_max, grid.empty() ? "flow28" : grid);
}

PrototypeLibrary ExperimentConfig::make_library() const {
  if (!library_path.empty()) return PrototypeLibrary::from_json(read_file(library_path));
  std::mt19937_64 rng(dataset_seed);
  return build_scene_dataset(vocab_size, channels, height, width, blob_sigma, prompts,
                             k_per_prompt, rng);
}

std::unique_ptr<Backend> ExperimentConfig::make_backend(const PrototypeLibrary& lib) const {
  if (backend_kind == "analytic") return std::make_unique<AnalyticBackend>(lib);
  return std::make_unique<LearnedBackend>(ToyBackendWeights::from_json(read_file(weights_path)));
}

PipelineConfig ExperimentConfig::pipeline() const {
  PipelineConfig p;
  p.method = method_from_name(method);
  p.t_star_index = t_star_index;
  p.cutoff_index = cutoff_index;
  p.guidance_lr = guidance_lr;
  p.cfg_scale = cfg_scale;
  p.cov.kind = cov_kind_from(cov_kind);
  p.cov.block = cov_block;
  p.cov.per_channel = cov_per_channel;
  p.cov.frozen = cov_frozen;
  return p;
}

OptimConfig ExperimentConfig::optim() const {
  OptimConfig o = default_optim(schedule_kind == "vp" ? ScheduleKind::VpDiffusion
                                                      : ScheduleKind::LinearFlow);
  if (optim_steps >= 0) o.steps = optim_steps;
  if (optim_lr >= 0) o.lr = optim_lr;
  if (optim_momentum >= 0) o.momentum = optim_momentum;
  if (optim_batch >= 0) o.batch = optim_batch;
  o.rescale = optim_rescale;
  return o;
}

std::string apply_overrides(const std::string& json_text,
                            const std::vector<std::string>& overrides) {
  json j = json::parse(json_text);
  for (const std::string& ov : overrides) {
    size_t eq = ov.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("override needs key=value: " + ov);
    std::string key = ov.substr(0, eq), value = ov.substr(eq + 1);
    std::string ptr = "/" + key;
    for (char& c : ptr)
      if (c == '.') c = '/';
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;
    }
    j[json::json_pointer(ptr)] = parsed;
  }
  return j.dump();
}

int worker_count(int cells) {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SAGA_LAB_THREADS")) {
    n = std::atoi(env);
    if (n < 1) throw std::invalid_argument("SAGA_LAB_THREADS must be >= 1");
  }
  if (n < 1) n = 1;
  return std::min(n, std::max(cells, 1));
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  auto start = std::chrono::steady_clock::now();
  Schedule schedule = cfg.make_schedule();
  PrototypeLibrary lib = cfg.make_library();
  std::unique_ptr<Backend> backend = cfg.make_backend(lib);
  PipelineConfig pipe = cfg.pipeline();
  pipe.validate(schedule);
  OptimConfig optim = cfg.optim();

  std::vector<const PromptSpec*> prompt_list;
  if (!cfg.prompts.empty()) {
    for (const PromptSpec& p : cfg.prompts) prompt_list.push_back(&p);
  } else {
    for (const auto& [id, e] : lib.prompts) prompt_list.push_back(&e.prompt);
  }

  struct Cell {
    const PromptSpec* prompt;
    uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const PromptSpec* p : prompt_list)
    for (uint64_t s : cfg.seeds) cells.push_back({p, s});

  std::vector<std::vector<std::string>> lines(cells.size());
  std::atomic<size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto work = [&]() {
    for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
      try {
        auto recs = generate(*cells[i].prompt, schedule, *backend, optim, pipe, cfg.samples,
                             cells[i].seed);
        for (const auto& r : recs) lines[i].push_back(r.to_json());
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  int threads = worker_count(static_cast<int>(cells.size()));
  std::vector<std::thread> pool;
  for (int i = 0; i < threads; ++i) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  fs::create_directories(cfg.output_dir);
  std::string records_path = (fs::path(cfg.output_dir) / "records.jsonl").string();
  {
    std::ofstream out(records_path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + records_path);
    for (const auto& cell_lines : lines)
      for (const std::string& line : cell_lines) out << line << "\n";
    if (!out) throw std::runtime_error("write failed on " + records_path);
  }
  {
    std::ofstream out(fs::path(cfg.output_dir) / "library.json", std::ios::binary | std::ios::trunc);
    out << lib.to_json();
  }
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json meta = {{"schema", 1},
               {"config_hash", hash_hex(cfg.hash())},
               {"threads", threads},
               {"wall_seconds", wall}};
  {
    std::ofstream out(fs::path(cfg.output_dir) / "metadata.json", std::ios::binary | std::ios::trunc);
    out << meta.dump(2) << "\n";
  }

  RunResult res;
  res.cells = static_cast<int>(cells.size());
  for (const auto& cell_lines : lines) res.records += static_cast<int>(cell_lines.size());
  res.records_path = records_path;
  return res;
}

SweepAxis parse_sweep_axis(const std::string& spec) {
  size_t eq = spec.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("sweep axis needs key=lo:hi[:step]: " + spec);
  SweepAxis axis;
  axis.key = spec.substr(0, eq);
  std::string rest = spec.substr(eq + 1);
  std::vector<double> parts;
  std::stringstream ss(rest);
  std::string tok;
  while (std::getline(ss, tok, ':')) {
    size_t used = 0;
    double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument("bad sweep number \"" + tok + "\" in " + spec);
    parts.push_back(v);
  }
  if (parts.size() != 2 && parts.size() != 3)
    throw std::invalid_argument("sweep axis needs key=lo:hi[:step]: " + spec);
  double lo = parts[0], hi = parts[1], step = parts.size() == 3 ? parts[2] : 1.0;
  if (step <= 0 || hi < lo) throw std::invalid_argument("bad sweep range in " + spec);
  for (double v = lo; v <= hi + 1e-9 * std::max(1.0, std::abs(hi)); v += step)
    axis.values.push_back(v);
  return axis;
}

namespace {

void apply_axis(ExperimentConfig& cfg, const std::string& key, double value) {
  if (key == "momentum") cfg.optim_momentum = value;
  else if (key == "lr") cfg.optim_lr = value;
  else if (key == "steps") cfg.optim_steps = static_cast<int>(std::lround(value));
  else if (key == "batch") cfg.optim_batch = static_cast<int>(std::lround(value));
  else if (key == "step-index") cfg.t_star_index = static_cast<int>(std::lround(value));
  else if (key == "cutoff-index") cfg.cutoff_index = static_cast<int>(std::lround(value));
  else if (key == "guidance-lr") cfg.guidance_lr = value;
  else if (key == "cfg-scale") cfg.cfg_scale = value;
  else throw std::invalid_argument("unknown sweep key \"" + key + "\"");
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& base, const std::vector<SweepAxis>& axes) {
  if (axes.empty()) throw std::invalid_argument("sweep needs at least one --grid axis");
  base.validate();
  fs::create_directories(base.output_dir);
  std::string log_path = (fs::path(base.output_dir) / "sweep.jsonl").string();

  std::set<std::string> done;
  if (fs::exists(log_path)) {
    std::ifstream in(log_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      done.insert(json::parse(line).at("hash").get<std::string>());
    }
  }

  std::vector<std::vector<double>> cells{{}};
  for (const SweepAxis& axis : axes) {
    std::vector<std::vector<double>> grown;
    for (const auto& cell : cells)
      for (double v : axis.values) {
        auto c = cell;
        c.push_back(v);
        grown.push_back(std::move(c));
      }
    cells = std::move(grown);
  }

  SweepResult res;
  res.total_cells = static_cast<int>(cells.size());
  res.summary_path = (fs::path(base.output_dir) / "sweep.csv").string();

  for (const auto& cell : cells) {
    ExperimentConfig cfg = base;
    for (size_t i = 0; i < axes.size(); ++i) apply_axis(cfg, axes[i].key, cell[i]);
    std::string cell_hash = hash_hex(cfg.hash());
    cfg.output_dir = (fs::path(base.output_dir) / "cells" / cell_hash).string();
    if (done.count(cell_hash)) {
      ++res.skipped;
      continue;
    }
    RunResult run = run_experiment(cfg);

    PrototypeLibrary lib = cfg.make_library();
    std::vector<GenerationRecord> records;
    std::ifstream in(run.records_path);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) records.push_back(GenerationRecord::from_json(line));
    double tiam = tiam_score(records, lib);

    json row;
    row["hash"] = cell_hash;
    for (size_t i = 0; i < axes.size(); ++i) row["params"][axes[i].key] = cell[i];
    row["records"] = run.records;
    row["tiam"] = tiam;
    append_line(log_path, row.dump());
    done.insert(cell_hash);
    ++res.executed;
  }

  // regenerate the CSV from the full log so resumed sweeps stay complete
  std::map<std::string, json> rows;  // hash -> row, insertion-order independent
  {
    std::ifstream in(log_path);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) {
        json row = json::parse(line);
        rows[row.at("hash").get<std::string>()] = row;
      }
  }
  std::ofstream csv(res.summary_path, std::ios::binary | std::ios::trunc);
  csv << "hash";
  for (const SweepAxis& axis : axes) csv << "," << axis.key;
  csv << ",records,tiam\n";
  for (const auto& [h, row] : rows) {
    csv << h;
    for (const SweepAxis& axis : axes) csv << "," << row.at("params").at(axis.key).dump();
    csv << "," << row.at("records").get<int>() << "," << row.at("tiam").get<double>() << "\n";
  }
  return res;
}

std::string write_report(const std::string& run_dir) {
  std::string records_path = (fs::path(run_dir) / "records.jsonl").string();
  std::string library_path = (fs::path(run_dir) / "library.json").string();
  if (!fs::exists(records_path)) throw std::invalid_argument("no records.jsonl in " + run_dir);
  if (!fs::exists(library_path)) throw std::invalid_argument("no library.json in " + run_dir);
  PrototypeLibrary lib = PrototypeLibrary::from_json(read_file(library_path));

  std::vector<GenerationRecord> records;
  {
    std::ifstream in(records_path);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) records.push_back(GenerationRecord::from_json(line));
  }
  if (records.empty()) throw std::invalid_argument("records.jsonl in " + run_dir + " is empty");

  // method x entity-count buckets
  std::map<std::pair<std::string, int>, std::vector<GenerationRecord>> buckets;
  for (auto& r : records) {
    int n = static_cast<int>(lib.entry(r.prompt_id).prompt.entities.size());
    buckets[{r.method, n}].push_back(r);
  }

  std::string csv_path = (fs::path(run_dir) / "summary.csv").string();
  std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  csv << "method,entities,records,tiam,box_alignment,diversity,saturation_std\n";
  for (const auto& [key, recs] : buckets) {
    csv << key.first << "," << key.second << "," << recs.size() << "," << tiam_score(recs, lib);

    std::vector<GenerationRecord> boxed;
    for (const auto& r : recs)
      if (!lib.entry(r.prompt_id).prompt.boxes.empty()) boxed.push_back(r);
    csv << ",";
    if (!boxed.empty()) csv << box_alignment(boxed, lib);

    std::map<std::string, std::vector<GenerationRecord>> by_prompt;
    for (const auto& r : recs) by_prompt[r.prompt_id].push_back(r);
    double div_acc = 0.0;
    int div_groups = 0;
    for (const auto& [pid, group] : by_prompt)
      if (group.size() >= 2) {
        div_acc += layout_diversity(group, lib).mean_distance;
        ++div_groups;
      }
    csv << ",";
    if (div_groups > 0) csv << div_acc / div_groups;

    double sat_acc = 0.0;
    for (const auto& r : recs) sat_acc += saturation_stats(r.z0, 1.0).std;
    csv << "," << sat_acc / recs.size() << "\n";
  }
  csv.flush();
  if (!csv) throw std::runtime_error("write failed on " + csv_path);
  return csv_path;
}

void emit_image(const Tensor& z0, double sigma_ref, const std::string& path) {
  if (!(sigma_ref > 0)) throw std::invalid_argument("sigma_ref must be positive");
  if (z0.ndim() != 3 || z0.shape()[0] < 3)
    throw std::invalid_argument("image emission needs a latent with >= 3 channels");
  int64_t H = z0.shape()[1], W = z0.shape()[2];
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P6\n" << W << " " << H << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(W) * 3);
  for (int64_t i = 0; i < H; ++i) {
    for (int64_t j = 0; j < W; ++j)
      for (int64_t c = 0; c < 3; ++c) {
        double v = z0[(c * H + i) * W + j];
        double scaled = (v + 3.0 * sigma_ref) / (6.0 * sigma_ref) * 255.0;
        long q = std::lround(std::min(255.0, std::max(0.0, scaled)));
        row[static_cast<size_t>(j) * 3 + c] = static_cast<unsigned char>(q);
      }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed on " + path);
}

}  // namespace saga
