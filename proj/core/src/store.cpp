// Copyright (c) 2026 The krl Authors
// SPDX-License-Identifier: Apache-2.0

#include "krl/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <ctime>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include <fmt/format.h>

#include "krl/errors.hpp"

namespace krl {
namespace fs = std::filesystem;
namespace {

constexpr const char* kConfigFile = "config.json";
constexpr const char* kTurnsFile = "turns.jsonl";
constexpr const char* kStatsFile = "stats.jsonl";

int open_append(const fs::path& path) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) {
    throw std::runtime_error(fmt::format("cannot open {}: {}", path.string(), std::strerror(errno)));
  }
  return fd;
}

void write_all(int fd, std::string_view data, const fs::path& path) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(
          fmt::format("write to {} failed: {}", path.string(), std::strerror(errno)));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

// One complete line per call on an O_APPEND descriptor.
void append_line(const fs::path& path, int fd, const std::string& line) {
  std::string buf = line;
  buf += '\n';
  write_all(fd, buf, path);
}

void append_line(const fs::path& path, const std::string& line) {
  const int fd = open_append(path);
  try {
    append_line(path, fd, line);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", tm.tm_year + 1900, tm.tm_mon + 1,
                     tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
}

nlohmann::ordered_json eval_json(const EvalResult& eval) {
  nlohmann::ordered_json e;
  e["status"] = std::string(to_string(eval.status));
  e["runtime_ms"] = eval.runtime_ms ? nlohmann::ordered_json(*eval.runtime_ms) : nlohmann::ordered_json();
  e["baseline_ms"] = eval.baseline_ms;
  e["error_message"] = eval.error_message;
  return e;
}

nlohmann::ordered_json row_json(const TurnRow& row) {
  nlohmann::ordered_json j;
  j["run_id"] = row.run_id;
  j["step"] = row.step;
  j["task_id"] = row.task_id;
  j["trajectory_index"] = row.trajectory_index;
  j["turn_index"] = row.turn_index;
  j["kernel_source"] = row.kernel_source;
  j["cot_summary"] = row.cot_summary;
  j["eval"] = eval_json(row.eval);
  j["score"] = row.score;
  j["aggregated_reward"] = row.aggregated_reward;
  j["advantage"] = row.advantage;
  j["response_tokens"] = row.response_tokens;
  j["truncated"] = row.truncated;
  return j;
}

}  // namespace

nlohmann::json to_json(const TurnRow& row) { return nlohmann::json::parse(serialize_row(row)); }

std::string serialize_row(const TurnRow& row) { return row_json(row).dump(); }

TurnRow turn_row_from_json(const nlohmann::json& doc) {
  TurnRow row;
  try {
    row.run_id = doc.at("run_id").get<std::string>();
    row.step = doc.at("step").get<std::uint64_t>();
    row.task_id = doc.at("task_id").get<std::string>();
    row.trajectory_index = doc.at("trajectory_index").get<int>();
    row.turn_index = doc.at("turn_index").get<int>();
    row.kernel_source = doc.at("kernel_source").get<std::string>();
    row.cot_summary = doc.at("cot_summary").get<std::string>();
    const auto& e = doc.at("eval");
    row.eval.status = parse_eval_status(e.at("status").get<std::string>());
    if (!e.at("runtime_ms").is_null()) row.eval.runtime_ms = e["runtime_ms"].get<double>();
    row.eval.baseline_ms = e.at("baseline_ms").get<double>();
    row.eval.error_message = e.at("error_message").get<std::string>();
    row.score = doc.at("score").get<double>();
    row.aggregated_reward = doc.at("aggregated_reward").get<double>();
    row.advantage = doc.at("advantage").get<double>();
    row.response_tokens = doc.at("response_tokens").get<int>();
    row.truncated = doc.at("truncated").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(fmt::format("malformed turn row: {}", e.what()));
  }
  return row;
}

TurnRow make_turn_row(const std::string& run_id, std::uint64_t step, const TrainingSample& s) {
  TurnRow row;
  row.run_id = run_id;
  row.step = step;
  row.task_id = s.task_id;
  row.trajectory_index = s.trajectory_index;
  row.turn_index = s.turn_index;
  row.kernel_source = s.kernel_source;
  row.cot_summary = s.cot_summary;
  row.eval = s.eval;
  row.score = s.score;
  row.aggregated_reward = s.aggregated_reward;
  row.advantage = s.advantage;
  row.response_tokens = s.generation.response_tokens;
  row.truncated = s.generation.truncated;
  return row;
}

nlohmann::json to_json(const StepStats& stats, std::uint64_t step) {
  return {{"step", step},
          {"samples", stats.samples},
          {"mean_reward", stats.mean_reward},
          {"correct_rate", stats.correct_rate},
          {"not_okay_ratio", stats.not_okay_ratio},
          {"clipping_ratio", stats.clipping_ratio}};
}

std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string data = buffer.str();
  std::size_t pos = 0;
  while (pos < data.size()) {
    const std::size_t end = data.find('\n', pos);
    if (end == std::string::npos) break;  // torn tail
    if (end > pos) out.push_back(nlohmann::json::parse(data.substr(pos, end - pos)));
    pos = end + 1;
  }
  return out;
}

RunStore::RunStore(fs::path dir, RunRecord record)
    : dir_(std::move(dir)), record_(std::move(record)) {}

RunStore::RunStore(RunStore&& other) noexcept
    : dir_(std::move(other.dir_)),
      record_(std::move(other.record_)),
      turns_fd_(std::exchange(other.turns_fd_, -1)),
      keys_(std::move(other.keys_)),
      mutex_(std::move(other.mutex_)) {}

RunStore& RunStore::operator=(RunStore&& other) noexcept {
  if (this != &other) {
    if (turns_fd_ >= 0) ::close(turns_fd_);
    dir_ = std::move(other.dir_);
    record_ = std::move(other.record_);
    turns_fd_ = std::exchange(other.turns_fd_, -1);
    keys_ = std::move(other.keys_);
    mutex_ = std::move(other.mutex_);
  }
  return *this;
}

RunStore::~RunStore() {
  if (turns_fd_ >= 0) ::close(turns_fd_);
}

RunStore RunStore::create(const fs::path& root, RunRecord record) {
  if (record.run_id.empty() || record.run_id.find('/') != std::string::npos) {
    throw ContractViolation(fmt::format("invalid run id '{}'", record.run_id));
  }
  const fs::path dir = root / record.run_id;
  fs::create_directories(root);
  std::error_code ec;
  if (!fs::create_directory(dir, ec)) {
    if (ec) throw std::runtime_error(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
    throw ConflictError(fmt::format("run '{}' already exists under {}", record.run_id, root.string()));
  }
  if (record.created_at.empty()) record.created_at = utc_now();
  nlohmann::ordered_json doc;
  doc["run_id"] = record.run_id;
  doc["created_at"] = record.created_at;
  doc["seed"] = record.seed;
  doc["config"] = record.config;
  {
    const fs::path tmp = dir / "config.json.tmp";
    std::ofstream out(tmp, std::ios::binary);
    out << doc.dump(2) << '\n';
    out.close();
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
    fs::rename(tmp, dir / kConfigFile);
  }
  RunStore store(dir, std::move(record));
  store.turns_fd_ = open_append(dir / kTurnsFile);
  return store;
}

RunStore RunStore::open(const fs::path& root, const std::string& run_id) {
  const fs::path dir = root / run_id;
  std::ifstream in(dir / kConfigFile, std::ios::binary);
  if (!in) throw NotFoundError(fmt::format("run '{}' not found under {}", run_id, root.string()));
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(fmt::format("run '{}' has a corrupt config: {}", run_id, e.what()));
  }
  RunRecord record;
  record.run_id = doc.value("run_id", run_id);
  record.created_at = doc.value("created_at", "");
  record.seed = doc.value("seed", std::uint64_t{0});
  record.config = doc.value("config", nlohmann::json::object());
  RunStore store(dir, std::move(record));
  store.load_keys();
  store.turns_fd_ = open_append(dir / kTurnsFile);
  return store;
}

void RunStore::load_keys() {
  for (const auto& doc : read_jsonl(dir_ / kTurnsFile)) keys_.insert(turn_row_from_json(doc).key());
}

void RunStore::append_turn(const TurnRow& row) {
  std::lock_guard lock(*mutex_);
  const auto key = row.key();
  if (keys_.contains(key)) {
    throw ConflictError(fmt::format("turn (step {}, task {}, trajectory {}, turn {}) already stored",
                                    row.step, row.task_id, row.trajectory_index, row.turn_index));
  }
  append_line(dir_ / kTurnsFile, turns_fd_, serialize_row(row));
  keys_.insert(key);
}

void RunStore::append_stats(const StepStats& stats, std::uint64_t step) {
  std::lock_guard lock(*mutex_);
  append_line(dir_ / kStatsFile, to_json(stats, step).dump());
}

void RunStore::append_cot(std::uint64_t step, const TrainingSample& sample) {
  if (!sample.generation.cot_full) return;
  std::lock_guard lock(*mutex_);
  const fs::path dir = dir_ / "cot";
  fs::create_directories(dir);
  nlohmann::ordered_json doc;
  doc["task_id"] = sample.task_id;
  doc["trajectory_index"] = sample.trajectory_index;
  doc["turn_index"] = sample.turn_index;
  doc["cot_full"] = *sample.generation.cot_full;
  append_line(dir / fmt::format("step_{}.jsonl", step), doc.dump());
}

std::vector<TurnRow> RunStore::scan(const ScanFilter& filter) const {
  std::vector<TurnRow> rows;
  for (const auto& doc : read_jsonl(dir_ / kTurnsFile)) {
    TurnRow row = turn_row_from_json(doc);
    if (filter.step && row.step != *filter.step) continue;
    if (filter.task_id && row.task_id != *filter.task_id) continue;
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const TurnRow& a, const TurnRow& b) { return a.key() < b.key(); });
  return rows;
}

std::vector<nlohmann::json> RunStore::stats() const { return read_jsonl(dir_ / kStatsFile); }

std::optional<std::uint64_t> RunStore::last_step() const {
  std::optional<std::uint64_t> last;
  for (const auto& doc : read_jsonl(dir_ / kTurnsFile)) {
    const auto step = doc.at("step").get<std::uint64_t>();
    if (!last || step > *last) last = step;
  }
  return last;
}

TaskTrajectories group_trajectories(const std::vector<TurnRow>& rows) {
  std::map<std::string, std::map<int, Trajectory>> grouped;
  for (const auto& row : rows) {
    Trajectory& t = grouped[row.task_id][row.trajectory_index];
    t.task_id = row.task_id;
    t.trajectory_index = row.trajectory_index;
    TurnRecord rec;
    rec.kernel_source = row.kernel_source;
    rec.cot_summary = row.cot_summary;
    rec.eval = row.eval;
    rec.turn_index = row.turn_index;
    t.turns.push_back(std::move(rec));
    t.generations.push_back({std::nullopt, row.response_tokens, row.truncated});
  }
  TaskTrajectories out;
  for (auto& [task, by_index] : grouped) {
    auto& list = out[task];
    for (auto& [_, traj] : by_index) {
      std::vector<std::size_t> order(traj.turns.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return traj.turns[a].turn_index < traj.turns[b].turn_index;
      });
      Trajectory sorted = traj;
      for (std::size_t i = 0; i < order.size(); ++i) {
        sorted.turns[i] = traj.turns[order[i]];
        sorted.generations[i] = traj.generations[order[i]];
      }
      list.push_back(std::move(sorted));
    }
  }
  return out;
}

}  // namespace krl
