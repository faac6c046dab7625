#pragma once

#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "hail/config.hpp"
#include "hail/loop_engine.hpp"
#include "json.hpp"

namespace hail {

enum class TaskKind { kClassify, kKeywordPick };
enum class Phase { kClassify, kInferring, kKeywordPick, kFinished, kFailed };

std::string to_string(TaskKind k);
std::string to_string(Phase p);

struct TaskItem {
  std::string micropost_id;
  std::string text;
  std::vector<std::string> tokens;
  double prediction = 0.0;  // keyword_pick only
  int predicted_class = 0;
};

struct Task {
  std::string task_id;
  TaskKind kind = TaskKind::kClassify;
  int iteration = 0;
  std::string keyword;  // classify: the keyword the micropost was sampled for
  std::vector<TaskItem> items;  // one for classify
  std::size_t redundancy = 1;
  std::vector<std::string> answered_by;  // in submission order

  bool complete() const { return answered_by.size() >= redundancy; }
};

struct Submission {
  std::string task_id;
  std::string worker_id;
  int label = -1;                       // classify
  std::vector<std::string> correct_ids;  // keyword_pick: microposts whose prediction looks right
  std::string token;                     // keyword_pick
};

// Carries the HTTP status the endpoint should answer with.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct ServiceOptions {
  // Run inference on a background thread (status reports "inferring").
  // Replay at start-up is always synchronous.
  bool async_inference = true;
};

nlohmann::json task_to_json(const Task& task);
Submission submission_from_json(const nlohmann::json& body);
nlohmann::json submission_to_json(const Submission& s);

// The loop driven by human answers. Accepted submissions are appended to
// <state_dir>/submissions.jsonl before they are acknowledged; on start-up the
// journal is replayed, which rebuilds the same state because every step is
// deterministic. A status snapshot is rewritten after each phase change and
// completed iterations are written under <state_dir>/run.
class TaskService {
 public:
  TaskService(Config config, Corpus corpus, Vocabulary vocab, std::filesystem::path state_dir,
              ServiceOptions options = {});
  ~TaskService();
  TaskService(const TaskService&) = delete;
  TaskService& operator=(const TaskService&) = delete;

  nlohmann::json status() const;
  nlohmann::json history() const;
  // An open task this worker has not answered, or null with the phase status.
  nlohmann::json next_task(const std::string& worker_id);
  std::optional<Task> next_task_for(const std::string& worker_id);
  nlohmann::json submit(const Submission& submission);
  // Closes the current phase with the answers collected so far.
  nlohmann::json advance();

  // Blocks until no inference is running.
  void wait_idle();
  Phase phase() const;
  LoopState state() const;
  std::vector<Task> tasks() const;

 private:
  void apply_submission(const Submission& s);
  void apply_advance();
  void start_iteration();
  void close_classification();
  void run_inference(std::vector<AnnotationMatrix> labels);
  void finish_inference(InferenceOutcome outcome);
  void close_keyword_pick();
  void journal(const nlohmann::json& event);
  void write_snapshot() const;
  nlohmann::json status_locked() const;
  Task* find_task(const std::string& id);
  void retire_tasks();

  Config config_;
  Corpus corpus_;
  Vocabulary vocab_;
  std::filesystem::path dir_;
  ServiceOptions options_;
  std::unique_ptr<LoopContext> ctx_;

  mutable std::mutex mu_;
  std::condition_variable idle_;
  std::thread worker_;
  bool replaying_ = false;
  std::ofstream journal_;

  LoopState state_;
  Phase phase_ = Phase::kClassify;
  std::string failure_;
  IterationPlan plan_;
  std::optional<InferenceOutcome> outcome_;
  std::vector<Task> tasks_;
  std::set<std::string> retired_;  // ids of tasks from closed phases
  // classify answers: task id -> (worker, label)
  std::map<std::string, std::vector<std::pair<std::string, int>>> labels_;
  std::vector<std::string> picks_;
  std::set<std::string> workers_;
};

// HTTP front end: GET /status, GET /task?worker=ID, POST /submit,
// POST /advance, GET /history. Bodies are JSON objects.
class HttpFrontEnd {
 public:
  explicit HttpFrontEnd(TaskService& service);
  ~HttpFrontEnd();
  // Port 0 picks a free port; returns the bound port.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hail
