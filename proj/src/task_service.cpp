#include "hail/task_service.hpp"

#include <algorithm>
#include <cstdio>

#include "httplib.h"

namespace hail {

using nlohmann::json;

namespace {

const char* kClassifyInstructions =
    "Label the micropost as event-related (1) or non event-related (0). Consider, for example, the "
    "following microposts in the context of Cyber attack events, both containing the keyword 'hack': "
    "'Credit firm Equifax says 143m Americans' social security numbers exposed in hack'. This micropost "
    "describes an instance of a cyber attack event that the target model should identify. This is, "
    "therefore, an event-instance related micropost and should be considered as a positive example. "
    "Contrast this with the following example: 'Companies need to step their cyber security up'. This "
    "micropost, though related to cyber security in general, does not mention an instance of a cyber "
    "attack event, and is of no interest to us for event detection. This is an example of a general "
    "event-category related micropost and should be considered as a negative example.";

const char* kPickInstructions =
    "First, find those microposts where the model predictions are deemed correct. Then, from those "
    "microposts, find the keyword that best indicates the class of the microposts as predicted by the model.";

std::string pad3(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

}  // namespace

std::string to_string(TaskKind k) { return k == TaskKind::kClassify ? "classify" : "keyword_pick"; }

std::string to_string(Phase p) {
  switch (p) {
    case Phase::kClassify: return "classify";
    case Phase::kInferring: return "inferring";
    case Phase::kKeywordPick: return "keyword_pick";
    case Phase::kFinished: return "finished";
    case Phase::kFailed: return "failed";
  }
  return "?";
}

json task_to_json(const Task& t) {
  json j;
  j["task_id"] = t.task_id;
  j["kind"] = to_string(t.kind);
  j["iteration"] = t.iteration;
  j["redundancy"] = t.redundancy;
  j["answers"] = t.answered_by.size();
  j["status"] = t.complete() ? "done" : "open";
  if (t.kind == TaskKind::kClassify) {
    const auto& it = t.items.at(0);
    j["keyword"] = t.keyword;
    j["micropost_id"] = it.micropost_id;
    j["text"] = it.text;
    j["tokens"] = it.tokens;
    j["instructions"] = kClassifyInstructions;
  } else {
    json items = json::array();
    for (const auto& it : t.items)
      items.push_back({{"micropost_id", it.micropost_id},
                       {"text", it.text},
                       {"tokens", it.tokens},
                       {"prediction", it.prediction},
                       {"predicted_class", it.predicted_class}});
    j["items"] = std::move(items);
    j["instructions"] = kPickInstructions;
  }
  return j;
}

Submission submission_from_json(const json& body) {
  if (!body.is_object()) throw ServiceError(400, "submission must be a JSON object");
  Submission s;
  try {
    s.task_id = body.at("task_id").get<std::string>();
    s.worker_id = body.at("worker_id").get<std::string>();
    if (body.contains("label")) s.label = body.at("label").get<int>();
    if (body.contains("correct_ids")) s.correct_ids = body.at("correct_ids").get<std::vector<std::string>>();
    if (body.contains("token")) s.token = body.at("token").get<std::string>();
  } catch (const json::exception& e) {
    throw ServiceError(400, std::string("malformed submission: ") + e.what());
  }
  return s;
}

json submission_to_json(const Submission& s) {
  json j = {{"task_id", s.task_id}, {"worker_id", s.worker_id}};
  if (s.label >= 0) j["label"] = s.label;
  if (!s.token.empty()) {
    j["correct_ids"] = s.correct_ids;
    j["token"] = s.token;
  }
  return j;
}

TaskService::TaskService(Config config, Corpus corpus, Vocabulary vocab, std::filesystem::path state_dir,
                         ServiceOptions options)
    : config_(std::move(config)),
      corpus_(std::move(corpus)),
      vocab_(std::move(vocab)),
      dir_(std::move(state_dir)),
      options_(options) {
  ctx_ = std::make_unique<LoopContext>(corpus_, vocab_, config_.loop);
  std::filesystem::create_directories(dir_);

  // The stored config pins the loop a journal belongs to.
  const auto cfg_path = dir_ / "config.json";
  json cfg = to_json(config_);
  if (std::filesystem::exists(cfg_path)) {
    std::ifstream in(cfg_path);
    json stored = json::parse(in, nullptr, false);
    if (stored.is_discarded()) throw ServiceError(500, "corrupt state directory: unreadable config.json");
    if (stored != cfg) throw ServiceError(500, "state directory " + dir_.string() + " belongs to a different config");
  } else {
    std::ofstream out(cfg_path);
    out << cfg.dump(2) << '\n';
  }

  std::vector<std::string> initial = config_.initial_keywords;
  if (initial.empty()) throw ServiceError(500, "the service needs loop.initial_keywords");
  state_ = init_loop_state(*ctx_, config_.loop, initial);

  std::lock_guard lock(mu_);
  start_iteration();

  const auto journal_path = dir_ / "submissions.jsonl";
  if (std::filesystem::exists(journal_path)) {
    replaying_ = true;
    std::ifstream in(journal_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json ev = json::parse(line, nullptr, false);
      if (ev.is_discarded() || !ev.is_object() || !ev.contains("type"))
        throw ServiceError(500, "corrupt journal at line " + std::to_string(lineno));
      try {
        if (ev["type"] == "submit") apply_submission(submission_from_json(ev["submission"]));
        else if (ev["type"] == "advance") apply_advance();
        else throw ServiceError(500, "unknown journal event");
      } catch (const ServiceError& e) {
        throw ServiceError(500, "journal line " + std::to_string(lineno) + " does not replay: " + e.what());
      }
    }
    replaying_ = false;
  }
  journal_.open(journal_path, std::ios::app);
  if (!journal_) throw ServiceError(500, "cannot open journal " + journal_path.string());
  write_snapshot();
}

TaskService::~TaskService() {
  if (worker_.joinable()) worker_.join();
}

// ---------------------------------------------------------------- phases

void TaskService::retire_tasks() {
  for (const auto& t : tasks_) retired_.insert(t.task_id);
  tasks_.clear();
}

void TaskService::start_iteration() {
  plan_ = plan_iteration(*ctx_, state_, config_.loop);
  retire_tasks();
  labels_.clear();
  picks_.clear();
  outcome_.reset();
  for (std::size_t k = 0; k < plan_.keywords.size(); ++k) {
    for (std::size_t i = 0; i < plan_.sample_ids[k].size(); ++i) {
      const auto& post = corpus_.unlabeled.at(ctx_->unlabeled_index.at(plan_.sample_ids[k][i]));
      Task t;
      t.task_id = "i" + std::to_string(plan_.iteration) + "-classify-" + plan_.keywords[k] + "-" + pad3(i);
      t.kind = TaskKind::kClassify;
      t.iteration = plan_.iteration;
      t.keyword = plan_.keywords[k];
      t.items.push_back({post.id, post.text, post.tokens, 0.0, 0});
      t.redundancy = std::max<std::size_t>(1, config_.loop.redundancy);
      tasks_.push_back(std::move(t));
    }
  }
  phase_ = Phase::kClassify;
}

void TaskService::close_classification() {
  std::vector<AnnotationMatrix> labels;
  for (std::size_t k = 0; k < plan_.keywords.size(); ++k) {
    AnnotationMatrix a;
    std::set<std::string> workers;
    for (const auto& t : tasks_)
      if (t.kind == TaskKind::kClassify && t.keyword == plan_.keywords[k])
        for (const auto& [w, l] : labels_[t.task_id]) workers.insert(w);
    a.worker_ids.assign(workers.begin(), workers.end());
    for (const auto& t : tasks_) {
      if (t.kind != TaskKind::kClassify || t.keyword != plan_.keywords[k]) continue;
      const auto& answers = labels_[t.task_id];
      if (answers.empty()) continue;
      const std::size_t item = a.item_ids.size();
      a.item_ids.push_back(t.items[0].micropost_id);
      for (const auto& [w, l] : answers) {
        const auto widx = static_cast<std::size_t>(
            std::lower_bound(a.worker_ids.begin(), a.worker_ids.end(), w) - a.worker_ids.begin());
        a.entries.push_back({item, widx, l});
      }
    }
    if (a.item_ids.empty())
      throw ServiceError(409, "no classification answers yet for keyword '" + plan_.keywords[k] + "'");
    a.normalize();
    labels.push_back(std::move(a));
  }
  phase_ = Phase::kInferring;
  if (replaying_ || !options_.async_inference) {
    run_inference(std::move(labels));
    return;
  }
  if (worker_.joinable()) worker_.join();
  worker_ = std::thread([this, labels = std::move(labels)]() mutable {
    std::unique_lock lock(mu_);
    // Inputs are copied under the lock; the heavy part runs without it.
    auto state = state_;
    auto plan = plan_;
    lock.unlock();
    try {
      auto outcome = infer_iteration(*ctx_, state, plan, std::move(labels), config_.loop);
      lock.lock();
      finish_inference(std::move(outcome));
    } catch (const std::exception& e) {
      if (!lock.owns_lock()) lock.lock();
      phase_ = Phase::kFailed;
      failure_ = e.what();
      write_snapshot();
    }
    idle_.notify_all();
  });
}

void TaskService::run_inference(std::vector<AnnotationMatrix> labels) {
  try {
    finish_inference(infer_iteration(*ctx_, state_, plan_, std::move(labels), config_.loop));
  } catch (const std::exception& e) {
    phase_ = Phase::kFailed;
    failure_ = e.what();
  }
}

void TaskService::finish_inference(InferenceOutcome outcome) {
  outcome_ = std::move(outcome);
  const auto& selected = outcome_->artifacts.selected;
  if (selected.empty()) {
    close_keyword_pick();
    return;
  }
  retire_tasks();
  const std::size_t group = std::max<std::size_t>(1, config_.loop.pick_group_size);
  for (std::size_t start = 0, n = 0; start < selected.size(); start += group, ++n) {
    Task t;
    t.task_id = "i" + std::to_string(plan_.iteration) + "-pick-" + pad3(n);
    t.kind = TaskKind::kKeywordPick;
    t.iteration = plan_.iteration;
    for (std::size_t i = start; i < std::min(selected.size(), start + group); ++i) {
      const auto& post = corpus_.unlabeled.at(selected[i].unlabeled_index);
      t.items.push_back({post.id, post.text, post.tokens, selected[i].prediction, selected[i].predicted});
    }
    t.redundancy = std::max<std::size_t>(1, config_.loop.pick_redundancy);
    tasks_.push_back(std::move(t));
  }
  phase_ = Phase::kKeywordPick;
  write_snapshot();
}

void TaskService::close_keyword_pick() {
  state_ = complete_iteration(*ctx_, std::move(*outcome_), picks_, config_.loop);
  outcome_.reset();
  if (!replaying_) write_iteration(dir_ / "run", state_);
  if (state_.finished) {
    phase_ = Phase::kFinished;
    retire_tasks();
    if (!replaying_) write_run_summary(dir_ / "run", state_);
  } else {
    start_iteration();
  }
  write_snapshot();
}

// ---------------------------------------------------------------- requests

Task* TaskService::find_task(const std::string& id) {
  for (auto& t : tasks_)
    if (t.task_id == id) return &t;
  return nullptr;
}

void TaskService::apply_submission(const Submission& s) {
  if (s.worker_id.empty()) throw ServiceError(400, "worker_id is required");
  if (phase_ != Phase::kClassify && phase_ != Phase::kKeywordPick)
    throw ServiceError(409, "no task accepts answers while the loop is " + to_string(phase_));
  Task* t = find_task(s.task_id);
  if (!t && retired_.count(s.task_id)) throw ServiceError(409, "task '" + s.task_id + "' is closed");
  if (!t) throw ServiceError(404, "unknown task '" + s.task_id + "'");
  if (std::find(t->answered_by.begin(), t->answered_by.end(), s.worker_id) != t->answered_by.end())
    throw ServiceError(409, "worker '" + s.worker_id + "' already answered task '" + s.task_id + "'");
  if (t->complete()) throw ServiceError(409, "task '" + s.task_id + "' is closed");

  if (t->kind == TaskKind::kClassify) {
    if (s.label != 0 && s.label != 1) throw ServiceError(400, "classify answers need label 0 or 1");
    labels_[t->task_id].emplace_back(s.worker_id, s.label);
  } else {
    if (s.correct_ids.empty()) throw ServiceError(400, "mark at least one micropost whose prediction looks correct");
    if (s.token.empty()) throw ServiceError(400, "token is required");
    bool found = false;
    for (const auto& id : s.correct_ids) {
      auto it = std::find_if(t->items.begin(), t->items.end(), [&](const TaskItem& x) { return x.micropost_id == id; });
      if (it == t->items.end()) throw ServiceError(400, "micropost '" + id + "' is not part of this task");
      if (std::find(it->tokens.begin(), it->tokens.end(), s.token) != it->tokens.end()) found = true;
    }
    if (!found) throw ServiceError(400, "token '" + s.token + "' does not occur in the marked microposts");
    picks_.push_back(s.token);
  }
  t->answered_by.push_back(s.worker_id);
  workers_.insert(s.worker_id);

  const bool done = std::all_of(tasks_.begin(), tasks_.end(), [](const Task& x) { return x.complete(); });
  if (!done) return;
  if (phase_ == Phase::kClassify) close_classification();
  else close_keyword_pick();
}

void TaskService::apply_advance() {
  if (phase_ == Phase::kClassify) close_classification();
  else if (phase_ == Phase::kKeywordPick) close_keyword_pick();
  else throw ServiceError(409, "cannot advance while the loop is " + to_string(phase_));
}

void TaskService::journal(const json& event) {
  journal_ << event.dump() << '\n';
  journal_.flush();
  if (!journal_) throw ServiceError(500, "journal write failed");
}

json TaskService::submit(const Submission& submission) {
  std::lock_guard lock(mu_);
  const int before = state_.iteration;
  const Phase phase_before = phase_;
  // apply_submission rejects before mutating anything, so only accepted
  // answers reach the journal.
  apply_submission(submission);
  journal({{"type", "submit"}, {"submission", submission_to_json(submission)}});
  json ack = status_locked();
  ack["accepted"] = true;
  ack["transition"] = phase_ != phase_before || state_.iteration != before;
  return ack;
}

json TaskService::advance() {
  std::lock_guard lock(mu_);
  apply_advance();
  journal({{"type", "advance"}});
  json ack = status_locked();
  ack["accepted"] = true;
  return ack;
}

std::optional<Task> TaskService::next_task_for(const std::string& worker_id) {
  if (worker_id.empty()) throw ServiceError(400, "worker is required");
  std::lock_guard lock(mu_);
  if (phase_ != Phase::kClassify && phase_ != Phase::kKeywordPick) return std::nullopt;
  for (const auto& t : tasks_) {
    if (t.complete()) continue;
    if (std::find(t.answered_by.begin(), t.answered_by.end(), worker_id) != t.answered_by.end()) continue;
    return t;
  }
  return std::nullopt;
}

json TaskService::next_task(const std::string& worker_id) {
  auto t = next_task_for(worker_id);
  std::lock_guard lock(mu_);
  json j = status_locked();
  j["task"] = t ? task_to_json(*t) : json(nullptr);
  return j;
}

json TaskService::status_locked() const {
  json j;
  j["iteration"] = phase_ == Phase::kFinished ? state_.iteration : plan_.iteration;
  j["completed_iterations"] = state_.iteration;
  j["phase"] = to_string(phase_);
  std::size_t done = 0, answers = 0, needed = 0;
  for (const auto& t : tasks_) {
    done += t.complete() ? 1 : 0;
    answers += std::min(t.answered_by.size(), t.redundancy);
    needed += t.redundancy;
  }
  j["tasks_done"] = done;
  j["tasks_total"] = tasks_.size();
  j["answers_done"] = answers;
  j["answers_needed"] = needed;
  j["workers"] = workers_.size();
  j["keywords"] = plan_.keywords;
  j["converged"] = state_.converged;
  j["finished"] = state_.finished;
  j["stop_reason"] = state_.stop_reason;
  if (phase_ == Phase::kFailed) j["error"] = failure_;
  // While picks are collected the inferred expectations are already known.
  const auto& shown = outcome_ ? outcome_->state : state_;
  json hist = json::array();
  for (const auto& h : shown.history)
    hist.push_back({{"iteration", h.iteration}, {"keyword", h.keyword}, {"expectation", h.expectation},
                    {"crowd_mean", h.crowd_mean}, {"model_mean", h.model_mean}, {"matched", h.matched}});
  j["history"] = std::move(hist);
  if (outcome_) {
    const auto& m = outcome_->metrics;
    j["latest_metrics"] = {{"iteration", m.iteration}, {"auc", m.auc}, {"accuracy", m.accuracy},
                           {"validation_auc", m.validation_auc}};
  } else if (state_.metrics.empty()) {
    j["latest_metrics"] = nullptr;
  } else {
    const auto& m = state_.metrics.back();
    j["latest_metrics"] = {{"iteration", m.iteration}, {"auc", m.auc}, {"accuracy", m.accuracy},
                           {"validation_auc", m.validation_auc}};
  }
  std::map<std::string, int> counts;
  for (const auto& p : picks_) ++counts[p];
  j["pick_counts"] = counts;
  return j;
}

json TaskService::status() const {
  std::lock_guard lock(mu_);
  return status_locked();
}

json TaskService::history() const {
  std::lock_guard lock(mu_);
  json rows = json::array();
  for (const auto& m : state_.metrics) {
    json kws = json::array();
    for (const auto& h : state_.history)
      if (h.iteration == m.iteration) kws.push_back({{"keyword", h.keyword}, {"expectation", h.expectation}});
    rows.push_back({{"iteration", m.iteration}, {"keywords", kws}, {"auc", m.auc}, {"accuracy", m.accuracy},
                    {"validation_auc", m.validation_auc}});
  }
  return {{"iterations", rows}, {"next_keywords", state_.next_keywords}};
}

void TaskService::write_snapshot() const {
  if (replaying_) return;
  const auto tmp = dir_ / "snapshot.json.tmp";
  {
    std::ofstream out(tmp);
    out << status_locked().dump(2) << '\n';
  }
  std::filesystem::rename(tmp, dir_ / "snapshot.json");
}

void TaskService::wait_idle() {
  std::unique_lock lock(mu_);
  idle_.wait(lock, [&] { return phase_ != Phase::kInferring; });
}

Phase TaskService::phase() const {
  std::lock_guard lock(mu_);
  return phase_;
}

LoopState TaskService::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

std::vector<Task> TaskService::tasks() const {
  std::lock_guard lock(mu_);
  return tasks_;
}

// ---------------------------------------------------------------- http

struct HttpFrontEnd::Impl {
  TaskService& service;
  httplib::Server server;
  explicit Impl(TaskService& s) : service(s) {}
};

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    reply(res, 200, f());
  } catch (const ServiceError& e) {
    reply(res, e.status(), {{"error", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", e.what()}});
  }
}

}  // namespace

HttpFrontEnd::HttpFrontEnd(TaskService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.Get("/status", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return svc.status(); });
  });
  srv.Get("/history", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return svc.history(); });
  });
  srv.Get("/task", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!req.has_param("worker")) throw ServiceError(400, "query parameter 'worker' is required");
      return svc.next_task(req.get_param_value("worker"));
    });
  });
  srv.Post("/submit", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded()) throw ServiceError(400, "request body is not JSON");
      return svc.submit(submission_from_json(body));
    });
  });
  srv.Post("/advance", [&svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return svc.advance(); });
  });
}

HttpFrontEnd::~HttpFrontEnd() { stop(); }

int HttpFrontEnd::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) bound = impl_->server.bind_to_any_port(host);
  else if (!impl_->server.bind_to_port(host, port)) bound = -1;
  if (bound < 0) throw ServiceError(500, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpFrontEnd::listen() { impl_->server.listen_after_bind(); }

void HttpFrontEnd::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace hail
