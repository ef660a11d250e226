#include "coex/manager.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "coex/rl_math.hpp"
#include "coex/rng.hpp"
#include "coex/vec.hpp"

namespace coex {

using Clock = std::chrono::steady_clock;

namespace {

uint64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now().time_since_epoch())
      .count();
}

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

}  // namespace

// RAII lock scopes; the logged interval sits strictly inside the real hold.
class ExperienceManager::ReadScope {
 public:
  explicit ReadScope(const ExperienceManager& m) : m_(m) {
    m_.rw_.lock_shared();
    t0_ = now_ns();
  }
  ~ReadScope() {
    const uint64_t t1 = now_ns();
    m_.rw_.unlock_shared();
    m_.log_interval(false, t0_, t1);
  }

 private:
  const ExperienceManager& m_;
  uint64_t t0_;
};

class ExperienceManager::WriteScope {
 public:
  explicit WriteScope(const ExperienceManager& m) : m_(m) {
    m_.rw_.lock();
    t0_ = now_ns();
  }
  ~WriteScope() {
    const uint64_t t1 = now_ns();
    m_.rw_.unlock();
    m_.log_interval(true, t0_, t1);
  }

 private:
  const ExperienceManager& m_;
  uint64_t t0_;
};

ExperienceManager::ExperienceManager(std::shared_ptr<Embedder> embedder,
                                     std::shared_ptr<IExtractor> extractor, ManagerConfig config)
    : embedder_(std::move(embedder)),
      extractor_(std::move(extractor)),
      config_(config),
      cache_(config.cache_capacity),
      bank_(embedder_) {
  if (!extractor_) throw std::invalid_argument("manager requires an extractor");
  if (config_.batch_size == 0 || config_.search_workers == 0 || config_.candidate_sets == 0 ||
      config_.candidates_per_set == 0)
    throw std::invalid_argument("manager config: B, W, N, K must be positive");
  if (!config_.synchronous) {
    worker_queues_.reserve(config_.search_workers);
    for (size_t w = 0; w < config_.search_workers; ++w)
      worker_queues_.push_back(std::make_unique<WorkerQueue>());
    for (size_t w = 0; w < config_.search_workers; ++w)
      workers_.emplace_back([this, w] { worker_loop(w); });
    batcher_ = std::thread([this] { batcher_loop(); });
    consumer_ = std::thread([this] { consumer_loop(); });
  }
}

ExperienceManager::~ExperienceManager() { shutdown(); }

void ExperienceManager::log_interval(bool write, uint64_t t0, uint64_t t1) const {
  std::lock_guard<std::mutex> lk(log_mu_);
  lock_log_.push_back({write, t0, t1});
}

RetrievalResult ExperienceManager::search(const SearchQuery& query) {
  if (query.query_text.empty()) throw std::invalid_argument("search: empty query_text");

  auto pq = std::make_unique<PendingQuery>();
  pq->query = query;
  pq->enqueue_ts = Clock::now();
  std::future<RetrievalResult> fut = pq->promise.get_future();

  if (config_.synchronous) {
    Batch one;
    one.push_back(std::move(pq));
    process_batch(std::move(one));
    return fut.get();
  }

  {
    std::lock_guard<std::mutex> lk(batch_mu_);
    if (stop_.load()) throw std::runtime_error("search cancelled: manager shutdown");
    if (open_batch_.empty()) open_first_ts_ = Clock::now();
    open_batch_.push_back(std::move(pq));
    batch_cv_.notify_all();
  }
  return fut.get();
}

RetrievalResult ExperienceManager::search_and_ask(const SearchQuery& query) {
  SearchQuery q = query;
  q.kind = SearchQuery::Kind::search_and_ask;
  return search(q);
}

void ExperienceManager::batcher_loop() {
  std::unique_lock<std::mutex> lk(batch_mu_);
  while (true) {
    batch_cv_.wait(lk, [&] { return stop_.load() || !open_batch_.empty(); });
    if (stop_.load()) break;

    const auto deadline =
        open_first_ts_ + std::chrono::duration_cast<Clock::duration>(
                             std::chrono::duration<double>(config_.max_wait_s));
    while (!stop_.load() && open_batch_.size() < config_.batch_size) {
      if (batch_cv_.wait_until(lk, deadline) == std::cv_status::timeout) break;
    }
    if (stop_.load()) break;

    Batch batch = std::move(open_batch_);
    open_batch_.clear();
    lk.unlock();

    const size_t w = next_worker_++ % worker_queues_.size();
    {
      std::lock_guard<std::mutex> wlk(worker_queues_[w]->mu);
      worker_queues_[w]->batches.push_back(std::move(batch));
    }
    worker_queues_[w]->cv.notify_one();
    lk.lock();
  }
  for (auto& pq : open_batch_) {
    pq->promise.set_exception(
        std::make_exception_ptr(std::runtime_error("search cancelled: manager shutdown")));
  }
  open_batch_.clear();
}

void ExperienceManager::worker_loop(size_t worker_index) {
  WorkerQueue& wq = *worker_queues_[worker_index];
  while (true) {
    Batch batch;
    {
      std::unique_lock<std::mutex> lk(wq.mu);
      wq.cv.wait(lk, [&] { return stop_.load() || !wq.batches.empty(); });
      if (stop_.load()) {
        for (Batch& b : wq.batches)
          for (auto& pq : b)
            pq->promise.set_exception(std::make_exception_ptr(
                std::runtime_error("search cancelled: manager shutdown")));
        wq.batches.clear();
        return;
      }
      batch = std::move(wq.batches.front());
      wq.batches.pop_front();
    }
    process_batch(std::move(batch));
  }
}

ExperienceManager::ScoredWinner ExperienceManager::score_query(const EmbeddingVector& qvec) const {
  ScoredWinner winner;
  if (bank_.empty()) return winner;

  const auto entries = bank_.entries();  // id order
  const size_t n = entries.size();
  std::vector<double> sims(n);
  for (size_t i = 0; i < n; ++i)
    sims[i] = static_cast<double>(vec::dot(qvec, entries[i]->embedding));

  // Oversampled candidate pool: N top-K sets under distinct deterministic
  // jitter seeds (spread < 1e-6), deduplicated.
  const size_t topk = std::min(config_.candidates_per_set, n);
  std::vector<char> in_pool(n, 0);
  std::vector<size_t> idx(n);
  std::vector<double> jittered(n);
  for (size_t s = 0; s < config_.candidate_sets; ++s) {
    const uint64_t seed = mix64(config_.jitter_seed ^ mix64(0x5eedull + s));
    for (size_t i = 0; i < n; ++i) {
      const uint64_t h = mix64(seed ^ (entries[i]->id * 0x9e3779b97f4a7c15ull));
      jittered[i] = sims[i] + static_cast<double>(h >> 11) * (1.0 / (1ull << 53)) * 1e-7;
    }
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + topk, idx.end(),
                      [&](size_t a, size_t b) { return jittered[a] > jittered[b]; });
    for (size_t k = 0; k < topk; ++k) in_pool[idx[k]] = 1;
  }

  bool found = false;
  for (size_t i = 0; i < n; ++i) {
    if (!in_pool[i]) continue;
    const ExperienceEntry* e = entries[i];
    if (config_.acceptance_floor && sims[i] < *config_.acceptance_floor) continue;
    const bool recent = e->last_retrieved_step &&
                        (retrieval_events_ - *e->last_retrieved_step) < config_.recency_window;
    const double score =
        rl_math::diversification_score(sims[i], e->retrieval_count, recent, config_.lambda);
    // ties broken by lower entry id; entries are visited in id order
    if (!found || score > winner.score) {
      winner = {e->id, e->text, sims[i], score};
      found = true;
    }
  }
  return winner;
}

void ExperienceManager::process_batch(Batch batch) {
  const auto pickup = Clock::now();
  const size_t n = batch.size();

  // Embedding with batch-local coalescing: duplicate texts inside one batch
  // are served by a single embedder call and count as cache hits, since the
  // cache's job is avoiding embedder invocations.
  std::vector<EmbeddingVector> vecs(n);
  std::unordered_map<std::string, std::vector<size_t>> misses;
  uint64_t hits = 0;
  for (size_t i = 0; i < n; ++i) {
    const std::string& text = batch[i]->query.query_text;
    if (auto v = cache_.lookup(text)) {
      vecs[i] = std::move(*v);
      ++hits;
    } else {
      auto [it, fresh] = misses.try_emplace(text);
      if (!fresh) ++hits;
      it->second.push_back(i);
    }
  }
  if (!misses.empty()) {
    std::vector<std::string> texts;
    texts.reserve(misses.size());
    for (const auto& [text, slots] : misses) texts.push_back(text);
    auto embedded = embedder_->embed_batch(texts);
    for (size_t j = 0; j < texts.size(); ++j) {
      cache_.insert(texts[j], embedded[j]);
      for (size_t slot : misses[texts[j]]) vecs[slot] = embedded[j];
    }
  }

  // Scan under shared-read access.
  std::vector<ScoredWinner> winners(n);
  const auto scan_start = Clock::now();
  {
    ReadScope rs(*this);
    for (size_t i = 0; i < n; ++i) winners[i] = score_query(vecs[i]);
  }
  const double scan_ms = ms_between(scan_start, Clock::now());

  // One short exclusive-write touch for the whole batch's retrieval counters.
  {
    bool any = false;
    for (const auto& w : winners)
      if (w.id) any = true;
    if (any) {
      WriteScope ws(*this);
      for (const auto& w : winners) {
        if (!w.id) continue;
        if (bank_.find(*w.id)) {
          ++retrieval_events_;
          bank_.note_retrieved(*w.id, retrieval_events_);
          std::lock_guard<std::mutex> lk(log_mu_);
          JournalRecord rec;
          rec.kind = JournalRecord::Kind::bump;
          rec.id = *w.id;
          rec.event = retrieval_events_;
          journal_.push_back(std::move(rec));
        } else {
          std::lock_guard<std::mutex> lk(metrics_mu_);
          ++counters_.bump_misses;
        }
      }
    }
  }

  // Refinement for ask-kind queries happens outside any lock; the stored
  // entry is never mutated.
  uint64_t degraded = 0;
  for (size_t i = 0; i < n; ++i) {
    auto& q = batch[i]->query;
    if (q.kind != SearchQuery::Kind::search_and_ask || !winners[i].id) continue;
    try {
      winners[i].text = extractor_->refine(q.query_text, winners[i].text);
    } catch (const std::exception&) {
      ++degraded;  // fall back to the unrefined text
    }
  }

  const auto done = Clock::now();
  {
    std::lock_guard<std::mutex> lk(metrics_mu_);
    counters_.searches += n;
    counters_.cache_lookups += n;
    counters_.cache_hits += hits;
    counters_.degraded_refines += degraded;
    window_.cache_lookups += n;
    window_.cache_hits += hits;
    window_.scan_ms.push_back(scan_ms);
    for (size_t i = 0; i < n; ++i) {
      window_.wait_ms.push_back(ms_between(batch[i]->enqueue_ts, pickup));
      window_.total_ms.push_back(ms_between(batch[i]->enqueue_ts, done));
    }
  }

  for (size_t i = 0; i < n; ++i) {
    RetrievalResult res;
    res.entry_id = winners[i].id;
    res.text = winners[i].id ? winners[i].text : std::string();
    res.base_rank_score = winners[i].s_rank;
    res.final_score = winners[i].score;
    if (batch[i]->query.kind == SearchQuery::Kind::search_and_ask && winners[i].id) {
      res.refined = true;
    }
    batch[i]->promise.set_value(std::move(res));
  }
}

bool ExperienceManager::submit_distillation(DistillationRequest req) {
  if (config_.synchronous) {
    process_request(req);
    return true;
  }
  {
    std::lock_guard<std::mutex> lk(queue_mu_);
    if (stop_.load()) return false;
    if (queue_.size() >= config_.queue_capacity) {
      std::lock_guard<std::mutex> mlk(metrics_mu_);
      ++counters_.dropped_distillations;
      return false;
    }
    queue_.push_back(std::move(req));
  }
  queue_cv_.notify_one();
  return true;
}

void ExperienceManager::consumer_loop() {
  while (true) {
    DistillationRequest req;
    {
      std::unique_lock<std::mutex> lk(queue_mu_);
      queue_cv_.wait(lk, [&] { return stop_.load() || !queue_.empty(); });
      if (stop_.load()) break;
      req = std::move(queue_.front());
      queue_.pop_front();
      consumer_busy_ = true;
    }
    process_request(req);
    {
      std::lock_guard<std::mutex> lk(queue_mu_);
      consumer_busy_ = false;
    }
    drain_cv_.notify_all();
  }
}

void ExperienceManager::process_request(const DistillationRequest& req) {
  const BankOp op = extractor_->distill(req);  // pure; no lock held
  if (op.kind == BankOp::Kind::ret) {
    std::lock_guard<std::mutex> lk(metrics_mu_);
    ++counters_.applied_distillations;
    return;
  }
  {
    WriteScope ws(*this);
    apply_one_locked(op, req.enqueue_step);
  }
  std::lock_guard<std::mutex> lk(metrics_mu_);
  ++counters_.applied_distillations;
}

BankOpResult ExperienceManager::apply_one_locked(const BankOp& op, int64_t step) {
  BankOpResult res = bank_.apply_op(op, step);
  bool as_add = op.kind == BankOp::Kind::add;
  if (res.status == BankOpResult::Status::stale_target) {
    // Target merged away between retrieval and distillation: keep the
    // extractor's signal as a fresh entry instead of dropping it.
    BankOp add = BankOp::make_add(op.text, op.provenance);
    res = bank_.apply_op(add, step);
    as_add = true;
    std::lock_guard<std::mutex> lk(metrics_mu_);
    ++counters_.stale_updates_converted;
  }
  if (res.status == BankOpResult::Status::applied) {
    std::lock_guard<std::mutex> lk(log_mu_);
    JournalRecord rec;
    rec.kind = as_add ? JournalRecord::Kind::add : JournalRecord::Kind::update;
    rec.id = *res.id;
    rec.text = op.text;
    rec.provenance = op.provenance;
    rec.step = step;
    journal_.push_back(std::move(rec));
  }
  return res;
}

std::optional<MergeReport> ExperienceManager::trigger_merge(int64_t step, int64_t merge_interval) {
  if (merge_interval <= 0 || step <= 0 || step % merge_interval != 0) return std::nullopt;
  drain();
  MergeFn fn = [this](std::span<const ExperienceEntry> chunk,
                      std::span<const ExperienceEntry> carried) {
    return extractor_->merge_decide(chunk, carried);
  };
  WriteScope ws(*this);
  MergeReport report = bank_.merge_chunked(fn, config_.merge_chunk_size, config_.merge_text_cap);
  {
    std::lock_guard<std::mutex> lk(log_mu_);
    JournalRecord rec;
    rec.kind = JournalRecord::Kind::merge;
    rec.chunk_size = config_.merge_chunk_size;
    journal_.push_back(std::move(rec));
  }
  return report;
}

void ExperienceManager::drain() {
  if (config_.synchronous) return;
  std::unique_lock<std::mutex> lk(queue_mu_);
  drain_cv_.wait(lk, [&] { return stop_.load() || (queue_.empty() && !consumer_busy_); });
}

void ExperienceManager::shutdown() {
  bool expected = false;
  if (!stop_.compare_exchange_strong(expected, true)) return;
  batch_cv_.notify_all();
  queue_cv_.notify_all();
  drain_cv_.notify_all();
  for (auto& wq : worker_queues_) wq->cv.notify_all();
  if (batcher_.joinable()) batcher_.join();
  for (auto& w : workers_)
    if (w.joinable()) w.join();
  if (consumer_.joinable()) consumer_.join();
}

size_t ExperienceManager::bank_size() const {
  ReadScope rs(*this);
  return bank_.size();
}

std::optional<ExperienceEntry> ExperienceManager::find_entry(EntryId id) const {
  ReadScope rs(*this);
  const ExperienceEntry* e = bank_.find(id);
  if (!e) return std::nullopt;
  return *e;
}

std::vector<ExperienceEntry> ExperienceManager::bank_snapshot() const {
  ReadScope rs(*this);
  return bank_.snapshot();
}

void ExperienceManager::mark_trained(std::span<const EntryId> ids, int64_t step) {
  WriteScope ws(*this);
  for (EntryId id : ids) {
    if (!bank_.note_trained(id, step)) continue;
    std::lock_guard<std::mutex> lk(log_mu_);
    JournalRecord rec;
    rec.kind = JournalRecord::Kind::train;
    rec.id = id;
    rec.step = step;
    journal_.push_back(std::move(rec));
  }
}

std::vector<BankOpResult> ExperienceManager::apply_ops(std::span<const BankOp> ops, int64_t step) {
  std::vector<BankOpResult> out;
  out.reserve(ops.size());
  WriteScope ws(*this);
  for (const BankOp& op : ops) {
    if (op.kind == BankOp::Kind::ret) {
      out.push_back({BankOpResult::Status::noop, std::nullopt});
      continue;
    }
    out.push_back(apply_one_locked(op, step));
  }
  return out;
}

void ExperienceManager::persist_bank(const std::string& path) const {
  ReadScope rs(*this);
  bank_.persist(path);
}

ManagerCounters ExperienceManager::counters() const {
  std::lock_guard<std::mutex> lk(metrics_mu_);
  return counters_;
}

SearchLatencyWindow ExperienceManager::take_latency_window() {
  std::lock_guard<std::mutex> lk(metrics_mu_);
  SearchLatencyWindow out = std::move(window_);
  window_ = SearchLatencyWindow{};
  return out;
}

std::vector<LockInterval> ExperienceManager::lock_log() const {
  std::lock_guard<std::mutex> lk(log_mu_);
  return lock_log_;
}

std::vector<JournalRecord> ExperienceManager::journal_snapshot() const {
  std::lock_guard<std::mutex> lk(log_mu_);
  return journal_;
}

size_t ExperienceManager::queue_depth() const {
  std::lock_guard<std::mutex> lk(queue_mu_);
  return queue_.size();
}

}  // namespace coex
