#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <thread>
#include <vector>

#include "coex/bank.hpp"
#include "coex/embedding.hpp"
#include "coex/extractor.hpp"
#include "coex/types.hpp"

namespace coex {

struct SearchQuery {
  enum class Kind { episode_start, search_and_ask };
  std::string query_text;
  int requester_id = 0;
  int64_t issued_step = 0;
  Kind kind = Kind::episode_start;
};

struct RetrievalResult {
  std::optional<EntryId> entry_id;  // none iff bank empty or everything below the floor
  std::string text;                 // possibly refined for search_and_ask
  double base_rank_score = 0.0;     // s_rank
  double final_score = 0.0;         // s(m)
  bool refined = false;
  bool refine_degraded = false;
};

struct ManagerConfig {
  size_t batch_size = 16;         // B: micro-batch dispatch size
  double max_wait_s = 0.001;      // t_max: dispatch deadline from a batch's first query
  size_t search_workers = 4;      // W
  size_t candidate_sets = 4;      // N oversampled candidate sets
  size_t candidates_per_set = 4;  // K entries per set
  double lambda = 0.3;            // retrieval-count penalty weight
  int64_t recency_window = 32;    // retrieval events
  std::optional<double> acceptance_floor;  // minimum s_rank, none by default
  size_t queue_capacity = 1024;
  size_t cache_capacity = 4096;
  size_t merge_chunk_size = 8;
  size_t merge_text_cap = 4096;
  uint64_t jitter_seed = 0;
  // Debug mode: no background threads; search and distillation run inline in
  // the calling thread, which makes whole runs bit-deterministic.
  bool synchronous = false;
};

// Lock instrumentation: every read/write hold of the bank lock is logged as a
// closed interval strictly inside the real hold, so interval disjointness is
// checkable after the fact.
struct LockInterval {
  bool write = false;
  uint64_t t0 = 0;
  uint64_t t1 = 0;
};

// Committed-write journal. Replaying the records serially onto a fresh bank
// must reproduce the concurrent end state exactly.
struct JournalRecord {
  enum class Kind { add, update, bump, train, merge };
  Kind kind = Kind::add;
  EntryId id = 0;        // add: assigned id; update/bump/train: target id
  std::string text;      // add/update payload
  Provenance provenance;  // add/update payload
  int64_t step = 0;      // add/update/train step
  int64_t event = 0;     // bump: retrieval event index
  size_t chunk_size = 0;  // merge
};

struct ManagerCounters {
  uint64_t searches = 0;
  uint64_t cache_hits = 0;
  uint64_t cache_lookups = 0;
  uint64_t dropped_distillations = 0;
  uint64_t applied_distillations = 0;
  uint64_t stale_updates_converted = 0;
  uint64_t degraded_refines = 0;
  uint64_t bump_misses = 0;
};

// Per-step latency window, milliseconds.
struct SearchLatencyWindow {
  std::vector<double> wait_ms;   // enqueue -> batch pickup
  std::vector<double> total_ms;  // enqueue -> result ready
  std::vector<double> scan_ms;   // read-lock hold per batch
  uint64_t cache_hits = 0;
  uint64_t cache_lookups = 0;
};

// The centralized coordinator: micro-batched diversified retrieval under
// shared-read access, queued distillation under exclusive-write access.
class ExperienceManager {
 public:
  ExperienceManager(std::shared_ptr<Embedder> embedder, std::shared_ptr<IExtractor> extractor,
                    ManagerConfig config);
  ~ExperienceManager();

  ExperienceManager(const ExperienceManager&) = delete;
  ExperienceManager& operator=(const ExperienceManager&) = delete;

  // Blocks until the query's micro-batch is served (at most t_max plus one
  // scan). Empty bank yields entry_id none. Throws std::runtime_error if the
  // manager shuts down while the query waits.
  RetrievalResult search(const SearchQuery& query);

  // search + extractor refinement of the winning text; the stored entry is
  // not mutated. Refine failures fall back to the unrefined text.
  RetrievalResult search_and_ask(const SearchQuery& query);

  // Non-blocking enqueue; false when the queue is at capacity (the request is
  // dropped and counted).
  bool submit_distillation(DistillationRequest req);

  // Runs the chunk-wise merge when `step` is a positive multiple of
  // `merge_interval`, after draining in-flight distillations.
  std::optional<MergeReport> trigger_merge(int64_t step, int64_t merge_interval);

  // Wait until the distillation queue is empty and the consumer is idle.
  void drain();
  void shutdown();

  // Bank access (internally takes the appropriate lock).
  size_t bank_size() const;
  std::optional<ExperienceEntry> find_entry(EntryId id) const;
  std::vector<ExperienceEntry> bank_snapshot() const;
  void mark_trained(std::span<const EntryId> ids, int64_t step);
  // Direct seeded writes (tests, setup). Journaled like any other write.
  std::vector<BankOpResult> apply_ops(std::span<const BankOp> ops, int64_t step);
  void persist_bank(const std::string& path) const;

  ManagerCounters counters() const;
  SearchLatencyWindow take_latency_window();
  std::vector<LockInterval> lock_log() const;
  std::vector<JournalRecord> journal_snapshot() const;
  size_t queue_depth() const;
  const ManagerConfig& config() const { return config_; }

 private:
  class ReadScope;
  class WriteScope;

  struct PendingQuery {
    SearchQuery query;
    std::chrono::steady_clock::time_point enqueue_ts;
    std::promise<RetrievalResult> promise;
  };
  using Batch = std::vector<std::unique_ptr<PendingQuery>>;

  void batcher_loop();
  void worker_loop(size_t worker_index);
  void consumer_loop();
  void process_batch(Batch batch);
  void process_request(const DistillationRequest& req);
  BankOpResult apply_one_locked(const BankOp& op, int64_t step);

  struct ScoredWinner {
    std::optional<EntryId> id;
    std::string text;
    double s_rank = 0.0;
    double score = 0.0;
  };
  // Scores one embedded query against the bank. Caller holds the read lock.
  ScoredWinner score_query(const EmbeddingVector& qvec) const;

  std::shared_ptr<Embedder> embedder_;
  std::shared_ptr<IExtractor> extractor_;
  ManagerConfig config_;
  EmbeddingCache cache_;
  ExperienceBank bank_;

  // one writer XOR many readers over bank_ and retrieval_events_
  mutable std::shared_mutex rw_;
  int64_t retrieval_events_ = 0;

  // lock instrumentation + write journal
  mutable std::mutex log_mu_;
  mutable std::vector<LockInterval> lock_log_;
  std::vector<JournalRecord> journal_;
  void log_interval(bool write, uint64_t t0, uint64_t t1) const;

  // micro-batching
  std::mutex batch_mu_;
  std::condition_variable batch_cv_;
  Batch open_batch_;
  std::chrono::steady_clock::time_point open_first_ts_;
  std::thread batcher_;

  // search workers, round-robin
  struct WorkerQueue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Batch> batches;
  };
  std::vector<std::unique_ptr<WorkerQueue>> worker_queues_;
  std::vector<std::thread> workers_;
  size_t next_worker_ = 0;

  // distillation queue
  mutable std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::condition_variable drain_cv_;
  std::deque<DistillationRequest> queue_;
  bool consumer_busy_ = false;
  std::thread consumer_;

  std::atomic<bool> stop_{false};

  // counters
  mutable std::mutex metrics_mu_;
  ManagerCounters counters_;
  SearchLatencyWindow window_;
};

}  // namespace coex
