#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coex/embedding.hpp"
#include "coex/types.hpp"

namespace coex {

// One distilled experience with its embedding and bookkeeping counters.
struct ExperienceEntry {
  EntryId id = 0;
  std::string text;
  EmbeddingVector embedding;
  Provenance provenance;
  uint64_t retrieval_count = 0;
  std::optional<int64_t> last_retrieved_step;
  uint64_t training_count = 0;
  std::optional<int64_t> last_trained_step;
  int64_t created_step = 0;

  bool operator==(const ExperienceEntry&) const = default;
};

struct BankOp {
  enum class Kind { add, update, ret };
  Kind kind = Kind::ret;
  std::optional<EntryId> target_id;  // update only
  std::string text;                  // add/update payload
  Provenance provenance;             // add/update payload

  static BankOp make_add(std::string text, Provenance prov);
  static BankOp make_update(EntryId target, std::string text, Provenance prov);
  static BankOp make_return();
};

struct BankOpResult {
  enum class Status { applied, noop, stale_target };
  Status status = Status::noop;
  std::optional<EntryId> id;  // id touched by an applied add/update
};

struct MergeReport {
  size_t entries_before = 0;
  size_t entries_after = 0;
  size_t chunks_processed = 0;
};

// Chunk-wise merge decision function: receives the current chunk plus the
// carried-forward output of the previous chunk and returns the entries that
// survive. Survivors may carry rewritten text and absorbed counters.
using MergeFn = std::function<std::vector<ExperienceEntry>(
    std::span<const ExperienceEntry> chunk, std::span<const ExperienceEntry> carried)>;

// The store M of distilled experiences. Not internally synchronized: every
// access is mediated by the manager's one-writer-xor-many-readers contract.
class ExperienceBank {
 public:
  explicit ExperienceBank(std::shared_ptr<Embedder> embedder);

  // Applies one structured mutation. An update whose target no longer exists
  // reports stale_target and leaves the bank untouched; the caller decides
  // whether to convert it to an add.
  BankOpResult apply_op(const BankOp& op, int64_t step);

  // Sliding chunk-wise consolidation over the full bank. Each chunk plus the
  // carried output of the previous chunk goes through `merge_fn`; the final
  // carried set becomes the new bank. A merge output whose text exceeds
  // `text_cap` rejects that chunk's decision: the chunk is retained unmerged.
  MergeReport merge_chunked(const MergeFn& merge_fn, size_t chunk_size, size_t text_cap = 4096);

  // Retrieval bookkeeping: one exclusive-write touch per successful retrieval.
  // Returns false when the id no longer exists (merged away in between).
  bool note_retrieved(EntryId id, int64_t retrieval_event);
  bool note_trained(EntryId id, int64_t step);

  const ExperienceEntry* find(EntryId id) const;
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Iteration in id order.
  std::vector<const ExperienceEntry*> entries() const;
  std::vector<ExperienceEntry> snapshot() const;

  Embedder& embedder() const { return *embedder_; }

  // Line-delimited persistence: header record first, then one entry record
  // per line, embeddings as decimal arrays with 9 significant digits.
  void persist(const std::string& path) const;
  static ExperienceBank load(const std::string& path, std::shared_ptr<Embedder> embedder);
  static ExperienceBank from_snapshot(std::vector<ExperienceEntry> entries,
                                      std::shared_ptr<Embedder> embedder);

  bool deep_equal(const ExperienceBank& other) const;

 private:
  std::shared_ptr<Embedder> embedder_;
  std::map<EntryId, ExperienceEntry> entries_;  // ordered: scans are id-ordered
  EntryId next_id_ = 1;                         // ids are never reused
};

// Identity merge function: retains carried + chunk unchanged.
std::vector<ExperienceEntry> identity_merge(std::span<const ExperienceEntry> chunk,
                                            std::span<const ExperienceEntry> carried);

}  // namespace coex
