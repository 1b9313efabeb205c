#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "savanna/languages.hpp"
#include "savanna/textnorm.hpp"

namespace savanna::corpus {

enum class Source {
  web,
  book_ocr,
  radio_transcript,
  dictionary,
  community,
  parallel,
  bible,
  synthetic_bt,
};

std::string_view to_string(Source s);
Source source_from_string(std::string_view s);

/// Where a synthetic back-translated document came from.
struct Provenance {
  std::string source_doc_id;
  std::string client;
  std::string timestamp;

  bool operator==(const Provenance&) const = default;
};

struct CorpusDocument {
  std::string id;
  LangCode lang;
  std::string text;
  Source source = Source::web;
  std::string license_note;
  std::size_t char_count = 0;
  std::optional<Provenance> provenance;  // set iff source == synthetic_bt

  bool operator==(const CorpusDocument&) const = default;
};

/// Builds a document with a content-derived id and an exact scalar count.
CorpusDocument make_document(LangCode lang, std::string text, Source source,
                             std::string license_note = {});

nlohmann::json to_json(const CorpusDocument& doc);
/// Accepts records without id/char_count and fills them in.
CorpusDocument document_from_json(const nlohmann::json& j);

std::vector<CorpusDocument> read_documents(const std::filesystem::path& path);
void write_documents(const std::filesystem::path& path, std::span<const CorpusDocument> docs);

// ---------------------------------------------------------------- cleaning

struct CleanTotals {
  std::size_t docs_in = 0;
  std::size_t docs_out = 0;  // documents still non-empty after cleaning
  textnorm::CleanReport report;
};

/// Runs textnorm::clean_document on every document (OpenMP-parallel) and
/// drops those left empty. Order is preserved.
std::vector<CorpusDocument> clean_documents(std::span<const CorpusDocument> docs,
                                            const textnorm::NormProfile& profile,
                                            CleanTotals* totals = nullptr);

// ------------------------------------------------------------------- dedup

struct DedupStats {
  std::size_t docs_in = 0;
  std::size_t docs_out = 0;
  std::size_t exact_duplicates = 0;
  std::size_t paragraphs_removed = 0;
  std::size_t chars_in = 0;
  std::size_t chars_out = 0;

  bool operator==(const DedupStats&) const = default;
};

/// Blank-line separated paragraphs, each trimmed of surrounding blank lines.
std::vector<std::string_view> split_paragraphs(std::string_view text);

/// Streaming exact deduplicator. Documents are accepted in order; a
/// document whose whole text was seen before is dropped, and every
/// paragraph seen before (in any earlier document, or earlier in the same
/// document) is removed. Documents left with no paragraphs are dropped.
class Deduplicator {
 public:
  struct Hashes {
    std::uint64_t document = 0;
    std::vector<std::uint64_t> paragraphs;
  };

  static Hashes hash(const CorpusDocument& doc);

  std::optional<CorpusDocument> push(CorpusDocument doc);
  /// Same as push() with precomputed hashes (lets hashing run in parallel).
  std::optional<CorpusDocument> push(CorpusDocument doc, const Hashes& hashes);

  const DedupStats& stats() const noexcept { return stats_; }

 private:
  std::unordered_set<std::uint64_t> documents_;
  std::unordered_set<std::uint64_t> paragraphs_;
  DedupStats stats_;
};

/// Hashes in parallel, then runs the serialized set stage.
std::vector<CorpusDocument> dedup(std::span<const CorpusDocument> docs, DedupStats* stats = nullptr);
/// Single-threaded reference; must produce identical output to dedup().
std::vector<CorpusDocument> dedup_serial(std::span<const CorpusDocument> docs,
                                         DedupStats* stats = nullptr);

// ----------------------------------------------------------- bible align

struct VerseRef {
  std::string book;  // canonical book code, e.g. "GEN"
  int chapter = 1;
  int verse = 1;

  std::string str() const;
  auto operator<=>(const VerseRef&) const = default;
};

/// Canonical 66-book table with aliases (case-insensitive lookup).
class BookTable {
 public:
  /// TSV: code<TAB>name<TAB>comma-separated aliases.
  static BookTable load(const std::filesystem::path& path);
  static BookTable parse(std::string_view tsv);

  /// Throws Error("unknown_book").
  const std::string& canonical(std::string_view name) const;
  std::size_t size() const noexcept { return codes_.size(); }

 private:
  std::vector<std::string> codes_;
  std::map<std::string, std::string> lookup_;
};

struct BibleEdition {
  LangCode lang;
  std::vector<std::pair<VerseRef, std::string>> verses;
};

/// Parses `book<TAB>chapter<TAB>verse<TAB>text`; book names are canonicalized.
BibleEdition parse_bible_tsv(std::string_view tsv, LangCode lang, const BookTable& books);
BibleEdition load_bible_tsv(const std::filesystem::path& path, LangCode lang, const BookTable& books);

struct ParallelPair {
  LangCode src_lang;
  LangCode tgt_lang;
  std::string src_text;
  std::string tgt_text;
  Source origin = Source::parallel;
  std::optional<std::string> doc_id;

  bool operator==(const ParallelPair&) const = default;
};

nlohmann::json to_json(const ParallelPair& p);
ParallelPair pair_from_json(const nlohmann::json& j);

struct AlignmentResult {
  std::vector<ParallelPair> pairs;      // ordered by VerseRef
  std::vector<VerseRef> only_in_a;
  std::vector<VerseRef> only_in_b;
  std::vector<VerseRef> empty_side;     // shared key, blank text on a side
};

/// Pairs every verse present with non-empty text in both editions.
/// Throws Error("duplicate_verse") naming the key on duplicates.
AlignmentResult align_bibles(const BibleEdition& a, const BibleEdition& b);

// ------------------------------------------------------ back-translation

/// Machine-translation service used for back-translation. Implementations
/// must be safe to call from several threads at once.
class MtClient {
 public:
  virtual ~MtClient() = default;
  virtual std::string identity() const = 0;
  /// Throws on transport failure.
  virtual std::string translate(const std::string& text, const LangCode& source,
                                const LangCode& target) = 0;
};

/// POST {base_url}/translate {"text","source","target"} -> {"translation"}.
class HttpMtClient : public MtClient {
 public:
  explicit HttpMtClient(std::string base_url, std::string path = "/translate",
                        std::chrono::seconds timeout = std::chrono::seconds(60));
  std::string identity() const override;
  std::string translate(const std::string& text, const LangCode& source,
                        const LangCode& target) override;

 private:
  std::string base_url_;
  std::string path_;
  std::chrono::seconds timeout_;
};

struct BacktranslateOptions {
  std::size_t max_parallel = 4;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::string timestamp;  // recorded in provenance; defaults to now (UTC)
};

struct BacktranslationError {
  std::string source_doc_id;
  std::string message;
  int attempts = 0;
};

struct BacktranslationResult {
  std::vector<CorpusDocument> documents;  // input order, failures skipped
  std::vector<BacktranslationError> errors;
};

BacktranslationResult backtranslate(std::span<const CorpusDocument> english_docs,
                                    const LangCode& target, MtClient& client,
                                    const BacktranslateOptions& options = {});

// --------------------------------------------------------------- mixture

struct MixtureSpec {
  std::map<Source, double> source_weights;           // missing -> 1.0
  std::map<std::string, double> language_weights;    // missing -> 1.0
  bool include_instruction_replay = false;
  std::optional<std::size_t> sample_docs;            // unset -> every document

  /// Throws Error("bad_mixture") on negative weights.
  void validate() const;
};

MixtureSpec mixture_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MixtureSpec& spec);

struct BucketManifest {
  Source source = Source::web;
  std::string lang;
  double weight = 0.0;
  std::size_t available_docs = 0;
  std::size_t selected_docs = 0;
  std::size_t selected_chars = 0;
};

struct AssemblyResult {
  std::vector<CorpusDocument> documents;
  std::vector<BucketManifest> buckets;
  std::size_t replay_docs = 0;
};

/// Largest-remainder allocation of `total` across `weights`, capped by
/// `capacity`; leftover from capped buckets is reallocated to the rest.
std::vector<std::size_t> stratified_allocation(std::span<const double> weights,
                                               std::span<const std::size_t> capacity,
                                               std::size_t total);

/// Weighted sampling without replacement per (source, lang) bucket.
/// Throws Error("bad_mixture") when every bucket weight is zero.
AssemblyResult assemble_pretraining(std::span<const CorpusDocument> docs, const MixtureSpec& spec,
                                    std::uint64_t seed,
                                    std::span<const CorpusDocument> instruction_replay = {});

nlohmann::json to_json(const BucketManifest& b);

}  // namespace savanna::corpus
