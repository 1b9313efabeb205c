#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "savanna/languages.hpp"
#include "savanna/metrics.hpp"

namespace savanna::eval {

// ------------------------------------------------------------------ suite

struct CategoryInfo {
  int id;
  std::string_view name;
};

/// The 20 scenario categories, ids 1..20.
std::span<const CategoryInfo> categories();

inline constexpr int kCategoryCount = 20;
inline constexpr int kSentencesPerCategory = 5;

struct EvalItem {
  int category_id = 1;
  int sent_index = 0;
  std::string english;
  std::map<LangCode, std::string> translations;

  /// "c07s3"
  std::string id() const;
};

struct EvalSuite {
  std::vector<EvalItem> items;  // sorted by (category_id, sent_index)
  std::vector<LangCode> languages;

  /// TSV with header `category_id sent_index english <lang>...`.
  /// Throws Error("bad_suite") on malformed rows, unknown or eng language
  /// columns, out-of-range ids, duplicate keys, or empty cells.
  static EvalSuite parse_tsv(std::string_view tsv);
  static EvalSuite load_tsv(const std::filesystem::path& path);

  /// Throws Error("bad_suite") unless every category has all 5 sentences.
  void check_complete() const;

  std::size_t reference_count() const { return items.size() * languages.size(); }
  std::size_t directed_points() const { return 2 * reference_count(); }
  /// Stable content hash; reports over different suites cannot be compared.
  std::string fingerprint() const;
};

enum class Granularity { sentence, document };

std::string_view to_string(Granularity g);
Granularity granularity_from_string(std::string_view s);

/// Every xx->eng and eng->xx direction of the suite, language by language.
std::vector<Direction> all_directions(const EvalSuite& suite);

struct Segment {
  std::string id;  // item id, or "c07" for a document
  Direction direction;
  std::string source;
  std::string reference;
};

/// Document segments join the 5 sentences of a category with single spaces.
std::vector<Segment> make_segments(const EvalSuite& suite, const Direction& direction, Granularity granularity);

/// Strips surrounding whitespace, a leading "Translation:" label, and one
/// pair of surrounding quotes.
std::string clean_hypothesis(std::string_view response);

// ----------------------------------------------------------------- client

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string request_id;  // "<direction>/<segment id>"; never sent as content
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
};

/// Implementations must be safe to call from several threads at once.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string identity() const = 0;
  /// Returns the assistant message content; throws on failure.
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct ModelEndpoint {
  std::string name;
  std::string base_url;   // "https://host/v1", or "stub:echo" / "stub:empty" / "stub:gold"
  std::string model;      // value of the "model" field; defaults to name
  std::string auth_env = "SAVANNA_API_TOKEN";
  std::size_t max_parallel = 4;
  double temperature = 0.0;
  std::chrono::milliseconds timeout{60000};
  int retries = 2;
  std::chrono::milliseconds backoff{500};

  /// Throws Error("bad_endpoint") when max_parallel < 1 or retries < 0.
  void validate() const;
  bool is_stub() const { return base_url.starts_with("stub:"); }
};

ModelEndpoint endpoint_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelEndpoint& e);

/// POST {base_url}/chat/completions with a bearer token; returns
/// choices[0].message.content.
class HttpChatClient : public ChatClient {
 public:
  HttpChatClient(ModelEndpoint endpoint, std::string token);
  std::string identity() const override;
  std::string complete(const ChatRequest& request) override;

 private:
  ModelEndpoint endpoint_;
  std::string token_;
  std::string origin_;
  std::string path_;
};

/// Offline stand-in. "stub:echo" and "stub:gold" answer from a table keyed
/// by request id; "stub:empty" always answers "".
class StubChatClient : public ChatClient {
 public:
  StubChatClient(std::string kind, std::map<std::string, std::string> answers = {});
  std::string identity() const override { return kind_; }
  std::string complete(const ChatRequest& request) override;

 private:
  std::string kind_;
  std::map<std::string, std::string> answers_;
};

/// Reads the token from endpoint.auth_env; empty if unset.
std::unique_ptr<ChatClient> make_http_client(const ModelEndpoint& endpoint);

// ---------------------------------------------------------------- running

struct TranslationOptions {
  std::string prompt_template;  // defaults to instruct::kDefaultTranslationPrompt
  metrics::AggregateScheme scheme = metrics::AggregateScheme::mean_of_sentences;
  double max_failure_rate = 0.10;
};

std::string prompt_hash(std::string_view prompt_template);

struct RunRecord {
  std::string id;
  Direction direction;
  std::string prompt;
  std::string response;
  double latency_ms = 0.0;
  std::string status;  // "ok" or "failed"
  std::string error;
  int attempts = 0;
};

struct RunHeader {
  std::string model;
  std::string endpoint;
  std::string client;
  std::string prompt_template;
  std::string prompt_hash;
  Granularity granularity = Granularity::sentence;
  std::string suite_fingerprint;
  std::vector<Direction> directions;
  double temperature = 0.0;
  std::string started_at;  // metadata only; not carried into reports
};

struct RunLog {
  RunHeader header;
  std::vector<RunRecord> records;  // direction order, then segment order
};

std::string write_run_log(const RunLog& log);
RunLog parse_run_log(std::string_view jsonl);

/// Builds the answer table for stub endpoints from the suite segments.
std::unique_ptr<ChatClient> make_client(const ModelEndpoint& endpoint, const EvalSuite& suite,
                                        std::span<const Direction> directions, Granularity granularity);

/// Issues one prompt per segment with at most endpoint.max_parallel requests
/// in flight and per-item retries. Throws Error("bad_direction") for
/// directions without eng on exactly one side or languages not in the suite.
RunLog run_translation(const EvalSuite& suite, const ModelEndpoint& endpoint, ChatClient& client,
                       std::span<const Direction> directions, Granularity granularity,
                       const TranslationOptions& options = {});

struct SegmentScore {
  std::string id;
  metrics::SentenceScores scores;
};

struct DirectionReport {
  Direction direction;
  std::size_t segments = 0;
  std::size_t failed = 0;
  bool valid = true;
  std::optional<metrics::SentenceScores> aggregate;  // unset when nothing was scored
  std::vector<SegmentScore> per_segment;
};

struct EvalReport {
  std::string model;
  std::string prompt_hash;
  std::string suite_fingerprint;
  Granularity granularity = Granularity::sentence;
  metrics::AggregateScheme scheme = metrics::AggregateScheme::mean_of_sentences;
  bool valid = true;
  std::vector<DirectionReport> directions;

  const DirectionReport& at(const Direction& d) const;
};

/// Scores a run log against the suite; uses only logged data, so re-scoring
/// a persisted log reproduces the report exactly.
EvalReport score_run(const RunLog& log, const EvalSuite& suite, const TranslationOptions& options = {});

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
/// Pretty JSON with a trailing newline; byte-stable for equal reports.
std::string render_report_json(const EvalReport& r);
std::string render_report_markdown(const EvalReport& r);

// -------------------------------------------------------------------- MCQ

enum class McqMode { direct, translate_test };

struct McqItem {
  std::string id;
  std::string question;
  std::vector<std::string> choices;
  int answer_index = 0;
  LangCode lang;
  McqMode mode = McqMode::direct;

  /// Throws Error("bad_mcq") on < 2 choices, > 26 choices, or answer out of range.
  void validate() const;
};

McqItem mcq_from_json(const nlohmann::json& j);

std::string mcq_prompt(const McqItem& item);

/// First standalone capital letter naming a choice; otherwise the single
/// choice whose text appears in the reply (case-insensitive).
std::optional<int> extract_choice(std::string_view reply, std::span<const std::string> choices);

struct McqRecord {
  std::string id;
  std::string lang;
  std::string response;
  std::optional<int> extracted;
  bool correct = false;
  std::string status;  // "ok", "unparseable", "failed"
};

struct McqReport {
  std::map<std::string, double> accuracy;  // per language
  std::map<std::string, std::size_t> counts;
  std::size_t unparseable = 0;
  std::size_t failed = 0;
  std::vector<McqRecord> records;
};

McqReport run_mcq(std::span<const McqItem> items, const ModelEndpoint& endpoint, ChatClient& client);

/// Answer table for "stub:gold": every request answered with its gold letter.
std::map<std::string, std::string> mcq_gold_answers(std::span<const McqItem> items);

nlohmann::json to_json(const McqReport& r);

// ------------------------------------------------------------ leaderboard

struct DirectionScores {
  std::optional<double> chrf;
  std::optional<double> bleu;
  std::optional<double> cer;
  std::optional<double> wer;
};

struct ModelScores {
  std::string model;
  std::string suite_id;
  std::map<Direction, DirectionScores> directions;
};

ModelScores model_scores(const EvalReport& report);

/// Wide CSV `lang,<model>,...` as in the published score tables.
std::map<std::string, std::map<std::string, double>> read_table_csv(std::string_view csv);

/// Builds per-model scores from published-style score tables. Any table may be absent.
std::vector<ModelScores> scores_from_tables(const std::map<std::string, std::map<std::string, double>>* chrf_xx_eng,
                                            const std::map<std::string, std::map<std::string, double>>* chrf_eng_xx,
                                            const std::map<std::string, std::map<std::string, double>>* bleu_xx_eng,
                                            const std::map<std::string, std::map<std::string, double>>* bleu_eng_xx,
                                            std::vector<std::string> model_order);

/// Loads chrf_xx_eng.csv, chrf_eng_xx.csv, bleu_xx_eng.csv, bleu_eng_xx.csv
/// (whichever exist) from a directory.
std::vector<ModelScores> load_fixture_dir(const std::filesystem::path& dir);

enum class Side { xx_to_eng, eng_to_xx };
enum class Metric { chrf, bleu, cer, wer };

std::string_view to_string(Side s);
std::string_view to_string(Metric m);

struct LanguageRow {
  std::string lang;
  std::vector<std::optional<double>> values;  // one per model
  std::vector<bool> best;
};

struct LanguageTable {
  Side side;
  Metric metric;
  std::vector<LanguageRow> rows;
  std::vector<std::optional<double>> means;  // unset if any language is missing
  std::vector<bool> best_mean;
};

struct MeanRow {
  std::string model;
  std::optional<double> chrf_xx_eng, bleu_xx_eng, chrf_eng_xx, bleu_eng_xx;
};

struct Leaderboard {
  std::vector<std::string> models;
  std::vector<std::string> languages;  // table order
  std::vector<MeanRow> means;
  std::vector<LanguageTable> tables;   // only metrics present for every model
  /// bidirectional[lang][model index]: mean of the two chrF directions.
  std::map<std::string, std::vector<std::optional<double>>> bidirectional;
};

/// Throws Error("mismatched_suites") when models disagree on suite or on
/// the set of (direction, metric) cells they report.
Leaderboard make_leaderboard(std::span<const ModelScores> models);

struct WinnerCounts {
  std::vector<std::string> contenders;
  std::vector<std::size_t> wins;                          // ties credit every maximum
  std::map<std::string, std::vector<std::string>> winners; // per language
  std::size_t languages = 0;
};

/// Winner per language on bidirectional chrF among `contenders` (all models
/// when empty). Languages missing a contender's score are skipped.
WinnerCounts winner_counts(const Leaderboard& board, std::span<const std::string> contenders = {});

std::string render_means_markdown(const Leaderboard& board);
std::string render_language_table_markdown(const Leaderboard& board, const LanguageTable& table);
/// Long CSV: language,model,mean_bidirectional_chrf.
std::string render_bidirectional_csv(const Leaderboard& board);
std::string render_winners_csv(const WinnerCounts& counts);

}  // namespace savanna::eval
