#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "savanna/corpus.hpp"
#include "savanna/languages.hpp"

namespace savanna::instruct {

enum class Category {
  translation,
  question_answering,
  summarization_correction,
  creative,
  cultural_explanation,
};

std::string_view to_string(Category c);
Category category_from_string(std::string_view s);

enum class Role { user, assistant };

std::string_view to_string(Role r);
Role role_from_string(std::string_view s);

struct Turn {
  Role role = Role::user;
  std::string text;

  bool operator==(const Turn&) const = default;
};

struct InstructionExample {
  Category category = Category::translation;
  std::vector<Turn> turns;
  std::set<LangCode> langs;

  /// Throws Error("bad_example") unless turns alternate user/assistant,
  /// start with user, end with assistant, and every text is non-empty.
  void validate() const;
  bool operator==(const InstructionExample&) const = default;
};

nlohmann::json to_json(const InstructionExample& ex);
InstructionExample example_from_json(const nlohmann::json& j);

// ------------------------------------------------------------ preferences

enum class Defect { factuality, glitching, other };

std::string_view to_string(Defect d);
Defect defect_from_string(std::string_view s);

struct PreferencePair {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  Defect defect = Defect::other;

  /// Throws Error("bad_preference") on empty fields or chosen == rejected.
  void validate() const;
  bool operator==(const PreferencePair&) const = default;
};

nlohmann::json to_json(const PreferencePair& p);
PreferencePair preference_from_json(const nlohmann::json& j);

/// True if some substring of `min_len` scalars occurs at least `min_repeats`
/// times without overlap.
bool has_repetition_loop(std::string_view text, std::size_t min_len = 8, std::size_t min_repeats = 5);

/// Rejected response = chosen with the first applicable (from, to)
/// substitution applied. Throws Error("no_substitution") if none applies.
PreferencePair make_factuality_pair(std::string prompt, std::string chosen,
                                    std::span<const std::pair<std::string, std::string>> swaps);

/// Rejected response = a prefix of chosen followed by a loop of one of its
/// own phrases (at least `min_len` scalars, repeated `repeats` times).
PreferencePair make_glitch_pair(std::string prompt, std::string chosen, std::uint64_t seed,
                                std::size_t min_len = 8, std::size_t repeats = 6);

// ------------------------------------------------------------- tokenizers

using TokenId = std::int32_t;

/// Encode/decode contract. decode(encode(a) ++ encode(b)) must equal a ++ b
/// for the strings a tokenizer accepts. Implementations are const-safe for
/// concurrent use.
class TokenizerPort {
 public:
  virtual ~TokenizerPort() = default;
  virtual std::string name() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
};

/// One token per byte (ids 0..255) plus whole-string special tokens
/// (ids 256..), matched longest-first.
class ByteTokenizer : public TokenizerPort {
 public:
  explicit ByteTokenizer(std::vector<std::string> specials = {});
  std::string name() const override { return "byte"; }
  std::size_t vocab_size() const override { return 256 + specials_.size(); }
  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;

 private:
  std::vector<std::string> specials_;
};

/// Greedy longest-match tokenizer over a vocabulary file: one token per
/// line, id = zero-based line number. Escapes: \n \t \r \\ . Tokens
/// spelled <0xNN> are byte fallbacks.
class VocabTokenizer : public TokenizerPort {
 public:
  static VocabTokenizer load(const std::filesystem::path& path);
  static VocabTokenizer parse(std::string_view contents, std::string name = "vocab");

  std::string name() const override { return name_; }
  std::size_t vocab_size() const override { return tokens_.size(); }
  /// Throws Error("untokenizable") when no token or byte fallback matches.
  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;

 private:
  std::string name_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> lookup_;
  std::array<TokenId, 256> byte_ids_{};
  std::size_t max_len_ = 0;
};

/// "byte" or a path to a vocabulary file.
std::unique_ptr<TokenizerPort> make_tokenizer(const std::string& spec,
                                              std::vector<std::string> byte_specials = {});

// ----------------------------------------------------------- chat template

struct RoleDelimiters {
  std::string prefix;
  std::string suffix;
};

/// Every string here is template control text: never trained on.
struct ChatTemplate {
  std::string name;
  std::string bos;
  std::string eos;
  RoleDelimiters user;
  RoleDelimiters assistant;
  std::vector<std::string> special_tokens;  // declared for tokenizers that need them

  /// Throws Error("bad_template") if a role or one of its delimiters is missing.
  static ChatTemplate from_json(const nlohmann::json& j);
  static ChatTemplate load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const RoleDelimiters& delimiters(Role r) const { return r == Role::user ? user : assistant; }
};

struct TurnSpan {
  std::size_t turn = 0;
  Role role = Role::user;
  std::size_t start = 0;  // body tokens [start, end)
  std::size_t end = 0;

  bool operator==(const TurnSpan&) const = default;
};

struct ChatExample {
  std::vector<TokenId> token_ids;
  std::vector<std::uint8_t> loss_mask;
  std::vector<TurnSpan> boundaries;

  bool operator==(const ChatExample&) const = default;
};

/// The full rendered string (what the tokens decode to).
std::string render_text(const InstructionExample& ex, const ChatTemplate& tmpl);

/// Throws Error("bad_template") if the tokenizer does not round-trip a
/// control string of the template.
void check_template(const TokenizerPort& tok, const ChatTemplate& tmpl);

/// Tokenizes control strings and turn bodies as separate segments; the mask
/// is 1 exactly on assistant body tokens.
ChatExample render_chat(const InstructionExample& ex, const TokenizerPort& tok, const ChatTemplate& tmpl);

/// OpenMP over examples; output order follows input.
std::vector<ChatExample> render_batch(std::span<const InstructionExample> examples, const TokenizerPort& tok,
                                      const ChatTemplate& tmpl);
std::vector<ChatExample> render_batch_serial(std::span<const InstructionExample> examples,
                                             const TokenizerPort& tok, const ChatTemplate& tmpl);

// ----------------------------------------------------- translation & noise

struct NoiseParams {
  double rate = 0.1;               // per-scalar probability of an edit
  double punctuation_drop = 1.0;   // probability of dropping each punctuation mark
};

struct NoisyText {
  std::string text;
  std::size_t edits = 0;  // substitutions + deletions + insertions
  std::size_t punctuation_dropped = 0;
};

/// ASR-like corruption: each scalar is, with probability `rate`, substituted,
/// deleted, or followed by an inserted scalar (equal odds). Replacement
/// letters are drawn from the text's own alphabet.
NoisyText asr_noise(std::string_view text, const NoiseParams& params, std::uint64_t seed);

inline constexpr std::string_view kDefaultTranslationPrompt =
    "Translate the following {source_language} text into {target_language}. "
    "Reply with the translation only.\n\n{text}";

struct TranslationOptions {
  std::string prompt_template{kDefaultTranslationPrompt};
  NoiseParams noise;
};

/// Substitutes {source_language}, {target_language}, {text}.
std::string fill_prompt(std::string_view tmpl, std::string_view source_language,
                        std::string_view target_language, std::string_view text);

InstructionExample make_translation_instruction(const corpus::ParallelPair& pair, bool noisy,
                                                std::uint64_t seed, const TranslationOptions& options = {});

/// Appends whole examples in a seeded order while the turn count stays within
/// max_turns (the first sampled example is always taken).
InstructionExample concat_conversations(std::span<const InstructionExample> examples, std::uint64_t seed,
                                        std::size_t max_turns);

// ---------------------------------------------------------------- packing

struct TokenStream {
  std::string doc_id;
  std::vector<TokenId> tokens;
};

struct SegmentSpan {
  std::string doc_id;
  std::size_t doc_offset = 0;  // position of `start` within the source document
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const SegmentSpan&) const = default;
};

struct PackedSequence {
  std::vector<TokenId> token_ids;
  std::vector<SegmentSpan> spans;
  std::vector<std::uint32_t> segment_ids;  // per token; equal ids may attend to each other

  bool operator==(const PackedSequence&) const = default;
};

/// Splits streams into max_len chunks and places each chunk first-fit, in
/// arrival order, into the earliest sequence with room.
std::vector<PackedSequence> pack(std::span<const TokenStream> streams, std::size_t max_len = 512);

/// tokens_per_batch / max_len; throws Error("bad_params") unless divisible.
std::size_t batch_spec(std::size_t tokens_per_batch, std::size_t max_len);

inline constexpr std::uint8_t kPackedFormatVersion = 1;

/// Little-endian: "SVPK", version byte, u32 sequence count, then per
/// sequence u32 length + ids, u32 span count + (u32 id length, id bytes,
/// u32 doc_offset, u32 start, u32 end). Segment ids are implied by spans.
std::string write_packed_binary(std::span<const PackedSequence> seqs);
std::vector<PackedSequence> read_packed_binary(std::string_view bytes);

/// Header line {"format":"savanna-packed","version":1} then one sequence per line.
std::string write_packed_jsonl(std::span<const PackedSequence> seqs);
std::vector<PackedSequence> read_packed_jsonl(std::string_view text);

// ---------------------------------------------------------------- dataset

struct DatasetOptions {
  std::size_t translation_count = 2347;
  std::size_t conversational_count = 726;
  double noisy_fraction = 0.2;
  double multi_turn_fraction = 0.25;  // share of conversations that get concatenated
  std::size_t max_turns = 6;
  TranslationOptions translation;
};

struct DatasetResult {
  std::vector<InstructionExample> examples;
  std::map<Category, std::size_t> category_counts;  // over source examples, before concatenation
  std::size_t noisy_examples = 0;
  std::size_t multi_turn_conversations = 0;
};

/// Samples translation examples from `pairs` (both directions eligible) and
/// conversational examples from `pool`, without replacement; counts are
/// capped by what is available.
DatasetResult build_dataset(std::span<const corpus::ParallelPair> pairs,
                            std::span<const InstructionExample> pool, const DatasetOptions& options,
                            std::uint64_t seed);

nlohmann::json to_json(const DatasetResult& r);

}  // namespace savanna::instruct
