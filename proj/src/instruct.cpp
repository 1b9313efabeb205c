#include "savanna/instruct.hpp"

#include <algorithm>
#include <cstring>
#include <map>

#include <nlohmann/json.hpp>

#include "savanna/error.hpp"
#include "savanna/textnorm.hpp"
#include "savanna/util.hpp"

namespace savanna::instruct {

namespace {

constexpr std::array<std::string_view, 5> kCategoryNames = {
    "translation", "question_answering", "summarization_correction", "creative", "cultural_explanation",
};
constexpr std::array<std::string_view, 3> kDefectNames = {"factuality", "glitching", "other"};

template <typename Enum, std::size_t N>
Enum parse_enum(const std::array<std::string_view, N>& names, std::string_view s, const char* kind,
                const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<Enum>(i);
  }
  throw Error(kind, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(Category c) { return kCategoryNames[static_cast<std::size_t>(c)]; }
Category category_from_string(std::string_view s) {
  return parse_enum<Category>(kCategoryNames, s, "bad_example", "category");
}

std::string_view to_string(Role r) { return r == Role::user ? "user" : "assistant"; }
Role role_from_string(std::string_view s) {
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw Error("bad_example", "unknown role '" + std::string(s) + "'");
}

std::string_view to_string(Defect d) { return kDefectNames[static_cast<std::size_t>(d)]; }
Defect defect_from_string(std::string_view s) {
  return parse_enum<Defect>(kDefectNames, s, "bad_preference", "defect");
}

void InstructionExample::validate() const {
  if (turns.empty()) throw Error("bad_example", "conversation has no turns");
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const Role expected = i % 2 == 0 ? Role::user : Role::assistant;
    if (turns[i].role != expected) {
      throw Error("bad_example", "turn " + std::to_string(i) + " should be " + std::string(to_string(expected)));
    }
    if (turns[i].text.empty()) throw Error("bad_example", "turn " + std::to_string(i) + " is empty");
  }
  if (turns.back().role != Role::assistant) throw Error("bad_example", "conversation must end with assistant");
}

nlohmann::json to_json(const InstructionExample& ex) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : ex.turns) turns.push_back({{"role", to_string(t.role)}, {"text", t.text}});
  nlohmann::json langs = nlohmann::json::array();
  for (const auto& l : ex.langs) langs.push_back(l.str());
  return {{"category", to_string(ex.category)}, {"turns", turns}, {"langs", langs}};
}

InstructionExample example_from_json(const nlohmann::json& j) {
  InstructionExample ex;
  try {
    ex.category = category_from_string(j.at("category").get<std::string>());
    for (const auto& t : j.at("turns")) {
      ex.turns.push_back({role_from_string(t.at("role").get<std::string>()), t.at("text").get<std::string>()});
    }
    if (j.contains("langs")) {
      for (const auto& l : j["langs"]) ex.langs.insert(LangCode::parse(l.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_example", std::string("malformed instruction record: ") + e.what());
  }
  ex.validate();
  return ex;
}

// ------------------------------------------------------------ preferences

void PreferencePair::validate() const {
  if (prompt.empty() || chosen.empty() || rejected.empty()) {
    throw Error("bad_preference", "preference pair has an empty field");
  }
  if (chosen == rejected) throw Error("bad_preference", "chosen and rejected responses are identical");
}

nlohmann::json to_json(const PreferencePair& p) {
  return {{"prompt", p.prompt}, {"chosen", p.chosen}, {"rejected", p.rejected}, {"defect", to_string(p.defect)}};
}

PreferencePair preference_from_json(const nlohmann::json& j) {
  PreferencePair p;
  try {
    p.prompt = j.at("prompt").get<std::string>();
    p.chosen = j.at("chosen").get<std::string>();
    p.rejected = j.at("rejected").get<std::string>();
    p.defect = defect_from_string(j.value("defect", std::string("other")));
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_preference", std::string("malformed preference record: ") + e.what());
  }
  p.validate();
  return p;
}

bool has_repetition_loop(std::string_view text, std::size_t min_len, std::size_t min_repeats) {
  const auto u = textnorm::to_u32(text);
  if (min_len == 0 || u.size() < min_len * min_repeats) return false;
  std::unordered_map<std::u32string_view, std::pair<std::size_t, std::size_t>> seen;  // count, next free pos
  const std::u32string_view view(u);
  for (std::size_t i = 0; i + min_len <= u.size(); ++i) {
    auto [it, inserted] = seen.try_emplace(view.substr(i, min_len), 0, 0);
    auto& [count, next_free] = it->second;
    if (i >= next_free) {
      ++count;
      next_free = i + min_len;
      if (count >= min_repeats) return true;
    }
  }
  return false;
}

PreferencePair make_factuality_pair(std::string prompt, std::string chosen,
                                    std::span<const std::pair<std::string, std::string>> swaps) {
  for (const auto& [from, to] : swaps) {
    if (from.empty() || from == to) continue;
    const auto pos = chosen.find(from);
    if (pos == std::string::npos) continue;
    std::string rejected = chosen;
    rejected.replace(pos, from.size(), to);
    PreferencePair p{std::move(prompt), std::move(chosen), std::move(rejected), Defect::factuality};
    p.validate();
    return p;
  }
  throw Error("no_substitution", "no factual substitution applies to the chosen response");
}

PreferencePair make_glitch_pair(std::string prompt, std::string chosen, std::uint64_t seed, std::size_t min_len,
                                std::size_t repeats) {
  const auto words = textnorm::split_whitespace(chosen);
  if (words.empty()) throw Error("bad_preference", "chosen response is empty");
  Rng rng(seed);
  // Grow a phrase from a random word until it is long enough to loop on.
  const std::size_t first = rng.below(words.size());
  std::string phrase;
  std::size_t last = first;
  for (; last < words.size(); ++last) {
    if (!phrase.empty()) phrase += ' ';
    phrase += words[last];
    if (textnorm::scalar_count(phrase) >= min_len) break;
  }
  while (textnorm::scalar_count(phrase) < min_len) phrase += ' ' + phrase;

  std::string rejected;
  for (std::size_t i = 0; i < first; ++i) rejected += words[i] + ' ';
  for (std::size_t i = 0; i < repeats; ++i) rejected += phrase + (i + 1 < repeats ? " " : "");
  if (rejected == chosen) rejected += ' ' + phrase;
  PreferencePair p{std::move(prompt), std::move(chosen), std::move(rejected), Defect::glitching};
  p.validate();
  return p;
}

// ------------------------------------------------------------- tokenizers

ByteTokenizer::ByteTokenizer(std::vector<std::string> specials) : specials_(std::move(specials)) {
  for (const auto& s : specials_) {
    if (s.empty()) throw Error("bad_params", "empty special token");
  }
}

std::vector<TokenId> ByteTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t best = 0;
    std::size_t best_len = 0;
    for (std::size_t k = 0; k < specials_.size(); ++k) {
      const auto& s = specials_[k];
      if (s.size() > best_len && text.compare(i, s.size(), s) == 0) {
        best = k;
        best_len = s.size();
      }
    }
    if (best_len > 0) {
      ids.push_back(static_cast<TokenId>(256 + best));
      i += best_len;
    } else {
      ids.push_back(static_cast<unsigned char>(text[i]));
      ++i;
    }
  }
  return ids;
}

std::string ByteTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id >= 0 && id < 256) {
      out += static_cast<char>(id);
    } else if (id >= 256 && static_cast<std::size_t>(id - 256) < specials_.size()) {
      out += specials_[static_cast<std::size_t>(id - 256)];
    } else {
      throw Error("bad_token", "token id " + std::to_string(id) + " outside the vocabulary");
    }
  }
  return out;
}

namespace {

std::string unescape_token(std::string_view line, std::size_t line_no) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] != '\\') {
      out += line[i];
      continue;
    }
    if (++i == line.size()) throw Error("bad_vocab", "line " + std::to_string(line_no) + ": dangling backslash");
    switch (line[i]) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      case '\\': out += '\\'; break;
      default: throw Error("bad_vocab", "line " + std::to_string(line_no) + ": unknown escape");
    }
  }
  return out;
}

int byte_fallback(std::string_view tok) {
  if (tok.size() != 6 || tok.substr(0, 3) != "<0x" || tok.back() != '>') return -1;
  int value = 0;
  for (char c : tok.substr(3, 2)) {
    value <<= 4;
    if (c >= '0' && c <= '9') value |= c - '0';
    else if (c >= 'A' && c <= 'F') value |= c - 'A' + 10;
    else if (c >= 'a' && c <= 'f') value |= c - 'a' + 10;
    else return -1;
  }
  return value;
}

}  // namespace

VocabTokenizer VocabTokenizer::parse(std::string_view contents, std::string name) {
  VocabTokenizer t;
  t.name_ = std::move(name);
  t.byte_ids_.fill(-1);
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < contents.size()) {
    std::size_t end = contents.find('\n', start);
    if (end == std::string_view::npos) end = contents.size();
    ++line_no;
    const auto tok = unescape_token(contents.substr(start, end - start), line_no);
    start = end + 1;
    if (tok.empty()) throw Error("bad_vocab", "line " + std::to_string(line_no) + ": empty token");
    const auto id = static_cast<TokenId>(t.tokens_.size());
    if (const int b = byte_fallback(tok); b >= 0) {
      t.byte_ids_[static_cast<std::size_t>(b)] = id;
    } else {
      if (!t.lookup_.emplace(tok, id).second) {
        throw Error("bad_vocab", "line " + std::to_string(line_no) + ": duplicate token");
      }
      t.max_len_ = std::max(t.max_len_, tok.size());
    }
    t.tokens_.push_back(tok);
  }
  if (t.tokens_.empty()) throw Error("bad_vocab", "vocabulary is empty");
  return t;
}

VocabTokenizer VocabTokenizer::load(const std::filesystem::path& path) {
  return parse(io::read_file(path), path.filename().string());
}

std::vector<TokenId> VocabTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  std::string key;
  std::size_t i = 0;
  while (i < text.size()) {
    bool matched = false;
    for (std::size_t len = std::min(max_len_, text.size() - i); len > 0; --len) {
      key.assign(text.substr(i, len));
      if (auto it = lookup_.find(key); it != lookup_.end()) {
        ids.push_back(it->second);
        i += len;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    const TokenId b = byte_ids_[static_cast<unsigned char>(text[i])];
    if (b < 0) throw Error("untokenizable", "no token covers byte at offset " + std::to_string(i));
    ids.push_back(b);
    ++i;
  }
  return ids;
}

std::string VocabTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw Error("bad_token", "token id " + std::to_string(id) + " outside the vocabulary");
    }
    const auto& tok = tokens_[static_cast<std::size_t>(id)];
    if (const int b = byte_fallback(tok); b >= 0) {
      out += static_cast<char>(b);
    } else {
      out += tok;
    }
  }
  return out;
}

std::unique_ptr<TokenizerPort> make_tokenizer(const std::string& spec, std::vector<std::string> byte_specials) {
  if (spec == "byte") return std::make_unique<ByteTokenizer>(std::move(byte_specials));
  return std::make_unique<VocabTokenizer>(VocabTokenizer::load(spec));
}

// ----------------------------------------------------------- chat template

ChatTemplate ChatTemplate::from_json(const nlohmann::json& j) {
  ChatTemplate t;
  const auto role = [&](const char* name) {
    if (!j.contains("roles") || !j["roles"].contains(name)) {
      throw Error("bad_template", std::string("template has no delimiters for role '") + name + "'");
    }
    const auto& r = j["roles"][name];
    if (!r.contains("prefix") || !r.contains("suffix") || !r["prefix"].is_string() || !r["suffix"].is_string()) {
      throw Error("bad_template", std::string("role '") + name + "' needs string prefix and suffix");
    }
    return RoleDelimiters{r["prefix"].get<std::string>(), r["suffix"].get<std::string>()};
  };
  t.user = role("user");
  t.assistant = role("assistant");
  try {
    t.name = j.value("name", std::string("custom"));
    t.bos = j.value("bos", std::string());
    t.eos = j.value("eos", std::string());
    t.special_tokens = j.value("special_tokens", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_template", e.what());
  }
  return t;
}

ChatTemplate ChatTemplate::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("bad_template", path.string() + ": " + e.what());
  }
}

nlohmann::json ChatTemplate::to_json() const {
  return {{"name", name},
          {"bos", bos},
          {"eos", eos},
          {"roles",
           {{"user", {{"prefix", user.prefix}, {"suffix", user.suffix}}},
            {"assistant", {{"prefix", assistant.prefix}, {"suffix", assistant.suffix}}}}},
          {"special_tokens", special_tokens}};
}

std::string render_text(const InstructionExample& ex, const ChatTemplate& tmpl) {
  std::string out = tmpl.bos;
  for (const auto& t : ex.turns) {
    const auto& d = tmpl.delimiters(t.role);
    out += d.prefix;
    out += t.text;
    out += d.suffix;
  }
  out += tmpl.eos;
  return out;
}

void check_template(const TokenizerPort& tok, const ChatTemplate& tmpl) {
  for (const std::string* s : {&tmpl.bos, &tmpl.eos, &tmpl.user.prefix, &tmpl.user.suffix, &tmpl.assistant.prefix,
                               &tmpl.assistant.suffix}) {
    if (!s->empty() && tok.decode(tok.encode(*s)) != *s) {
      throw Error("bad_template", "tokenizer '" + tok.name() + "' does not round-trip control string '" + *s + "'");
    }
  }
}

namespace {

ChatExample render_unchecked(const InstructionExample& ex, const TokenizerPort& tok, const ChatTemplate& tmpl) {
  ex.validate();
  ChatExample out;
  const auto append = [&](std::string_view text, bool trained) {
    if (text.empty()) return;
    const auto ids = tok.encode(text);
    out.token_ids.insert(out.token_ids.end(), ids.begin(), ids.end());
    out.loss_mask.insert(out.loss_mask.end(), ids.size(), trained ? 1 : 0);
  };
  append(tmpl.bos, false);
  for (std::size_t i = 0; i < ex.turns.size(); ++i) {
    const auto& t = ex.turns[i];
    const auto& d = tmpl.delimiters(t.role);
    append(d.prefix, false);
    const std::size_t start = out.token_ids.size();
    append(t.text, t.role == Role::assistant);
    out.boundaries.push_back({i, t.role, start, out.token_ids.size()});
    append(d.suffix, false);
  }
  append(tmpl.eos, false);
  return out;
}

}  // namespace

ChatExample render_chat(const InstructionExample& ex, const TokenizerPort& tok, const ChatTemplate& tmpl) {
  check_template(tok, tmpl);
  return render_unchecked(ex, tok, tmpl);
}

std::vector<ChatExample> render_batch(std::span<const InstructionExample> examples, const TokenizerPort& tok,
                                      const ChatTemplate& tmpl) {
  check_template(tok, tmpl);
  std::vector<ChatExample> out(examples.size());
  std::exception_ptr error;
  const auto n = static_cast<long>(examples.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (long i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = render_unchecked(examples[static_cast<std::size_t>(i)], tok, tmpl);
    } catch (...) {
#pragma omp critical(savanna_render_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::vector<ChatExample> render_batch_serial(std::span<const InstructionExample> examples,
                                             const TokenizerPort& tok, const ChatTemplate& tmpl) {
  check_template(tok, tmpl);
  std::vector<ChatExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(render_unchecked(ex, tok, tmpl));
  return out;
}

// ----------------------------------------------------- translation & noise

NoisyText asr_noise(std::string_view text, const NoiseParams& params, std::uint64_t seed) {
  if (params.rate < 0.0 || params.rate > 1.0 || params.punctuation_drop < 0.0 || params.punctuation_drop > 1.0) {
    throw Error("bad_params", "noise probabilities must lie in [0, 1]");
  }
  const auto src = textnorm::to_u32(text);
  std::u32string alphabet;
  for (char32_t c : src) {
    if (!textnorm::is_whitespace(c) && !textnorm::is_punctuation(c)) alphabet += c;
  }
  std::sort(alphabet.begin(), alphabet.end());
  alphabet.erase(std::unique(alphabet.begin(), alphabet.end()), alphabet.end());
  if (alphabet.size() < 2) alphabet = U"abcdefghijklmnopqrstuvwxyz";

  Rng rng(seed);
  const auto pick_other = [&](char32_t c) {
    const auto pos = alphabet.find(c);
    if (pos == std::u32string::npos) return alphabet[rng.below(alphabet.size())];
    const auto k = rng.below(alphabet.size() - 1);
    return alphabet[k < pos ? k : k + 1];
  };

  NoisyText out;
  std::u32string noisy;
  noisy.reserve(src.size() + src.size() / 8);
  for (char32_t c : src) {
    if (textnorm::is_punctuation(c) && rng.uniform() < params.punctuation_drop) {
      ++out.punctuation_dropped;
      continue;
    }
    if (rng.uniform() >= params.rate) {
      noisy += c;
      continue;
    }
    ++out.edits;
    switch (rng.below(3)) {
      case 0: noisy += pick_other(c); break;
      case 1: break;
      default:
        noisy += c;
        noisy += alphabet[rng.below(alphabet.size())];
        break;
    }
  }
  out.text = textnorm::to_utf8(noisy);
  return out;
}

std::string fill_prompt(std::string_view tmpl, std::string_view source_language, std::string_view target_language,
                        std::string_view text) {
  const std::array<std::pair<std::string_view, std::string_view>, 3> fields = {{
      {"{source_language}", source_language},
      {"{target_language}", target_language},
      {"{text}", text},
  }};
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool replaced = false;
    if (tmpl[i] == '{') {
      for (const auto& [key, value] : fields) {
        if (tmpl.substr(i, key.size()) == key) {
          out += value;
          i += key.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out += tmpl[i++];
  }
  return out;
}

InstructionExample make_translation_instruction(const corpus::ParallelPair& pair, bool noisy, std::uint64_t seed,
                                                const TranslationOptions& options) {
  if (pair.src_lang == pair.tgt_lang || pair.src_text.empty() || pair.tgt_text.empty()) {
    throw Error("bad_pair", "parallel pair must have distinct languages and non-empty sides");
  }
  std::string source = pair.src_text;
  if (noisy) {
    auto n = asr_noise(pair.src_text, options.noise, seed);
    if (!n.text.empty()) source = std::move(n.text);
  }
  InstructionExample ex;
  ex.category = Category::translation;
  ex.turns = {{Role::user, fill_prompt(options.prompt_template, pair.src_lang.name(), pair.tgt_lang.name(), source)},
              {Role::assistant, pair.tgt_text}};
  ex.langs = {pair.src_lang, pair.tgt_lang};
  return ex;
}

InstructionExample concat_conversations(std::span<const InstructionExample> examples, std::uint64_t seed,
                                        std::size_t max_turns) {
  if (examples.empty()) throw Error("bad_params", "concat_conversations needs at least one example");
  for (const auto& ex : examples) ex.validate();
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  InstructionExample out = examples[order[0]];
  for (std::size_t k = 1; k < order.size(); ++k) {
    const auto& next = examples[order[k]];
    if (out.turns.size() + next.turns.size() > max_turns) break;
    out.turns.insert(out.turns.end(), next.turns.begin(), next.turns.end());
    out.langs.insert(next.langs.begin(), next.langs.end());
  }
  out.validate();
  return out;
}

// ---------------------------------------------------------------- packing

std::vector<PackedSequence> pack(std::span<const TokenStream> streams, std::size_t max_len) {
  if (max_len == 0) throw Error("bad_params", "max_len must be > 0");
  std::vector<PackedSequence> seqs;
  std::size_t first_open = 0;  // every sequence before this one is full
  for (const auto& s : streams) {
    for (std::size_t offset = 0; offset < s.tokens.size(); offset += max_len) {
      const std::size_t len = std::min(max_len, s.tokens.size() - offset);
      while (first_open < seqs.size() && seqs[first_open].token_ids.size() == max_len) ++first_open;
      std::size_t target = first_open;
      while (target < seqs.size() && max_len - seqs[target].token_ids.size() < len) ++target;
      if (target == seqs.size()) seqs.emplace_back();

      auto& seq = seqs[target];
      const std::size_t start = seq.token_ids.size();
      const auto segment = static_cast<std::uint32_t>(seq.spans.size());
      seq.token_ids.insert(seq.token_ids.end(), s.tokens.begin() + static_cast<std::ptrdiff_t>(offset),
                           s.tokens.begin() + static_cast<std::ptrdiff_t>(offset + len));
      seq.segment_ids.insert(seq.segment_ids.end(), len, segment);
      seq.spans.push_back({s.doc_id, offset, start, start + len});
    }
  }
  return seqs;
}

std::size_t batch_spec(std::size_t tokens_per_batch, std::size_t max_len) {
  if (max_len == 0 || tokens_per_batch == 0 || tokens_per_batch % max_len != 0) {
    throw Error("bad_params", std::to_string(tokens_per_batch) + " tokens per batch is not a multiple of " +
                                  std::to_string(max_len));
  }
  return tokens_per_batch / max_len;
}

namespace {

constexpr std::string_view kPackedMagic = "SVPK";

void put_u32(std::string& out, std::uint64_t v) {
  if (v > UINT32_MAX) throw Error("bad_params", "value does not fit the packed format");
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error("bad_packed_format", "truncated packed file");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void rebuild_segments(PackedSequence& seq) {
  seq.segment_ids.assign(seq.token_ids.size(), 0);
  std::size_t expected = 0;
  for (std::size_t k = 0; k < seq.spans.size(); ++k) {
    const auto& sp = seq.spans[k];
    if (sp.start != expected || sp.end <= sp.start || sp.end > seq.token_ids.size()) {
      throw Error("bad_packed_format", "spans do not tile the sequence");
    }
    std::fill(seq.segment_ids.begin() + static_cast<std::ptrdiff_t>(sp.start),
              seq.segment_ids.begin() + static_cast<std::ptrdiff_t>(sp.end), static_cast<std::uint32_t>(k));
    expected = sp.end;
  }
  if (expected != seq.token_ids.size()) throw Error("bad_packed_format", "spans do not tile the sequence");
}

}  // namespace

std::string write_packed_binary(std::span<const PackedSequence> seqs) {
  std::string out(kPackedMagic);
  out += static_cast<char>(kPackedFormatVersion);
  put_u32(out, seqs.size());
  for (const auto& s : seqs) {
    put_u32(out, s.token_ids.size());
    for (TokenId id : s.token_ids) put_u32(out, static_cast<std::uint32_t>(id));
    put_u32(out, s.spans.size());
    for (const auto& sp : s.spans) {
      put_u32(out, sp.doc_id.size());
      out += sp.doc_id;
      put_u32(out, sp.doc_offset);
      put_u32(out, sp.start);
      put_u32(out, sp.end);
    }
  }
  return out;
}

std::vector<PackedSequence> read_packed_binary(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kPackedMagic.size()) != kPackedMagic) throw Error("bad_packed_format", "missing SVPK magic");
  const auto version = static_cast<std::uint8_t>(r.take(1)[0]);
  if (version != kPackedFormatVersion) {
    throw Error("bad_packed_format", "unsupported packed format version " + std::to_string(version));
  }
  std::vector<PackedSequence> seqs(r.u32());
  for (auto& s : seqs) {
    s.token_ids.resize(r.u32());
    for (auto& id : s.token_ids) id = static_cast<TokenId>(r.u32());
    s.spans.resize(r.u32());
    for (auto& sp : s.spans) {
      sp.doc_id = std::string(r.take(r.u32()));
      sp.doc_offset = r.u32();
      sp.start = r.u32();
      sp.end = r.u32();
    }
    rebuild_segments(s);
  }
  if (!r.done()) throw Error("bad_packed_format", "trailing bytes after last sequence");
  return seqs;
}

std::string write_packed_jsonl(std::span<const PackedSequence> seqs) {
  std::vector<nlohmann::json> lines;
  lines.push_back({{"format", "savanna-packed"}, {"version", kPackedFormatVersion}});
  for (const auto& s : seqs) {
    nlohmann::json spans = nlohmann::json::array();
    for (const auto& sp : s.spans) {
      spans.push_back({{"doc_id", sp.doc_id}, {"doc_offset", sp.doc_offset}, {"start", sp.start}, {"end", sp.end}});
    }
    lines.push_back({{"tokens", s.token_ids}, {"segments", s.segment_ids}, {"spans", spans}});
  }
  return io::to_jsonl(lines);
}

std::vector<PackedSequence> read_packed_jsonl(std::string_view text) {
  const auto lines = io::parse_jsonl(text);
  if (lines.empty() || lines[0].value("format", "") != "savanna-packed") {
    throw Error("bad_packed_format", "missing packed JSONL header");
  }
  if (lines[0].value("version", 0) != kPackedFormatVersion) {
    throw Error("bad_packed_format", "unsupported packed format version");
  }
  std::vector<PackedSequence> seqs;
  try {
    for (std::size_t i = 1; i < lines.size(); ++i) {
      PackedSequence s;
      s.token_ids = lines[i].at("tokens").get<std::vector<TokenId>>();
      for (const auto& sp : lines[i].at("spans")) {
        s.spans.push_back({sp.at("doc_id").get<std::string>(), sp.at("doc_offset").get<std::size_t>(),
                           sp.at("start").get<std::size_t>(), sp.at("end").get<std::size_t>()});
      }
      rebuild_segments(s);
      seqs.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_packed_format", e.what());
  }
  return seqs;
}

// ---------------------------------------------------------------- dataset

DatasetResult build_dataset(std::span<const corpus::ParallelPair> pairs, std::span<const InstructionExample> pool,
                            const DatasetOptions& options, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<InstructionExample> picked;

  // Each pair can be used in either direction.
  std::vector<std::size_t> candidates(pairs.size() * 2);
  for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i] = i;
  rng.shuffle(candidates);
  candidates.resize(std::min(candidates.size(), options.translation_count));

  DatasetResult result;
  for (std::size_t c : candidates) {
    auto pair = pairs[c / 2];
    if (c % 2 == 1) {
      std::swap(pair.src_lang, pair.tgt_lang);
      std::swap(pair.src_text, pair.tgt_text);
    }
    const bool noisy = rng.uniform() < options.noisy_fraction;
    result.noisy_examples += noisy ? 1 : 0;
    picked.push_back(make_translation_instruction(pair, noisy, rng.next(), options.translation));
  }

  std::vector<std::size_t> conv(pool.size());
  for (std::size_t i = 0; i < conv.size(); ++i) conv[i] = i;
  rng.shuffle(conv);
  conv.resize(std::min(conv.size(), options.conversational_count));
  for (std::size_t i : conv) {
    pool[i].validate();
    picked.push_back(pool[i]);
  }
  for (const auto& ex : picked) ++result.category_counts[ex.category];

  rng.shuffle(picked);
  for (std::size_t i = 0; i < picked.size();) {
    std::size_t end = i + 1;
    if (rng.uniform() < options.multi_turn_fraction) {
      std::size_t turns = picked[i].turns.size();
      while (end < picked.size() && end - i < 3 && turns + picked[end].turns.size() <= options.max_turns) {
        turns += picked[end].turns.size();
        ++end;
      }
    }
    if (end - i == 1) {
      result.examples.push_back(std::move(picked[i]));
    } else {
      result.examples.push_back(concat_conversations(std::span(picked).subspan(i, end - i), rng.next(), options.max_turns));
      ++result.multi_turn_conversations;
    }
    i = end;
  }
  return result;
}

nlohmann::json to_json(const DatasetResult& r) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [c, n] : r.category_counts) counts[std::string(to_string(c))] = n;
  return {{"examples", r.examples.size()},
          {"category_counts", counts},
          {"noisy_examples", r.noisy_examples},
          {"multi_turn_conversations", r.multi_turn_conversations}};
}

}  // namespace savanna::instruct
