#include "savanna/corpus.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <charconv>
#include <mutex>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "savanna/error.hpp"
#include "savanna/http.hpp"
#include "savanna/util.hpp"

namespace savanna::corpus {

namespace {

constexpr std::array<std::string_view, 8> kSourceNames = {
    "web", "book_ocr", "radio_transcript", "dictionary",
    "community", "parallel", "bible", "synthetic_bt",
};

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = s.find(sep, start);
    if (end == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
}

int parse_positive(std::string_view s, const char* what, std::size_t line) {
  int value = 0;
  s = trim(s);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || value < 1) {
    throw Error("bad_bible_tsv", "line " + std::to_string(line) + ": " + what + " must be an integer >= 1");
  }
  return value;
}

}  // namespace

std::string_view to_string(Source s) { return kSourceNames[static_cast<std::size_t>(s)]; }

Source source_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kSourceNames.size(); ++i) {
    if (kSourceNames[i] == s) return static_cast<Source>(i);
  }
  throw Error("unknown_source", "unknown document source '" + std::string(s) + "'");
}

CorpusDocument make_document(LangCode lang, std::string text, Source source, std::string license_note) {
  CorpusDocument doc;
  doc.id = hex64(fnv1a64(text, fnv1a64(lang.str() + "\x1f" + std::string(to_string(source)) + "\x1f")));
  doc.lang = std::move(lang);
  doc.char_count = textnorm::scalar_count(text);
  doc.text = std::move(text);
  doc.source = source;
  doc.license_note = std::move(license_note);
  return doc;
}

nlohmann::json to_json(const CorpusDocument& doc) {
  nlohmann::json j = {{"id", doc.id},
                      {"lang", doc.lang.str()},
                      {"text", doc.text},
                      {"source", to_string(doc.source)},
                      {"license_note", doc.license_note},
                      {"char_count", doc.char_count}};
  if (doc.provenance) {
    j["provenance"] = {{"source_doc_id", doc.provenance->source_doc_id},
                       {"client", doc.provenance->client},
                       {"timestamp", doc.provenance->timestamp}};
  }
  return j;
}

CorpusDocument document_from_json(const nlohmann::json& j) {
  try {
    CorpusDocument doc = make_document(LangCode::parse(j.at("lang").get<std::string>()),
                                       j.at("text").get<std::string>(),
                                       source_from_string(j.value("source", std::string("web"))),
                                       j.value("license_note", std::string()));
    if (j.contains("id")) doc.id = j["id"].get<std::string>();
    if (j.contains("provenance")) {
      const auto& p = j["provenance"];
      doc.provenance = Provenance{p.at("source_doc_id").get<std::string>(),
                                  p.at("client").get<std::string>(),
                                  p.at("timestamp").get<std::string>()};
    }
    if (doc.source == Source::synthetic_bt && !doc.provenance) {
      throw Error("bad_document", "synthetic_bt document " + doc.id + " has no provenance");
    }
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_document", std::string("malformed document record: ") + e.what());
  }
}

std::vector<CorpusDocument> read_documents(const std::filesystem::path& path) {
  std::vector<CorpusDocument> docs;
  for (const auto& j : io::read_jsonl(path)) docs.push_back(document_from_json(j));
  return docs;
}

void write_documents(const std::filesystem::path& path, std::span<const CorpusDocument> docs) {
  std::vector<nlohmann::json> records;
  records.reserve(docs.size());
  for (const auto& d : docs) records.push_back(to_json(d));
  io::write_file(path, io::to_jsonl(records));
}

std::vector<CorpusDocument> clean_documents(std::span<const CorpusDocument> docs,
                                            const textnorm::NormProfile& profile,
                                            CleanTotals* totals) {
  std::vector<CorpusDocument> cleaned(docs.begin(), docs.end());
  std::vector<textnorm::CleanReport> reports(docs.size());
  const auto n = static_cast<long>(docs.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (long i = 0; i < n; ++i) {
    auto& doc = cleaned[static_cast<std::size_t>(i)];
    auto [text, report] = textnorm::clean_document(doc.text, profile);
    doc.text = std::move(text);
    doc.char_count = report.chars_out;
    reports[static_cast<std::size_t>(i)] = report;
  }

  CleanTotals t;
  t.docs_in = docs.size();
  std::vector<CorpusDocument> out;
  out.reserve(cleaned.size());
  for (std::size_t i = 0; i < cleaned.size(); ++i) {
    t.report.chars_in += reports[i].chars_in;
    t.report.chars_out += reports[i].chars_out;
    t.report.control_removed += reports[i].control_removed;
    t.report.artifacts_removed += reports[i].artifacts_removed;
    if (!cleaned[i].text.empty()) out.push_back(std::move(cleaned[i]));
  }
  t.docs_out = out.size();
  if (totals) *totals = t;
  return out;
}

// ------------------------------------------------------------------ dedup

std::vector<std::string_view> split_paragraphs(std::string_view text) {
  std::vector<std::string_view> paragraphs;
  std::size_t para_start = std::string_view::npos;
  std::size_t para_end = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    if (trim(line).empty()) {
      if (para_start != std::string_view::npos) {
        paragraphs.push_back(text.substr(para_start, para_end - para_start));
        para_start = std::string_view::npos;
      }
    } else {
      if (para_start == std::string_view::npos) para_start = pos;
      para_end = end;
    }
    pos = end + 1;
  }
  if (para_start != std::string_view::npos) {
    paragraphs.push_back(text.substr(para_start, para_end - para_start));
  }
  return paragraphs;
}

Deduplicator::Hashes Deduplicator::hash(const CorpusDocument& doc) {
  Hashes h;
  h.document = fnv1a64(doc.text);
  for (auto p : split_paragraphs(doc.text)) h.paragraphs.push_back(fnv1a64(p));
  return h;
}

std::optional<CorpusDocument> Deduplicator::push(CorpusDocument doc) {
  const Hashes h = hash(doc);
  return push(std::move(doc), h);
}

std::optional<CorpusDocument> Deduplicator::push(CorpusDocument doc, const Hashes& hashes) {
  ++stats_.docs_in;
  stats_.chars_in += doc.char_count;
  if (!documents_.insert(hashes.document).second) {
    ++stats_.exact_duplicates;
    stats_.paragraphs_removed += hashes.paragraphs.size();
    return std::nullopt;
  }

  const auto paragraphs = split_paragraphs(doc.text);
  std::string kept;
  std::size_t removed = 0;
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    if (!paragraphs_.insert(hashes.paragraphs[i]).second) {
      ++removed;
      continue;
    }
    if (!kept.empty()) kept += "\n\n";
    kept += paragraphs[i];
  }
  stats_.paragraphs_removed += removed;
  if (removed > 0) {
    if (kept.empty()) return std::nullopt;
    doc.text = std::move(kept);
    doc.char_count = textnorm::scalar_count(doc.text);
    // The reduced text is itself now "seen", so a later exact copy of it goes.
    documents_.insert(fnv1a64(doc.text));
  }
  ++stats_.docs_out;
  stats_.chars_out += doc.char_count;
  return doc;
}

std::vector<CorpusDocument> dedup(std::span<const CorpusDocument> docs, DedupStats* stats) {
  std::vector<Deduplicator::Hashes> hashes(docs.size());
  const auto n = static_cast<long>(docs.size());
#pragma omp parallel for schedule(dynamic, 32)
  for (long i = 0; i < n; ++i) {
    hashes[static_cast<std::size_t>(i)] = Deduplicator::hash(docs[static_cast<std::size_t>(i)]);
  }
  Deduplicator d;
  std::vector<CorpusDocument> out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (auto kept = d.push(docs[i], hashes[i])) out.push_back(std::move(*kept));
  }
  if (stats) *stats = d.stats();
  return out;
}

std::vector<CorpusDocument> dedup_serial(std::span<const CorpusDocument> docs, DedupStats* stats) {
  Deduplicator d;
  std::vector<CorpusDocument> out;
  for (const auto& doc : docs) {
    if (auto kept = d.push(doc)) out.push_back(std::move(*kept));
  }
  if (stats) *stats = d.stats();
  return out;
}

// ------------------------------------------------------------ bible align

std::string VerseRef::str() const {
  return book + " " + std::to_string(chapter) + ":" + std::to_string(verse);
}

BookTable BookTable::parse(std::string_view tsv) {
  BookTable table;
  std::size_t line_no = 0;
  for (auto line : split(tsv, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto cols = split(line, '\t');
    if (cols.size() < 2) {
      throw Error("bad_book_table", "line " + std::to_string(line_no) + ": expected code<TAB>name[<TAB>aliases]");
    }
    const std::string code(trim(cols[0]));
    table.codes_.push_back(code);
    std::vector<std::string_view> names = {cols[0], cols[1]};
    if (cols.size() > 2) {
      for (auto alias : split(cols[2], ',')) names.push_back(alias);
    }
    for (auto name : names) {
      const auto key = lower_ascii(trim(name));
      if (key.empty()) continue;
      auto [it, inserted] = table.lookup_.emplace(key, code);
      if (!inserted && it->second != code) {
        throw Error("bad_book_table", "alias '" + key + "' maps to both " + it->second + " and " + code);
      }
    }
  }
  return table;
}

BookTable BookTable::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

const std::string& BookTable::canonical(std::string_view name) const {
  auto it = lookup_.find(lower_ascii(trim(name)));
  if (it == lookup_.end()) throw Error("unknown_book", "unknown Bible book '" + std::string(name) + "'");
  return it->second;
}

BibleEdition parse_bible_tsv(std::string_view tsv, LangCode lang, const BookTable& books) {
  BibleEdition edition{std::move(lang), {}};
  std::size_t line_no = 0;
  for (auto line : split(tsv, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() < 4) {
      throw Error("bad_bible_tsv", "line " + std::to_string(line_no) + ": expected book<TAB>chapter<TAB>verse<TAB>text");
    }
    std::string text(cols[3]);
    for (std::size_t k = 4; k < cols.size(); ++k) {
      text += '\t';
      text += cols[k];
    }
    edition.verses.emplace_back(VerseRef{books.canonical(cols[0]), parse_positive(cols[1], "chapter", line_no),
                                         parse_positive(cols[2], "verse", line_no)},
                                std::string(trim(text)));
  }
  return edition;
}

BibleEdition load_bible_tsv(const std::filesystem::path& path, LangCode lang, const BookTable& books) {
  return parse_bible_tsv(io::read_file(path), std::move(lang), books);
}

nlohmann::json to_json(const ParallelPair& p) {
  nlohmann::json j = {{"src_lang", p.src_lang.str()},
                      {"tgt_lang", p.tgt_lang.str()},
                      {"src_text", p.src_text},
                      {"tgt_text", p.tgt_text},
                      {"origin", to_string(p.origin)}};
  if (p.doc_id) j["doc_id"] = *p.doc_id;
  return j;
}

ParallelPair pair_from_json(const nlohmann::json& j) {
  try {
    ParallelPair p{LangCode::parse(j.at("src_lang").get<std::string>()),
                   LangCode::parse(j.at("tgt_lang").get<std::string>()),
                   j.at("src_text").get<std::string>(),
                   j.at("tgt_text").get<std::string>(),
                   source_from_string(j.value("origin", std::string("parallel"))),
                   std::nullopt};
    if (j.contains("doc_id") && !j["doc_id"].is_null()) p.doc_id = j["doc_id"].get<std::string>();
    if (p.src_lang == p.tgt_lang) throw Error("bad_pair", "src_lang equals tgt_lang");
    if (p.src_text.empty() || p.tgt_text.empty()) throw Error("bad_pair", "parallel pair has an empty side");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_pair", std::string("malformed parallel pair: ") + e.what());
  }
}

AlignmentResult align_bibles(const BibleEdition& a, const BibleEdition& b) {
  if (a.lang == b.lang) throw Error("bad_pair", "both editions are in " + a.lang.str());
  const auto index = [](const BibleEdition& e) {
    std::map<VerseRef, const std::string*> m;
    for (const auto& [ref, text] : e.verses) {
      if (!m.emplace(ref, &text).second) {
        throw Error("duplicate_verse", "duplicate verse " + ref.str() + " in " + e.lang.str() + " edition");
      }
    }
    return m;
  };
  const auto ma = index(a);
  const auto mb = index(b);

  AlignmentResult result;
  auto ia = ma.begin();
  auto ib = mb.begin();
  while (ia != ma.end() || ib != mb.end()) {
    if (ib == mb.end() || (ia != ma.end() && ia->first < ib->first)) {
      result.only_in_a.push_back((ia++)->first);
    } else if (ia == ma.end() || ib->first < ia->first) {
      result.only_in_b.push_back((ib++)->first);
    } else {
      if (trim(*ia->second).empty() || trim(*ib->second).empty()) {
        result.empty_side.push_back(ia->first);
      } else {
        result.pairs.push_back({a.lang, b.lang, *ia->second, *ib->second, Source::bible, ia->first.str()});
      }
      ++ia;
      ++ib;
    }
  }
  return result;
}

// -------------------------------------------------------- back-translation

HttpMtClient::HttpMtClient(std::string base_url, std::string path, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), path_(std::move(path)), timeout_(timeout) {}

std::string HttpMtClient::identity() const { return "http:" + base_url_ + path_; }

std::string HttpMtClient::translate(const std::string& text, const LangCode& source, const LangCode& target) {
  const nlohmann::json body = {{"text", text}, {"source", source.str()}, {"target", target.str()}};
  const auto res = http::post_json(base_url_, path_, body.dump(), {}, timeout_);
  if (res.status < 200 || res.status >= 300) {
    throw Error("transport", "MT service returned HTTP " + std::to_string(res.status));
  }
  try {
    return nlohmann::json::parse(res.body).at("translation").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("transport", std::string("malformed MT response: ") + e.what());
  }
}

BacktranslationResult backtranslate(std::span<const CorpusDocument> english_docs, const LangCode& target,
                                    MtClient& client, const BacktranslateOptions& options) {
  const LangCode eng = LangCode::parse("eng");
  if (target.is_english()) throw Error("bad_params", "back-translation target must not be eng");
  for (const auto& d : english_docs) {
    if (!d.lang.is_english()) throw Error("bad_params", "document " + d.id + " is not English");
  }
  const std::string timestamp = options.timestamp.empty() ? http::utc_timestamp() : options.timestamp;
  const int attempts_allowed = std::max(1, options.max_attempts);

  struct Slot {
    std::optional<std::string> translation;
    std::string error;
    int attempts = 0;
  };
  std::vector<Slot> slots(english_docs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < english_docs.size(); i = next++) {
      auto& slot = slots[i];
      auto backoff = options.initial_backoff;
      for (int attempt = 1; attempt <= attempts_allowed; ++attempt) {
        slot.attempts = attempt;
        try {
          slot.translation = client.translate(english_docs[i].text, eng, target);
          break;
        } catch (const std::exception& e) {
          slot.error = e.what();
          if (attempt < attempts_allowed && backoff.count() > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
          }
        }
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.max_parallel, 1, std::max<std::size_t>(1, english_docs.size()));
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();

  BacktranslationResult result;
  for (std::size_t i = 0; i < english_docs.size(); ++i) {
    const auto& src = english_docs[i];
    auto& slot = slots[i];
    if (!slot.translation || slot.translation->empty()) {
      result.errors.push_back({src.id, slot.translation ? "empty translation" : slot.error, slot.attempts});
      continue;
    }
    CorpusDocument doc = make_document(target, std::move(*slot.translation), Source::synthetic_bt, src.license_note);
    doc.provenance = Provenance{src.id, client.identity(), timestamp};
    result.documents.push_back(std::move(doc));
  }
  return result;
}

// ---------------------------------------------------------------- mixture

void MixtureSpec::validate() const {
  for (const auto& [s, w] : source_weights) {
    if (!(w >= 0.0)) throw Error("bad_mixture", "negative weight for source " + std::string(to_string(s)));
  }
  for (const auto& [l, w] : language_weights) {
    if (!(w >= 0.0)) throw Error("bad_mixture", "negative weight for language " + l);
  }
}

MixtureSpec mixture_from_json(const nlohmann::json& j) {
  MixtureSpec spec;
  if (j.contains("source_weights")) {
    for (const auto& [k, v] : j["source_weights"].items()) spec.source_weights[source_from_string(k)] = v.get<double>();
  }
  if (j.contains("language_weights")) {
    for (const auto& [k, v] : j["language_weights"].items()) {
      spec.language_weights[LangCode::parse(k).str()] = v.get<double>();
    }
  }
  spec.include_instruction_replay = j.value("include_instruction_replay", false);
  if (j.contains("sample_docs") && !j["sample_docs"].is_null()) spec.sample_docs = j["sample_docs"].get<std::size_t>();
  spec.validate();
  return spec;
}

nlohmann::json to_json(const MixtureSpec& spec) {
  nlohmann::json sw = nlohmann::json::object();
  for (const auto& [s, w] : spec.source_weights) sw[std::string(to_string(s))] = w;
  nlohmann::json lw = nlohmann::json::object();
  for (const auto& [l, w] : spec.language_weights) lw[l] = w;
  nlohmann::json j = {{"source_weights", sw},
                      {"language_weights", lw},
                      {"include_instruction_replay", spec.include_instruction_replay}};
  j["sample_docs"] = spec.sample_docs ? nlohmann::json(*spec.sample_docs) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const BucketManifest& b) {
  return {{"source", to_string(b.source)},     {"lang", b.lang},
          {"weight", b.weight},                {"available_docs", b.available_docs},
          {"selected_docs", b.selected_docs},  {"selected_chars", b.selected_chars}};
}

std::vector<std::size_t> stratified_allocation(std::span<const double> weights,
                                               std::span<const std::size_t> capacity, std::size_t total) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> alloc(n, 0);
  std::vector<bool> fixed(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(weights[i] > 0.0) || capacity[i] == 0) fixed[i] = true;
  }
  std::size_t remaining = total;
  while (remaining > 0) {
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!fixed[i]) wsum += weights[i];
    }
    if (wsum <= 0.0) break;

    std::vector<std::size_t> quota(n, 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (fixed[i]) continue;
      const double exact = static_cast<double>(remaining) * weights[i] / wsum;
      quota[i] = static_cast<std::size_t>(exact);
      assigned += quota[i];
      remainders.emplace_back(exact - static_cast<double>(quota[i]), i);
    }
    // Largest remainder first; ties go to the earlier bucket.
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    for (std::size_t k = 0; assigned < remaining && k < remainders.size(); ++k, ++assigned) {
      ++quota[remainders[k].second];
    }

    bool capped = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!fixed[i] && alloc[i] + quota[i] >= capacity[i]) {
        remaining -= capacity[i] - alloc[i];
        alloc[i] = capacity[i];
        fixed[i] = true;
        capped = true;
      }
    }
    if (!capped) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!fixed[i]) alloc[i] += quota[i];
      }
      remaining = 0;
    }
  }
  return alloc;
}

AssemblyResult assemble_pretraining(std::span<const CorpusDocument> docs, const MixtureSpec& spec,
                                    std::uint64_t seed, std::span<const CorpusDocument> instruction_replay) {
  spec.validate();
  using Key = std::pair<Source, std::string>;
  std::map<Key, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < docs.size(); ++i) buckets[{docs[i].source, docs[i].lang.str()}].push_back(i);

  const auto weight_of = [&](const Key& k) {
    const auto s = spec.source_weights.find(k.first);
    const auto l = spec.language_weights.find(k.second);
    return (s == spec.source_weights.end() ? 1.0 : s->second) *
           (l == spec.language_weights.end() ? 1.0 : l->second);
  };

  std::vector<Key> keys;
  std::vector<double> weights;
  std::vector<std::size_t> capacity;
  bool any_positive = false;
  for (const auto& [k, idx] : buckets) {
    keys.push_back(k);
    weights.push_back(weight_of(k));
    capacity.push_back(idx.size());
    any_positive = any_positive || weights.back() > 0.0;
  }
  if (!docs.empty() && !any_positive) throw Error("bad_mixture", "every mixture weight is zero");

  std::vector<std::size_t> take(keys.size());
  if (spec.sample_docs) {
    take = stratified_allocation(weights, capacity, *spec.sample_docs);
  } else {
    for (std::size_t b = 0; b < keys.size(); ++b) take[b] = weights[b] > 0.0 ? capacity[b] : 0;
  }

  AssemblyResult result;
  std::vector<std::size_t> selected;
  for (std::size_t b = 0; b < keys.size(); ++b) {
    auto idx = buckets[keys[b]];
    const std::string bucket_name = std::string(to_string(keys[b].first)) + "/" + keys[b].second;
    Rng rng(seed ^ fnv1a64(bucket_name));
    rng.shuffle(idx);
    idx.resize(take[b]);
    std::sort(idx.begin(), idx.end());

    BucketManifest m{keys[b].first, keys[b].second, weights[b], capacity[b], idx.size(), 0};
    for (std::size_t i : idx) m.selected_chars += docs[i].char_count;
    result.buckets.push_back(m);
    selected.insert(selected.end(), idx.begin(), idx.end());
  }
  std::sort(selected.begin(), selected.end());
  for (std::size_t i : selected) result.documents.push_back(docs[i]);

  if (spec.include_instruction_replay) {
    result.documents.insert(result.documents.end(), instruction_replay.begin(), instruction_replay.end());
    result.replay_docs = instruction_replay.size();
  }
  return result;
}

}  // namespace savanna::corpus
