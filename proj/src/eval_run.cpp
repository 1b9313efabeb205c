#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <thread>

#include <nlohmann/json.hpp>

#include "savanna/error.hpp"
#include "savanna/evalharness.hpp"
#include "savanna/http.hpp"
#include "savanna/instruct.hpp"
#include "savanna/textnorm.hpp"
#include "savanna/util.hpp"

namespace savanna::eval {

namespace {

template <typename F>
void for_each_bounded(std::size_t n, std::size_t parallel, F&& f) {
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) f(i);
  };
  const std::size_t threads = std::min(std::max<std::size_t>(parallel, 1), std::max<std::size_t>(n, 1));
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
}

struct CallOutcome {
  std::string response;
  std::string error;
  int attempts = 0;
  double latency_ms = 0.0;
  bool ok = false;
};

CallOutcome call_with_retries(ChatClient& client, const ChatRequest& request, const ModelEndpoint& endpoint) {
  CallOutcome out;
  auto backoff = endpoint.backoff;
  for (int attempt = 0; attempt <= endpoint.retries; ++attempt) {
    out.attempts = attempt + 1;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out.response = client.complete(request);
      out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      out.ok = true;
      out.error.clear();
      return out;
    } catch (const std::exception& e) {
      out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      out.error = e.what();
    }
    if (attempt < endpoint.retries && backoff.count() > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  return out;
}

std::string request_id(const Direction& d, const std::string& segment_id) { return d.str() + "/" + segment_id; }

std::string prompt_for(const std::string& tmpl, const Segment& s) {
  return instruct::fill_prompt(tmpl, s.direction.src.name(), s.direction.tgt.name(), s.source);
}

std::string effective_template(const TranslationOptions& options) {
  return options.prompt_template.empty() ? std::string(instruct::kDefaultTranslationPrompt) : options.prompt_template;
}

nlohmann::json scores_json(const metrics::SentenceScores& s) {
  return {{"chrf", s.chrf}, {"bleu", s.bleu}, {"cer", s.cer}, {"wer", s.wer}};
}

metrics::SentenceScores scores_from(const nlohmann::json& j) {
  return {j.at("chrf").get<double>(), j.at("bleu").get<double>(), j.at("cer").get<double>(),
          j.at("wer").get<double>()};
}

std::string_view scheme_name(metrics::AggregateScheme s) {
  return s == metrics::AggregateScheme::corpus_level ? "corpus_level" : "mean_of_sentences";
}

metrics::AggregateScheme scheme_from(std::string_view s) {
  if (s == "corpus_level") return metrics::AggregateScheme::corpus_level;
  if (s == "mean_of_sentences") return metrics::AggregateScheme::mean_of_sentences;
  throw Error("bad_report", "unknown aggregate scheme '" + std::string(s) + "'");
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string prompt_hash(std::string_view prompt_template) { return hex64(fnv1a64(prompt_template)); }

// ------------------------------------------------------------------- log

std::string write_run_log(const RunLog& log) {
  const auto& h = log.header;
  nlohmann::json dirs = nlohmann::json::array();
  for (const auto& d : h.directions) dirs.push_back(d.str());
  std::vector<nlohmann::json> lines;
  lines.push_back({{"type", "header"},
                   {"model", h.model},
                   {"endpoint", h.endpoint},
                   {"client", h.client},
                   {"prompt_template", h.prompt_template},
                   {"prompt_hash", h.prompt_hash},
                   {"granularity", to_string(h.granularity)},
                   {"suite_fingerprint", h.suite_fingerprint},
                   {"directions", dirs},
                   {"temperature", h.temperature},
                   {"started_at", h.started_at}});
  for (const auto& r : log.records) {
    lines.push_back({{"id", r.id},
                     {"direction", r.direction.str()},
                     {"prompt", r.prompt},
                     {"response", r.response},
                     {"latency_ms", r.latency_ms},
                     {"status", r.status},
                     {"error", r.error},
                     {"attempts", r.attempts}});
  }
  return io::to_jsonl(lines);
}

RunLog parse_run_log(std::string_view jsonl) {
  const auto lines = io::parse_jsonl(jsonl);
  if (lines.empty() || lines[0].value("type", "") != "header") throw Error("bad_run_log", "run log has no header line");
  RunLog log;
  try {
    const auto& h = lines[0];
    log.header.model = h.at("model").get<std::string>();
    log.header.endpoint = h.at("endpoint").get<std::string>();
    log.header.client = h.value("client", "");
    log.header.prompt_template = h.at("prompt_template").get<std::string>();
    log.header.prompt_hash = h.at("prompt_hash").get<std::string>();
    log.header.granularity = granularity_from_string(h.at("granularity").get<std::string>());
    log.header.suite_fingerprint = h.at("suite_fingerprint").get<std::string>();
    for (const auto& d : h.at("directions")) log.header.directions.push_back(Direction::parse(d.get<std::string>()));
    log.header.temperature = h.value("temperature", 0.0);
    log.header.started_at = h.value("started_at", "");
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto& j = lines[i];
      log.records.push_back({j.at("id").get<std::string>(), Direction::parse(j.at("direction").get<std::string>()),
                             j.at("prompt").get<std::string>(), j.at("response").get<std::string>(),
                             j.at("latency_ms").get<double>(), j.at("status").get<std::string>(),
                             j.value("error", ""), j.value("attempts", 1)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_run_log", std::string("malformed run log: ") + e.what());
  }
  if (log.header.prompt_hash != prompt_hash(log.header.prompt_template)) {
    throw Error("bad_run_log", "prompt hash does not match the logged template");
  }
  return log;
}

// ---------------------------------------------------------------- running

std::unique_ptr<ChatClient> make_client(const ModelEndpoint& endpoint, const EvalSuite& suite,
                                        std::span<const Direction> directions, Granularity granularity) {
  endpoint.validate();
  if (!endpoint.is_stub()) return make_http_client(endpoint);
  if (endpoint.base_url == "stub:echo") {
    std::map<std::string, std::string> answers;
    for (const auto& d : directions) {
      for (const auto& s : make_segments(suite, d, granularity)) answers[request_id(d, s.id)] = s.reference;
    }
    return std::make_unique<StubChatClient>("stub:echo", std::move(answers));
  }
  if (endpoint.base_url == "stub:empty") return std::make_unique<StubChatClient>("stub:empty");
  throw Error("bad_endpoint", "stub '" + endpoint.base_url + "' cannot run translation evaluation");
}

RunLog run_translation(const EvalSuite& suite, const ModelEndpoint& endpoint, ChatClient& client,
                       std::span<const Direction> directions, Granularity granularity,
                       const TranslationOptions& options) {
  endpoint.validate();
  if (directions.empty()) throw Error("bad_direction", "no directions requested");
  const std::string tmpl = effective_template(options);

  std::vector<Segment> segments;
  for (const auto& d : directions) {
    auto s = make_segments(suite, d, granularity);
    segments.insert(segments.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }

  RunLog log;
  log.header = {endpoint.name,         endpoint.base_url, client.identity(),
                tmpl,                  prompt_hash(tmpl), granularity,
                suite.fingerprint(),   {directions.begin(), directions.end()},
                endpoint.temperature,  http::utc_timestamp()};
  log.records.resize(segments.size());

  for_each_bounded(segments.size(), endpoint.max_parallel, [&](std::size_t i) {
    const auto& s = segments[i];
    ChatRequest req{request_id(s.direction, s.id), endpoint.model.empty() ? endpoint.name : endpoint.model,
                    {{"user", prompt_for(tmpl, s)}}, endpoint.temperature};
    const auto outcome = call_with_retries(client, req, endpoint);
    log.records[i] = {s.id,        s.direction,  req.messages[0].content,        outcome.response,
                      outcome.latency_ms, outcome.ok ? "ok" : "failed", outcome.error, outcome.attempts};
  });
  return log;
}

// ---------------------------------------------------------------- scoring

const DirectionReport& EvalReport::at(const Direction& d) const {
  for (const auto& r : directions) {
    if (r.direction == d) return r;
  }
  throw Error("bad_direction", "report has no direction " + d.str());
}

EvalReport score_run(const RunLog& log, const EvalSuite& suite, const TranslationOptions& options) {
  if (log.header.suite_fingerprint != suite.fingerprint()) {
    throw Error("mismatched_suites", "run log was produced on a different suite");
  }
  std::map<std::string, const RunRecord*> by_key;
  for (const auto& r : log.records) by_key[request_id(r.direction, r.id)] = &r;

  const auto profile = textnorm::metric_profile();
  EvalReport report;
  report.model = log.header.model;
  report.prompt_hash = log.header.prompt_hash;
  report.suite_fingerprint = log.header.suite_fingerprint;
  report.granularity = log.header.granularity;
  report.scheme = options.scheme;

  for (const auto& d : log.header.directions) {
    DirectionReport dr;
    dr.direction = d;
    std::vector<metrics::TextPair> pairs;
    std::vector<std::string> ids;
    for (const auto& s : make_segments(suite, d, log.header.granularity)) {
      ++dr.segments;
      const auto it = by_key.find(request_id(d, s.id));
      if (it == by_key.end() || it->second->status != "ok") {
        ++dr.failed;
        continue;
      }
      pairs.push_back({textnorm::normalize(clean_hypothesis(it->second->response), profile),
                       textnorm::normalize(s.reference, profile)});
      ids.push_back(s.id);
    }
    const auto results = metrics::score_pairs(pairs);
    for (std::size_t i = 0; i < results.size(); ++i) dr.per_segment.push_back({ids[i], results[i].scores});
    if (!results.empty()) dr.aggregate = metrics::aggregate(results, options.scheme);
    dr.valid = dr.segments > 0 && static_cast<double>(dr.failed) <= options.max_failure_rate * static_cast<double>(dr.segments);
    report.valid = report.valid && dr.valid;
    report.directions.push_back(std::move(dr));
  }
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json dirs = nlohmann::json::array();
  for (const auto& d : r.directions) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : d.per_segment) {
      auto j = scores_json(s.scores);
      j["id"] = s.id;
      per.push_back(j);
    }
    dirs.push_back({{"direction", d.direction.str()},
                    {"segments", d.segments},
                    {"failed", d.failed},
                    {"valid", d.valid},
                    {"aggregate", d.aggregate ? scores_json(*d.aggregate) : nlohmann::json(nullptr)},
                    {"per_segment", per}});
  }
  return {{"model", r.model},
          {"prompt_hash", r.prompt_hash},
          {"suite_fingerprint", r.suite_fingerprint},
          {"granularity", to_string(r.granularity)},
          {"scheme", scheme_name(r.scheme)},
          {"valid", r.valid},
          {"directions", dirs}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.model = j.at("model").get<std::string>();
    r.prompt_hash = j.at("prompt_hash").get<std::string>();
    r.suite_fingerprint = j.at("suite_fingerprint").get<std::string>();
    r.granularity = granularity_from_string(j.at("granularity").get<std::string>());
    r.scheme = scheme_from(j.at("scheme").get<std::string>());
    r.valid = j.at("valid").get<bool>();
    for (const auto& d : j.at("directions")) {
      DirectionReport dr;
      dr.direction = Direction::parse(d.at("direction").get<std::string>());
      dr.segments = d.at("segments").get<std::size_t>();
      dr.failed = d.at("failed").get<std::size_t>();
      dr.valid = d.at("valid").get<bool>();
      if (!d.at("aggregate").is_null()) dr.aggregate = scores_from(d["aggregate"]);
      for (const auto& s : d.at("per_segment")) dr.per_segment.push_back({s.at("id").get<std::string>(), scores_from(s)});
      r.directions.push_back(std::move(dr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_report", std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string render_report_json(const EvalReport& r) { return to_json(r).dump(2) + "\n"; }

std::string render_report_markdown(const EvalReport& r) {
  std::string out = "# Translation evaluation: " + r.model + "\n\n";
  out += "- prompt hash: `" + r.prompt_hash + "`\n";
  out += "- suite: `" + r.suite_fingerprint + "`\n";
  out += "- granularity: " + std::string(to_string(r.granularity)) + ", aggregation: " +
         std::string(scheme_name(r.scheme)) + "\n";
  out += std::string("- valid: ") + (r.valid ? "yes" : "no") + "\n\n";
  out += "| Direction | Segments | Failed | chrF | BLEU | CER | WER |\n";
  out += "|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& d : r.directions) {
    out += "| " + d.direction.str() + " | " + std::to_string(d.segments) + " | " + std::to_string(d.failed) + " | ";
    if (d.aggregate) {
      out += fixed(d.aggregate->chrf) + " | " + fixed(d.aggregate->bleu) + " | " + fixed(d.aggregate->cer) + " | " +
             fixed(d.aggregate->wer) + " |\n";
    } else {
      out += "n/a | n/a | n/a | n/a |\n";
    }
  }
  return out;
}

// -------------------------------------------------------------------- MCQ

void McqItem::validate() const {
  if (choices.size() < 2 || choices.size() > 26) throw Error("bad_mcq", id + ": needs 2..26 choices");
  if (answer_index < 0 || static_cast<std::size_t>(answer_index) >= choices.size()) {
    throw Error("bad_mcq", id + ": answer_index out of range");
  }
  if (question.empty()) throw Error("bad_mcq", id + ": empty question");
}

McqItem mcq_from_json(const nlohmann::json& j) {
  McqItem m;
  try {
    m.id = j.at("id").get<std::string>();
    m.question = j.at("question").get<std::string>();
    m.choices = j.at("choices").get<std::vector<std::string>>();
    m.answer_index = j.at("answer_index").get<int>();
    m.lang = LangCode::parse(j.at("lang").get<std::string>());
    const auto mode = j.value("mode", std::string("direct"));
    if (mode == "direct") m.mode = McqMode::direct;
    else if (mode == "translate_test") m.mode = McqMode::translate_test;
    else throw Error("bad_mcq", "unknown mode '" + mode + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_mcq", std::string("malformed MCQ item: ") + e.what());
  }
  m.validate();
  return m;
}

std::string mcq_prompt(const McqItem& item) {
  std::string out = item.question + "\n\n";
  for (std::size_t i = 0; i < item.choices.size(); ++i) {
    out += static_cast<char>('A' + i);
    out += ". " + item.choices[i] + "\n";
  }
  out += "\nAnswer with the letter of the correct option.";
  return out;
}

std::optional<int> extract_choice(std::string_view reply, std::span<const std::string> choices) {
  const auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  const char last = static_cast<char>('A' + std::min<std::size_t>(choices.size(), 26) - 1);
  for (std::size_t i = 0; i < reply.size(); ++i) {
    const char c = reply[i];
    if (c < 'A' || c > last) continue;
    const bool left_ok = i == 0 || !alnum(reply[i - 1]);
    const bool right_ok = i + 1 == reply.size() || !alnum(reply[i + 1]);
    if (left_ok && right_ok) return c - 'A';
  }
  const auto lower = [](std::string_view s) {
    std::string out(s);
    for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
  };
  const auto hay = lower(reply);
  std::optional<int> found;
  for (std::size_t k = 0; k < choices.size(); ++k) {
    if (choices[k].empty() || hay.find(lower(choices[k])) == std::string::npos) continue;
    if (found) return std::nullopt;
    found = static_cast<int>(k);
  }
  return found;
}

McqReport run_mcq(std::span<const McqItem> items, const ModelEndpoint& endpoint, ChatClient& client) {
  if (items.empty()) throw Error("bad_mcq", "no MCQ items");
  endpoint.validate();
  for (const auto& it : items) it.validate();

  McqReport report;
  report.records.resize(items.size());
  for_each_bounded(items.size(), endpoint.max_parallel, [&](std::size_t i) {
    const auto& item = items[i];
    ChatRequest req{item.id, endpoint.model.empty() ? endpoint.name : endpoint.model,
                    {{"user", mcq_prompt(item)}}, endpoint.temperature};
    const auto outcome = call_with_retries(client, req, endpoint);
    auto& rec = report.records[i];
    rec.id = item.id;
    rec.lang = item.lang.str();
    rec.response = outcome.response;
    if (!outcome.ok) {
      rec.status = "failed";
      rec.response = outcome.error;
      return;
    }
    rec.extracted = extract_choice(outcome.response, item.choices);
    rec.status = rec.extracted ? "ok" : "unparseable";
    rec.correct = rec.extracted && *rec.extracted == item.answer_index;
  });

  std::map<std::string, std::size_t> correct;
  for (const auto& rec : report.records) {
    ++report.counts[rec.lang];
    correct[rec.lang] += rec.correct ? 1 : 0;
    report.unparseable += rec.status == "unparseable" ? 1 : 0;
    report.failed += rec.status == "failed" ? 1 : 0;
  }
  for (const auto& [lang, n] : report.counts) {
    report.accuracy[lang] = static_cast<double>(correct[lang]) / static_cast<double>(n);
  }
  return report;
}

std::map<std::string, std::string> mcq_gold_answers(std::span<const McqItem> items) {
  std::map<std::string, std::string> out;
  for (const auto& it : items) out[it.id] = std::string(1, static_cast<char>('A' + it.answer_index));
  return out;
}

nlohmann::json to_json(const McqReport& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rec : r.records) {
    records.push_back({{"id", rec.id},
                       {"lang", rec.lang},
                       {"response", rec.response},
                       {"extracted", rec.extracted ? nlohmann::json(std::string(1, static_cast<char>('A' + *rec.extracted)))
                                                   : nlohmann::json(nullptr)},
                       {"correct", rec.correct},
                       {"status", rec.status}});
  }
  return {{"accuracy", r.accuracy},
          {"counts", r.counts},
          {"unparseable", r.unparseable},
          {"failed", r.failed},
          {"records", records}};
}

}  // namespace savanna::eval
