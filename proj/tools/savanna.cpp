// savanna: command-line entry point.
//
//   savanna corpus   --config corpus.json   --out DIR [--seed N] [--input docs.jsonl]
//   savanna instruct --config instruct.json --out DIR [--seed N]
//   savanna eval     --config eval.json     --out DIR [--endpoint NAME] [--directions lug-eng,...]
//                    [--granularity sentence|document] [--rescore run.jsonl]
//   savanna report   --out DIR [--config report.json] [--fixtures DIR] [--reports a.json,b.json]
//   savanna loss     --out DIR [--config loss.json] [--input pairs.jsonl] [--beta B] [--alpha A]
//
// Relative paths inside a config file resolve against the config's directory.
// Failures print {"error": ..., "kind": ...} on stderr and exit 1.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "savanna/corpus.hpp"
#include "savanna/error.hpp"
#include "savanna/evalharness.hpp"
#include "savanna/http.hpp"
#include "savanna/instruct.hpp"
#include "savanna/preference_loss.hpp"
#include "savanna/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using savanna::Error;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

// Exclusive lock on the output directory for the lifetime of a command.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".savanna.lock") {
    fs::create_directories(dir);
    FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw Error("locked", "output directory is in use (remove " + path_.string() + " if stale)");
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

class Config {
 public:
  Config(const std::string& path) {
    if (path.empty()) {
      data_ = json::object();
      base_ = fs::current_path();
      return;
    }
    try {
      data_ = json::parse(savanna::io::read_file(path));
    } catch (const json::exception& e) {
      throw Error("bad_config", path + ": " + e.what());
    }
    if (!data_.is_object()) throw Error("bad_config", path + ": top level must be an object");
    base_ = fs::absolute(path).parent_path();
  }

  json& data() { return data_; }

  // Config paths resolve against the config file; flag paths are used as given.
  std::string path(const std::string& key) const {
    if (!data_.contains(key) || data_[key].is_null()) return {};
    return resolve(data_[key].get<std::string>());
  }
  std::string resolve(const std::string& p) const {
    if (p.empty() || fs::path(p).is_absolute() || p.starts_with("stub:") || p == "byte") return p;
    return (base_ / p).lexically_normal().string();
  }
  void set_path(const std::string& key, const std::string& flag_value) {
    if (!flag_value.empty()) data_[key] = fs::absolute(flag_value).lexically_normal().string();
  }

 private:
  json data_;
  fs::path base_;
};

std::uint64_t resolve_seed(const Common& c, Config& cfg) {
  std::uint64_t seed = cfg.data().value("seed", std::uint64_t{0});
  if (c.seed) seed = *c.seed;
  cfg.data()["seed"] = seed;
  return seed;
}

json metadata() { return {{"created_at", savanna::http::utc_timestamp()}, {"tool_version", kVersion}}; }

void write_json(const fs::path& p, const json& j) { savanna::io::write_file(p, j.dump(2) + "\n"); }

void snapshot(const fs::path& out, const std::string& command, const json& resolved) {
  write_json(out / "resolved_config.json", {{"command", command}, {"config", resolved}});
}

template <typename T, typename F>
std::vector<T> read_records(const std::string& path, F&& from_json) {
  std::vector<T> out;
  for (const auto& j : savanna::io::read_jsonl(path)) out.push_back(from_json(j));
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    if (end > start) out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

// ----------------------------------------------------------------- corpus

int cmd_corpus(const Common& c, const std::string& input_flag) {
  namespace sc = savanna::corpus;
  Config cfg(c.config_path);
  if (!input_flag.empty()) cfg.data()["inputs"] = json::array({fs::absolute(input_flag).lexically_normal().string()});
  const auto seed = resolve_seed(c, cfg);
  auto& d = cfg.data();
  if (!d.contains("inputs") || !d["inputs"].is_array() || d["inputs"].empty()) {
    throw Error("bad_config", "corpus needs \"inputs\": [paths to document JSONL]");
  }
  for (auto& p : d["inputs"]) p = cfg.resolve(p.get<std::string>());
  d["clean"] = d.value("clean", true);
  d["dedup"] = d.value("dedup", true);
  if (d.contains("instruction_replay")) d["instruction_replay"] = cfg.path("instruction_replay");
  std::optional<sc::MixtureSpec> mixture;
  if (d.contains("mixture")) {
    mixture = sc::mixture_from_json(d["mixture"]);
    d["mixture"] = sc::to_json(*mixture);
  }
  if (d.contains("backtranslate")) {
    auto& bt = d["backtranslate"];
    if (!bt.contains("url") || !bt.contains("target") || !bt.contains("input")) {
      throw Error("bad_config", "backtranslate needs url, target and input");
    }
    bt["input"] = cfg.resolve(bt["input"].get<std::string>());
  }

  const fs::path out(c.out);
  OutputLock lock(out);
  snapshot(out, "corpus", d);

  std::vector<sc::CorpusDocument> docs;
  for (const auto& p : d["inputs"]) {
    auto part = sc::read_documents(p.get<std::string>());
    docs.insert(docs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  std::size_t chars_in = 0;
  for (const auto& doc : docs) chars_in += doc.char_count;
  json manifest = {{"docs_in", docs.size()}, {"chars_in", chars_in}};

  if (d["clean"].get<bool>()) {
    sc::CleanTotals totals;
    docs = sc::clean_documents(docs, savanna::textnorm::corpus_profile(), &totals);
    manifest["clean"] = {{"docs_in", totals.docs_in},
                         {"docs_out", totals.docs_out},
                         {"chars_in", totals.report.chars_in},
                         {"chars_out", totals.report.chars_out},
                         {"control_removed", totals.report.control_removed},
                         {"artifacts_removed", totals.report.artifacts_removed}};
  }
  if (d["dedup"].get<bool>()) {
    sc::DedupStats stats;
    docs = sc::dedup(docs, &stats);
    manifest["dedup"] = {{"docs_in", stats.docs_in},
                         {"docs_out", stats.docs_out},
                         {"exact_duplicates", stats.exact_duplicates},
                         {"paragraphs_removed", stats.paragraphs_removed},
                         {"chars_in", stats.chars_in},
                         {"chars_out", stats.chars_out}};
  }
  std::size_t chars_out = 0;
  for (const auto& doc : docs) chars_out += doc.char_count;
  manifest["docs_out"] = docs.size();
  manifest["chars_out"] = chars_out;
  manifest["chars_ratio"] = chars_in ? static_cast<double>(chars_out) / static_cast<double>(chars_in) : 0.0;

  if (d.contains("backtranslate")) {
    const auto& bt = d["backtranslate"];
    sc::HttpMtClient client(bt["url"].get<std::string>());
    sc::BacktranslateOptions opt;
    opt.max_parallel = bt.value("max_parallel", std::size_t{4});
    opt.max_attempts = bt.value("max_attempts", 3);
    const auto english = sc::read_documents(bt["input"].get<std::string>());
    const auto res = sc::backtranslate(english, savanna::LangCode::parse(bt["target"].get<std::string>()), client, opt);
    std::vector<json> errors;
    for (const auto& e : res.errors) {
      errors.push_back({{"source_doc_id", e.source_doc_id}, {"message", e.message}, {"attempts", e.attempts}});
    }
    savanna::io::write_file(out / "backtranslation_errors.jsonl", savanna::io::to_jsonl(errors));
    manifest["backtranslate"] = {{"requested", english.size()},
                                 {"translated", res.documents.size()},
                                 {"failed", res.errors.size()},
                                 {"client", client.identity()}};
    docs.insert(docs.end(), res.documents.begin(), res.documents.end());
  }
  sc::write_documents(out / "documents.jsonl", docs);

  if (mixture) {
    std::vector<sc::CorpusDocument> replay;
    if (d.contains("instruction_replay")) replay = sc::read_documents(d["instruction_replay"].get<std::string>());
    const auto res = sc::assemble_pretraining(docs, *mixture, seed, replay);
    sc::write_documents(out / "pretraining.jsonl", res.documents);
    json buckets = json::array();
    for (const auto& b : res.buckets) buckets.push_back(sc::to_json(b));
    manifest["mixture"] = {{"docs", res.documents.size()}, {"replay_docs", res.replay_docs}, {"buckets", buckets}};
  }
  manifest["seed"] = seed;
  manifest["metadata"] = metadata();
  write_json(out / "manifest.json", manifest);
  std::cout << "corpus: " << manifest["docs_in"] << " docs in, " << docs.size() << " out, chars ratio "
            << manifest["chars_ratio"] << "\n";
  return 0;
}

// --------------------------------------------------------------- instruct

int cmd_instruct(const Common& c) {
  namespace si = savanna::instruct;
  namespace sc = savanna::corpus;
  Config cfg(c.config_path);
  const auto seed = resolve_seed(c, cfg);
  auto& d = cfg.data();
  for (const char* key : {"pairs", "pool", "preferences", "template"}) {
    if (d.contains(key)) d[key] = cfg.path(key);
  }
  if (!d.contains("template")) throw Error("bad_config", "instruct needs \"template\": chat template JSON");
  d["tokenizer"] = cfg.resolve(d.value("tokenizer", std::string("byte")));
  d["max_len"] = d.value("max_len", std::size_t{512});
  d["packed_format"] = d.value("packed_format", std::string("binary"));
  const auto format = d["packed_format"].get<std::string>();
  if (format != "binary" && format != "jsonl") throw Error("bad_config", "packed_format must be binary or jsonl");

  si::DatasetOptions opt;
  auto ds = d.value("dataset", json::object());
  opt.translation_count = ds.value("translation_count", opt.translation_count);
  opt.conversational_count = ds.value("conversational_count", opt.conversational_count);
  opt.noisy_fraction = ds.value("noisy_fraction", opt.noisy_fraction);
  opt.multi_turn_fraction = ds.value("multi_turn_fraction", opt.multi_turn_fraction);
  opt.max_turns = ds.value("max_turns", opt.max_turns);
  opt.translation.prompt_template = ds.value("prompt_template", opt.translation.prompt_template);
  opt.translation.noise.rate = ds.value("noise_rate", opt.translation.noise.rate);
  opt.translation.noise.punctuation_drop = ds.value("punctuation_drop", opt.translation.noise.punctuation_drop);
  d["dataset"] = {{"translation_count", opt.translation_count},
                  {"conversational_count", opt.conversational_count},
                  {"noisy_fraction", opt.noisy_fraction},
                  {"multi_turn_fraction", opt.multi_turn_fraction},
                  {"max_turns", opt.max_turns},
                  {"prompt_template", opt.translation.prompt_template},
                  {"noise_rate", opt.translation.noise.rate},
                  {"punctuation_drop", opt.translation.noise.punctuation_drop}};

  const fs::path out(c.out);
  OutputLock lock(out);
  snapshot(out, "instruct", d);

  std::vector<sc::ParallelPair> pairs;
  std::vector<si::InstructionExample> pool;
  if (d.contains("pairs")) pairs = read_records<sc::ParallelPair>(d["pairs"], sc::pair_from_json);
  if (d.contains("pool")) pool = read_records<si::InstructionExample>(d["pool"], si::example_from_json);
  const auto dataset = si::build_dataset(pairs, pool, opt, seed);

  std::vector<json> lines;
  for (const auto& ex : dataset.examples) lines.push_back(si::to_json(ex));
  savanna::io::write_file(out / "instructions.jsonl", savanna::io::to_jsonl(lines));

  json manifest = si::to_json(dataset);
  if (d.contains("preferences")) {
    const auto prefs = read_records<si::PreferencePair>(d["preferences"], si::preference_from_json);
    std::vector<json> pl;
    std::map<std::string, std::size_t> by_defect;
    for (const auto& p : prefs) {
      pl.push_back(si::to_json(p));
      ++by_defect[std::string(si::to_string(p.defect))];
    }
    savanna::io::write_file(out / "preferences.jsonl", savanna::io::to_jsonl(pl));
    manifest["preferences"] = {{"pairs", prefs.size()}, {"by_defect", by_defect}};
  }

  const auto tmpl = si::ChatTemplate::load(d["template"].get<std::string>());
  const auto tok = si::make_tokenizer(d["tokenizer"].get<std::string>(), tmpl.special_tokens);
  si::check_template(*tok, tmpl);
  const auto rendered = si::render_batch(dataset.examples, *tok, tmpl);
  std::vector<si::TokenStream> streams;
  std::size_t tokens = 0, trained = 0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    tokens += rendered[i].token_ids.size();
    for (auto m : rendered[i].loss_mask) trained += m;
    streams.push_back({"ex" + std::to_string(i), rendered[i].token_ids});
  }
  const auto max_len = d["max_len"].get<std::size_t>();
  const auto packed = si::pack(streams, max_len);
  if (format == "binary") {
    savanna::io::write_file(out / "packed.bin", si::write_packed_binary(packed));
  } else {
    savanna::io::write_file(out / "packed.jsonl", si::write_packed_jsonl(packed));
  }
  manifest["tokenizer"] = tok->name();
  manifest["template"] = tmpl.name;
  manifest["tokens"] = tokens;
  manifest["loss_tokens"] = trained;
  manifest["sequences"] = packed.size();
  manifest["max_len"] = max_len;
  manifest["seed"] = seed;
  manifest["metadata"] = metadata();
  write_json(out / "manifest.json", manifest);
  std::cout << "instruct: " << dataset.examples.size() << " examples, " << packed.size() << " packed sequences\n";
  return 0;
}

// ------------------------------------------------------------------- eval

struct EvalFlags {
  std::string endpoint;
  std::string directions;
  std::string granularity;
  std::string rescore;
  std::string suite;
};

std::string safe_name(std::string s) {
  for (auto& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  return s;
}

void write_report(const fs::path& out, const std::string& stem, const savanna::eval::EvalReport& r) {
  savanna::io::write_file(out / (stem + ".json"), savanna::eval::render_report_json(r));
  savanna::io::write_file(out / (stem + ".md"), savanna::eval::render_report_markdown(r));
}

int cmd_eval(const Common& c, const EvalFlags& f) {
  namespace ev = savanna::eval;
  Config cfg(c.config_path);
  resolve_seed(c, cfg);
  auto& d = cfg.data();
  cfg.set_path("suite", f.suite);
  if (!d.contains("suite")) throw Error("bad_config", "eval needs \"suite\": path to the suite TSV");
  d["suite"] = cfg.path("suite");
  if (!f.granularity.empty()) d["granularity"] = f.granularity;
  d["granularity"] = d.value("granularity", std::string("sentence"));
  const auto granularity = ev::granularity_from_string(d["granularity"].get<std::string>());
  d["aggregation"] = d.value("aggregation", std::string("mean_of_sentences"));
  ev::TranslationOptions opt;
  const auto agg = d["aggregation"].get<std::string>();
  if (agg == "mean_of_sentences") opt.scheme = savanna::metrics::AggregateScheme::mean_of_sentences;
  else if (agg != "corpus_level") throw Error("bad_config", "aggregation must be corpus_level or mean_of_sentences");
  opt.max_failure_rate = d.value("max_failure_rate", opt.max_failure_rate);
  opt.prompt_template = d.value("prompt_template", std::string());
  if (d.contains("mcq")) d["mcq"] = cfg.path("mcq");

  const auto suite = ev::EvalSuite::load_tsv(d["suite"].get<std::string>());
  const fs::path out(c.out);

  if (!f.rescore.empty()) {
    d["rescore"] = fs::absolute(f.rescore).lexically_normal().string();
    OutputLock lock(out);
    snapshot(out, "eval", d);
    const auto log = ev::parse_run_log(savanna::io::read_file(f.rescore));
    const auto report = ev::score_run(log, suite, opt);
    write_report(out, "report_" + safe_name(log.header.model), report);
    std::cout << "rescored " << log.records.size() << " records for " << log.header.model
              << (report.valid ? "" : " (invalid run)") << "\n";
    return 0;
  }

  std::vector<savanna::Direction> directions;
  if (!f.directions.empty()) d["directions"] = f.directions;
  const auto dir_spec = d.value("directions", json("all"));
  if (dir_spec.is_string() && dir_spec.get<std::string>() == "all") {
    directions = ev::all_directions(suite);
  } else {
    const auto names = dir_spec.is_string() ? split_list(dir_spec.get<std::string>())
                                            : dir_spec.get<std::vector<std::string>>();
    for (const auto& n : names) directions.push_back(savanna::Direction::parse(n));
  }
  json dir_names = json::array();
  for (const auto& dir : directions) dir_names.push_back(dir.str());
  d["directions"] = dir_names;

  std::vector<ev::ModelEndpoint> endpoints;
  for (const auto& e : d.value("endpoints", json::array())) endpoints.push_back(ev::endpoint_from_json(e));
  if (!f.endpoint.empty()) {
    const auto it = std::find_if(endpoints.begin(), endpoints.end(),
                                 [&](const ev::ModelEndpoint& e) { return e.name == f.endpoint; });
    if (it != endpoints.end()) {
      endpoints = {*it};
    } else if (f.endpoint.starts_with("stub:")) {
      ev::ModelEndpoint e;
      e.name = f.endpoint.substr(5);
      e.base_url = f.endpoint;
      endpoints = {e};
    } else {
      throw Error("bad_endpoint", "no endpoint named '" + f.endpoint + "' in the config");
    }
  }
  if (endpoints.empty()) throw Error("bad_config", "no endpoints configured; pass --endpoint stub:echo or add \"endpoints\"");
  json ep_json = json::array();
  for (const auto& e : endpoints) ep_json.push_back(ev::to_json(e));
  d["endpoints"] = ep_json;

  OutputLock lock(out);
  snapshot(out, "eval", d);

  std::vector<ev::McqItem> mcq;
  if (d.contains("mcq")) mcq = read_records<ev::McqItem>(d["mcq"], ev::mcq_from_json);

  bool all_valid = true;
  for (const auto& e : endpoints) {
    const auto stem = safe_name(e.name);
    auto client = ev::make_client(e, suite, directions, granularity);
    const auto log = ev::run_translation(suite, e, *client, directions, granularity, opt);
    savanna::io::write_file(out / ("run_" + stem + ".jsonl"), ev::write_run_log(log));
    const auto report = ev::score_run(log, suite, opt);
    write_report(out, "report_" + stem, report);
    all_valid = all_valid && report.valid;
    std::cout << e.name << ": " << log.records.size() << " segments" << (report.valid ? "" : " (invalid run)")
              << "\n";
    if (!mcq.empty()) {
      std::unique_ptr<ev::ChatClient> mc;
      if (e.base_url == "stub:gold") mc = std::make_unique<ev::StubChatClient>("stub:gold", ev::mcq_gold_answers(mcq));
      else if (e.is_stub()) mc = std::make_unique<ev::StubChatClient>(e.base_url == "stub:empty" ? "stub:empty" : "stub:gold");
      else mc = ev::make_http_client(e);
      write_json(out / ("mcq_" + stem + ".json"), ev::to_json(ev::run_mcq(mcq, e, *mc)));
    }
  }
  return all_valid ? 0 : 3;
}

// ----------------------------------------------------------------- report

int cmd_report(const Common& c, const std::string& fixtures_flag, const std::string& reports_flag) {
  namespace ev = savanna::eval;
  Config cfg(c.config_path);
  auto& d = cfg.data();
  cfg.set_path("fixtures", fixtures_flag);
  if (!reports_flag.empty()) {
    d["reports"] = json::array();
    for (const auto& p : split_list(reports_flag)) d["reports"].push_back(fs::absolute(p).lexically_normal().string());
  } else if (d.contains("reports")) {
    for (auto& p : d["reports"]) p = cfg.resolve(p.get<std::string>());
  }
  if (d.contains("fixtures")) d["fixtures"] = cfg.path("fixtures");
  if (!d.contains("fixtures") && !d.contains("reports")) {
    throw Error("bad_config", "report needs \"fixtures\" (score-table CSV directory) or \"reports\" (report JSON paths)");
  }

  std::vector<ev::ModelScores> models;
  if (d.contains("fixtures")) models = ev::load_fixture_dir(d["fixtures"].get<std::string>());
  for (const auto& p : d.value("reports", json::array())) {
    models.push_back(ev::model_scores(ev::report_from_json(json::parse(savanna::io::read_file(p.get<std::string>())))));
  }
  const auto contenders = d.value("contenders", std::vector<std::string>{});
  d["contenders"] = contenders;

  const fs::path out(c.out);
  OutputLock lock(out);
  snapshot(out, "report", d);

  const auto board = ev::make_leaderboard(models);
  std::string md = "# Leaderboard\n\n## Mean scores\n\n" + ev::render_means_markdown(board);
  for (const auto& t : board.tables) {
    md += "\n## " + std::string(ev::to_string(t.metric)) + " " + std::string(ev::to_string(t.side)) + "\n\n";
    md += ev::render_language_table_markdown(board, t);
  }
  const auto wins = ev::winner_counts(board, contenders);
  md += "\n## Bidirectional chrF winners\n\n| Model | Languages won |\n|---|---:|\n";
  for (std::size_t i = 0; i < wins.contenders.size(); ++i) {
    md += "| " + wins.contenders[i] + " | " + std::to_string(wins.wins[i]) + " / " + std::to_string(wins.languages) +
          " |\n";
  }
  savanna::io::write_file(out / "leaderboard.md", md);
  savanna::io::write_file(out / "bidirectional_chrf.csv", ev::render_bidirectional_csv(board));
  savanna::io::write_file(out / "winners.csv", ev::render_winners_csv(wins));
  std::cout << "report: " << board.models.size() << " models, " << board.languages.size() << " languages\n";
  return 0;
}

// ------------------------------------------------------------------- loss

int cmd_loss(const Common& c, const std::string& input_flag, std::optional<double> beta,
             std::optional<double> alpha) {
  namespace pl = savanna::preference_loss;
  Config cfg(c.config_path);
  auto& d = cfg.data();
  cfg.set_path("input", input_flag);
  if (!d.contains("input")) throw Error("bad_config", "loss needs \"input\": PairLogps JSONL");
  d["input"] = cfg.path("input");
  pl::LossParams params;
  params.beta = beta.value_or(d.value("beta", params.beta));
  params.alpha_rpo = alpha.value_or(d.value("alpha_rpo", params.alpha_rpo));
  if (!(params.beta > 0)) throw Error("bad_params", "beta must be > 0");
  if (!(params.alpha_rpo >= 0)) throw Error("bad_params", "alpha_rpo must be >= 0");
  d["beta"] = params.beta;
  d["alpha_rpo"] = params.alpha_rpo;

  const fs::path out(c.out);
  OutputLock lock(out);
  snapshot(out, "loss", d);

  const auto pairs = read_records<pl::PairLogps>(d["input"], pl::pair_from_json);
  if (pairs.empty()) throw Error("empty_input", "no pairs in " + d["input"].get<std::string>());
  const auto records = pl::evaluate_batch(pairs, params);
  std::vector<json> lines;
  double dpo = 0, irpo = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    lines.push_back({{"index", i}, {"margin", r.margin}, {"dpo", r.dpo}, {"nll_chosen", r.nll_chosen}, {"irpo", r.irpo}});
    std::printf("%zu\tdpo=%.6f\tirpo=%.6f\n", i, r.dpo, r.irpo);
    dpo += r.dpo;
    irpo += r.irpo;
  }
  const auto n = static_cast<double>(records.size());
  std::printf("mean\tdpo=%.6f\tirpo=%.6f\n", dpo / n, irpo / n);
  savanna::io::write_file(out / "losses.jsonl", savanna::io::to_jsonl(lines));
  write_json(out / "summary.json", {{"pairs", records.size()},
                                    {"beta", params.beta},
                                    {"alpha_rpo", params.alpha_rpo},
                                    {"mean_dpo", dpo / n},
                                    {"mean_irpo", irpo / n}});
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Random seed (overrides the config)");
  sub->add_option("--out", c.out, "Output directory")->required();
}

void print_error(const std::string& kind, const std::string& msg) {
  std::cerr << json{{"error", msg}, {"kind", kind}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"savanna: corpus, instruction data, evaluation and preference-loss tooling"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common common;
  std::string input, fixtures, reports;
  std::optional<double> beta, alpha;
  EvalFlags ef;

  auto* corpus = app.add_subcommand("corpus", "Clean, deduplicate, back-translate and mix documents");
  add_common(corpus, common);
  corpus->add_option("--input", input, "Document JSONL (replaces config inputs)");

  auto* instruct = app.add_subcommand("instruct", "Build instruction data, render and pack it");
  add_common(instruct, common);

  auto* eval = app.add_subcommand("eval", "Run or re-score translation and MCQ evaluation");
  add_common(eval, common);
  eval->add_option("--endpoint", ef.endpoint, "Endpoint name from the config, or stub:echo / stub:empty");
  eval->add_option("--directions", ef.directions, "Comma-separated directions (lug-eng,eng-lug) or 'all'");
  eval->add_option("--granularity", ef.granularity, "sentence or document")
      ->check(CLI::IsMember({"sentence", "document"}));
  eval->add_option("--rescore", ef.rescore, "Re-score a saved run log offline")->check(CLI::ExistingFile);
  eval->add_option("--suite", ef.suite, "Suite TSV (overrides the config)");

  auto* report = app.add_subcommand("report", "Leaderboards and chart CSVs");
  add_common(report, common);
  report->add_option("--fixtures", fixtures, "Directory of wide CSV score tables");
  report->add_option("--reports", reports, "Comma-separated report JSON files");

  auto* loss = app.add_subcommand("loss", "Audit DPO/IRPO losses over PairLogps JSONL");
  add_common(loss, common);
  loss->add_option("--input", input, "PairLogps JSONL");
  loss->add_option("--beta", beta, "DPO temperature");
  loss->add_option("--alpha", alpha, "Weight of the chosen-response NLL term");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*corpus) return cmd_corpus(common, input);
    if (*instruct) return cmd_instruct(common);
    if (*eval) return cmd_eval(common, ef);
    if (*report) return cmd_report(common, fixtures, reports);
    if (*loss) return cmd_loss(common, input, beta, alpha);
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const json::exception& e) {
    print_error("bad_config", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 1;
}
