#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "savanna/error.hpp"
#include "savanna/evalharness.hpp"
#include "savanna/util.hpp"

namespace savanna::eval {

namespace {

using Table = std::map<std::string, std::map<std::string, double>>;

// Values closer than this are treated as a tie.
constexpr double kTieTolerance = 1e-12;

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto end = s.find(sep, start);
    if (end == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
}

std::optional<double> metric_of(const DirectionScores& d, Metric m) {
  switch (m) {
    case Metric::chrf: return d.chrf;
    case Metric::bleu: return d.bleu;
    case Metric::cer: return d.cer;
    case Metric::wer: return d.wer;
  }
  return std::nullopt;
}

bool higher_is_better(Metric m) { return m == Metric::chrf || m == Metric::bleu; }

Direction direction_for(Side side, const std::string& lang) {
  const auto l = LangCode::parse(lang);
  const auto eng = LangCode::parse("eng");
  return side == Side::xx_to_eng ? Direction{l, eng} : Direction{eng, l};
}

std::vector<bool> flag_best(const std::vector<std::optional<double>>& values, bool higher) {
  std::optional<double> best;
  for (const auto& v : values) {
    if (v && (!best || (higher ? *v > *best : *v < *best))) best = v;
  }
  std::vector<bool> out(values.size(), false);
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] && std::abs(*values[i] - *best) <= kTieTolerance;
  return out;
}

std::string cell(const std::optional<double>& v, bool bold) {
  if (!v) return "n/a";
  return bold ? "**" + fixed3(*v) + "**" : fixed3(*v);
}

}  // namespace

std::string_view to_string(Side s) { return s == Side::xx_to_eng ? "xx→eng" : "eng→xx"; }

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::chrf: return "chrF";
    case Metric::bleu: return "BLEU";
    case Metric::cer: return "CER";
    case Metric::wer: return "WER";
  }
  return "?";
}

ModelScores model_scores(const EvalReport& report) {
  ModelScores m{report.model, report.suite_fingerprint, {}};
  for (const auto& d : report.directions) {
    if (!d.aggregate) continue;
    m.directions[d.direction] = {d.aggregate->chrf, d.aggregate->bleu, d.aggregate->cer, d.aggregate->wer};
  }
  return m;
}

Table read_table_csv(std::string_view csv) {
  Table out;
  std::vector<std::string> models;
  std::size_t line_no = 0;
  for (auto line : split(csv, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto cols = split(line, ',');
    if (models.empty()) {
      if (cols.size() < 2 || cols[0] != "lang") throw Error("bad_table", "header must be lang,<model>,...");
      for (std::size_t i = 1; i < cols.size(); ++i) models.emplace_back(cols[i]);
      continue;
    }
    if (cols.size() != models.size() + 1) {
      throw Error("bad_table", "line " + std::to_string(line_no) + ": wrong number of columns");
    }
    const std::string lang(cols[0]);
    if (!is_supported_language(lang) || lang == "eng") throw Error("bad_table", "unknown language '" + lang + "'");
    for (std::size_t i = 0; i < models.size(); ++i) {
      try {
        std::size_t used = 0;
        const std::string text(cols[i + 1]);
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        out[models[i]][lang] = v;
      } catch (const std::logic_error&) {
        throw Error("bad_table", "line " + std::to_string(line_no) + ": bad number for " + models[i]);
      }
    }
  }
  if (models.empty()) throw Error("bad_table", "table is empty");
  return out;
}

std::vector<ModelScores> scores_from_tables(const Table* chrf_xx_eng, const Table* chrf_eng_xx, const Table* bleu_xx_eng,
                                            const Table* bleu_eng_xx, std::vector<std::string> model_order) {
  std::set<std::string> seen(model_order.begin(), model_order.end());
  for (const Table* t : {chrf_xx_eng, chrf_eng_xx, bleu_xx_eng, bleu_eng_xx}) {
    if (!t) continue;
    for (const auto& [model, _] : *t) {
      if (seen.insert(model).second) model_order.push_back(model);
    }
  }
  std::vector<ModelScores> out;
  for (const auto& model : model_order) {
    ModelScores m{model, "published-tables", {}};
    const auto fill = [&](const Table* t, Side side, Metric metric) {
      if (!t || !t->count(model)) return;
      for (const auto& [lang, v] : t->at(model)) {
        auto& d = m.directions[direction_for(side, lang)];
        (metric == Metric::chrf ? d.chrf : d.bleu) = v;
      }
    };
    fill(chrf_xx_eng, Side::xx_to_eng, Metric::chrf);
    fill(chrf_eng_xx, Side::eng_to_xx, Metric::chrf);
    fill(bleu_xx_eng, Side::xx_to_eng, Metric::bleu);
    fill(bleu_eng_xx, Side::eng_to_xx, Metric::bleu);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<ModelScores> load_fixture_dir(const std::filesystem::path& dir) {
  std::map<std::string, Table> tables;
  std::vector<std::string> order;
  for (const char* name : {"chrf_xx_eng", "chrf_eng_xx", "bleu_xx_eng", "bleu_eng_xx"}) {
    const auto path = dir / (std::string(name) + ".csv");
    if (!std::filesystem::exists(path)) continue;
    const auto text = io::read_file(path);
    tables[name] = read_table_csv(text);
    if (order.empty()) {
      // Keep the column order of the first table.
      const auto header = text.substr(0, text.find('\n'));
      const auto cols = split(header, ',');
      for (std::size_t i = 1; i < cols.size(); ++i) order.emplace_back(cols[i]);
    }
  }
  if (tables.empty()) throw Error("bad_table", "no fixture tables in " + dir.string());
  const auto get = [&](const char* n) { return tables.count(n) ? &tables.at(n) : nullptr; };
  return scores_from_tables(get("chrf_xx_eng"), get("chrf_eng_xx"), get("bleu_xx_eng"), get("bleu_eng_xx"), order);
}

Leaderboard make_leaderboard(std::span<const ModelScores> models) {
  if (models.empty()) throw Error("bad_params", "leaderboard needs at least one model");
  const auto shape = [](const ModelScores& m) {
    std::set<std::pair<std::string, int>> cells;
    for (const auto& [d, s] : m.directions) {
      for (Metric metric : {Metric::chrf, Metric::bleu, Metric::cer, Metric::wer}) {
        if (metric_of(s, metric)) cells.emplace(d.str(), static_cast<int>(metric));
      }
    }
    return cells;
  };
  const auto reference_shape = shape(models[0]);
  for (const auto& m : models) {
    if (m.suite_id != models[0].suite_id) {
      throw Error("mismatched_suites", m.model + " was scored on suite " + m.suite_id + ", " + models[0].model +
                                           " on " + models[0].suite_id);
    }
    if (shape(m) != reference_shape) {
      throw Error("mismatched_suites", m.model + " reports different directions or metrics than " + models[0].model);
    }
  }

  Leaderboard board;
  for (const auto& m : models) board.models.push_back(m.model);
  std::set<std::string> langs;
  for (const auto& [d, _] : models[0].directions) langs.insert(d.src.is_english() ? d.tgt.str() : d.src.str());
  for (const auto& info : evaluation_languages()) {
    if (langs.count(std::string(info.code))) board.languages.emplace_back(info.code);
  }

  for (Side side : {Side::xx_to_eng, Side::eng_to_xx}) {
    for (Metric metric : {Metric::chrf, Metric::bleu, Metric::cer, Metric::wer}) {
      LanguageTable table{side, metric, {}, {}, {}};
      bool any = false;
      for (const auto& lang : board.languages) {
        LanguageRow row{lang, {}, {}};
        const auto dir = direction_for(side, lang);
        for (const auto& m : models) {
          const auto it = m.directions.find(dir);
          row.values.push_back(it == m.directions.end() ? std::nullopt : metric_of(it->second, metric));
          any = any || row.values.back().has_value();
        }
        row.best = flag_best(row.values, higher_is_better(metric));
        table.rows.push_back(std::move(row));
      }
      if (!any) continue;
      for (std::size_t k = 0; k < models.size(); ++k) {
        std::vector<double> column;
        for (const auto& row : table.rows) {
          if (row.values[k]) column.push_back(*row.values[k]);
        }
        table.means.push_back(column.size() == table.rows.size() ? std::optional(metrics::mean(column))
                                                                  : std::nullopt);
      }
      table.best_mean = flag_best(table.means, higher_is_better(metric));
      board.tables.push_back(std::move(table));
    }
  }

  const auto mean_of = [&](Side side, Metric metric, std::size_t k) -> std::optional<double> {
    for (const auto& t : board.tables) {
      if (t.side == side && t.metric == metric) return t.means[k];
    }
    return std::nullopt;
  };
  for (std::size_t k = 0; k < models.size(); ++k) {
    board.means.push_back({models[k].model, mean_of(Side::xx_to_eng, Metric::chrf, k),
                           mean_of(Side::xx_to_eng, Metric::bleu, k), mean_of(Side::eng_to_xx, Metric::chrf, k),
                           mean_of(Side::eng_to_xx, Metric::bleu, k)});
  }

  for (const auto& lang : board.languages) {
    auto& row = board.bidirectional[lang];
    for (const auto& m : models) {
      const auto a = m.directions.find(direction_for(Side::xx_to_eng, lang));
      const auto b = m.directions.find(direction_for(Side::eng_to_xx, lang));
      if (a != m.directions.end() && b != m.directions.end() && a->second.chrf && b->second.chrf) {
        row.push_back((*a->second.chrf + *b->second.chrf) / 2.0);
      } else {
        row.push_back(std::nullopt);
      }
    }
  }
  return board;
}

WinnerCounts winner_counts(const Leaderboard& board, std::span<const std::string> contenders) {
  WinnerCounts out;
  std::vector<std::size_t> idx;
  if (contenders.empty()) {
    out.contenders = board.models;
    for (std::size_t k = 0; k < board.models.size(); ++k) idx.push_back(k);
  } else {
    for (const auto& c : contenders) {
      const auto it = std::find(board.models.begin(), board.models.end(), c);
      if (it == board.models.end()) throw Error("bad_params", "no model named '" + c + "' on the leaderboard");
      out.contenders.push_back(c);
      idx.push_back(static_cast<std::size_t>(it - board.models.begin()));
    }
  }
  out.wins.assign(idx.size(), 0);
  for (const auto& lang : board.languages) {
    const auto& row = board.bidirectional.at(lang);
    std::vector<std::optional<double>> values;
    for (std::size_t k : idx) values.push_back(row[k]);
    if (std::any_of(values.begin(), values.end(), [](const auto& v) { return !v; })) continue;
    ++out.languages;
    const auto best = flag_best(values, true);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (!best[i]) continue;
      ++out.wins[i];
      out.winners[lang].push_back(out.contenders[i]);
    }
  }
  return out;
}

std::string render_means_markdown(const Leaderboard& board) {
  std::vector<std::optional<double>> cols[4];
  for (const auto& r : board.means) {
    cols[0].push_back(r.chrf_xx_eng);
    cols[1].push_back(r.bleu_xx_eng);
    cols[2].push_back(r.chrf_eng_xx);
    cols[3].push_back(r.bleu_eng_xx);
  }
  std::vector<bool> best[4];
  for (int c = 0; c < 4; ++c) best[c] = flag_best(cols[c], true);

  std::string out = "| Model | xx→eng chrF | xx→eng BLEU | eng→xx chrF | eng→xx BLEU |\n";
  out += "|---|---:|---:|---:|---:|\n";
  for (std::size_t k = 0; k < board.means.size(); ++k) {
    out += "| " + board.means[k].model;
    for (int c = 0; c < 4; ++c) out += " | " + cell(cols[c][k], best[c][k]);
    out += " |\n";
  }
  return out;
}

std::string render_language_table_markdown(const Leaderboard& board, const LanguageTable& table) {
  std::string out = "| Code | Language |";
  std::string rule = "|---|---|";
  for (const auto& m : board.models) {
    out += " " + m + " |";
    rule += "---:|";
  }
  out += "\n" + rule + "\n";
  for (const auto& row : table.rows) {
    out += "| " + row.lang + " | " + std::string(LangCode::parse(row.lang).name()) + " |";
    for (std::size_t k = 0; k < row.values.size(); ++k) out += " " + cell(row.values[k], row.best[k]) + " |";
    out += "\n";
  }
  out += "| Mean | |";
  for (std::size_t k = 0; k < table.means.size(); ++k) out += " " + cell(table.means[k], table.best_mean[k]) + " |";
  out += "\n";
  return out;
}

std::string render_bidirectional_csv(const Leaderboard& board) {
  std::string out = "language,model,mean_bidirectional_chrf\n";
  for (const auto& lang : board.languages) {
    const auto& row = board.bidirectional.at(lang);
    for (std::size_t k = 0; k < board.models.size(); ++k) {
      if (!row[k]) continue;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", *row[k]);
      out += lang + "," + board.models[k] + "," + buf + "\n";
    }
  }
  return out;
}

std::string render_winners_csv(const WinnerCounts& counts) {
  std::string out = "model,wins,languages\n";
  for (std::size_t i = 0; i < counts.contenders.size(); ++i) {
    out += counts.contenders[i] + "," + std::to_string(counts.wins[i]) + "," + std::to_string(counts.languages) + "\n";
  }
  return out;
}

}  // namespace savanna::eval
