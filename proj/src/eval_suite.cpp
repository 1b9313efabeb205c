#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <set>

#include "savanna/error.hpp"
#include "savanna/evalharness.hpp"
#include "savanna/util.hpp"

namespace savanna::eval {

namespace {

constexpr std::array<CategoryInfo, kCategoryCount> kCategories = {{
    {1, "Banking transaction dialogue"},
    {2, "Instructional/education material"},
    {3, "Conversation with typical greetings"},
    {4, "Fiction/story"},
    {5, "Medical scenario, doctor/patient"},
    {6, "News story"},
    {7, "Wikipedia style information"},
    {8, "Everyday shopping/transactions"},
    {9, "Emergency response"},
    {10, "Practical guide for mechanic or builder"},
    {11, "Health advice, e.g. obstetrics"},
    {12, "Official announcement"},
    {13, "Speech given by official"},
    {14, "Farming advice"},
    {15, "Response to opinion poll"},
    {16, "Public transport scenario"},
    {17, "Family"},
    {18, "Nutrition"},
    {19, "Food security advice"},
    {20, "Local council dialogue"},
}};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto end = line.find('\t', start);
    if (end == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, end - start));
    start = end + 1;
  }
}

int parse_int(std::string_view s, std::size_t line_no, const char* what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error("bad_suite", "line " + std::to_string(line_no) + ": " + what + " is not an integer");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace

std::span<const CategoryInfo> categories() { return kCategories; }

std::string EvalItem::id() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "c%02ds%d", category_id, sent_index);
  return buf;
}

EvalSuite EvalSuite::parse_tsv(std::string_view tsv) {
  EvalSuite suite;
  std::size_t line_no = 0;
  std::size_t start = 0;
  bool have_header = false;
  std::set<std::pair<int, int>> keys;
  while (start < tsv.size()) {
    auto end = tsv.find('\n', start);
    if (end == std::string_view::npos) end = tsv.size();
    auto line = tsv.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    const auto cols = split_tabs(line);

    if (!have_header) {
      if (cols.size() < 3 || cols[0] != "category_id" || cols[1] != "sent_index" || cols[2] != "english") {
        throw Error("bad_suite", "header must start with category_id, sent_index, english");
      }
      for (std::size_t c = 3; c < cols.size(); ++c) {
        LangCode lang;
        try {
          lang = LangCode::parse(cols[c]);
        } catch (const Error&) {
          throw Error("bad_suite", "unknown language column '" + std::string(cols[c]) + "'");
        }
        if (lang.is_english()) throw Error("bad_suite", "eng cannot be a translation column");
        if (std::find(suite.languages.begin(), suite.languages.end(), lang) != suite.languages.end()) {
          throw Error("bad_suite", "duplicate language column " + lang.str());
        }
        suite.languages.push_back(lang);
      }
      have_header = true;
      continue;
    }

    if (cols.size() != 3 + suite.languages.size()) {
      throw Error("bad_suite", "line " + std::to_string(line_no) + ": expected " +
                                   std::to_string(3 + suite.languages.size()) + " columns");
    }
    EvalItem item;
    item.category_id = parse_int(cols[0], line_no, "category_id");
    item.sent_index = parse_int(cols[1], line_no, "sent_index");
    if (item.category_id < 1 || item.category_id > kCategoryCount) {
      throw Error("bad_suite", "line " + std::to_string(line_no) + ": category_id outside 1..20");
    }
    if (item.sent_index < 0 || item.sent_index >= kSentencesPerCategory) {
      throw Error("bad_suite", "line " + std::to_string(line_no) + ": sent_index outside 0..4");
    }
    if (!keys.emplace(item.category_id, item.sent_index).second) {
      throw Error("bad_suite", "line " + std::to_string(line_no) + ": duplicate item " + item.id());
    }
    item.english = std::string(trim(cols[2]));
    if (item.english.empty()) throw Error("bad_suite", "line " + std::to_string(line_no) + ": empty english");
    for (std::size_t k = 0; k < suite.languages.size(); ++k) {
      const auto text = trim(cols[3 + k]);
      if (text.empty()) {
        throw Error("bad_suite", "line " + std::to_string(line_no) + ": empty " + suite.languages[k].str() + " cell");
      }
      item.translations.emplace(suite.languages[k], std::string(text));
    }
    suite.items.push_back(std::move(item));
  }
  if (!have_header) throw Error("bad_suite", "suite file is empty");
  std::sort(suite.items.begin(), suite.items.end(), [](const EvalItem& a, const EvalItem& b) {
    return std::pair(a.category_id, a.sent_index) < std::pair(b.category_id, b.sent_index);
  });
  return suite;
}

EvalSuite EvalSuite::load_tsv(const std::filesystem::path& path) { return parse_tsv(io::read_file(path)); }

void EvalSuite::check_complete() const {
  const std::size_t expected = static_cast<std::size_t>(kCategoryCount * kSentencesPerCategory);
  if (items.size() != expected) {
    throw Error("bad_suite", "suite has " + std::to_string(items.size()) + " items, expected " +
                                 std::to_string(expected));
  }
  if (languages.empty()) throw Error("bad_suite", "suite has no translation languages");
  // parse_tsv rejects duplicates and out-of-range keys, so 100 items means
  // every (category, sentence) slot is filled.
}

std::string EvalSuite::fingerprint() const {
  std::uint64_t h = fnv1a64("savanna-suite-v1");
  for (const auto& l : languages) h = fnv1a64(l.str() + "\t", h);
  for (const auto& item : items) {
    h = fnv1a64(item.id() + "\t" + item.english + "\n", h);
    for (const auto& [lang, text] : item.translations) h = fnv1a64(lang.str() + "\t" + text + "\n", h);
  }
  return hex64(h);
}

std::string_view to_string(Granularity g) { return g == Granularity::sentence ? "sentence" : "document"; }

Granularity granularity_from_string(std::string_view s) {
  if (s == "sentence") return Granularity::sentence;
  if (s == "document") return Granularity::document;
  throw Error("bad_params", "granularity must be sentence or document, got '" + std::string(s) + "'");
}

std::vector<Direction> all_directions(const EvalSuite& suite) {
  const auto eng = LangCode::parse("eng");
  std::vector<Direction> out;
  for (const auto& l : suite.languages) {
    out.push_back({l, eng});
    out.push_back({eng, l});
  }
  return out;
}

std::vector<Segment> make_segments(const EvalSuite& suite, const Direction& direction, Granularity granularity) {
  if (direction.src.is_english() == direction.tgt.is_english()) {
    throw Error("bad_direction", "direction " + direction.str() + " must have eng on exactly one side");
  }
  const LangCode& other = direction.src.is_english() ? direction.tgt : direction.src;
  if (std::find(suite.languages.begin(), suite.languages.end(), other) == suite.languages.end()) {
    throw Error("bad_direction", "suite has no " + other.str() + " references");
  }
  std::vector<Segment> out;
  for (const auto& item : suite.items) {
    const std::string& foreign = item.translations.at(other);
    Segment s{item.id(), direction, direction.src.is_english() ? item.english : foreign,
              direction.src.is_english() ? foreign : item.english};
    if (granularity == Granularity::document && !out.empty() &&
        out.back().id == s.id.substr(0, 3)) {
      out.back().source += ' ' + s.source;
      out.back().reference += ' ' + s.reference;
      continue;
    }
    if (granularity == Granularity::document) s.id = s.id.substr(0, 3);
    out.push_back(std::move(s));
  }
  return out;
}

std::string clean_hypothesis(std::string_view response) {
  auto s = trim(response);
  constexpr std::string_view kLabel = "translation:";
  if (s.size() >= kLabel.size()) {
    bool match = true;
    for (std::size_t i = 0; i < kLabel.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(s[i])) != kLabel[i]) {
        match = false;
        break;
      }
    }
    if (match) s = trim(s.substr(kLabel.size()));
  }
  constexpr std::array<std::pair<std::string_view, std::string_view>, 5> kQuotes = {{
      {"\"", "\""}, {"'", "'"}, {"“", "”"}, {"‘", "’"}, {"«", "»"},
  }};
  for (const auto& [open, close] : kQuotes) {
    if (s.size() >= open.size() + close.size() && s.starts_with(open) && s.ends_with(close)) {
      s = trim(s.substr(open.size(), s.size() - open.size() - close.size()));
      break;
    }
  }
  return std::string(s);
}

}  // namespace savanna::eval
