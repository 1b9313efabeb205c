#include "savanna/textnorm.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <array>
#include <map>
#include <regex>
#include <unordered_map>

#include "savanna/error.hpp"

namespace savanna::textnorm {

namespace {

const icu::Normalizer2& normalizer_for(UnicodeForm form) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = form == UnicodeForm::NFC
                                  ? icu::Normalizer2::getNFCInstance(status)
                                  : icu::Normalizer2::getNFKCInstance(status);
  if (U_FAILURE(status) || n == nullptr) {
    throw Error("unicode", "failed to load ICU normalizer data");
  }
  return *n;
}

std::u32string apply_form(std::u32string_view text, UnicodeForm form) {
  const auto& norm = normalizer_for(form);
  icu::UnicodeString s = icu::UnicodeString::fromUTF32(
      reinterpret_cast<const UChar32*>(text.data()),
      static_cast<int32_t>(text.size()));
  UErrorCode status = U_ZERO_ERROR;
  if (norm.isNormalized(s, status) && U_SUCCESS(status)) {
    return std::u32string(text);
  }
  status = U_ZERO_ERROR;
  icu::UnicodeString out = norm.normalize(s, status);
  if (U_FAILURE(status)) throw Error("unicode", "normalization failed");
  std::u32string result(static_cast<std::size_t>(out.countChar32()), U'\0');
  status = U_ZERO_ERROR;
  out.toUTF32(reinterpret_cast<UChar32*>(result.data()),
              static_cast<int32_t>(result.size()), status);
  return result;
}

std::u32string to_lower(std::u32string_view text) {
  bool ascii_only = std::all_of(text.begin(), text.end(),
                                [](char32_t c) { return c < 0x80; });
  if (ascii_only) {
    std::u32string out(text);
    for (auto& c : out) {
      if (c >= U'A' && c <= U'Z') c = c - U'A' + U'a';
    }
    return out;
  }
  icu::UnicodeString s = icu::UnicodeString::fromUTF32(
      reinterpret_cast<const UChar32*>(text.data()),
      static_cast<int32_t>(text.size()));
  s.toLower(icu::Locale::getRoot());
  std::u32string result(static_cast<std::size_t>(s.countChar32()), U'\0');
  UErrorCode status = U_ZERO_ERROR;
  s.toUTF32(reinterpret_cast<UChar32*>(result.data()),
            static_cast<int32_t>(result.size()), status);
  return result;
}

std::u32string normalize_u32(std::u32string_view input, const NormProfile& p,
                             std::size_t& control_removed) {
  std::u32string text = apply_form(input, p.unicode_form);

  if (p.remove_control_chars) {
    std::u32string kept;
    kept.reserve(text.size());
    for (char32_t c : text) {
      if (!is_control(c)) {
        kept.push_back(c);
      } else if (is_whitespace(c)) {
        // Tabs and line breaks are Cc; keep the word boundary they encode.
        kept.push_back(U' ');
      } else {
        ++control_removed;
      }
    }
    text = std::move(kept);
  }

  if (p.strip_punctuation) {
    std::erase_if(text, [](char32_t c) { return is_punctuation(c); });
  }

  if (p.lowercase) text = to_lower(text);

  if (p.collapse_whitespace) {
    std::u32string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char32_t c : text) {
      if (is_whitespace(c)) {
        pending_space = !out.empty();
      } else {
        if (pending_space) out.push_back(U' ');
        pending_space = false;
        out.push_back(c);
      }
    }
    text = std::move(out);
  }

  // Removing punctuation or lowering can leave a base letter next to a
  // combining mark that now composes.
  if (p.strip_punctuation || p.lowercase || p.remove_control_chars) {
    text = apply_form(text, p.unicode_form);
  }
  return text;
}

std::string_view trim_ascii(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

// Lines longer than this are body text, never running headers.
constexpr std::size_t kMaxHeaderLength = 120;
constexpr std::size_t kMinRecurrence = 3;
constexpr double kMinOverlap = 0.8;

bool is_page_number_line(const std::string& line) {
  static const std::regex re(R"(^\s*(page\s+)?\d{1,4}\s*$)",
                             std::regex::icase | std::regex::optimize);
  return std::regex_match(line, re);
}

// Lower bound on the edit distance from the code point histograms.
std::size_t histogram_bound(const std::map<char32_t, int>& a,
                            const std::map<char32_t, int>& b, std::size_t la,
                            std::size_t lb) {
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      common += static_cast<std::size_t>(std::min(ia->second, ib->second));
      ++ia;
      ++ib;
    }
  }
  return std::max(la, lb) - common;
}

// Marks lines belonging to a family of >= kMinRecurrence near-identical
// short lines.
std::vector<bool> recurring_lines(const std::vector<std::string>& lines) {
  std::vector<bool> drop(lines.size(), false);

  std::unordered_map<std::string, std::vector<std::size_t>> by_text;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    by_text[lines[i]].push_back(i);
  }

  struct Distinct {
    std::u32string text;
    std::map<char32_t, int> hist;
    std::size_t occurrences;
    const std::vector<std::size_t>* positions;
  };
  std::vector<Distinct> distinct;
  for (const auto& [text, positions] : by_text) {
    std::u32string u = to_u32(text);
    if (u.size() > kMaxHeaderLength) continue;
    std::map<char32_t, int> hist;
    for (char32_t c : u) ++hist[c];
    distinct.push_back({std::move(u), std::move(hist), positions.size(), &positions});
  }
  std::sort(distinct.begin(), distinct.end(), [](const Distinct& a, const Distinct& b) {
    return a.text.size() != b.text.size() ? a.text.size() < b.text.size() : a.text < b.text;
  });

  std::vector<std::size_t> family(distinct.size());
  for (std::size_t i = 0; i < distinct.size(); ++i) family[i] = distinct[i].occurrences;

  for (std::size_t i = 0; i < distinct.size(); ++i) {
    const auto& a = distinct[i];
    for (std::size_t j = i + 1; j < distinct.size(); ++j) {
      const auto& b = distinct[j];
      // Sorted by length: once b is too long for a, later entries are too.
      const std::size_t longest = b.text.size();
      const auto limit = static_cast<std::size_t>((1.0 - kMinOverlap) * static_cast<double>(longest));
      if (longest - a.text.size() > limit) break;
      if (histogram_bound(a.hist, b.hist, a.text.size(), longest) > limit) continue;
      if (bounded_edit_distance(a.text, b.text, limit) <= limit) {
        family[i] += b.occurrences;
        family[j] += a.occurrences;
      }
    }
  }

  for (std::size_t i = 0; i < distinct.size(); ++i) {
    if (family[i] >= kMinRecurrence) {
      for (std::size_t pos : *distinct[i].positions) drop[pos] = true;
    }
  }
  return drop;
}

}  // namespace

NormProfile metric_profile() {
  return {.lowercase = true,
          .strip_punctuation = true,
          .collapse_whitespace = true,
          .remove_control_chars = true,
          .unicode_form = UnicodeForm::NFC};
}

NormProfile corpus_profile() {
  return {.lowercase = false,
          .strip_punctuation = false,
          .collapse_whitespace = true,
          .remove_control_chars = true,
          .unicode_form = UnicodeForm::NFC};
}

std::string normalize(std::string_view text, const NormProfile& profile) {
  std::size_t removed = 0;
  return normalize(text, profile, removed);
}

std::string normalize(std::string_view text, const NormProfile& profile,
                      std::size_t& control_removed) {
  return to_utf8(normalize_u32(to_u32(text), profile, control_removed));
}

std::pair<std::string, CleanReport> clean_document(std::string_view raw,
                                                   const NormProfile& profile) {
  CleanReport report;
  report.chars_in = scalar_count(raw);

  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= raw.size()) {
    std::size_t end = raw.find('\n', start);
    if (end == std::string_view::npos) end = raw.size();
    std::size_t removed = 0;
    std::string line = normalize(raw.substr(start, end - start), profile, removed);
    report.control_removed += removed;
    lines.push_back(std::string(trim_ascii(line)));
    start = end + 1;
  }

  std::vector<bool> drop = recurring_lines(lines);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!lines[i].empty() && !drop[i] && is_page_number_line(lines[i])) drop[i] = true;
  }

  std::string out;
  bool pending_break = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (drop[i]) {
      ++report.artifacts_removed;
      continue;
    }
    if (lines[i].empty()) {
      pending_break = !out.empty();
      continue;
    }
    if (!out.empty()) out += pending_break ? "\n\n" : "\n";
    pending_break = false;
    out += lines[i];
  }

  report.chars_out = scalar_count(out);
  return {std::move(out), report};
}

std::u32string to_u32(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + static_cast<std::size_t>(len) <= s.size();
    for (int k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((b & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (ok) {
      static constexpr std::array<char32_t, 5> kMin = {0, 0, 0x80, 0x800, 0x10000};
      if (cp < kMin[static_cast<std::size_t>(len)] || cp > 0x10FFFF ||
          (cp >= 0xD800 && cp <= 0xDFFF)) {
        ok = false;
      }
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

std::string to_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t c : text) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (c >> 12)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (c >> 18)));
      out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::size_t scalar_count(std::string_view utf8) {
  std::size_t n = 0;
  for (char c : utf8) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

bool is_punctuation(char32_t c) {
  switch (u_charType(static_cast<UChar32>(c))) {
    case U_CONNECTOR_PUNCTUATION:
    case U_DASH_PUNCTUATION:
    case U_START_PUNCTUATION:
    case U_END_PUNCTUATION:
    case U_INITIAL_PUNCTUATION:
    case U_FINAL_PUNCTUATION:
    case U_OTHER_PUNCTUATION:
      return true;
    default:
      return false;
  }
}

bool is_control(char32_t c) {
  const auto type = u_charType(static_cast<UChar32>(c));
  return type == U_CONTROL_CHAR || type == U_FORMAT_CHAR;
}

bool is_whitespace(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> tokens;
  const std::u32string u = to_u32(text);
  std::u32string current;
  for (char32_t c : u) {
    if (is_whitespace(c)) {
      if (!current.empty()) tokens.push_back(to_utf8(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) tokens.push_back(to_utf8(current));
  return tokens;
}

std::size_t bounded_edit_distance(std::u32string_view a, std::u32string_view b,
                                  std::size_t limit) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if ((n > m ? n - m : m - n) > limit) return limit + 1;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    std::size_t row_min = cur[0];
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
      row_min = std::min(row_min, cur[j]);
    }
    if (row_min > limit) return limit + 1;
    std::swap(prev, cur);
  }
  return std::min(prev[m], limit + 1);
}

}  // namespace savanna::textnorm
