#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace savanna::textnorm {

enum class UnicodeForm { NFC, NFKC };

/// Normalization steps, always applied in the fixed order
/// unicode form -> control removal -> punctuation strip -> lowercase ->
/// whitespace collapse, followed by a final recomposition so the
/// result is a fixed point of the same profile.
struct NormProfile {
  bool lowercase = false;
  bool strip_punctuation = false;
  bool collapse_whitespace = false;
  bool remove_control_chars = false;
  UnicodeForm unicode_form = UnicodeForm::NFC;
};

/// Profile applied to hypotheses and references before scoring.
NormProfile metric_profile();
/// Profile applied to corpus lines: control removal and whitespace only.
NormProfile corpus_profile();

struct CleanReport {
  std::size_t chars_in = 0;
  std::size_t chars_out = 0;
  std::size_t control_removed = 0;
  std::size_t artifacts_removed = 0;

  bool operator==(const CleanReport&) const = default;
};

std::string normalize(std::string_view text, const NormProfile& profile);

/// Same as normalize() but also reports how many Cc/Cf code points were dropped.
std::string normalize(std::string_view text, const NormProfile& profile,
                      std::size_t& control_removed);

/// Removes page-number lines and recurring running headers, then normalizes
/// each surviving line with `profile`. Paragraphs (blank-line separated)
/// are preserved with exactly one blank line between them.
std::pair<std::string, CleanReport> clean_document(std::string_view raw,
                                                   const NormProfile& profile);

// UTF-8 helpers. Malformed input bytes decode to U+FFFD.
std::u32string to_u32(std::string_view utf8);
std::string to_utf8(std::u32string_view text);
std::size_t scalar_count(std::string_view utf8);

/// True for Unicode general categories Pc, Pd, Ps, Pe, Pi, Pf, Po.
bool is_punctuation(char32_t c);
/// True for Cc and Cf.
bool is_control(char32_t c);
/// Unicode White_Space property.
bool is_whitespace(char32_t c);

/// Splits on runs of Unicode whitespace, dropping empty tokens.
std::vector<std::string> split_whitespace(std::string_view text);

/// Levenshtein distance over code points, abandoned once it exceeds `limit`
/// (returns limit + 1 in that case).
std::size_t bounded_edit_distance(std::u32string_view a, std::u32string_view b,
                                  std::size_t limit);

}  // namespace savanna::textnorm
