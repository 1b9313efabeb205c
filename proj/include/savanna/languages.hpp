#pragma once

#include <compare>
#include <span>
#include <string>
#include <string_view>

namespace savanna {

/// ISO 639-3 code, restricted to the 31 evaluation languages plus `eng`.
class LangCode {
 public:
  LangCode() = default;

  /// Throws savanna::Error("unknown_language") for codes outside the table.
  static LangCode parse(std::string_view code);

  const std::string& str() const noexcept { return code_; }
  bool is_english() const noexcept { return code_ == "eng"; }
  /// Human-readable name ("Luganda"); "English" for eng.
  std::string_view name() const;

  auto operator<=>(const LangCode&) const = default;

 private:
  explicit LangCode(std::string code) : code_(std::move(code)) {}
  std::string code_;
};

struct LanguageInfo {
  std::string_view code;
  std::string_view name;
};

/// The 31 evaluation languages in table order (alphabetical by code).
std::span<const LanguageInfo> evaluation_languages();

bool is_supported_language(std::string_view code);

struct Direction {
  LangCode src;
  LangCode tgt;

  /// "lug-eng"
  std::string str() const { return src.str() + "-" + tgt.str(); }
  static Direction parse(std::string_view text);

  auto operator<=>(const Direction&) const = default;
};

}  // namespace savanna
