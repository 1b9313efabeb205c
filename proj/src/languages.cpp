#include "savanna/languages.hpp"

#include <algorithm>
#include <array>

#include "savanna/error.hpp"

namespace savanna {

namespace {

constexpr std::array<LanguageInfo, 31> kLanguages = {{
    {"ach", "Acholi"},     {"adh", "Jopadhola"},   {"alz", "Alur"},
    {"bfa", "Bari"},       {"cgg", "Rukiga"},      {"gwr", "Lugwere"},
    {"kdi", "Kumam"},      {"kdj", "Karamojong"},  {"keo", "Kakwa"},
    {"kin", "Kinyarwanda"}, {"koo", "Rukonjo"},    {"kpz", "Kupsabiny"},
    {"laj", "Lango"},      {"lgg", "Lugbara"},     {"lsm", "Samia"},
    {"luc", "Aringa"},     {"lug", "Luganda"},     {"mhi", "Ma'di"},
    {"myx", "Lumasaba"},   {"nuj", "Lunyole"},     {"nyn", "Runyankole"},
    {"nyo", "Runyoro"},    {"pok", "Pokot"},       {"rub", "Lugungu"},
    {"ruc", "Ruruuli"},    {"rwm", "Kwamba"},      {"swa", "Swahili"},
    {"teo", "Ateso"},      {"tlj", "Lubwisi"},     {"ttj", "Rutooro"},
    {"xog", "Lusoga"},
}};

const LanguageInfo* find(std::string_view code) {
  auto it = std::find_if(kLanguages.begin(), kLanguages.end(),
                         [&](const LanguageInfo& l) { return l.code == code; });
  return it == kLanguages.end() ? nullptr : &*it;
}

}  // namespace

LangCode LangCode::parse(std::string_view code) {
  if (!is_supported_language(code)) {
    throw Error("unknown_language", "unsupported language code '" + std::string(code) + "'");
  }
  return LangCode(std::string(code));
}

std::string_view LangCode::name() const {
  if (code_ == "eng") return "English";
  const auto* info = find(code_);
  return info ? info->name : std::string_view(code_);
}

std::span<const LanguageInfo> evaluation_languages() { return kLanguages; }

bool is_supported_language(std::string_view code) {
  return code == "eng" || find(code) != nullptr;
}

Direction Direction::parse(std::string_view text) {
  const auto dash = text.find('-');
  if (dash == std::string_view::npos) {
    throw Error("bad_direction", "direction must look like 'lug-eng', got '" + std::string(text) + "'");
  }
  Direction d{LangCode::parse(text.substr(0, dash)), LangCode::parse(text.substr(dash + 1))};
  if (d.src.is_english() == d.tgt.is_english()) {
    throw Error("bad_direction", "direction '" + std::string(text) + "' must have eng on exactly one side");
  }
  return d;
}

}  // namespace savanna
