#include "savanna/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "savanna/error.hpp"
#include "savanna/textnorm.hpp"

namespace savanna::metrics {

namespace {

std::u32string strip_spaces(std::string_view text) {
  std::u32string u = textnorm::to_u32(text);
  std::erase_if(u, [](char32_t c) { return textnorm::is_whitespace(c); });
  return u;
}

template <typename Key, typename Seq>
std::unordered_map<Key, std::uint64_t> count_ngrams(const Seq& seq, std::size_t n) {
  std::unordered_map<Key, std::uint64_t> counts;
  if (seq.size() < n) return counts;
  counts.reserve(seq.size() - n + 1);
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[Key(seq.data() + i, n)];
  }
  return counts;
}

template <typename Map>
std::uint64_t clipped_matches(const Map& hyp, const Map& ref) {
  std::uint64_t m = 0;
  for (const auto& [gram, count] : hyp) {
    auto it = ref.find(gram);
    if (it != ref.end()) m += std::min(count, it->second);
  }
  return m;
}

// Maps tokens to dense ids so word n-grams can be hashed as u32 strings.
struct TokenIds {
  std::unordered_map<std::string, char32_t> vocab;

  std::u32string encode(const std::vector<std::string>& tokens) {
    std::u32string ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) {
      auto [it, inserted] = vocab.try_emplace(t, static_cast<char32_t>(vocab.size()));
      ids.push_back(it->second);
    }
    return ids;
  }
};

template <typename T>
std::uint64_t levenshtein(const std::basic_string<T>& a, const std::basic_string<T>& b) {
  const std::size_t m = b.size();
  std::vector<std::uint64_t> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::uint64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

ChrfStats& ChrfStats::operator+=(const ChrfStats& o) {
  if (orders.size() < o.orders.size()) orders.resize(o.orders.size());
  for (std::size_t i = 0; i < o.orders.size(); ++i) orders[i] += o.orders[i];
  hyp_chars += o.hyp_chars;
  ref_chars += o.ref_chars;
  return *this;
}

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  if (orders.size() < o.orders.size()) orders.resize(o.orders.size());
  for (std::size_t i = 0; i < o.orders.size(); ++i) orders[i] += o.orders[i];
  hyp_len += o.hyp_len;
  ref_len += o.ref_len;
  return *this;
}

ChrfStats chrf_stats(std::string_view hypothesis, std::string_view reference,
                     const ChrfParams& params) {
  if (params.max_char_ngram < 1) throw Error("bad_params", "max_char_ngram must be >= 1");
  const std::u32string hyp = strip_spaces(hypothesis);
  const std::u32string ref = strip_spaces(reference);

  ChrfStats stats;
  stats.hyp_chars = hyp.size();
  stats.ref_chars = ref.size();
  stats.orders.resize(static_cast<std::size_t>(params.max_char_ngram));
  for (std::size_t n = 1; n <= stats.orders.size(); ++n) {
    auto& counts = stats.orders[n - 1];
    counts.hyp = hyp.size() >= n ? hyp.size() - n + 1 : 0;
    counts.ref = ref.size() >= n ? ref.size() - n + 1 : 0;
    if (counts.hyp == 0 || counts.ref == 0) continue;
    const auto h = count_ngrams<std::u32string_view>(hyp, n);
    const auto r = count_ngrams<std::u32string_view>(ref, n);
    counts.matches = clipped_matches(h, r);
  }
  return stats;
}

double chrf_from_stats(const ChrfStats& stats, double beta) {
  if (!(beta > 0.0)) throw Error("bad_params", "chrF beta must be > 0");
  if (stats.hyp_chars == 0 && stats.ref_chars == 0) return 1.0;
  if (stats.hyp_chars == 0 || stats.ref_chars == 0) return 0.0;

  double precision = 0.0;
  double recall = 0.0;
  int effective = 0;
  for (const auto& c : stats.orders) {
    if (c.ref == 0) continue;
    const auto m = static_cast<double>(c.matches);
    precision += c.hyp > 0 ? m / static_cast<double>(c.hyp) : 0.0;
    recall += m / static_cast<double>(c.ref);
    ++effective;
  }
  if (effective == 0) return 0.0;
  precision /= effective;
  recall /= effective;

  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  if (denom <= 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

std::vector<std::string> bleu_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(' ', start);
    if (end == std::string_view::npos) end = text.size();
    if (end > start) tokens.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return tokens;
}

BleuStats bleu_stats(std::string_view hypothesis, std::string_view reference, int max_ngram) {
  if (max_ngram < 1) throw Error("bad_params", "BLEU max_ngram must be >= 1");
  TokenIds ids;
  const std::u32string hyp = ids.encode(bleu_tokens(hypothesis));
  const std::u32string ref = ids.encode(bleu_tokens(reference));

  BleuStats stats;
  stats.hyp_len = hyp.size();
  stats.ref_len = ref.size();
  stats.orders.resize(static_cast<std::size_t>(max_ngram));
  for (std::size_t n = 1; n <= stats.orders.size(); ++n) {
    auto& counts = stats.orders[n - 1];
    counts.hyp = hyp.size() >= n ? hyp.size() - n + 1 : 0;
    counts.ref = ref.size() >= n ? ref.size() - n + 1 : 0;
    if (counts.hyp == 0 || counts.ref == 0) continue;
    counts.matches = clipped_matches(count_ngrams<std::u32string_view>(hyp, n),
                                     count_ngrams<std::u32string_view>(ref, n));
  }
  return stats;
}

double bleu_from_stats(const BleuStats& stats, BleuSmoothing smoothing) {
  if (stats.hyp_len == 0 || stats.orders.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t i = 0; i < stats.orders.size(); ++i) {
    const auto& c = stats.orders[i];
    double p = 0.0;
    if (smoothing == BleuSmoothing::add_one_for_sentence && i >= 1) {
      p = (static_cast<double>(c.matches) + 1.0) / (static_cast<double>(c.hyp) + 1.0);
    } else {
      if (c.hyp == 0 || c.matches == 0) return 0.0;
      p = static_cast<double>(c.matches) / static_cast<double>(c.hyp);
    }
    log_sum += std::log(p);
  }
  const double geo = std::exp(log_sum / static_cast<double>(stats.orders.size()));
  const double ratio = static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len);
  const double bp = std::exp(std::min(0.0, 1.0 - ratio));
  return 100.0 * bp * geo;
}

EditStats char_edit_stats(std::string_view hypothesis, std::string_view reference) {
  const std::u32string hyp = textnorm::to_u32(hypothesis);
  const std::u32string ref = textnorm::to_u32(reference);
  return {levenshtein(hyp, ref), ref.size()};
}

EditStats word_edit_stats(std::string_view hypothesis, std::string_view reference) {
  TokenIds ids;
  const std::u32string hyp = ids.encode(textnorm::split_whitespace(hypothesis));
  const std::u32string ref = ids.encode(textnorm::split_whitespace(reference));
  return {levenshtein(hyp, ref), ref.size()};
}

double error_rate(const EditStats& stats) {
  if (stats.ref_len == 0) {
    throw Error("undefined_denominator", "error rate undefined for an empty reference");
  }
  return static_cast<double>(stats.distance) / static_cast<double>(stats.ref_len);
}

double chrf(std::string_view hypothesis, std::string_view reference, const ChrfParams& params) {
  return chrf_from_stats(chrf_stats(hypothesis, reference, params), params.beta);
}

double bleu(std::string_view hypothesis, std::string_view reference, const BleuParams& params) {
  return bleu_from_stats(bleu_stats(hypothesis, reference, params.max_ngram), params.smoothing);
}

double cer(std::string_view hypothesis, std::string_view reference) {
  return error_rate(char_edit_stats(hypothesis, reference));
}

double wer(std::string_view hypothesis, std::string_view reference) {
  return error_rate(word_edit_stats(hypothesis, reference));
}

SentenceResult score_sentence(std::string_view hypothesis, std::string_view reference,
                              const ScoringParams& params) {
  SentenceResult r;
  r.chrf = chrf_stats(hypothesis, reference, params.chrf);
  r.bleu = bleu_stats(hypothesis, reference, params.bleu.max_ngram);
  r.chars = char_edit_stats(hypothesis, reference);
  r.words = word_edit_stats(hypothesis, reference);
  r.scores.chrf = chrf_from_stats(r.chrf, params.chrf.beta);
  r.scores.bleu = bleu_from_stats(r.bleu, params.bleu.smoothing);
  r.scores.cer = error_rate(r.chars);
  r.scores.wer = error_rate(r.words);
  return r;
}

std::vector<SentenceResult> score_pairs_serial(std::span<const TextPair> pairs,
                                               const ScoringParams& params) {
  std::vector<SentenceResult> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(score_sentence(p.hypothesis, p.reference, params));
  return out;
}

std::vector<SentenceResult> score_pairs(std::span<const TextPair> pairs,
                                        const ScoringParams& params) {
  std::vector<SentenceResult> out(pairs.size());
  const auto n = static_cast<std::int64_t>(pairs.size());
  // Exceptions must not escape an OpenMP region; rethrow the first one after.
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const auto& p = pairs[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(i)] = score_sentence(p.hypothesis, p.reference, params);
    } catch (...) {
#pragma omp critical(savanna_score_pairs)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw Error("empty_input", "cannot average an empty list");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

SentenceScores aggregate(std::span<const SentenceResult> results, AggregateScheme scheme,
                         const ScoringParams& params) {
  if (results.empty()) throw Error("empty_input", "cannot aggregate an empty list");
  SentenceScores agg;
  if (scheme == AggregateScheme::mean_of_sentences) {
    for (const auto& r : results) {
      agg.chrf += r.scores.chrf;
      agg.bleu += r.scores.bleu;
      agg.cer += r.scores.cer;
      agg.wer += r.scores.wer;
    }
    const auto n = static_cast<double>(results.size());
    agg.chrf /= n;
    agg.bleu /= n;
    agg.cer /= n;
    agg.wer /= n;
    return agg;
  }

  ChrfStats chrf;
  BleuStats bleu;
  EditStats chars;
  EditStats words;
  for (const auto& r : results) {
    chrf += r.chrf;
    bleu += r.bleu;
    chars += r.chars;
    words += r.words;
  }
  agg.chrf = chrf_from_stats(chrf, params.chrf.beta);
  agg.bleu = bleu_from_stats(bleu, BleuSmoothing::none);
  agg.cer = error_rate(chars);
  agg.wer = error_rate(words);
  return agg;
}

}  // namespace savanna::metrics
