#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "savanna/languages.hpp"

// Sentence and corpus MT metrics. All functions expect text that has
// already been through textnorm::metric_profile().
namespace savanna::metrics {

struct ChrfParams {
  int max_char_ngram = 6;
  double beta = 2.0;
};

enum class BleuSmoothing { none, add_one_for_sentence };

struct BleuParams {
  int max_ngram = 4;
  BleuSmoothing smoothing = BleuSmoothing::add_one_for_sentence;
};

/// Counts for one n-gram order. For BLEU `ref` is unused.
struct NgramCounts {
  std::uint64_t matches = 0;
  std::uint64_t hyp = 0;
  std::uint64_t ref = 0;

  NgramCounts& operator+=(const NgramCounts& o) {
    matches += o.matches;
    hyp += o.hyp;
    ref += o.ref;
    return *this;
  }
  bool operator==(const NgramCounts&) const = default;
};

struct ChrfStats {
  std::vector<NgramCounts> orders;  // index 0 = unigrams
  std::uint64_t hyp_chars = 0;      // non-space characters
  std::uint64_t ref_chars = 0;

  ChrfStats& operator+=(const ChrfStats& o);
  bool operator==(const ChrfStats&) const = default;
};

struct BleuStats {
  std::vector<NgramCounts> orders;
  std::uint64_t hyp_len = 0;
  std::uint64_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o);
  bool operator==(const BleuStats&) const = default;
};

struct EditStats {
  std::uint64_t distance = 0;
  std::uint64_t ref_len = 0;

  EditStats& operator+=(const EditStats& o) {
    distance += o.distance;
    ref_len += o.ref_len;
    return *this;
  }
  bool operator==(const EditStats&) const = default;
};

ChrfStats chrf_stats(std::string_view hypothesis, std::string_view reference,
                     const ChrfParams& params = {});
/// F-beta over uniformly averaged precision and recall; orders with no
/// reference n-grams are skipped.
double chrf_from_stats(const ChrfStats& stats, double beta);

BleuStats bleu_stats(std::string_view hypothesis, std::string_view reference,
                     int max_ngram);
double bleu_from_stats(const BleuStats& stats, BleuSmoothing smoothing);

/// Character-level Levenshtein distance over code points.
EditStats char_edit_stats(std::string_view hypothesis, std::string_view reference);
/// Token-level Levenshtein distance over whitespace-separated tokens.
EditStats word_edit_stats(std::string_view hypothesis, std::string_view reference);
/// Throws Error("undefined_denominator") when ref_len is zero.
double error_rate(const EditStats& stats);

double chrf(std::string_view hypothesis, std::string_view reference,
            const ChrfParams& params = {});
double bleu(std::string_view hypothesis, std::string_view reference,
            const BleuParams& params = {});
double cer(std::string_view hypothesis, std::string_view reference);
double wer(std::string_view hypothesis, std::string_view reference);

/// Tokenization used by BLEU: split on single spaces, empties dropped.
std::vector<std::string> bleu_tokens(std::string_view text);

struct SentenceScores {
  double chrf = 0.0;  // [0, 1]
  double bleu = 0.0;  // [0, 100]
  double cer = 0.0;
  double wer = 0.0;

  bool operator==(const SentenceScores&) const = default;
};

/// Scores plus the sufficient statistics needed for corpus-level pooling.
struct SentenceResult {
  SentenceScores scores;
  ChrfStats chrf;
  BleuStats bleu;
  EditStats chars;
  EditStats words;

  bool operator==(const SentenceResult&) const = default;
};

struct ScoringParams {
  ChrfParams chrf;
  BleuParams bleu;
};

SentenceResult score_sentence(std::string_view hypothesis, std::string_view reference,
                              const ScoringParams& params = {});

struct TextPair {
  std::string hypothesis;
  std::string reference;
};

/// OpenMP-parallel batch scoring; output order matches input order and is
/// bit-identical to score_pairs_serial.
std::vector<SentenceResult> score_pairs(std::span<const TextPair> pairs,
                                        const ScoringParams& params = {});
std::vector<SentenceResult> score_pairs_serial(std::span<const TextPair> pairs,
                                               const ScoringParams& params = {});

enum class AggregateScheme { mean_of_sentences, corpus_level };

/// Throws Error("empty_input") on an empty list.
SentenceScores aggregate(std::span<const SentenceResult> results, AggregateScheme scheme,
                         const ScoringParams& params = {});

/// Arithmetic mean; throws Error("empty_input") on an empty list.
double mean(std::span<const double> values);

struct MetricReport {
  Direction direction;
  AggregateScheme scheme = AggregateScheme::mean_of_sentences;
  std::vector<SentenceScores> per_sentence;
  SentenceScores aggregates;
};

}  // namespace savanna::metrics
