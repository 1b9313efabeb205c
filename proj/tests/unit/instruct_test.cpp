#include "savanna/instruct.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <random>

#include "savanna/error.hpp"
#include "savanna/textnorm.hpp"

namespace si = savanna::instruct;
namespace sc = savanna::corpus;
using savanna::LangCode;

namespace {

const std::string kData = SAVANNA_DATA_DIR;

si::ChatTemplate chatml() { return si::ChatTemplate::load(kData + "/templates/chatml.json"); }
si::ChatTemplate plain() { return si::ChatTemplate::load(kData + "/templates/plain.json"); }

si::InstructionExample convo(std::vector<std::string> texts, si::Category c = si::Category::question_answering) {
  si::InstructionExample ex;
  ex.category = c;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    ex.turns.push_back({i % 2 ? si::Role::assistant : si::Role::user, std::move(texts[i])});
  }
  return ex;
}

sc::ParallelPair eng_lug() {
  return {LangCode::parse("eng"), LangCode::parse("lug"), "The children are playing outside.",
          "Abaana bazannyira wabweru.", sc::Source::parallel, std::nullopt};
}

std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
  static const std::vector<std::string> pieces = {"a", "b", "e", " ", "ŋ", "é", "\n", "<", "|", "im", "ok", "!"};
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  std::string s;
  const auto n = len(rng);
  for (std::size_t i = 0; i < n; ++i) s += pieces[pick(rng)];
  return s;
}

// Independent edit distance over scalars (full matrix).
std::size_t levenshtein(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
  }
  return d[a.size()][b.size()];
}

// Brute force: any substring of exactly min_len bytes (ASCII input) with
// min_repeats non-overlapping occurrences.
bool brute_loop(const std::string& s, std::size_t min_len, std::size_t min_repeats) {
  for (std::size_t i = 0; i + min_len <= s.size(); ++i) {
    const auto sub = s.substr(i, min_len);
    std::size_t count = 0;
    for (std::size_t pos = s.find(sub); pos != std::string::npos; pos = s.find(sub, pos + min_len)) ++count;
    if (count >= min_repeats) return true;
  }
  return false;
}

}  // namespace

// ------------------------------------------------------------- examples

TEST(InstructionExample, ValidationRules) {
  EXPECT_NO_THROW(convo({"q", "a"}).validate());
  EXPECT_THROW(convo({"q"}).validate(), savanna::Error);
  EXPECT_THROW(convo({"q", ""}).validate(), savanna::Error);
  auto bad = convo({"q", "a"});
  std::swap(bad.turns[0].role, bad.turns[1].role);
  EXPECT_THROW(bad.validate(), savanna::Error);
  EXPECT_THROW(si::InstructionExample{}.validate(), savanna::Error);
}

TEST(InstructionExample, JsonRoundTrip) {
  auto ex = convo({"Kiki ekyo?", "Kye kitabo."}, si::Category::cultural_explanation);
  ex.langs = {LangCode::parse("lug")};
  EXPECT_EQ(si::example_from_json(nlohmann::json::parse(si::to_json(ex).dump())), ex);
  EXPECT_THROW(si::category_from_string("poetry"), savanna::Error);
}

// ------------------------------------------------------------ preferences

TEST(PreferencePair, ValidationAndJson) {
  const si::PreferencePair p{"q", "good", "bad", si::Defect::factuality};
  EXPECT_EQ(si::preference_from_json(si::to_json(p)), p);
  EXPECT_THROW((si::PreferencePair{"q", "same", "same", si::Defect::other}.validate()), savanna::Error);
  EXPECT_THROW((si::PreferencePair{"", "a", "b", si::Defect::other}.validate()), savanna::Error);
}

TEST(PreferencePair, FactualSubstitution) {
  const std::vector<std::pair<std::string, std::string>> swaps = {{"Mbarara", "Gulu"}, {"Kampala", "Jinja"}};
  const auto p = si::make_factuality_pair("What is the capital of Uganda?", "The capital is Kampala.", swaps);
  EXPECT_EQ(p.rejected, "The capital is Jinja.");
  EXPECT_EQ(p.defect, si::Defect::factuality);
  EXPECT_THROW(si::make_factuality_pair("q", "nothing matches", swaps), savanna::Error);
}

TEST(PreferencePair, GlitchLoopHasRepeatedPhrase) {
  const std::string chosen =
      "Ekika ky'okwerinda kye kimu ku bintu ebikulu mu buwangwa bwa Baganda era kiyamba okumanya ab'oluganda.";
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = si::make_glitch_pair("Nnyinyonnyola ebika", chosen, seed);
    EXPECT_EQ(p.defect, si::Defect::glitching);
    EXPECT_NE(p.rejected, p.chosen);
    EXPECT_TRUE(si::has_repetition_loop(p.rejected, 8, 5)) << p.rejected;
    EXPECT_FALSE(si::has_repetition_loop(p.chosen, 8, 5));
  }
  // A one-word answer still produces a loop.
  EXPECT_TRUE(si::has_repetition_loop(si::make_glitch_pair("q", "Yee", 1).rejected, 8, 5));
}

TEST(RepetitionDetector, MatchesBruteForce) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> ch(0, 2);
  for (int trial = 0; trial < 400; ++trial) {
    std::string s;
    const int n = 10 + trial % 60;
    for (int i = 0; i < n; ++i) s += static_cast<char>('a' + ch(rng));
    for (std::size_t len : {3u, 4u, 8u}) {
      EXPECT_EQ(si::has_repetition_loop(s, len, 5), brute_loop(s, len, 5)) << s << " len " << len;
    }
  }
}

// ------------------------------------------------------------- tokenizers

TEST(ByteTokenizer, SpecialsAndRoundTrip) {
  const si::ByteTokenizer tok({"<|im_start|>", "<|im_end|>"});
  const auto ids = tok.encode("<|im_start|>ab<|im_end|>");
  EXPECT_EQ(ids, (std::vector<si::TokenId>{256, 'a', 'b', 257}));
  EXPECT_EQ(tok.decode(ids), "<|im_start|>ab<|im_end|>");
  EXPECT_EQ(tok.vocab_size(), 258u);
  EXPECT_THROW(tok.decode(std::vector<si::TokenId>{999}), savanna::Error);
}

TEST(VocabTokenizer, LongestMatchWithByteFallback) {
  const auto tok = si::VocabTokenizer::load(kData + "/tokenizers/toy_vocab.txt");
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_text(rng, 40);
    EXPECT_EQ(tok.decode(tok.encode(s)), s);
  }
  const auto ids = tok.encode("<|im_start|>user\n");
  EXPECT_EQ(ids.size(), 3u);
  EXPECT_EQ(tok.decode(std::vector{ids[1]}), "user");
}

TEST(VocabTokenizer, RejectsBadFilesAndUncoveredBytes) {
  EXPECT_THROW(si::VocabTokenizer::parse("a\na\n"), savanna::Error);
  EXPECT_THROW(si::VocabTokenizer::parse("a\n\nb\n"), savanna::Error);
  const auto tok = si::VocabTokenizer::parse("a\nb\n");
  EXPECT_EQ(tok.encode("ab"), (std::vector<si::TokenId>{0, 1}));
  try {
    tok.encode("abc");
    FAIL();
  } catch (const savanna::Error& e) {
    EXPECT_EQ(e.kind(), "untokenizable");
  }
}

// ----------------------------------------------------------- chat template

TEST(ChatTemplate, MissingRoleDelimiterIsError) {
  auto j = chatml().to_json();
  j["roles"].erase("assistant");
  EXPECT_THROW(si::ChatTemplate::from_json(j), savanna::Error);
  j = chatml().to_json();
  j["roles"]["user"].erase("suffix");
  try {
    si::ChatTemplate::from_json(j);
    FAIL();
  } catch (const savanna::Error& e) {
    EXPECT_EQ(e.kind(), "bad_template");
  }
}

TEST(RenderChat, ZeroOverheadTemplate) {
  const si::ByteTokenizer tok;
  const auto r = si::render_chat(convo({"hello", "abc"}), tok, plain());
  EXPECT_EQ(r.loss_mask, (std::vector<std::uint8_t>{0, 0, 0, 0, 0, 1, 1, 1}));
  ASSERT_EQ(r.boundaries.size(), 2u);
  EXPECT_EQ(r.boundaries[1], (si::TurnSpan{1, si::Role::assistant, 5, 8}));
}

TEST(RenderChat, TwoAssistantTurnsGiveTwoRuns) {
  const si::ByteTokenizer tok({"<|im_start|>", "<|im_end|>"});
  const auto r = si::render_chat(convo({"q1", "a1", "q2", "a2"}), tok, chatml());
  int runs = 0;
  for (std::size_t i = 0; i < r.loss_mask.size(); ++i) {
    if (r.loss_mask[i] && (i == 0 || !r.loss_mask[i - 1])) ++runs;
  }
  EXPECT_EQ(runs, 2);
}

TEST(RenderChat, MaskCountEqualsIsolatedAssistantTokens) {
  const auto tok = si::VocabTokenizer::load(kData + "/tokenizers/toy_vocab.txt");
  const auto tmpl = chatml();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> texts;
    const int turns = 2 * (1 + trial % 3);
    for (int t = 0; t < turns; ++t) texts.push_back(random_text(rng, 30));
    const auto ex = convo(texts);
    const auto r = si::render_chat(ex, tok, tmpl);
    std::size_t expected = 0;
    for (const auto& t : ex.turns) {
      if (t.role == si::Role::assistant) expected += tok.encode(t.text).size();
    }
    EXPECT_EQ(static_cast<std::size_t>(std::count(r.loss_mask.begin(), r.loss_mask.end(), 1)), expected);
    EXPECT_EQ(r.token_ids.size(), r.loss_mask.size());
    EXPECT_EQ(tok.decode(r.token_ids), si::render_text(ex, tmpl));
  }
}

TEST(RenderChat, MaskDecodingDuality) {
  const si::ByteTokenizer tok({"<|im_start|>", "<|im_end|>"});
  const auto tmpl = chatml();
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> texts;
    for (int t = 0; t < 2 * (1 + trial % 4); ++t) texts.push_back(random_text(rng, 25));
    const auto ex = convo(texts);
    const auto r = si::render_chat(ex, tok, tmpl);
    std::vector<si::TokenId> on, off;
    for (std::size_t i = 0; i < r.token_ids.size(); ++i) (r.loss_mask[i] ? on : off).push_back(r.token_ids[i]);
    std::string bodies;
    std::string rest = tmpl.bos;
    for (const auto& t : ex.turns) {
      const auto& d = tmpl.delimiters(t.role);
      rest += d.prefix;
      (t.role == si::Role::assistant ? bodies : rest) += t.text;
      rest += d.suffix;
    }
    rest += tmpl.eos;
    EXPECT_EQ(tok.decode(on), bodies);
    EXPECT_EQ(tok.decode(off), rest);
  }
}

TEST(RenderChat, TemplateNotRoundTrippedIsError) {
  const auto tok = si::VocabTokenizer::parse("a\nb\n<|im_start|>\n");
  EXPECT_THROW(si::render_chat(convo({"a", "b"}), tok, chatml()), savanna::Error);
}

TEST(RenderBatch, ParallelMatchesSerial) {
  const si::ByteTokenizer tok({"<|im_start|>", "<|im_end|>"});
  std::mt19937_64 rng(6);
  std::vector<si::InstructionExample> exs;
  for (int i = 0; i < 300; ++i) exs.push_back(convo({random_text(rng, 40), random_text(rng, 40)}));
  EXPECT_EQ(si::render_batch(exs, tok, chatml()), si::render_batch_serial(exs, tok, chatml()));
  exs.push_back(convo({"only user"}));
  EXPECT_THROW(si::render_batch(exs, tok, chatml()), savanna::Error);
}

// ----------------------------------------------------- translation & noise

TEST(TranslationInstruction, TemplateContract) {
  const auto ex = si::make_translation_instruction(eng_lug(), false, 1);
  ASSERT_EQ(ex.turns.size(), 2u);
  const auto& user = ex.turns[0].text;
  EXPECT_NE(user.find("English"), std::string::npos);
  EXPECT_NE(user.find("Luganda"), std::string::npos);
  EXPECT_NE(user.find(eng_lug().src_text), std::string::npos);
  EXPECT_EQ(ex.turns[1].text, eng_lug().tgt_text);
  EXPECT_EQ(ex.category, si::Category::translation);
  EXPECT_EQ(ex.langs.size(), 2u);
}

TEST(TranslationInstruction, DeterministicPerSeed) {
  EXPECT_EQ(si::make_translation_instruction(eng_lug(), true, 9), si::make_translation_instruction(eng_lug(), true, 9));
  EXPECT_EQ(si::make_translation_instruction(eng_lug(), false, 9),
            si::make_translation_instruction(eng_lug(), false, 10));
}

TEST(FillPrompt, ReplacesKnownFieldsOnly) {
  EXPECT_EQ(si::fill_prompt("{source_language}->{target_language}: {text} {other}", "A", "B", "t"), "A->B: t {other}");
}

TEST(AsrNoise, EditDistanceWithinBandForFixedSeed) {
  // 100 letters, no punctuation: edits ~ Binomial(100, 0.1).
  std::string src;
  for (int i = 0; i < 100; ++i) src += static_cast<char>('a' + (i * 7) % 26);
  const auto noisy = si::asr_noise(src, {.rate = 0.1}, 2025);
  const auto d = levenshtein(savanna::textnorm::to_u32(src), savanna::textnorm::to_u32(noisy.text));
  EXPECT_GE(d, 5u);
  EXPECT_LE(d, 15u);
  EXPECT_LE(d, noisy.edits);
}

TEST(AsrNoise, EditDistanceWithinThreeSigmaAcrossSeeds) {
  std::string src;
  for (int i = 0; i < 100; ++i) src += static_cast<char>('a' + (i * 11) % 26);
  // Binomial(100, 0.1): mean 10, sigma 3. About 0.3% of seeds fall outside
  // [1, 19], so the band is checked as a rate rather than per seed.
  const int seeds = 2000;
  double total = 0;
  int outside = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto noisy = si::asr_noise(src, {.rate = 0.1}, static_cast<std::uint64_t>(seed));
    const auto d = levenshtein(savanna::textnorm::to_u32(src), savanna::textnorm::to_u32(noisy.text));
    EXPECT_LE(d, noisy.edits);
    outside += (d < 1 || d > 19) ? 1 : 0;
    total += static_cast<double>(noisy.edits);
  }
  EXPECT_LT(outside, seeds / 100);
  EXPECT_NEAR(total / seeds, 10.0, 0.3);
}

TEST(AsrNoise, DropsPunctuationAndValidatesRates) {
  const auto n = si::asr_noise("Yee, nedda!", {.rate = 0.0, .punctuation_drop = 1.0}, 1);
  EXPECT_EQ(n.text, "Yee nedda");
  EXPECT_EQ(n.punctuation_dropped, 2u);
  EXPECT_EQ(si::asr_noise("abc", {.rate = 0.0}, 1).text, "abc");
  EXPECT_THROW(si::asr_noise("abc", {.rate = 1.5}, 1), savanna::Error);
}

// ------------------------------------------------------------ concatenation

TEST(ConcatConversations, SingleExampleUnchanged) {
  const auto e1 = convo({"q", "a"});
  EXPECT_EQ(si::concat_conversations(std::vector{e1}, 3, 8), e1);
}

TEST(ConcatConversations, TurnsContiguousAndOrdered) {
  const auto e1 = convo({"q1", "a1"});
  const auto e2 = convo({"q2", "a2"}, si::Category::creative);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto out = si::concat_conversations(std::vector{e1, e2}, seed, 8);
    ASSERT_EQ(out.turns.size(), 4u);
    const bool e1_first = out.turns[0].text == "q1";
    const auto& first = e1_first ? e1 : e2;
    const auto& second = e1_first ? e2 : e1;
    EXPECT_EQ(out.turns[0], first.turns[0]);
    EXPECT_EQ(out.turns[1], first.turns[1]);
    EXPECT_EQ(out.turns[2], second.turns[0]);
    EXPECT_EQ(out.turns[3], second.turns[1]);
    EXPECT_EQ(out, si::concat_conversations(std::vector{e1, e2}, seed, 8));
  }
}

TEST(ConcatConversations, RespectsMaxTurnsAndRejectsBadInput) {
  const auto e = convo({"q", "a"});
  EXPECT_EQ(si::concat_conversations(std::vector{e, e, e}, 1, 4).turns.size(), 4u);
  EXPECT_THROW(si::concat_conversations(std::vector{e, convo({"q"})}, 1, 8), savanna::Error);
  EXPECT_THROW(si::concat_conversations({}, 1, 8), savanna::Error);
}

// ---------------------------------------------------------------- packing

namespace {

si::TokenStream stream(std::string id, std::size_t n, si::TokenId base = 0) {
  si::TokenStream s{std::move(id), {}};
  for (std::size_t i = 0; i < n; ++i) s.tokens.push_back(base + static_cast<si::TokenId>(i));
  return s;
}

std::vector<std::size_t> lengths(const std::vector<si::PackedSequence>& seqs) {
  std::vector<std::size_t> out;
  for (const auto& s : seqs) out.push_back(s.token_ids.size());
  return out;
}

}  // namespace

TEST(Pack, SingleFullDocument) {
  const auto seqs = si::pack(std::vector{stream("d", 512)});
  ASSERT_EQ(seqs.size(), 1u);
  EXPECT_EQ(seqs[0].spans.size(), 1u);
  EXPECT_EQ(seqs[0].token_ids.size(), 512u);
}

TEST(Pack, FirstFitTrace) {
  const auto seqs = si::pack(std::vector{stream("a", 300), stream("b", 300), stream("c", 500)});
  EXPECT_EQ(lengths(seqs), (std::vector<std::size_t>{300, 300, 500}));
  // Later small docs back-fill the earliest gap.
  const auto more = si::pack(std::vector{stream("a", 300), stream("b", 300), stream("c", 500), stream("d", 200),
                                         stream("e", 12)});
  EXPECT_EQ(lengths(more), (std::vector<std::size_t>{512, 300, 500}));
}

TEST(Pack, LongDocumentSplitIntoChunks) {
  const auto seqs = si::pack(std::vector{stream("long", 600)});
  EXPECT_EQ(lengths(seqs), (std::vector<std::size_t>{512, 88}));
  EXPECT_EQ(seqs[1].spans[0].doc_offset, 512u);
  EXPECT_EQ(seqs[1].token_ids[0], 512);
}

TEST(Pack, ConservationAndSegmentIds) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> len(1, 2000);
  std::vector<si::TokenStream> streams;
  for (int i = 0; i < 200; ++i) streams.push_back(stream("d" + std::to_string(i), len(rng), i * 10000));
  const auto seqs = si::pack(streams);
  std::map<std::string, std::vector<si::TokenId>> rebuilt;
  for (const auto& s : seqs) {
    EXPECT_LE(s.token_ids.size(), 512u);
    std::size_t expect = 0;
    for (std::size_t k = 0; k < s.spans.size(); ++k) {
      const auto& sp = s.spans[k];
      EXPECT_EQ(sp.start, expect);
      expect = sp.end;
      for (std::size_t i = sp.start; i < sp.end; ++i) EXPECT_EQ(s.segment_ids[i], k);
      auto& doc = rebuilt[sp.doc_id];
      if (doc.size() < sp.doc_offset + (sp.end - sp.start)) doc.resize(sp.doc_offset + (sp.end - sp.start), -1);
      std::copy(s.token_ids.begin() + static_cast<std::ptrdiff_t>(sp.start),
                s.token_ids.begin() + static_cast<std::ptrdiff_t>(sp.end),
                doc.begin() + static_cast<std::ptrdiff_t>(sp.doc_offset));
    }
    EXPECT_EQ(expect, s.token_ids.size());
  }
  for (const auto& s : streams) EXPECT_EQ(rebuilt[s.doc_id], s.tokens);
  EXPECT_EQ(si::pack(streams), seqs);
}

TEST(BatchSpec, Arithmetic) {
  EXPECT_EQ(si::batch_spec(32768, 512), 64u);
  EXPECT_EQ(si::batch_spec(512, 512), 1u);
  EXPECT_EQ(si::batch_spec(1024, 512), 2u);
  EXPECT_THROW(si::batch_spec(1000, 512), savanna::Error);
  EXPECT_THROW(si::batch_spec(512, 0), savanna::Error);
}

TEST(PackedFormat, BinaryAndJsonlRoundTrip) {
  const auto seqs = si::pack(std::vector{stream("α", 700), stream("b", 40), stream("c", 3)});
  const auto bin = si::write_packed_binary(seqs);
  EXPECT_EQ(bin.substr(0, 4), "SVPK");
  EXPECT_EQ(static_cast<std::uint8_t>(bin[4]), si::kPackedFormatVersion);
  EXPECT_EQ(si::read_packed_binary(bin), seqs);
  EXPECT_EQ(si::read_packed_jsonl(si::write_packed_jsonl(seqs)), seqs);

  auto wrong_version = bin;
  wrong_version[4] = 9;
  EXPECT_THROW(si::read_packed_binary(wrong_version), savanna::Error);
  EXPECT_THROW(si::read_packed_binary(bin.substr(0, bin.size() - 2)), savanna::Error);
}

// ---------------------------------------------------------------- dataset

TEST(BuildDataset, CountsPerCategory) {
  std::vector<sc::ParallelPair> pairs;
  for (int i = 0; i < 30; ++i) {
    pairs.push_back({LangCode::parse("eng"), LangCode::parse("ach"), "Sentence " + std::to_string(i),
                     "Lok " + std::to_string(i), sc::Source::parallel, std::nullopt});
  }
  std::vector<si::InstructionExample> pool;
  for (int i = 0; i < 10; ++i) pool.push_back(convo({"q" + std::to_string(i), "a"}, si::Category::creative));
  for (int i = 0; i < 5; ++i) pool.push_back(convo({"s" + std::to_string(i), "b"}, si::Category::summarization_correction));

  si::DatasetOptions opts;
  opts.translation_count = 40;
  opts.conversational_count = 12;
  const auto r = si::build_dataset(pairs, pool, opts, 99);
  EXPECT_EQ(r.category_counts.at(si::Category::translation), 40u);
  EXPECT_EQ(r.category_counts.at(si::Category::creative) + r.category_counts.at(si::Category::summarization_correction),
            12u);
  std::size_t turns = 0;
  for (const auto& ex : r.examples) {
    ex.validate();
    turns += ex.turns.size();
  }
  EXPECT_EQ(turns, 2u * 52u);
  EXPECT_EQ(si::to_json(r), si::to_json(si::build_dataset(pairs, pool, opts, 99)));

  opts.translation_count = 1000;  // capped at 2 * pairs
  EXPECT_EQ(si::build_dataset(pairs, pool, opts, 1).category_counts.at(si::Category::translation), 60u);
}
