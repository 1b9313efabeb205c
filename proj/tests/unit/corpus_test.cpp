#include "savanna/corpus.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <set>
#include <thread>

#include "savanna/error.hpp"
#include "savanna/util.hpp"

namespace sc = savanna::corpus;
using savanna::LangCode;

namespace {

LangCode lang(const char* code) { return LangCode::parse(code); }

sc::CorpusDocument doc(std::string text, sc::Source source = sc::Source::web, const char* code = "lug") {
  return sc::make_document(lang(code), std::move(text), source);
}

std::size_t total_chars(const std::vector<sc::CorpusDocument>& docs) {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.char_count;
  return n;
}

const sc::BookTable& books() {
  static const sc::BookTable table = sc::BookTable::load(std::string(SAVANNA_DATA_DIR) + "/bible_books.tsv");
  return table;
}

sc::BibleEdition edition(const char* code, std::vector<std::pair<int, std::string>> verses) {
  sc::BibleEdition e{lang(code), {}};
  for (auto& [v, text] : verses) e.verses.push_back({{"GEN", 1, v}, std::move(text)});
  return e;
}

class EchoClient : public sc::MtClient {
 public:
  std::string identity() const override { return "stub:echo"; }
  std::string translate(const std::string& text, const LangCode&, const LangCode&) override {
    return "TT:" + text;
  }
};

// Fails permanently on one input text and counts calls.
class FlakyClient : public sc::MtClient {
 public:
  explicit FlakyClient(std::string poison) : poison_(std::move(poison)) {}
  std::string identity() const override { return "stub:flaky"; }
  std::string translate(const std::string& text, const LangCode&, const LangCode&) override {
    ++calls;
    if (text == poison_) throw savanna::Error("transport", "scripted failure");
    return "TT:" + text;
  }
  std::atomic<int> calls{0};

 private:
  std::string poison_;
};

}  // namespace

// -------------------------------------------------------------- documents

TEST(CorpusDocument, IdIsStableAndCountsScalars) {
  const auto a = doc("Ŋŋ ekitabo");
  const auto b = doc("Ŋŋ ekitabo");
  EXPECT_EQ(a.id, b.id);
  EXPECT_EQ(a.id.size(), 16u);
  EXPECT_EQ(a.char_count, 10u);
  EXPECT_NE(a.id, doc("Ŋŋ ekitabo", sc::Source::book_ocr).id);
}

TEST(CorpusDocument, JsonRoundTrip) {
  auto d = doc("Webale nnyo", sc::Source::synthetic_bt);
  d.provenance = sc::Provenance{"abc", "stub:echo", "2025-01-01T00:00:00Z"};
  d.license_note = "CC-BY-4.0";
  EXPECT_EQ(sc::document_from_json(nlohmann::json::parse(sc::to_json(d).dump())), d);
}

TEST(CorpusDocument, SyntheticWithoutProvenanceIsRejected) {
  const nlohmann::json j = {{"lang", "lug"}, {"text", "x"}, {"source", "synthetic_bt"}};
  try {
    sc::document_from_json(j);
    FAIL();
  } catch (const savanna::Error& e) {
    EXPECT_EQ(e.kind(), "bad_document");
  }
  EXPECT_THROW(sc::source_from_string("radio"), savanna::Error);
}

TEST(CorpusDocument, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "savanna_docs_test.jsonl";
  const std::vector<sc::CorpusDocument> docs = {doc("one"), doc("two", sc::Source::bible, "ach")};
  sc::write_documents(path, docs);
  EXPECT_EQ(sc::read_documents(path), docs);
  std::filesystem::remove(path);
}

TEST(CleanDocuments, DropsEmptyAndAggregates) {
  const std::vector<sc::CorpusDocument> docs = {doc("a\x01  b"), doc("12\n"), doc("ok")};
  sc::CleanTotals totals;
  const auto out = sc::clean_documents(docs, savanna::textnorm::corpus_profile(), &totals);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].text, "a b");
  EXPECT_EQ(out[0].char_count, 3u);
  EXPECT_EQ(totals.docs_in, 3u);
  EXPECT_EQ(totals.docs_out, 2u);
  EXPECT_EQ(totals.report.control_removed, 1u);
  EXPECT_EQ(totals.report.artifacts_removed, 1u);
}

// ------------------------------------------------------------------ dedup

TEST(SplitParagraphs, BlankLineBoundaries) {
  const auto p = sc::split_paragraphs("\n\nA1\nA2\n\n \nB\n\n\nC\n");
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0], "A1\nA2");
  EXPECT_EQ(p[1], "B");
  EXPECT_EQ(p[2], "C");
  EXPECT_TRUE(sc::split_paragraphs("").empty());
}

TEST(Dedup, ExactDuplicateDropped) {
  const auto a = doc("Paragraph one.\n\nParagraph two.");
  sc::DedupStats stats;
  const auto out = sc::dedup(std::vector{a, a}, &stats);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], a);
  EXPECT_EQ(stats.exact_duplicates, 1u);
}

TEST(Dedup, SharedParagraphRemovedFromLaterDocument) {
  // A = {p1, p2, p3}; B = {p4, p2, p5}. Hash sets by hand: B ∩ A = {p2}.
  const auto a = doc("Omusajja yagenda.\n\nEnkuba yatonnya.\n\nAbaana bazannya.");
  const auto b = doc("Emmotoka ennene.\n\nEnkuba yatonnya.\n\nEkitabo kiri ku mmeeza.");
  sc::DedupStats stats;
  const auto out = sc::dedup(std::vector{a, b}, &stats);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], a);
  EXPECT_EQ(out[1].id, b.id);
  EXPECT_EQ(out[1].text, "Emmotoka ennene.\n\nEkitabo kiri ku mmeeza.");
  EXPECT_EQ(out[1].char_count, savanna::textnorm::scalar_count(out[1].text));
  EXPECT_EQ(stats.paragraphs_removed, 1u);
  EXPECT_EQ(stats.chars_out, total_chars(out));
}

TEST(Dedup, RepeatedParagraphWithinDocument) {
  const auto out = sc::dedup(std::vector{doc("x\n\ny\n\nx")});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].text, "x\n\ny");
}

TEST(Dedup, FullyCoveredDocumentDropped) {
  const auto out = sc::dedup(std::vector{doc("x\n\ny"), doc("y\n\nx")});
  EXPECT_EQ(out.size(), 1u);
}

TEST(Dedup, EmptyInput) { EXPECT_TRUE(sc::dedup({}).empty()); }

TEST(Dedup, PropertiesOnRandomCorpora) {
  savanna::Rng rng(11);
  const std::vector<std::string> pool = {"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<sc::CorpusDocument> docs;
    const auto n = 1 + rng.below(30);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string text;
      const auto paras = 1 + rng.below(4);
      for (std::uint64_t k = 0; k < paras; ++k) {
        if (k) text += "\n\n";
        text += pool[rng.below(pool.size())] + " " + pool[rng.below(pool.size())];
      }
      docs.push_back(doc(text));
    }
    sc::DedupStats s1, s2;
    const auto once = sc::dedup(docs, &s1);
    EXPECT_EQ(sc::dedup(once), once);
    EXPECT_EQ(sc::dedup_serial(docs, &s2), once);
    EXPECT_EQ(s1, s2);
    EXPECT_LE(once.size(), docs.size());
    EXPECT_LE(total_chars(once), total_chars(docs));
    std::set<std::string> seen;
    for (const auto& d : once) {
      for (auto p : sc::split_paragraphs(d.text)) EXPECT_TRUE(seen.insert(std::string(p)).second);
    }
  }
}

// ------------------------------------------------------------ bible align

TEST(BookTable, CanonicalizesAliases) {
  EXPECT_EQ(books().size(), 66u);
  EXPECT_EQ(books().canonical("Genesis"), "GEN");
  EXPECT_EQ(books().canonical("gen"), "GEN");
  EXPECT_EQ(books().canonical("1 Cor"), "1CO");
  EXPECT_EQ(books().canonical("Song of Solomon"), "SNG");
  try {
    books().canonical("Maccabees");
    FAIL();
  } catch (const savanna::Error& e) {
    EXPECT_EQ(e.kind(), "unknown_book");
  }
}

TEST(AlignBibles, IntersectionOfKeys) {
  const auto a = edition("eng", {{1, "In the beginning"}, {2, "And the earth"}, {3, "And God said"}});
  const auto b = edition("lug", {{2, "Ensi yali"}, {3, "Katonda n'ayogera"}, {4, "Katonda n'alaba"}});
  const auto r = sc::align_bibles(a, b);
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(*r.pairs[0].doc_id, "GEN 1:2");
  EXPECT_EQ(r.pairs[1].tgt_text, "Katonda n'ayogera");
  EXPECT_EQ(r.pairs[0].origin, sc::Source::bible);
  ASSERT_EQ(r.only_in_a.size(), 1u);
  EXPECT_EQ(r.only_in_a[0].verse, 1);
  ASSERT_EQ(r.only_in_b.size(), 1u);
  EXPECT_EQ(r.only_in_b[0].verse, 4);
}

TEST(AlignBibles, EmptySideExcluded) {
  const auto r = sc::align_bibles(edition("eng", {{1, "x"}}), edition("lug", {{1, ""}}));
  EXPECT_TRUE(r.pairs.empty());
  EXPECT_EQ(r.empty_side.size(), 1u);
}

TEST(AlignBibles, TenVerseFixtures) {
  // A: verses 1..10, B: verses 4..13 -> shared 4..10 (7), 3 unmatched each side.
  std::vector<std::pair<int, std::string>> va, vb;
  for (int v = 1; v <= 10; ++v) va.emplace_back(v, "a" + std::to_string(v));
  for (int v = 4; v <= 13; ++v) vb.emplace_back(v, "b" + std::to_string(v));
  const auto r = sc::align_bibles(edition("eng", va), edition("ach", vb));
  EXPECT_EQ(r.pairs.size(), 7u);
  EXPECT_EQ(r.only_in_a.size(), 3u);
  EXPECT_EQ(r.only_in_b.size(), 3u);
}

TEST(AlignBibles, DuplicateVerseNamesKey) {
  const auto a = edition("eng", {{1, "x"}, {1, "y"}});
  try {
    sc::align_bibles(a, edition("lug", {{1, "z"}}));
    FAIL();
  } catch (const savanna::Error& e) {
    EXPECT_EQ(e.kind(), "duplicate_verse");
    EXPECT_NE(std::string(e.what()).find("GEN 1:1"), std::string::npos);
  }
}

TEST(AlignBibles, ParsesTsvWithAliases) {
  const auto a = sc::parse_bible_tsv("Genesis\t1\t1\tIn the beginning\nJohn\t3\t16\tFor God\n", lang("eng"), books());
  const auto b = sc::parse_bible_tsv("Gen\t1\t1\tMu kusooka\nJn\t3\t16\tKubanga\nRev\t1\t1\tOkubikkulirwa\n",
                                     lang("lug"), books());
  const auto r = sc::align_bibles(a, b);
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(*r.pairs[1].doc_id, "JHN 3:16");
  EXPECT_EQ(r.only_in_b.size(), 1u);
  EXPECT_THROW(sc::parse_bible_tsv("Gen\t0\t1\tx\n", lang("eng"), books()), savanna::Error);
  EXPECT_THROW(sc::parse_bible_tsv("Gen\t1\n", lang("eng"), books()), savanna::Error);
}

TEST(AlignBibles, SizeEqualsNonEmptyIntersection) {
  savanna::Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::pair<int, std::string>> va, vb;
    std::set<int> ka, kb;
    for (int v = 1; v <= 40; ++v) {
      if (rng.below(3)) {
        va.emplace_back(v, rng.below(5) ? "a" : "");
        if (!va.back().second.empty()) ka.insert(v);
      }
      if (rng.below(3)) {
        vb.emplace_back(v, rng.below(5) ? "b" : "");
        if (!vb.back().second.empty()) kb.insert(v);
      }
    }
    std::size_t expected = 0;
    for (int v : ka) expected += kb.count(v);
    EXPECT_EQ(sc::align_bibles(edition("eng", va), edition("lug", vb)).pairs.size(), expected);
  }
}

TEST(ParallelPair, JsonRoundTripAndValidation) {
  const sc::ParallelPair p{lang("eng"), lang("lug"), "Hello", "Gyebale", sc::Source::parallel, "d1"};
  EXPECT_EQ(sc::pair_from_json(nlohmann::json::parse(sc::to_json(p).dump())), p);
  auto bad = sc::to_json(p);
  bad["tgt_lang"] = "eng";
  EXPECT_THROW(sc::pair_from_json(bad), savanna::Error);
  bad = sc::to_json(p);
  bad["src_text"] = "";
  EXPECT_THROW(sc::pair_from_json(bad), savanna::Error);
}

// -------------------------------------------------------- back-translation

TEST(Backtranslate, EchoStub) {
  EchoClient client;
  const auto src = doc("Good morning", sc::Source::web, "eng");
  const auto r = sc::backtranslate(std::vector{src}, lang("lug"), client, {.timestamp = "T0"});
  ASSERT_EQ(r.documents.size(), 1u);
  const auto& d = r.documents[0];
  EXPECT_EQ(d.text, "TT:Good morning");
  EXPECT_EQ(d.source, sc::Source::synthetic_bt);
  EXPECT_EQ(d.lang, lang("lug"));
  ASSERT_TRUE(d.provenance);
  EXPECT_EQ(d.provenance->source_doc_id, src.id);
  EXPECT_EQ(d.provenance->client, "stub:echo");
  EXPECT_EQ(d.provenance->timestamp, "T0");
  EXPECT_TRUE(r.errors.empty());
}

TEST(Backtranslate, EmptyInput) {
  EchoClient client;
  const auto r = sc::backtranslate({}, lang("lug"), client);
  EXPECT_TRUE(r.documents.empty());
  EXPECT_TRUE(r.errors.empty());
}

TEST(Backtranslate, FailingItemBecomesErrorRecord) {
  FlakyClient client("two");
  const std::vector<sc::CorpusDocument> docs = {doc("one", sc::Source::web, "eng"), doc("two", sc::Source::web, "eng"),
                                                doc("three", sc::Source::web, "eng")};
  const auto r = sc::backtranslate(docs, lang("teo"), client, {.max_parallel = 2, .initial_backoff = {}});
  ASSERT_EQ(r.documents.size(), 2u);
  EXPECT_EQ(r.documents[0].text, "TT:one");
  EXPECT_EQ(r.documents[1].text, "TT:three");
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].source_doc_id, docs[1].id);
  EXPECT_EQ(r.errors[0].attempts, 3);
  EXPECT_EQ(client.calls.load(), 5);
  std::set<std::string> english_ids;
  for (const auto& d : docs) english_ids.insert(d.id);
  for (const auto& d : r.documents) EXPECT_TRUE(english_ids.count(d.provenance->source_doc_id));
}

TEST(Backtranslate, RejectsNonEnglishInput) {
  EchoClient client;
  EXPECT_THROW(sc::backtranslate(std::vector{doc("x")}, lang("ach"), client), savanna::Error);
  EXPECT_THROW(sc::backtranslate(std::vector{doc("x", sc::Source::web, "eng")}, lang("eng"), client), savanna::Error);
}

TEST(Backtranslate, HttpClientAgainstLocalServer) {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/translate", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    // First request for each text fails with 503 to exercise the retry path.
    if (hits++ == 0) {
      res.status = 503;
      return;
    }
    res.set_content(nlohmann::json{{"translation", "[" + body["target"].get<std::string>() + "] " +
                                                       body["text"].get<std::string>()}}
                        .dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  sc::HttpMtClient client("http://127.0.0.1:" + std::to_string(port));
  const auto r = sc::backtranslate(std::vector{doc("Water", sc::Source::web, "eng")}, lang("lug"), client,
                                   {.max_parallel = 1, .initial_backoff = std::chrono::milliseconds(1)});
  server.stop();
  t.join();
  ASSERT_EQ(r.documents.size(), 1u);
  EXPECT_EQ(r.documents[0].text, "[lug] Water");
  EXPECT_EQ(hits.load(), 2);
}

// ---------------------------------------------------------------- mixture

namespace {

std::vector<sc::CorpusDocument> two_buckets(std::size_t n) {
  std::vector<sc::CorpusDocument> docs;
  for (std::size_t i = 0; i < n; ++i) {
    docs.push_back(doc("web " + std::to_string(i), sc::Source::web));
    docs.push_back(doc("radio " + std::to_string(i), sc::Source::radio_transcript));
  }
  return docs;
}

std::size_t count_source(const std::vector<sc::CorpusDocument>& docs, sc::Source s) {
  return static_cast<std::size_t>(std::count_if(docs.begin(), docs.end(), [&](auto& d) { return d.source == s; }));
}

}  // namespace

TEST(StratifiedAllocation, HandComputedCases) {
  const std::vector<double> w31 = {3, 1};
  const std::vector<std::size_t> cap100 = {100, 100};
  EXPECT_EQ(sc::stratified_allocation(w31, cap100, 40), (std::vector<std::size_t>{30, 10}));
  // 10 * (1/3) each: floors 3,3,3 and the single leftover goes to the first bucket.
  const std::vector<double> w111 = {1, 1, 1};
  const std::vector<std::size_t> cap = {10, 10, 10};
  EXPECT_EQ(sc::stratified_allocation(w111, cap, 10), (std::vector<std::size_t>{4, 3, 3}));
  // Capacity cap on the heavy bucket redistributes to the others.
  const std::vector<std::size_t> capped = {5, 100};
  EXPECT_EQ(sc::stratified_allocation(w31, capped, 40), (std::vector<std::size_t>{5, 35}));
  // More requested than available: everything.
  EXPECT_EQ(sc::stratified_allocation(w31, cap100, 500), (std::vector<std::size_t>{100, 100}));
}

TEST(AssemblePretraining, ThreeToOneSplit) {
  const auto docs = two_buckets(100);
  sc::MixtureSpec spec;
  spec.source_weights = {{sc::Source::web, 3.0}, {sc::Source::radio_transcript, 1.0}};
  spec.sample_docs = 40;
  const auto r = sc::assemble_pretraining(docs, spec, 7);
  EXPECT_EQ(count_source(r.documents, sc::Source::web), 30u);
  EXPECT_EQ(count_source(r.documents, sc::Source::radio_transcript), 10u);
  std::size_t chars = 0;
  for (const auto& b : r.buckets) chars += b.selected_chars;
  EXPECT_EQ(chars, total_chars(r.documents));
}

TEST(AssemblePretraining, DeterministicForSeed) {
  const auto docs = two_buckets(50);
  sc::MixtureSpec spec;
  spec.sample_docs = 33;
  const auto a = sc::assemble_pretraining(docs, spec, 42);
  const auto b = sc::assemble_pretraining(docs, spec, 42);
  const auto c = sc::assemble_pretraining(docs, spec, 43);
  const auto dump = [](const sc::AssemblyResult& r) {
    std::vector<nlohmann::json> j;
    for (const auto& d : r.documents) j.push_back(sc::to_json(d));
    return savanna::io::to_jsonl(j);
  };
  EXPECT_EQ(dump(a), dump(b));
  EXPECT_NE(dump(a), dump(c));
}

TEST(AssemblePretraining, ZeroWeightBucketContributesNothing) {
  const auto docs = two_buckets(20);
  sc::MixtureSpec spec;
  spec.source_weights = {{sc::Source::web, 0.0}};
  const auto r = sc::assemble_pretraining(docs, spec, 1);
  EXPECT_EQ(count_source(r.documents, sc::Source::web), 0u);
  EXPECT_EQ(r.documents.size(), 20u);
}

TEST(AssemblePretraining, AllZeroWeightsIsError) {
  sc::MixtureSpec spec;
  spec.source_weights = {{sc::Source::web, 0.0}, {sc::Source::radio_transcript, 0.0}};
  try {
    sc::assemble_pretraining(two_buckets(3), spec, 1);
    FAIL();
  } catch (const savanna::Error& e) {
    EXPECT_EQ(e.kind(), "bad_mixture");
  }
  spec.source_weights = {{sc::Source::web, -1.0}};
  EXPECT_THROW(sc::assemble_pretraining(two_buckets(3), spec, 1), savanna::Error);
}

TEST(AssemblePretraining, InstructionReplayAppended) {
  sc::MixtureSpec spec;
  spec.include_instruction_replay = true;
  const std::vector replay = {doc("User: hi\nAssistant: gyebale", sc::Source::community)};
  const auto r = sc::assemble_pretraining(two_buckets(2), spec, 1, replay);
  EXPECT_EQ(r.replay_docs, 1u);
  EXPECT_EQ(r.documents.back(), replay[0]);
}

TEST(MixtureSpec, JsonRoundTrip) {
  const auto j = nlohmann::json::parse(
      R"({"source_weights":{"web":2,"bible":0.5},"language_weights":{"lug":1.5},"sample_docs":10})");
  const auto spec = sc::mixture_from_json(j);
  EXPECT_EQ(spec.source_weights.at(sc::Source::bible), 0.5);
  EXPECT_EQ(sc::to_json(sc::mixture_from_json(sc::to_json(spec))), sc::to_json(spec));
}
