#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "corpus.hpp"
#include "task_gen.hpp"

using namespace relnet::babi;

namespace {

// Independent question counter: a bAbI question line is exactly a line
// containing tab characters.
int count_question_lines(const std::string& text) {
  int n = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    if (text.find('\t', pos) < eol) ++n;
    pos = eol + 1;
  }
  return n;
}

Example make_example(int n_sentences) {
  Example ex;
  for (int i = 0; i < n_sentences; ++i) {
    ex.sentences.push_back({1, 2, 3});
    ex.lines.push_back(i + 1);
  }
  ex.question = {2, 1};
  ex.answer = 3;
  return ex;
}

}  // namespace

TEST_CASE("single story with one question") {
  auto exs = parse_task_file("1 Mary moved.\n2 Where is Mary?\tbathroom\t1\n");
  REQUIRE(exs.size() == 1);
  CHECK(exs[0].sentences.size() == 1);
  CHECK(exs[0].sentences[0] == std::vector<std::string>{"mary", "moved"});
  CHECK(exs[0].lines == std::vector<int32_t>{1});
  CHECK(exs[0].question == std::vector<std::string>{"where", "is", "mary"});
  CHECK(exs[0].answer == "bathroom");
  CHECK(exs[0].support == std::vector<int32_t>{1});
}

TEST_CASE("id reset starts a new story") {
  std::string text =
      "1 Mary moved to the bathroom.\n"
      "2 Where is Mary?\tbathroom\t1\n"
      "1 John went to the garden.\n"
      "2 Where is John?\tgarden\t1\n";
  auto exs = parse_task_file(text);
  REQUIRE(exs.size() == 2);
  CHECK(exs[1].sentences.size() == 1);
  CHECK(exs[1].sentences[0][0] == "john");
}

TEST_CASE("later questions see all earlier statements of the story") {
  std::string text =
      "1 Mary moved to the bathroom.\n"
      "2 John went to the garden.\n"
      "3 Where is Mary?\tbathroom\t1\n"
      "4 Mary went to the office.\n"
      "5 Where is Mary?\toffice\t4\n";
  auto exs = parse_task_file(text);
  REQUIRE(exs.size() == 2);
  CHECK(exs[0].sentences.size() == 2);
  CHECK(exs[1].sentences.size() == 3);
  CHECK(exs[1].lines == std::vector<int32_t>{1, 2, 4});
  CHECK(exs[1].support == std::vector<int32_t>{4});
}

TEST_CASE("malformed lines are rejected with their line number") {
  CHECK_THROWS_WITH_AS(parse_task_file("Mary moved.\n"),
                       doctest::Contains("line 1"), CorpusError);
  CHECK_THROWS_WITH_AS(parse_task_file("1 Mary moved.\n2 Where is Mary?\tbathroom\n"),
                       doctest::Contains("line 2"), CorpusError);
  CHECK_THROWS_WITH_AS(
      parse_task_file("1 Where is Mary?\tbathroom\t1\n"),
      doctest::Contains("question before any statement"), CorpusError);
  CHECK(parse_task_file("").empty());
  CHECK(parse_task_file("\n\n").empty());
}

TEST_CASE("multi-word answers stay comma-joined") {
  std::string text =
      "1 The kitchen is north of the garden.\n"
      "2 How do you go from the garden to the kitchen?\tn,s\t1\n";
  auto exs = parse_task_file(text);
  REQUIRE(exs.size() == 1);
  CHECK(exs[0].answer == "n,s");
  std::vector<std::vector<RawExample>> splits = {exs};
  auto vocab = build_vocab(splits);
  CHECK(vocab.contains("n,s"));
}

TEST_CASE("vocabulary ids are sorted and PAD is id zero") {
  RawExample ex;
  ex.sentences = {{"moved"}};
  ex.lines = {1};
  ex.question = {"moved"};
  ex.answer = "mary";
  std::vector<std::vector<RawExample>> splits = {{ex}};
  auto vocab = build_vocab(splits);
  REQUIRE(vocab.size() == 3);
  CHECK(vocab.tokens[0] == Vocabulary::kPadToken);
  CHECK(vocab.id("mary") == 1);
  CHECK(vocab.id("moved") == 2);

  auto again = build_vocab(splits);
  CHECK(vocab.tokens == again.tokens);
}

TEST_CASE("vocabulary rejects empty corpus and unknown tokens") {
  std::vector<std::vector<RawExample>> empty;
  CHECK_THROWS_AS(build_vocab(empty), CorpusError);
  RawExample ex;
  ex.sentences = {{"a"}};
  ex.lines = {1};
  ex.question = {"a"};
  ex.answer = "a";
  std::vector<std::vector<RawExample>> splits = {{ex}};
  auto vocab = build_vocab(splits);
  CHECK_THROWS_AS(vocab.id("missing"), CorpusError);
}

TEST_CASE("every answer id is in the vocabulary and is never PAD") {
  auto text = generate_task1(7, 500);
  auto raw = parse_task_file(text);
  std::vector<std::vector<RawExample>> splits = {raw};
  auto vocab = build_vocab(splits);
  for (const Example& ex : to_ids(raw, vocab)) {
    CHECK(ex.answer > Vocabulary::kPad);
    CHECK(ex.answer < vocab.size());
  }
}

TEST_CASE("truncate keeps the most recent sentences") {
  auto ex = make_example(3);
  CHECK(truncate(ex, 70) == ex);

  auto big = make_example(75);
  auto cut = truncate(big, 70);
  REQUIRE(cut.sentences.size() == 70);
  CHECK(cut.lines.front() == 6);
  CHECK(cut.lines.back() == 75);
  CHECK(cut.question == big.question);
  CHECK(cut.answer == big.answer);

  CHECK(truncate(cut, 70) == cut);  // idempotent
  CHECK_THROWS_AS(truncate(ex, 0), CorpusError);
}

TEST_CASE("batchify splits, pads and shuffles deterministically") {
  std::vector<Example> exs;
  for (int i = 0; i < 10000; ++i) {
    auto e = make_example(1 + i % 4);
    e.answer = 1 + i % 3;
    exs.push_back(std::move(e));
  }
  auto batches = batchify(exs, 32, 42);
  REQUIRE(batches.size() == 313);
  CHECK(batches.back().examples.size() == 16);
  for (size_t i = 0; i + 1 < batches.size(); ++i) {
    CHECK(batches[i].examples.size() == 32);
  }
  // padded to a common story size inside each batch
  for (const auto& b : batches) {
    size_t sents = b.examples[0].sentences.size();
    for (const auto& e : b.examples) {
      CHECK(e.sentences.size() == sents);
      for (const auto& s : e.sentences) CHECK(s.size() == e.sentences[0].size());
    }
  }
  auto batches2 = batchify(exs, 32, 42);
  CHECK(batches2[0].answers == batches[0].answers);
  auto batches3 = batchify(exs, 32, 43);
  CHECK(batches3[0].answers != batches[0].answers);
}

TEST_CASE("serialize and reparse reproduces the examples") {
  auto text = generate_task1(11, 300);
  auto raw = parse_task_file(text);
  auto twice = parse_task_file(serialize_examples(raw));
  REQUIRE(twice.size() == raw.size());
  CHECK(twice == raw);
}

TEST_CASE("dataset cache round-trips through JSON") {
  auto text = generate_task1(13, 100);
  auto raw = parse_task_file(text);
  std::vector<std::vector<RawExample>> splits = {raw};
  auto vocab = build_vocab(splits);
  auto exs = to_ids(raw, vocab);

  auto json = cache_to_json(vocab, exs);
  Vocabulary v2;
  std::vector<Example> e2;
  cache_from_json(json, v2, e2);
  CHECK(v2.tokens == vocab.tokens);
  CHECK(e2 == exs);

  CHECK_THROWS_AS(cache_from_json("not json", v2, e2), CorpusError);
}

TEST_CASE("generated corpus has exactly the requested question count") {
  auto text = generate_task1(3, 10000);
  CHECK(count_question_lines(text) == 10000);
  auto raw = parse_task_file(text);
  CHECK(raw.size() == 10000);
}

TEST_CASE("task files are located for both naming schemes") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "relnet_corpus_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto touch = [&](const std::string& name) {
    std::ofstream(dir / name) << "1 Mary moved to the bathroom.\n"
                                 "2 Where is Mary?\tbathroom\t1\n";
  };
  touch("qa1_single-supporting-fact_train.txt");
  touch("qa1_single-supporting-fact_test.txt");
  touch("qa10_indefinite-knowledge_train.txt");
  touch("qa10_indefinite-knowledge_test.txt");
  touch("qa2_train.txt");
  touch("qa2_valid.txt");
  touch("qa2_test.txt");

  auto f1 = locate_task_files(dir.string(), 1);
  CHECK(f1.train.find("qa1_single") != std::string::npos);
  CHECK(f1.valid.empty());
  auto f2 = locate_task_files(dir.string(), 2);
  CHECK(!f2.valid.empty());
  auto f10 = locate_task_files(dir.string(), 10);
  CHECK(f10.train.find("qa10_") != std::string::npos);
  CHECK_THROWS_AS(locate_task_files(dir.string(), 3), CorpusError);
  CHECK_THROWS_AS(locate_task_files((dir / "nope").string(), 1), CorpusError);
  fs::remove_all(dir);
}

TEST_CASE("load_task holds out the last tenth when no validation file exists") {
  namespace fs = std::filesystem;
  auto dir = (fs::temp_directory_path() / "relnet_loadtask_test").string();
  fs::remove_all(dir);
  write_generated_corpus(dir, 1, "single-supporting-fact", 1000, 200, 5);

  auto data = load_task(dir, 1);
  CHECK(data.train.size() == 900);
  CHECK(data.valid.size() == 100);
  CHECK(data.test.size() == 200);
  CHECK(data.vocab.size() > 10);
  CHECK(data.max_sentence_len >= 3);
  CHECK(data.max_story_len == 10);
  fs::remove_all(dir);
}
