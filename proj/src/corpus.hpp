#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace relnet::babi {

// bAbI v1.2 ingestion: task-file parsing, vocabulary construction,
// truncation, padding and batching. All functions are pure; parsing
// different tasks in parallel workers is safe.

class CorpusError : public std::runtime_error {
public:
  explicit CorpusError(const std::string& what) : std::runtime_error(what) {}
};

// Tokens as strings, straight out of a task file. Statement line ids are
// kept so that supporting-fact references stay meaningful.
struct RawExample {
  std::vector<std::vector<std::string>> sentences;
  std::vector<int32_t> lines;  // original line id per sentence
  std::vector<std::string> question;
  std::string answer;  // multi-word answers stay comma-joined
  std::vector<int32_t> support;

  bool operator==(const RawExample&) const = default;
};

struct Vocabulary {
  static constexpr int32_t kPad = 0;
  static constexpr const char* kPadToken = "<pad>";

  std::vector<std::string> tokens;  // index = id, tokens[0] = PAD
  std::unordered_map<std::string, int32_t> index;

  int32_t size() const { return static_cast<int32_t>(tokens.size()); }
  int32_t id(const std::string& token) const;
  bool contains(const std::string& token) const { return index.count(token) > 0; }
};

struct Example {
  std::vector<std::vector<int32_t>> sentences;
  std::vector<int32_t> lines;
  std::vector<int32_t> question;
  int32_t answer = -1;
  std::vector<int32_t> support;

  bool operator==(const Example&) const = default;
};

struct Batch {
  std::vector<Example> examples;            // padded with kPad
  std::vector<int32_t> answers;
  std::vector<int32_t> sentence_counts;     // pre-padding per example
  std::vector<std::vector<int32_t>> sentence_lengths;  // pre-padding per sentence
};

// Lowercases, strips the terminal "." or "?", splits on whitespace.
std::vector<std::string> tokenize(const std::string& line);

// One RawExample per question line; a question sees every statement of its
// story that precedes it. A line id of 1 starts a new story. Malformed
// lines (missing id, question line without exactly two tabs, question
// before any statement) are rejected with their line number.
std::vector<RawExample> parse_task_file(const std::string& text);

// Canonical bAbI text for parsed examples: each example becomes its own
// story, statements keep their original ids, the question gets the next id.
// Parsing the result reproduces the examples exactly.
std::string serialize_examples(std::span<const RawExample> examples);

// Sorted id assignment over every story, question and answer token of all
// provided splits. Deterministic for a fixed corpus.
Vocabulary build_vocab(std::span<const std::vector<RawExample>> splits);

Example to_ids(const RawExample& raw, const Vocabulary& vocab);
std::vector<Example> to_ids(std::span<const RawExample> raws, const Vocabulary& vocab);

// Keeps the most recent `limit` sentences; question and answer unchanged.
Example truncate(const Example& example, int32_t limit);

// Seed-deterministic shuffle, then fixed-size batches (last may be short),
// each padded to its own max sentence count and sentence length.
std::vector<Batch> batchify(std::span<const Example> examples, int32_t batch_size,
                            uint64_t shuffle_seed);

// Versioned JSON dataset cache.
std::string cache_to_json(const Vocabulary& vocab, std::span<const Example> examples);
void cache_from_json(const std::string& text, Vocabulary& vocab,
                     std::vector<Example>& examples);

// A parsed task: per-task vocabulary over all splits plus the splits
// themselves. When no validation file exists, the last 10% of training
// questions are held out (the remainder trains).
struct TaskData {
  int32_t task_id = 0;
  Vocabulary vocab;
  std::vector<Example> train, valid, test;
  int32_t max_sentence_len = 0;  // over statements and questions, all splits
  int32_t max_story_len = 0;
};

struct TaskFiles {
  std::string train, valid, test;  // valid may be empty
};

// Scans data_dir for qa{task_id}_*{split}*.txt (both the en-10k and
// en-valid-10k naming schemes).
TaskFiles locate_task_files(const std::string& data_dir, int32_t task_id);

TaskData load_task(const std::string& data_dir, int32_t task_id);
TaskData load_task_from_files(const TaskFiles& files, int32_t task_id);

}  // namespace relnet::babi
