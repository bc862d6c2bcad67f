#include "corpus.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rng.hpp"

namespace relnet::babi {

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

[[noreturn]] void fail(int32_t line_no, const std::string& what) {
  throw CorpusError("line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

int32_t Vocabulary::id(const std::string& token) const {
  auto it = index.find(token);
  if (it == index.end()) throw CorpusError("token not in vocabulary: " + token);
  return it->second;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::string s = trim(lower(line));
  while (!s.empty() && (s.back() == '.' || s.back() == '?')) {
    s.pop_back();
    s = trim(s);
  }
  return split_ws(s);
}

std::vector<RawExample> parse_task_file(const std::string& text) {
  std::vector<RawExample> out;
  std::vector<std::vector<std::string>> story;
  std::vector<int32_t> story_lines;

  std::istringstream is(text);
  std::string line;
  int32_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;

    size_t pos = 0;
    while (pos < line.size() && std::isdigit(static_cast<unsigned char>(line[pos]))) ++pos;
    if (pos == 0) fail(line_no, "expected a leading numeric id");
    int32_t id = std::stoi(line.substr(0, pos));
    std::string rest = line.substr(pos);
    if (!rest.empty() && rest.front() == ' ') rest.erase(rest.begin());

    if (id == 1) {  // id reset marks a new story
      story.clear();
      story_lines.clear();
    }

    size_t tabs = static_cast<size_t>(std::count(rest.begin(), rest.end(), '\t'));
    if (tabs == 0) {
      auto toks = tokenize(rest);
      if (toks.empty()) fail(line_no, "empty statement");
      story.push_back(std::move(toks));
      story_lines.push_back(id);
    } else if (tabs == 2) {
      size_t t1 = rest.find('\t');
      size_t t2 = rest.find('\t', t1 + 1);
      RawExample ex;
      ex.question = tokenize(rest.substr(0, t1));
      if (ex.question.empty()) fail(line_no, "empty question");
      ex.answer = lower(trim(rest.substr(t1 + 1, t2 - t1 - 1)));
      if (ex.answer.empty()) fail(line_no, "empty answer");
      for (const std::string& s : split_ws(rest.substr(t2 + 1))) {
        try {
          ex.support.push_back(std::stoi(s));
        } catch (const std::exception&) {
          fail(line_no, "supporting-fact id is not an integer: " + s);
        }
      }
      if (story.empty()) fail(line_no, "question before any statement in its story");
      ex.sentences = story;
      ex.lines = story_lines;
      out.push_back(std::move(ex));
    } else {
      fail(line_no, "expected 0 or exactly 2 tab characters, found " + std::to_string(tabs));
    }
  }
  return out;
}

std::string serialize_examples(std::span<const RawExample> examples) {
  std::string out;
  for (const RawExample& ex : examples) {
    int32_t max_line = 0;
    for (size_t i = 0; i < ex.sentences.size(); ++i) {
      out += std::to_string(ex.lines[i]);
      for (const std::string& tok : ex.sentences[i]) out += " " + tok;
      out += " .\n";
      max_line = std::max(max_line, ex.lines[i]);
    }
    out += std::to_string(max_line + 1);
    for (const std::string& tok : ex.question) out += " " + tok;
    out += " ?\t" + ex.answer + "\t";
    for (size_t i = 0; i < ex.support.size(); ++i) {
      if (i) out += " ";
      out += std::to_string(ex.support[i]);
    }
    out += "\n";
  }
  return out;
}

Vocabulary build_vocab(std::span<const std::vector<RawExample>> splits) {
  std::set<std::string> seen;
  size_t total = 0;
  for (const auto& split : splits) {
    total += split.size();
    for (const RawExample& ex : split) {
      for (const auto& sent : ex.sentences) seen.insert(sent.begin(), sent.end());
      seen.insert(ex.question.begin(), ex.question.end());
      seen.insert(ex.answer);
    }
  }
  if (total == 0) throw CorpusError("cannot build a vocabulary from an empty corpus");

  Vocabulary v;
  v.tokens.push_back(Vocabulary::kPadToken);
  for (const std::string& tok : seen) v.tokens.push_back(tok);  // set iterates sorted
  for (size_t i = 0; i < v.tokens.size(); ++i) {
    v.index.emplace(v.tokens[i], static_cast<int32_t>(i));
  }
  return v;
}

Example to_ids(const RawExample& raw, const Vocabulary& vocab) {
  Example ex;
  ex.lines = raw.lines;
  ex.support = raw.support;
  ex.sentences.reserve(raw.sentences.size());
  for (const auto& sent : raw.sentences) {
    std::vector<int32_t> ids;
    ids.reserve(sent.size());
    for (const auto& tok : sent) ids.push_back(vocab.id(tok));
    ex.sentences.push_back(std::move(ids));
  }
  for (const auto& tok : raw.question) ex.question.push_back(vocab.id(tok));
  ex.answer = vocab.id(raw.answer);
  return ex;
}

std::vector<Example> to_ids(std::span<const RawExample> raws, const Vocabulary& vocab) {
  std::vector<Example> out;
  out.reserve(raws.size());
  for (const RawExample& r : raws) out.push_back(to_ids(r, vocab));
  return out;
}

Example truncate(const Example& example, int32_t limit) {
  if (limit <= 0) throw CorpusError("truncate: limit must be positive");
  auto n = static_cast<int32_t>(example.sentences.size());
  if (n <= limit) return example;
  Example out = example;
  out.sentences.assign(example.sentences.end() - limit, example.sentences.end());
  out.lines.assign(example.lines.end() - limit, example.lines.end());
  return out;
}

std::vector<Batch> batchify(std::span<const Example> examples, int32_t batch_size,
                            uint64_t shuffle_seed) {
  if (batch_size < 1) throw CorpusError("batchify: batch size must be >= 1");
  std::vector<int32_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int32_t>(i);
  Rng rng(shuffle_seed);
  rng.shuffle(order);

  std::vector<Batch> batches;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
    Batch b;
    size_t max_sent = 0, max_len = 0;
    for (size_t k = start; k < end; ++k) {
      const Example& ex = examples[static_cast<size_t>(order[k])];
      max_sent = std::max(max_sent, ex.sentences.size());
      for (const auto& s : ex.sentences) max_len = std::max(max_len, s.size());
      max_len = std::max(max_len, ex.question.size());
    }
    for (size_t k = start; k < end; ++k) {
      Example ex = examples[static_cast<size_t>(order[k])];
      b.answers.push_back(ex.answer);
      b.sentence_counts.push_back(static_cast<int32_t>(ex.sentences.size()));
      std::vector<int32_t> lens;
      for (const auto& s : ex.sentences) lens.push_back(static_cast<int32_t>(s.size()));
      b.sentence_lengths.push_back(std::move(lens));
      for (auto& s : ex.sentences) s.resize(max_len, Vocabulary::kPad);
      ex.sentences.resize(max_sent, std::vector<int32_t>(max_len, Vocabulary::kPad));
      ex.lines.resize(max_sent, 0);
      ex.question.resize(max_len, Vocabulary::kPad);
      b.examples.push_back(std::move(ex));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

std::string cache_to_json(const Vocabulary& vocab, std::span<const Example> examples) {
  nlohmann::json j;
  j["version"] = 1;
  j["vocab"] = vocab.tokens;
  nlohmann::json exs = nlohmann::json::array();
  for (const Example& ex : examples) {
    exs.push_back({{"sentences", ex.sentences},
                   {"lines", ex.lines},
                   {"question", ex.question},
                   {"answer", ex.answer},
                   {"support", ex.support}});
  }
  j["examples"] = std::move(exs);
  return j.dump();
}

void cache_from_json(const std::string& text, Vocabulary& vocab,
                     std::vector<Example>& examples) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CorpusError(std::string("cache: invalid JSON: ") + e.what());
  }
  if (!j.contains("version") || j["version"].get<int>() != 1) {
    throw CorpusError("cache: unsupported version");
  }
  vocab = Vocabulary{};
  vocab.tokens = j.at("vocab").get<std::vector<std::string>>();
  for (size_t i = 0; i < vocab.tokens.size(); ++i) {
    vocab.index.emplace(vocab.tokens[i], static_cast<int32_t>(i));
  }
  examples.clear();
  for (const auto& je : j.at("examples")) {
    Example ex;
    ex.sentences = je.at("sentences").get<std::vector<std::vector<int32_t>>>();
    ex.lines = je.value("lines", std::vector<int32_t>(ex.sentences.size(), 0));
    ex.question = je.at("question").get<std::vector<int32_t>>();
    ex.answer = je.at("answer").get<int32_t>();
    ex.support = je.at("support").get<std::vector<int32_t>>();
    examples.push_back(std::move(ex));
  }
}

TaskFiles locate_task_files(const std::string& data_dir, int32_t task_id) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(data_dir)) {
    throw CorpusError("data directory not found: " + data_dir);
  }
  TaskFiles files;
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  const std::string prefix = "qa" + std::to_string(task_id);
  for (const std::string& name : names) {
    if (name.rfind(prefix, 0) != 0) continue;
    // Reject qa1 matching qa10..qa19.
    char next = name.size() > prefix.size() ? name[prefix.size()] : '\0';
    if (next != '_' && next != '.' && next != '-') continue;
    if (name.find("train") != std::string::npos) files.train = (fs::path(data_dir) / name).string();
    else if (name.find("valid") != std::string::npos) files.valid = (fs::path(data_dir) / name).string();
    else if (name.find("test") != std::string::npos) files.test = (fs::path(data_dir) / name).string();
  }
  if (files.train.empty() || files.test.empty()) {
    throw CorpusError("no train/test files for task " + std::to_string(task_id) +
                      " under " + data_dir);
  }
  return files;
}

namespace {
std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

TaskData load_task_from_files(const TaskFiles& files, int32_t task_id) {
  std::vector<std::vector<RawExample>> splits;
  splits.push_back(parse_task_file(read_file(files.train)));
  if (!files.valid.empty()) splits.push_back(parse_task_file(read_file(files.valid)));
  splits.push_back(parse_task_file(read_file(files.test)));

  TaskData data;
  data.task_id = task_id;
  data.vocab = build_vocab(splits);

  std::vector<Example> train_all = to_ids(splits[0], data.vocab);
  if (!files.valid.empty()) {
    data.train = std::move(train_all);
    data.valid = to_ids(splits[1], data.vocab);
    data.test = to_ids(splits[2], data.vocab);
  } else {
    size_t holdout = train_all.size() / 10;
    if (holdout == 0 && train_all.size() > 1) holdout = 1;
    data.train.assign(train_all.begin(), train_all.end() - static_cast<long>(holdout));
    data.valid.assign(train_all.end() - static_cast<long>(holdout), train_all.end());
    data.test = to_ids(splits.back(), data.vocab);
  }

  for (const auto* split : {&data.train, &data.valid, &data.test}) {
    for (const Example& ex : *split) {
      data.max_story_len = std::max(data.max_story_len,
                                    static_cast<int32_t>(ex.sentences.size()));
      data.max_sentence_len = std::max(data.max_sentence_len,
                                       static_cast<int32_t>(ex.question.size()));
      for (const auto& s : ex.sentences) {
        data.max_sentence_len = std::max(data.max_sentence_len,
                                         static_cast<int32_t>(s.size()));
      }
    }
  }
  return data;
}

TaskData load_task(const std::string& data_dir, int32_t task_id) {
  return load_task_from_files(locate_task_files(data_dir, task_id), task_id);
}

}  // namespace relnet::babi
