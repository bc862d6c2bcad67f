#include "task_gen.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <vector>

#include "corpus.hpp"
#include "rng.hpp"

namespace relnet::babi {

namespace {

constexpr std::array<const char*, 4> kActors = {"Mary", "John", "Daniel", "Sandra"};
constexpr std::array<const char*, 6> kPlaces = {"bathroom", "hallway", "garden",
                                                "kitchen",  "office",  "bedroom"};
constexpr std::array<const char*, 4> kMoves = {"moved to the", "went to the",
                                               "journeyed to the", "travelled to the"};

}  // namespace

std::string generate_task1(uint64_t seed, int32_t n_questions) {
  Rng rng(seed);
  std::string out;
  int32_t emitted = 0;
  while (emitted < n_questions) {
    std::array<int32_t, kActors.size()> location{};
    location.fill(-1);
    std::array<int32_t, kActors.size()> moved_line{};
    std::vector<int32_t> placed;
    int32_t line = 1;
    for (int round = 0; round < 5 && emitted < n_questions; ++round) {
      for (int s = 0; s < 2; ++s) {
        auto actor = static_cast<int32_t>(rng.bounded(kActors.size()));
        int32_t place;
        do {
          place = static_cast<int32_t>(rng.bounded(kPlaces.size()));
        } while (place == location[static_cast<size_t>(actor)]);
        const char* verb;
        if (location[static_cast<size_t>(actor)] >= 0 && rng.bounded(5) == 0) {
          verb = "went back to the";
        } else {
          verb = kMoves[rng.bounded(kMoves.size())];
        }
        if (location[static_cast<size_t>(actor)] < 0) placed.push_back(actor);
        location[static_cast<size_t>(actor)] = place;
        moved_line[static_cast<size_t>(actor)] = line;
        out += std::to_string(line++) + " " + kActors[static_cast<size_t>(actor)] +
               " " + verb + " " + kPlaces[static_cast<size_t>(place)] + ".\n";
      }
      int32_t who = placed[rng.bounded(placed.size())];
      out += std::to_string(line++) + " Where is " + kActors[static_cast<size_t>(who)] +
             "? \t" + kPlaces[static_cast<size_t>(location[static_cast<size_t>(who)])] +
             "\t" + std::to_string(moved_line[static_cast<size_t>(who)]) + "\n";
      ++emitted;
    }
  }
  return out;
}

std::string write_generated_corpus(const std::string& dir, int32_t task_id,
                                   const std::string& slug, int32_t n_train,
                                   int32_t n_test, uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write = [&](const std::string& split, int32_t n, uint64_t stream) {
    std::string name = "qa" + std::to_string(task_id) + "_" + slug + "_" + split + ".txt";
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    if (!out) throw CorpusError("cannot write " + (fs::path(dir) / name).string());
    out << generate_task1(mix_seed(seed, stream), n);
  };
  write("train", n_train, 1);
  write("test", n_test, 2);
  return dir;
}

}  // namespace relnet::babi
