#pragma once

#include <cstdint>
#include <string>

namespace relnet::babi {

// Generates where-is-person stories in the bAbI v1.2 single-supporting-fact
// format: 15-line stories, two movement statements per question, answers
// with one supporting fact. Intended for smoke tests and for running the
// pipeline where the official corpus is not installed.
std::string generate_task1(uint64_t seed, int32_t n_questions);

// Writes qa{task_id}_{slug}_{train,test}.txt under dir and returns dir.
// Task ids other than 1 reuse the same story process; only the file naming
// changes (useful for exercising per-task configuration plumbing).
std::string write_generated_corpus(const std::string& dir, int32_t task_id,
                                   const std::string& slug, int32_t n_train,
                                   int32_t n_test, uint64_t seed);

}  // namespace relnet::babi
