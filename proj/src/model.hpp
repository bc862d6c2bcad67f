#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "corpus.hpp"

namespace relnet {

// Memory model with per-entity slots and one relation cell per ordered slot
// pair. Reading a document interleaves, per sentence:
//
//   s            = sum_i mask_story[i] * embed[w_i]
//   s_rel        = sum_i mask_relation[i] * embed[w_i]
//   gate[j]      = sigmoid(<s, slot[j] + key[j]>)
//   cand[j]      = prelu(ent_self slot[j] + ent_key key[j] + ent_input s)
//   slot[j]      = normalize(slot[j] + gate[j] * cand[j])
//   rgate[i][j]  = gate[i] * gate[j] * sigmoid(<s_rel, rel[i][j]>)
//   rcand[i][j]  = prelu(rel_self rel[i][j] + rel_input s_rel)
//   rel[i][j]   += rgate[i][j] * rcand[i][j]      (normalized when enabled)
//
// and answers with attention over the pairwise memories:
//
//   m[i][j]   = out_proj [slot[i]; slot[j]; rel[i][j]]
//   p         = softmax over all <q, m[i][j]>
//   o         = prelu(q + out_hidden * sum p[i][j] m[i][j])
//   logits    = out_vocab * o

class ModelError : public std::runtime_error {
public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

struct Hyper {
  int32_t embed_dim = 100;  // vector width of embeddings and memories
  int32_t slots = 20;       // entity slot count; relation cells are slots^2
  int32_t max_words = 0;    // mask rows; longest sentence/question supported
  int32_t vocab = 0;
  bool normalize_relations = false;
  double prelu_init = 1.0;

  void validate() const;
};

struct ParamArray {
  std::string name;
  int32_t rows = 0;
  int32_t cols = 0;  // 0 for vectors
  std::vector<double> v;

  int32_t len() const { return cols > 0 ? rows * cols : rows; }
};

// Fixed-order trainable arrays; the index doubles as the gradient-sink id.
struct Parameters {
  enum Id : int32_t {
    kEmbed = 0,
    kMaskStory,
    kMaskRelation,
    kMaskQuestion,
    kKeys,
    kEntSelf,
    kEntKey,
    kEntInput,
    kRelSelf,
    kRelInput,
    kOutProj,  // (K x 3K): slot-i, slot-j and relation blocks
    kOutHidden,
    kOutVocab,
    kSlopeEntity,
    kSlopeRelation,
    kSlopeOutput,
    kCount,
  };

  std::array<ParamArray, kCount> arrays;

  ParamArray& operator[](int32_t id) { return arrays[static_cast<size_t>(id)]; }
  const ParamArray& operator[](int32_t id) const { return arrays[static_cast<size_t>(id)]; }

  // Masks start at one (bag-of-embeddings encoder), out_proj's first block
  // at identity, everything else Gaussian with stddev 0.1.
  static Parameters init(const Hyper& hyper, uint64_t seed);
  static Parameters zeros_like(const Parameters& other);

  size_t total_values() const;
  bool all_finite() const;
};

struct ForwardTrace {
  int32_t slots = 0;
  std::vector<std::vector<double>> entity_gates;    // per step, slots values
  std::vector<std::vector<double>> relation_gates;  // per step, slots^2 values
  std::vector<double> attention;                    // slots^2, simplex
};

std::string trace_to_json(const ForwardTrace& trace);

// Strongest attention pairs as a DOT digraph over slot nodes.
std::string trace_to_dot(const ForwardTrace& trace, int32_t top_k);

enum class MaskKind { story, relation, question };

// Builds one example's computation on a tape. Construction registers the
// parameter leaves; the state methods mirror the update equations above so
// tests can drive them step by step.
class ModelGraph {
public:
  struct State {
    std::vector<ag::Var> slots;  // D entity memories
    std::vector<ag::Var> rel;    // D*D relation memories, row-major
  };

  ModelGraph(ag::Tape& tape, const Parameters& params, const Hyper& hyper);

  ag::Var encode(std::span<const int32_t> tokens, MaskKind kind);
  State init_state();
  std::vector<ag::Var> entity_gates(ag::Var sentence, const State& state);
  void update_entities(ag::Var sentence, std::span<const ag::Var> gates, State& state);
  std::vector<ag::Var> relation_gates(ag::Var rel_sentence,
                                      std::span<const ag::Var> gates,
                                      const State& state);
  void update_relations(ag::Var rel_sentence, std::span<const ag::Var> rel_gates,
                        State& state);

  // Runs every non-empty sentence through the four update steps.
  State read_document(std::span<const std::vector<int32_t>> sentences,
                      ForwardTrace* trace = nullptr);
  ag::Var answer(std::span<const int32_t> question, const State& state,
                 ForwardTrace* trace = nullptr);
  ag::Var forward(const babi::Example& example, ForwardTrace* trace = nullptr);

  ag::Tape& tape() { return tape_; }

  // Gradient destinations for every parameter leaf this graph registered.
  std::vector<ag::GradSink> grad_sinks(std::array<std::vector<double>,
                                       Parameters::kCount>& buffers) const;

private:
  ag::Var mask_leaf(MaskKind kind) const;

  ag::Tape& tape_;
  const Parameters& params_;
  const Hyper& hyper_;
  std::array<ag::Var, Parameters::kCount> leaves_;  // out_proj unused here
  ag::Var proj_slot_i_, proj_slot_j_, proj_rel_;    // out_proj column blocks
  std::vector<ag::Var> key_rows_;
  std::vector<ag::Var> key_terms_;  // ent_key * key[j], document-invariant
  ag::Var zero_vec_;
};

// Numeric (tape-free) convenience wrappers.
std::vector<double> forward_logits(const Parameters& params, const Hyper& hyper,
                                   const babi::Example& example,
                                   ForwardTrace* trace = nullptr);

// Versioned JSON checkpoint: hyper plus every parameter array with shape.
// Round-trips 64-bit values exactly.
void save_checkpoint(const std::string& path, const Hyper& hyper,
                     const Parameters& params, const std::string& meta_json = "");
struct Checkpoint {
  Hyper hyper;
  Parameters params;
  std::string meta_json;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace relnet
