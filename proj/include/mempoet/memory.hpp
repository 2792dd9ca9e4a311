#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mempoet/corpus.hpp"
#include "mempoet/model.hpp"
#include "mempoet/numerics.hpp"

namespace mempoet {

// Working defaults for the fusion weighting factor, per training regime.
inline constexpr double kDefaultBetaC1 = 16.0;
inline constexpr double kDefaultBetaCInfinity = 49.0;

struct MemoryElement {
  Matrix source;  // decoder state, 1 x d_state
  Matrix target;  // character embedding, 1 x d_embed
  int char_id;
  int poem_index;  // position within the bank's poem list
  int step;        // j, 1-based within the poem
};

// Immutable store of (decoder-state, character-embedding) pairs harvested by
// replaying poems through the decoder with zero encoder contribution. Each
// poem of T tokens contributes T-1 contiguous elements.
class MemoryBank {
 public:
  static MemoryBank build(const ModelParams& params, const std::vector<Poem>& poems);
  static MemoryBank build(const ModelParams& params, const std::vector<EncodedPoem>& poems);
  // Assembles a bank from ready-made elements; provenance runs are taken as
  // given. Mostly useful for synthetic read tests.
  static MemoryBank from_elements(std::vector<MemoryElement> elements, int source_dim,
                                  int target_dim, uint64_t fingerprint);

  int size() const { return static_cast<int>(elements_.size()); }
  bool empty() const { return elements_.empty(); }
  const MemoryElement& element(int i) const { return elements_[static_cast<size_t>(i)]; }
  int source_dim() const { return source_dim_; }
  int target_dim() const { return target_dim_; }
  uint64_t checkpoint_fingerprint() const { return fingerprint_; }

  struct Run {
    int poem_index;
    int start;
    int length;
  };
  const std::vector<Run>& runs() const { return runs_; }

  void save(const std::string& path) const;
  static MemoryBank load(const std::string& path);

 private:
  std::vector<MemoryElement> elements_;
  std::vector<Run> runs_;
  int source_dim_ = 0;
  int target_dim_ = 0;
  uint64_t fingerprint_ = 0;
};

// Decoder step with the encoder contribution set to zero; shares every
// parameter with the main decoder. Drives both memory construction and the
// generation-time query state.
Matrix query_decoder_step(int y_prev, const Matrix& q_prev, const ModelParams& params);

// v = sum_i cos(query, source_i) * target_i over the whole bank.
Matrix memory_read(const Matrix& query, const MemoryBank& bank);

// softmax(s_t W + beta * (E v_t)); beta = 0 reproduces the bare model bit for bit.
Matrix fuse_distribution(const Matrix& s_t, const Matrix& v_t, double beta,
                         const ModelParams& params);

}  // namespace mempoet
