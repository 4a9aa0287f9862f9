// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "tarac/decoder.hpp"
#include "tarac/model.hpp"

namespace tarac::testing {

// Straight-line decoder used as an oracle: no KV cache, every step recomputes
// the whole sequence from the embeddings. The intervention is reimplemented
// here from its definition (EMA update, rowsum renormalization only).
struct ReferenceStep {
  TokenId token = 0;
  std::vector<double> logits;
};

// Logits at the last position of `tokens`. With `tarac` set, positions from
// `first_hooked` onward are intervened on with steps 1, 2, ... in order.
[[nodiscard]] std::vector<double> reference_logits(const Weights& weights,
                                                   const std::vector<TokenId>& tokens,
                                                   const std::optional<TaracConfig>& tarac,
                                                   ImageSpan span, std::size_t first_hooked);

// Greedy decode of `n` tokens, recomputing from scratch at every step.
[[nodiscard]] std::vector<ReferenceStep> reference_decode(const Weights& weights,
                                                          const std::vector<TokenId>& prompt,
                                                          const std::optional<TaracConfig>& tarac,
                                                          ImageSpan span, std::size_t n);

}  // namespace tarac::testing
