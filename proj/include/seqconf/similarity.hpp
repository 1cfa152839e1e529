// seqconf/similarity.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Train/test similarity scores: distance of a test sentence's encoder states
// to the nearest stored training states, at sentence-average or per-token
// granularity. Raw L2 distances; higher means less confident.

#ifndef SEQCONF_SIMILARITY_HPP_
#define SEQCONF_SIMILARITY_HPP_

#include "seqconf/statestore.hpp"
#include "seqconf/types.hpp"

namespace seqconf {

// Distance from avg(test rows) to the nearest stored training-sentence
// average; a single segment-level confidence value.
ScoreSequence sentence_distance(const VectorIndex& index, const StateMatrix& test_states);

// Per-position nearest-neighbor distance, one score per source subword.
ScoreSequence token_distance(const VectorIndex& index, const StateMatrix& test_states);

}  // namespace seqconf

#endif  // SEQCONF_SIMILARITY_HPP_
