// seqconf/hsd.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// HSD hidden-state dump files (binary, little-endian):
//   magic "HSD1", u32 d, u32 record count;
//   per record: u32 sentence_id, u32 L, then L*d float32 row-major.

#ifndef SEQCONF_HSD_HPP_
#define SEQCONF_HSD_HPP_

#include <string>
#include <vector>

#include "seqconf/types.hpp"

namespace seqconf {

void write_hsd(const std::string& path, const std::vector<StateMatrix>& records);

// The file format does not carry the side; the caller declares it.
std::vector<StateMatrix> read_hsd(const std::string& path, StateSide side);

// All record rows stacked into one matrix, with (sentence_id, position)
// payloads per row; the common shape for index building and AE training.
struct StackedStates {
  Eigen::MatrixXf rows;
  std::vector<std::pair<int, int>> origin;  // (sentence_id, position)
};

StackedStates stack_states(const std::vector<StateMatrix>& records);

}  // namespace seqconf

#endif  // SEQCONF_HSD_HPP_
