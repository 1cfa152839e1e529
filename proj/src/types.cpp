// seqconf/types.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "seqconf/types.hpp"

namespace seqconf {

std::string state_side_name(StateSide side) {
  return side == StateSide::kEncoder ? "enc" : "dec";
}

StateSide parse_state_side(const std::string& name) {
  if (name == "enc" || name == "encoder") return StateSide::kEncoder;
  if (name == "dec" || name == "decoder") return StateSide::kDecoder;
  throw std::runtime_error("unknown state side: " + name + " (expected enc or dec)");
}

std::string polarity_name(Polarity p) {
  return p == Polarity::kDistance ? "distance" : "probability";
}

Polarity parse_polarity(const std::string& name) {
  if (name == "distance") return Polarity::kDistance;
  if (name == "probability") return Polarity::kProbability;
  throw std::runtime_error("unknown polarity: " + name);
}

}  // namespace seqconf
