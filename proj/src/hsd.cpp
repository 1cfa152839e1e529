// seqconf/hsd.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include "seqconf/hsd.hpp"

#include <cstring>
#include <fstream>

namespace seqconf {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.good(), "truncated HSD file: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

float get_f32(std::istream& in, const std::string& path) {
  std::uint32_t bits = get_u32(in, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void write_hsd(const std::string& path, const std::vector<StateMatrix>& records) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write state file: " + path);
  int d = records.empty() ? 0 : records[0].width();
  out.write("HSD1", 4);
  put_u32(out, static_cast<std::uint32_t>(d));
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& rec : records) {
    require(rec.width() == d, "state dimension mismatch across records");
    require(rec.length() >= 1, "empty state record");
    put_u32(out, static_cast<std::uint32_t>(rec.sentence_id));
    put_u32(out, static_cast<std::uint32_t>(rec.length()));
    for (int r = 0; r < rec.length(); ++r)
      for (int c = 0; c < d; ++c) put_f32(out, rec.rows(r, c));
  }
  require(out.good(), "write failed: " + path);
}

std::vector<StateMatrix> read_hsd(const std::string& path, StateSide side) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read state file: " + path);
  char magic[4];
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, "HSD1", 4) == 0,
          "not an HSD state file: " + path);
  int d = static_cast<int>(get_u32(in, path));
  int count = static_cast<int>(get_u32(in, path));
  std::vector<StateMatrix> records;
  records.reserve(count);
  for (int rec = 0; rec < count; ++rec) {
    StateMatrix m;
    m.side = side;
    m.sentence_id = static_cast<int>(get_u32(in, path));
    int len = static_cast<int>(get_u32(in, path));
    require(len >= 1, "empty state record in " + path);
    m.rows.resize(len, d);
    for (int r = 0; r < len; ++r)
      for (int c = 0; c < d; ++c) m.rows(r, c) = get_f32(in, path);
    records.push_back(std::move(m));
  }
  return records;
}

StackedStates stack_states(const std::vector<StateMatrix>& records) {
  require(!records.empty(), "no state records to stack");
  int d = records[0].width();
  long total = 0;
  for (const auto& rec : records) {
    require(rec.width() == d, "state dimension mismatch across records");
    total += rec.length();
  }
  StackedStates out;
  out.rows.resize(total, d);
  out.origin.reserve(total);
  long at = 0;
  for (const auto& rec : records) {
    out.rows.middleRows(at, rec.length()) = rec.rows;
    for (int r = 0; r < rec.length(); ++r) out.origin.emplace_back(rec.sentence_id, r);
    at += rec.length();
  }
  return out;
}

}  // namespace seqconf
